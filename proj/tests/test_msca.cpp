#include <random>

#include <gtest/gtest.h>

#include "curbnet/net/msca.hpp"
#include "oracles/msca_reference.hpp"

using namespace curbnet;
using namespace curbnet::net;

namespace {

struct Block {
  ParamStore store;
  Msca msca;
  MscaConfig cfg;
};

Block make_block(std::size_t channels, int depth, bool zero_bias, std::uint64_t seed) {
  Block b;
  b.cfg.channels = channels;
  b.cfg.depth_kernel = depth;
  b.cfg.zero_init_bias = zero_bias;
  std::mt19937_64 rng(seed);
  b.msca = Msca(b.store, "m", b.cfg, rng);
  return b;
}

BlockTensor random_input(const GeometryPtr& g, std::size_t ch, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  BlockTensor t(g, ch);
  for (double& v : t.data) {
    v = u(rng);
  }
  return t;
}

}  // namespace

TEST(Msca, ZeroInputWithZeroBiasGivesZeroOutput) {
  auto b = make_block(4, 3, true, 1);
  const auto g = CoordSet::full({6, 6, 4});
  const MscaPlans plans(g, 3);
  const auto t = b.msca.forward(plans, BlockTensor(g, 4), b.store);
  for (double v : t.output.data) {
    EXPECT_EQ(v, 0.0);
  }
  for (double w : t.weights.data) {
    EXPECT_DOUBLE_EQ(w, 0.25);
  }
}

TEST(Msca, ChannelWeightsFormADistribution) {
  auto b = make_block(6, 4, false, 2);
  std::mt19937_64 rng(3);
  const auto g = CoordSet::full({5, 4, 4});
  const MscaPlans plans(g, 4);
  const auto t = b.msca.forward(plans, random_input(g, 6, rng), b.store);
  for (std::size_t i = 0; i < t.weights.rows(); ++i) {
    double s = 0.0;
    for (double w : t.weights.row(i)) {
      EXPECT_GE(w, 0.0);
      s += w;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Msca, OutputIsMultiscalePlusChannelBranch) {
  auto b = make_block(2, 4, false, 4);
  std::mt19937_64 rng(5);
  const auto g = CoordSet::full({6, 6, 4});
  const MscaPlans plans(g, 4);
  const auto t = b.msca.forward(plans, random_input(g, 2, rng), b.store);
  EXPECT_EQ(t.output.geometry, g);
  EXPECT_EQ(t.output.channels, 2U);
  for (std::size_t k = 0; k < t.output.data.size(); ++k) {
    EXPECT_EQ(t.output.data[k], t.multiscale.data[k] + t.weights.data[k] * t.c_conv.data[k]);
  }
}

TEST(Msca, MatchesDenseReference) {
  auto b = make_block(2, 4, false, 6);
  std::mt19937_64 rng(7);
  const auto g = CoordSet::full({6, 6, 4});
  const MscaPlans plans(g, 4);
  const oracle::Lookup lookup = [&](const std::string& n) -> const std::vector<double>& {
    return b.store.by_name(n).value;
  };
  for (int trial = 0; trial < 3; ++trial) {
    const auto x = random_input(g, 2, rng);
    const auto t = b.msca.forward(plans, x, b.store);
    oracle::Dense dx(6, 6, 4, 2);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const Coord c = (*g)[i];
      for (std::size_t ch = 0; ch < 2; ++ch) {
        dx.at(c.x, c.y, c.z, ch) = x.at(i, ch);
      }
    }
    const auto ref = oracle::msca_reference(dx, "m", b.cfg.hidden(), 4, lookup);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const Coord c = (*g)[i];
      for (std::size_t ch = 0; ch < 2; ++ch) {
        EXPECT_NEAR(t.output.at(i, ch), ref.get(c.x, c.y, c.z, ch), 1e-10);
      }
    }
  }
}

TEST(Msca, ChannelMismatchIsShapeError) {
  auto b = make_block(4, 1, true, 8);
  const auto g = CoordSet::full({3, 3, 3});
  const MscaPlans plans(g, 1);
  EXPECT_THROW((void)b.msca.forward(plans, BlockTensor(g, 3), b.store), ShapeError);
}

TEST(Msca, BackwardMatchesFiniteDifferencesOnSparseInput) {
  auto b = make_block(2, 3, false, 9);
  std::mt19937_64 rng(10);
  std::vector<Coord> coords;
  std::bernoulli_distribution keep(0.5);
  for (int x = 0; x < 6; ++x) {
    for (int y = 0; y < 5; ++y) {
      for (int z = 0; z < 3; ++z) {
        if (keep(rng)) {
          coords.push_back({x, y, z});
        }
      }
    }
  }
  const auto g = std::make_shared<const CoordSet>(Extent{6, 5, 3}, coords);
  const MscaPlans plans(g, 3);
  auto x = random_input(g, 2, rng);
  const auto t0 = b.msca.forward(plans, x, b.store);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> r(t0.output.data.size());
  for (double& v : r) {
    v = u(rng);
  }
  auto loss = [&] {
    const auto t = b.msca.forward(plans, x, b.store);
    double s = 0.0;
    for (std::size_t k = 0; k < r.size(); ++k) {
      s += r[k] * t.output.data[k];
    }
    return s;
  };
  BlockTensor dout = t0.output.zeros_like();
  dout.data = r;
  b.store.zero_grad();
  const auto dx = b.msca.backward(plans, t0, dout, b.store);
  const double eps = 1e-5;
  auto check = [&](double analytic, double& slot) {
    const double v = slot;
    slot = v + eps;
    const double a = loss();
    slot = v - eps;
    const double c = loss();
    slot = v;
    const double num = (a - c) / (2 * eps);
    EXPECT_NEAR(analytic, num, 1e-6 * std::max(1.0, std::abs(num)));
  };
  for (std::size_t k = 0; k < x.data.size(); ++k) {
    check(dx.data[k], x.data[k]);
  }
  for (auto& p : b.store) {
    for (std::size_t k = 0; k < p.size(); ++k) {
      check(p.grad[k], p.value[k]);
    }
  }
}
