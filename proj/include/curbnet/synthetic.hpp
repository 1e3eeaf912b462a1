// Seeded synthetic road scenes for tests, demos and smoke training runs.
#ifndef CURBNET_SYNTHETIC_HPP
#define CURBNET_SYNTHETIC_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "curbnet/core.hpp"
#include "curbnet/voxel.hpp"

namespace curbnet::synthetic {

struct LabeledCloud {
  PointCloud cloud;
  std::vector<SemanticClass> classes;
};

/// Straight road along +y: road |x| < half_width, curb strip of `curb_width`
/// beyond it on both sides, sidewalk out to `outer`. The curb is a riser from road
/// level to sidewalk level, so it differs from its neighbours in height and
/// intensity. A few pole obstacles stand on the sidewalks.
struct RoadSceneSpec {
  double half_width = 3.5;
  double curb_width = 0.5;
  double outer = 8.0;
  double length = 32.0;
  double ground_z = -1.73;
  double curb_height = 0.15;
  double points_per_m2 = 12.0;
  std::size_t poles = 4;
};

/// Cartesian grid whose cell edges coincide with the class boundaries of the
/// default RoadSceneSpec variants (half widths on a 0.5 m lattice).
inline voxel::VoxelGridSpec road_scene_grid() {
  voxel::VoxelGridSpec g;
  g.mode = voxel::GridMode::cartesian;
  g.bounds = {voxel::AxisRange{-8.0, 8.0}, voxel::AxisRange{0.0, 32.0}, voxel::AxisRange{-2.5, 0.5}};
  g.resolution = {32, 64, 8};
  return g;
}

inline LabeledCloud road_scene(std::uint64_t seed, const RoadSceneSpec& spec = {},
                               const std::string& frame_id = "") {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, 0.01);
  LabeledCloud out;
  out.cloud.frame_id = frame_id.empty() ? "scene_" + std::to_string(seed) : frame_id;

  auto emit = [&](double x, double y, double z, double intensity, SemanticClass c) {
    out.cloud.points.push_back({static_cast<float>(x), static_cast<float>(y), static_cast<float>(z),
                                static_cast<float>(std::clamp(intensity, 0.0, 1.0))});
    out.classes.push_back(c);
  };
  auto strip = [&](double x0, double x1, double z0, double z1, double inten, SemanticClass c) {
    const auto n = static_cast<std::size_t>((x1 - x0) * spec.length * spec.points_per_m2);
    for (std::size_t k = 0; k < n; ++k) {
      // keep clear of cell edges so every cell holds a single class
      const double x = x0 + 0.02 + (x1 - x0 - 0.04) * u01(rng);
      const double y = 0.02 + (spec.length - 0.04) * u01(rng);
      const double z = z0 + (z1 - z0) * u01(rng) + jitter(rng);
      emit(x, y, z, inten + 0.05 * (u01(rng) - 0.5), c);
    }
  };

  const double g = spec.ground_z;
  const double hw = spec.half_width;
  const double cw = spec.curb_width;
  strip(-hw, hw, g, g, 0.20, SemanticClass::road);
  for (double side : {-1.0, 1.0}) {
    const double a = side < 0 ? -hw - cw : hw;
    strip(a, a + cw, g, g + spec.curb_height, 0.55, SemanticClass::curb);
    const double s0 = side < 0 ? -spec.outer : hw + cw;
    const double s1 = side < 0 ? -hw - cw : spec.outer;
    strip(s0, s1, g + spec.curb_height, g + spec.curb_height, 0.35, SemanticClass::sidewalk);
  }
  for (std::size_t p = 0; p < spec.poles; ++p) {
    const double side = (p % 2 == 0) ? 1.0 : -1.0;
    const double x = side * (hw + cw + 1.0 + 2.0 * u01(rng));
    const double y = 2.0 + (spec.length - 4.0) * u01(rng);
    for (int k = 0; k < 40; ++k) {
      emit(x + 0.05 * (u01(rng) - 0.5), y + 0.05 * (u01(rng) - 0.5),
           g + spec.curb_height + 0.3 + 1.5 * u01(rng), 0.8, SemanticClass::other);
    }
  }
  return out;
}

/// Curb-point scene for post-processing: `segments` smooth curb polylines in the
/// ground plane plus injected off-curve noise.
struct CurbScene {
  std::vector<Point> curb;   ///< true curb points
  std::vector<Point> noise;  ///< injected false positives
};

struct CurbSceneSpec {
  std::size_t points_per_segment = 80;
  double spacing = 0.25;
  double noise_fraction = 0.10;
  double noise_min_offset = 1.0;  ///< lateral distance from the curb centre line
  double noise_max_offset = 2.0;
  double lateral_jitter = 0.03;
};

/// Two roughly parallel, gently curved curbs along +y (left and right road edge).
inline CurbScene curb_scene(std::uint64_t seed, const CurbSceneSpec& spec = {}) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> jit(0.0, spec.lateral_jitter);
  CurbScene scene;

  const double half_width = 3.0 + 2.0 * u01(rng);
  const double bend = 0.004 * (u01(rng) - 0.5);
  const double heading = 0.2 * (u01(rng) - 0.5);
  auto centre = [&](double y, double offset) { return offset + heading * y + bend * y * y; };

  std::vector<std::pair<double, double>> anchors;  // (y, side offset) of curb samples
  for (double side : {-half_width, half_width}) {
    for (std::size_t k = 0; k < spec.points_per_segment; ++k) {
      const double y = 1.0 + spec.spacing * static_cast<double>(k);
      const double x = centre(y, side) + jit(rng);
      scene.curb.push_back({static_cast<float>(x), static_cast<float>(y),
                            static_cast<float>(-1.6 + 0.1 * u01(rng)), 0.5F});
      anchors.emplace_back(y, side);
    }
  }
  const auto n_noise = static_cast<std::size_t>(
      std::llround(spec.noise_fraction * static_cast<double>(scene.curb.size())));
  for (std::size_t k = 0; k < n_noise; ++k) {
    const auto& [y, side] = anchors[static_cast<std::size_t>(u01(rng) * static_cast<double>(anchors.size())) % anchors.size()];
    const double dir = u01(rng) < 0.5 ? -1.0 : 1.0;
    const double off = spec.noise_min_offset + (spec.noise_max_offset - spec.noise_min_offset) * u01(rng);
    const double x = centre(y, side) + dir * off;
    scene.noise.push_back({static_cast<float>(x), static_cast<float>(y),
                           static_cast<float>(-1.6 + 0.1 * u01(rng)), 0.5F});
  }
  return scene;
}

}  // namespace curbnet::synthetic

#endif  // CURBNET_SYNTHETIC_HPP
