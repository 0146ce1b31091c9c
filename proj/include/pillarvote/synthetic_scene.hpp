#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "pillarvote/pointcloud.hpp"

namespace pillarvote {

// An axis-aligned box that translates rigidly between the two scans.
struct MoverSpec {
  double length = 4.0;  // along x, meters
  double width = 2.0;   // along y
  double height = 1.5;
  double density = 50.0;  // points per square meter of footprint
  double center_x = 0.0;
  double center_y = 0.0;
  double translation_x = 0.0;  // meters per frame interval
  double translation_y = 0.0;
  std::uint16_t class_id = 1;

  std::size_t point_count() const;
};

// Parameters of a generated scan pair: rigid movers plus static background
// structures. Background structures keep a clearance from every mover's
// footprint at both time steps so that static and moving pillars never touch.
struct SceneSpec {
  double extent = 51.2;  // half-width of the square workspace
  std::vector<MoverSpec> movers;
  std::size_t background_points = 0;
  std::uint64_t background_seed = 0;
  std::size_t background_structures = 0;  // 0: one structure per ~600 points
  double clearance = 1.0;                 // meters between background and movers
  double noise_sigma = 0.0;
  std::uint64_t rng_seed = 0;
  double max_translation = 2.0;
  double frame_interval = kDefaultFrameInterval;

  void validate() const;  // throws ValidationError
};

struct ScenePair {
  PointCloud source;
  PointCloud target;
  FlowField gt_flow;
};

// Source = background then movers in spec order; the target holds the same
// points in the same order with movers translated. Deterministic in the seeds.
ScenePair generate_scene_pair(const SceneSpec& spec);

// A driving-like scene: cars, pedestrians and cyclists among static
// structures, `total_points` points per scan.
SceneSpec standard_scene_spec(std::uint64_t seed = 7, std::size_t total_points = 100000);

nlohmann::json to_json(const SceneSpec& spec);
SceneSpec scene_spec_from_json(const nlohmann::json& j);

}  // namespace pillarvote
