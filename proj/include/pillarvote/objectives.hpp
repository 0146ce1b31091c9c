#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pillarvote/flow_assembly.hpp"
#include "pillarvote/pillar_grid.hpp"
#include "pillarvote/pointcloud.hpp"

namespace pillarvote {

// Distance from x to the closest point of cloud (linear scan). Throws
// ContractError for an empty cloud.
double nearest_distance(const Vec3& x, const PointCloud& cloud);

// Per query point, the distance to the closest point of `cloud`, using an
// exact k-d tree; parallel over queries.
std::vector<double> nearest_distances(std::span<const Vec3> queries, std::span<const Vec3> cloud,
                                      int threads = 0);

// Bidirectional mean nearest-neighbor distance. Both clouds non-empty.
double chamfer(const PointCloud& a, const PointCloud& b, int threads = 0);

struct DynamicChamfer {
  double value = 0.0;
  bool present = false;  // false when the mask selects no point
};

// Chamfer between the dynamic subset of the warped source and the full
// target: mean over masked warped points of their distance to the target,
// plus mean over target points of their distance to the masked subset.
DynamicChamfer dynamic_chamfer(const PointCloud& source, const PointCloud& target,
                               const FlowField& flow, std::span<const std::uint8_t> dynamic_mask,
                               int threads = 0);

// Mean flow magnitude over points with static_mask set; 0 when there are none.
double static_penalty(const FlowField& flow, std::span<const std::uint8_t> static_mask);

// Mean over clustered points of the distance between a point's flow and its
// cluster's mean flow.
double cluster_penalty(const FlowField& flow, const ClusterSet& clusters, const PillarGrid& grid);

struct ObjectiveReport {
  double chamfer = 0;
  double dynamic_chamfer = 0;
  bool dynamic_present = false;
  double static_penalty = 0;
  double cluster_penalty = 0;
  double total = 0;
};

// All four terms; static points are those with dynamic_mask == 0.
ObjectiveReport total_objective(const PointCloud& source, const PointCloud& target,
                                const FlowField& flow, std::span<const std::uint8_t> dynamic_mask,
                                const ClusterSet& clusters, const PillarGrid& grid, int threads = 0);

}  // namespace pillarvote
