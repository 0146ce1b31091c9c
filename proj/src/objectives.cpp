#include "pillarvote/objectives.hpp"

#include <cmath>
#include <limits>

#include "kdtree.hpp"
#include "pillarvote/error.hpp"
#include "pillarvote/parallel.hpp"

namespace pillarvote {

namespace {

// Sequential index-order sum keeps results independent of the thread count.
double mean(const std::vector<double>& values) {
  double total = 0;
  for (double v : values) total += v;
  return total / static_cast<double>(values.size());
}

}  // namespace

double nearest_distance(const Vec3& x, const PointCloud& cloud) {
  require(!cloud.empty(), "nearest_distance: empty cloud");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& y : cloud.points) best = std::min(best, squared_norm(x - y));
  return std::sqrt(best);
}

std::vector<double> nearest_distances(std::span<const Vec3> queries, std::span<const Vec3> cloud,
                                      int threads) {
  require(!cloud.empty(), "nearest_distances: empty cloud");
  const detail::KdTree3 tree(cloud);
  std::vector<double> out(queries.size());
  parallel_for(queries.size(), threads,
               [&](std::size_t i) { out[i] = std::sqrt(tree.nearest_sq(queries[i])); });
  return out;
}

double chamfer(const PointCloud& a, const PointCloud& b, int threads) {
  require(!a.empty() && !b.empty(), "chamfer: both clouds must be non-empty");
  return mean(nearest_distances(a.points, b.points, threads)) +
         mean(nearest_distances(b.points, a.points, threads));
}

DynamicChamfer dynamic_chamfer(const PointCloud& source, const PointCloud& target,
                               const FlowField& flow, std::span<const std::uint8_t> dynamic_mask,
                               int threads) {
  require(dynamic_mask.size() == source.size(), "dynamic_chamfer: mask is not aligned with source");
  const PointCloud warped = apply_flow(source, flow);
  std::vector<Vec3> subset;
  for (std::size_t i = 0; i < warped.size(); ++i)
    if (dynamic_mask[i]) subset.push_back(warped.points[i]);
  if (subset.empty()) return {};
  require(!target.empty(), "dynamic_chamfer: empty target");
  return {mean(nearest_distances(subset, target.points, threads)) +
              mean(nearest_distances(target.points, subset, threads)),
          true};
}

double static_penalty(const FlowField& flow, std::span<const std::uint8_t> static_mask) {
  require(static_mask.size() == flow.size(), "static_penalty: mask is not aligned with flow");
  double total = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < flow.size(); ++i) {
    if (!static_mask[i]) continue;
    total += norm(flow.flows[i]);
    ++count;
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

double cluster_penalty(const FlowField& flow, const ClusterSet& clusters, const PillarGrid& grid) {
  require(flow.size() == grid.point_count(), "cluster_penalty: flow and grid are not aligned");
  require(clusters.cluster_of.size() == grid.size(), "cluster_penalty: clusters and grid are not aligned");
  std::vector<Vec3> ref(clusters.count), sum(clusters.count);
  std::vector<std::size_t> count(clusters.count, 0);
  for (std::size_t p = 0; p < grid.size(); ++p) {
    const auto c = clusters.cluster_of[p];
    for (std::uint32_t i : grid.members(p)) {
      if (count[c] == 0) ref[c] = flow.flows[i];
      sum[c] = sum[c] + (flow.flows[i] - ref[c]);
      ++count[c];
    }
  }
  double total = 0;
  std::size_t points = 0;
  for (std::size_t p = 0; p < grid.size(); ++p) {
    const auto c = clusters.cluster_of[p];
    const Vec3 cluster_mean = ref[c] + (1.0 / static_cast<double>(count[c])) * sum[c];
    for (std::uint32_t i : grid.members(p)) {
      total += norm(flow.flows[i] - cluster_mean);
      ++points;
    }
  }
  return points == 0 ? 0.0 : total / static_cast<double>(points);
}

ObjectiveReport total_objective(const PointCloud& source, const PointCloud& target,
                                const FlowField& flow, std::span<const std::uint8_t> dynamic_mask,
                                const ClusterSet& clusters, const PillarGrid& grid, int threads) {
  require(dynamic_mask.size() == source.size(), "total_objective: mask is not aligned with source");
  ObjectiveReport r;
  r.chamfer = chamfer(apply_flow(source, flow), target, threads);
  const DynamicChamfer dyn = dynamic_chamfer(source, target, flow, dynamic_mask, threads);
  r.dynamic_chamfer = dyn.value;
  r.dynamic_present = dyn.present;
  std::vector<std::uint8_t> static_mask(dynamic_mask.size());
  for (std::size_t i = 0; i < dynamic_mask.size(); ++i) static_mask[i] = dynamic_mask[i] ? 0 : 1;
  r.static_penalty = static_penalty(flow, static_mask);
  r.cluster_penalty = cluster_penalty(flow, clusters, grid);
  r.total = r.chamfer + r.dynamic_chamfer + r.static_penalty + r.cluster_penalty;
  return r;
}

}  // namespace pillarvote
