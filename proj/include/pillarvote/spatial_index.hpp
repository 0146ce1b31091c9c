#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "pillarvote/pillar_grid.hpp"

namespace pillarvote {

struct Neighbor {
  std::uint32_t pillar = 0;  // index into the indexed PillarGrid
  double distance_sq = 0.0;
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

inline double distance_sq(Vec2 a, Vec2 b) {
  const double dx = a.x - b.x, dy = a.y - b.y;
  return dx * dx + dy * dy;
}

// Exact 2D nearest-neighbor and radius search over the occupied pillar
// centers of one grid. Results are ordered by (distance, cell index); since
// pillars are numbered in cell order, ties resolve to the lower pillar.
class SpatialIndex {
 public:
  SpatialIndex() = default;
  explicit SpatialIndex(const PillarGrid& grid);

  std::size_t size() const { return centers_.size(); }

  // Up to m closest pillars. Precondition m >= 1.
  std::vector<Neighbor> knn(Vec2 query, std::size_t m) const;
  void knn(Vec2 query, std::size_t m, std::vector<Neighbor>& out) const;

  // Pillars with distance <= radius, keeping the n nearest when more qualify.
  // Preconditions radius > 0, n >= 1.
  std::vector<Neighbor> ball_query(Vec2 query, double radius, std::size_t n) const;
  void ball_query(Vec2 query, double radius, std::size_t n, std::vector<Neighbor>& out) const;

 private:
  static constexpr int kBucketCells = 4;

  template <typename Visit>
  void visit_ring(int bx, int by, int ring, Visit&& visit) const;

  std::vector<Vec2> centers_;
  double origin_x_ = 0, origin_y_ = 0;
  double bucket_w_ = 1, bucket_h_ = 1;
  int buckets_x_ = 0, buckets_y_ = 0;
  std::vector<std::uint32_t> bucket_offsets_;
  std::vector<std::uint32_t> bucket_pillars_;
};

inline SpatialIndex build_index(const PillarGrid& grid) { return SpatialIndex(grid); }

}  // namespace pillarvote
