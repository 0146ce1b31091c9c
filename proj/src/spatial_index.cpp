#include "pillarvote/spatial_index.hpp"

#include <algorithm>
#include <cmath>

#include "pillarvote/error.hpp"

namespace pillarvote {

namespace {

bool closer(const Neighbor& a, const Neighbor& b) {
  return a.distance_sq < b.distance_sq || (a.distance_sq == b.distance_sq && a.pillar < b.pillar);
}

int clamp_bucket(double v) {
  // Keeps far-away queries from overflowing int; anything this far is off-grid anyway.
  return static_cast<int>(std::clamp(std::floor(v), -1e9, 1e9));
}

}  // namespace

SpatialIndex::SpatialIndex(const PillarGrid& grid) {
  const GridConfig& cfg = grid.config();
  centers_.assign(grid.centers().begin(), grid.centers().end());
  origin_x_ = cfg.x_lo;
  origin_y_ = cfg.y_lo;
  bucket_w_ = kBucketCells * cfg.cell_x;
  bucket_h_ = kBucketCells * cfg.cell_y;
  buckets_x_ = (cfg.width() + kBucketCells - 1) / kBucketCells;
  buckets_y_ = (cfg.height() + kBucketCells - 1) / kBucketCells;

  // Counting sort of pillars into buckets; pillar order is kept within a bucket.
  std::vector<std::uint32_t> bucket_of(grid.size());
  bucket_offsets_.assign(static_cast<std::size_t>(buckets_x_) * buckets_y_ + 1, 0);
  for (std::size_t p = 0; p < grid.size(); ++p) {
    const CellCoord c = grid.coord(p);
    bucket_of[p] = static_cast<std::uint32_t>((c.row / kBucketCells) * buckets_x_ + c.col / kBucketCells);
    ++bucket_offsets_[bucket_of[p] + 1];
  }
  for (std::size_t b = 1; b < bucket_offsets_.size(); ++b) bucket_offsets_[b] += bucket_offsets_[b - 1];
  bucket_pillars_.resize(grid.size());
  std::vector<std::uint32_t> fill(bucket_offsets_.begin(), bucket_offsets_.end() - 1);
  for (std::size_t p = 0; p < grid.size(); ++p)
    bucket_pillars_[fill[bucket_of[p]]++] = static_cast<std::uint32_t>(p);
}

template <typename Visit>
void SpatialIndex::visit_ring(int bx, int by, int ring, Visit&& visit) const {
  auto bucket = [&](long long x, long long y) {
    if (x < 0 || y < 0 || x >= buckets_x_ || y >= buckets_y_) return;
    const std::size_t b = static_cast<std::size_t>(y) * buckets_x_ + static_cast<std::size_t>(x);
    for (std::uint32_t i = bucket_offsets_[b]; i < bucket_offsets_[b + 1]; ++i) visit(bucket_pillars_[i]);
  };
  if (ring == 0) {
    bucket(bx, by);
    return;
  }
  const long long x0 = static_cast<long long>(bx) - ring, x1 = static_cast<long long>(bx) + ring;
  const long long y0 = static_cast<long long>(by) - ring, y1 = static_cast<long long>(by) + ring;
  for (long long x = std::max(x0, 0LL); x <= std::min<long long>(x1, buckets_x_ - 1); ++x) {
    bucket(x, y0);
    bucket(x, y1);
  }
  for (long long y = std::max(y0 + 1, 0LL); y <= std::min<long long>(y1 - 1, buckets_y_ - 1); ++y) {
    bucket(x0, y);
    bucket(x1, y);
  }
}

std::vector<Neighbor> SpatialIndex::knn(Vec2 query, std::size_t m) const {
  std::vector<Neighbor> out;
  knn(query, m, out);
  return out;
}

void SpatialIndex::knn(Vec2 query, std::size_t m, std::vector<Neighbor>& out) const {
  require(m >= 1, "knn: M must be at least 1");
  out.clear();
  if (centers_.empty()) return;
  const int bx = clamp_bucket((query.x - origin_x_) / bucket_w_);
  const int by = clamp_bucket((query.y - origin_y_) / bucket_h_);
  // Ring beyond which no bucket exists.
  const long long last_ring = std::max({std::llabs(bx), std::llabs(static_cast<long long>(buckets_x_) - 1 - bx),
                                        std::llabs(by), std::llabs(static_cast<long long>(buckets_y_) - 1 - by)});
  const double pitch = std::min(bucket_w_, bucket_h_);
  for (long long ring = 0; ring <= last_ring; ++ring) {
    visit_ring(bx, by, static_cast<int>(ring), [&](std::uint32_t p) {
      out.push_back({p, distance_sq(centers_[p], query)});
    });
    if (out.size() < m) continue;
    // Every point in later rings is at least ring * pitch away.
    std::nth_element(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(m - 1), out.end(), closer);
    const double bound = static_cast<double>(ring) * pitch * (1.0 - 1e-12);
    if (out[m - 1].distance_sq < bound * bound) break;
  }
  const std::size_t keep = std::min(m, out.size());
  std::partial_sort(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(keep), out.end(), closer);
  out.resize(keep);
}

std::vector<Neighbor> SpatialIndex::ball_query(Vec2 query, double radius, std::size_t n) const {
  std::vector<Neighbor> out;
  ball_query(query, radius, n, out);
  return out;
}

void SpatialIndex::ball_query(Vec2 query, double radius, std::size_t n,
                              std::vector<Neighbor>& out) const {
  require(radius > 0, "ball_query: radius must be positive");
  require(n >= 1, "ball_query: N must be at least 1");
  out.clear();
  if (centers_.empty()) return;
  const double r2 = radius * radius;
  const long long bx0 = std::max(0, clamp_bucket((query.x - radius - origin_x_) / bucket_w_));
  const long long bx1 = std::min(buckets_x_ - 1, clamp_bucket((query.x + radius - origin_x_) / bucket_w_));
  const long long by0 = std::max(0, clamp_bucket((query.y - radius - origin_y_) / bucket_h_));
  const long long by1 = std::min(buckets_y_ - 1, clamp_bucket((query.y + radius - origin_y_) / bucket_h_));
  for (long long by = by0; by <= by1; ++by) {
    for (long long bx = bx0; bx <= bx1; ++bx) {
      const std::size_t b = static_cast<std::size_t>(by) * buckets_x_ + static_cast<std::size_t>(bx);
      for (std::uint32_t i = bucket_offsets_[b]; i < bucket_offsets_[b + 1]; ++i) {
        const std::uint32_t p = bucket_pillars_[i];
        const double d2 = distance_sq(centers_[p], query);
        if (d2 <= r2) out.push_back({p, d2});
      }
    }
  }
  if (out.size() > n) {
    std::nth_element(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(n - 1), out.end(), closer);
    out.resize(n);
  }
  std::sort(out.begin(), out.end(), closer);
}

}  // namespace pillarvote
