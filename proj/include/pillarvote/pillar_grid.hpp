#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "pillarvote/pointcloud.hpp"

namespace pillarvote {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(const Vec2& a, const Vec2& b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(const Vec2& a, const Vec2& b) { return {a.x - b.x, a.y - b.y}; }
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

// Bird's-eye-view grid geometry. Cells are half-open: a coordinate on a
// cell's upper edge belongs to the next cell, and x_hi / y_hi themselves are
// outside the grid.
struct GridConfig {
  double cell_x = 0.2;
  double cell_y = 0.2;
  double x_lo = -51.2;
  double x_hi = 51.2;
  double y_lo = -51.2;
  double y_hi = 51.2;

  static GridConfig square(double half_extent, double cell) {
    return {cell, cell, -half_extent, half_extent, -half_extent, half_extent};
  }

  int width() const;   // columns, along x
  int height() const;  // rows, along y
  std::int64_t cell_count() const { return std::int64_t{width()} * height(); }

  // Throws ContractError unless cells are positive and tile the extent exactly.
  void validate() const;

  Vec2 cell_center(int row, int col) const {
    return {x_lo + (col + 0.5) * cell_x, y_lo + (row + 0.5) * cell_y};
  }
};

struct CellCoord {
  int row = 0;
  int col = 0;
  friend bool operator==(const CellCoord&, const CellCoord&) = default;
};

// Hand-crafted pillar descriptor:
// [log(1+count), mean z, std z, min z, max z, mean |offset|, mean offset_x, mean offset_y]
inline constexpr std::size_t kFeatureDim = 8;
using FeatureVector = std::array<double, kFeatureDim>;

// Throws ContractError for an empty member list.
FeatureVector compute_feature(std::span<const Vec3> members, Vec2 center);

// Per-pillar feature vectors read from a "cell_index,f0,...,fK-1" CSV.
struct ExternalFeatures {
  std::size_t dim = 0;
  std::map<std::int64_t, std::vector<double>> by_cell;
};

ExternalFeatures load_external_features(const std::filesystem::path& path);

// Sparse pillar view of one scan. Immutable once built.
class PillarGrid {
 public:
  PillarGrid() = default;

  const GridConfig& config() const { return config_; }

  // Number of occupied pillars. Pillars are addressed 0..size()-1 in
  // ascending row-major cell index.
  std::size_t size() const { return cells_.size(); }
  bool empty() const { return cells_.empty(); }

  std::span<const std::int64_t> cells() const { return cells_; }
  std::int64_t cell(std::size_t pillar) const { return cells_[pillar]; }
  CellCoord coord(std::size_t pillar) const {
    return {static_cast<int>(cells_[pillar] / width_), static_cast<int>(cells_[pillar] % width_)};
  }
  Vec2 center(std::size_t pillar) const { return centers_[pillar]; }
  std::span<const Vec2> centers() const { return centers_; }

  // Source point indices in the pillar, ascending.
  std::span<const std::uint32_t> members(std::size_t pillar) const {
    return {member_indices_.data() + member_offsets_[pillar],
            member_offsets_[pillar + 1] - member_offsets_[pillar]};
  }

  std::size_t feature_dim() const { return feature_dim_; }
  std::span<const double> feature(std::size_t pillar) const {
    return {features_.data() + pillar * feature_dim_, feature_dim_};
  }

  // Per input point: the pillar it belongs to, or nullopt when it was cropped.
  std::optional<std::size_t> pillar_of_point(std::size_t point) const {
    auto p = point_pillar_[point];
    if (p < 0) return std::nullopt;
    return static_cast<std::size_t>(p);
  }
  // Per input point offset from its pillar center; zero for cropped points.
  std::span<const Vec2> offsets() const { return offsets_; }
  std::span<const std::uint32_t> out_of_range() const { return out_of_range_; }
  std::size_t point_count() const { return point_pillar_.size(); }

  std::optional<std::size_t> find(std::int64_t cell) const;

  // Copy of this grid with listed pillars' features replaced. When the
  // external dimension differs from kFeatureDim every occupied pillar must be
  // listed (throws ValidationError otherwise).
  PillarGrid with_features(const ExternalFeatures& external) const;

 private:
  friend PillarGrid pillarize(const PointCloud& cloud, const GridConfig& config);

  GridConfig config_;
  std::int64_t width_ = 1;
  std::vector<std::int64_t> cells_;
  std::vector<Vec2> centers_;
  std::vector<std::size_t> member_offsets_{0};
  std::vector<std::uint32_t> member_indices_;
  std::size_t feature_dim_ = kFeatureDim;
  std::vector<double> features_;
  std::vector<std::int32_t> point_pillar_;
  std::vector<Vec2> offsets_;
  std::vector<std::uint32_t> out_of_range_;
};

PillarGrid pillarize(const PointCloud& cloud, const GridConfig& config);

// Fraction of grid cells with no points.
double sparsity(const PillarGrid& grid);

}  // namespace pillarvote
