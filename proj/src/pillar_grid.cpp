#include "pillarvote/pillar_grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "csv_util.hpp"
#include "pillarvote/error.hpp"

namespace pillarvote {

namespace {

int cells_along(double lo, double hi, double cell) {
  return static_cast<int>(std::llround((hi - lo) / cell));
}

}  // namespace

int GridConfig::width() const { return cells_along(x_lo, x_hi, cell_x); }
int GridConfig::height() const { return cells_along(y_lo, y_hi, cell_y); }

void GridConfig::validate() const {
  require(cell_x > 0 && cell_y > 0 && std::isfinite(cell_x) && std::isfinite(cell_y),
          "grid: cell size must be positive");
  require(std::isfinite(x_lo) && std::isfinite(x_hi) && std::isfinite(y_lo) && std::isfinite(y_hi),
          "grid: extent must be finite");
  require(x_hi > x_lo && y_hi > y_lo, "grid: extent must be non-empty");
  auto divides = [](double span, double cell) {
    double n = span / cell;
    return std::abs(n - std::round(n)) <= 1e-9 * std::max(1.0, n) && std::round(n) >= 1;
  };
  require(divides(x_hi - x_lo, cell_x) && divides(y_hi - y_lo, cell_y),
          "grid: extent must be a whole number of cells");
  require(cell_count() <= (std::int64_t{1} << 40), "grid: too many cells");
}

FeatureVector compute_feature(std::span<const Vec3> members, Vec2 center) {
  require(!members.empty(), "compute_feature: empty pillar");
  const double n = static_cast<double>(members.size());
  double sum_z = 0, min_z = members[0].z, max_z = members[0].z;
  double sum_abs = 0, sum_ox = 0, sum_oy = 0;
  for (const auto& p : members) {
    sum_z += p.z;
    min_z = std::min(min_z, p.z);
    max_z = std::max(max_z, p.z);
    const double ox = p.x - center.x, oy = p.y - center.y;
    sum_abs += std::sqrt(ox * ox + oy * oy);
    sum_ox += ox;
    sum_oy += oy;
  }
  const double mean_z = sum_z / n;
  double sum_sq = 0;
  for (const auto& p : members) sum_sq += (p.z - mean_z) * (p.z - mean_z);
  return {std::log1p(n), mean_z, std::sqrt(sum_sq / n), min_z, max_z,
          sum_abs / n, sum_ox / n, sum_oy / n};
}

PillarGrid pillarize(const PointCloud& cloud, const GridConfig& config) {
  config.validate();
  PillarGrid grid;
  grid.config_ = config;
  grid.width_ = config.width();
  const std::size_t n = cloud.size();
  const int w = config.width(), h = config.height();
  grid.point_pillar_.assign(n, -1);
  grid.offsets_.assign(n, Vec2{});

  std::vector<std::pair<std::int64_t, std::uint32_t>> keyed;
  keyed.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3& p = cloud.points[i];
    if (!(p.x >= config.x_lo && p.x < config.x_hi && p.y >= config.y_lo && p.y < config.y_hi)) {
      grid.out_of_range_.push_back(static_cast<std::uint32_t>(i));
      continue;
    }
    // x < x_hi can still round up to column w; such points sit in the last column.
    int col = std::min(static_cast<int>(std::floor((p.x - config.x_lo) / config.cell_x)), w - 1);
    int row = std::min(static_cast<int>(std::floor((p.y - config.y_lo) / config.cell_y)), h - 1);
    keyed.emplace_back(std::int64_t{row} * w + col, static_cast<std::uint32_t>(i));
  }
  std::sort(keyed.begin(), keyed.end());

  grid.member_indices_.reserve(keyed.size());
  std::vector<Vec3> scratch;
  for (std::size_t begin = 0; begin < keyed.size();) {
    std::size_t end = begin;
    while (end < keyed.size() && keyed[end].first == keyed[begin].first) ++end;
    const std::int64_t key = keyed[begin].first;
    const auto pillar = static_cast<std::int32_t>(grid.cells_.size());
    const Vec2 c = config.cell_center(static_cast<int>(key / w), static_cast<int>(key % w));
    grid.cells_.push_back(key);
    grid.centers_.push_back(c);
    scratch.clear();
    for (std::size_t k = begin; k < end; ++k) {
      const std::uint32_t idx = keyed[k].second;
      grid.member_indices_.push_back(idx);
      grid.point_pillar_[idx] = pillar;
      grid.offsets_[idx] = {cloud.points[idx].x - c.x, cloud.points[idx].y - c.y};
      scratch.push_back(cloud.points[idx]);
    }
    grid.member_offsets_.push_back(grid.member_indices_.size());
    const FeatureVector f = compute_feature(scratch, c);
    grid.features_.insert(grid.features_.end(), f.begin(), f.end());
    begin = end;
  }
  return grid;
}

std::optional<std::size_t> PillarGrid::find(std::int64_t cell) const {
  auto it = std::lower_bound(cells_.begin(), cells_.end(), cell);
  if (it == cells_.end() || *it != cell) return std::nullopt;
  return static_cast<std::size_t>(it - cells_.begin());
}

PillarGrid PillarGrid::with_features(const ExternalFeatures& external) const {
  PillarGrid out = *this;
  if (external.by_cell.empty()) return out;
  const std::size_t dim = external.dim;
  if (dim != feature_dim_) {
    for (auto c : cells_)
      if (!external.by_cell.contains(c))
        throw ValidationError("external features have dimension " + std::to_string(dim) +
                              " but occupied cell " + std::to_string(c) +
                              " is not listed; hand-crafted fallback requires dimension " +
                              std::to_string(kFeatureDim));
    out.feature_dim_ = dim;
    out.features_.assign(cells_.size() * dim, 0.0);
  }
  for (std::size_t p = 0; p < cells_.size(); ++p) {
    auto it = external.by_cell.find(cells_[p]);
    if (it == external.by_cell.end()) continue;
    std::copy(it->second.begin(), it->second.end(), out.features_.begin() + p * dim);
  }
  return out;
}

ExternalFeatures load_external_features(const std::filesystem::path& path) {
  detail::CsvReader reader(path);
  std::vector<std::string_view> fields;
  if (!reader.next(fields) || fields.size() < 2 || fields[0] != "cell_index")
    reader.fail("expected header cell_index,f0,...");
  for (std::size_t i = 1; i < fields.size(); ++i)
    if (fields[i] != "f" + std::to_string(i - 1))
      reader.fail("feature column " + std::to_string(i) + " must be named f" + std::to_string(i - 1));
  ExternalFeatures features;
  features.dim = fields.size() - 1;
  const std::size_t width = fields.size();
  while (reader.next(fields)) {
    if (fields.size() != width) reader.fail("expected " + std::to_string(width) + " fields");
    const long long cell = reader.parse_int(fields[0]);
    if (cell < 0) reader.fail("negative cell index");
    std::vector<double> values;
    values.reserve(features.dim);
    for (std::size_t i = 1; i < width; ++i) {
      values.push_back(reader.parse_double(fields[i]));
      if (!std::isfinite(values.back())) throw ValidationError(path.string() + ": non-finite feature");
    }
    if (!features.by_cell.emplace(cell, std::move(values)).second)
      reader.fail("duplicate cell index " + std::to_string(cell));
  }
  return features;
}

double sparsity(const PillarGrid& grid) {
  return 1.0 - static_cast<double>(grid.size()) / static_cast<double>(grid.config().cell_count());
}

}  // namespace pillarvote
