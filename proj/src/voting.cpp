#include "pillarvote/voting.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>

#include "csv_util.hpp"
#include "pillarvote/error.hpp"
#include "pillarvote/parallel.hpp"

namespace pillarvote {

namespace {

int whole_cells(double range, double cell, const char* axis) {
  const double n = range / cell;
  require(std::abs(n - std::round(n)) <= 1e-9 * std::max(1.0, n),
          std::string("vote: max translation along ") + axis + " must be a multiple of the cell size");
  return static_cast<int>(std::llround(n));
}

void check_same_grid(const PillarGrid& src, const PillarGrid& tgt) {
  const GridConfig& a = src.config();
  const GridConfig& b = tgt.config();
  require(a.cell_x == b.cell_x && a.cell_y == b.cell_y && a.x_lo == b.x_lo && a.x_hi == b.x_hi &&
              a.y_lo == b.y_lo && a.y_hi == b.y_hi,
          "vote: source and target grids must share one configuration");
}

double drop_negative_zero(double v) { return v + 0.0; }

__extension__ using Int128 = __int128;

}  // namespace

double VoteConfig::resolved_ball_radius() const {
  return ball_radius > 0 ? ball_radius : std::hypot(max_x, max_y);
}

void VoteConfig::validate() const {
  require(max_x >= 0 && max_y >= 0 && std::isfinite(max_x) && std::isfinite(max_y),
          "vote: max translation must be finite and non-negative");
  require(m_neighbors >= 1, "vote: M must be at least 1");
  require(n_candidates >= 1, "vote: N must be at least 1");
  require(std::isfinite(ball_radius), "vote: ball radius must be finite");
  require(resolved_ball_radius() > 0, "vote: ball radius must be positive");
  require(temperature > 0 && std::isfinite(temperature), "vote: temperature must be positive");
}

VoteGeometry VoteGeometry::make(const VoteConfig& vote, const GridConfig& grid) {
  vote.validate();
  grid.validate();
  VoteGeometry g;
  const int half_cols = whole_cells(vote.max_x, grid.cell_x, "x");
  const int half_rows = whole_cells(vote.max_y, grid.cell_y, "y");
  g.center_col = half_cols;
  g.center_row = half_rows;
  if (vote.parity == GridParity::kCentered) {
    g.cols = 2 * half_cols + 1;
    g.rows = 2 * half_rows + 1;
  } else {
    require(half_cols > 0 && half_rows > 0, "vote: compatibility grid needs a non-zero range");
    g.cols = 2 * half_cols;
    g.rows = 2 * half_rows;
  }
  g.pitch_x = grid.cell_x;
  g.pitch_y = grid.cell_y;
  g.max_x = vote.max_x;
  g.max_y = vote.max_y;
  return g;
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double sum = 0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

double cosine_from(double ab, double na, double nb) {
  if (na < 1e-12 || nb < 1e-12) return 0.0;
  return std::clamp(ab / (na * nb), -1.0, 1.0);
}

}  // namespace

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw ContractError("cosine_similarity: feature lengths differ (" + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()) + ")");
  return cosine_from(dot(a, b), std::sqrt(dot(a, a)), std::sqrt(dot(b, b)));
}

std::optional<BinIndex> displacement_to_bin(Vec2 d, const VoteGeometry& g) {
  // Differences of pillar centers carry rounding noise, so the range test
  // tolerates a few ulps around max.
  const double slack_x = 1e-9 * std::max(1.0, g.max_x);
  const double slack_y = 1e-9 * std::max(1.0, g.max_y);
  if (!(std::abs(d.x) <= g.max_x + slack_x) || !(std::abs(d.y) <= g.max_y + slack_y))
    return std::nullopt;
  const int dcol = static_cast<int>(std::lround(d.x / g.pitch_x));
  const int drow = static_cast<int>(std::lround(d.y / g.pitch_y));
  if (!g.offset_in_range(drow, dcol)) return std::nullopt;
  return BinIndex{g.center_row + drow, g.center_col + dcol};
}

VotingSpace accumulate_votes(std::size_t k, const PillarGrid& src_grid, const PillarGrid& tgt_grid,
                             const SpatialIndex& src_index, const SpatialIndex& tgt_index,
                             const VoteConfig& cfg) {
  if (k >= src_grid.size())
    throw ContractError("accumulate_votes: pillar " + std::to_string(k) + " is not occupied");
  check_same_grid(src_grid, tgt_grid);
  const VoteGeometry g = VoteGeometry::make(cfg, src_grid.config());
  VotingSpace space(g);
  const double radius = cfg.resolved_ball_radius();
  std::vector<Neighbor> voters, candidates;
  src_index.knn(src_grid.center(k), cfg.m_neighbors, voters);
  for (const auto& m : voters) {
    const CellCoord cm = src_grid.coord(m.pillar);
    tgt_index.ball_query(src_grid.center(m.pillar), radius, cfg.n_candidates, candidates);
    for (const auto& n : candidates) {
      const CellCoord cn = tgt_grid.coord(n.pillar);
      const int drow = cn.row - cm.row, dcol = cn.col - cm.col;
      if (!g.offset_in_range(drow, dcol)) continue;
      space.at(g.center_row + drow, g.center_col + dcol) +=
          cosine_similarity(src_grid.feature(m.pillar), tgt_grid.feature(n.pillar));
    }
  }
  return space;
}

VoteCaster::VoteCaster(const PillarGrid& src_grid, const PillarGrid& tgt_grid,
                       const SpatialIndex& src_index, const SpatialIndex& tgt_index,
                       const VoteConfig& cfg, int threads)
    : geometry_(VoteGeometry::make(cfg, src_grid.config())) {
  check_same_grid(src_grid, tgt_grid);
  const std::size_t count = src_grid.size();
  const double radius = cfg.resolved_ball_radius();
  const VoteGeometry& g = geometry_;

  require(src_grid.empty() || tgt_grid.empty() || src_grid.feature_dim() == tgt_grid.feature_dim(),
          "VoteCaster: feature lengths differ");
  // Same sums as cosine_similarity, so votes match accumulate_votes bit for bit.
  auto norms = [](const PillarGrid& grid) {
    std::vector<double> out(grid.size());
    for (std::size_t p = 0; p < grid.size(); ++p) out[p] = std::sqrt(dot(grid.feature(p), grid.feature(p)));
    return out;
  };
  const std::vector<double> src_norm = norms(src_grid), tgt_norm = norms(tgt_grid);

  std::vector<std::vector<std::uint32_t>> voter_lists(count);
  std::vector<std::vector<Vote>> vote_lists(count);
  parallel_for(count, threads, [&](std::size_t p) {
    thread_local std::vector<Neighbor> found;
    src_index.knn(src_grid.center(p), cfg.m_neighbors, found);
    auto& voters = voter_lists[p];
    voters.reserve(found.size());
    for (const auto& nb : found) voters.push_back(nb.pillar);

    tgt_index.ball_query(src_grid.center(p), radius, cfg.n_candidates, found);
    const CellCoord cm = src_grid.coord(p);
    auto& votes = vote_lists[p];
    votes.reserve(found.size());
    for (const auto& nb : found) {
      const CellCoord cn = tgt_grid.coord(nb.pillar);
      const int drow = cn.row - cm.row, dcol = cn.col - cm.col;
      if (!g.offset_in_range(drow, dcol)) continue;
      const auto bin = static_cast<std::uint32_t>((g.center_row + drow) * g.cols + g.center_col + dcol);
      const double ab = dot(src_grid.feature(p), tgt_grid.feature(nb.pillar));
      votes.push_back({bin, cosine_from(ab, src_norm[p], tgt_norm[nb.pillar])});
    }
  });

  voter_offsets_.assign(count + 1, 0);
  vote_offsets_.assign(count + 1, 0);
  for (std::size_t p = 0; p < count; ++p) {
    voter_offsets_[p + 1] = voter_offsets_[p] + voter_lists[p].size();
    vote_offsets_[p + 1] = vote_offsets_[p] + vote_lists[p].size();
  }
  voters_.reserve(voter_offsets_.back());
  votes_.reserve(vote_offsets_.back());
  for (std::size_t p = 0; p < count; ++p) {
    voters_.insert(voters_.end(), voter_lists[p].begin(), voter_lists[p].end());
    votes_.insert(votes_.end(), vote_lists[p].begin(), vote_lists[p].end());
  }
}

void VoteCaster::accumulate_into(std::size_t k, VotingSpace& space) const {
  require(space.geometry() == geometry_, "VoteCaster: voting space geometry mismatch");
  auto scores = space.scores();
  for (std::uint32_t m : voters(k))
    for (std::size_t i = vote_offsets_[m]; i < vote_offsets_[m + 1]; ++i)
      scores[votes_[i].bin] += votes_[i].score;
}

VotingSpace VoteCaster::votes(std::size_t k) const {
  if (k + 1 >= voter_offsets_.size())
    throw ContractError("VoteCaster: pillar " + std::to_string(k) + " is not occupied");
  VotingSpace space(geometry_);
  accumulate_into(k, space);
  return space;
}

VotingSpace fuse_voting_spaces(std::span<const VotingSpace> spaces) {
  require(!spaces.empty(), "fuse_voting_spaces: nothing to fuse");
  const VoteGeometry& g = spaces.front().geometry();
  for (const auto& s : spaces)
    require(s.geometry() == g, "fuse_voting_spaces: voting spaces differ in dimensions");
  VotingSpace fused(g);
  if (spaces.size() == 1) return spaces.front();
  auto out = fused.scores();
  constexpr int kMantissaBits = std::numeric_limits<double>::digits - 1;  // 52
  for (std::size_t b = 0; b < out.size(); ++b) {
    int max_exp = std::numeric_limits<int>::min();
    for (const auto& s : spaces) {
      const double v = s.scores()[b];
      if (v == 0.0) continue;
      int e = 0;
      std::frexp(v, &e);
      max_exp = std::max(max_exp, e);
    }
    if (max_exp == std::numeric_limits<int>::min()) continue;
    // Every value is an integer multiple of `unit` up to rounding of bits
    // below it; 128-bit accumulation then makes the sum order-free.
    const int unit_exp = max_exp - kMantissaBits;
    Int128 total = 0;
    for (const auto& s : spaces)
      if (const double v = s.scores()[b]; v != 0.0) total += static_cast<Int128>(std::llround(std::ldexp(v, -unit_exp)));
    out[b] = std::ldexp(static_cast<double>(total), unit_exp);
  }
  return fused;
}

BinIndex argmax_bin(const VotingSpace& v) {
  const VoteGeometry& g = v.geometry();
  BinIndex best{g.center_row, g.center_col};
  if (v.rows() == 0 || v.cols() == 0) return best;
  auto magnitude = [&](int r, int c) {
    const double dx = (c - g.center_col) * g.pitch_x, dy = (r - g.center_row) * g.pitch_y;
    return dx * dx + dy * dy;
  };
  // Start from the zero bin (present in both parities) so all-equal spaces return it.
  double best_score = v.at(best.row, best.col);
  double best_mag = 0.0;
  std::size_t best_flat = v.index(best.row, best.col);
  for (int r = 0; r < v.rows(); ++r) {
    for (int c = 0; c < v.cols(); ++c) {
      const double s = v.at(r, c);
      const double mag = magnitude(r, c);
      const std::size_t flat = v.index(r, c);
      if (s > best_score || (s == best_score && (mag < best_mag || (mag == best_mag && flat < best_flat)))) {
        best = {r, c};
        best_score = s;
        best_mag = mag;
        best_flat = flat;
      }
    }
  }
  return best;
}

Vec2 argmax_translation(const VotingSpace& v) {
  const BinIndex b = argmax_bin(v);
  const Vec2 d = v.displacement(b.row, b.col);
  return {drop_negative_zero(d.x), drop_negative_zero(d.y)};
}

Vec2 soft_argmax_translation(const VotingSpace& v, double temperature) {
  require(temperature > 0, "soft_argmax_translation: temperature must be positive");
  const VoteGeometry& g = v.geometry();
  if (v.rows() == 0 || v.cols() == 0) return {};
  const auto scores = v.scores();
  const double peak = *std::max_element(scores.begin(), scores.end());

  std::vector<double> col_weight(static_cast<std::size_t>(v.cols()), 0.0);
  std::vector<double> row_weight(static_cast<std::size_t>(v.rows()), 0.0);
  for (int r = 0; r < v.rows(); ++r) {
    for (int c = 0; c < v.cols(); ++c) {
      const double w = std::exp((v.at(r, c) - peak) / temperature);
      col_weight[static_cast<std::size_t>(c)] += w;
      row_weight[static_cast<std::size_t>(r)] += w;
    }
  }
  double total = 0;
  for (double w : col_weight) total += w;

  // Mean offset from symmetric pairs first, so a symmetric weight pattern
  // yields exactly zero; an unpaired edge (compat parity) is added after.
  auto mean_offset = [](const std::vector<double>& weight, int center) {
    const int n = static_cast<int>(weight.size());
    double acc = 0;
    for (int k = 1; center + k < n && center - k >= 0; ++k)
      acc += k * (weight[static_cast<std::size_t>(center + k)] - weight[static_cast<std::size_t>(center - k)]);
    for (int i = 0; i < n; ++i) {
      const int k = i - center;
      const int mirror = center - k;
      if (k != 0 && (mirror < 0 || mirror >= n)) acc += k * weight[static_cast<std::size_t>(i)];
    }
    return acc;
  };
  const double dx = g.pitch_x * mean_offset(col_weight, g.center_col) / total;
  const double dy = g.pitch_y * mean_offset(row_weight, g.center_row) / total;
  return {drop_negative_zero(dx), drop_negative_zero(dy)};
}

void dump_votes(const VotingSpace& v, const std::filesystem::path& prefix) {
  const std::filesystem::path csv = prefix.string() + ".csv";
  const std::filesystem::path pgm = prefix.string() + ".pgm";
  const std::filesystem::path sidecar = prefix.string() + ".argmax.txt";

  std::FILE* f = detail::open_for_write(csv);
  for (int r = 0; r < v.rows(); ++r) {
    for (int c = 0; c < v.cols(); ++c) std::fprintf(f, c == 0 ? "%.17g" : ",%.17g", v.at(r, c) + 0.0);
    std::fputc('\n', f);
  }
  detail::close_checked(f, csv);

  const auto scores = v.scores();
  const auto [lo_it, hi_it] = std::minmax_element(scores.begin(), scores.end());
  const double lo = scores.empty() ? 0.0 : *lo_it, hi = scores.empty() ? 0.0 : *hi_it;
  f = detail::open_for_write(pgm, "wb");
  std::fprintf(f, "P5\n%d %d\n255\n", v.cols(), v.rows());
  for (int r = v.rows() - 1; r >= 0; --r) {
    for (int c = 0; c < v.cols(); ++c) {
      unsigned char px = 128;
      if (hi > lo) px = static_cast<unsigned char>(std::lround(255.0 * (v.at(r, c) - lo) / (hi - lo)));
      std::fputc(px, f);
    }
  }
  detail::close_checked(f, pgm);

  const Vec2 d = argmax_translation(v);
  f = detail::open_for_write(sidecar);
  char line[96];
  std::snprintf(line, sizeof line, "%.3f,%.3f\n", d.x, d.y);
  std::fputs(line, f);
  detail::close_checked(f, sidecar);
}

VoteMatrix load_vote_matrix(const std::filesystem::path& csv_path) {
  detail::CsvReader reader(csv_path);
  std::vector<std::string_view> fields;
  VoteMatrix m;
  while (reader.next(fields)) {
    if (m.rows == 0) m.cols = static_cast<int>(fields.size());
    if (static_cast<int>(fields.size()) != m.cols) reader.fail("ragged vote matrix");
    for (auto field : fields) m.values.push_back(reader.parse_double(field));
    ++m.rows;
  }
  return m;
}

}  // namespace pillarvote
