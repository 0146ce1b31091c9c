#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "pillarvote/pillar_grid.hpp"
#include "pillarvote/spatial_index.hpp"

namespace pillarvote {

// kCentered: 2*max/cell + 1 bins per axis, zero translation is the middle bin.
// kEven: 2*max/cell bins per axis; the +max edge is dropped.
enum class GridParity { kCentered, kEven };

struct VoteConfig {
  double max_x = 2.0;  // symmetric translation range, meters per frame
  double max_y = 2.0;
  std::size_t m_neighbors = 8;     // source pillars that vote for pillar k (k included)
  std::size_t n_candidates = 128;  // target pillars per voter
  double ball_radius = 0.0;        // <= 0: circumscribe the translation square
  double temperature = 0.1;        // soft-argmax
  GridParity parity = GridParity::kCentered;

  double resolved_ball_radius() const;
  void validate() const;  // throws ContractError
};

// Bin layout of a voting space for a given pillar size.
struct VoteGeometry {
  int rows = 0;  // along y
  int cols = 0;  // along x
  int center_row = 0;
  int center_col = 0;
  double pitch_x = 0.2;
  double pitch_y = 0.2;
  double max_x = 2.0;
  double max_y = 2.0;

  // Throws ContractError when the range is not a whole number of cells.
  static VoteGeometry make(const VoteConfig& vote, const GridConfig& grid);

  int min_row_offset() const { return -center_row; }
  int max_row_offset() const { return rows - 1 - center_row; }
  int min_col_offset() const { return -center_col; }
  int max_col_offset() const { return cols - 1 - center_col; }
  bool offset_in_range(int drow, int dcol) const {
    return drow >= min_row_offset() && drow <= max_row_offset() && dcol >= min_col_offset() &&
           dcol <= max_col_offset();
  }
  friend bool operator==(const VoteGeometry&, const VoteGeometry&) = default;
};

struct BinIndex {
  int row = 0;
  int col = 0;
  friend bool operator==(const BinIndex&, const BinIndex&) = default;
};

// Dense H_v x W_v accumulator; row <-> y, col <-> x, center bin <-> zero motion.
class VotingSpace {
 public:
  VotingSpace() = default;
  explicit VotingSpace(const VoteGeometry& geometry)
      : geometry_(geometry),
        scores_(static_cast<std::size_t>(geometry.rows) * static_cast<std::size_t>(geometry.cols), 0.0) {}

  const VoteGeometry& geometry() const { return geometry_; }
  int rows() const { return geometry_.rows; }
  int cols() const { return geometry_.cols; }

  double at(int row, int col) const { return scores_[index(row, col)]; }
  double& at(int row, int col) { return scores_[index(row, col)]; }
  std::span<const double> scores() const { return scores_; }
  std::span<double> scores() { return scores_; }

  Vec2 displacement(int row, int col) const {
    return {(col - geometry_.center_col) * geometry_.pitch_x,
            (row - geometry_.center_row) * geometry_.pitch_y};
  }
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(geometry_.cols) +
           static_cast<std::size_t>(col);
  }

 private:
  VoteGeometry geometry_;
  std::vector<double> scores_;
};

// dot(a,b) / (|a||b|), or 0 when either norm is below 1e-12.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

std::optional<BinIndex> displacement_to_bin(Vec2 d, const VoteGeometry& geometry);

// Votes of the M source pillars nearest to pillar k, each pairing with up to
// N target pillars inside the ball radius. Accumulation order is m-major,
// then n in ball-query order.
VotingSpace accumulate_votes(std::size_t k, const PillarGrid& src_grid, const PillarGrid& tgt_grid,
                             const SpatialIndex& src_index, const SpatialIndex& tgt_index,
                             const VoteConfig& cfg);

// Precomputed (bin, score) candidates per source pillar so that the M-fold
// reuse of every voter's ball query is paid once. Produces exactly the same
// spaces as accumulate_votes.
class VoteCaster {
 public:
  VoteCaster(const PillarGrid& src_grid, const PillarGrid& tgt_grid, const SpatialIndex& src_index,
             const SpatialIndex& tgt_index, const VoteConfig& cfg, int threads = 0);

  const VoteGeometry& geometry() const { return geometry_; }
  VotingSpace votes(std::size_t k) const;
  void accumulate_into(std::size_t k, VotingSpace& space) const;
  std::span<const std::uint32_t> voters(std::size_t k) const {
    return {voters_.data() + voter_offsets_[k], voter_offsets_[k + 1] - voter_offsets_[k]};
  }

 private:
  struct Vote {
    std::uint32_t bin;
    double score;
  };
  VoteGeometry geometry_;
  std::vector<std::size_t> voter_offsets_;
  std::vector<std::uint32_t> voters_;
  std::vector<std::size_t> vote_offsets_;
  std::vector<Vote> votes_;
};

// Element-wise sum. Each bin is summed in 128-bit fixed point scaled to the
// bin's largest magnitude, so the result does not depend on list order.
VotingSpace fuse_voting_spaces(std::span<const VotingSpace> spaces);

// Highest bin; ties go to the smaller displacement, then row-major order.
BinIndex argmax_bin(const VotingSpace& v);
Vec2 argmax_translation(const VotingSpace& v);

// Softmax-weighted mean displacement. Requires temperature > 0.
Vec2 soft_argmax_translation(const VotingSpace& v, double temperature);

// Writes <prefix>.csv (rows = y ascending), <prefix>.pgm (P5 heatmap, top
// row = largest y) and <prefix>.argmax.txt ("dx,dy" with three decimals).
void dump_votes(const VotingSpace& v, const std::filesystem::path& prefix);

struct VoteMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;  // row-major
};
VoteMatrix load_vote_matrix(const std::filesystem::path& csv_path);

}  // namespace pillarvote
