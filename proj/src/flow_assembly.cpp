#include "pillarvote/flow_assembly.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "pillarvote/error.hpp"
#include "pillarvote/parallel.hpp"

namespace pillarvote {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0u); }

  std::uint32_t find(std::uint32_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  // The smaller root wins so every root is its component's first pillar.
  void unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }

 private:
  std::vector<std::uint32_t> parent_;
};

}  // namespace

void PipelineConfig::validate() const {
  grid.validate();
  vote.validate();
  VoteGeometry::make(vote, grid);
  require(static_gate_threshold >= 0 && std::isfinite(static_gate_threshold),
          "pipeline: static gate threshold must be non-negative");
  require(frame_interval > 0 && std::isfinite(frame_interval), "pipeline: frame interval must be positive");
  require(threads >= 0, "pipeline: thread count must be non-negative");
}

std::vector<std::vector<std::uint32_t>> ClusterSet::members() const {
  std::vector<std::vector<std::uint32_t>> out(count);
  for (std::size_t p = 0; p < cluster_of.size(); ++p)
    out[cluster_of[p]].push_back(static_cast<std::uint32_t>(p));
  return out;
}

ClusterSet cluster_pillars(const PillarGrid& grid) {
  const std::size_t n = grid.size();
  const int w = grid.config().width();
  const int h = grid.config().height();
  DisjointSets sets(n);
  // Scanning in cell order, the already-visited 8-neighbors are the three
  // cells of the previous row and the left cell.
  constexpr int kBack[4][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1}};
  for (std::size_t p = 0; p < n; ++p) {
    const CellCoord c = grid.coord(p);
    for (const auto& d : kBack) {
      const int r = c.row + d[0], col = c.col + d[1];
      if (r < 0 || r >= h || col < 0 || col >= w) continue;
      if (auto q = grid.find(std::int64_t{r} * w + col))
        sets.unite(static_cast<std::uint32_t>(p), static_cast<std::uint32_t>(*q));
    }
  }
  ClusterSet clusters;
  clusters.cluster_of.resize(n);
  std::vector<std::uint32_t> id_of_root(n, UINT32_MAX);
  for (std::size_t p = 0; p < n; ++p) {
    const std::uint32_t root = sets.find(static_cast<std::uint32_t>(p));
    if (id_of_root[root] == UINT32_MAX) id_of_root[root] = static_cast<std::uint32_t>(clusters.count++);
    clusters.cluster_of[p] = id_of_root[root];
  }
  return clusters;
}

void apply_static_gate(FlowField& flow, double threshold) {
  for (auto& f : flow.flows)
    if (norm(f) < threshold) f = Vec3{};
}

SceneFlowEstimator::SceneFlowEstimator(const PointCloud& source, const PointCloud& target,
                                       const PipelineConfig& cfg,
                                       const ExternalFeatures* source_features,
                                       const ExternalFeatures* target_features)
    : cfg_(cfg), point_count_(source.size()) {
  cfg_.validate();
  if (cfg_.threads == 0) cfg_.threads = default_thread_count();

  auto t0 = Clock::now();
  src_grid_ = pillarize(source, cfg_.grid);
  tgt_grid_ = pillarize(target, cfg_.grid);
  if (source_features != nullptr) src_grid_ = src_grid_.with_features(*source_features);
  if (target_features != nullptr) tgt_grid_ = tgt_grid_.with_features(*target_features);
  require(src_grid_.empty() || tgt_grid_.empty() || src_grid_.feature_dim() == tgt_grid_.feature_dim(),
          "pipeline: source and target feature dimensions differ");
  setup_timings_.pillarize_ms = elapsed_ms(t0);

  t0 = Clock::now();
  src_index_ = SpatialIndex(src_grid_);
  tgt_index_ = SpatialIndex(tgt_grid_);
  clusters_ = cluster_pillars(src_grid_);
  cluster_members_ = clusters_.members();
  setup_timings_.index_ms = elapsed_ms(t0);

  t0 = Clock::now();
  caster_.emplace(src_grid_, tgt_grid_, src_index_, tgt_index_, cfg_.vote, cfg_.threads);
  setup_timings_.vote_ms = elapsed_ms(t0);
}

VotingSpace SceneFlowEstimator::pillar_votes(std::size_t pillar) const {
  if (pillar >= src_grid_.size()) throw ContractError("pillar " + std::to_string(pillar) + " is not occupied");
  return caster_->votes(pillar);
}

VotingSpace SceneFlowEstimator::cluster_votes(std::size_t cluster) const {
  if (cluster >= clusters_.count) throw ContractError("cluster " + std::to_string(cluster) + " does not exist");
  const auto& members = cluster_members_[cluster];
  std::vector<VotingSpace> spaces;
  spaces.reserve(members.size());
  for (std::uint32_t p : members) spaces.push_back(caster_->votes(p));
  return fuse_voting_spaces(spaces);
}

Vec2 SceneFlowEstimator::extract(const VotingSpace& v) const {
  return cfg_.extraction == Extraction::kArgmax ? argmax_translation(v)
                                                : soft_argmax_translation(v, cfg_.vote.temperature);
}

SceneFlowResult SceneFlowEstimator::run() const {
  SceneFlowResult result;
  result.timings = setup_timings_;

  auto t0 = Clock::now();
  result.pillar_translation.assign(src_grid_.size(), Vec2{});
  if (cfg_.cluster_fusion) {
    std::vector<Vec2> per_cluster(clusters_.count);
    parallel_for(clusters_.count, cfg_.threads, [&](std::size_t c) {
      VotingSpace fused = cluster_votes(c);
      // Soft extraction sees the mean member space so the temperature keeps
      // its single-pillar meaning; argmax is read from the exact sum.
      if (cfg_.extraction == Extraction::kSoftArgmax) {
        const double inv = 1.0 / static_cast<double>(cluster_members_[c].size());
        for (double& s : fused.scores()) s *= inv;
      }
      per_cluster[c] = extract(fused);
    });
    for (std::size_t p = 0; p < src_grid_.size(); ++p)
      result.pillar_translation[p] = per_cluster[clusters_.cluster_of[p]];
  } else {
    parallel_for(src_grid_.size(), cfg_.threads,
                 [&](std::size_t p) { result.pillar_translation[p] = extract(caster_->votes(p)); });
  }
  result.timings.extract_ms = elapsed_ms(t0);

  t0 = Clock::now();
  result.flow.frame_interval = cfg_.frame_interval;
  result.flow.flows.assign(point_count_, Vec3{});
  for (std::size_t p = 0; p < src_grid_.size(); ++p) {
    const Vec2 t = result.pillar_translation[p];
    for (std::uint32_t i : src_grid_.members(p)) result.flow.flows[i] = {t.x, t.y, 0.0};
  }
  apply_static_gate(result.flow, cfg_.static_gate_threshold);
  result.timings.assemble_ms = elapsed_ms(t0);
  return result;
}

SceneFlowResult estimate_scene_flow(const PointCloud& source, const PointCloud& target,
                                    const PipelineConfig& cfg) {
  return SceneFlowEstimator(source, target, cfg).run();
}

std::vector<double> flow_consistency(const FlowField& flow, const ClusterSet& clusters,
                                     const PillarGrid& grid) {
  require(flow.size() == grid.point_count(), "flow_consistency: flow and grid are not aligned");
  require(clusters.cluster_of.size() == grid.size(), "flow_consistency: clusters and grid are not aligned");
  // Means are taken relative to the first member's flow, so a cluster of
  // identical flows has a mean equal to that flow bit for bit.
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
  std::vector<double> deviation(clusters.count, 0.0);
  for (std::size_t p = 0; p < grid.size(); ++p) {
    const auto c = clusters.cluster_of[p];
    const Vec3 mean = ref[c] + (1.0 / static_cast<double>(count[c])) * sum[c];
    for (std::uint32_t i : grid.members(p)) deviation[c] = std::max(deviation[c], norm(flow.flows[i] - mean));
  }
  return deviation;
}

}  // namespace pillarvote
