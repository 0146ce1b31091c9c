#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "pillarvote/pillar_grid.hpp"
#include "pillarvote/pointcloud.hpp"
#include "pillarvote/spatial_index.hpp"
#include "pillarvote/voting.hpp"

namespace pillarvote {

enum class Extraction { kArgmax, kSoftArgmax };

struct PipelineConfig {
  GridConfig grid;
  VoteConfig vote;
  Extraction extraction = Extraction::kSoftArgmax;
  bool cluster_fusion = true;
  // Flows shorter than this are zeroed: 0.04 m per 0.1 s frame is 0.4 m/s.
  double static_gate_threshold = 0.04;
  double frame_interval = kDefaultFrameInterval;
  int threads = 0;  // 0: default_thread_count()

  void validate() const;  // throws ContractError
};

// 8-connected components of occupied cells. Ids are contiguous and ordered
// by each component's smallest cell index.
struct ClusterSet {
  std::vector<std::uint32_t> cluster_of;  // per pillar
  std::size_t count = 0;

  // Pillars of each cluster, ascending.
  std::vector<std::vector<std::uint32_t>> members() const;
};

ClusterSet cluster_pillars(const PillarGrid& grid);

// Zeroes every flow whose magnitude is below `threshold`.
void apply_static_gate(FlowField& flow, double threshold);

struct StageTimings {
  double pillarize_ms = 0;
  double index_ms = 0;
  double vote_ms = 0;
  double extract_ms = 0;
  double assemble_ms = 0;
  double total_ms() const { return pillarize_ms + index_ms + vote_ms + extract_ms + assemble_ms; }
};

struct SceneFlowResult {
  FlowField flow;
  std::vector<Vec2> pillar_translation;  // per source pillar, before gating
  StageTimings timings;
};

// Holds the pillarized scans, their indices and the vote caster so that
// callers can run the pipeline and inspect individual voting spaces.
class SceneFlowEstimator {
 public:
  SceneFlowEstimator(const PointCloud& source, const PointCloud& target, const PipelineConfig& cfg,
                     const ExternalFeatures* source_features = nullptr,
                     const ExternalFeatures* target_features = nullptr);

  const PipelineConfig& config() const { return cfg_; }
  const PillarGrid& source_grid() const { return src_grid_; }
  const PillarGrid& target_grid() const { return tgt_grid_; }
  const ClusterSet& clusters() const { return clusters_; }

  VotingSpace pillar_votes(std::size_t pillar) const;
  VotingSpace cluster_votes(std::size_t cluster) const;

  SceneFlowResult run() const;

 private:
  Vec2 extract(const VotingSpace& v) const;

  PipelineConfig cfg_;
  std::size_t point_count_ = 0;
  PillarGrid src_grid_;
  PillarGrid tgt_grid_;
  SpatialIndex src_index_;
  SpatialIndex tgt_index_;
  std::optional<VoteCaster> caster_;
  ClusterSet clusters_;
  std::vector<std::vector<std::uint32_t>> cluster_members_;
  StageTimings setup_timings_;
};

SceneFlowResult estimate_scene_flow(const PointCloud& source, const PointCloud& target,
                                    const PipelineConfig& cfg);

// Per cluster: largest distance between a member point's flow and the
// cluster's mean flow. Points outside the grid are ignored.
std::vector<double> flow_consistency(const FlowField& flow, const ClusterSet& clusters,
                                     const PillarGrid& grid);

}  // namespace pillarvote
