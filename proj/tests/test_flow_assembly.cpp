#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <random>
#include <set>

#include "pillarvote/error.hpp"
#include "pillarvote/flow_assembly.hpp"
#include "pillarvote/synthetic_scene.hpp"
#include "test_util.hpp"

using namespace pillarvote;

namespace {

// Breadth-first flood fill over occupied cells, ids in order of first cell.
std::vector<std::uint32_t> flood_fill(const PillarGrid& g) {
  std::map<std::pair<int, int>, std::size_t> at;
  for (std::size_t p = 0; p < g.size(); ++p) at[{g.coord(p).row, g.coord(p).col}] = p;
  std::vector<std::uint32_t> label(g.size(), UINT32_MAX);
  std::uint32_t next = 0;
  for (std::size_t start = 0; start < g.size(); ++start) {
    if (label[start] != UINT32_MAX) continue;
    std::deque<std::size_t> queue{start};
    label[start] = next;
    while (!queue.empty()) {
      const std::size_t p = queue.front();
      queue.pop_front();
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          auto it = at.find({g.coord(p).row + dr, g.coord(p).col + dc});
          if (it == at.end() || label[it->second] != UINT32_MAX) continue;
          label[it->second] = next;
          queue.push_back(it->second);
        }
    }
    ++next;
  }
  return label;
}

PointCloud sparse_cells(std::mt19937_64& rng, int n, int span) {
  PointCloud c;
  for (int i = 0; i < n; ++i)
    c.points.push_back({(testutil::uniform_int(rng, 0, span) + 0.5) * 0.2, (testutil::uniform_int(rng, 0, span) + 0.5) * 0.2, 0});
  return c;
}

ScenePair one_mover(double dx, double dy, double noise = 0.0, std::uint64_t seed = 1) {
  SceneSpec spec;
  spec.background_points = 2000;
  spec.background_seed = seed + 1;
  spec.rng_seed = seed;
  spec.noise_sigma = noise;
  MoverSpec m;
  m.center_x = 10;
  m.center_y = 5;
  m.translation_x = dx;
  m.translation_y = dy;
  spec.movers.push_back(m);
  return generate_scene_pair(spec);
}

}  // namespace

TEST_CASE("clusters match a flood fill") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 120; ++trial) {
    PointCloud c = sparse_cells(rng, testutil::uniform_int(rng, 1, 400), testutil::uniform_int(rng, 5, 60));
    PillarGrid g = pillarize(c, GridConfig{});
    ClusterSet cs = cluster_pillars(g);
    CHECK(cs.cluster_of == flood_fill(g));
    std::set<std::uint32_t> ids(cs.cluster_of.begin(), cs.cluster_of.end());
    CHECK(ids.size() == cs.count);
    auto members = cs.members();
    REQUIRE(members.size() == cs.count);
    std::size_t total = 0;
    for (const auto& m : members) {
      total += m.size();
      CHECK(std::is_sorted(m.begin(), m.end()));
    }
    CHECK(total == g.size());
  }
}

TEST_CASE("cluster examples") {
  PointCloud diag;
  diag.points = {{0.1, 0.1, 0}, {0.3, 0.3, 0}};
  CHECK(cluster_pillars(pillarize(diag, GridConfig{})).count == 1);
  PointCloud apart;
  apart.points = {{0.1, 0.1, 0}, {0.5, 0.1, 0}};
  ClusterSet cs = cluster_pillars(pillarize(apart, GridConfig{}));
  CHECK(cs.count == 2);
  CHECK(cs.cluster_of == std::vector<std::uint32_t>{0, 1});
  CHECK(cluster_pillars(pillarize(PointCloud{}, GridConfig{})).count == 0);
}

TEST_CASE("static gate") {
  FlowField f{{{0.03, 0, 0}, {0.0399, 0.0, 0.0}, {0.04, 0, 0}, {0.03, 0.03, 0}, {-1, 2, 0}}, 0.1};
  apply_static_gate(f, 0.04);
  CHECK(f.flows[0] == Vec3{});
  CHECK(f.flows[1] == Vec3{});
  CHECK(f.flows[2] == Vec3{0.04, 0, 0});
  CHECK(f.flows[3] == Vec3{0.03, 0.03, 0});
  CHECK(f.flows[4] == Vec3{-1, 2, 0});
}

TEST_CASE("static gate is idempotent") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    FlowField f;
    for (int i = 0; i < 50; ++i) f.flows.push_back(testutil::random_point(rng, 0.08, -0.02, 0.02));
    const double t = testutil::uniform(rng, 0.0, 0.1);
    apply_static_gate(f, t);
    FlowField again = f;
    apply_static_gate(again, t);
    CHECK(again.flows == f.flows);
    for (const auto& v : f.flows) CHECK((v == Vec3{} || norm(v) >= t));
  }
}

TEST_CASE("pipeline config validation") {
  PipelineConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.static_gate_threshold = -1;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  PipelineConfig odd;
  odd.grid = GridConfig::square(51.2, 0.3);
  CHECK_THROWS_AS(odd.validate(), ContractError);
}

TEST_CASE("identical scans give zero flow") {
  for (Extraction e : {Extraction::kArgmax, Extraction::kSoftArgmax}) {
    ScenePair pair = one_mover(0, 0);
    PipelineConfig cfg;
    cfg.extraction = e;
    SceneFlowResult r = estimate_scene_flow(pair.source, pair.source, cfg);
    REQUIRE(r.flow.size() == pair.source.size());
    for (const auto& f : r.flow.flows) CHECK(f == Vec3{});
  }
}

TEST_CASE("on-lattice mover is recovered exactly with argmax") {
  ScenePair pair = one_mover(0.6, -0.4);
  for (bool fusion : {true, false}) {
    PipelineConfig cfg;
    cfg.extraction = Extraction::kArgmax;
    cfg.cluster_fusion = fusion;
    SceneFlowResult r = estimate_scene_flow(pair.source, pair.target, cfg);
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < pair.source.size(); ++i) {
      const Vec3 d = r.flow.flows[i] - pair.gt_flow.flows[i];
      wrong += std::abs(d.x) > 1e-9 || std::abs(d.y) > 1e-9 || d.z != 0.0;
    }
    if (fusion) {
      CHECK(wrong == 0);
    } else {
      // Lone pillars may still alias; most must be right.
      CHECK(wrong < pair.source.size() / 20);
    }
  }
}

TEST_CASE("noisy mover is recovered within half a bin") {
  ScenePair pair = one_mover(0.6, -0.4, 0.02, 3);
  SceneFlowResult r = estimate_scene_flow(pair.source, pair.target, PipelineConfig{});
  std::size_t movers = 0, good = 0;
  for (std::size_t i = 0; i < pair.source.size(); ++i) {
    if (!pair.source.is_dynamic[i]) continue;
    ++movers;
    const Vec3 d = r.flow.flows[i] - pair.gt_flow.flows[i];
    good += std::abs(d.x) <= 0.1 && std::abs(d.y) <= 0.1;
  }
  CHECK(good == movers);
}

TEST_CASE("flow is planar, aligned and thread independent") {
  ScenePair pair = generate_scene_pair(standard_scene_spec(3, 20000));
  PipelineConfig cfg;
  cfg.threads = 1;
  SceneFlowResult one = estimate_scene_flow(pair.source, pair.target, cfg);
  CHECK(one.flow.size() == pair.source.size());
  for (const auto& f : one.flow.flows) CHECK(f.z == 0.0);
  for (int t : {2, 4}) {
    cfg.threads = t;
    SceneFlowResult many = estimate_scene_flow(pair.source, pair.target, cfg);
    CHECK(many.flow.flows == one.flow.flows);
    CHECK(many.pillar_translation == one.pillar_translation);
  }
}

TEST_CASE("cropped points get zero flow") {
  ScenePair pair = one_mover(0.6, -0.4);
  pair.source.points.push_back({80, 0, 0});
  pair.target.points.push_back({80, 0, 0});
  PipelineConfig cfg;
  cfg.extraction = Extraction::kArgmax;
  SceneFlowResult r = estimate_scene_flow(pair.source, pair.target, cfg);
  CHECK(r.flow.flows.back() == Vec3{});
}

TEST_CASE("empty scans") {
  PointCloud empty;
  SceneFlowResult r = estimate_scene_flow(empty, empty, PipelineConfig{});
  CHECK(r.flow.size() == 0);
  ScenePair pair = one_mover(0.6, -0.4);
  SceneFlowResult none = estimate_scene_flow(pair.source, empty, PipelineConfig{});
  for (const auto& f : none.flow.flows) CHECK(f == Vec3{});
}

TEST_CASE("estimator exposes voting spaces") {
  ScenePair pair = one_mover(0.6, -0.4);
  PipelineConfig cfg;
  SceneFlowEstimator est(pair.source, pair.target, cfg);
  REQUIRE(est.clusters().count > 0);
  const auto p = *est.source_grid().pillar_of_point(pair.source.size() - 1);
  VotingSpace v = est.pillar_votes(p);
  CHECK(v.rows() == 21);
  VotingSpace fused = est.cluster_votes(est.clusters().cluster_of[p]);
  CHECK(argmax_bin(fused) == BinIndex{8, 13});
  CHECK_THROWS_AS(est.pillar_votes(est.source_grid().size()), ContractError);
  CHECK_THROWS_AS(est.cluster_votes(est.clusters().count), ContractError);
}

TEST_CASE("flow consistency") {
  PointCloud c;
  c.points = {{0.1, 0.1, 0}, {0.3, 0.1, 0}, {0.15, 0.12, 0}, {5.1, 5.1, 0}};
  PillarGrid g = pillarize(c, GridConfig{});
  ClusterSet cs = cluster_pillars(g);
  REQUIRE(cs.count == 2);
  FlowField same{{{0.6, -0.4, 0}, {0.6, -0.4, 0}, {0.6, -0.4, 0}, {1, 1, 0}}, 0.1};
  auto dev = flow_consistency(same, cs, g);
  CHECK(dev[0] == 0.0);
  CHECK(dev[1] == 0.0);
  FlowField split{{{0, 0, 0}, {0.3, 0, 0}, {0, 0, 0}, {1, 1, 0}}, 0.1};
  dev = flow_consistency(split, cs, g);
  CHECK(dev[0] == doctest::Approx(0.2));
  CHECK_THROWS_AS(flow_consistency(FlowField{{}, 0.1}, cs, g), ContractError);
}
