#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "pillarvote/flow_assembly.hpp"
#include "pillarvote/metrics.hpp"
#include "pillarvote/pillar_grid.hpp"
#include "pillarvote/pointcloud.hpp"
#include "test_util.hpp"

using namespace pillarvote;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("cli: identity scene estimates zero flow") {
  auto dir = testutil::scratch_dir("cli_identity");
  REQUIRE(run({"synth", "--out-dir", dir.string(), "--preset", "identity", "--points", "800"}).code == 0);
  CHECK(fs::exists(dir / "source.csv"));
  CHECK(fs::exists(dir / "target.csv"));
  CHECK(fs::exists(dir / "scene.json"));
  CHECK(fs::exists(dir / "manifest.json"));

  Run r = run({"estimate", "--src", (dir / "source.csv").string(), "--tgt", (dir / "target.csv").string(),
               "--out", (dir / "flow.csv").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const std::string flow = testutil::read_file(dir / "flow.csv");
  CHECK(line_count(flow) == 801);
  std::istringstream lines(flow);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "dx,dy,dz");
  while (std::getline(lines, line)) CHECK(line == "0.000000,0.000000,0.000000");

  auto manifest = nlohmann::json::parse(testutil::read_file(dir / "flow.manifest.json"));
  CHECK(manifest["command"] == "estimate");
  CHECK(manifest.contains("config"));
  CHECK(manifest["config"]["vote"]["m_neighbors"] == 8);
  CHECK(manifest.contains("timings_ms"));
  CHECK(manifest["stats"]["source_points"] == 800);
  CHECK(manifest["stats"]["sparsity"].get<double>() > 0.9);
}

TEST_CASE("cli: argmax without fusion gives lattice flows") {
  auto dir = testutil::scratch_dir("cli_argmax");
  REQUIRE(run({"synth", "--out-dir", dir.string(), "--translation", "0.6,-0.4"}).code == 0);
  Run r = run({"estimate", "--src", (dir / "source.csv").string(), "--tgt", (dir / "target.csv").string(),
               "--out", (dir / "flow.csv").string(), "--extraction", "argmax", "--no-cluster"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  FlowField f = load_flow(dir / "flow.csv");
  for (const auto& v : f.flows) {
    CHECK(std::abs(v.x / 0.2 - std::round(v.x / 0.2)) <= 1e-6);
    CHECK(std::abs(v.y / 0.2 - std::round(v.y / 0.2)) <= 1e-6);
    CHECK(v.z == 0.0);
  }
}

TEST_CASE("cli: estimate, vote dumps and eval") {
  auto dir = testutil::scratch_dir("cli_pipeline");
  REQUIRE(run({"synth", "--out-dir", dir.string(), "--translation", "0.6,-0.4", "--format", "vfpc"}).code == 0);
  PointCloud src = load_point_cloud(dir / "source.vfpc");
  PillarGrid g = pillarize(src, GridConfig{});
  const std::size_t mover_pillar = *g.pillar_of_point(src.size() - 1);
  const std::string cell = std::to_string(g.cell(mover_pillar));
  const std::string cluster = std::to_string(cluster_pillars(g).cluster_of[mover_pillar]);

  Run r = run({"estimate", "--src", (dir / "source.vfpc").string(), "--tgt", (dir / "target.vfpc").string(),
               "--out", (dir / "flow.csv").string(), "--extraction", "argmax", "--dump-votes", cell,
               "--dump-votes-cluster", cluster});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(fs::exists(dir / ("flow.votes.cell" + cell + ".pgm")));
  CHECK(fs::exists(dir / ("flow.votes.cell" + cell + ".csv")));
  CHECK(fs::exists(dir / ("flow.votes.cell" + cell + ".argmax.txt")));
  CHECK(testutil::read_file(dir / ("flow.votes.cluster" + cluster + ".argmax.txt")) == "0.600,-0.400\n");

  Run e = run({"eval", "--pred", (dir / "flow.csv").string(), "--gt", (dir / "source.vfpc").string(),
               "--out", (dir / "report.json").string(), "--mode", "both"});
  REQUIRE_MESSAGE(e.code == 0, e.err);
  EvalReport rep = read_report(dir / "report.json");
  REQUIRE(rep.three_way.has_value());
  // Ground truth went through 32-bit floats, the flow file through six decimals.
  CHECK(*rep.three_way->foreground_dynamic.mean_epe <= 1e-6);
  CHECK(*rep.three_way->background_static.mean_epe == 0.0);
  REQUIRE(rep.bucketed.has_value());
  for (const auto& [k, c] : *rep.bucketed)
    if (c.dynamic_normalized_epe) CHECK(*c.dynamic_normalized_epe <= 1e-6);
  CHECK(fs::exists(dir / "report.manifest.json"));

  Run bad_cell = run({"estimate", "--src", (dir / "source.vfpc").string(), "--tgt", (dir / "target.vfpc").string(),
                      "--out", (dir / "flow2.csv").string(), "--dump-votes", "0"});
  CHECK(bad_cell.code == cli::kDataError);
}

TEST_CASE("cli: eval reports missing ground-truth columns") {
  auto dir = testutil::scratch_dir("cli_eval_errors");
  testutil::write_file(dir / "gt.csv", "x,y,z,fx,fy,fz,foreground\n0,0,0,0.1,0,0,1\n1,1,0,0,0,0,0\n");
  testutil::write_file(dir / "pred.csv", "dx,dy,dz\n0.1,0,0\n0,0,0\n");
  Run ok = run({"eval", "--pred", (dir / "pred.csv").string(), "--gt", (dir / "gt.csv").string(), "--out",
                (dir / "r.json").string()});
  CHECK_MESSAGE(ok.code == 0, ok.err);

  Run no_class = run({"eval", "--pred", (dir / "pred.csv").string(), "--gt", (dir / "gt.csv").string(), "--out",
                      (dir / "r.json").string(), "--mode", "bucketed"});
  CHECK(no_class.code == cli::kDataError);
  CHECK(no_class.err.find("class column required") != std::string::npos);

  testutil::write_file(dir / "noflow.csv", "x,y,z\n0,0,0\n1,1,0\n");
  Run no_flow = run({"eval", "--pred", (dir / "pred.csv").string(), "--gt", (dir / "noflow.csv").string(), "--out",
                     (dir / "r.json").string()});
  CHECK(no_flow.code == cli::kDataError);
  CHECK(no_flow.err.find("fx,fy,fz") != std::string::npos);

  testutil::write_file(dir / "short.csv", "dx,dy,dz\n0,0,0\n");
  Run mismatch = run({"eval", "--pred", (dir / "short.csv").string(), "--gt", (dir / "gt.csv").string(), "--out",
                      (dir / "r.json").string()});
  CHECK(mismatch.code == cli::kDataError);
}

TEST_CASE("cli: synth is reproducible") {
  auto a = testutil::scratch_dir("cli_synth_a"), b = testutil::scratch_dir("cli_synth_b");
  REQUIRE(run({"synth", "--out-dir", a.string(), "--preset", "standard", "--points", "5000", "--seed", "9", "--noise", "0.02"}).code == 0);
  REQUIRE(run({"synth", "--out-dir", b.string(), "--preset", "standard", "--points", "5000", "--seed", "9", "--noise", "0.02"}).code == 0);
  CHECK(testutil::read_file(a / "source.csv") == testutil::read_file(b / "source.csv"));
  CHECK(testutil::read_file(a / "target.csv") == testutil::read_file(b / "target.csv"));
  CHECK(testutil::read_file(a / "scene.json") == testutil::read_file(b / "scene.json"));

  auto c = testutil::scratch_dir("cli_synth_spec");
  REQUIRE(run({"synth", "--out-dir", c.string(), "--spec", (a / "scene.json").string()}).code == 0);
  CHECK(testutil::read_file(c / "source.csv") == testutil::read_file(a / "source.csv"));

  Run bad = run({"synth", "--out-dir", c.string(), "--translation", "3,0"});
  CHECK(bad.code == cli::kDataError);
}

TEST_CASE("cli: sweep writes one row per combination") {
  auto dir = testutil::scratch_dir("cli_sweep");
  REQUIRE(run({"synth", "--out-dir", dir.string()}).code == 0);
  Run r = run({"sweep", "--src", (dir / "source.csv").string(), "--tgt", (dir / "target.csv").string(), "--out",
               (dir / "sweep.csv").string(), "--m-list", "4,8", "--extraction-list", "argmax,soft-argmax",
               "--repeats", "1"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const std::string csv = testutil::read_file(dir / "sweep.csv");
  CHECK(line_count(csv) == 5);
  CHECK(csv.rfind("scene,pillar_size,m_neighbors,n_neighbors,extraction,temperature,cluster_fusion,latency_ms", 0) == 0);
  CHECK(fs::exists(dir / "sweep.manifest.json"));

  Run empty = run({"sweep", "--src", (dir / "source.csv").string(), "--tgt", (dir / "target.csv").string(), "--out",
                   (dir / "empty.csv").string(), "--m-list", ""});
  REQUIRE_MESSAGE(empty.code == 0, empty.err);
  CHECK(line_count(testutil::read_file(dir / "empty.csv")) == 1);
}

TEST_CASE("cli: exit codes") {
  auto dir = testutil::scratch_dir("cli_exit");
  REQUIRE(run({"synth", "--out-dir", dir.string(), "--points", "300"}).code == 0);
  const std::string src = (dir / "source.csv").string(), tgt = (dir / "target.csv").string();
  const std::string out = (dir / "f.csv").string();

  CHECK(run({}).code == cli::kUsage);
  CHECK(run({"frobnicate"}).code == cli::kUsage);
  CHECK(run({"estimate", "--src", src}).code == cli::kUsage);
  CHECK(run({"estimate", "--src", src, "--tgt", tgt, "--out", out, "--extraction", "median"}).code == cli::kUsage);
  CHECK(run({"--help"}).code == cli::kOk);
  CHECK(run({"estimate", "--src", (dir / "nope.csv").string(), "--tgt", tgt, "--out", out}).code == cli::kDataError);
  CHECK(run({"estimate", "--src", src, "--tgt", tgt, "--out", out, "--pillar-size", "0.3"}).code == cli::kContract);
  CHECK(run({"estimate", "--src", src, "--tgt", tgt, "--out", out, "--m-neighbors", "0"}).code == cli::kContract);
  CHECK(run({"estimate", "--src", src, "--tgt", tgt, "--out", out, "--temperature", "0"}).code == cli::kContract);
  CHECK(run({"estimate", "--src", src, "--tgt", tgt, "--out", (dir / "source.csv" / "f.csv").string()}).code == cli::kDataError);

  testutil::write_file(dir / "broken.csv", "x,y,z\n1,2\n");
  Run broken = run({"estimate", "--src", (dir / "broken.csv").string(), "--tgt", tgt, "--out", out});
  CHECK(broken.code == cli::kDataError);
  CHECK(broken.err.find("broken.csv:2") != std::string::npos);
}
