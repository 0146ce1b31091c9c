#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "pillarvote/error.hpp"
#include "pillarvote/pointcloud.hpp"
#include "pillarvote/synthetic_scene.hpp"
#include "test_util.hpp"

using namespace pillarvote;
using testutil::read_file;
using testutil::write_file;

namespace {

PointCloud random_labeled_cloud(std::mt19937_64& rng, std::size_t n, bool flow, bool cls, bool dyn,
                                bool fg) {
  PointCloud c = testutil::random_cloud(rng, n, 50.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (flow) c.gt_flow.push_back(testutil::random_point(rng, 2.0, -0.5, 0.5));
    if (cls) c.class_id.push_back(static_cast<std::uint16_t>(testutil::uniform_int(rng, 0, 65535)));
    if (dyn) c.is_dynamic.push_back(static_cast<std::uint8_t>(testutil::uniform_int(rng, 0, 1)));
    if (fg) c.is_foreground.push_back(static_cast<std::uint8_t>(testutil::uniform_int(rng, 0, 1)));
  }
  return c;
}

// Values representable in f32 so the binary format can be compared exactly.
PointCloud to_float_precision(PointCloud c) {
  auto f = [](Vec3 v) {
    return Vec3{static_cast<float>(v.x), static_cast<float>(v.y), static_cast<float>(v.z)};
  };
  for (auto& p : c.points) p = f(p);
  for (auto& p : c.gt_flow) p = f(p);
  return c;
}

void check_close(const Vec3& a, const Vec3& b, double tol) {
  CHECK(std::abs(a.x - b.x) <= tol);
  CHECK(std::abs(a.y - b.y) <= tol);
  CHECK(std::abs(a.z - b.z) <= tol);
}

}  // namespace

TEST_CASE("csv: three plain rows") {
  auto dir = testutil::scratch_dir("csv_plain");
  write_file(dir / "a.csv", "x,y,z\n0,0,0\n1,2,3\n-1,0.5,2");
  PointCloud c = load_point_cloud(dir / "a.csv");
  REQUIRE(c.size() == 3);
  CHECK(c.points[1] == Vec3{1, 2, 3});
  CHECK(c.points[2] == Vec3{-1, 0.5, 2});
  CHECK_FALSE(c.has_gt_flow());
  CHECK_FALSE(c.has_class());
  CHECK_FALSE(c.has_dynamic());
  CHECK_FALSE(c.has_foreground());
}

TEST_CASE("csv: zero flow columns give a zero gt field") {
  auto dir = testutil::scratch_dir("csv_zero_flow");
  write_file(dir / "a.csv", "x,y,z,fx,fy,fz\n1,2,3,0,0,0\n4,5,6,0,0,0\n");
  PointCloud c = load_point_cloud(dir / "a.csv");
  REQUIRE(c.has_gt_flow());
  for (const auto& f : c.gt_flow) CHECK(f == Vec3{});
}

TEST_CASE("csv: CRLF, shuffled columns, blank lines") {
  auto dir = testutil::scratch_dir("csv_crlf");
  write_file(dir / "a.csv", "foreground,z,class,x,y\r\n1,3,7,1,2\r\n\r\n0, 6 ,0,4,5\r\n");
  PointCloud c = load_point_cloud(dir / "a.csv");
  REQUIRE(c.size() == 2);
  CHECK(c.points[0] == Vec3{1, 2, 3});
  CHECK(c.points[1] == Vec3{4, 5, 6});
  CHECK(c.class_id == std::vector<std::uint16_t>{7, 0});
  CHECK(c.is_foreground == std::vector<std::uint8_t>{1, 0});
}

TEST_CASE("csv: malformed input is reported with its line") {
  auto dir = testutil::scratch_dir("csv_errors");
  auto expect_parse_error = [&](const std::string& text, const std::string& needle) {
    write_file(dir / "bad.csv", text);
    try {
      load_point_cloud(dir / "bad.csv");
      FAIL("expected ParseError for: " << text);
    } catch (const ParseError& e) {
      CHECK_MESSAGE(std::string(e.what()).find(needle) != std::string::npos, e.what());
    }
  };
  expect_parse_error("x,y,z\n0,0,0\n1,abc,3\n", "bad.csv:3:");
  expect_parse_error("x,y,z\n0,0\n", "bad.csv:2:");
  expect_parse_error("x,y\n0,0\n", "x,y,z");
  expect_parse_error("x,y,z,fx\n0,0,0,1\n", "together");
  expect_parse_error("x,y,z,w\n0,0,0,1\n", "unknown column");
  expect_parse_error("x,y,z,dynamic\n0,0,0,2\n", "0 or 1");
  expect_parse_error("", "missing header");

  write_file(dir / "nan.csv", "x,y,z\n0,nan,0\n");
  CHECK_THROWS_AS(load_point_cloud(dir / "nan.csv"), ValidationError);
  write_file(dir / "inf.csv", "x,y,z,fx,fy,fz\n0,0,0,inf,0,0\n");
  CHECK_THROWS_AS(load_point_cloud(dir / "inf.csv"), ValidationError);
  CHECK_THROWS_AS(load_point_cloud(dir / "missing.csv"), IoError);
}

TEST_CASE("vfpc: malformed input") {
  auto dir = testutil::scratch_dir("vfpc_errors");
  PointCloud c;
  c.points = {{1, 2, 3}, {4, 5, 6}};
  c.class_id = {1, 2};
  save_point_cloud(dir / "ok.vfpc", c);
  const std::string good = read_file(dir / "ok.vfpc");
  CHECK(good.substr(0, 4) == "VFPC");
  CHECK(good.size() == 4 + 4 + 4 + 8 + 2 * 12 + 2 * 2);

  std::string bad_magic = good;
  bad_magic[0] = 'X';
  write_file(dir / "magic.vfpc", bad_magic);
  CHECK_THROWS_AS(load_point_cloud(dir / "magic.vfpc"), ParseError);

  write_file(dir / "short.vfpc", good.substr(0, good.size() - 1));
  CHECK_THROWS_AS(load_point_cloud(dir / "short.vfpc"), ParseError);

  write_file(dir / "long.vfpc", good + "x");
  CHECK_THROWS_AS(load_point_cloud(dir / "long.vfpc"), ParseError);

  std::string bad_mask = good;
  bad_mask[8] = static_cast<char>(0x30);
  write_file(dir / "mask.vfpc", bad_mask);
  CHECK_THROWS_AS(load_point_cloud(dir / "mask.vfpc"), ParseError);

  std::string bad_version = good;
  bad_version[4] = 2;
  write_file(dir / "version.vfpc", bad_version);
  CHECK_THROWS_AS(load_point_cloud(dir / "version.vfpc"), ParseError);
}

TEST_CASE("round trip: random clouds through csv and vfpc") {
  auto dir = testutil::scratch_dir("round_trip");
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 120; ++trial) {
    const std::size_t n = static_cast<std::size_t>(testutil::uniform_int(rng, 0, 60));
    PointCloud c = random_labeled_cloud(rng, n, trial % 2 == 0, trial % 3 == 0, trial % 5 != 0, trial % 7 != 0);

    save_point_cloud(dir / "c.csv", c);
    PointCloud from_csv = load_point_cloud(dir / "c.csv");
    REQUIRE(from_csv.size() == n);
    for (std::size_t i = 0; i < n; ++i) check_close(from_csv.points[i], c.points[i], 5e-7);
    REQUIRE(from_csv.gt_flow.size() == c.gt_flow.size());
    for (std::size_t i = 0; i < c.gt_flow.size(); ++i) check_close(from_csv.gt_flow[i], c.gt_flow[i], 5e-7);
    CHECK(from_csv.class_id == c.class_id);
    CHECK(from_csv.is_dynamic == c.is_dynamic);
    CHECK(from_csv.is_foreground == c.is_foreground);

    PointCloud f = to_float_precision(c);
    save_point_cloud(dir / "c.vfpc", f);
    PointCloud from_bin = load_point_cloud(dir / "c.vfpc");
    CHECK(from_bin.points == f.points);
    CHECK(from_bin.gt_flow == f.gt_flow);
    CHECK(from_bin.class_id == f.class_id);
    CHECK(from_bin.is_dynamic == f.is_dynamic);
    CHECK(from_bin.is_foreground == f.is_foreground);
  }
}

TEST_CASE("save_flow: six decimals per component") {
  auto dir = testutil::scratch_dir("save_flow");
  FlowField zero{{Vec3{}, Vec3{}}, 0.1};
  save_flow(dir / "z.csv", zero);
  CHECK(read_file(dir / "z.csv") == "dx,dy,dz\n0.000000,0.000000,0.000000\n0.000000,0.000000,0.000000\n");

  FlowField one{{Vec3{0.6, -0.4, 0}}, 0.1};
  save_flow(dir / "o.csv", one);
  CHECK(read_file(dir / "o.csv") == "dx,dy,dz\n0.600000,-0.400000,0.000000\n");

  FlowField tiny{{Vec3{-1e-9, 0, 0}}, 0.1};
  save_flow(dir / "t.csv", tiny);
  CHECK(read_file(dir / "t.csv") == "dx,dy,dz\n0.000000,0.000000,0.000000\n");

  FlowField bad{{Vec3{NAN, 0, 0}}, 0.1};
  CHECK_THROWS_AS(save_flow(dir / "bad.csv", bad), ValidationError);
  CHECK_THROWS_AS(save_flow(dir / "no_such_dir" / "f.csv", zero), IoError);
}

TEST_CASE("save_flow / load_flow round trip within 1e-6") {
  auto dir = testutil::scratch_dir("flow_round_trip");
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    FlowField f;
    const int n = testutil::uniform_int(rng, 0, 40);
    for (int i = 0; i < n; ++i) f.flows.push_back(testutil::random_point(rng, 3.0, -1.0, 1.0));
    save_flow(dir / "f.csv", f);
    FlowField g = load_flow(dir / "f.csv", 0.1);
    REQUIRE(g.size() == f.size());
    for (std::size_t i = 0; i < f.size(); ++i) check_close(g.flows[i], f.flows[i], 1e-6);
  }
}

TEST_CASE("masks round trip") {
  auto dir = testutil::scratch_dir("mask");
  std::vector<std::uint8_t> mask{1, 0, 0, 1, 1};
  save_mask(dir / "m.csv", mask);
  CHECK(read_file(dir / "m.csv") == "dynamic\n1\n0\n0\n1\n1\n");
  CHECK(load_mask(dir / "m.csv") == mask);
  write_file(dir / "bad.csv", "dynamic\n3\n");
  CHECK_THROWS_AS(load_mask(dir / "bad.csv"), ParseError);
}

TEST_CASE("apply_flow") {
  PointCloud c;
  c.points = {{1, 1, 1}};
  c.class_id = {4};
  PointCloud moved = apply_flow(c, FlowField{{Vec3{0.5, 0, -1}}, 0.1});
  CHECK(moved.points[0] == Vec3{1.5, 1, 0});
  CHECK(moved.class_id == c.class_id);

  CHECK(apply_flow(c, FlowField{{Vec3{}}, 0.1}).points == c.points);
  CHECK_THROWS_AS(apply_flow(c, FlowField{{}, 0.1}), ContractError);
}

TEST_CASE("apply_flow minus input equals the flow") {
  // Dyadic values with few significant bits keep every sum exact.
  std::mt19937_64 rng(3);
  auto dyadic = [&] { return testutil::uniform_int(rng, -4096, 4096) / 256.0; };
  for (int trial = 0; trial < 100; ++trial) {
    PointCloud c;
    FlowField f;
    for (int i = 0; i < 20; ++i) {
      c.points.push_back({dyadic(), dyadic(), dyadic()});
      f.flows.push_back({dyadic(), dyadic(), dyadic()});
    }
    PointCloud moved = apply_flow(c, f);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(moved.points[i] - c.points[i] == f.flows[i]);
  }
}

TEST_CASE("scene: static background only") {
  SceneSpec spec;
  spec.background_points = 100;
  spec.background_seed = 4;
  ScenePair pair = generate_scene_pair(spec);
  REQUIRE(pair.source.size() == 100);
  CHECK(pair.source.points == pair.target.points);
  for (const auto& f : pair.gt_flow.flows) CHECK(f == Vec3{});
  for (auto d : pair.source.is_dynamic) CHECK(d == 0);
}

TEST_CASE("scene: one 4x2 m mover translated (0.6, -0.4)") {
  SceneSpec spec;
  spec.background_points = 500;
  MoverSpec m;
  m.translation_x = 0.6;
  m.translation_y = -0.4;
  m.center_x = 10;
  spec.movers.push_back(m);
  ScenePair pair = generate_scene_pair(spec);
  REQUIRE(pair.source.size() == 500 + m.point_count());
  std::size_t movers = 0;
  for (std::size_t i = 0; i < pair.source.size(); ++i) {
    if (pair.source.is_foreground[i]) {
      ++movers;
      CHECK(pair.gt_flow.flows[i] == Vec3{0.6, -0.4, 0});
      CHECK(pair.source.is_dynamic[i] == 1);
      CHECK(pair.source.class_id[i] == 1);
      const Vec3 p = pair.source.points[i];
      CHECK(std::abs(p.x - 10) <= 2.0);
      CHECK(std::abs(p.y) <= 1.0);
    } else {
      CHECK(pair.gt_flow.flows[i] == Vec3{});
    }
    CHECK(pair.target.points[i] == pair.source.points[i] + pair.gt_flow.flows[i]);
  }
  CHECK(movers == m.point_count());
}

TEST_CASE("scene: same seed gives bit-identical output") {
  SceneSpec spec = standard_scene_spec(11, 20000);
  spec.noise_sigma = 0.02;
  ScenePair a = generate_scene_pair(spec);
  ScenePair b = generate_scene_pair(spec);
  CHECK(a.source.points == b.source.points);
  CHECK(a.target.points == b.target.points);
  CHECK(a.gt_flow.flows == b.gt_flow.flows);
  CHECK(a.source.size() == 20000);

  spec.rng_seed += 1;
  ScenePair c = generate_scene_pair(spec);
  CHECK(c.target.points != a.target.points);
}

TEST_CASE("scene: noise perturbs both scans independently") {
  SceneSpec spec;
  spec.background_points = 200;
  spec.noise_sigma = 0.02;
  ScenePair pair = generate_scene_pair(spec);
  std::size_t differing = 0;
  for (std::size_t i = 0; i < pair.source.size(); ++i) differing += pair.source.points[i] != pair.target.points[i];
  CHECK(differing == pair.source.size());
}

TEST_CASE("scene: invalid specs are rejected") {
  SceneSpec spec;
  MoverSpec m;
  m.translation_x = 2.5;
  spec.movers.push_back(m);
  CHECK_THROWS_AS(generate_scene_pair(spec), ValidationError);
  spec.movers[0].translation_x = 0;
  spec.movers[0].density = -1;
  CHECK_THROWS_AS(generate_scene_pair(spec), ValidationError);
  SceneSpec neg;
  neg.noise_sigma = -0.1;
  CHECK_THROWS_AS(generate_scene_pair(neg), ValidationError);
}

TEST_CASE("scene spec json round trip") {
  SceneSpec spec = standard_scene_spec(5, 30000);
  spec.noise_sigma = 0.01;
  SceneSpec back = scene_spec_from_json(to_json(spec));
  CHECK(to_json(back) == to_json(spec));
  CHECK_THROWS_AS(scene_spec_from_json(nlohmann::json::parse(R"({"movers": 3})")), ParseError);
}
