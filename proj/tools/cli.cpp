#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pillarvote/error.hpp"
#include "pillarvote/flow_assembly.hpp"
#include "pillarvote/metrics.hpp"
#include "pillarvote/parallel.hpp"
#include "pillarvote/pointcloud.hpp"
#include "pillarvote/synthetic_scene.hpp"
#include "pillarvote/voting.hpp"

namespace pillarvote::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// ---- shared pipeline flags ---------------------------------------------------

struct PipelineFlags {
  double pillar_size = 0.2;
  double extent = 51.2;
  double max_translation = 2.0;
  std::size_t m_neighbors = 8;
  std::size_t n_neighbors = 128;
  double ball_radius = 0.0;
  double static_threshold = 0.04;
  double temperature = 0.1;
  std::string extraction = "soft-argmax";
  bool cluster = true;
  bool even_grid = false;
  double dt = kDefaultFrameInterval;
  int threads = 0;
};

void add_grid_flags(CLI::App* cmd, PipelineFlags& f) {
  cmd->add_option("--pillar-size", f.pillar_size, "Pillar edge length in meters")->capture_default_str();
  cmd->add_option("--extent", f.extent, "Half-width of the square grid in meters")->capture_default_str();
  cmd->add_option("--max-translation", f.max_translation, "Largest per-axis translation voted for (m)")
      ->capture_default_str();
  cmd->add_option("--ball-radius", f.ball_radius, "Candidate search radius in meters (0: auto)")
      ->capture_default_str();
  cmd->add_option("--static-threshold", f.static_threshold, "Flows shorter than this are zeroed (m)")
      ->capture_default_str();
  cmd->add_flag("--even-grid", f.even_grid, "Use the even 2*max/cell voting grid without the +max edge");
  cmd->add_option("--dt", f.dt, "Frame interval in seconds")->capture_default_str();
  cmd->add_option("--threads", f.threads, "Worker threads (0: PILLARVOTE_THREADS or all cores)")
      ->capture_default_str();
}

void add_vote_flags(CLI::App* cmd, PipelineFlags& f) {
  cmd->add_option("--m-neighbors", f.m_neighbors, "Source pillars voting for each pillar")->capture_default_str();
  cmd->add_option("--n-neighbors", f.n_neighbors, "Target candidates per voter")->capture_default_str();
  cmd->add_option("--temperature", f.temperature, "Soft-argmax temperature")->capture_default_str();
  cmd->add_option("--extraction", f.extraction, "argmax or soft-argmax")
      ->check(CLI::IsMember({"argmax", "soft-argmax"}))
      ->capture_default_str();
  cmd->add_flag("--cluster,!--no-cluster", f.cluster, "Fuse votes per connected cluster (default on)");
}

Extraction parse_extraction(const std::string& s) {
  if (s == "argmax") return Extraction::kArgmax;
  if (s == "soft-argmax") return Extraction::kSoftArgmax;
  throw CLI::ValidationError("extraction", "expected argmax or soft-argmax, got '" + s + "'");
}

const char* extraction_name(Extraction e) { return e == Extraction::kArgmax ? "argmax" : "soft-argmax"; }

PipelineConfig make_config(const PipelineFlags& f) {
  PipelineConfig cfg;
  cfg.grid = GridConfig::square(f.extent, f.pillar_size);
  cfg.vote.max_x = cfg.vote.max_y = f.max_translation;
  cfg.vote.m_neighbors = f.m_neighbors;
  cfg.vote.n_candidates = f.n_neighbors;
  cfg.vote.ball_radius = f.ball_radius;
  cfg.vote.temperature = f.temperature;
  cfg.vote.parity = f.even_grid ? GridParity::kEven : GridParity::kCentered;
  cfg.extraction = parse_extraction(f.extraction);
  cfg.cluster_fusion = f.cluster;
  cfg.static_gate_threshold = f.static_threshold;
  cfg.frame_interval = f.dt;
  cfg.threads = f.threads;
  return cfg;
}

json config_json(const PipelineConfig& c) {
  return {
      {"grid",
       {{"cell_x", c.grid.cell_x},
        {"cell_y", c.grid.cell_y},
        {"x_lo", c.grid.x_lo},
        {"x_hi", c.grid.x_hi},
        {"y_lo", c.grid.y_lo},
        {"y_hi", c.grid.y_hi},
        {"width", c.grid.width()},
        {"height", c.grid.height()}}},
      {"vote",
       {{"max_x", c.vote.max_x},
        {"max_y", c.vote.max_y},
        {"m_neighbors", c.vote.m_neighbors},
        {"n_candidates", c.vote.n_candidates},
        {"ball_radius", c.vote.resolved_ball_radius()},
        {"temperature", c.vote.temperature},
        {"grid_parity", c.vote.parity == GridParity::kCentered ? "centered" : "even"}}},
      {"extraction", extraction_name(c.extraction)},
      {"cluster_fusion", c.cluster_fusion},
      {"static_gate_threshold", c.static_gate_threshold},
      {"frame_interval", c.frame_interval},
      {"threads", c.threads == 0 ? default_thread_count() : c.threads},
  };
}

json timings_json(const StageTimings& t) {
  return {{"pillarize", t.pillarize_ms}, {"index", t.index_ms}, {"vote", t.vote_ms},
          {"extract", t.extract_ms},     {"assemble", t.assemble_ms}, {"pipeline", t.total_ms()}};
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << j.dump(2) << '\n';
  if (!f) throw IoError("write to " + path.string() + " failed");
}

fs::path manifest_beside(const fs::path& output) {
  fs::path m = output;
  m.replace_extension(".manifest.json");
  return m;
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

std::string fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

std::string general6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// ---- estimate ------------------------------------------------------------------

struct EstimateFlags {
  PipelineFlags pipeline;
  std::string src, tgt, out;
  std::string src_features, tgt_features;
  std::vector<std::int64_t> dump_cells;
  std::vector<std::size_t> dump_clusters;
};

int cmd_estimate(const EstimateFlags& f, std::ostream& out) {
  const auto t_start = Clock::now();
  PipelineConfig cfg = make_config(f.pipeline);
  cfg.validate();

  auto t0 = Clock::now();
  const PointCloud src = load_point_cloud(f.src);
  const PointCloud tgt = load_point_cloud(f.tgt);
  std::optional<ExternalFeatures> src_feat, tgt_feat;
  if (!f.src_features.empty()) src_feat = load_external_features(f.src_features);
  if (!f.tgt_features.empty()) tgt_feat = load_external_features(f.tgt_features);
  const double load_ms = ms_since(t0);

  SceneFlowEstimator est(src, tgt, cfg, src_feat ? &*src_feat : nullptr, tgt_feat ? &*tgt_feat : nullptr);
  const SceneFlowResult result = est.run();

  t0 = Clock::now();
  const fs::path out_path = f.out;
  ensure_parent(out_path);
  save_flow(out_path, result.flow);

  json dumps = json::array();
  const fs::path dump_base = out_path.parent_path() / out_path.stem();
  for (std::int64_t cell : f.dump_cells) {
    auto pillar = est.source_grid().find(cell);
    if (!pillar) throw ValidationError("--dump-votes: cell " + std::to_string(cell) + " is not occupied");
    const fs::path prefix = dump_base.string() + ".votes.cell" + std::to_string(cell);
    dump_votes(est.pillar_votes(*pillar), prefix);
    dumps.push_back(prefix.string());
  }
  for (std::size_t id : f.dump_clusters) {
    if (id >= est.clusters().count)
      throw ValidationError("--dump-votes-cluster: cluster " + std::to_string(id) + " does not exist (" +
                            std::to_string(est.clusters().count) + " clusters)");
    const fs::path prefix = dump_base.string() + ".votes.cluster" + std::to_string(id);
    dump_votes(est.cluster_votes(id), prefix);
    dumps.push_back(prefix.string());
  }
  const double write_ms = ms_since(t0);

  const fs::path manifest = manifest_beside(out_path);
  json timings = timings_json(result.timings);
  timings["load"] = load_ms;
  timings["write"] = write_ms;
  timings["total"] = ms_since(t_start);
  json inputs = {{"src", f.src}, {"tgt", f.tgt}};
  if (!f.src_features.empty()) inputs["src_features"] = f.src_features;
  if (!f.tgt_features.empty()) inputs["tgt_features"] = f.tgt_features;
  write_json(manifest, {{"command", "estimate"},
                        {"version", kVersion},
                        {"config", config_json(est.config())},
                        {"inputs", inputs},
                        {"outputs", {{"flow", out_path.string()}, {"manifest", manifest.string()}, {"vote_dumps", dumps}}},
                        {"stats",
                         {{"source_points", src.size()},
                          {"target_points", tgt.size()},
                          {"source_pillars", est.source_grid().size()},
                          {"target_pillars", est.target_grid().size()},
                          {"out_of_range_points", est.source_grid().out_of_range().size()},
                          {"sparsity", sparsity(est.source_grid())},
                          {"clusters", est.clusters().count}}},
                        {"timings_ms", timings}});

  out << "points " << src.size() << " -> " << tgt.size() << ", pillars " << est.source_grid().size()
      << ", clusters " << est.clusters().count << '\n';
  const StageTimings& t = result.timings;
  for (auto [name, ms] : {std::pair{"load", load_ms},
                          {"pillarize", t.pillarize_ms},
                          {"index", t.index_ms},
                          {"vote", t.vote_ms},
                          {"extract", t.extract_ms},
                          {"assemble", t.assemble_ms},
                          {"write", write_ms}})
    out << std::left << std::setw(10) << name << std::right << std::setw(10) << fixed(ms, 1) << " ms\n";
  out << std::left << std::setw(10) << "total" << std::right << std::setw(10) << fixed(ms_since(t_start), 1)
      << " ms\n";
  return kOk;
}

// ---- eval ----------------------------------------------------------------------

struct EvalFlags {
  std::string pred, gt, out;
  std::string mode = "three-way";
  double dt = kDefaultFrameInterval;
};

EvalReport evaluate(const FlowField& pred, const PointCloud& gt, bool three_way, bool bucketed, double dt) {
  if (!gt.has_gt_flow()) throw ValidationError("ground truth: fx,fy,fz columns required");
  if (three_way && !gt.has_foreground()) throw ValidationError("ground truth: foreground column required");
  if (bucketed && !gt.has_class()) throw ValidationError("ground truth: class column required");
  if (pred.size() != gt.size())
    throw ValidationError("prediction has " + std::to_string(pred.size()) + " flows but ground truth has " +
                          std::to_string(gt.size()) + " points");
  FlowField gt_flow{gt.gt_flow, dt};
  EvalReport report;
  report.points = gt.size();
  if (three_way) report.three_way = three_way_epe(pred, gt_flow, gt.is_foreground, dt);
  if (bucketed) report.bucketed = bucketed_normalized_epe(pred, gt_flow, gt.class_id, dt);
  return report;
}

std::string describe(const CategoryEpe& c) {
  if (!c.mean_epe) return "-";
  return fixed(*c.mean_epe, 6) + " (" + std::to_string(c.count) + ")";
}

void print_report(const EvalReport& r, std::ostream& out) {
  if (r.three_way) {
    const auto& t = *r.three_way;
    out << "three-way EPE (m, points)\n";
    for (auto [name, c] : {std::pair{"FD", &t.foreground_dynamic},
                           {"FS", &t.foreground_static},
                           {"BS", &t.background_static},
                           {"BD", &t.background_dynamic}})
      out << "  " << name << "  " << describe(*c) << '\n';
  }
  if (r.bucketed) {
    out << "bucketed normalized EPE\n";
    out << "  class  static_epe  dynamic_norm  buckets\n";
    for (const auto& [cls, rep] : *r.bucketed) {
      out << "  " << std::setw(5) << cls << "  " << std::setw(10)
          << (rep.static_epe ? fixed(*rep.static_epe, 6) : "-") << "  " << std::setw(12)
          << (rep.dynamic_normalized_epe ? fixed(*rep.dynamic_normalized_epe, 6) : "-") << "  "
          << rep.buckets.size() << '\n';
    }
  }
}

int cmd_eval(const EvalFlags& f, std::ostream& out) {
  const auto t0 = Clock::now();
  const bool three_way = f.mode == "three-way" || f.mode == "both";
  const bool bucketed = f.mode == "bucketed" || f.mode == "both";
  const FlowField pred = load_flow(f.pred, f.dt);
  const PointCloud gt = load_point_cloud(f.gt);
  const EvalReport report = evaluate(pred, gt, three_way, bucketed, f.dt);

  const fs::path out_path = f.out;
  ensure_parent(out_path);
  write_report(report, out_path);
  const fs::path manifest = manifest_beside(out_path);
  write_json(manifest, {{"command", "eval"},
                        {"version", kVersion},
                        {"config", {{"mode", f.mode}, {"frame_interval", f.dt}}},
                        {"inputs", {{"pred", f.pred}, {"gt", f.gt}}},
                        {"outputs", {{"report", out_path.string()}, {"manifest", manifest.string()}}},
                        {"timings_ms", {{"total", ms_since(t0)}}}});
  print_report(report, out);
  return kOk;
}

// ---- synth ---------------------------------------------------------------------

struct SynthFlags {
  std::string preset = "single-mover";
  std::string spec;
  std::string out_dir;
  std::string format = "csv";
  std::uint64_t seed = 1;
  std::size_t points = 0;  // 0: preset default
  std::vector<double> translation{0.6, -0.4};
  double noise = 0.0;
};

SceneSpec preset_spec(const SynthFlags& f) {
  SceneSpec spec;
  if (f.preset == "standard") {
    spec = standard_scene_spec(f.seed, f.points == 0 ? 100000 : f.points);
  } else {
    spec.rng_seed = f.seed;
    spec.background_seed = f.seed + 1;
    spec.background_points = f.points == 0 ? 2000 : f.points;
    if (f.preset == "single-mover") {
      MoverSpec m;
      m.center_x = 10.0;
      m.center_y = 5.0;
      m.translation_x = f.translation.at(0);
      m.translation_y = f.translation.at(1);
      spec.movers.push_back(m);
    }
  }
  spec.noise_sigma = f.noise;
  return spec;
}

int cmd_synth(const SynthFlags& f, std::ostream& out) {
  const auto t0 = Clock::now();
  SceneSpec spec;
  if (!f.spec.empty()) {
    std::ifstream in(f.spec);
    if (!in) throw IoError("cannot open " + f.spec);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ParseError(f.spec + ": " + e.what());
    }
    spec = scene_spec_from_json(j);
  } else {
    spec = preset_spec(f);
  }
  const ScenePair pair = generate_scene_pair(spec);

  const fs::path dir = f.out_dir;
  fs::create_directories(dir);
  const std::string ext = f.format == "vfpc" ? ".vfpc" : ".csv";
  const fs::path src = dir / ("source" + ext), tgt = dir / ("target" + ext);
  const fs::path mask = dir / "dynamic.csv", scene = dir / "scene.json", manifest = dir / "manifest.json";
  save_point_cloud(src, pair.source);
  save_point_cloud(tgt, pair.target);
  save_mask(mask, pair.source.is_dynamic);
  write_json(scene, to_json(spec));
  write_json(manifest, {{"command", "synth"},
                        {"version", kVersion},
                        {"config", {{"preset", f.spec.empty() ? f.preset : "file"}, {"scene", to_json(spec)}}},
                        {"inputs", f.spec.empty() ? json::object() : json{{"spec", f.spec}}},
                        {"outputs",
                         {{"source", src.string()},
                          {"target", tgt.string()},
                          {"dynamic_mask", mask.string()},
                          {"scene", scene.string()},
                          {"manifest", manifest.string()}}},
                        {"timings_ms", {{"total", ms_since(t0)}}}});
  std::size_t movers = 0;
  for (auto d : pair.source.is_foreground) movers += d;
  out << "wrote " << pair.source.size() << " points (" << movers << " on " << spec.movers.size()
      << " movers) to " << dir.string() << '\n';
  return kOk;
}

// ---- sweep ---------------------------------------------------------------------

struct SweepFlags {
  PipelineFlags base;
  std::string src, tgt, out;
  std::optional<std::string> m_list, n_list, pillar_list, temperature_list, extraction_list, cluster_list;
  int repeats = 3;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> items;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

template <typename T>
T parse_number(const std::string& s, const char* flag) {
  T v{};
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size())
    throw CLI::ValidationError(flag, "'" + s + "' is not a valid number");
  return v;
}

template <typename T, typename Parse>
std::vector<T> list_or(const std::optional<std::string>& list, T fallback, Parse parse) {
  if (!list) return {fallback};
  std::vector<T> values;
  for (const auto& item : split_list(*list)) values.push_back(parse(item));
  return values;
}

bool parse_switch(const std::string& s) {
  if (s == "on" || s == "true" || s == "1") return true;
  if (s == "off" || s == "false" || s == "0") return false;
  throw CLI::ValidationError("--cluster-list", "expected on/off, got '" + s + "'");
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string optional_cell(const std::optional<double>& v) { return v ? general6(*v) : ""; }

int cmd_sweep(const SweepFlags& f, std::ostream& out) {
  const auto t_start = Clock::now();
  if (f.repeats < 1) throw CLI::ValidationError("--repeats", "must be at least 1");
  const auto ms = list_or<std::size_t>(f.m_list, f.base.m_neighbors,
                                       [](const std::string& s) { return parse_number<std::size_t>(s, "--m-list"); });
  const auto ns = list_or<std::size_t>(f.n_list, f.base.n_neighbors,
                                       [](const std::string& s) { return parse_number<std::size_t>(s, "--n-list"); });
  const auto pillars = list_or<double>(f.pillar_list, f.base.pillar_size,
                                       [](const std::string& s) { return parse_number<double>(s, "--pillar-list"); });
  const auto temps = list_or<double>(f.temperature_list, f.base.temperature, [](const std::string& s) {
    return parse_number<double>(s, "--temperature-list");
  });
  const auto extractions = list_or<std::string>(f.extraction_list, f.base.extraction, [](const std::string& s) {
    parse_extraction(s);
    return s;
  });
  const auto clusters = list_or<bool>(f.cluster_list, f.base.cluster, parse_switch);

  const PointCloud src = load_point_cloud(f.src);
  const PointCloud tgt = load_point_cloud(f.tgt);
  const bool has_gt = src.has_gt_flow();

  const fs::path out_path = f.out;
  ensure_parent(out_path);
  std::ofstream csv(out_path);
  if (!csv) throw IoError("cannot open " + out_path.string() + " for writing");
  csv << "scene,pillar_size,m_neighbors,n_neighbors,extraction,temperature,cluster_fusion,latency_ms,"
         "mean_epe,fd,fs,bs,dynamic_normalized_epe\n";
  const std::string scene = fs::path(f.src).stem().string();

  std::size_t rows = 0;
  for (double pillar : pillars)
    for (std::size_t m : ms)
      for (std::size_t n : ns)
        for (const auto& extraction : extractions)
          for (double temperature : temps)
            for (bool cluster : clusters) {
              PipelineFlags p = f.base;
              p.pillar_size = pillar;
              p.m_neighbors = m;
              p.n_neighbors = n;
              p.extraction = extraction;
              p.temperature = temperature;
              p.cluster = cluster;
              const PipelineConfig cfg = make_config(p);
              cfg.validate();

              std::vector<double> latency;
              SceneFlowResult result;
              for (int r = 0; r < f.repeats; ++r) {
                const auto t0 = Clock::now();
                result = estimate_scene_flow(src, tgt, cfg);
                latency.push_back(ms_since(t0));
              }
              std::optional<double> mean_epe, fd, fs_, bs, dyn;
              if (has_gt) {
                const FlowField gt{src.gt_flow, cfg.frame_interval};
                const auto errors = epe(result.flow, gt);
                double sum = 0;
                for (double e : errors) sum += e;
                if (!errors.empty()) mean_epe = sum / static_cast<double>(errors.size());
                if (src.has_foreground()) {
                  const auto t = three_way_epe(result.flow, gt, src.is_foreground, cfg.frame_interval);
                  fd = t.foreground_dynamic.mean_epe;
                  fs_ = t.foreground_static.mean_epe;
                  bs = t.background_static.mean_epe;
                }
                if (src.has_class()) {
                  double total = 0;
                  int present = 0;
                  for (const auto& [cls, rep] :
                       bucketed_normalized_epe(result.flow, gt, src.class_id, cfg.frame_interval))
                    if (cls != 0 && rep.dynamic_normalized_epe) {
                      total += *rep.dynamic_normalized_epe;
                      ++present;
                    }
                  if (present > 0) dyn = total / present;
                }
              }
              const double lat = median(latency);
              csv << scene << ',' << general6(pillar) << ',' << m << ',' << n << ',' << extraction << ','
                  << general6(temperature) << ',' << (cluster ? "on" : "off") << ',' << fixed(lat, 3) << ','
                  << optional_cell(mean_epe) << ',' << optional_cell(fd) << ',' << optional_cell(fs_) << ','
                  << optional_cell(bs) << ',' << optional_cell(dyn) << '\n';
              ++rows;
              out << "pillar " << general6(pillar) << " M " << m << " N " << n << ' ' << extraction << " tau "
                  << general6(temperature) << " cluster " << (cluster ? "on" : "off") << ": " << fixed(lat, 1)
                  << " ms";
              if (mean_epe) out << ", mean EPE " << fixed(*mean_epe, 4);
              out << '\n';
            }
  csv.close();
  if (!csv) throw IoError("write to " + out_path.string() + " failed");

  const fs::path manifest = manifest_beside(out_path);
  auto list_json = [](const auto& v) { return json(v); };
  write_json(manifest, {{"command", "sweep"},
                        {"version", kVersion},
                        {"config",
                         {{"base", config_json(make_config(f.base))},
                          {"pillar_sizes", list_json(pillars)},
                          {"m_neighbors", list_json(ms)},
                          {"n_neighbors", list_json(ns)},
                          {"extractions", list_json(extractions)},
                          {"temperatures", list_json(temps)},
                          {"cluster_fusion", list_json(clusters)},
                          {"repeats", f.repeats}}},
                        {"inputs", {{"src", f.src}, {"tgt", f.tgt}}},
                        {"outputs", {{"csv", out_path.string()}, {"manifest", manifest.string()}, {"rows", rows}}},
                        {"timings_ms", {{"total", ms_since(t_start)}}}});
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pillar-based translation voting for LiDAR scene flow", "pillarvote"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  EstimateFlags est;
  auto* estimate = app.add_subcommand("estimate", "Estimate per-point flow between two scans");
  estimate->add_option("--src", est.src, "Source cloud (.csv or .vfpc)")->required();
  estimate->add_option("--tgt", est.tgt, "Target cloud (.csv or .vfpc)")->required();
  estimate->add_option("--out", est.out, "Flow CSV to write")->required();
  estimate->add_option("--src-features", est.src_features, "Per-pillar feature CSV for the source");
  estimate->add_option("--tgt-features", est.tgt_features, "Per-pillar feature CSV for the target");
  estimate->add_option("--dump-votes", est.dump_cells, "Dump the voting space of this source cell index");
  estimate->add_option("--dump-votes-cluster", est.dump_clusters, "Dump the fused voting space of a cluster");
  add_grid_flags(estimate, est.pipeline);
  add_vote_flags(estimate, est.pipeline);

  EvalFlags ev;
  auto* eval = app.add_subcommand("eval", "Score a predicted flow against ground truth");
  eval->add_option("--pred", ev.pred, "Flow CSV (dx,dy,dz)")->required();
  eval->add_option("--gt", ev.gt, "Cloud with fx,fy,fz and labels")->required();
  eval->add_option("--out", ev.out, "Report JSON to write")->required();
  eval->add_option("--mode", ev.mode, "three-way, bucketed or both")
      ->check(CLI::IsMember({"three-way", "bucketed", "both"}))
      ->capture_default_str();
  eval->add_option("--dt", ev.dt, "Frame interval in seconds")->capture_default_str();

  SynthFlags sy;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic scan pair with ground truth");
  synth->add_option("--out-dir", sy.out_dir, "Directory for the generated files")->required();
  synth->add_option("--preset", sy.preset, "identity, single-mover or standard")
      ->check(CLI::IsMember({"identity", "single-mover", "standard"}))
      ->capture_default_str();
  synth->add_option("--spec", sy.spec, "Scene JSON (overrides the preset)");
  synth->add_option("--seed", sy.seed, "Random seed")->capture_default_str();
  synth->add_option("--points", sy.points, "Background points (standard: total points)");
  synth->add_option("--translation", sy.translation, "Mover translation dx,dy (single-mover)")
      ->expected(2)
      ->delimiter(',');
  synth->add_option("--noise", sy.noise, "Gaussian position noise sigma in meters")->capture_default_str();
  synth->add_option("--format", sy.format, "csv or vfpc")
      ->check(CLI::IsMember({"csv", "vfpc"}))
      ->capture_default_str();

  SweepFlags sw;
  auto* sweep = app.add_subcommand("sweep", "Run estimate + eval over a parameter grid");
  sweep->add_option("--src", sw.src, "Source cloud with ground truth")->required();
  sweep->add_option("--tgt", sw.tgt, "Target cloud")->required();
  sweep->add_option("--out", sw.out, "Consolidated CSV to write")->required();
  sweep->add_option("--m-list", sw.m_list, "Comma-separated M values");
  sweep->add_option("--n-list", sw.n_list, "Comma-separated N values");
  sweep->add_option("--pillar-list", sw.pillar_list, "Comma-separated pillar sizes");
  sweep->add_option("--temperature-list", sw.temperature_list, "Comma-separated temperatures");
  sweep->add_option("--extraction-list", sw.extraction_list, "Comma-separated extraction modes");
  sweep->add_option("--cluster-list", sw.cluster_list, "Comma-separated on/off values");
  sweep->add_option("--repeats", sw.repeats, "Runs per combination; latency is the median")
      ->capture_default_str();
  add_grid_flags(sweep, sw.base);
  add_vote_flags(sweep, sw.base);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  }

  try {
    if (estimate->parsed()) return cmd_estimate(est, out);
    if (eval->parsed()) return cmd_eval(ev, out);
    if (synth->parsed()) return cmd_synth(sy, out);
    if (sweep->parsed()) return cmd_sweep(sw, out);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << '\n';
    return kContract;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kContract;
  }
  return kUsage;
}

}  // namespace pillarvote::cli
