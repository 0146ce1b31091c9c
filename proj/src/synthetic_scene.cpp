#include "pillarvote/synthetic_scene.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "pillarvote/error.hpp"

namespace pillarvote {

namespace {

struct Rect {
  double x_lo, x_hi, y_lo, y_hi;

  bool intersects(const Rect& o) const {
    return x_lo < o.x_hi && o.x_lo < x_hi && y_lo < o.y_hi && o.y_lo < y_hi;
  }
  Rect grown(double margin) const {
    return {x_lo - margin, x_hi + margin, y_lo - margin, y_hi + margin};
  }
};

Rect footprint(const MoverSpec& m, double dx, double dy) {
  return {m.center_x + dx - m.length / 2, m.center_x + dx + m.length / 2,
          m.center_y + dy - m.width / 2, m.center_y + dy + m.width / 2};
}

constexpr double kBaseHeight = 0.1;  // lowest point above the removed ground

// Uniform samples inside a box, half of them on the top and side faces.
template <typename Rng>
Vec3 sample_box(Rng& rng, double cx, double cy, double lx, double ly, double lz) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double u = unit(rng), v = unit(rng), w = unit(rng);
  if (unit(rng) < 0.5) {
    const double top = lx * ly, side_x = ly * lz, side_y = lx * lz;
    double pick = unit(rng) * (top + 2 * side_x + 2 * side_y);
    if (pick < top) {
      w = 1.0;
    } else if (pick < top + 2 * side_x) {
      u = pick < top + side_x ? 0.0 : 1.0;
    } else {
      v = pick < top + 2 * side_x + side_y ? 0.0 : 1.0;
    }
  }
  return {cx + (u - 0.5) * lx, cy + (v - 0.5) * ly, kBaseHeight + w * lz};
}

}  // namespace

std::size_t MoverSpec::point_count() const {
  return static_cast<std::size_t>(std::llround(density * length * width));
}

void SceneSpec::validate() const {
  auto fail = [](const std::string& msg) { throw ValidationError("scene spec: " + msg); };
  if (!(extent > 0)) fail("extent must be positive");
  if (!(noise_sigma >= 0)) fail("noise_sigma must be non-negative");
  if (!(max_translation >= 0)) fail("max_translation must be non-negative");
  if (!(frame_interval > 0)) fail("frame_interval must be positive");
  if (!(clearance >= 0)) fail("clearance must be non-negative");
  for (std::size_t i = 0; i < movers.size(); ++i) {
    const auto& m = movers[i];
    const std::string id = "mover " + std::to_string(i) + ": ";
    if (!(m.length > 0 && m.width > 0 && m.height >= 0)) fail(id + "box dimensions must be positive");
    if (!(m.density >= 0)) fail(id + "density must be non-negative");
    if (!(std::abs(m.translation_x) <= max_translation &&
          std::abs(m.translation_y) <= max_translation))
      fail(id + "translation exceeds max_translation");
    if (!std::isfinite(m.center_x) || !std::isfinite(m.center_y)) fail(id + "center must be finite");
  }
}

ScenePair generate_scene_pair(const SceneSpec& spec) {
  spec.validate();

  std::vector<Rect> keep_out;
  for (const auto& m : spec.movers) {
    keep_out.push_back(footprint(m, 0, 0).grown(spec.clearance));
    keep_out.push_back(footprint(m, m.translation_x, m.translation_y).grown(spec.clearance));
  }

  ScenePair pair;
  auto& src = pair.source;
  auto& tgt = pair.target;
  const double speed_threshold = 0.4 * spec.frame_interval;  // 0.4 m/s

  // Static background structures.
  if (spec.background_points > 0) {
    std::mt19937_64 rng(spec.background_seed);
    std::size_t structures = spec.background_structures;
    if (structures == 0) structures = std::max<std::size_t>(1, spec.background_points / 600);
    structures = std::min(structures, spec.background_points);
    std::uniform_real_distribution<double> side(0.4, 3.0), tall(0.3, 3.0);
    std::uniform_real_distribution<double> pos(-spec.extent, spec.extent);
    struct Structure {
      double cx, cy, lx, ly, lz;
    };
    std::vector<Structure> boxes;
    double total_area = 0;
    for (std::size_t s = 0; s < structures; ++s) {
      Structure b{0, 0, side(rng), side(rng), tall(rng)};
      // Rejection sampling; gives up on the clearance after many tries.
      for (int attempt = 0; attempt < 1000; ++attempt) {
        b.cx = std::clamp(pos(rng), -spec.extent + b.lx / 2, spec.extent - b.lx / 2);
        b.cy = std::clamp(pos(rng), -spec.extent + b.ly / 2, spec.extent - b.ly / 2);
        Rect r{b.cx - b.lx / 2, b.cx + b.lx / 2, b.cy - b.ly / 2, b.cy + b.ly / 2};
        if (std::none_of(keep_out.begin(), keep_out.end(),
                         [&](const Rect& k) { return k.intersects(r); }))
          break;
      }
      boxes.push_back(b);
      total_area += b.lx * b.ly;
    }
    // Points are shared in proportion to footprint area (cumulative rounding
    // keeps the total exact), so all structures have a similar density.
    const double total = static_cast<double>(spec.background_points);
    double cumulative_area = 0;
    std::size_t emitted = 0;
    for (const auto& b : boxes) {
      cumulative_area += b.lx * b.ly;
      const auto upto = static_cast<std::size_t>(std::llround(total * cumulative_area / total_area));
      const std::size_t count = std::min(upto, spec.background_points) - emitted;
      emitted += count;
      for (std::size_t i = 0; i < count; ++i) {
        Vec3 p = sample_box(rng, b.cx, b.cy, b.lx, b.ly, b.lz);
        src.points.push_back(p);
        src.gt_flow.push_back({});
        src.class_id.push_back(0);
        src.is_dynamic.push_back(0);
        src.is_foreground.push_back(0);
      }
    }
  }

  std::mt19937_64 rng(spec.rng_seed);
  for (const auto& m : spec.movers) {
    const Vec3 motion{m.translation_x, m.translation_y, 0.0};
    const bool dynamic = norm(motion) >= speed_threshold;
    const std::size_t count = m.point_count();
    for (std::size_t i = 0; i < count; ++i) {
      src.points.push_back(sample_box(rng, m.center_x, m.center_y, m.length, m.width, m.height));
      src.gt_flow.push_back(motion);
      src.class_id.push_back(m.class_id);
      src.is_dynamic.push_back(dynamic ? 1 : 0);
      src.is_foreground.push_back(1);
    }
  }

  tgt = src;
  for (std::size_t i = 0; i < tgt.size(); ++i) tgt.points[i] = src.points[i] + src.gt_flow[i];
  // Target labels describe the target points; its flow to a third frame is unknown.
  tgt.gt_flow.clear();

  if (spec.noise_sigma > 0) {
    std::mt19937_64 noise_rng(spec.rng_seed ^ 0x9E3779B97F4A7C15ull);
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    for (auto* cloud : {&src, &tgt})
      for (auto& p : cloud->points) p = p + Vec3{noise(noise_rng), noise(noise_rng), noise(noise_rng)};
  }

  pair.gt_flow.flows = src.gt_flow;
  pair.gt_flow.frame_interval = spec.frame_interval;
  return pair;
}

SceneSpec standard_scene_spec(std::uint64_t seed, std::size_t total_points) {
  SceneSpec spec;
  spec.rng_seed = seed;
  spec.background_seed = seed + 1;
  spec.noise_sigma = 0.0;

  struct Kind {
    double length, width, height, density;
    std::uint16_t class_id;
    int count;
  };
  // Roughly an urban frame: cars, pedestrians, cyclists.
  const Kind kinds[] = {{4.5, 1.9, 1.5, 60.0, 1, 12},
                        {0.6, 0.6, 1.7, 150.0, 2, 6},
                        {1.8, 0.6, 1.6, 100.0, 3, 6}};

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(-40.0, 40.0), unit(0.0, 1.0);
  std::vector<Rect> occupied;
  std::size_t mover_points = 0;
  for (const auto& kind : kinds) {
    for (int i = 0; i < kind.count; ++i) {
      MoverSpec m;
      m.length = kind.length;
      m.width = kind.width;
      m.height = kind.height;
      m.density = kind.density;
      m.class_id = kind.class_id;
      for (int attempt = 0; attempt < 1000; ++attempt) {
        m.center_x = pos(rng);
        m.center_y = pos(rng);
        // Every fourth mover stands still; the others move up to 2 m per frame.
        double speed = (i % 4 == 3) ? 0.0 : 0.2 + 1.8 * unit(rng);
        double heading = 2.0 * M_PI * unit(rng);
        m.translation_x = std::clamp(speed * std::cos(heading), -2.0, 2.0);
        m.translation_y = std::clamp(speed * std::sin(heading), -2.0, 2.0);
        Rect swept = footprint(m, 0, 0);
        Rect moved = footprint(m, m.translation_x, m.translation_y);
        swept = {std::min(swept.x_lo, moved.x_lo), std::max(swept.x_hi, moved.x_hi),
                 std::min(swept.y_lo, moved.y_lo), std::max(swept.y_hi, moved.y_hi)};
        swept = swept.grown(1.5);
        if (std::none_of(occupied.begin(), occupied.end(),
                         [&](const Rect& r) { return r.intersects(swept); })) {
          occupied.push_back(swept);
          break;
        }
      }
      mover_points += m.point_count();
      spec.movers.push_back(m);
    }
  }
  spec.background_points = total_points > mover_points ? total_points - mover_points : 0;
  spec.background_structures = 120;
  return spec;
}

nlohmann::json to_json(const SceneSpec& spec) {
  nlohmann::json movers = nlohmann::json::array();
  for (const auto& m : spec.movers)
    movers.push_back({{"length", m.length},
                      {"width", m.width},
                      {"height", m.height},
                      {"density", m.density},
                      {"center", {m.center_x, m.center_y}},
                      {"translation", {m.translation_x, m.translation_y}},
                      {"class", m.class_id}});
  return {{"extent", spec.extent},
          {"movers", movers},
          {"background_points", spec.background_points},
          {"background_seed", spec.background_seed},
          {"background_structures", spec.background_structures},
          {"clearance", spec.clearance},
          {"noise_sigma", spec.noise_sigma},
          {"rng_seed", spec.rng_seed},
          {"max_translation", spec.max_translation},
          {"frame_interval", spec.frame_interval}};
}

SceneSpec scene_spec_from_json(const nlohmann::json& j) {
  SceneSpec spec;
  try {
    spec.extent = j.value("extent", spec.extent);
    spec.background_points = j.value("background_points", spec.background_points);
    spec.background_seed = j.value("background_seed", spec.background_seed);
    spec.background_structures = j.value("background_structures", spec.background_structures);
    spec.clearance = j.value("clearance", spec.clearance);
    spec.noise_sigma = j.value("noise_sigma", spec.noise_sigma);
    spec.rng_seed = j.value("rng_seed", spec.rng_seed);
    spec.max_translation = j.value("max_translation", spec.max_translation);
    spec.frame_interval = j.value("frame_interval", spec.frame_interval);
    for (const auto& jm : j.value("movers", nlohmann::json::array())) {
      MoverSpec m;
      m.length = jm.value("length", m.length);
      m.width = jm.value("width", m.width);
      m.height = jm.value("height", m.height);
      m.density = jm.value("density", m.density);
      m.class_id = jm.value("class", m.class_id);
      if (jm.contains("center")) {
        m.center_x = jm.at("center").at(0).get<double>();
        m.center_y = jm.at("center").at(1).get<double>();
      }
      if (jm.contains("translation")) {
        m.translation_x = jm.at("translation").at(0).get<double>();
        m.translation_y = jm.at("translation").at(1).get<double>();
      }
      spec.movers.push_back(m);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("scene spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

}  // namespace pillarvote
