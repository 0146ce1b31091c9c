#include "pillarvote/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>

#include <json.hpp>

#include "pillarvote/error.hpp"

namespace pillarvote {

namespace {

using nlohmann::json;

struct Mean {
  double sum = 0;
  std::size_t count = 0;
  void add(double v) {
    sum += v;
    ++count;
  }
  std::optional<double> value() const {
    if (count == 0) return std::nullopt;
    return sum / static_cast<double>(count);
  }
};

// Speeds come from a division by the frame interval (0.04 / 0.1 < 0.4 in
// doubles), so thresholds get a relative slack of a few ulps.
constexpr double kSpeedSlack = 1e-9;

bool is_dynamic_speed(double speed) { return speed >= kDynamicSpeed * (1 - kSpeedSlack); }

int bucket_of(double speed) {
  return static_cast<int>(std::floor((speed - kDynamicSpeed) / kBucketWidth + kSpeedSlack));
}

CategoryEpe category(const Mean& m) { return {m.value(), m.count}; }

double round6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return std::strtod(buf, nullptr) + 0.0;
}

std::optional<double> round6(std::optional<double> v) {
  if (!v) return v;
  return round6(*v);
}

json number_or_null(std::optional<double> v) { return v ? json(round6(*v)) : json(nullptr); }

std::optional<double> optional_number(const json& j, const char* key) {
  const json& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

}  // namespace

std::vector<double> epe(const FlowField& pred, const FlowField& gt) {
  require(pred.size() == gt.size(), "epe: prediction has " + std::to_string(pred.size()) +
                                        " flows but ground truth has " + std::to_string(gt.size()));
  std::vector<double> out(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) out[i] = norm(pred.flows[i] - gt.flows[i]);
  return out;
}

ThreeWayEpe three_way_epe(const FlowField& pred, const FlowField& gt,
                          std::span<const std::uint8_t> is_foreground, double frame_interval) {
  require(frame_interval > 0, "three_way_epe: frame interval must be positive");
  require(is_foreground.size() == gt.size(), "three_way_epe: foreground labels are not aligned");
  const std::vector<double> errors = epe(pred, gt);
  Mean fd, fs, bs, bd;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    const bool dynamic = is_dynamic_speed(norm(gt.flows[i]) / frame_interval);
    if (is_foreground[i]) {
      (dynamic ? fd : fs).add(errors[i]);
    } else {
      bs.add(errors[i]);
      if (dynamic) bd.add(errors[i]);
    }
  }
  return {category(fd), category(fs), category(bs), category(bd)};
}

std::map<std::uint16_t, ClassReport> bucketed_normalized_epe(const FlowField& pred, const FlowField& gt,
                                                             std::span<const std::uint16_t> class_ids,
                                                             double frame_interval) {
  require(frame_interval > 0, "bucketed_normalized_epe: frame interval must be positive");
  require(class_ids.size() == gt.size(), "bucketed_normalized_epe: class labels are not aligned");
  const std::vector<double> errors = epe(pred, gt);
  constexpr int kBuckets = static_cast<int>((kLastBucketStart - kDynamicSpeed) / kBucketWidth + 0.5) + 1;

  struct Accumulator {
    Mean static_epe;
    std::vector<Mean> bucket_epe = std::vector<Mean>(kBuckets);
    std::vector<Mean> bucket_magnitude = std::vector<Mean>(kBuckets);
  };
  std::map<std::uint16_t, Accumulator> acc;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    Accumulator& a = acc[class_ids[i]];
    const double magnitude = norm(gt.flows[i]);
    const double speed = magnitude / frame_interval;
    if (!is_dynamic_speed(speed)) {
      a.static_epe.add(errors[i]);
      continue;
    }
    int b = bucket_of(speed);
    b = std::clamp(b, 0, kBuckets - 1);
    a.bucket_epe[static_cast<std::size_t>(b)].add(errors[i]);
    a.bucket_magnitude[static_cast<std::size_t>(b)].add(magnitude);
  }

  std::map<std::uint16_t, ClassReport> out;
  for (const auto& [cls, a] : acc) {
    ClassReport r;
    r.static_epe = a.static_epe.value();
    r.static_count = a.static_epe.count;
    Mean normalized;
    for (int b = 0; b < kBuckets; ++b) {
      const Mean& e = a.bucket_epe[static_cast<std::size_t>(b)];
      if (e.count == 0) continue;
      const Mean& m = a.bucket_magnitude[static_cast<std::size_t>(b)];
      SpeedBucket bucket;
      bucket.speed_min = kDynamicSpeed + kBucketWidth * b;
      if (b + 1 < kBuckets) bucket.speed_max = kDynamicSpeed + kBucketWidth * (b + 1);
      bucket.mean_epe = *e.value();
      bucket.mean_speed = *m.value() / frame_interval;
      bucket.normalized_epe = *e.value() / *m.value();
      bucket.count = e.count;
      r.dynamic_count += e.count;
      normalized.add(bucket.normalized_epe);
      r.buckets.push_back(bucket);
    }
    r.dynamic_normalized_epe = normalized.value();
    out.emplace(cls, std::move(r));
  }
  return out;
}

EvalReport rounded(const EvalReport& report) {
  EvalReport r = report;
  if (r.three_way) {
    for (CategoryEpe* c : {&r.three_way->foreground_dynamic, &r.three_way->foreground_static,
                           &r.three_way->background_static, &r.three_way->background_dynamic})
      c->mean_epe = round6(c->mean_epe);
  }
  if (r.bucketed) {
    for (auto& [cls, c] : *r.bucketed) {
      c.static_epe = round6(c.static_epe);
      c.dynamic_normalized_epe = round6(c.dynamic_normalized_epe);
      for (auto& b : c.buckets) {
        b.speed_min = round6(b.speed_min);
        b.speed_max = round6(b.speed_max);
        b.mean_epe = round6(b.mean_epe);
        b.mean_speed = round6(b.mean_speed);
        b.normalized_epe = round6(b.normalized_epe);
      }
    }
  }
  return r;
}

void write_report(const EvalReport& report, const std::filesystem::path& path) {
  json j;
  json counts = {{"points", report.points}};
  if (report.three_way) {
    const ThreeWayEpe& t = *report.three_way;
    j["three_way"] = {{"FD", number_or_null(t.foreground_dynamic.mean_epe)},
                      {"FS", number_or_null(t.foreground_static.mean_epe)},
                      {"BS", number_or_null(t.background_static.mean_epe)},
                      {"BD", number_or_null(t.background_dynamic.mean_epe)}};
    counts["three_way"] = {{"FD", t.foreground_dynamic.count},
                           {"FS", t.foreground_static.count},
                           {"BS", t.background_static.count},
                           {"BD", t.background_dynamic.count}};
  } else {
    j["three_way"] = nullptr;
  }
  if (report.bucketed) {
    json classes = json::object();
    json class_counts = json::object();
    for (const auto& [cls, c] : *report.bucketed) {
      json buckets = json::array();
      for (const auto& b : c.buckets)
        buckets.push_back({{"speed_min", round6(b.speed_min)},
                           {"speed_max", number_or_null(b.speed_max)},
                           {"mean_epe", round6(b.mean_epe)},
                           {"mean_speed", round6(b.mean_speed)},
                           {"normalized_epe", round6(b.normalized_epe)},
                           {"count", b.count}});
      const std::string key = std::to_string(cls);
      classes[key] = {{"static_epe", number_or_null(c.static_epe)},
                      {"dynamic_normalized_epe", number_or_null(c.dynamic_normalized_epe)},
                      {"buckets", buckets}};
      class_counts[key] = {{"static", c.static_count}, {"dynamic", c.dynamic_count}};
    }
    j["bucketed"] = classes;
    counts["classes"] = class_counts;
  } else {
    j["bucketed"] = nullptr;
  }
  j["counts"] = counts;

  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("error writing " + path.string());
}

EvalReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  EvalReport r;
  try {
    const json j = json::parse(in);
    const json& counts = j.at("counts");
    r.points = counts.at("points").get<std::size_t>();
    if (!j.at("three_way").is_null()) {
      const json& t = j.at("three_way");
      const json& tc = counts.at("three_way");
      r.three_way = ThreeWayEpe{{optional_number(t, "FD"), tc.at("FD").get<std::size_t>()},
                                {optional_number(t, "FS"), tc.at("FS").get<std::size_t>()},
                                {optional_number(t, "BS"), tc.at("BS").get<std::size_t>()},
                                {optional_number(t, "BD"), tc.at("BD").get<std::size_t>()}};
    }
    if (!j.at("bucketed").is_null()) {
      std::map<std::uint16_t, ClassReport> classes;
      for (const auto& [key, c] : j.at("bucketed").items()) {
        ClassReport report;
        report.static_epe = optional_number(c, "static_epe");
        report.dynamic_normalized_epe = optional_number(c, "dynamic_normalized_epe");
        const json& cc = counts.at("classes").at(key);
        report.static_count = cc.at("static").get<std::size_t>();
        report.dynamic_count = cc.at("dynamic").get<std::size_t>();
        for (const auto& b : c.at("buckets")) {
          SpeedBucket bucket;
          bucket.speed_min = b.at("speed_min").get<double>();
          bucket.speed_max = optional_number(b, "speed_max");
          bucket.mean_epe = b.at("mean_epe").get<double>();
          bucket.mean_speed = b.at("mean_speed").get<double>();
          bucket.normalized_epe = b.at("normalized_epe").get<double>();
          bucket.count = b.at("count").get<std::size_t>();
          report.buckets.push_back(bucket);
        }
        classes.emplace(static_cast<std::uint16_t>(std::stoi(key)), std::move(report));
      }
      r.bucketed = std::move(classes);
    }
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return r;
}

}  // namespace pillarvote
