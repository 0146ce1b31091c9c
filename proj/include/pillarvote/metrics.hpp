#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "pillarvote/pointcloud.hpp"

namespace pillarvote {

// Points moving at or above this speed count as dynamic.
inline constexpr double kDynamicSpeed = 0.4;  // m/s
inline constexpr double kBucketWidth = 0.4;   // m/s
inline constexpr double kLastBucketStart = 20.0;

// Per-point |pred - gt|. Throws ContractError on length mismatch.
std::vector<double> epe(const FlowField& pred, const FlowField& gt);

struct CategoryEpe {
  std::optional<double> mean_epe;  // nullopt when the category is empty
  std::size_t count = 0;
  friend bool operator==(const CategoryEpe&, const CategoryEpe&) = default;
};

// FD/FS/BS split. Background points are all in BS; the dynamic ones among
// them are also reported on their own as BD for label-noise inspection.
struct ThreeWayEpe {
  CategoryEpe foreground_dynamic;
  CategoryEpe foreground_static;
  CategoryEpe background_static;
  CategoryEpe background_dynamic;
  friend bool operator==(const ThreeWayEpe&, const ThreeWayEpe&) = default;
};

ThreeWayEpe three_way_epe(const FlowField& pred, const FlowField& gt,
                          std::span<const std::uint8_t> is_foreground, double frame_interval);

struct SpeedBucket {
  double speed_min = 0;                // m/s, inclusive
  std::optional<double> speed_max;     // exclusive; nullopt for the open last bucket
  double mean_epe = 0;                 // meters
  double mean_speed = 0;               // m/s of the ground truth
  double normalized_epe = 0;           // mean epe / mean gt flow magnitude
  std::size_t count = 0;
  friend bool operator==(const SpeedBucket&, const SpeedBucket&) = default;
};

struct ClassReport {
  std::optional<double> static_epe;              // meters
  std::size_t static_count = 0;
  std::optional<double> dynamic_normalized_epe;  // unweighted mean over non-empty buckets
  std::size_t dynamic_count = 0;
  std::vector<SpeedBucket> buckets;              // non-empty buckets, ascending speed
  friend bool operator==(const ClassReport&, const ClassReport&) = default;
};

std::map<std::uint16_t, ClassReport> bucketed_normalized_epe(const FlowField& pred, const FlowField& gt,
                                                             std::span<const std::uint16_t> class_ids,
                                                             double frame_interval);

struct EvalReport {
  std::optional<ThreeWayEpe> three_way;
  std::optional<std::map<std::uint16_t, ClassReport>> bucketed;
  std::size_t points = 0;
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

// JSON with keys "three_way", "bucketed", "counts"; six significant digits,
// absent categories as null, keys sorted.
void write_report(const EvalReport& report, const std::filesystem::path& path);
EvalReport read_report(const std::filesystem::path& path);

// Rounds every real in the report to six significant digits, matching what
// write_report stores.
EvalReport rounded(const EvalReport& report);

}  // namespace pillarvote
