#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace pillarvote {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend Vec3 operator+(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(double s, const Vec3& a) { return {s * a.x, s * a.y, s * a.z}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

inline double squared_norm(const Vec3& v) { return v.x * v.x + v.y * v.y + v.z * v.z; }
inline double norm(const Vec3& v) { return std::sqrt(squared_norm(v)); }
inline bool is_finite(const Vec3& v) {
  return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
}

// An ordered LiDAR scan. Optional per-point attributes are either empty
// (absent) or hold exactly one entry per point.
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> gt_flow;           // meters per frame interval
  std::vector<std::uint16_t> class_id; // 0 = background
  std::vector<std::uint8_t> is_dynamic;
  std::vector<std::uint8_t> is_foreground;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_gt_flow() const { return !gt_flow.empty(); }
  bool has_class() const { return !class_id.empty(); }
  bool has_dynamic() const { return !is_dynamic.empty(); }
  bool has_foreground() const { return !is_foreground.empty(); }

  // Throws ValidationError on non-finite values or misaligned attributes.
  void validate() const;
};

inline constexpr double kDefaultFrameInterval = 0.1;  // seconds, 10 Hz

struct FlowField {
  std::vector<Vec3> flows;
  double frame_interval = kDefaultFrameInterval;

  std::size_t size() const { return flows.size(); }
  void validate() const;
};

enum class CloudFormat { kCsv, kVfpc };

// Picks kVfpc for a ".vfpc" extension, kCsv otherwise.
CloudFormat format_from_path(const std::filesystem::path& path);

PointCloud load_point_cloud(const std::filesystem::path& path, CloudFormat format);
inline PointCloud load_point_cloud(const std::filesystem::path& path) {
  return load_point_cloud(path, format_from_path(path));
}
void save_point_cloud(const std::filesystem::path& path, const PointCloud& cloud,
                      CloudFormat format);
inline void save_point_cloud(const std::filesystem::path& path, const PointCloud& cloud) {
  save_point_cloud(path, cloud, format_from_path(path));
}

// Flow CSV: header "dx,dy,dz", six decimals per component.
void save_flow(const std::filesystem::path& path, const FlowField& flow);
FlowField load_flow(const std::filesystem::path& path,
                    double frame_interval = kDefaultFrameInterval);

// Mask CSV: header "dynamic", one 0/1 row per point.
std::vector<std::uint8_t> load_mask(const std::filesystem::path& path);
void save_mask(const std::filesystem::path& path, const std::vector<std::uint8_t>& mask);

PointCloud apply_flow(const PointCloud& cloud, const FlowField& flow);

}  // namespace pillarvote
