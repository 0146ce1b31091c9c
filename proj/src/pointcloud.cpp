#include "pillarvote/pointcloud.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <string>

#include "csv_util.hpp"
#include "pillarvote/error.hpp"

namespace pillarvote {

namespace {

template <typename T>
void check_aligned(const std::vector<T>& attr, std::size_t n, const char* name) {
  if (!attr.empty() && attr.size() != n)
    throw ValidationError(std::string("attribute '") + name + "' has " +
                          std::to_string(attr.size()) + " entries for " + std::to_string(n) +
                          " points");
}

// ---- CSV ------------------------------------------------------------------

enum Column { kX, kY, kZ, kFx, kFy, kFz, kClass, kDynamic, kForeground, kColumnCount };

constexpr std::array<std::string_view, kColumnCount> kColumnNames = {
    "x", "y", "z", "fx", "fy", "fz", "class", "dynamic", "foreground"};

PointCloud load_csv(const std::filesystem::path& path) {
  detail::CsvReader reader(path);
  std::vector<std::string_view> fields;
  if (!reader.next(fields)) reader.fail("missing header");

  std::array<int, kColumnCount> position;
  position.fill(-1);
  for (std::size_t i = 0; i < fields.size(); ++i) {
    auto it = std::find(kColumnNames.begin(), kColumnNames.end(), fields[i]);
    if (it == kColumnNames.end()) reader.fail("unknown column '" + std::string(fields[i]) + "'");
    auto col = static_cast<std::size_t>(it - kColumnNames.begin());
    if (position[col] >= 0) reader.fail("duplicate column '" + std::string(fields[i]) + "'");
    position[col] = static_cast<int>(i);
  }
  if (position[kX] < 0 || position[kY] < 0 || position[kZ] < 0)
    reader.fail("header must contain x,y,z");
  int flow_cols = (position[kFx] >= 0) + (position[kFy] >= 0) + (position[kFz] >= 0);
  if (flow_cols != 0 && flow_cols != 3) reader.fail("flow columns fx,fy,fz must appear together");

  PointCloud cloud;
  const std::size_t width = fields.size();
  auto flag = [&](std::string_view f) -> std::uint8_t {
    long long v = reader.parse_int(f);
    if (v != 0 && v != 1) reader.fail("boolean field must be 0 or 1");
    return static_cast<std::uint8_t>(v);
  };
  while (reader.next(fields)) {
    if (fields.size() != width)
      reader.fail("expected " + std::to_string(width) + " fields, got " +
                  std::to_string(fields.size()));
    Vec3 p{reader.parse_double(fields[position[kX]]), reader.parse_double(fields[position[kY]]),
           reader.parse_double(fields[position[kZ]])};
    if (!is_finite(p))
      throw ValidationError(path.string() + ":" + std::to_string(reader.line_number()) +
                            ": non-finite coordinate");
    cloud.points.push_back(p);
    if (flow_cols == 3)
      cloud.gt_flow.push_back({reader.parse_double(fields[position[kFx]]),
                               reader.parse_double(fields[position[kFy]]),
                               reader.parse_double(fields[position[kFz]])});
    if (position[kClass] >= 0) {
      long long c = reader.parse_int(fields[position[kClass]]);
      if (c < 0 || c > 0xFFFF) reader.fail("class out of range");
      cloud.class_id.push_back(static_cast<std::uint16_t>(c));
    }
    if (position[kDynamic] >= 0) cloud.is_dynamic.push_back(flag(fields[position[kDynamic]]));
    if (position[kForeground] >= 0)
      cloud.is_foreground.push_back(flag(fields[position[kForeground]]));
  }
  cloud.validate();
  return cloud;
}

void save_csv(const std::filesystem::path& path, const PointCloud& cloud) {
  std::FILE* f = detail::open_for_write(path);
  std::fputs("x,y,z", f);
  if (cloud.has_gt_flow()) std::fputs(",fx,fy,fz", f);
  if (cloud.has_class()) std::fputs(",class", f);
  if (cloud.has_dynamic()) std::fputs(",dynamic", f);
  if (cloud.has_foreground()) std::fputs(",foreground", f);
  std::fputc('\n', f);
  auto vec = [f](const Vec3& v) {
    detail::print_fixed6(f, v.x);
    std::fputc(',', f);
    detail::print_fixed6(f, v.y);
    std::fputc(',', f);
    detail::print_fixed6(f, v.z);
  };
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    vec(cloud.points[i]);
    if (cloud.has_gt_flow()) {
      std::fputc(',', f);
      vec(cloud.gt_flow[i]);
    }
    if (cloud.has_class()) std::fprintf(f, ",%u", static_cast<unsigned>(cloud.class_id[i]));
    if (cloud.has_dynamic()) std::fprintf(f, ",%u", static_cast<unsigned>(cloud.is_dynamic[i]));
    if (cloud.has_foreground())
      std::fprintf(f, ",%u", static_cast<unsigned>(cloud.is_foreground[i]));
    std::fputc('\n', f);
  }
  detail::close_checked(f, path);
}

// ---- VFPC binary ------------------------------------------------------------

constexpr char kMagic[4] = {'V', 'F', 'P', 'C'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kMaskFlow = 1u << 0;
constexpr std::uint32_t kMaskClass = 1u << 1;
constexpr std::uint32_t kMaskDynamic = 1u << 2;
constexpr std::uint32_t kMaskForeground = 1u << 3;

template <typename T>
T byteswap_if_needed(T v) {
  if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
    return v;
  } else {
    auto bytes = std::bit_cast<std::array<std::byte, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
}

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path) : path_(path), f_(detail::open_for_write(path, "wb")) {}
  template <typename T>
  void put(T v) {
    v = byteswap_if_needed(v);
    std::fwrite(&v, sizeof v, 1, f_);
  }
  void put_bytes(const char* data, std::size_t n) { std::fwrite(data, 1, n, f_); }
  void close() { detail::close_checked(f_, path_); }

 private:
  std::filesystem::path path_;
  std::FILE* f_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open " + path.string());
  }
  template <typename T>
  T get(const char* what) {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in_) fail(std::string("truncated file while reading ") + what);
    return byteswap_if_needed(v);
  }
  void get_bytes(char* out, std::size_t n, const char* what) {
    in_.read(out, static_cast<std::streamsize>(n));
    if (!in_) fail(std::string("truncated file while reading ") + what);
  }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(path_.string() + ": " + what);
  }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
};

PointCloud load_vfpc(const std::filesystem::path& path) {
  BinaryReader r(path);
  char magic[4];
  r.get_bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) r.fail("bad magic, expected VFPC");
  auto version = r.get<std::uint32_t>("version");
  if (version != kVersion) r.fail("unsupported version " + std::to_string(version));
  auto mask = r.get<std::uint32_t>("field mask");
  if ((mask & ~0xFu) != 0) r.fail("unknown bits in field mask " + std::to_string(mask));
  auto count = r.get<std::uint64_t>("point count");

  PointCloud cloud;
  cloud.points.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    float x = r.get<float>("coordinates"), y = r.get<float>("coordinates"),
          z = r.get<float>("coordinates");
    cloud.points[i] = {x, y, z};
    if (!is_finite(cloud.points[i]))
      throw ValidationError(path.string() + ": point " + std::to_string(i) +
                            " has a non-finite coordinate");
  }
  if (mask & kMaskFlow) {
    cloud.gt_flow.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      float x = r.get<float>("flows"), y = r.get<float>("flows"), z = r.get<float>("flows");
      cloud.gt_flow[i] = {x, y, z};
    }
  }
  if (mask & kMaskClass) {
    cloud.class_id.resize(count);
    for (auto& c : cloud.class_id) c = r.get<std::uint16_t>("class");
  }
  auto read_flags = [&](std::vector<std::uint8_t>& out, const char* what) {
    out.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      out[i] = r.get<std::uint8_t>(what);
      if (out[i] > 1) r.fail(std::string(what) + " flag of point " + std::to_string(i) + " is not 0/1");
    }
  };
  if (mask & kMaskDynamic) read_flags(cloud.is_dynamic, "dynamic");
  if (mask & kMaskForeground) read_flags(cloud.is_foreground, "foreground");
  if (!r.at_end()) r.fail("trailing bytes after last field");
  cloud.validate();
  return cloud;
}

void save_vfpc(const std::filesystem::path& path, const PointCloud& cloud) {
  BinaryWriter w(path);
  w.put_bytes(kMagic, 4);
  w.put(kVersion);
  std::uint32_t mask = (cloud.has_gt_flow() ? kMaskFlow : 0) | (cloud.has_class() ? kMaskClass : 0) |
                       (cloud.has_dynamic() ? kMaskDynamic : 0) |
                       (cloud.has_foreground() ? kMaskForeground : 0);
  w.put(mask);
  w.put(static_cast<std::uint64_t>(cloud.size()));
  auto put_vec = [&w](const Vec3& v) {
    w.put(static_cast<float>(v.x));
    w.put(static_cast<float>(v.y));
    w.put(static_cast<float>(v.z));
  };
  for (const auto& p : cloud.points) put_vec(p);
  for (const auto& f : cloud.gt_flow) put_vec(f);
  for (auto c : cloud.class_id) w.put(c);
  for (auto d : cloud.is_dynamic) w.put(d);
  for (auto g : cloud.is_foreground) w.put(g);
  w.close();
}

}  // namespace

void PointCloud::validate() const {
  const std::size_t n = points.size();
  for (std::size_t i = 0; i < n; ++i)
    if (!is_finite(points[i]))
      throw ValidationError("point " + std::to_string(i) + " has a non-finite coordinate");
  check_aligned(gt_flow, n, "gt_flow");
  check_aligned(class_id, n, "class");
  check_aligned(is_dynamic, n, "dynamic");
  check_aligned(is_foreground, n, "foreground");
  for (std::size_t i = 0; i < gt_flow.size(); ++i)
    if (!is_finite(gt_flow[i]))
      throw ValidationError("gt_flow " + std::to_string(i) + " is non-finite");
}

void FlowField::validate() const {
  if (!(frame_interval > 0.0) || !std::isfinite(frame_interval))
    throw ValidationError("frame interval must be positive");
  for (std::size_t i = 0; i < flows.size(); ++i)
    if (!is_finite(flows[i])) throw ValidationError("flow " + std::to_string(i) + " is non-finite");
}

CloudFormat format_from_path(const std::filesystem::path& path) {
  return path.extension() == ".vfpc" ? CloudFormat::kVfpc : CloudFormat::kCsv;
}

PointCloud load_point_cloud(const std::filesystem::path& path, CloudFormat format) {
  return format == CloudFormat::kVfpc ? load_vfpc(path) : load_csv(path);
}

void save_point_cloud(const std::filesystem::path& path, const PointCloud& cloud,
                      CloudFormat format) {
  cloud.validate();
  if (format == CloudFormat::kVfpc)
    save_vfpc(path, cloud);
  else
    save_csv(path, cloud);
}

void save_flow(const std::filesystem::path& path, const FlowField& flow) {
  flow.validate();
  std::FILE* f = detail::open_for_write(path);
  std::fputs("dx,dy,dz\n", f);
  for (const auto& v : flow.flows) {
    detail::print_fixed6(f, v.x);
    std::fputc(',', f);
    detail::print_fixed6(f, v.y);
    std::fputc(',', f);
    detail::print_fixed6(f, v.z);
    std::fputc('\n', f);
  }
  detail::close_checked(f, path);
}

FlowField load_flow(const std::filesystem::path& path, double frame_interval) {
  detail::CsvReader reader(path);
  std::vector<std::string_view> fields;
  if (!reader.next(fields) || fields.size() != 3 || fields[0] != "dx" || fields[1] != "dy" ||
      fields[2] != "dz")
    reader.fail("expected header dx,dy,dz");
  FlowField flow;
  flow.frame_interval = frame_interval;
  while (reader.next(fields)) {
    if (fields.size() != 3) reader.fail("expected 3 fields");
    flow.flows.push_back({reader.parse_double(fields[0]), reader.parse_double(fields[1]),
                          reader.parse_double(fields[2])});
  }
  flow.validate();
  return flow;
}

std::vector<std::uint8_t> load_mask(const std::filesystem::path& path) {
  detail::CsvReader reader(path);
  std::vector<std::string_view> fields;
  if (!reader.next(fields) || fields.size() != 1 || fields[0] != "dynamic")
    reader.fail("expected header dynamic");
  std::vector<std::uint8_t> mask;
  while (reader.next(fields)) {
    if (fields.size() != 1) reader.fail("expected 1 field");
    long long v = reader.parse_int(fields[0]);
    if (v != 0 && v != 1) reader.fail("mask value must be 0 or 1");
    mask.push_back(static_cast<std::uint8_t>(v));
  }
  return mask;
}

void save_mask(const std::filesystem::path& path, const std::vector<std::uint8_t>& mask) {
  std::FILE* f = detail::open_for_write(path);
  std::fputs("dynamic\n", f);
  for (auto m : mask) std::fprintf(f, "%u\n", m ? 1u : 0u);
  detail::close_checked(f, path);
}

PointCloud apply_flow(const PointCloud& cloud, const FlowField& flow) {
  require(cloud.size() == flow.size(), "apply_flow: cloud has " + std::to_string(cloud.size()) +
                                           " points but flow has " + std::to_string(flow.size()));
  PointCloud out = cloud;
  for (std::size_t i = 0; i < out.size(); ++i) out.points[i] = cloud.points[i] + flow.flows[i];
  return out;
}

}  // namespace pillarvote
