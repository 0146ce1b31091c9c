#pragma once

// Static 3D k-d tree answering exact nearest squared distances. Internal.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "pillarvote/pointcloud.hpp"

namespace pillarvote::detail {

class KdTree3 {
 public:
  explicit KdTree3(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
    order_.resize(points_.size());
    for (std::uint32_t i = 0; i < order_.size(); ++i) order_[i] = i;
    if (!points_.empty()) build(0, static_cast<std::uint32_t>(order_.size()));
  }

  // Smallest squared_norm(query - p) over all points; +inf when empty.
  double nearest_sq(const Vec3& query) const {
    double best = std::numeric_limits<double>::infinity();
    if (!nodes_.empty()) search(0, query, best);
    return best;
  }

 private:
  static constexpr std::uint32_t kLeafSize = 12;

  struct Node {
    std::uint32_t begin, end;  // range in order_
    std::uint32_t left = 0, right = 0;
    int axis = -1;  // -1 for leaves
    double split = 0;
  };

  static double coord(const Vec3& p, int axis) { return axis == 0 ? p.x : axis == 1 ? p.y : p.z; }

  std::uint32_t build(std::uint32_t begin, std::uint32_t end) {
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back({begin, end});
    if (end - begin <= kLeafSize) return id;
    Vec3 lo = points_[order_[begin]], hi = lo;
    for (std::uint32_t i = begin; i < end; ++i) {
      const Vec3& p = points_[order_[i]];
      lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
      hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
    }
    const Vec3 span = hi - lo;
    const int axis = span.x >= span.y && span.x >= span.z ? 0 : (span.y >= span.z ? 1 : 2);
    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                       return coord(points_[a], axis) < coord(points_[b], axis);
                     });
    const double split = coord(points_[order_[mid]], axis);
    const std::uint32_t left = build(begin, mid);
    const std::uint32_t right = build(mid, end);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  // Left subtree holds coordinates <= split, right subtree >= split.
  void search(std::uint32_t id, const Vec3& q, double& best) const {
    const Node& node = nodes_[id];
    if (node.axis < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i)
        best = std::min(best, squared_norm(q - points_[order_[i]]));
      return;
    }
    const double diff = coord(q, node.axis) - node.split;
    const std::uint32_t near = diff <= 0 ? node.left : node.right;
    const std::uint32_t far = diff <= 0 ? node.right : node.left;
    search(near, q, best);
    if (diff * diff <= best) search(far, q, best);
  }

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace pillarvote::detail
