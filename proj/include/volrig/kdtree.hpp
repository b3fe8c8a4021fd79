#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <queue>
#include <utility>
#include <vector>

namespace volrig {

/// Static 3D kd-tree over a point set. Queries break distance ties by the
/// smaller point index so results do not depend on build order.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(std::vector<Eigen::Vector3d> points) : points_(std::move(points)) {
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0);
    if (!points_.empty()) build(0, points_.size(), 0);
  }

  std::size_t size() const { return points_.size(); }
  const Eigen::Vector3d& point(std::size_t i) const { return points_[i]; }

  /// Index of the nearest point; requires a nonempty tree.
  std::size_t nearest(const Eigen::Vector3d& q) const {
    Best best{std::numeric_limits<double>::infinity(), std::numeric_limits<std::size_t>::max()};
    nearest_rec(0, points_.size(), q, best);
    return best.index;
  }

  /// The k nearest points ordered by (distance, index).
  std::vector<std::size_t> knn(const Eigen::Vector3d& q, std::size_t k) const {
    k = std::min(k, points_.size());
    std::priority_queue<Best> heap;  // max-heap on (dist, index)
    if (k > 0) knn_rec(0, points_.size(), q, k, heap);
    std::vector<std::size_t> out(heap.size());
    for (std::size_t i = out.size(); i-- > 0;) {
      out[i] = heap.top().index;
      heap.pop();
    }
    return out;
  }

 private:
  struct Best {
    double d2;
    std::size_t index;
    bool operator<(const Best& o) const { return d2 < o.d2 || (d2 == o.d2 && index < o.index); }
  };
  struct Split {
    int axis;
    double value;
  };

  static bool better(double d2, std::size_t idx, const Best& b) {
    return d2 < b.d2 || (d2 == b.d2 && idx < b.index);
  }

  void build(std::size_t lo, std::size_t hi, int depth) {
    if (hi - lo <= kLeaf) return;
    Eigen::Vector3d mn = points_[order_[lo]], mx = mn;
    for (std::size_t i = lo; i < hi; ++i) {
      mn = mn.cwiseMin(points_[order_[i]]);
      mx = mx.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (mx - mn).maxCoeff(&axis);
    const std::size_t mid = (lo + hi) / 2;
    std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi,
                     [&](std::size_t a, std::size_t b) {
                       const double pa = points_[a][axis], pb = points_[b][axis];
                       return pa < pb || (pa == pb && a < b);
                     });
    splits_.resize(std::max(splits_.size(), mid + 1));
    splits_[mid] = {axis, points_[order_[mid]][axis]};
    build(lo, mid, depth + 1);
    build(mid, hi, depth + 1);
  }

  void nearest_rec(std::size_t lo, std::size_t hi, const Eigen::Vector3d& q, Best& best) const {
    if (hi - lo <= kLeaf) {
      for (std::size_t i = lo; i < hi; ++i) {
        const std::size_t idx = order_[i];
        const double d2 = (points_[idx] - q).squaredNorm();
        if (better(d2, idx, best)) best = {d2, idx};
      }
      return;
    }
    const std::size_t mid = (lo + hi) / 2;
    const Split s = splits_[mid];
    const double diff = q[s.axis] - s.value;
    if (diff < 0) {
      nearest_rec(lo, mid, q, best);
      if (diff * diff <= best.d2) nearest_rec(mid, hi, q, best);
    } else {
      nearest_rec(mid, hi, q, best);
      if (diff * diff <= best.d2) nearest_rec(lo, mid, q, best);
    }
  }

  void knn_rec(std::size_t lo, std::size_t hi, const Eigen::Vector3d& q, std::size_t k,
               std::priority_queue<Best>& heap) const {
    if (hi - lo <= kLeaf) {
      for (std::size_t i = lo; i < hi; ++i) {
        const std::size_t idx = order_[i];
        const Best cand{(points_[idx] - q).squaredNorm(), idx};
        if (heap.size() < k) {
          heap.push(cand);
        } else if (cand < heap.top()) {
          heap.pop();
          heap.push(cand);
        }
      }
      return;
    }
    const std::size_t mid = (lo + hi) / 2;
    const Split s = splits_[mid];
    const double diff = q[s.axis] - s.value;
    const bool left_first = diff < 0;
    if (left_first) knn_rec(lo, mid, q, k, heap); else knn_rec(mid, hi, q, k, heap);
    if (heap.size() < k || diff * diff <= heap.top().d2) {
      if (left_first) knn_rec(mid, hi, q, k, heap); else knn_rec(lo, mid, q, k, heap);
    }
  }

  static constexpr std::size_t kLeaf = 8;
  std::vector<Eigen::Vector3d> points_;
  std::vector<std::size_t> order_;
  std::vector<Split> splits_;
};

}  // namespace volrig
