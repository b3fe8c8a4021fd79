#pragma once

#include "volrig/mesh.hpp"
#include "volrig/ops.hpp"
#include "volrig/random.hpp"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace volrig::test {

/// Fresh, empty scratch directory.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  const auto p = std::filesystem::temp_directory_path() / ("volrig_" + tag + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline nn::Tensor64 random64(const nn::Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool grad = true) {
  std::vector<double> v(nn::numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return nn::Tensor64::from(shape, std::move(v), grad);
}

/// Contracts an output with fixed random weights so every output element carries gradient.
inline nn::Tensor64 project(const nn::Tensor64& out, std::uint64_t seed = 99) {
  Rng rng(seed);
  auto w = random64(out.shape(), rng, -1.0, 1.0, false);
  return nn::sum(nn::mul(out, w));
}

/// Largest norm-wise relative error ||analytic - numeric|| / max(||analytic||, ||numeric||)
/// over the leaves, with central differences of step eps.
inline double gradient_error(std::vector<nn::Tensor64> leaves, const std::function<nn::Tensor64()>& loss,
                             double eps = 1e-6) {
  for (auto& l : leaves) l.zero_grad();
  nn::backward(loss());
  double worst = 0.0;
  for (auto& l : leaves) {
    const std::vector<double> analytic(l.grad().begin(), l.grad().end());
    std::vector<double> numeric(analytic.size());
    auto v = l.mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      nn::NoGradGuard guard;
      const double x = v[i];
      v[i] = x + eps;
      const double up = loss().item();
      v[i] = x - eps;
      const double down = loss().item();
      v[i] = x;
      numeric[i] = (up - down) / (2.0 * eps);
    }
    double diff = 0.0, na = 0.0, nn_ = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
      na += analytic[i] * analytic[i];
      nn_ += numeric[i] * numeric[i];
    }
    const double scale = std::max({std::sqrt(na), std::sqrt(nn_), 1e-12});
    worst = std::max(worst, std::sqrt(diff) / scale);
  }
  return worst;
}

/// Expected (layer, shape) rows of a forward trace for resolution r and the default widths.
inline std::vector<std::pair<std::string, nn::Shape>> expected_layer_shapes(int r, int modules) {
  std::vector<std::pair<std::string, nn::Shape>> rows;
  auto row = [&](const std::string& name, int d, int c) { rows.push_back({name, {d, d, d, c}}); };
  row("input", r, 5);
  row("pre.conv", r, 8);
  row("pre.res", r, 8);
  for (int m = 0; m < modules; ++m) {
    const std::string p = "stack." + std::to_string(m);
    const int in = m == 0 ? 8 : 10;
    if (m > 0) row(p + ".input", r, 10);
    row(p + ".down1", r / 2, in);
    row(p + ".enc1", r / 2, 16);
    row(p + ".down2", r / 4, 16);
    row(p + ".enc2", r / 4, 24);
    row(p + ".down3", r / 8, 24);
    row(p + ".enc3", r / 8, 36);
    row(p + ".concat_granularity", r / 8, 40);
    row(p + ".bottleneck", r / 8, 40);
    row(p + ".dec3", r / 8, 36);
    row(p + ".up3", r / 4, 24);
    row(p + ".dec2", r / 4, 24);
    row(p + ".up2", r / 2, 16);
    row(p + ".dec1", r / 2, 16);
    row(p + ".up1", r, 8);
    for (const char* b : {".joint", ".bone"}) {
      row(p + b + ".res", r, 4);
      row(p + b + ".reduce", r, 4);
      row(p + b + ".out", r, 1);
      row(p + b, r, 1);
    }
  }
  return rows;
}

/// Minimum total cost over all labeled spanning trees of the complete graph, enumerated
/// through Pruefer sequences. Weights are summed in ascending order, as tree_cost does.
inline double brute_force_mst_cost(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  if (n <= 1) return 0.0;
  if (n == 2) return cost[0][1];
  std::vector<int> seq(n - 2, 0);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    std::vector<int> degree(n, 1);
    for (int v : seq) ++degree[v];
    std::vector<std::pair<int, int>> edges;
    for (int v : seq) {
      int leaf = 0;
      while (degree[leaf] != 1) ++leaf;
      edges.emplace_back(std::min(leaf, v), std::max(leaf, v));
      --degree[leaf];
      --degree[v];
    }
    int u = -1, w = -1;
    for (int i = 0; i < n; ++i)
      if (degree[i] == 1) (u < 0 ? u : w) = i;
    edges.emplace_back(u, w);
    std::vector<double> weights;
    for (const auto& [a, b] : edges) weights.push_back(cost[a][b]);
    std::sort(weights.begin(), weights.end());
    double total = 0.0;
    for (double x : weights) total += x;
    best = std::min(best, total);
    int pos = 0;
    while (pos < n - 2 && ++seq[pos] == n) seq[pos++] = 0;
    if (pos == n - 2) break;
  }
  return best;
}

/// Reference Chamfer metrics computed by plain nested loops.
inline double brute_cd_joint(const std::vector<Vec3>& a, const std::vector<Vec3>& b, double axis) {
  auto one_way = [](const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
    double total = 0.0;
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to) best = std::min(best, (p - q).norm());
      total += best;
    }
    return total / static_cast<double>(from.size());
  };
  return 0.5 * (one_way(a, b) + one_way(b, a)) / axis;
}

inline double brute_point_segment(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 d = b - a;
  const double len2 = d.squaredNorm();
  const double t = len2 > 0.0 ? std::clamp((p - a).dot(d) / len2, 0.0, 1.0) : 0.0;
  return (p - (a + t * d)).norm();
}

inline double brute_cd_joint2bone(const std::vector<Vec3>& pj, const std::vector<std::pair<Vec3, Vec3>>& pb,
                                  const std::vector<Vec3>& rj, const std::vector<std::pair<Vec3, Vec3>>& rb,
                                  double axis) {
  auto one_way = [](const std::vector<Vec3>& joints, const std::vector<std::pair<Vec3, Vec3>>& bones) {
    double total = 0.0;
    for (const auto& p : joints) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& [a, b] : bones) best = std::min(best, brute_point_segment(p, a, b));
      total += best;
    }
    return total / static_cast<double>(joints.size());
  };
  return 0.5 * (one_way(pj, rb) + one_way(rj, pb)) / axis;
}

}  // namespace volrig::test
