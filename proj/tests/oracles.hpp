#pragma once

// Independent reference computations used by the unit and acceptance tests.
// None of these call into the library code they check.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  return dot(a, b) / std::sqrt(dot(a, a) * dot(b, b));
}

/// Minimum-cost perfect assignment on a square matrix (Hungarian method,
/// potentials form). Returns the optimal total cost.
inline double min_assignment(const Matrix& cost) {
  const std::size_t n = cost.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  for (std::size_t j = 1; j <= n; ++j) total += cost[p[j] - 1][j - 1];
  return total;
}

/// Exact optimal transport between two uniform clouds under cost 1 - cos.
/// Each side's points are replicated so both carry nm unit masses; the
/// transport polytope then becomes the assignment polytope, whose optimum
/// is attained at a permutation.
inline double exact_ot(const std::vector<std::vector<double>>& a,
                       const std::vector<std::vector<double>>& b) {
  const std::size_t n = a.size(), m = b.size(), total = n * m;
  Matrix cost(total, std::vector<double>(total));
  for (std::size_t r = 0; r < total; ++r) {
    for (std::size_t c = 0; c < total; ++c) cost[r][c] = 1.0 - cosine(a[r / m], b[c / n]);
  }
  return min_assignment(cost) / static_cast<double>(total);
}

inline double subset_det(const Eigen::MatrixXd& L, const std::vector<std::size_t>& s) {
  if (s.empty()) return 1.0;
  Eigen::MatrixXd sub(s.size(), s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) sub(i, j) = L(s[i], s[j]);
  }
  return sub.fullPivLu().determinant();
}

struct BestSubset {
  std::vector<std::size_t> items;  // ascending
  double det = -std::numeric_limits<double>::infinity();
};

/// Exhaustive max-determinant subset of exactly `size` items.
inline BestSubset max_det_subset(const Eigen::MatrixXd& L, std::size_t size) {
  const std::size_t n = static_cast<std::size_t>(L.rows());
  BestSubset best;
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcountll(mask)) != size) continue;
    std::vector<std::size_t> s;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (std::size_t{1} << i)) s.push_back(i);
    }
    const double d = subset_det(L, s);
    if (d > best.det) best = {s, d};
  }
  return best;
}

/// Search tree shape re-derived from first principles for a tabulated task:
/// children of a node are the `branch` best (by policy, then id) among the
/// `pool` best (by prune score, then id) of the marked concept's group
/// sentences not yet on the path.
struct TabulatedTask {
  std::vector<std::vector<std::size_t>> group_sentences;  // by concept
  std::vector<std::size_t> mark;                          // by sentence
  std::vector<double> prune;                              // by sentence
  std::vector<double> policy;                             // by sentence
  std::vector<double> critic;                             // by sentence
  std::vector<std::size_t> root;                          // root candidates
};

inline std::vector<std::size_t> top_by(std::vector<std::size_t> ids, const std::vector<double>& key,
                                       std::size_t limit) {
  std::sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) {
    return key[a] != key[b] ? key[a] > key[b] : a < b;
  });
  if (ids.size() > limit) ids.resize(limit);
  return ids;
}

inline std::vector<std::size_t> children_of(const TabulatedTask& t,
                                            const std::vector<std::size_t>& path,
                                            std::size_t pool, std::size_t branch) {
  const std::vector<std::size_t>& source =
      path.empty() ? t.root : t.group_sentences[t.mark[path.back()]];
  std::set<std::size_t> unique(source.begin(), source.end());
  std::vector<std::size_t> cand;
  for (std::size_t s : unique) {
    if (std::find(path.begin(), path.end(), s) == path.end()) cand.push_back(s);
  }
  return top_by(top_by(cand, t.prune, pool), t.policy, branch);
}

/// Every maximal path: it stops at the horizon or where no child exists.
inline void enumerate_paths(const TabulatedTask& t, std::vector<std::size_t>& path,
                            std::size_t horizon, std::size_t pool, std::size_t branch,
                            std::vector<std::vector<std::size_t>>& out) {
  const auto kids = path.size() < horizon ? children_of(t, path, pool, branch)
                                          : std::vector<std::size_t>{};
  if (kids.empty()) {
    if (!path.empty()) out.push_back(path);
    return;
  }
  for (std::size_t k : kids) {
    path.push_back(k);
    enumerate_paths(t, path, horizon, pool, branch, out);
    path.pop_back();
  }
}

inline std::vector<std::vector<std::size_t>> all_paths(const TabulatedTask& t, std::size_t horizon,
                                                       std::size_t pool, std::size_t branch) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> path;
  enumerate_paths(t, path, horizon, pool, branch, out);
  return out;
}

inline double best_leaf_value(const TabulatedTask& t, std::size_t horizon, std::size_t pool,
                              std::size_t branch) {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& p : all_paths(t, horizon, pool, branch)) best = std::max(best, t.critic[p.back()]);
  return best;
}

/// Greedy token matching, written out directly.
inline double directed_match(const std::vector<std::vector<double>>& from,
                             const std::vector<std::vector<double>>& to) {
  double sum = 0.0;
  for (const auto& x : from) {
    double best = 0.0;
    for (const auto& y : to) best = std::max(best, cosine(x, y));
    sum += best;
  }
  return sum / static_cast<double>(from.size());
}

/// Clipped unigram overlap F1 via multisets.
inline double rouge1_f1(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::map<std::string, int> ca, cb;
  for (const auto& t : a) ++ca[t];
  for (const auto& t : b) ++cb[t];
  double hit = 0.0;
  for (const auto& [t, c] : ca) hit += std::min(c, cb[t]);
  const double p = hit / static_cast<double>(a.size());
  const double r = hit / static_cast<double>(b.size());
  return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
}

}  // namespace oracle
