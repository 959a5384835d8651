#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <vector>

#include "ticl/error.hpp"
#include "ticl/rng.hpp"
#include "ticl/tensor.hpp"

namespace ticl {

// ---------- PCA ----------

struct PcaModel {
  TensorF components;             // q x d, rows orthonormal
  std::vector<double> mean;       // d
  std::vector<double> variances;  // q, non-increasing
};

/// Top-q principal components via orthogonalized power iteration on the
/// covariance matrix. Rank-deficient tails are filled with an orthonormal
/// completion and zero variance.
inline PcaModel pca_fit(const TensorF& x, int64_t q, int iterations, uint64_t seed) {
  const int64_t n = x.rows(), d = x.cols();
  check(q >= 1 && q <= std::min(n, d), "pca_fit: q must be in [1, min(N,d)]");
  PcaModel m;
  m.mean.assign(static_cast<size_t>(d), 0.0);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j) m.mean[static_cast<size_t>(j)] += x.at(i, j);
  for (double& v : m.mean) v /= static_cast<double>(n);

  std::vector<double> cov(static_cast<size_t>(d * d), 0.0);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t a = 0; a < d; ++a) {
      const double xa = x.at(i, a) - m.mean[static_cast<size_t>(a)];
      for (int64_t b = 0; b < d; ++b)
        cov[static_cast<size_t>(a * d + b)] +=
            xa * (x.at(i, b) - m.mean[static_cast<size_t>(b)]);
    }
  for (double& v : cov) v /= static_cast<double>(n);

  std::vector<std::vector<double>> comps;
  std::vector<double> vars;
  RngStream rng(seed, "pca");
  auto orthogonalize = [&](std::vector<double>& v) {
    for (const auto& c : comps) {
      double dot = 0.0;
      for (int64_t j = 0; j < d; ++j) dot += v[static_cast<size_t>(j)] * c[static_cast<size_t>(j)];
      for (int64_t j = 0; j < d; ++j) v[static_cast<size_t>(j)] -= dot * c[static_cast<size_t>(j)];
    }
  };
  auto norm_of = [&](const std::vector<double>& v) {
    double s = 0.0;
    for (double e : v) s += e * e;
    return std::sqrt(s);
  };

  for (int64_t c = 0; c < q; ++c) {
    std::vector<double> v(static_cast<size_t>(d));
    for (double& e : v) e = rng.normal();
    orthogonalize(v);
    double nv = norm_of(v);
    bool degenerate = nv < 1e-12;
    if (!degenerate) {
      for (double& e : v) e /= nv;
      for (int it = 0; it < iterations; ++it) {
        std::vector<double> w(static_cast<size_t>(d), 0.0);
        for (int64_t a = 0; a < d; ++a)
          for (int64_t b = 0; b < d; ++b)
            w[static_cast<size_t>(a)] += cov[static_cast<size_t>(a * d + b)] * v[static_cast<size_t>(b)];
        orthogonalize(w);
        double nw = norm_of(w);
        if (nw < 1e-12) {
          degenerate = true;  // covariance rank exhausted
          break;
        }
        for (double& e : w) e /= nw;
        v = w;
      }
    }
    if (degenerate) {
      // orthonormal completion from coordinate vectors
      bool found = false;
      for (int64_t j = 0; j < d && !found; ++j) {
        std::vector<double> e(static_cast<size_t>(d), 0.0);
        e[static_cast<size_t>(j)] = 1.0;
        orthogonalize(e);
        double ne = norm_of(e);
        if (ne > 1e-8) {
          for (double& vv : e) vv /= ne;
          v = e;
          found = true;
        }
      }
      check(found, "pca_fit: could not complete the basis");
      comps.push_back(v);
      vars.push_back(0.0);
      continue;
    }
    double lambda = 0.0;
    for (int64_t a = 0; a < d; ++a) {
      double cv = 0.0;
      for (int64_t b = 0; b < d; ++b)
        cv += cov[static_cast<size_t>(a * d + b)] * v[static_cast<size_t>(b)];
      lambda += v[static_cast<size_t>(a)] * cv;
    }
    comps.push_back(v);
    vars.push_back(lambda);
  }

  // enforce the non-increasing variance contract under near-ties
  std::vector<size_t> order(static_cast<size_t>(q));
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return vars[a] > vars[b]; });
  m.components = TensorF({q, d});
  m.variances.resize(static_cast<size_t>(q));
  for (int64_t c = 0; c < q; ++c) {
    m.variances[static_cast<size_t>(c)] = vars[order[static_cast<size_t>(c)]];
    for (int64_t j = 0; j < d; ++j)
      m.components.at(c, j) = static_cast<float>(comps[order[static_cast<size_t>(c)]][static_cast<size_t>(j)]);
  }
  return m;
}

inline TensorF pca_transform(const PcaModel& m, const TensorF& x) {
  const int64_t n = x.rows(), d = x.cols(), q = m.components.rows();
  check_dims(d == m.components.cols(), "pca_transform: width mismatch");
  TensorF out({n, q});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t c = 0; c < q; ++c) {
      double acc = 0.0;
      for (int64_t j = 0; j < d; ++j)
        acc += (static_cast<double>(x.at(i, j)) - m.mean[static_cast<size_t>(j)]) *
               static_cast<double>(m.components.at(c, j));
      out.at(i, c) = static_cast<float>(acc);
    }
  return out;
}

// ---------- KMeans ----------

struct KmeansResult {
  TensorF centers;              // k x d
  std::vector<int> assignment;  // n
  double sse = 0.0;
  int iterations = 0;
};

namespace detail {

inline double sq_dist_row(const TensorF& a, int64_t i, const TensorF& b, int64_t j) {
  double s = 0.0;
  for (int64_t c = 0; c < a.cols(); ++c) {
    double d = static_cast<double>(a.at(i, c)) - static_cast<double>(b.at(j, c));
    s += d * d;
  }
  return s;
}

}  // namespace detail

/// Lloyd iterations with seeded farthest-point initialization. Empty clusters
/// reseed to the point farthest from every current center.
inline KmeansResult kmeans(const TensorF& x, int64_t k, uint64_t seed, int max_iters = 100) {
  const int64_t n = x.rows(), d = x.cols();
  check(k >= 1 && k <= n, "kmeans: k must be in [1, N]");
  KmeansResult r;
  r.centers = TensorF({k, d});

  RngStream rng(seed, "kmeans");
  std::vector<int64_t> chosen = {rng.uniform_int(0, n - 1)};
  std::vector<double> min_dist(static_cast<size_t>(n), 0.0);
  for (int64_t i = 0; i < n; ++i) min_dist[static_cast<size_t>(i)] = detail::sq_dist_row(x, i, x, chosen[0]);
  while (static_cast<int64_t>(chosen.size()) < k) {
    int64_t far = 0;
    for (int64_t i = 1; i < n; ++i)
      if (min_dist[static_cast<size_t>(i)] > min_dist[static_cast<size_t>(far)]) far = i;
    chosen.push_back(far);
    for (int64_t i = 0; i < n; ++i)
      min_dist[static_cast<size_t>(i)] =
          std::min(min_dist[static_cast<size_t>(i)], detail::sq_dist_row(x, i, x, far));
  }
  for (int64_t c = 0; c < k; ++c)
    for (int64_t j = 0; j < d; ++j) r.centers.at(c, j) = x.at(chosen[static_cast<size_t>(c)], j);

  r.assignment.assign(static_cast<size_t>(n), -1);
  for (int it = 0; it < max_iters; ++it) {
    bool changed = false;
    for (int64_t i = 0; i < n; ++i) {
      int best = 0;
      double bd = detail::sq_dist_row(x, i, r.centers, 0);
      for (int64_t c = 1; c < k; ++c) {
        double dd = detail::sq_dist_row(x, i, r.centers, c);
        if (dd < bd) {
          bd = dd;
          best = static_cast<int>(c);
        }
      }
      if (r.assignment[static_cast<size_t>(i)] != best) {
        r.assignment[static_cast<size_t>(i)] = best;
        changed = true;
      }
    }
    r.iterations = it + 1;
    // means, then reseed any empty cluster to the farthest point
    std::vector<int64_t> counts(static_cast<size_t>(k), 0);
    TensorF sums = TensorF::zeros({k, d});
    for (int64_t i = 0; i < n; ++i) {
      int c = r.assignment[static_cast<size_t>(i)];
      ++counts[static_cast<size_t>(c)];
      for (int64_t j = 0; j < d; ++j)
        sums.at(c, j) += x.at(i, j);
    }
    for (int64_t c = 0; c < k; ++c) {
      if (counts[static_cast<size_t>(c)] == 0) {
        std::vector<double> dmin(static_cast<size_t>(n), 1e300);
        for (int64_t i = 0; i < n; ++i)
          for (int64_t c2 = 0; c2 < k; ++c2)
            dmin[static_cast<size_t>(i)] =
                std::min(dmin[static_cast<size_t>(i)], detail::sq_dist_row(x, i, r.centers, c2));
        int64_t far = 0;
        for (int64_t i = 1; i < n; ++i)
          if (dmin[static_cast<size_t>(i)] > dmin[static_cast<size_t>(far)]) far = i;
        for (int64_t j = 0; j < d; ++j) r.centers.at(c, j) = x.at(far, j);
        changed = true;
      } else {
        for (int64_t j = 0; j < d; ++j)
          r.centers.at(c, j) = static_cast<float>(static_cast<double>(sums.at(c, j)) /
                                                  static_cast<double>(counts[static_cast<size_t>(c)]));
      }
    }
    if (!changed) break;
  }
  r.sse = 0.0;
  for (int64_t i = 0; i < n; ++i)
    r.sse += detail::sq_dist_row(x, i, r.centers, r.assignment[static_cast<size_t>(i)]);
  return r;
}

// ---------- CART ----------

struct CartNode {
  int feature = -1;
  float threshold = 0.0f;
  int left = -1;
  int right = -1;
  std::vector<double> histogram;  // classification: class counts
  double mean = 0.0;              // regression
  std::vector<int64_t> rows;      // training rows that reached this node (leaves only)
};

struct CartTree {
  std::vector<CartNode> nodes;
  int64_t min_samples_split = 2;
  bool classification = true;
  int n_classes = 0;

  bool is_leaf(int id) const { return nodes[static_cast<size_t>(id)].left < 0; }
};

namespace detail {

inline double gini(const std::vector<int64_t>& counts, int64_t total) {
  if (total == 0) return 0.0;
  double g = 1.0;
  for (int64_t c : counts) {
    double p = static_cast<double>(c) / static_cast<double>(total);
    g -= p * p;
  }
  return g;
}

}  // namespace detail

/// Greedy binary tree: Gini for classification, variance reduction for
/// regression, thresholds at midpoints of consecutive distinct values.
/// Ties break toward the lowest feature index, then the lowest threshold.
inline CartTree cart_fit(const TensorF& x, const std::vector<int>& labels,
                         const std::vector<double>& targets, int64_t min_samples_split,
                         bool classification, int n_classes = 0) {
  const int64_t n = x.rows(), d = x.cols();
  check(n >= 1, "cart_fit: empty input");
  CartTree tree;
  tree.min_samples_split = min_samples_split;
  tree.classification = classification;
  tree.n_classes = n_classes;

  struct Work {
    int node;
    std::vector<int64_t> rows;
  };
  std::vector<Work> stack;
  tree.nodes.emplace_back();
  {
    std::vector<int64_t> all(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) all[static_cast<size_t>(i)] = i;
    stack.push_back({0, std::move(all)});
  }

  auto impurity = [&](const std::vector<int64_t>& rows) {
    if (classification) {
      std::vector<int64_t> counts(static_cast<size_t>(n_classes), 0);
      for (int64_t i : rows) ++counts[static_cast<size_t>(labels[static_cast<size_t>(i)])];
      return detail::gini(counts, static_cast<int64_t>(rows.size()));
    }
    double mean = 0.0;
    for (int64_t i : rows) mean += targets[static_cast<size_t>(i)];
    mean /= static_cast<double>(rows.size());
    double var = 0.0;
    for (int64_t i : rows) {
      double dd = targets[static_cast<size_t>(i)] - mean;
      var += dd * dd;
    }
    return var / static_cast<double>(rows.size());
  };

  while (!stack.empty()) {
    Work w = std::move(stack.back());
    stack.pop_back();
    CartNode& node = tree.nodes[static_cast<size_t>(w.node)];
    const int64_t m = static_cast<int64_t>(w.rows.size());

    double node_imp = impurity(w.rows);
    bool make_leaf = m < min_samples_split || node_imp <= 0.0;

    int best_feature = -1;
    float best_threshold = 0.0f;
    double best_score = 0.0;  // weighted child impurity; lower is better
    if (!make_leaf) {
      for (int64_t f = 0; f < d; ++f) {
        std::vector<std::pair<float, int64_t>> vals;
        vals.reserve(static_cast<size_t>(m));
        for (int64_t i : w.rows) vals.emplace_back(x.at(i, f), i);
        std::sort(vals.begin(), vals.end());
        // walk candidate thresholds between distinct neighbours
        for (int64_t s = 1; s < m; ++s) {
          if (vals[static_cast<size_t>(s - 1)].first == vals[static_cast<size_t>(s)].first) continue;
          float thr = vals[static_cast<size_t>(s - 1)].first +
                      (vals[static_cast<size_t>(s)].first - vals[static_cast<size_t>(s - 1)].first) / 2.0f;
          std::vector<int64_t> left, right;
          for (auto& [v, i] : vals) (v <= thr ? left : right).push_back(i);
          if (left.empty() || right.empty()) continue;
          double score = (impurity(left) * static_cast<double>(left.size()) +
                          impurity(right) * static_cast<double>(right.size())) /
                         static_cast<double>(m);
          if (best_feature < 0 || score < best_score - 1e-12) {
            best_feature = static_cast<int>(f);
            best_threshold = thr;
            best_score = score;
          }
        }
      }
      if (best_feature < 0 || best_score >= node_imp - 1e-12) make_leaf = true;
    }

    if (make_leaf) {
      if (classification) {
        node.histogram.assign(static_cast<size_t>(n_classes), 0.0);
        for (int64_t i : w.rows) node.histogram[static_cast<size_t>(labels[static_cast<size_t>(i)])] += 1.0;
      } else {
        double mean = 0.0;
        for (int64_t i : w.rows) mean += targets[static_cast<size_t>(i)];
        node.mean = mean / static_cast<double>(m);
      }
      node.rows = std::move(w.rows);
      continue;
    }

    std::vector<int64_t> lrows, rrows;
    for (int64_t i : w.rows)
      (x.at(i, best_feature) <= best_threshold ? lrows : rrows).push_back(i);
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = static_cast<int>(tree.nodes.size());
    node.right = node.left + 1;
    int left_id = node.left, right_id = node.right;
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    stack.push_back({right_id, std::move(rrows)});
    stack.push_back({left_id, std::move(lrows)});
  }
  return tree;
}

/// Routes one row to its leaf; left branch takes value <= threshold.
inline int cart_route(const CartTree& tree, const TensorF& x, int64_t row) {
  int id = 0;
  while (!tree.is_leaf(id)) {
    const CartNode& n = tree.nodes[static_cast<size_t>(id)];
    id = x.at(row, n.feature) <= n.threshold ? n.left : n.right;
  }
  return id;
}

inline int cart_predict_class(const CartTree& tree, const TensorF& x, int64_t row) {
  const CartNode& leaf = tree.nodes[static_cast<size_t>(cart_route(tree, x, row))];
  int best = 0;
  for (size_t c = 1; c < leaf.histogram.size(); ++c)
    if (leaf.histogram[c] > leaf.histogram[static_cast<size_t>(best)]) best = static_cast<int>(c);
  return best;
}

inline double cart_predict_value(const CartTree& tree, const TensorF& x, int64_t row) {
  return tree.nodes[static_cast<size_t>(cart_route(tree, x, row))].mean;
}

// ---------- linear models ----------

struct LinearModel {
  TensorF w;               // d x C (logistic) or d x 1 (ridge)
  std::vector<double> b;   // C or 1
  bool logistic = true;
  int n_classes = 0;
};

/// Multinomial logistic regression by full-batch gradient descent on the
/// L2-regularized cross-entropy (bias unregularized). The learning rate
/// halves whenever a step fails to improve the loss.
inline LinearModel logistic_fit(const TensorF& x, const std::vector<int>& y, int n_classes,
                                double l2 = 1e-4, int epochs = 500, double lr = 0.5) {
  const int64_t n = x.rows(), d = x.cols();
  check(n_classes >= 2, "logistic_fit: need at least 2 classes");
  check(static_cast<int64_t>(y.size()) == n, "logistic_fit: label count mismatch");
  LinearModel m;
  m.logistic = true;
  m.n_classes = n_classes;
  m.w = TensorF::zeros({d, n_classes});
  m.b.assign(static_cast<size_t>(n_classes), 0.0);

  std::vector<double> w(static_cast<size_t>(d * n_classes), 0.0);
  std::vector<double> b(static_cast<size_t>(n_classes), 0.0);
  std::vector<double> probs(static_cast<size_t>(n * n_classes));

  auto eval = [&](std::vector<double>& p) {
    double loss = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      double mx = -1e300;
      for (int c = 0; c < n_classes; ++c) {
        double z = b[static_cast<size_t>(c)];
        for (int64_t j = 0; j < d; ++j)
          z += static_cast<double>(x.at(i, j)) * w[static_cast<size_t>(j * n_classes + c)];
        p[static_cast<size_t>(i * n_classes + c)] = z;
        mx = std::max(mx, z);
      }
      double denom = 0.0;
      for (int c = 0; c < n_classes; ++c)
        denom += std::exp(p[static_cast<size_t>(i * n_classes + c)] - mx);
      for (int c = 0; c < n_classes; ++c) {
        double pr = std::exp(p[static_cast<size_t>(i * n_classes + c)] - mx) / denom;
        p[static_cast<size_t>(i * n_classes + c)] = pr;
        if (c == y[static_cast<size_t>(i)]) loss -= std::log(std::max(pr, 1e-300));
      }
    }
    loss /= static_cast<double>(n);
    double reg = 0.0;
    for (double v : w) reg += v * v;
    return loss + 0.5 * l2 * reg;
  };

  double prev_loss = eval(probs);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::vector<double> gw(w.size(), 0.0), gb(b.size(), 0.0);
    for (int64_t i = 0; i < n; ++i)
      for (int c = 0; c < n_classes; ++c) {
        double diff = probs[static_cast<size_t>(i * n_classes + c)] -
                      (y[static_cast<size_t>(i)] == c ? 1.0 : 0.0);
        gb[static_cast<size_t>(c)] += diff;
        for (int64_t j = 0; j < d; ++j)
          gw[static_cast<size_t>(j * n_classes + c)] += diff * static_cast<double>(x.at(i, j));
      }
    for (size_t i = 0; i < gw.size(); ++i) gw[i] = gw[i] / static_cast<double>(n) + l2 * w[i];
    for (double& v : gb) v /= static_cast<double>(n);

    std::vector<double> w_saved = w, b_saved = b;
    for (size_t i = 0; i < w.size(); ++i) w[i] -= lr * gw[i];
    for (size_t i = 0; i < b.size(); ++i) b[i] -= lr * gb[i];
    double loss = eval(probs);
    if (loss > prev_loss) {
      w = std::move(w_saved);
      b = std::move(b_saved);
      lr *= 0.5;
      double dummy_restore = eval(probs);  // recompute probs at the restored point
      prev_loss = dummy_restore;
      if (lr < 1e-10) break;
    } else {
      prev_loss = loss;
    }
  }
  for (int64_t j = 0; j < d; ++j)
    for (int c = 0; c < n_classes; ++c)
      m.w.at(j, c) = static_cast<float>(w[static_cast<size_t>(j * n_classes + c)]);
  m.b = b;
  return m;
}

inline std::vector<std::vector<double>> logistic_predict_proba(const LinearModel& m,
                                                               const TensorF& x) {
  const int64_t n = x.rows(), d = x.cols();
  check_dims(d == m.w.rows(), "logistic_predict: width mismatch");
  std::vector<std::vector<double>> out(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    std::vector<double> z(static_cast<size_t>(m.n_classes));
    double mx = -1e300;
    for (int c = 0; c < m.n_classes; ++c) {
      double acc = m.b[static_cast<size_t>(c)];
      for (int64_t j = 0; j < d; ++j)
        acc += static_cast<double>(x.at(i, j)) * static_cast<double>(m.w.at(j, c));
      z[static_cast<size_t>(c)] = acc;
      mx = std::max(mx, acc);
    }
    double denom = 0.0;
    for (double& v : z) {
      v = std::exp(v - mx);
      denom += v;
    }
    for (double& v : z) v /= denom;
    out[static_cast<size_t>(i)] = std::move(z);
  }
  return out;
}

/// Closed-form ridge regression via the normal equations (bias
/// unregularized). A singular system with lambda = 0 is a SolverError that
/// tells the caller to set lambda > 0.
inline LinearModel ridge_fit(const TensorF& x, const std::vector<double>& y, double lambda) {
  const int64_t n = x.rows(), d = x.cols();
  check(static_cast<int64_t>(y.size()) == n, "ridge_fit: target count mismatch");
  const int64_t m = d + 1;  // bias column appended
  std::vector<double> a(static_cast<size_t>(m * m), 0.0);
  std::vector<double> rhs(static_cast<size_t>(m), 0.0);
  auto cell = [&](int64_t i, int64_t j) -> double {
    return j < d ? static_cast<double>(x.at(i, j)) : 1.0;
  };
  for (int64_t i = 0; i < n; ++i)
    for (int64_t p = 0; p < m; ++p) {
      for (int64_t q = 0; q < m; ++q) a[static_cast<size_t>(p * m + q)] += cell(i, p) * cell(i, q);
      rhs[static_cast<size_t>(p)] += cell(i, p) * y[static_cast<size_t>(i)];
    }
  for (int64_t p = 0; p < d; ++p) a[static_cast<size_t>(p * m + p)] += lambda;

  // Gaussian elimination with partial pivoting
  std::vector<int64_t> perm(static_cast<size_t>(m));
  for (int64_t i = 0; i < m; ++i) perm[static_cast<size_t>(i)] = i;
  for (int64_t col = 0; col < m; ++col) {
    int64_t piv = col;
    for (int64_t r2 = col + 1; r2 < m; ++r2)
      if (std::abs(a[static_cast<size_t>(r2 * m + col)]) >
          std::abs(a[static_cast<size_t>(piv * m + col)]))
        piv = r2;
    if (std::abs(a[static_cast<size_t>(piv * m + col)]) < 1e-10) {
      if (lambda <= 0.0)
        throw SolverError("ridge system is singular; set lambda > 0");
      throw SolverError("ridge system is numerically singular");
    }
    if (piv != col) {
      for (int64_t q = 0; q < m; ++q)
        std::swap(a[static_cast<size_t>(col * m + q)], a[static_cast<size_t>(piv * m + q)]);
      std::swap(rhs[static_cast<size_t>(col)], rhs[static_cast<size_t>(piv)]);
    }
    for (int64_t r2 = col + 1; r2 < m; ++r2) {
      double f = a[static_cast<size_t>(r2 * m + col)] / a[static_cast<size_t>(col * m + col)];
      for (int64_t q = col; q < m; ++q)
        a[static_cast<size_t>(r2 * m + q)] -= f * a[static_cast<size_t>(col * m + q)];
      rhs[static_cast<size_t>(r2)] -= f * rhs[static_cast<size_t>(col)];
    }
  }
  std::vector<double> sol(static_cast<size_t>(m));
  for (int64_t row = m - 1; row >= 0; --row) {
    double acc = rhs[static_cast<size_t>(row)];
    for (int64_t q = row + 1; q < m; ++q)
      acc -= a[static_cast<size_t>(row * m + q)] * sol[static_cast<size_t>(q)];
    sol[static_cast<size_t>(row)] = acc / a[static_cast<size_t>(row * m + row)];
  }

  LinearModel model;
  model.logistic = false;
  model.n_classes = 0;
  model.w = TensorF({d, 1});
  for (int64_t j = 0; j < d; ++j) model.w.at(j, 0) = static_cast<float>(sol[static_cast<size_t>(j)]);
  model.b = {sol[static_cast<size_t>(d)]};
  return model;
}

inline double ridge_predict(const LinearModel& m, const TensorF& x, int64_t row) {
  double acc = m.b[0];
  for (int64_t j = 0; j < x.cols(); ++j)
    acc += static_cast<double>(x.at(row, j)) * static_cast<double>(m.w.at(j, 0));
  return acc;
}

// ---------- KNN ----------

/// Euclidean K nearest neighbours with index tie-break; majority vote for
/// classification (label ties toward the lowest label).
inline int knn_predict_class(const TensorF& train_x, const std::vector<int>& train_y,
                             const TensorF& x, int64_t row, int k) {
  const int64_t n = train_x.rows();
  check(k >= 1 && k <= n, "knn: K must be in [1, N]");
  std::vector<std::pair<double, int64_t>> dist(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < train_x.cols(); ++j) {
      double dd = static_cast<double>(train_x.at(i, j)) - static_cast<double>(x.at(row, j));
      s += dd * dd;
    }
    dist[static_cast<size_t>(i)] = {s, i};
  }
  std::sort(dist.begin(), dist.end());
  std::map<int, int> votes;
  for (int t = 0; t < k; ++t) ++votes[train_y[static_cast<size_t>(dist[static_cast<size_t>(t)].second)]];
  int best = -1, best_votes = -1;
  for (auto [label, v] : votes)
    if (v > best_votes) {
      best = label;
      best_votes = v;
    }
  return best;
}

inline double knn_predict_value(const TensorF& train_x, const std::vector<double>& train_y,
                                const TensorF& x, int64_t row, int k) {
  const int64_t n = train_x.rows();
  check(k >= 1 && k <= n, "knn: K must be in [1, N]");
  std::vector<std::pair<double, int64_t>> dist(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < train_x.cols(); ++j) {
      double dd = static_cast<double>(train_x.at(i, j)) - static_cast<double>(x.at(row, j));
      s += dd * dd;
    }
    dist[static_cast<size_t>(i)] = {s, i};
  }
  std::sort(dist.begin(), dist.end());
  double acc = 0.0;
  for (int t = 0; t < k; ++t) acc += train_y[static_cast<size_t>(dist[static_cast<size_t>(t)].second)];
  return acc / static_cast<double>(k);
}

}  // namespace ticl
