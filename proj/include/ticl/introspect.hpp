#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ticl/classical.hpp"
#include "ticl/dataset.hpp"
#include "ticl/model.hpp"
#include "ticl/parallel.hpp"

namespace ticl {

/// One embedding row per instance, plus bookkeeping for plots and probes.
struct EmbeddingMatrix {
  TensorF rows;                    // n x width
  std::vector<std::string> split;  // "train" or "test" per row
  std::vector<int> fold;           // LOFO round per row, -1 elsewhere
  std::string mode;
  std::vector<int> layers;
};

namespace detail {

/// Builds a context with the support rows first and qn query rows appended
/// from query_x[q0..q0+qn). Features standardize on support statistics;
/// regression targets z-score on the support.
inline ContextTask<float> embed_context(const TabularDataset& support, const TensorF* query_x,
                                        int64_t q0 = 0, int64_t qn = 0) {
  ContextTask<float> task;
  const int64_t ns = support.n, d = support.d;
  task.n_support = ns;
  task.n_query = qn;
  TensorF sx = support.features();
  if (qn > 0) {
    TensorF qx({qn, d});
    for (int64_t i = 0; i < qn; ++i)
      for (int64_t j = 0; j < d; ++j) qx.at(i, j) = query_x->at(q0 + i, j);
    task.x = standardize_on_support(sx, qx);
  } else {
    // standardize the support against itself via a self-copy query block
    task.x = standardize_on_support(sx, sx);
    task.x = [&] {
      TensorF t({ns, d});
      for (int64_t i = 0; i < ns; ++i)
        for (int64_t j = 0; j < d; ++j) t.at(i, j) = task.x.at(i, j);
      return t;
    }();
  }
  if (support.task == TaskKind::Classification) {
    task.classification = true;
    task.n_classes = support.n_classes;
    task.labels = support.labels;
  } else {
    task.classification = false;
    double mean = 0.0;
    for (float t : support.targets) mean += t;
    mean /= static_cast<double>(support.targets.size());
    double var = 0.0;
    for (float t : support.targets) var += (t - mean) * (t - mean);
    var /= static_cast<double>(support.targets.size());
    double sd = std::sqrt(var);
    if (sd <= 0.0) sd = 1.0;
    for (float t : support.targets) task.targets_z.push_back((t - mean) / sd);
  }
  return task;
}

/// Label-slot activations at `layer` for support rows plus every query row
/// (queries chunked so large query sets fit the row cap).
inline TensorF layer_embeddings(Weights<float>& w, const TabularDataset& support,
                                const TensorF* query_x, int layer, uint64_t seed) {
  check(layer >= 0 && layer <= w.cfg.depth, "embeddings: layer out of range");
  const int64_t ns = support.n;
  const int64_t nq = query_x ? query_x->rows() : 0;
  TensorF out({ns + nq, w.cfg.k});
  const int64_t chunk = std::max<int64_t>(1, w.cfg.max_rows - ns);
  bool first = true;
  int64_t q0 = 0;
  do {
    const int64_t qn = nq == 0 ? 0 : std::min(chunk, nq - q0);
    ContextTask<float> task = embed_context(support, query_x, q0, qn);
    ForwardOptions opts;
    opts.capture_activations = true;
    Forward<float> f = forward_context(w, task, seed, opts);
    const TensorF& acts = f.label_activations[static_cast<size_t>(layer)];
    if (first) {
      for (int64_t i = 0; i < ns; ++i)
        for (int64_t l = 0; l < w.cfg.k; ++l) out.at(i, l) = acts.at(i, l);
      first = false;
    }
    for (int64_t i = 0; i < qn; ++i)
      for (int64_t l = 0; l < w.cfg.k; ++l) out.at(ns + q0 + i, l) = acts.at(ns + i, l);
    q0 += qn;
  } while (q0 < nq);
  return out;
}

}  // namespace detail

/// Naive extraction: one context, training rows as the support with true
/// labels, test rows as dummy-labelled queries. Keeps the train/test role
/// mismatch that makes these embeddings non-comparable across the split.
inline EmbeddingMatrix vanilla_embeddings(const TabularDataset& train, const TensorF& test_x,
                                          Weights<float>& w, int layer, uint64_t seed) {
  EmbeddingMatrix em;
  em.mode = "vanilla";
  em.layers = {layer};
  em.rows = detail::layer_embeddings(w, train, &test_x, layer, seed);
  for (int64_t i = 0; i < train.n; ++i) {
    em.split.push_back("train");
    em.fold.push_back(-1);
  }
  for (int64_t i = 0; i < test_x.rows(); ++i) {
    em.split.push_back("test");
    em.fold.push_back(-1);
  }
  return em;
}

/// Leave-one-fold-out extraction: each training fold takes the query role
/// once (dummy labels) while the remaining folds form the support; test rows
/// are embedded with the full training set as support. Every training row is
/// embedded exactly once, in the query role.
inline EmbeddingMatrix lofo_embeddings(const TabularDataset& train, const TensorF& test_x,
                                       Weights<float>& w, int folds, int layer, uint64_t seed,
                                       int threads = 1) {
  check(folds >= 2, "lofo: need at least 2 folds");
  std::vector<int64_t> idx(static_cast<size_t>(train.n));
  for (int64_t i = 0; i < train.n; ++i) idx[static_cast<size_t>(i)] = i;
  std::vector<std::vector<int64_t>> parts =
      train.task == TaskKind::Classification
          ? kfold_partition_stratified(idx, train.labels, folds, seed)
          : kfold_partition(idx, folds, seed);

  EmbeddingMatrix em;
  em.mode = "lofo";
  em.layers = {layer};
  em.rows = TensorF({train.n + test_x.rows(), w.cfg.k});
  em.split.assign(static_cast<size_t>(train.n + test_x.rows()), "train");
  em.fold.assign(static_cast<size_t>(train.n + test_x.rows()), -1);

  std::vector<TensorF> fold_rows(parts.size());
  parallel_for(static_cast<int64_t>(parts.size()), threads, [&](int64_t r) {
    const auto& fold = parts[static_cast<size_t>(r)];
    std::vector<int64_t> rest;
    for (size_t p = 0; p < parts.size(); ++p)
      if (p != static_cast<size_t>(r)) rest.insert(rest.end(), parts[p].begin(), parts[p].end());
    std::sort(rest.begin(), rest.end());
    TabularDataset support = take_rows(train, rest);
    if (train.task == TaskKind::Classification) {
      std::vector<bool> seen(static_cast<size_t>(train.n_classes), false);
      for (int y : support.labels) seen[static_cast<size_t>(y)] = true;
      for (bool s : seen)
        if (!s)
          throw SplitError("lofo: fold " + std::to_string(r) +
                           " removes a class from the support");
    }
    TensorF qx({static_cast<int64_t>(fold.size()), train.d});
    for (size_t i = 0; i < fold.size(); ++i)
      for (int64_t j = 0; j < train.d; ++j) qx.at(static_cast<int64_t>(i), j) = train.at(fold[i], j);
    TensorF acts = detail::layer_embeddings(w, support, &qx, layer, seed);
    // keep only the query-role rows
    TensorF rows({static_cast<int64_t>(fold.size()), w.cfg.k});
    for (size_t i = 0; i < fold.size(); ++i)
      for (int64_t l = 0; l < w.cfg.k; ++l)
        rows.at(static_cast<int64_t>(i), l) = acts.at(support.n + static_cast<int64_t>(i), l);
    fold_rows[static_cast<size_t>(r)] = std::move(rows);
  });
  for (size_t r = 0; r < parts.size(); ++r) {
    for (size_t i = 0; i < parts[r].size(); ++i) {
      int64_t row = parts[r][i];
      for (int64_t l = 0; l < w.cfg.k; ++l)
        em.rows.at(row, l) = fold_rows[r].at(static_cast<int64_t>(i), l);
      em.fold[static_cast<size_t>(row)] = static_cast<int>(r);
    }
  }
  if (test_x.rows() > 0) {
    TensorF acts = detail::layer_embeddings(w, train, &test_x, layer, seed);
    for (int64_t i = 0; i < test_x.rows(); ++i) {
      for (int64_t l = 0; l < w.cfg.k; ++l) em.rows.at(train.n + i, l) = acts.at(train.n + i, l);
      em.split[static_cast<size_t>(train.n + i)] = "test";
    }
  }
  return em;
}

enum class UnsupervisedMode { Dummy, Permute };

/// Label-free extraction. Dummy: one regression context with pseudo-target 0
/// for every row (width k). Permute: each feature in turn becomes the
/// pseudo-target of a context built from the remaining features; activations
/// concatenate to width d*k.
inline EmbeddingMatrix unsupervised_embeddings(const TensorF& x, const std::vector<bool>& categorical,
                                               Weights<float>& w, UnsupervisedMode mode, int layer,
                                               uint64_t seed, int threads = 1) {
  const int64_t n = x.rows(), d = x.cols();
  EmbeddingMatrix em;
  em.layers = {layer};
  if (mode == UnsupervisedMode::Dummy) {
    em.mode = "dummy";
    TabularDataset pseudo;
    pseudo.n = n;
    pseudo.d = d;
    pseudo.x = x.data;
    pseudo.sym.resize(static_cast<size_t>(d));
    pseudo.categorical.assign(static_cast<size_t>(d), false);
    for (int64_t j = 0; j < d; ++j) pseudo.col_names.push_back("f" + std::to_string(j));
    pseudo.task = TaskKind::Regression;
    pseudo.targets.assign(static_cast<size_t>(n), 0.0f);
    em.rows = detail::layer_embeddings(w, pseudo, nullptr, layer, seed);
  } else {
    check(d >= 2, "unsupervised permute needs at least two features");
    em.mode = "permute";
    em.rows = TensorF({n, d * w.cfg.k});
    std::vector<TensorF> parts(static_cast<size_t>(d));
    parallel_for(d, threads, [&](int64_t j) {
      TabularDataset pseudo;
      pseudo.n = n;
      pseudo.d = d - 1;
      pseudo.sym.resize(static_cast<size_t>(d - 1));
      pseudo.categorical.assign(static_cast<size_t>(d - 1), false);
      for (int64_t c = 0; c < d - 1; ++c) pseudo.col_names.push_back("f" + std::to_string(c));
      pseudo.x.reserve(static_cast<size_t>(n * (d - 1)));
      for (int64_t i = 0; i < n; ++i)
        for (int64_t c = 0; c < d; ++c)
          if (c != j) pseudo.x.push_back(x.at(i, c));
      // categorical pseudo-targets with few levels form a classification
      // context; anything else regresses on the raw column
      std::vector<float> col(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) col[static_cast<size_t>(i)] = x.at(i, j);
      bool as_classes = false;
      std::vector<float> levels;
      if (static_cast<size_t>(j) < categorical.size() && categorical[static_cast<size_t>(j)]) {
        for (float v : col)
          if (std::find(levels.begin(), levels.end(), v) == levels.end()) levels.push_back(v);
        as_classes = levels.size() >= 2 && levels.size() <= 10;
      }
      if (as_classes) {
        pseudo.task = TaskKind::Classification;
        pseudo.n_classes = static_cast<int>(levels.size());
        for (float v : col)
          pseudo.labels.push_back(static_cast<int>(
              std::find(levels.begin(), levels.end(), v) - levels.begin()));
      } else {
        pseudo.task = TaskKind::Regression;
        pseudo.targets = col;
      }
      parts[static_cast<size_t>(j)] = detail::layer_embeddings(
          w, pseudo, nullptr, layer,
          RngStream(seed, "permute", static_cast<uint64_t>(j)).next_u64());
    });
    for (int64_t j = 0; j < d; ++j)
      for (int64_t i = 0; i < n; ++i)
        for (int64_t l = 0; l < w.cfg.k; ++l)
          em.rows.at(i, j * w.cfg.k + l) = parts[static_cast<size_t>(j)].at(i, l);
  }
  for (int64_t i = 0; i < n; ++i) {
    em.split.push_back("train");
    em.fold.push_back(-1);
  }
  return em;
}

/// Logistic probe with the fixed in-repo defaults (l2 = 1e-4, 500 epochs);
/// returns test accuracy.
inline double linear_probe(const TensorF& train_emb, const std::vector<int>& train_labels,
                           const TensorF& test_emb, const std::vector<int>& test_labels) {
  check(!train_labels.empty() && !test_labels.empty(), "probe: empty inputs");
  int n_classes = 0;
  for (int y : train_labels) n_classes = std::max(n_classes, y + 1);
  for (int y : test_labels) n_classes = std::max(n_classes, y + 1);
  bool single = true;
  for (int y : train_labels)
    if (y != train_labels[0]) single = false;
  if (single) throw ContractError("probe: training labels contain a single class");
  auto model = logistic_fit(train_emb, train_labels, n_classes, 1e-4, 500);
  auto probs = logistic_predict_proba(model, test_emb);
  int correct = 0;
  for (size_t i = 0; i < probs.size(); ++i) {
    int arg = 0;
    for (size_t c = 1; c < probs[i].size(); ++c)
      if (probs[i][c] > probs[i][static_cast<size_t>(arg)]) arg = static_cast<int>(c);
    if (arg == test_labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test_labels.size());
}

/// Exhaustive search over layer subsets of size 1..max_layers, maximizing
/// the supplied validation metric. Ties prefer fewer layers, then the
/// lexicographically smallest index set.
inline std::vector<int> select_layer_combination(
    const std::function<double(const std::vector<int>&)>& validation_accuracy, int n_layers,
    int max_layers = 3) {
  check(n_layers >= 1, "select_layer_combination: need at least one layer");
  std::vector<int> best;
  double best_acc = -1.0;
  std::vector<std::vector<int>> subsets;
  for (int a = 0; a < n_layers; ++a) subsets.push_back({a});
  if (max_layers >= 2)
    for (int a = 0; a < n_layers; ++a)
      for (int b = a + 1; b < n_layers; ++b) subsets.push_back({a, b});
  if (max_layers >= 3)
    for (int a = 0; a < n_layers; ++a)
      for (int b = a + 1; b < n_layers; ++b)
        for (int c = b + 1; c < n_layers; ++c) subsets.push_back({a, b, c});
  // evaluation order: all singletons, then pairs, then triples, each block in
  // lexicographic order, so strict improvement gives exactly the tie rule
  for (const auto& s : subsets) {
    double acc = validation_accuracy(s);
    if (acc > best_acc + 1e-12) {
      best_acc = acc;
      best = s;
    }
  }
  return best;
}

/// Feature-axis attention probabilities at one block, averaged over heads
/// and support rows; the trailing index is the label slot.
struct AttentionSummary {
  TensorF map;  // (d+1) x (d+1)
  uint64_t seed = 0;
  int layer = 0;
};

inline AttentionSummary attention_summary(const TabularDataset& train, Weights<float>& w,
                                          int layer, uint64_t seed) {
  check(layer >= 1 && layer <= w.cfg.depth, "attention_summary: block index out of range");
  ContextTask<float> task = detail::embed_context(train, nullptr);
  ForwardOptions opts;
  opts.capture_attention = true;
  Forward<float> f = forward_context(w, task, seed, opts);
  AttentionSummary s;
  s.map = f.feature_attention[static_cast<size_t>(layer - 1)];
  s.seed = seed;
  s.layer = layer;
  return s;
}

struct StabilityReport {
  std::vector<TensorF> maps;
  std::vector<double> pairwise_cosine;
  double mean_cosine = 0.0;
  double var_cosine = 0.0;
};

/// Re-draws the random attribute tokens `runs` times and reports pairwise
/// cosine similarity of the flattened attention maps.
inline StabilityReport attention_stability(const TabularDataset& train, Weights<float>& w,
                                           int layer, int runs, uint64_t seed, int threads = 1) {
  check(runs >= 2, "attention_stability: need at least 2 runs");
  StabilityReport rep;
  rep.maps.resize(static_cast<size_t>(runs));
  parallel_for(runs, threads, [&](int64_t r) {
    rep.maps[static_cast<size_t>(r)] =
        attention_summary(train, w, layer,
                          RngStream(seed, "stability", static_cast<uint64_t>(r)).next_u64())
            .map;
  });
  for (int a = 0; a < runs; ++a)
    for (int b = a + 1; b < runs; ++b) {
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (int64_t i = 0; i < rep.maps[static_cast<size_t>(a)].numel(); ++i) {
        double va = rep.maps[static_cast<size_t>(a)].at(i);
        double vb = rep.maps[static_cast<size_t>(b)].at(i);
        dot += va * vb;
        na += va * va;
        nb += vb * vb;
      }
      rep.pairwise_cosine.push_back(dot / (std::sqrt(na) * std::sqrt(nb)));
    }
  for (double c : rep.pairwise_cosine) rep.mean_cosine += c;
  rep.mean_cosine /= static_cast<double>(rep.pairwise_cosine.size());
  for (double c : rep.pairwise_cosine)
    rep.var_cosine += (c - rep.mean_cosine) * (c - rep.mean_cosine);
  rep.var_cosine /= static_cast<double>(rep.pairwise_cosine.size());
  return rep;
}

/// PCA projection of all N*d feature-slot tokens at one layer to 2
/// components, sign-canonicalized (largest-magnitude loading positive).
struct TokenProjection {
  TensorF coords;                 // (N*d) x 2
  std::vector<int> attribute;     // per row
};

inline TokenProjection token_pca_projection(const TabularDataset& train, Weights<float>& w,
                                            int layer, uint64_t seed) {
  check(layer >= 0 && layer <= w.cfg.depth, "token_pca_projection: layer out of range");
  ContextTask<float> task = detail::embed_context(train, nullptr);
  ForwardOptions opts;
  opts.capture_full = true;
  Forward<float> f = forward_context(w, task, seed, opts);
  const TensorF& grid = f.full_activations[static_cast<size_t>(layer)];
  const int64_t n = train.n, d = train.d, cols = d + 1, k = w.cfg.k;

  TensorF tokens({n * d, k});
  TokenProjection out;
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j) {
      for (int64_t l = 0; l < k; ++l) tokens.at(i * d + j, l) = grid.at(i * cols + j, l);
      out.attribute.push_back(static_cast<int>(j));
    }
  auto pca = pca_fit(tokens, 2, 200, seed);
  // canonical sign: the largest-magnitude loading of each component is positive
  for (int64_t c = 0; c < 2; ++c) {
    int64_t arg = 0;
    for (int64_t l = 1; l < k; ++l)
      if (std::abs(pca.components.at(c, l)) > std::abs(pca.components.at(c, arg))) arg = l;
    if (pca.components.at(c, arg) < 0)
      for (int64_t l = 0; l < k; ++l) pca.components.at(c, l) = -pca.components.at(c, l);
  }
  out.coords = pca_transform(pca, tokens);
  return out;
}

// ---------- plot-ready CSV outputs ----------

inline void write_embeddings_csv(const EmbeddingMatrix& em, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write embeddings: " + path);
  out << "instance,split,fold";
  for (int64_t l = 0; l < em.rows.cols(); ++l) out << ",e_" << l;
  out << "\n";
  for (int64_t i = 0; i < em.rows.rows(); ++i) {
    out << i << "," << em.split[static_cast<size_t>(i)] << "," << em.fold[static_cast<size_t>(i)];
    for (int64_t l = 0; l < em.rows.cols(); ++l)
      out << "," << csv::format_float(em.rows.at(i, l));
    out << "\n";
  }
}

inline void write_attention_csv(const AttentionSummary& s, const std::vector<std::string>& names,
                                const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write attention map: " + path);
  out << "from,to,weight\n";
  const int64_t m = s.map.rows();
  auto name_of = [&](int64_t i) {
    return i + 1 == m ? std::string("<label>")
                      : (i < static_cast<int64_t>(names.size()) ? names[static_cast<size_t>(i)]
                                                                : "f" + std::to_string(i));
  };
  for (int64_t a = 0; a < m; ++a)
    for (int64_t b = 0; b < m; ++b)
      out << name_of(a) << "," << name_of(b) << "," << csv::format_float(s.map.at(a, b)) << "\n";
}

inline void write_projection_csv(const TokenProjection& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write projection: " + path);
  out << "attribute,pc1,pc2\n";
  for (int64_t i = 0; i < p.coords.rows(); ++i)
    out << p.attribute[static_cast<size_t>(i)] << "," << csv::format_float(p.coords.at(i, 0))
        << "," << csv::format_float(p.coords.at(i, 1)) << "\n";
}

}  // namespace ticl
