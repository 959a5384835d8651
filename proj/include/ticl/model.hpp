#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ticl/tokenizer.hpp"

namespace ticl {

struct ModelConfig {
  int64_t k = 32;
  int64_t k_prime = 16;
  int heads = 4;
  int depth = 6;
  int ff_mult = 4;
  int64_t readout_hidden = 64;
  int64_t max_classes = 10;  // fixed by the readout head
  int64_t max_rows = 1024;
  int64_t max_attributes = 64;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"k", c.k},
       {"k_prime", c.k_prime},
       {"heads", c.heads},
       {"depth", c.depth},
       {"ff_mult", c.ff_mult},
       {"readout_hidden", c.readout_hidden},
       {"max_classes", c.max_classes},
       {"max_rows", c.max_rows},
       {"max_attributes", c.max_attributes}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("k").get_to(c.k);
  j.at("k_prime").get_to(c.k_prime);
  j.at("heads").get_to(c.heads);
  j.at("depth").get_to(c.depth);
  j.at("ff_mult").get_to(c.ff_mult);
  j.at("readout_hidden").get_to(c.readout_hidden);
  j.at("max_classes").get_to(c.max_classes);
  j.at("max_rows").get_to(c.max_rows);
  j.at("max_attributes").get_to(c.max_attributes);
}

/// All learned parameters of the dual-axis in-context model.
template <typename T>
struct Weights {
  ModelConfig cfg;
  TokenizerParams<T> tok;

  struct Attention {
    Parameter<T> ln_g, ln_b, wq, bq, wk, bk, wv, bv, wo, bo;
  };
  struct FeedForward {
    Parameter<T> ln_g, ln_b, w1, b1, w2, b2;
  };
  struct Block {
    Attention feat;
    FeedForward ff_feat;
    Attention samp;
    FeedForward ff_samp;
  };

  std::vector<Block> blocks;
  Parameter<T> final_ln_g, final_ln_b;
  Parameter<T> read_w1, read_b1, read_w2, read_b2;  // MLP to 10 logits
  Parameter<T> scalar_w, scalar_b;                  // regression readout

  std::vector<Parameter<T>*> all() {
    std::vector<Parameter<T>*> out = tok.all();
    auto push_attn = [&](Attention& a) {
      for (Parameter<T>* p : {&a.ln_g, &a.ln_b, &a.wq, &a.bq, &a.wk, &a.bk, &a.wv, &a.bv, &a.wo, &a.bo})
        out.push_back(p);
    };
    auto push_ff = [&](FeedForward& f) {
      for (Parameter<T>* p : {&f.ln_g, &f.ln_b, &f.w1, &f.b1, &f.w2, &f.b2}) out.push_back(p);
    };
    for (Block& b : blocks) {
      push_attn(b.feat);
      push_ff(b.ff_feat);
      push_attn(b.samp);
      push_ff(b.ff_samp);
    }
    for (Parameter<T>* p : {&final_ln_g, &final_ln_b, &read_w1, &read_b1, &read_w2, &read_b2,
                            &scalar_w, &scalar_b})
      out.push_back(p);
    return out;
  }

  template <typename U>
  Weights<U> cast() const {
    Weights<U> out;
    out.cfg = cfg;
    out.tok.k = tok.k;
    out.tok.k_prime = tok.k_prime;
    auto cp = [](const Parameter<T>& p) {
      Parameter<U> q(p.name, p.value.template cast<U>());
      return q;
    };
    out.tok.u = cp(tok.u);
    out.tok.w = cp(tok.w);
    out.tok.class_emb = cp(tok.class_emb);
    out.tok.dummy_emb = cp(tok.dummy_emb);
    out.tok.reg_w = cp(tok.reg_w);
    out.tok.reg_b = cp(tok.reg_b);
    out.blocks.resize(blocks.size());
    for (size_t i = 0; i < blocks.size(); ++i) {
      auto cpa = [&](const Attention& a, typename Weights<U>::Attention& d) {
        d.ln_g = cp(a.ln_g); d.ln_b = cp(a.ln_b);
        d.wq = cp(a.wq); d.bq = cp(a.bq);
        d.wk = cp(a.wk); d.bk = cp(a.bk);
        d.wv = cp(a.wv); d.bv = cp(a.bv);
        d.wo = cp(a.wo); d.bo = cp(a.bo);
      };
      auto cpf = [&](const FeedForward& f, typename Weights<U>::FeedForward& d) {
        d.ln_g = cp(f.ln_g); d.ln_b = cp(f.ln_b);
        d.w1 = cp(f.w1); d.b1 = cp(f.b1);
        d.w2 = cp(f.w2); d.b2 = cp(f.b2);
      };
      cpa(blocks[i].feat, out.blocks[i].feat);
      cpf(blocks[i].ff_feat, out.blocks[i].ff_feat);
      cpa(blocks[i].samp, out.blocks[i].samp);
      cpf(blocks[i].ff_samp, out.blocks[i].ff_samp);
    }
    out.final_ln_g = cp(final_ln_g);
    out.final_ln_b = cp(final_ln_b);
    out.read_w1 = cp(read_w1);
    out.read_b1 = cp(read_b1);
    out.read_w2 = cp(read_w2);
    out.read_b2 = cp(read_b2);
    out.scalar_w = cp(scalar_w);
    out.scalar_b = cp(scalar_b);
    return out;
  }
};

template <typename T>
Weights<T> init_weights(const ModelConfig& cfg, uint64_t seed) {
  check(cfg.k % cfg.heads == 0, "model: k must be divisible by heads");
  check(cfg.depth >= 1, "model: depth must be >= 1");
  Weights<T> w;
  w.cfg = cfg;
  w.tok = init_tokenizer<T>(cfg.k, cfg.k_prime, seed);
  const int64_t k = cfg.k;
  const int64_t ff = cfg.ff_mult * k;
  const double attn_std = 1.0 / std::sqrt(static_cast<double>(k));
  // residual-branch outputs scaled down with depth to keep the stream tame
  const double resid_std = attn_std / std::sqrt(2.0 * cfg.depth);
  uint64_t idx = 0;
  auto next = [&](const std::string& name, std::vector<int64_t> shape, double std) {
    RngStream rng(seed, "init." + name, idx++);
    return Parameter<T>(name, init_normal<T>(std::move(shape), std, rng));
  };
  auto ones = [&](const std::string& name, int64_t n) {
    return Parameter<T>(name, Tensor<T>::full({n}, T(1)));
  };
  auto zeros = [&](const std::string& name, std::vector<int64_t> shape) {
    return Parameter<T>(name, Tensor<T>::zeros(std::move(shape)));
  };
  w.blocks.resize(static_cast<size_t>(cfg.depth));
  for (int b = 0; b < cfg.depth; ++b) {
    std::string pre = "block" + std::to_string(b) + ".";
    auto mk_attn = [&](const std::string& ax, typename Weights<T>::Attention& a) {
      a.ln_g = ones(pre + ax + ".ln_g", k);
      a.ln_b = zeros(pre + ax + ".ln_b", {k});
      a.wq = next(pre + ax + ".wq", {k, k}, attn_std);
      a.bq = zeros(pre + ax + ".bq", {k});
      a.wk = next(pre + ax + ".wk", {k, k}, attn_std);
      a.bk = zeros(pre + ax + ".bk", {k});
      a.wv = next(pre + ax + ".wv", {k, k}, attn_std);
      a.bv = zeros(pre + ax + ".bv", {k});
      a.wo = next(pre + ax + ".wo", {k, k}, resid_std);
      a.bo = zeros(pre + ax + ".bo", {k});
    };
    auto mk_ff = [&](const std::string& ax, typename Weights<T>::FeedForward& f) {
      f.ln_g = ones(pre + ax + ".ln_g", k);
      f.ln_b = zeros(pre + ax + ".ln_b", {k});
      f.w1 = next(pre + ax + ".w1", {k, ff}, attn_std);
      f.b1 = zeros(pre + ax + ".b1", {ff});
      f.w2 = next(pre + ax + ".w2", {ff, k}, 1.0 / std::sqrt(static_cast<double>(ff)) / std::sqrt(2.0 * cfg.depth));
      f.b2 = zeros(pre + ax + ".b2", {k});
    };
    mk_attn("feat", w.blocks[static_cast<size_t>(b)].feat);
    mk_ff("ff_feat", w.blocks[static_cast<size_t>(b)].ff_feat);
    mk_attn("samp", w.blocks[static_cast<size_t>(b)].samp);
    mk_ff("ff_samp", w.blocks[static_cast<size_t>(b)].ff_samp);
  }
  w.final_ln_g = ones("final.ln_g", k);
  w.final_ln_b = zeros("final.ln_b", {k});
  w.read_w1 = next("read.w1", {k, cfg.readout_hidden}, attn_std);
  w.read_b1 = zeros("read.b1", {cfg.readout_hidden});
  w.read_w2 = next("read.w2", {cfg.readout_hidden, 10},
                   1.0 / std::sqrt(static_cast<double>(cfg.readout_hidden)));
  w.read_b2 = zeros("read.b2", {10});
  w.scalar_w = next("scalar.w", {k, 1}, attn_std);
  w.scalar_b = zeros("scalar.b", {1});
  return w;
}

struct ForwardOptions {
  bool train = false;
  bool capture_activations = false;  // label-slot vectors per layer
  bool capture_full = false;         // full token grids per layer
  bool capture_attention = false;    // feature-axis maps averaged over heads+support
};

template <typename T>
struct Forward {
  Tape<T> tape;
  typename Tape<T>::Id logits = -1;   // n_query x 10
  typename Tape<T>::Id scalars = -1;  // n_query x 1
  std::vector<typename Tape<T>::Id> leaves;       // aligned with Weights::all()
  std::vector<Tensor<T>> label_activations;       // depth+1 entries, rows x k
  std::vector<Tensor<T>> full_activations;        // depth+1 entries, (rows*(d+1)) x k
  std::vector<Tensor<T>> feature_attention;       // depth entries, (d+1) x (d+1)
};

/// Runs the dual-axis transformer over one context. Per block: feature-axis
/// attention (all d+1 tokens of a row), then sample-axis attention (each
/// token column across rows; supports are keys for everyone, queries also
/// see themselves), each as a pre-norm residual pair with its feedforward.
template <typename T>
Forward<T> forward_context(Weights<T>& w, const ContextTask<T>& task, uint64_t seed,
                           const ForwardOptions& opts = {}) {
  using Id = typename Tape<T>::Id;
  const int64_t rows = task.x.rows(), d = task.x.cols();
  const int64_t cols = d + 1, k = w.cfg.k;
  if (rows > w.cfg.max_rows)
    throw CapacityError("context has " + std::to_string(rows) + " rows, cap is " +
                        std::to_string(w.cfg.max_rows) +
                        "; use a large-scale strategy (--strategy b|k|dt|df|sq)");
  if (d > w.cfg.max_attributes)
    throw CapacityError("context has " + std::to_string(d) + " attributes, cap is " +
                        std::to_string(w.cfg.max_attributes) +
                        "; use --strategy subspace or pca-bag");
  if (task.classification && task.n_classes > 10)
    throw CapacityError("classification with " + std::to_string(task.n_classes) +
                        " classes exceeds the 10-class readout; use many_class_predict "
                        "(--strategy dpt|star|ecoc)");

  Forward<T> f;
  auto params = w.all();
  f.leaves.reserve(params.size());
  for (Parameter<T>* p : params) f.leaves.push_back(f.tape.leaf(p->value, opts.train));
  // tokenizer leaves are the first six, in TokenizerParams::all() order
  std::vector<Id> tok_ids(f.leaves.begin(), f.leaves.begin() + 6);

  Id x = context_on_tape(f.tape, tok_ids, task, seed);

  auto snapshot = [&](Id node) {
    if (opts.capture_activations) {
      Tensor<T> acts({rows, k});
      const Tensor<T>& v = f.tape.value(node);
      for (int64_t i = 0; i < rows; ++i)
        for (int64_t l = 0; l < k; ++l) acts.at(i, l) = v.at(i * cols + d, l);
      f.label_activations.push_back(std::move(acts));
    }
    if (opts.capture_full) f.full_activations.push_back(f.tape.value(node));
  };
  snapshot(x);

  AttnGroups feat_groups;
  feat_groups.heads = w.cfg.heads;
  feat_groups.n_support = -1;
  feat_groups.groups.resize(static_cast<size_t>(rows));
  for (int64_t i = 0; i < rows; ++i) {
    auto& g = feat_groups.groups[static_cast<size_t>(i)];
    g.resize(static_cast<size_t>(cols));
    for (int64_t c = 0; c < cols; ++c) g[static_cast<size_t>(c)] = i * cols + c;
  }
  AttnGroups samp_groups;
  samp_groups.heads = w.cfg.heads;
  samp_groups.n_support = task.n_support;
  samp_groups.groups.resize(static_cast<size_t>(cols));
  for (int64_t c = 0; c < cols; ++c) {
    auto& g = samp_groups.groups[static_cast<size_t>(c)];
    g.resize(static_cast<size_t>(rows));
    for (int64_t i = 0; i < rows; ++i) g[static_cast<size_t>(i)] = i * cols + c;
  }

  size_t leaf_cursor = 6;
  auto next_leaf = [&]() { return f.leaves[leaf_cursor++]; };

  auto attn_sublayer = [&](Id h, const AttnGroups& groups, bool capture) {
    Id ln_g = next_leaf(), ln_b = next_leaf();
    Id wq = next_leaf(), bq = next_leaf(), wk = next_leaf(), bk = next_leaf();
    Id wv = next_leaf(), bv = next_leaf(), wo = next_leaf(), bo = next_leaf();
    Id n = f.tape.layer_norm(h, ln_g, ln_b);
    Id q = f.tape.add_bias(f.tape.matmul(n, wq), bq);
    Id kk = f.tape.add_bias(f.tape.matmul(n, wk), bk);
    Id v = f.tape.add_bias(f.tape.matmul(n, wv), bv);
    std::vector<Tensor<T>> probs;
    Id att = f.tape.attention_groups(q, kk, v, groups, capture ? &probs : nullptr);
    if (capture) {
      // mean over heads and support rows of the (d+1)x(d+1) feature maps
      Tensor<T> map({cols, cols});
      const int64_t ns = task.n_support;
      for (int64_t i = 0; i < ns; ++i) {
        const Tensor<T>& p = probs[static_cast<size_t>(i)];
        for (int h2 = 0; h2 < w.cfg.heads; ++h2)
          for (int64_t a = 0; a < cols; ++a)
            for (int64_t t = 0; t < cols; ++t)
              map.at(a, t) += p.at(h2, a, t);
      }
      const T denom = static_cast<T>(ns * w.cfg.heads);
      for (T& mv : map.data) mv = static_cast<T>(static_cast<double>(mv) / static_cast<double>(denom));
      f.feature_attention.push_back(std::move(map));
    }
    Id mixed = f.tape.add_bias(f.tape.matmul(att, wo), bo);
    return f.tape.add(h, mixed);
  };
  auto ff_sublayer = [&](Id h) {
    Id ln_g = next_leaf(), ln_b = next_leaf();
    Id w1 = next_leaf(), b1 = next_leaf(), w2 = next_leaf(), b2 = next_leaf();
    Id n = f.tape.layer_norm(h, ln_g, ln_b);
    Id a = f.tape.gelu(f.tape.add_bias(f.tape.matmul(n, w1), b1));
    Id o = f.tape.add_bias(f.tape.matmul(a, w2), b2);
    return f.tape.add(h, o);
  };

  for (int b = 0; b < w.cfg.depth; ++b) {
    x = attn_sublayer(x, feat_groups, opts.capture_attention);
    x = ff_sublayer(x);
    x = attn_sublayer(x, samp_groups, false);
    x = ff_sublayer(x);
    snapshot(x);
  }

  Id fin_g = next_leaf(), fin_b = next_leaf();
  Id rw1 = next_leaf(), rb1 = next_leaf(), rw2 = next_leaf(), rb2 = next_leaf();
  Id sw = next_leaf(), sb = next_leaf();
  Id fin = f.tape.layer_norm(x, fin_g, fin_b);
  std::vector<int64_t> q_idx;
  for (int64_t i = task.n_support; i < rows; ++i) q_idx.push_back(i * cols + d);
  if (q_idx.empty()) q_idx.push_back(0 * cols + d);  // contexts without queries: dummy readout
  Id qrows = f.tape.gather_rows(fin, q_idx);
  Id hid = f.tape.gelu(f.tape.add_bias(f.tape.matmul(qrows, rw1), rb1));
  f.logits = f.tape.add_bias(f.tape.matmul(hid, rw2), rb2);
  f.scalars = f.tape.add_bias(f.tape.matmul(qrows, sw), sb);
  return f;
}

/// Softmax restricted to the first n_classes entries of a 10-logit row;
/// masked entries get probability exactly zero.
template <typename T>
std::vector<double> masked_softmax10(const Tensor<T>& logits, int64_t row, int n_classes) {
  std::vector<double> out(10, 0.0);
  double mx = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < n_classes; ++j) mx = std::max(mx, static_cast<double>(logits.at(row, j)));
  double denom = 0.0;
  for (int j = 0; j < n_classes; ++j) denom += std::exp(static_cast<double>(logits.at(row, j)) - mx);
  for (int j = 0; j < n_classes; ++j)
    out[static_cast<size_t>(j)] = std::exp(static_cast<double>(logits.at(row, j)) - mx) / denom;
  return out;
}

namespace detail {

/// Standardizes support+query features on support statistics (constant
/// columns get unit std).
template <typename T>
Tensor<T> standardize_on_support(const Tensor<T>& sx, const Tensor<T>& qx) {
  const int64_t ns = sx.rows(), nq = qx.rows(), d = sx.cols();
  check_dims(nq == 0 || qx.cols() == d, "standardize: query dimensionality differs from support");
  Tensor<T> out({ns + nq, d});
  for (int64_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (int64_t i = 0; i < ns; ++i) mean += static_cast<double>(sx.at(i, j));
    mean /= static_cast<double>(ns);
    double var = 0.0;
    for (int64_t i = 0; i < ns; ++i) {
      double dd = static_cast<double>(sx.at(i, j)) - mean;
      var += dd * dd;
    }
    var /= static_cast<double>(ns);
    double sd = std::sqrt(var);
    if (sd <= 0.0) sd = 1.0;
    for (int64_t i = 0; i < ns; ++i) out.at(i, j) = static_cast<T>((static_cast<double>(sx.at(i, j)) - mean) / sd);
    for (int64_t i = 0; i < nq; ++i)
      out.at(ns + i, j) = static_cast<T>((static_cast<double>(qx.at(i, j)) - mean) / sd);
  }
  return out;
}

}  // namespace detail

/// In-context classification: probabilities over the first C classes for each
/// query row. Queries are chunked to fit the row cap; chunking is exact
/// because queries never attend to each other.
template <typename T>
std::vector<std::vector<double>> predict_classification(Weights<T>& w, const Tensor<T>& sx,
                                                        const std::vector<int>& sy, int n_classes,
                                                        const Tensor<T>& qx, uint64_t seed) {
  check(n_classes >= 2, "predict: need at least two classes");
  if (n_classes > 10)
    throw CapacityError("C=" + std::to_string(n_classes) +
                        " exceeds the 10-class readout; use many_class_predict (--strategy star)");
  const int64_t ns = sx.rows(), nq = qx.rows();
  check(static_cast<int64_t>(sy.size()) == ns, "predict: label count mismatch");
  if (ns + 1 > w.cfg.max_rows)
    throw CapacityError("support of " + std::to_string(ns) + " rows exceeds the context cap " +
                        std::to_string(w.cfg.max_rows) +
                        "; use a large-scale strategy (--strategy b|k|dt|df|sq)");
  Tensor<T> all_x = detail::standardize_on_support(sx, qx);

  std::vector<std::vector<double>> probs(static_cast<size_t>(nq));
  const int64_t chunk = std::max<int64_t>(1, w.cfg.max_rows - ns);
  for (int64_t q0 = 0; q0 < nq; q0 += chunk) {
    const int64_t qn = std::min(chunk, nq - q0);
    ContextTask<T> task;
    task.classification = true;
    task.n_classes = n_classes;
    task.n_support = ns;
    task.n_query = qn;
    task.labels = sy;
    task.x = Tensor<T>({ns + qn, sx.cols()});
    for (int64_t i = 0; i < ns; ++i)
      for (int64_t j = 0; j < sx.cols(); ++j) task.x.at(i, j) = all_x.at(i, j);
    for (int64_t i = 0; i < qn; ++i)
      for (int64_t j = 0; j < sx.cols(); ++j) task.x.at(ns + i, j) = all_x.at(ns + q0 + i, j);
    Forward<T> f = forward_context(w, task, seed);
    const Tensor<T>& lg = f.tape.value(f.logits);
    for (int64_t i = 0; i < qn; ++i) {
      auto p10 = masked_softmax10(lg, i, n_classes);
      probs[static_cast<size_t>(q0 + i)] =
          std::vector<double>(p10.begin(), p10.begin() + n_classes);
    }
  }
  return probs;
}

/// In-context regression: scalar predictions de-normalized with support
/// statistics. Zero-variance support targets short-circuit to the mean.
template <typename T>
std::vector<double> predict_regression(Weights<T>& w, const Tensor<T>& sx,
                                       const std::vector<double>& sy, const Tensor<T>& qx,
                                       uint64_t seed) {
  const int64_t ns = sx.rows(), nq = qx.rows();
  check(static_cast<int64_t>(sy.size()) == ns, "predict: target count mismatch");
  if (ns + 1 > w.cfg.max_rows)
    throw CapacityError("support of " + std::to_string(ns) + " rows exceeds the context cap " +
                        std::to_string(w.cfg.max_rows) +
                        "; use a large-scale strategy (--strategy b|k|dt|df|sq)");
  double mean = 0.0;
  for (double y : sy) mean += y;
  mean /= static_cast<double>(ns);
  double var = 0.0;
  for (double y : sy) var += (y - mean) * (y - mean);
  var /= static_cast<double>(ns);
  const double sd = std::sqrt(var);
  std::vector<double> out(static_cast<size_t>(nq), mean);
  if (sd <= 0.0) return out;  // constant support targets

  std::vector<double> sy_z(sy.size());
  for (size_t i = 0; i < sy.size(); ++i) sy_z[i] = (sy[i] - mean) / sd;
  Tensor<T> all_x = detail::standardize_on_support(sx, qx);

  const int64_t chunk = std::max<int64_t>(1, w.cfg.max_rows - ns);
  for (int64_t q0 = 0; q0 < nq; q0 += chunk) {
    const int64_t qn = std::min(chunk, nq - q0);
    ContextTask<T> task;
    task.classification = false;
    task.n_support = ns;
    task.n_query = qn;
    task.targets_z = sy_z;
    task.x = Tensor<T>({ns + qn, sx.cols()});
    for (int64_t i = 0; i < ns; ++i)
      for (int64_t j = 0; j < sx.cols(); ++j) task.x.at(i, j) = all_x.at(i, j);
    for (int64_t i = 0; i < qn; ++i)
      for (int64_t j = 0; j < sx.cols(); ++j) task.x.at(ns + i, j) = all_x.at(ns + q0 + i, j);
    Forward<T> f = forward_context(w, task, seed);
    const Tensor<T>& sc = f.tape.value(f.scalars);
    for (int64_t i = 0; i < qn; ++i)
      out[static_cast<size_t>(q0 + i)] = static_cast<double>(sc.at(i, 0)) * sd + mean;
  }
  return out;
}

/// Label-slot activations after block `layer` (0 = the embedded input).
template <typename T>
Tensor<T> extract_label_activations(Weights<T>& w, const ContextTask<T>& task, uint64_t seed,
                                    int layer) {
  check(layer >= 0 && layer <= w.cfg.depth, "extract_label_activations: layer out of range");
  ForwardOptions opts;
  opts.capture_activations = true;
  Forward<T> f = forward_context(w, task, seed, opts);
  return f.label_activations[static_cast<size_t>(layer)];
}

// ---- weights file: JSON manifest + little-endian float32 blob ----

inline constexpr char kWeightsMagic[8] = {'T', 'I', 'C', 'L', 'W', '0', '0', '1'};

template <typename T>
void save_weights(Weights<T>& w, const std::string& path,
                  const nlohmann::json& provenance = nlohmann::json::object()) {
  nlohmann::json manifest;
  manifest["config"] = w.cfg;
  manifest["provenance"] = provenance;
  auto params = w.all();
  nlohmann::json tensors = nlohmann::json::array();
  uint64_t offset = 0;
  for (Parameter<T>* p : params) {
    tensors.push_back({{"name", p->name}, {"shape", p->value.shape}, {"offset", offset},
                       {"count", p->value.numel()}});
    offset += static_cast<uint64_t>(p->value.numel()) * sizeof(float);
  }
  manifest["tensors"] = tensors;
  const std::string mtext = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write weights file: " + path);
  out.write(kWeightsMagic, sizeof(kWeightsMagic));
  uint64_t mlen = mtext.size();
  out.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
  out.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
  for (Parameter<T>* p : params) {
    std::vector<float> buf(p->value.data.begin(), p->value.data.end());
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw FormatError("short write on weights file: " + path);
}

template <typename T = float>
Weights<T> load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open weights file: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kWeightsMagic, sizeof(magic)) != 0)
    throw FormatError("not a ticl weights file: " + path);
  uint64_t mlen = 0;
  in.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
  std::string mtext(mlen, '\0');
  in.read(mtext.data(), static_cast<std::streamsize>(mlen));
  if (!in) throw FormatError("truncated weights manifest: " + path);
  nlohmann::json manifest = nlohmann::json::parse(mtext);

  ModelConfig cfg = manifest.at("config").get<ModelConfig>();
  Weights<T> w = init_weights<T>(cfg, 0);
  auto params = w.all();
  const auto& tensors = manifest.at("tensors");
  if (tensors.size() != params.size())
    throw FormatError("weights manifest lists " + std::to_string(tensors.size()) +
                      " tensors, model expects " + std::to_string(params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& t = tensors[i];
    std::vector<int64_t> shape = t.at("shape").get<std::vector<int64_t>>();
    if (t.at("name").get<std::string>() != params[i]->name || shape != params[i]->value.shape)
      throw FormatError("weights manifest mismatch at tensor " + params[i]->name);
    std::vector<float> buf(static_cast<size_t>(params[i]->value.numel()));
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw FormatError("truncated weights blob: " + path);
    for (size_t v = 0; v < buf.size(); ++v) params[i]->value.data[v] = static_cast<T>(buf[v]);
  }
  return w;
}

}  // namespace ticl
