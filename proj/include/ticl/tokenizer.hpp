#pragma once

#include <cstdint>
#include <vector>

#include "ticl/autodiff.hpp"
#include "ticl/optim.hpp"
#include "ticl/rng.hpp"

namespace ticl {

/// Learned tokenizer state: the shared lift vector u, the perturbation
/// projection W (k x k'), ten class embedding rows, one dedicated dummy row
/// for unlabeled queries, and the scalar-to-k map for regression targets.
template <typename T>
struct TokenizerParams {
  int64_t k = 32;
  int64_t k_prime = 16;
  Parameter<T> u;
  Parameter<T> w;
  Parameter<T> class_emb;
  Parameter<T> dummy_emb;
  Parameter<T> reg_w;
  Parameter<T> reg_b;

  std::vector<Parameter<T>*> all() { return {&u, &w, &class_emb, &dummy_emb, &reg_w, &reg_b}; }
};

template <typename T>
TokenizerParams<T> init_tokenizer(int64_t k, int64_t k_prime, uint64_t seed) {
  check(k_prime <= k, "tokenizer: k' must be <= k");
  TokenizerParams<T> p;
  p.k = k;
  p.k_prime = k_prime;
  RngStream r0(seed, "init.tok", 0), r1(seed, "init.tok", 1), r2(seed, "init.tok", 2),
      r3(seed, "init.tok", 3), r4(seed, "init.tok", 4);
  p.u = Parameter<T>("tok.u", init_normal<T>({k}, 1.0, r0));
  p.w = Parameter<T>("tok.w", init_normal<T>({k, k_prime}, 1.0 / std::sqrt(static_cast<double>(k_prime)), r1));
  p.class_emb = Parameter<T>("tok.class_emb", init_normal<T>({10, k}, 1.0, r2));
  p.dummy_emb = Parameter<T>("tok.dummy_emb", init_normal<T>({1, k}, 1.0, r3));
  p.reg_w = Parameter<T>("tok.reg_w", init_normal<T>({k}, 1.0, r4));
  p.reg_b = Parameter<T>("tok.reg_b", Tensor<T>::zeros({k}));
  return p;
}

/// Random per-attribute token material: the raw draws p_j and the projected
/// perturbations r_j = W p_j. Regenerating with the same seed is bit-exact.
template <typename T>
struct AttributePerturbations {
  uint64_t seed = 0;
  Tensor<T> raw;  // d x k'
  Tensor<T> r;    // d x k
};

/// Draws p_j ~ N(0, I) from RngStream(seed, "attr", j) and projects through W.
template <typename T>
AttributePerturbations<T> sample_perturbations(int64_t d, const Tensor<T>& w, uint64_t seed) {
  check(d >= 1, "sample_perturbations: d must be >= 1");
  const int64_t k = w.rows(), kp = w.cols();
  AttributePerturbations<T> out;
  out.seed = seed;
  out.raw = Tensor<T>({d, kp});
  for (int64_t j = 0; j < d; ++j) {
    RngStream rng(seed, "attr", static_cast<uint64_t>(j));
    for (int64_t m = 0; m < kp; ++m) out.raw.at(j, m) = static_cast<T>(rng.normal());
  }
  out.r = Tensor<T>({d, k});
  kernels::matmul_nt(out.raw.data.data(), w.data.data(), out.r.data.data(), d, kp, k, false);
  return out;
}

/// Raw draws only (d x k'); the projection happens on the tape so gradients
/// reach W during training.
template <typename T>
Tensor<T> sample_raw_perturbations(int64_t d, int64_t k_prime, uint64_t seed) {
  Tensor<T> raw({d, k_prime});
  for (int64_t j = 0; j < d; ++j) {
    RngStream rng(seed, "attr", static_cast<uint64_t>(j));
    for (int64_t m = 0; m < k_prime; ++m) raw.at(j, m) = static_cast<T>(rng.normal());
  }
  return raw;
}

/// Dummy label embedding for query rows: the dedicated learned row for
/// classification, the scalar map evaluated at 0 (the mean of z-scored
/// targets) for regression.
template <typename T>
Tensor<T> dummy_label(const TokenizerParams<T>& p, bool classification) {
  Tensor<T> out({p.k});
  if (classification) {
    for (int64_t l = 0; l < p.k; ++l) out.at(l) = p.dummy_emb.value.at(0, l);
  } else {
    for (int64_t l = 0; l < p.k; ++l) out.at(l) = p.reg_b.value.at(l);
  }
  return out;
}

/// One tokenized instance row: token j = x_j u + r_j, token d+1 = the label
/// embedding (class row, scalar map of a z-scored target, or the dummy).
/// label >= 0 selects a class row; classification queries pass label = -1.
template <typename T>
Tensor<T> tokenize_instance_v2(const std::vector<T>& x, const AttributePerturbations<T>& perts,
                               const TokenizerParams<T>& p, bool classification, int label,
                               double target_z = 0.0) {
  const int64_t d = static_cast<int64_t>(x.size());
  check(perts.r.rows() >= d, "tokenize_instance_v2: perturbations cover fewer attributes than x");
  if (classification && label >= 0)
    check(label < 10, "tokenize_instance_v2: label index >= 10 exceeds the 10-class readout");
  Tensor<T> row({d + 1, p.k});
  for (int64_t j = 0; j < d; ++j)
    for (int64_t l = 0; l < p.k; ++l)
      row.at(j, l) = static_cast<T>(static_cast<double>(x[static_cast<size_t>(j)]) *
                                        static_cast<double>(p.u.value.at(l)) +
                                    static_cast<double>(perts.r.at(j, l)));
  if (classification) {
    if (label >= 0)
      for (int64_t l = 0; l < p.k; ++l) row.at(d, l) = p.class_emb.value.at(label, l);
    else
      for (int64_t l = 0; l < p.k; ++l) row.at(d, l) = p.dummy_emb.value.at(0, l);
  } else {
    for (int64_t l = 0; l < p.k; ++l)
      row.at(d, l) = static_cast<T>(target_z * static_cast<double>(p.reg_w.value.at(l)) +
                                    static_cast<double>(p.reg_b.value.at(l)));
  }
  return row;
}

/// The task a context is built from. Features must already be standardized;
/// regression targets must already be z-scored against the support.
template <typename T>
struct ContextTask {
  Tensor<T> x;  // (n_support + n_query) x d
  int64_t n_support = 0;
  int64_t n_query = 0;
  bool classification = true;
  int n_classes = 0;                // classification only
  std::vector<int> labels;          // support labels, size n_support
  std::vector<double> targets_z;    // z-scored support targets, size n_support
  Tensor<T> raw_perturbations;      // optional d x k' override of the seeded draw
};

/// The assembled (N_S + N_Q) x (d+1) x k token tensor plus role bookkeeping.
template <typename T>
struct ContextTensor {
  Tensor<T> values;  // 3-D: rows x (d+1) x k
  int64_t n_support = 0;
  int64_t n_query = 0;
  int64_t d = 0;
  int64_t k = 0;
  std::vector<uint8_t> is_query;
};

/// Builds the context token matrix on an existing tape so tokenizer gradients
/// flow during training. Returns the node holding (rows*(d+1)) x k tokens.
/// `tok_ids` are the tape leaves of TokenizerParams::all(), in that order.
template <typename T>
typename Tape<T>::Id context_on_tape(Tape<T>& tape, const std::vector<typename Tape<T>::Id>& tok_ids,
                                     const ContextTask<T>& task, uint64_t seed) {
  using Id = typename Tape<T>::Id;
  const int64_t rows = task.x.rows(), d = task.x.cols();
  check(rows == task.n_support + task.n_query, "context: row count mismatch");
  check(task.n_support >= 1, "context: need at least one support row");
  const Id u = tok_ids[0], w = tok_ids[1], cls = tok_ids[2], dum = tok_ids[3], rw = tok_ids[4],
           rb = tok_ids[5];
  const int64_t k_prime = tape.value(w).cols();

  Id raw = task.raw_perturbations.data.empty()
               ? tape.leaf(sample_raw_perturbations<T>(d, k_prime, seed))
               : tape.leaf(task.raw_perturbations);
  Id r = tape.matmul(raw, tape.transpose(w));

  Id labels_mat;
  if (task.classification) {
    check(static_cast<int64_t>(task.labels.size()) == task.n_support,
          "context: support label count mismatch");
    for (int y : task.labels)
      check(y >= 0 && y < 10, "context: label index >= 10 exceeds the 10-class readout");
    std::vector<int64_t> idx(task.labels.begin(), task.labels.end());
    Id sup = tape.gather_rows(cls, idx);
    if (task.n_query > 0) {
      Id q = tape.gather_rows(dum, std::vector<int64_t>(static_cast<size_t>(task.n_query), 0));
      labels_mat = tape.concat_rows(sup, q);
    } else {
      labels_mat = sup;
    }
  } else {
    check(static_cast<int64_t>(task.targets_z.size()) == task.n_support,
          "context: support target count mismatch");
    std::vector<double> s = task.targets_z;
    s.resize(static_cast<size_t>(rows), 0.0);  // queries sit at the z-scored mean
    labels_mat = tape.scale_rows_outer(s, rw, rb);
  }
  return tape.assemble_context(task.x, u, r, labels_mat);
}

/// One-shot context assembly (inference). One shared perturbation draw covers
/// every row; identical seeds give bit-identical tensors.
template <typename T>
ContextTensor<T> build_context(TokenizerParams<T>& params, const ContextTask<T>& task,
                               uint64_t seed) {
  Tape<T> tape;
  std::vector<typename Tape<T>::Id> ids;
  for (Parameter<T>* p : params.all()) ids.push_back(tape.leaf(p->value));
  auto ctx = context_on_tape(tape, ids, task, seed);
  ContextTensor<T> out;
  out.n_support = task.n_support;
  out.n_query = task.n_query;
  out.d = task.x.cols();
  out.k = params.k;
  out.values = tape.value(ctx);
  out.values.shape = {task.n_support + task.n_query, out.d + 1, out.k};
  out.is_query.assign(static_cast<size_t>(out.n_support + out.n_query), 0);
  for (int64_t i = out.n_support; i < out.n_support + out.n_query; ++i)
    out.is_query[static_cast<size_t>(i)] = 1;
  return out;
}

/// TabPFN-v1-style context: parameters for the zero-pad tokenizer.
template <typename T>
struct V1Params {
  int64_t k_pad = 100;
  int64_t k = 32;
  Tensor<T> px;    // k_pad x k, feature projection (no bias)
  Tensor<T> py;    // 10 x k, class label projection
  Tensor<T> preg;  // k, regression label map
};

template <typename T>
V1Params<T> init_v1(int64_t k_pad, int64_t k, uint64_t seed) {
  V1Params<T> p;
  p.k_pad = k_pad;
  p.k = k;
  RngStream r0(seed, "init.v1", 0), r1(seed, "init.v1", 1), r2(seed, "init.v1", 2);
  p.px = init_normal<T>({k_pad, k}, 1.0 / std::sqrt(static_cast<double>(k_pad)), r0);
  p.py = init_normal<T>({10, k}, 1.0, r1);
  p.preg = init_normal<T>({k}, 1.0, r2);
  return p;
}

/// v1 tokenization: zero-pad each instance to k_pad, project to k, and add the
/// projected label; queries use a zero dummy label. Output is one token per
/// row, (N_S + N_Q) x k in support-then-query order.
template <typename T>
Tensor<T> tokenize_context_v1(const ContextTask<T>& task, const V1Params<T>& p) {
  const int64_t d = task.x.cols();
  check(d <= p.k_pad, "tokenize_context_v1: d exceeds the pad width");
  const int64_t rows = task.x.rows();
  Tensor<T> out({rows, p.k});
  for (int64_t i = 0; i < rows; ++i) {
    for (int64_t l = 0; l < p.k; ++l) {
      double acc = 0.0;
      for (int64_t j = 0; j < d; ++j)  // padded tail contributes zero
        acc += static_cast<double>(task.x.at(i, j)) * static_cast<double>(p.px.at(j, l));
      out.at(i, l) = static_cast<T>(acc);
    }
    if (i < task.n_support) {
      if (task.classification) {
        int y = task.labels[static_cast<size_t>(i)];
        check(y >= 0 && y < 10, "tokenize_context_v1: label out of range");
        for (int64_t l = 0; l < p.k; ++l) out.at(i, l) += p.py.at(y, l);
      } else {
        double z = task.targets_z[static_cast<size_t>(i)];
        for (int64_t l = 0; l < p.k; ++l)
          out.at(i, l) =
              static_cast<T>(static_cast<double>(out.at(i, l)) + z * static_cast<double>(p.preg.at(l)));
      }
    }
  }
  return out;
}

}  // namespace ticl
