#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "ticl/tensor.hpp"

namespace ticl {

/// Attention masking inside a grouped attention node.
///   Full:        every member of a group attends to every member.
///   SupportSelf: the first n_support members are keys for everyone;
///                members past n_support additionally attend to themselves.
struct AttnGroups {
  std::vector<std::vector<int64_t>> groups;  // row indices into the token matrix
  int64_t n_support = -1;                    // -1 = full attention
  int heads = 1;
};

/// Dynamic tape for reverse-mode differentiation over Tensor<T> values.
/// A tape is built per forward pass and discarded afterwards; nodes hold
/// value snapshots, so captured activations never alias live buffers.
template <typename T>
class Tape {
 public:
  using Id = int32_t;

  Id leaf(Tensor<T> v, bool requires_grad = false) {
    return push(std::move(v), requires_grad, {});
  }

  const Tensor<T>& value(Id id) const { return nodes_[static_cast<size_t>(id)].value; }

  Tensor<T>& grad(Id id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.data.empty()) n.grad = Tensor<T>::zeros(n.value.shape);
    return n.grad;
  }

  bool requires_grad(Id id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }

  /// Seeds d(loss)/d(loss) = seed and propagates in reverse creation order.
  void backward(Id loss, T seed = T(1)) {
    check(value(loss).numel() == 1, "backward: loss must be scalar");
    grad(loss).data[0] += seed;
    for (Id id = loss; id >= 0; --id) {
      Node& n = nodes_[static_cast<size_t>(id)];
      if (n.requires_grad && n.backward && !n.grad.data.empty()) n.backward(*this);
    }
  }

  size_t size() const { return nodes_.size(); }

  // ---- ops ----

  Id add(Id a, Id b) {
    check_dims(value(a).same_shape(value(b)), "add: shape mismatch");
    Tensor<T> out = value(a);
    const Tensor<T>& bv = value(b);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv.data[i];
    return push(std::move(out), requires_grad(a) || requires_grad(b), [a, b](Tape& t, Id self) {
      const Tensor<T>& g = t.grad(self);
      if (t.requires_grad(a)) accumulate(t.grad(a), g);
      if (t.requires_grad(b)) accumulate(t.grad(b), g);
    });
  }

  /// x [n x k] + row vector b [k].
  Id add_bias(Id x, Id b) {
    const Tensor<T>& xv = value(x);
    const Tensor<T>& bv = value(b);
    check_dims(xv.rank() == 2 && bv.numel() == xv.cols(), "add_bias: shape mismatch");
    Tensor<T> out = xv;
    for (int64_t i = 0; i < xv.rows(); ++i)
      for (int64_t j = 0; j < xv.cols(); ++j) out.at(i, j) += bv.at(j);
    return push(std::move(out), requires_grad(x) || requires_grad(b), [x, b](Tape& t, Id self) {
      const Tensor<T>& g = t.grad(self);
      if (t.requires_grad(x)) accumulate(t.grad(x), g);
      if (t.requires_grad(b)) {
        Tensor<T>& gb = t.grad(b);
        for (int64_t i = 0; i < g.rows(); ++i)
          for (int64_t j = 0; j < g.cols(); ++j)
            gb.at(j) = static_cast<T>(static_cast<double>(gb.at(j)) + static_cast<double>(g.at(i, j)));
      }
    });
  }

  Id scale(Id a, double c) {
    Tensor<T> out = value(a);
    for (T& v : out.data) v = static_cast<T>(static_cast<double>(v) * c);
    return push(std::move(out), requires_grad(a), [a, c](Tape& t, Id self) {
      if (!t.requires_grad(a)) return;
      const Tensor<T>& g = t.grad(self);
      Tensor<T>& ga = t.grad(a);
      for (size_t i = 0; i < g.data.size(); ++i)
        ga.data[i] = static_cast<T>(static_cast<double>(ga.data[i]) + c * static_cast<double>(g.data[i]));
    });
  }

  Id transpose(Id a) {
    const Tensor<T>& av = value(a);
    check_dims(av.rank() == 2, "transpose expects a matrix");
    Tensor<T> out({av.cols(), av.rows()});
    for (int64_t i = 0; i < av.rows(); ++i)
      for (int64_t j = 0; j < av.cols(); ++j) out.at(j, i) = av.at(i, j);
    return push(std::move(out), requires_grad(a), [a](Tape& t, Id self) {
      if (!t.requires_grad(a)) return;
      const Tensor<T>& g = t.grad(self);
      Tensor<T>& ga = t.grad(a);
      for (int64_t i = 0; i < g.rows(); ++i)
        for (int64_t j = 0; j < g.cols(); ++j) ga.at(j, i) += g.at(i, j);
    });
  }

  Id matmul(Id a, Id b) {
    Tensor<T> out = ticl::matmul(value(a), value(b));
    return push(std::move(out), requires_grad(a) || requires_grad(b), [a, b](Tape& t, Id self) {
      const Tensor<T>& g = t.grad(self);
      const Tensor<T>& av = t.value(a);
      const Tensor<T>& bv = t.value(b);
      if (t.requires_grad(a))  // dA += G * B^T
        kernels::matmul_nt(g.data.data(), bv.data.data(), t.grad(a).data.data(), g.rows(),
                           g.cols(), av.cols(), true);
      if (t.requires_grad(b))  // dB += A^T * G
        kernels::matmul_tn(av.data.data(), g.data.data(), t.grad(b).data.data(), bv.rows(),
                           av.rows(), g.cols(), true);
    });
  }

  /// Token-wise layer normalization over the last dimension, eps added to the
  /// variance. gamma/beta are k-vectors.
  Id layer_norm(Id x, Id gamma, Id beta, double eps = 1e-5) {
    const Tensor<T>& xv = value(x);
    check_dims(xv.rank() == 2, "layer_norm expects a matrix");
    const int64_t n = xv.rows(), k = xv.cols();
    const Tensor<T>& gv = value(gamma);
    const Tensor<T>& bv = value(beta);
    check_dims(gv.numel() == k && bv.numel() == k, "layer_norm: gamma/beta width mismatch");
    Tensor<T> out({n, k});
    Tensor<T> xhat({n, k});
    std::vector<double> inv_std(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
      double mean = 0.0;
      for (int64_t j = 0; j < k; ++j) mean += static_cast<double>(xv.at(i, j));
      mean /= static_cast<double>(k);
      double var = 0.0;
      for (int64_t j = 0; j < k; ++j) {
        double d = static_cast<double>(xv.at(i, j)) - mean;
        var += d * d;
      }
      var /= static_cast<double>(k);
      double is = 1.0 / std::sqrt(var + eps);
      inv_std[static_cast<size_t>(i)] = is;
      for (int64_t j = 0; j < k; ++j) {
        double xh = (static_cast<double>(xv.at(i, j)) - mean) * is;
        xhat.at(i, j) = static_cast<T>(xh);
        out.at(i, j) = static_cast<T>(xh * static_cast<double>(gv.at(j)) + static_cast<double>(bv.at(j)));
      }
    }
    bool rg = requires_grad(x) || requires_grad(gamma) || requires_grad(beta);
    return push(std::move(out), rg,
                [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, Id self) {
                  const Tensor<T>& g = t.grad(self);
                  const Tensor<T>& gv = t.value(gamma);
                  const int64_t n = g.rows(), k = g.cols();
                  if (t.requires_grad(gamma)) {
                    Tensor<T>& gg = t.grad(gamma);
                    for (int64_t j = 0; j < k; ++j) {
                      double acc = static_cast<double>(gg.at(j));
                      for (int64_t i = 0; i < n; ++i)
                        acc += static_cast<double>(g.at(i, j)) * static_cast<double>(xhat.at(i, j));
                      gg.at(j) = static_cast<T>(acc);
                    }
                  }
                  if (t.requires_grad(beta)) {
                    Tensor<T>& gb = t.grad(beta);
                    for (int64_t j = 0; j < k; ++j) {
                      double acc = static_cast<double>(gb.at(j));
                      for (int64_t i = 0; i < n; ++i) acc += static_cast<double>(g.at(i, j));
                      gb.at(j) = static_cast<T>(acc);
                    }
                  }
                  if (t.requires_grad(x)) {
                    Tensor<T>& gx = t.grad(x);
                    for (int64_t i = 0; i < n; ++i) {
                      double mean_dy = 0.0, mean_dy_xhat = 0.0;
                      for (int64_t j = 0; j < k; ++j) {
                        double dy = static_cast<double>(g.at(i, j)) * static_cast<double>(gv.at(j));
                        mean_dy += dy;
                        mean_dy_xhat += dy * static_cast<double>(xhat.at(i, j));
                      }
                      mean_dy /= static_cast<double>(k);
                      mean_dy_xhat /= static_cast<double>(k);
                      for (int64_t j = 0; j < k; ++j) {
                        double dy = static_cast<double>(g.at(i, j)) * static_cast<double>(gv.at(j));
                        double dx = (dy - mean_dy - static_cast<double>(xhat.at(i, j)) * mean_dy_xhat) *
                                    inv_std[static_cast<size_t>(i)];
                        gx.at(i, j) = static_cast<T>(static_cast<double>(gx.at(i, j)) + dx);
                      }
                    }
                  }
                });
  }

  Id gelu(Id x) {
    const Tensor<T>& xv = value(x);
    Tensor<T> out = xv;
    Tensor<T> th({xv.numel()});  // tanh cache reused by the backward pass
    const T c = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
    const T a3 = static_cast<T>(0.044715);
    for (size_t i = 0; i < out.data.size(); ++i) {
      const T v = out.data[i];
      const T t = std::tanh(c * (v + a3 * v * v * v));
      th.data[i] = t;
      out.data[i] = static_cast<T>(0.5) * v * (T(1) + t);
    }
    return push(std::move(out), requires_grad(x), [x, th = std::move(th), c, a3](Tape& t, Id self) {
      if (!t.requires_grad(x)) return;
      const Tensor<T>& g = t.grad(self);
      const Tensor<T>& xv = t.value(x);
      Tensor<T>& gx = t.grad(x);
      for (size_t i = 0; i < g.data.size(); ++i) {
        const T v = xv.data[i];
        const T tv = th.data[i];
        const T deriv = static_cast<T>(0.5) * (T(1) + tv) +
                        static_cast<T>(0.5) * v * (T(1) - tv * tv) * c * (T(1) + T(3) * a3 * v * v);
        gx.data[i] += g.data[i] * deriv;
      }
    });
  }

  /// out[i] = x[idx[i]]; backward scatter-adds.
  Id gather_rows(Id x, std::vector<int64_t> idx) {
    const Tensor<T>& xv = value(x);
    check_dims(xv.rank() == 2, "gather_rows expects a matrix");
    const int64_t k = xv.cols();
    Tensor<T> out({static_cast<int64_t>(idx.size()), k});
    for (size_t i = 0; i < idx.size(); ++i) {
      check(idx[i] >= 0 && idx[i] < xv.rows(), "gather_rows: index out of range");
      for (int64_t j = 0; j < k; ++j) out.at(static_cast<int64_t>(i), j) = xv.at(idx[i], j);
    }
    return push(std::move(out), requires_grad(x), [x, idx = std::move(idx)](Tape& t, Id self) {
      if (!t.requires_grad(x)) return;
      const Tensor<T>& g = t.grad(self);
      Tensor<T>& gx = t.grad(x);
      const int64_t k = g.cols();
      for (size_t i = 0; i < idx.size(); ++i)
        for (int64_t j = 0; j < k; ++j)
          gx.at(idx[i], j) = static_cast<T>(static_cast<double>(gx.at(idx[i], j)) +
                                            static_cast<double>(g.at(static_cast<int64_t>(i), j)));
    });
  }

  Id concat_rows(Id a, Id b) {
    const Tensor<T>& av = value(a);
    const Tensor<T>& bv = value(b);
    check_dims(av.rank() == 2 && bv.rank() == 2 && av.cols() == bv.cols(),
               "concat_rows: width mismatch");
    Tensor<T> out({av.rows() + bv.rows(), av.cols()});
    std::copy(av.data.begin(), av.data.end(), out.data.begin());
    std::copy(bv.data.begin(), bv.data.end(), out.data.begin() + av.data.size());
    return push(std::move(out), requires_grad(a) || requires_grad(b),
                [a, b, na = av.rows() * av.cols()](Tape& t, Id self) {
                  const Tensor<T>& g = t.grad(self);
                  if (t.requires_grad(a)) {
                    Tensor<T>& ga = t.grad(a);
                    for (int64_t i = 0; i < na; ++i) ga.at(i) += g.at(i);
                  }
                  if (t.requires_grad(b)) {
                    Tensor<T>& gb = t.grad(b);
                    for (int64_t i = na; i < g.numel(); ++i) gb.at(i - na) += g.at(i);
                  }
                });
  }

  /// Labelled rows of the kind  row_i = s_i * w + b  (regression target embedding).
  Id scale_rows_outer(const std::vector<double>& s, Id w, Id b) {
    const Tensor<T>& wv = value(w);
    const Tensor<T>& bv = value(b);
    const int64_t k = wv.numel();
    check_dims(bv.numel() == k, "scale_rows_outer: w/b width mismatch");
    const int64_t n = static_cast<int64_t>(s.size());
    Tensor<T> out({n, k});
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < k; ++j)
        out.at(i, j) = static_cast<T>(s[static_cast<size_t>(i)] * static_cast<double>(wv.at(j)) +
                                      static_cast<double>(bv.at(j)));
    return push(std::move(out), requires_grad(w) || requires_grad(b), [s, w, b](Tape& t, Id self) {
      const Tensor<T>& g = t.grad(self);
      const int64_t n = g.rows(), k = g.cols();
      if (t.requires_grad(w)) {
        Tensor<T>& gw = t.grad(w);
        for (int64_t j = 0; j < k; ++j) {
          double acc = static_cast<double>(gw.at(j));
          for (int64_t i = 0; i < n; ++i) acc += s[static_cast<size_t>(i)] * static_cast<double>(g.at(i, j));
          gw.at(j) = static_cast<T>(acc);
        }
      }
      if (t.requires_grad(b)) {
        Tensor<T>& gb = t.grad(b);
        for (int64_t j = 0; j < k; ++j) {
          double acc = static_cast<double>(gb.at(j));
          for (int64_t i = 0; i < n; ++i) acc += static_cast<double>(g.at(i, j));
          gb.at(j) = static_cast<T>(acc);
        }
      }
    });
  }

  /// Builds the (rows*(d+1)) x k token matrix of a context:
  /// token[i][j] = X[i][j] * u + R[j] for j < d, token[i][d] = labels[i].
  Id assemble_context(const Tensor<T>& X, Id u, Id R, Id labels) {
    const int64_t rows = X.rows(), d = X.cols();
    const Tensor<T>& uv = value(u);
    const Tensor<T>& rv = value(R);
    const Tensor<T>& lv = value(labels);
    const int64_t k = uv.numel();
    check_dims(rv.rows() == d && rv.cols() == k, "assemble_context: perturbation shape");
    check_dims(lv.rows() == rows && lv.cols() == k, "assemble_context: label rows");
    const int64_t cols = d + 1;
    Tensor<T> out({rows * cols, k});
    for (int64_t i = 0; i < rows; ++i) {
      for (int64_t j = 0; j < d; ++j) {
        double x = static_cast<double>(X.at(i, j));
        T* dst = out.data.data() + (i * cols + j) * k;
        for (int64_t l = 0; l < k; ++l)
          dst[l] = static_cast<T>(x * static_cast<double>(uv.at(l)) + static_cast<double>(rv.at(j, l)));
      }
      T* dst = out.data.data() + (i * cols + d) * k;
      for (int64_t l = 0; l < k; ++l) dst[l] = lv.at(i, l);
    }
    return push(std::move(out), requires_grad(u) || requires_grad(R) || requires_grad(labels),
                [X, u, R, labels](Tape& t, Id self) {
                  const Tensor<T>& g = t.grad(self);
                  const int64_t rows = X.rows(), d = X.cols(), cols = d + 1, k = g.cols();
                  if (t.requires_grad(u)) {
                    Tensor<T>& gu = t.grad(u);
                    for (int64_t l = 0; l < k; ++l) {
                      double acc = static_cast<double>(gu.at(l));
                      for (int64_t i = 0; i < rows; ++i)
                        for (int64_t j = 0; j < d; ++j)
                          acc += static_cast<double>(X.at(i, j)) *
                                 static_cast<double>(g.at(i * cols + j, l));
                      gu.at(l) = static_cast<T>(acc);
                    }
                  }
                  if (t.requires_grad(R)) {
                    Tensor<T>& gr = t.grad(R);
                    for (int64_t j = 0; j < d; ++j)
                      for (int64_t l = 0; l < k; ++l) {
                        double acc = static_cast<double>(gr.at(j, l));
                        for (int64_t i = 0; i < rows; ++i)
                          acc += static_cast<double>(g.at(i * cols + j, l));
                        gr.at(j, l) = static_cast<T>(acc);
                      }
                  }
                  if (t.requires_grad(labels)) {
                    Tensor<T>& gl = t.grad(labels);
                    for (int64_t i = 0; i < rows; ++i)
                      for (int64_t l = 0; l < k; ++l)
                        gl.at(i, l) = static_cast<T>(static_cast<double>(gl.at(i, l)) +
                                                     static_cast<double>(g.at(i * cols + d, l)));
                  }
                });
  }

  /// Grouped multi-head self-attention without the output mix (which is a
  /// separate matmul). Rows absent from every group pass through as zero;
  /// model code always covers each row exactly once. Softmax probabilities
  /// are kept for the backward pass and can be inspected by introspection
  /// hooks via `last_probs`.
  Id attention_groups(Id q, Id k, Id v, const AttnGroups& spec,
                      std::vector<Tensor<T>>* probs_out = nullptr) {
    const Tensor<T>& qv = value(q);
    const Tensor<T>& kv = value(k);
    const Tensor<T>& vv = value(v);
    const int64_t width = qv.cols();
    check_dims(kv.same_shape(qv) && vv.same_shape(qv), "attention_groups: Q/K/V shapes differ");
    check(spec.heads >= 1 && width % spec.heads == 0,
          "attention_groups: width not divisible by heads");
    const int heads = spec.heads;
    const int64_t dh = width / heads;
    const double sc = 1.0 / std::sqrt(static_cast<double>(dh));

    Tensor<T> out({qv.rows(), width});
    // probs[g] has shape {heads, n_g, n_keys_max}. For SupportSelf the key
    // column layout is [0, n_support) then one extra slot for "self".
    std::vector<Tensor<T>> probs(spec.groups.size());
    for (size_t gi = 0; gi < spec.groups.size(); ++gi) {
      const auto& grp = spec.groups[gi];
      const int64_t ng = static_cast<int64_t>(grp.size());
      const bool full = spec.n_support < 0;
      const int64_t ns = full ? ng : spec.n_support;
      const int64_t kc = full ? ng : ns + 1;
      check(ns >= 1 && ns <= ng, "attention_groups: bad support count");
      probs[gi] = Tensor<T>({heads, ng, kc});
      std::vector<T> sc_scores(static_cast<size_t>(kc));
      for (int h = 0; h < heads; ++h) {
        const int64_t off = h * dh;
        for (int64_t a = 0; a < ng; ++a) {
          const int64_t qrow = grp[static_cast<size_t>(a)];
          const int64_t nkeys = full ? ng : (a < ns ? ns : ns + 1);
          T mx = std::numeric_limits<T>::lowest();
          const T* __restrict qp = qv.data.data() + qrow * width + off;
          for (int64_t tkey = 0; tkey < nkeys; ++tkey) {
            const int64_t krow = (full || tkey < ns) ? grp[static_cast<size_t>(tkey)] : qrow;
            const T* __restrict kp = kv.data.data() + krow * width + off;
            T s = 0;
            for (int64_t l = 0; l < dh; ++l) s += qp[l] * kp[l];
            s = static_cast<T>(static_cast<double>(s) * sc);
            sc_scores[static_cast<size_t>(tkey)] = s;
            mx = std::max(mx, s);
          }
          // denominator in double: probability rows must sum to 1 +- 1e-6
          double denom = 0.0;
          T* __restrict prow = probs[gi].data.data() + (h * ng + a) * kc;
          for (int64_t tkey = 0; tkey < nkeys; ++tkey) {
            const T e = std::exp(static_cast<T>(sc_scores[static_cast<size_t>(tkey)] - mx));
            prow[tkey] = e;
            denom += static_cast<double>(e);
          }
          const T inv = static_cast<T>(1.0 / denom);
          for (int64_t tkey = 0; tkey < nkeys; ++tkey) prow[tkey] *= inv;
          T* __restrict op = out.data.data() + qrow * width + off;
          for (int64_t tkey = 0; tkey < nkeys; ++tkey) {
            const int64_t krow = (full || tkey < ns) ? grp[static_cast<size_t>(tkey)] : qrow;
            const T p = prow[tkey];
            const T* __restrict vp = vv.data.data() + krow * width + off;
            for (int64_t l = 0; l < dh; ++l) op[l] += p * vp[l];
          }
        }
      }
    }
    if (probs_out) *probs_out = probs;

    bool rg = requires_grad(q) || requires_grad(k) || requires_grad(v);
    return push(std::move(out), rg,
                [q, k, v, spec, probs = std::move(probs), heads, dh, sc](Tape& t, Id self) {
                  const Tensor<T>& g = t.grad(self);
                  const Tensor<T>& qv = t.value(q);
                  const Tensor<T>& kv = t.value(k);
                  const Tensor<T>& vv = t.value(v);
                  Tensor<T>& gq = t.grad(q);
                  Tensor<T>& gk = t.grad(k);
                  Tensor<T>& gv = t.grad(v);
                  const int64_t width = qv.cols();
                  for (size_t gi = 0; gi < spec.groups.size(); ++gi) {
                    const auto& grp = spec.groups[gi];
                    const int64_t ng = static_cast<int64_t>(grp.size());
                    const bool full = spec.n_support < 0;
                    const int64_t ns = full ? ng : spec.n_support;
                    const int64_t kc = full ? ng : ns + 1;
                    std::vector<T> dp(static_cast<size_t>(kc));
                    for (int h = 0; h < heads; ++h) {
                      const int64_t off = h * dh;
                      for (int64_t a = 0; a < ng; ++a) {
                        const int64_t qrow = grp[static_cast<size_t>(a)];
                        const int64_t nkeys = full ? ng : (a < ns ? ns : ns + 1);
                        const T* __restrict go = g.data.data() + qrow * width + off;
                        const T* __restrict prow = probs[gi].data.data() + (h * ng + a) * kc;
                        // dP and the softmax pullback
                        T dot = 0;
                        for (int64_t tkey = 0; tkey < nkeys; ++tkey) {
                          const int64_t krow = (full || tkey < ns) ? grp[static_cast<size_t>(tkey)] : qrow;
                          const T* __restrict vp = vv.data.data() + krow * width + off;
                          T d = 0;
                          for (int64_t l = 0; l < dh; ++l) d += go[l] * vp[l];
                          dp[static_cast<size_t>(tkey)] = d;
                          dot += d * prow[tkey];
                        }
                        const T* __restrict vqp = qv.data.data() + qrow * width + off;
                        T* __restrict gqp = gq.data.data() + qrow * width + off;
                        for (int64_t tkey = 0; tkey < nkeys; ++tkey) {
                          const int64_t krow = (full || tkey < ns) ? grp[static_cast<size_t>(tkey)] : qrow;
                          const T p = prow[tkey];
                          const T ds = static_cast<T>(static_cast<double>(p) *
                                                      static_cast<double>(dp[static_cast<size_t>(tkey)] - dot) * sc);
                          // dV += P^T dO ; dQ += dS K ; dK += dS Q
                          T* __restrict gvp = gv.data.data() + krow * width + off;
                          const T* __restrict vkp = kv.data.data() + krow * width + off;
                          T* __restrict gkp = gk.data.data() + krow * width + off;
                          for (int64_t l = 0; l < dh; ++l) {
                            gvp[l] += p * go[l];
                            gqp[l] += ds * vkp[l];
                            gkp[l] += ds * vqp[l];
                          }
                        }
                      }
                    }
                  }
                });
  }

  /// Mean cross-entropy of logits [n x 10] against integer labels, with the
  /// softmax restricted to the first n_classes entries.
  Id cross_entropy_masked(Id logits, const std::vector<int>& labels, int n_classes) {
    const Tensor<T>& lg = value(logits);
    const int64_t n = lg.rows(), w = lg.cols();
    check(static_cast<int64_t>(labels.size()) == n, "cross_entropy: label count mismatch");
    check(n_classes >= 2 && n_classes <= w, "cross_entropy: bad class count");
    Tensor<T> probs({n, w});
    double loss = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      check(labels[static_cast<size_t>(i)] >= 0 && labels[static_cast<size_t>(i)] < n_classes,
            "cross_entropy: label out of range");
      double mx = -std::numeric_limits<double>::infinity();
      for (int64_t j = 0; j < n_classes; ++j) mx = std::max(mx, static_cast<double>(lg.at(i, j)));
      double denom = 0.0;
      for (int64_t j = 0; j < n_classes; ++j) denom += std::exp(static_cast<double>(lg.at(i, j)) - mx);
      for (int64_t j = 0; j < n_classes; ++j)
        probs.at(i, j) = static_cast<T>(std::exp(static_cast<double>(lg.at(i, j)) - mx) / denom);
      loss -= std::log(static_cast<double>(probs.at(i, labels[static_cast<size_t>(i)])) );
    }
    loss /= static_cast<double>(n);
    if (!std::isfinite(loss)) throw NumericError("cross_entropy: non-finite loss");
    Tensor<T> out({1});
    out.at(0) = static_cast<T>(loss);
    return push(std::move(out), requires_grad(logits),
                [logits, labels, n_classes, probs = std::move(probs)](Tape& t, Id self) {
                  if (!t.requires_grad(logits)) return;
                  const double g = static_cast<double>(t.grad(self).at(0));
                  Tensor<T>& gl = t.grad(logits);
                  const int64_t n = gl.rows();
                  const double inv = g / static_cast<double>(n);
                  for (int64_t i = 0; i < n; ++i)
                    for (int64_t j = 0; j < n_classes; ++j) {
                      double p = static_cast<double>(probs.at(i, j));
                      double ind = (j == labels[static_cast<size_t>(i)]) ? 1.0 : 0.0;
                      gl.at(i, j) = static_cast<T>(static_cast<double>(gl.at(i, j)) + (p - ind) * inv);
                    }
                });
  }

  /// Mean squared error of pred [n x 1] against targets.
  Id mse(Id pred, const std::vector<double>& targets) {
    const Tensor<T>& pv = value(pred);
    const int64_t n = pv.rows();
    check(static_cast<int64_t>(targets.size()) == n, "mse: target count mismatch");
    double loss = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      double d = static_cast<double>(pv.at(i, 0)) - targets[static_cast<size_t>(i)];
      loss += d * d;
    }
    loss /= static_cast<double>(n);
    if (!std::isfinite(loss)) throw NumericError("mse: non-finite loss");
    Tensor<T> out({1});
    out.at(0) = static_cast<T>(loss);
    return push(std::move(out), requires_grad(pred), [pred, targets](Tape& t, Id self) {
      if (!t.requires_grad(pred)) return;
      const double g = static_cast<double>(t.grad(self).at(0));
      Tensor<T>& gp = t.grad(pred);
      const int64_t n = gp.rows();
      for (int64_t i = 0; i < n; ++i) {
        double d = static_cast<double>(t.value(pred).at(i, 0)) - targets[static_cast<size_t>(i)];
        gp.at(i, 0) = static_cast<T>(static_cast<double>(gp.at(i, 0)) + 2.0 * d * g / static_cast<double>(n));
      }
    });
  }

  Id add_scalars(Id a, Id b) {
    check(value(a).numel() == 1 && value(b).numel() == 1, "add_scalars expects scalars");
    Tensor<T> out({1});
    out.at(0) = static_cast<T>(static_cast<double>(value(a).at(0)) + static_cast<double>(value(b).at(0)));
    return push(std::move(out), requires_grad(a) || requires_grad(b), [a, b](Tape& t, Id self) {
      const T g = t.grad(self).at(0);
      if (t.requires_grad(a)) t.grad(a).at(0) += g;
      if (t.requires_grad(b)) t.grad(b).at(0) += g;
    });
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    std::function<void(Tape&)> backward;
  };

  static void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
    for (size_t i = 0; i < dst.data.size(); ++i)
      dst.data[i] = static_cast<T>(static_cast<double>(dst.data[i]) + static_cast<double>(src.data[i]));
  }

  Id push(Tensor<T> v, bool rg, std::function<void(Tape&, Id)> bwd) {
    Id id = static_cast<Id>(nodes_.size());
    Node n;
    n.value = std::move(v);
    n.requires_grad = rg;
    if (rg && bwd) n.backward = [id, bwd = std::move(bwd)](Tape& t) { bwd(t, id); };
    nodes_.push_back(std::move(n));
    return id;
  }

  std::vector<Node> nodes_;
};

using TapeF = Tape<float>;
using TapeD = Tape<double>;

}  // namespace ticl
