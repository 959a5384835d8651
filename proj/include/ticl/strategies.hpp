#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ticl/classical.hpp"
#include "ticl/dataset.hpp"
#include "ticl/model.hpp"
#include "ticl/parallel.hpp"

namespace ticl {

/// Per-query predictions plus provenance.
struct PredictionSet {
  bool classification = true;
  std::vector<int> labels;                 // hard labels (classification)
  std::vector<std::vector<double>> probs;  // per-query class probabilities
  std::vector<double> values;              // regression
  std::string strategy = "base";
  int member_count = 1;
  uint64_t seed = 0;

  int64_t n_queries() const {
    return classification ? static_cast<int64_t>(labels.size())
                          : static_cast<int64_t>(values.size());
  }
};

/// The base in-context predictor seen by every strategy. Implementations must
/// be deterministic given (train, test, seed).
struct Predictor {
  virtual ~Predictor() = default;
  virtual PredictionSet predict(const TabularDataset& train, const TensorF& test_x,
                                uint64_t seed) const = 0;
};

/// Wraps model weights as a Predictor.
class IclPredictor : public Predictor {
 public:
  explicit IclPredictor(Weights<float>& w) : w_(&w) {}

  PredictionSet predict(const TabularDataset& train, const TensorF& test_x,
                        uint64_t seed) const override {
    PredictionSet out;
    out.seed = seed;
    if (train.task == TaskKind::Classification) {
      out.classification = true;
      out.probs = predict_classification(*w_, train.features(), train.labels, train.n_classes,
                                         test_x, seed);
      for (const auto& p : out.probs) {
        int arg = 0;
        for (size_t c = 1; c < p.size(); ++c)
          if (p[c] > p[static_cast<size_t>(arg)]) arg = static_cast<int>(c);
        out.labels.push_back(arg);
      }
    } else {
      out.classification = false;
      std::vector<double> sy(train.targets.begin(), train.targets.end());
      out.values = predict_regression(*w_, train.features(), sy, test_x, seed);
    }
    return out;
  }

 private:
  Weights<float>* w_;
};

/// Majority vote over hard labels (ties broken by summed member
/// probabilities, then the lowest label index) or the arithmetic mean.
inline PredictionSet aggregate(const std::vector<PredictionSet>& members, bool classification) {
  check(!members.empty(), "aggregate: no members");
  const int64_t nq = members[0].n_queries();
  for (const auto& m : members) {
    check(m.classification == classification, "aggregate: member task kinds differ");
    check(m.n_queries() == nq, "aggregate: member query counts differ");
  }
  PredictionSet out;
  out.classification = classification;
  out.member_count = static_cast<int>(members.size());
  out.strategy = "aggregate";
  if (!classification) {
    out.values.assign(static_cast<size_t>(nq), 0.0);
    for (const auto& m : members)
      for (int64_t q = 0; q < nq; ++q) out.values[static_cast<size_t>(q)] += m.values[static_cast<size_t>(q)];
    for (double& v : out.values) v /= static_cast<double>(members.size());
    return out;
  }
  size_t n_classes = 0;
  for (const auto& m : members)
    for (const auto& p : m.probs) n_classes = std::max(n_classes, p.size());
  for (int64_t q = 0; q < nq; ++q) {
    std::map<int, int> votes;
    for (const auto& m : members) ++votes[m.labels[static_cast<size_t>(q)]];
    int best_votes = 0;
    for (auto [lab, v] : votes) best_votes = std::max(best_votes, v);
    std::vector<int> tied;
    for (auto [lab, v] : votes)
      if (v == best_votes) tied.push_back(lab);
    int winner = tied[0];
    if (tied.size() > 1) {
      double best_mass = -1.0;
      for (int lab : tied) {
        double mass = 0.0;
        for (const auto& m : members)
          if (static_cast<size_t>(lab) < m.probs[static_cast<size_t>(q)].size())
            mass += m.probs[static_cast<size_t>(q)][static_cast<size_t>(lab)];
        if (mass > best_mass + 1e-12) {  // ties fall through to the lowest label
          best_mass = mass;
          winner = lab;
        }
      }
    }
    out.labels.push_back(winner);
    if (n_classes > 0) {
      std::vector<double> mean_p(n_classes, 0.0);
      for (const auto& m : members)
        for (size_t c = 0; c < m.probs[static_cast<size_t>(q)].size(); ++c)
          mean_p[c] += m.probs[static_cast<size_t>(q)][c];
      for (double& v : mean_p) v /= static_cast<double>(members.size());
      out.probs.push_back(std::move(mean_p));
    }
  }
  return out;
}

namespace detail {

template <typename Fn>
PredictionSet run_member(int64_t member, Fn&& fn) {
  try {
    return fn();
  } catch (const CapacityError& e) {
    throw CapacityError("member " + std::to_string(member) + ": " + e.what());
  } catch (const Error& e) {
    throw ContractError("member " + std::to_string(member) + ": " + e.what());
  }
}

}  // namespace detail

/// Random disjoint partition of the features into m = ceil(d/d') chunks of at
/// most d' columns; one base-predictor run per chunk, then vote/average.
inline PredictionSet subspace_ensemble_predict(const TabularDataset& train, const TensorF& test_x,
                                               int64_t d_prime, uint64_t seed,
                                               const Predictor& base, int threads = 1) {
  check(train.d >= 1 && d_prime >= 1, "subspace: d and d' must be >= 1");
  const int64_t d = train.d;
  std::vector<int64_t> order(static_cast<size_t>(d));
  for (int64_t j = 0; j < d; ++j) order[static_cast<size_t>(j)] = j;
  RngStream rng(seed, "subspace");
  rng.shuffle(order.begin(), order.end());
  const int64_t m = (d + d_prime - 1) / d_prime;
  std::vector<PredictionSet> members(static_cast<size_t>(m));
  parallel_for(m, threads, [&](int64_t i) {
    members[static_cast<size_t>(i)] = detail::run_member(i, [&] {
      std::vector<int64_t> cols(order.begin() + i * d_prime,
                                order.begin() + std::min(d, (i + 1) * d_prime));
      TabularDataset sub = select_columns(train, cols);
      TensorF tx({test_x.rows(), static_cast<int64_t>(cols.size())});
      for (int64_t r = 0; r < test_x.rows(); ++r)
        for (size_t c = 0; c < cols.size(); ++c)
          tx.at(r, static_cast<int64_t>(c)) = test_x.at(r, cols[c]);
      return base.predict(sub, tx, RngStream(seed, "member", static_cast<uint64_t>(i)).next_u64());
    });
  });
  PredictionSet out = aggregate(members, train.task == TaskKind::Classification);
  out.strategy = "subspace";
  out.seed = seed;
  return out;
}

/// Per bag: bootstrap-resample the training rows (single-bag runs keep the
/// full set), fit PCA on the resample, project both sides, run the base
/// predictor in the projected space.
inline PredictionSet pca_bagging_predict(const TabularDataset& train, const TensorF& test_x,
                                         int64_t target_dim, int bags, uint64_t seed,
                                         const Predictor& base, int threads = 1) {
  check(bags >= 1, "pca-bag: need at least one bag");
  if (target_dim > train.d)
    throw ContractError("pca-bag: target dimension exceeds the feature count");
  std::vector<PredictionSet> members(static_cast<size_t>(bags));
  parallel_for(bags, threads, [&](int64_t bag) {
    members[static_cast<size_t>(bag)] = detail::run_member(bag, [&] {
      TabularDataset sample = train;
      if (bags > 1) {
        RngStream rng(seed, "bag", static_cast<uint64_t>(bag));
        std::vector<int64_t> idx(static_cast<size_t>(train.n));
        for (auto& v : idx) v = rng.uniform_int(0, train.n - 1);
        sample = take_rows(train, idx);
      }
      auto pca = pca_fit(sample.features(), target_dim, 200,
                         RngStream(seed, "pca", static_cast<uint64_t>(bag)).next_u64());
      TensorF strain = pca_transform(pca, sample.features());
      TensorF stest = pca_transform(pca, test_x);
      TabularDataset proj = sample;
      proj.d = target_dim;
      proj.col_names.clear();
      proj.categorical.assign(static_cast<size_t>(target_dim), false);
      proj.sym.assign(static_cast<size_t>(target_dim), {});
      for (int64_t c = 0; c < target_dim; ++c) proj.col_names.push_back("pc" + std::to_string(c));
      proj.x = strain.data;
      return base.predict(proj, stest,
                          RngStream(seed, "member", static_cast<uint64_t>(bag)).next_u64());
    });
  });
  PredictionSet out = aggregate(members, train.task == TaskKind::Classification);
  out.strategy = "pca-bag";
  out.seed = seed;
  return out;
}

// ---------- many-class codecs ----------

/// Number of decimal digits needed for labels 0..C-1.
inline int decimal_digits(int n_classes) {
  check(n_classes >= 2, "codec: need at least 2 classes");
  int t = 1;
  int64_t cap = 10;
  while (cap < n_classes) {
    cap *= 10;
    ++t;
  }
  return t;
}

/// Base-10 digits of y, most significant first, fixed length t.
inline std::vector<int> decimal_encode(int y, int n_classes) {
  check(y >= 0 && y < n_classes, "decimal_encode: label out of range");
  const int t = decimal_digits(n_classes);
  std::vector<int> digits(static_cast<size_t>(t));
  int v = y;
  for (int j = t - 1; j >= 0; --j) {
    digits[static_cast<size_t>(j)] = v % 10;
    v /= 10;
  }
  return digits;
}

/// Inverts decimal_encode. Invalid digit vectors (>= C) clamp to the nearest
/// valid code by digit-wise Hamming distance, ties toward the smaller label.
inline int decimal_decode(const std::vector<int>& digits, int n_classes) {
  const int t = decimal_digits(n_classes);
  check(static_cast<int>(digits.size()) == t, "decimal_decode: wrong digit count");
  int64_t v = 0;
  for (int d : digits) {
    check(d >= 0 && d < 10, "decimal_decode: digit outside [0,10)");
    v = v * 10 + d;
  }
  if (v < n_classes) return static_cast<int>(v);
  int best = 0, best_dist = t + 1;
  for (int y = 0; y < n_classes; ++y) {
    auto code = decimal_encode(y, n_classes);
    int dist = 0;
    for (int j = 0; j < t; ++j)
      if (code[static_cast<size_t>(j)] != digits[static_cast<size_t>(j)]) ++dist;
    if (dist < best_dist) {
      best_dist = dist;
      best = y;
    }
  }
  return best;
}

/// C x L code matrix with entries in [0,10). DPT uses canonical decimal
/// digits, Star a permuted decimal, ECOC random codes of length L.
struct DigitCodec {
  enum class Mode { Dpt, Star, Ecoc };
  Mode mode = Mode::Dpt;
  int n_classes = 0;
  int digits = 0;                       // t
  int64_t length = 0;                   // L
  std::vector<std::vector<int>> code;   // per class
  std::vector<int> permutation;         // Star: class -> permuted class

  int column_symbols(int64_t col) const {
    int mx = 0;
    for (const auto& row : code) mx = std::max(mx, row[static_cast<size_t>(col)]);
    return mx + 1;
  }
};

inline DigitCodec make_dpt_codec(int n_classes) {
  DigitCodec c;
  c.mode = DigitCodec::Mode::Dpt;
  c.n_classes = n_classes;
  c.digits = decimal_digits(n_classes);
  c.length = c.digits;
  for (int y = 0; y < n_classes; ++y) c.code.push_back(decimal_encode(y, n_classes));
  return c;
}

/// Permuted decimal codec: class y gets the digits of perm[y].
inline DigitCodec make_star_codec(int n_classes, const std::vector<int>& perm) {
  check(static_cast<int>(perm.size()) == n_classes, "star codec: permutation size mismatch");
  std::vector<bool> seen(static_cast<size_t>(n_classes), false);
  for (int p : perm) {
    check(p >= 0 && p < n_classes && !seen[static_cast<size_t>(p)],
          "star codec: mapping is not a bijection");
    seen[static_cast<size_t>(p)] = true;
  }
  DigitCodec c;
  c.mode = DigitCodec::Mode::Star;
  c.n_classes = n_classes;
  c.digits = decimal_digits(n_classes);
  c.length = c.digits;
  c.permutation = perm;
  for (int y = 0; y < n_classes; ++y)
    c.code.push_back(decimal_encode(perm[static_cast<size_t>(y)], n_classes));
  return c;
}

/// Random 10-ary codes, rows pairwise distinct; resamples the matrix up to
/// 100 times before giving up.
inline DigitCodec make_ecoc_codec(int n_classes, int64_t length, uint64_t seed) {
  DigitCodec c;
  c.mode = DigitCodec::Mode::Ecoc;
  c.n_classes = n_classes;
  c.digits = decimal_digits(n_classes);
  c.length = length;
  for (int attempt = 0; attempt < 100; ++attempt) {
    RngStream rng(seed, "ecoc", static_cast<uint64_t>(attempt));
    c.code.assign(static_cast<size_t>(n_classes), {});
    for (int y = 0; y < n_classes; ++y) {
      c.code[static_cast<size_t>(y)].resize(static_cast<size_t>(length));
      for (int64_t j = 0; j < length; ++j)
        c.code[static_cast<size_t>(y)][static_cast<size_t>(j)] = static_cast<int>(rng.uniform_int(0, 9));
    }
    bool distinct = true;
    for (int a = 0; a < n_classes && distinct; ++a)
      for (int b = a + 1; b < n_classes && distinct; ++b)
        if (c.code[static_cast<size_t>(a)] == c.code[static_cast<size_t>(b)]) distinct = false;
    if (distinct) return c;
  }
  throw CodecError("ecoc: could not draw a distinct code matrix in 100 attempts");
}

enum class ManyClassMode { Dpt, Star, Ecoc };

struct ManyClassOptions {
  int dpt_ensembles_per_digit = 1;  // raise to ceil(sqrt(C)) for parity with Star
  int64_t ecoc_length = 0;          // 0 = default 2t
};

namespace detail {

/// Runs the base predictor per code column and returns, for every query, the
/// per-column symbol probability vectors.
inline std::vector<std::vector<std::vector<double>>> predict_code_columns(
    const TabularDataset& train, const TensorF& test_x, const DigitCodec& codec, uint64_t seed,
    const Predictor& base, int ensembles, int threads) {
  const int64_t L = codec.length;
  std::vector<std::vector<std::vector<double>>> column_probs(static_cast<size_t>(L));
  parallel_for(L, threads, [&](int64_t j) {
    const int symbols = codec.column_symbols(j);
    TabularDataset digit_train = train;
    digit_train.n_classes = std::max(symbols, 2);
    digit_train.label_names.clear();
    for (int64_t i = 0; i < train.n; ++i)
      digit_train.labels[static_cast<size_t>(i)] =
          codec.code[static_cast<size_t>(train.labels[static_cast<size_t>(i)])][static_cast<size_t>(j)];
    std::vector<PredictionSet> runs(static_cast<size_t>(ensembles));
    for (int e = 0; e < ensembles; ++e) {
      runs[static_cast<size_t>(e)] = detail::run_member(j, [&] {
        return base.predict(
            digit_train, test_x,
            RngStream(seed, "digit", static_cast<uint64_t>(j * 1000 + e)).next_u64());
      });
    }
    PredictionSet agg = ensembles == 1 ? runs[0] : aggregate(runs, true);
    column_probs[static_cast<size_t>(j)] = agg.probs;
  });
  return column_probs;
}

inline PredictionSet decode_codec_predictions(
    const std::vector<std::vector<std::vector<double>>>& column_probs, const DigitCodec& codec) {
  const int64_t nq = static_cast<int64_t>(column_probs[0].size());
  PredictionSet out;
  out.classification = true;
  for (int64_t q = 0; q < nq; ++q) {
    if (codec.mode == DigitCodec::Mode::Ecoc) {
      // nearest code row by Hamming distance over argmax symbols
      std::vector<int> symbols(static_cast<size_t>(codec.length));
      for (int64_t j = 0; j < codec.length; ++j) {
        const auto& p = column_probs[static_cast<size_t>(j)][static_cast<size_t>(q)];
        int arg = 0;
        for (size_t c = 1; c < p.size(); ++c)
          if (p[c] > p[static_cast<size_t>(arg)]) arg = static_cast<int>(c);
        symbols[static_cast<size_t>(j)] = arg;
      }
      int best = 0, best_dist = static_cast<int>(codec.length) + 1;
      for (int y = 0; y < codec.n_classes; ++y) {
        int dist = 0;
        for (int64_t j = 0; j < codec.length; ++j)
          if (codec.code[static_cast<size_t>(y)][static_cast<size_t>(j)] != symbols[static_cast<size_t>(j)])
            ++dist;
        if (dist < best_dist) {
          best_dist = dist;
          best = y;
        }
      }
      out.labels.push_back(best);
    } else {
      std::vector<int> digits(static_cast<size_t>(codec.length));
      for (int64_t j = 0; j < codec.length; ++j) {
        const auto& p = column_probs[static_cast<size_t>(j)][static_cast<size_t>(q)];
        int arg = 0;
        for (size_t c = 1; c < p.size(); ++c)
          if (p[c] > p[static_cast<size_t>(arg)]) arg = static_cast<int>(c);
        digits[static_cast<size_t>(j)] = arg;
      }
      int decoded = decimal_decode(digits, codec.n_classes);
      // Star code rows encode perm[y]; map the decoded permuted label back
      if (codec.mode == DigitCodec::Mode::Star) {
        int label = 0;
        for (int y = 0; y < codec.n_classes; ++y)
          if (codec.permutation[static_cast<size_t>(y)] == decoded) {
            label = y;
            break;
          }
        decoded = label;
      }
      out.labels.push_back(decoded);
    }
    // member probabilities: product of per-column symbol probabilities
    std::vector<double> probs(static_cast<size_t>(codec.n_classes), 0.0);
    double total = 0.0;
    for (int y = 0; y < codec.n_classes; ++y) {
      double lp = 0.0;
      for (int64_t j = 0; j < codec.length; ++j) {
        int sym = codec.code[static_cast<size_t>(y)][static_cast<size_t>(j)];
        const auto& p = column_probs[static_cast<size_t>(j)][static_cast<size_t>(q)];
        double pv = static_cast<size_t>(sym) < p.size() ? p[static_cast<size_t>(sym)] : 0.0;
        lp += std::log(std::max(pv, 1e-12));
      }
      probs[static_cast<size_t>(y)] = lp;
    }
    double mx = *std::max_element(probs.begin(), probs.end());
    for (double& v : probs) {
      v = std::exp(v - mx);
      total += v;
    }
    for (double& v : probs) v /= total;
    out.probs.push_back(std::move(probs));
  }
  return out;
}

}  // namespace detail

/// Lifts the 10-class cap: DPT (decimal digits), Star (ceil(sqrt(C)) permuted
/// digit mappings, majority over decoded labels) or ECOC (random 10-ary
/// codes, Hamming decoding). C <= 10 delegates to the base predictor.
inline PredictionSet many_class_predict(const TabularDataset& train, const TensorF& test_x,
                                        ManyClassMode mode, uint64_t seed, const Predictor& base,
                                        const ManyClassOptions& opts = {}, int threads = 1) {
  check(train.task == TaskKind::Classification, "many_class: classification only");
  const int C = train.n_classes;
  if (C <= 10) return base.predict(train, test_x, seed);

  if (mode == ManyClassMode::Dpt) {
    auto codec = make_dpt_codec(C);
    auto cols = detail::predict_code_columns(train, test_x, codec, seed, base,
                                             opts.dpt_ensembles_per_digit, threads);
    PredictionSet out = detail::decode_codec_predictions(cols, codec);
    out.strategy = "dpt";
    out.seed = seed;
    out.member_count = codec.digits * opts.dpt_ensembles_per_digit;
    return out;
  }
  if (mode == ManyClassMode::Ecoc) {
    const int64_t L = opts.ecoc_length > 0 ? opts.ecoc_length
                                           : 2 * static_cast<int64_t>(decimal_digits(C));
    auto codec = make_ecoc_codec(C, L, seed);
    auto cols = detail::predict_code_columns(train, test_x, codec, seed, base, 1, threads);
    PredictionSet out = detail::decode_codec_predictions(cols, codec);
    out.strategy = "ecoc";
    out.seed = seed;
    out.member_count = static_cast<int>(L);
    return out;
  }

  // Star: ceil(sqrt(C)) independent label permutations, each a DPT run
  const int R = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(C))));
  std::vector<PredictionSet> members(static_cast<size_t>(R));
  parallel_for(R, threads, [&](int64_t r) {
    members[static_cast<size_t>(r)] = detail::run_member(r, [&] {
      std::vector<int> perm(static_cast<size_t>(C));
      for (int y = 0; y < C; ++y) perm[static_cast<size_t>(y)] = y;
      RngStream rng(seed, "star", static_cast<uint64_t>(r));
      rng.shuffle(perm.begin(), perm.end());
      auto codec = make_star_codec(C, perm);
      auto cols = detail::predict_code_columns(
          train, test_x, codec, RngStream(seed, "member", static_cast<uint64_t>(r)).next_u64(),
          base, 1, 1);
      return detail::decode_codec_predictions(cols, codec);
    });
  });
  PredictionSet out = aggregate(members, true);
  out.strategy = "star";
  out.seed = seed;
  out.member_count = R;
  return out;
}

// ---------- large-scale strategies ----------

struct LargeScalePlan {
  enum class Variant { B, K, DT, DF, SQ };
  Variant variant = Variant::B;
  int64_t support_cap = 512;  // desk-scale default; full-scale deployments use 10,000
  int repetitions = 4;        // B and SQ
  int df_subsets = 32;
  double df_fraction = 0.6;
};

/// Query-role embedding extractor used by the SQ variant: given a support set
/// and query features, returns one embedding row per query.
using Embedder = std::function<TensorF(const TabularDataset& support, const TensorF& queries,
                                       uint64_t seed)>;

namespace detail {

inline PredictionSet predict_with_tree_partition(const TabularDataset& train,
                                                 const TensorF& test_x, int64_t cap,
                                                 uint64_t seed, const Predictor& base) {
  CartTree tree;
  if (train.task == TaskKind::Classification)
    tree = cart_fit(train.features(), train.labels, {}, cap, true, train.n_classes);
  else {
    std::vector<double> y(train.targets.begin(), train.targets.end());
    tree = cart_fit(train.features(), {}, y, cap, false);
  }
  const int64_t nq = test_x.rows();
  std::map<int, std::vector<int64_t>> by_leaf;
  for (int64_t q = 0; q < nq; ++q) by_leaf[cart_route(tree, test_x, q)].push_back(q);

  PredictionSet out;
  out.classification = train.task == TaskKind::Classification;
  out.strategy = "dt";
  out.seed = seed;
  if (out.classification) {
    out.labels.assign(static_cast<size_t>(nq), 0);
    out.probs.assign(static_cast<size_t>(nq), {});
  } else {
    out.values.assign(static_cast<size_t>(nq), 0.0);
  }
  for (auto& [leaf, queries] : by_leaf) {
    const auto& rows = tree.nodes[static_cast<size_t>(leaf)].rows;
    TabularDataset support = take_rows(train, rows);
    TensorF qx({static_cast<int64_t>(queries.size()), test_x.cols()});
    for (size_t i = 0; i < queries.size(); ++i)
      for (int64_t j = 0; j < test_x.cols(); ++j)
        qx.at(static_cast<int64_t>(i), j) = test_x.at(queries[i], j);
    // leaves can be single-class; the base model needs two, so answer directly
    PredictionSet part;
    if (out.classification) {
      bool single_class = true;
      for (int64_t i = 1; i < support.n; ++i)
        if (support.labels[static_cast<size_t>(i)] != support.labels[0]) single_class = false;
      if (single_class) {
        part.classification = true;
        std::vector<double> p(static_cast<size_t>(train.n_classes), 0.0);
        p[static_cast<size_t>(support.labels[0])] = 1.0;
        for (size_t i = 0; i < queries.size(); ++i) {
          part.labels.push_back(support.labels[0]);
          part.probs.push_back(p);
        }
      } else {
        part = base.predict(support, qx, RngStream(seed, "leaf", static_cast<uint64_t>(leaf)).next_u64());
      }
    } else {
      part = base.predict(support, qx, RngStream(seed, "leaf", static_cast<uint64_t>(leaf)).next_u64());
    }
    for (size_t i = 0; i < queries.size(); ++i) {
      if (out.classification) {
        out.labels[static_cast<size_t>(queries[i])] = part.labels[i];
        out.probs[static_cast<size_t>(queries[i])] = part.probs[i];
      } else {
        out.values[static_cast<size_t>(queries[i])] = part.values[i];
      }
    }
  }
  return out;
}

}  // namespace detail

/// The five large-scale variants. A plan whose cap covers the whole training
/// set degenerates to a single base-predictor run.
inline PredictionSet large_scale_predict(const TabularDataset& train, const TensorF& test_x,
                                         const LargeScalePlan& plan, uint64_t seed,
                                         const Predictor& base, const Embedder& embedder = {},
                                         int threads = 1) {
  using V = LargeScalePlan::Variant;
  const bool classification = train.task == TaskKind::Classification;
  if (train.n <= plan.support_cap && plan.variant != V::DT && plan.variant != V::DF) {
    PredictionSet out = base.predict(train, test_x, seed);
    out.strategy = "base(degenerate)";
    return out;
  }

  switch (plan.variant) {
    case V::B: {
      std::vector<PredictionSet> members(static_cast<size_t>(plan.repetitions));
      parallel_for(plan.repetitions, threads, [&](int64_t rep) {
        members[static_cast<size_t>(rep)] = detail::run_member(rep, [&] {
          RngStream rng(seed, "b", static_cast<uint64_t>(rep));
          std::vector<int64_t> idx(static_cast<size_t>(train.n));
          for (int64_t i = 0; i < train.n; ++i) idx[static_cast<size_t>(i)] = i;
          rng.shuffle(idx.begin(), idx.end());
          idx.resize(static_cast<size_t>(plan.support_cap));
          return base.predict(take_rows(train, idx), test_x,
                              RngStream(seed, "member", static_cast<uint64_t>(rep)).next_u64());
        });
      });
      PredictionSet out = aggregate(members, classification);
      out.strategy = "b";
      out.seed = seed;
      return out;
    }
    case V::K: {
      auto km = kmeans(train.features(), plan.support_cap, seed);
      // nearest training row to each center, duplicates dropped
      std::vector<int64_t> support;
      std::vector<bool> used(static_cast<size_t>(train.n), false);
      TensorF tx = train.features();
      for (int64_t c = 0; c < plan.support_cap; ++c) {
        int64_t best = 0;
        double bd = 1e300;
        for (int64_t i = 0; i < train.n; ++i) {
          double dd = detail::sq_dist_row(tx, i, km.centers, c);
          if (dd < bd) {
            bd = dd;
            best = i;
          }
        }
        if (!used[static_cast<size_t>(best)]) {
          used[static_cast<size_t>(best)] = true;
          support.push_back(best);
        }
      }
      PredictionSet out =
          base.predict(take_rows(train, support), test_x, RngStream(seed, "member", 0).next_u64());
      out.strategy = "k";
      out.seed = seed;
      return out;
    }
    case V::DT: {
      PredictionSet out =
          detail::predict_with_tree_partition(train, test_x, plan.support_cap, seed, base);
      out.seed = seed;
      return out;
    }
    case V::DF: {
      std::vector<PredictionSet> members(static_cast<size_t>(plan.df_subsets));
      parallel_for(plan.df_subsets, threads, [&](int64_t s) {
        members[static_cast<size_t>(s)] = detail::run_member(s, [&] {
          RngStream rng(seed, "df", static_cast<uint64_t>(s));
          std::vector<int64_t> idx(static_cast<size_t>(train.n));
          for (int64_t i = 0; i < train.n; ++i) idx[static_cast<size_t>(i)] = i;
          rng.shuffle(idx.begin(), idx.end());
          idx.resize(static_cast<size_t>(
              static_cast<int64_t>(plan.df_fraction * static_cast<double>(train.n))));
          return detail::predict_with_tree_partition(
              take_rows(train, idx), test_x, plan.support_cap,
              RngStream(seed, "member", static_cast<uint64_t>(s)).next_u64(), base);
        });
      });
      PredictionSet out = aggregate(members, classification);
      out.strategy = "df";
      out.seed = seed;
      return out;
    }
    case V::SQ: {
      check(static_cast<bool>(embedder), "sq strategy needs an embedder");
      std::vector<PredictionSet> members(static_cast<size_t>(plan.repetitions));
      parallel_for(plan.repetitions, threads, [&](int64_t rep) {
        members[static_cast<size_t>(rep)] = detail::run_member(rep, [&] {
          RngStream rng(seed, "sq", static_cast<uint64_t>(rep));
          std::vector<int64_t> idx(static_cast<size_t>(train.n));
          for (int64_t i = 0; i < train.n; ++i) idx[static_cast<size_t>(i)] = i;
          rng.shuffle(idx.begin(), idx.end());
          std::vector<int64_t> sup_idx(idx.begin(), idx.begin() + plan.support_cap);
          std::vector<int64_t> rest_idx(idx.begin() + plan.support_cap, idx.end());
          TabularDataset support = take_rows(train, sup_idx);
          TabularDataset rest = take_rows(train, rest_idx);
          const uint64_t eseed = RngStream(seed, "member", static_cast<uint64_t>(rep)).next_u64();
          TensorF rest_emb = embedder(support, rest.features(), eseed);
          TensorF test_emb = embedder(support, test_x, eseed);
          PredictionSet part;
          if (classification) {
            auto probe = logistic_fit(rest_emb, rest.labels, train.n_classes);
            part.classification = true;
            part.probs = logistic_predict_proba(probe, test_emb);
            for (const auto& p : part.probs) {
              int arg = 0;
              for (size_t c = 1; c < p.size(); ++c)
                if (p[c] > p[static_cast<size_t>(arg)]) arg = static_cast<int>(c);
              part.labels.push_back(arg);
            }
          } else {
            std::vector<double> y(rest.targets.begin(), rest.targets.end());
            auto probe = ridge_fit(rest_emb, y, 1e-4);
            part.classification = false;
            for (int64_t q = 0; q < test_emb.rows(); ++q)
              part.values.push_back(ridge_predict(probe, test_emb, q));
          }
          return part;
        });
      });
      PredictionSet out = aggregate(members, classification);
      out.strategy = "sq";
      out.seed = seed;
      return out;
    }
  }
  throw ContractError("large_scale_predict: unknown variant");
}

/// Strategy run manifest (External interface): strategy name, parameters,
/// member seeds, optional per-member metrics.
inline nlohmann::json strategy_manifest(const PredictionSet& p, const nlohmann::json& params) {
  nlohmann::json j;
  j["strategy"] = p.strategy;
  j["parameters"] = params;
  j["member_count"] = p.member_count;
  j["seed"] = p.seed;
  std::vector<uint64_t> member_seeds;
  for (int i = 0; i < p.member_count; ++i)
    member_seeds.push_back(RngStream(p.seed, "member", static_cast<uint64_t>(i)).next_u64());
  j["member_seeds"] = member_seeds;
  return j;
}

/// Predictions CSV: row id, prediction, then per-class probabilities when
/// the task is classification.
inline void write_predictions_csv(const PredictionSet& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write predictions: " + path);
  if (p.classification) {
    out << "row,prediction";
    size_t nc = p.probs.empty() ? 0 : p.probs[0].size();
    for (size_t c = 0; c < nc; ++c) out << ",p" << c;
    out << "\n";
    for (size_t i = 0; i < p.labels.size(); ++i) {
      out << i << "," << p.labels[i];
      if (!p.probs.empty())
        for (double v : p.probs[i]) out << "," << csv::format_float(static_cast<float>(v));
      out << "\n";
    }
  } else {
    out << "row,prediction\n";
    for (size_t i = 0; i < p.values.size(); ++i)
      out << i << "," << csv::format_float(static_cast<float>(p.values[i])) << "\n";
  }
}

}  // namespace ticl
