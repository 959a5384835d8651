#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ticl/model.hpp"
#include "ticl/parallel.hpp"

namespace ticl {

/// Family of synthetic tasks sampled from small structural causal models:
/// a random DAG is ancestral-sampled with random edge weights, per-node
/// nonlinearities and noise; some nodes become features, one becomes the
/// target (quantile-binned for classification).
struct ScmTaskSpec {
  int64_t min_nodes = 6;
  int64_t max_nodes = 16;
  double edge_prob = 0.55;
  bool use_identity = true;
  bool use_tanh = true;
  bool use_square = true;
  bool use_sign = true;
  double noise_min = 0.05;
  double noise_max = 0.4;
  int64_t min_features = 2;
  int64_t max_features = 10;
  int min_classes = 2;
  int max_classes = 10;
  int64_t n_support = 128;
  int64_t min_support = 16;  // support size is drawn uniformly per task
  int64_t n_query = 16;
};

inline void to_json(nlohmann::json& j, const ScmTaskSpec& s) {
  j = {{"min_nodes", s.min_nodes},       {"max_nodes", s.max_nodes},
       {"edge_prob", s.edge_prob},       {"use_identity", s.use_identity},
       {"use_tanh", s.use_tanh},         {"use_square", s.use_square},
       {"use_sign", s.use_sign},         {"noise_min", s.noise_min},
       {"noise_max", s.noise_max},       {"min_features", s.min_features},
       {"max_features", s.max_features}, {"min_classes", s.min_classes},
       {"max_classes", s.max_classes},   {"n_support", s.n_support},
       {"min_support", s.min_support},   {"n_query", s.n_query}};
}

inline void from_json(const nlohmann::json& j, ScmTaskSpec& s) {
  ScmTaskSpec d;
  s.min_nodes = j.value("min_nodes", d.min_nodes);
  s.max_nodes = j.value("max_nodes", d.max_nodes);
  s.edge_prob = j.value("edge_prob", d.edge_prob);
  s.use_identity = j.value("use_identity", d.use_identity);
  s.use_tanh = j.value("use_tanh", d.use_tanh);
  s.use_square = j.value("use_square", d.use_square);
  s.use_sign = j.value("use_sign", d.use_sign);
  s.noise_min = j.value("noise_min", d.noise_min);
  s.noise_max = j.value("noise_max", d.noise_max);
  s.min_features = j.value("min_features", d.min_features);
  s.max_features = j.value("max_features", d.max_features);
  s.min_classes = j.value("min_classes", d.min_classes);
  s.max_classes = j.value("max_classes", d.max_classes);
  s.n_support = j.value("n_support", d.n_support);
  s.min_support = j.value("min_support", d.min_support);
  s.n_query = j.value("n_query", d.n_query);
}

/// A sampled task with ground truth for both support and query rows.
struct SynthTask {
  TensorF x;  // (n_support + n_query) x d, raw (unstandardized) features
  int64_t n_support = 0;
  int64_t n_query = 0;
  bool classification = true;
  int n_classes = 0;
  std::vector<int> labels;       // all rows
  std::vector<double> targets;   // all rows (regression)
};

namespace detail {

inline double apply_nonlinearity(int kind, double v) {
  switch (kind) {
    case 0: return v;
    case 1: return std::tanh(v);
    case 2: return v * v;
    default: return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
  }
}

/// One sampling attempt; returns false when the target degenerates.
inline bool try_sample_scm(const ScmTaskSpec& spec, uint64_t seed, bool classification,
                           SynthTask& out) {
  RngStream shape_rng(seed, "scm.shape");
  const int64_t n_nodes = shape_rng.uniform_int(spec.min_nodes, spec.max_nodes);
  const int64_t rows = (spec.min_support < spec.n_support
                            ? shape_rng.uniform_int(spec.min_support, spec.n_support)
                            : spec.n_support) +
                       spec.n_query;
  const int64_t n_support = rows - spec.n_query;

  std::vector<int> nl_kinds;
  if (spec.use_identity) nl_kinds.push_back(0);
  if (spec.use_tanh) nl_kinds.push_back(1);
  if (spec.use_square) nl_kinds.push_back(2);
  if (spec.use_sign) nl_kinds.push_back(3);
  check(!nl_kinds.empty(), "scm: empty nonlinearity set");

  RngStream dag_rng(seed, "scm.dag");
  RngStream node_rng(seed, "scm.node");
  std::vector<std::vector<std::pair<int64_t, double>>> parents(static_cast<size_t>(n_nodes));
  std::vector<int> nonlin(static_cast<size_t>(n_nodes));
  std::vector<double> noise(static_cast<size_t>(n_nodes));
  for (int64_t j = 0; j < n_nodes; ++j) {
    for (int64_t i = 0; i < j; ++i)
      if (dag_rng.bernoulli(spec.edge_prob)) {
        double mag = 0.5 + 1.5 * dag_rng.uniform();
        double w = dag_rng.bernoulli(0.5) ? mag : -mag;
        parents[static_cast<size_t>(j)].emplace_back(i, w);
      }
    nonlin[static_cast<size_t>(j)] = nl_kinds[static_cast<size_t>(
        node_rng.uniform_int(0, static_cast<int64_t>(nl_kinds.size()) - 1))];
    noise[static_cast<size_t>(j)] = spec.noise_min + (spec.noise_max - spec.noise_min) * node_rng.uniform();
  }

  // ancestral sampling; each node is z-scored across rows to keep scales tame
  std::vector<std::vector<double>> values(static_cast<size_t>(n_nodes),
                                          std::vector<double>(static_cast<size_t>(rows)));
  for (int64_t j = 0; j < n_nodes; ++j) {
    RngStream eps(seed, "scm.noise", static_cast<uint64_t>(j));
    auto& vj = values[static_cast<size_t>(j)];
    for (int64_t r = 0; r < rows; ++r) {
      double acc = 0.0;
      for (auto [pi, w] : parents[static_cast<size_t>(j)]) acc += w * values[static_cast<size_t>(pi)][static_cast<size_t>(r)];
      acc = apply_nonlinearity(nonlin[static_cast<size_t>(j)], acc);
      vj[static_cast<size_t>(r)] = acc + noise[static_cast<size_t>(j)] * eps.normal();
    }
    double mean = 0.0;
    for (double v : vj) mean += v;
    mean /= static_cast<double>(rows);
    double var = 0.0;
    for (double v : vj) var += (v - mean) * (v - mean);
    var /= static_cast<double>(rows);
    double sd = std::sqrt(var);
    if (sd <= 1e-12) sd = 1.0;
    for (double& v : vj) v = (v - mean) / sd;
  }

  RngStream pick_rng(seed, "scm.pick");
  const int64_t d = pick_rng.uniform_int(spec.min_features,
                                         std::min(spec.max_features, n_nodes - 1));
  // prefer a target that actually depends on other nodes
  std::vector<int64_t> with_parents;
  for (int64_t j = 0; j < n_nodes; ++j)
    if (!parents[static_cast<size_t>(j)].empty()) with_parents.push_back(j);
  const int64_t target = with_parents.empty()
                             ? pick_rng.uniform_int(0, n_nodes - 1)
                             : with_parents[static_cast<size_t>(pick_rng.uniform_int(
                                   0, static_cast<int64_t>(with_parents.size()) - 1))];
  std::vector<int64_t> candidates;
  for (int64_t j = 0; j < n_nodes; ++j)
    if (j != target) candidates.push_back(j);
  pick_rng.shuffle(candidates.begin(), candidates.end());
  candidates.resize(static_cast<size_t>(d));

  out = SynthTask{};
  out.x = TensorF({rows, d});
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < d; ++j)
      out.x.at(r, j) = static_cast<float>(values[static_cast<size_t>(candidates[static_cast<size_t>(j)])][static_cast<size_t>(r)]);
  out.n_support = n_support;
  out.n_query = spec.n_query;
  out.classification = classification;

  const auto& tv = values[static_cast<size_t>(target)];
  if (!classification) {
    out.targets.assign(tv.begin(), tv.end());
    // degenerate when the support targets barely vary
    double mean = 0.0;
    for (int64_t r = 0; r < n_support; ++r) mean += tv[static_cast<size_t>(r)];
    mean /= static_cast<double>(n_support);
    double var = 0.0;
    for (int64_t r = 0; r < n_support; ++r) {
      double dd = tv[static_cast<size_t>(r)] - mean;
      var += dd * dd;
    }
    return var / static_cast<double>(n_support) > 1e-8;
  }

  const int n_classes = static_cast<int>(shape_rng.uniform_int(spec.min_classes, spec.max_classes));
  out.n_classes = n_classes;
  // quantile thresholds over all rows; label = number of thresholds below
  std::vector<double> sorted(tv.begin(), tv.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> thresholds;
  for (int c = 1; c < n_classes; ++c) {
    int64_t pos = (rows * c) / n_classes;
    thresholds.push_back(sorted[static_cast<size_t>(std::max<int64_t>(0, pos - 1))]);
  }
  out.labels.resize(static_cast<size_t>(rows));
  std::vector<int64_t> bin_counts(static_cast<size_t>(n_classes), 0);
  for (int64_t r = 0; r < rows; ++r) {
    int lab = 0;
    for (double th : thresholds)
      if (tv[static_cast<size_t>(r)] > th) ++lab;
    out.labels[static_cast<size_t>(r)] = lab;
    ++bin_counts[static_cast<size_t>(lab)];
  }
  for (int64_t c : bin_counts)
    if (c == 0) return false;  // single-bin degenerate draw
  // support must touch at least two classes or the context carries no signal
  std::vector<bool> seen(static_cast<size_t>(n_classes), false);
  int support_classes = 0;
  for (int64_t r = 0; r < n_support; ++r) {
    size_t lab = static_cast<size_t>(out.labels[static_cast<size_t>(r)]);
    if (!seen[lab]) {
      seen[lab] = true;
      ++support_classes;
    }
  }
  return support_classes >= 2;
}

}  // namespace detail

/// Samples one SCM task; resamples internally up to 10 times when the draw
/// degenerates (single occupied label bin or constant regression target).
inline SynthTask sample_scm_task(const ScmTaskSpec& spec, uint64_t seed, bool classification) {
  for (int attempt = 0; attempt < 10; ++attempt) {
    uint64_t inner = RngStream(seed, "scm.attempt", static_cast<uint64_t>(attempt)).next_u64();
    SynthTask task;
    if (detail::try_sample_scm(spec, inner, classification, task)) return task;
  }
  throw TaskGenError("sample_scm_task: degenerate target after 10 resampling attempts (seed " +
                     std::to_string(seed) + ")");
}

/// Converts a sampled task into a model context plus query-side ground truth.
/// Features are standardized on support statistics; regression targets are
/// z-scored the same way (mirrors what prediction does at test time).
struct PreparedTask {
  ContextTask<float> ctx;
  std::vector<int> query_labels;
  std::vector<double> query_targets_z;
  double target_mean = 0.0;
  double target_sd = 1.0;
};

inline PreparedTask prepare_task(const SynthTask& task) {
  PreparedTask p;
  const int64_t ns = task.n_support, nq = task.n_query;
  TensorF sx({ns, task.x.cols()});
  TensorF qx({nq, task.x.cols()});
  for (int64_t i = 0; i < ns; ++i)
    for (int64_t j = 0; j < task.x.cols(); ++j) sx.at(i, j) = task.x.at(i, j);
  for (int64_t i = 0; i < nq; ++i)
    for (int64_t j = 0; j < task.x.cols(); ++j) qx.at(i, j) = task.x.at(ns + i, j);
  p.ctx.x = detail::standardize_on_support(sx, qx);
  p.ctx.n_support = ns;
  p.ctx.n_query = nq;
  p.ctx.classification = task.classification;
  if (task.classification) {
    p.ctx.n_classes = task.n_classes;
    p.ctx.labels.assign(task.labels.begin(), task.labels.begin() + ns);
    p.query_labels.assign(task.labels.begin() + ns, task.labels.end());
  } else {
    double mean = 0.0;
    for (int64_t i = 0; i < ns; ++i) mean += task.targets[static_cast<size_t>(i)];
    mean /= static_cast<double>(ns);
    double var = 0.0;
    for (int64_t i = 0; i < ns; ++i) {
      double dd = task.targets[static_cast<size_t>(i)] - mean;
      var += dd * dd;
    }
    double sd = std::sqrt(var / static_cast<double>(ns));
    if (sd <= 0.0) sd = 1.0;
    p.target_mean = mean;
    p.target_sd = sd;
    for (int64_t i = 0; i < ns; ++i)
      p.ctx.targets_z.push_back((task.targets[static_cast<size_t>(i)] - mean) / sd);
    for (int64_t i = ns; i < ns + nq; ++i)
      p.query_targets_z.push_back((task.targets[static_cast<size_t>(i)] - mean) / sd);
  }
  return p;
}

struct TrainConfig {
  int64_t steps = 3000;
  int64_t tasks_per_batch = 4;
  double lr = 3e-4;
  int64_t warmup_steps = 200;
  double min_lr_frac = 0.1;
  double clip_norm = 1.0;
  double classification_fraction = 0.7;
  uint64_t seed = 1;
  int64_t checkpoint_every = 0;
  std::string checkpoint_prefix;
  int threads = 1;
  ScmTaskSpec tasks;
  ModelConfig model;
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"steps", c.steps},
       {"tasks_per_batch", c.tasks_per_batch},
       {"lr", c.lr},
       {"warmup_steps", c.warmup_steps},
       {"min_lr_frac", c.min_lr_frac},
       {"clip_norm", c.clip_norm},
       {"classification_fraction", c.classification_fraction},
       {"seed", c.seed},
       {"checkpoint_every", c.checkpoint_every},
       {"tasks", c.tasks},
       {"model", c.model}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.steps = j.value("steps", d.steps);
  c.tasks_per_batch = j.value("tasks_per_batch", d.tasks_per_batch);
  c.lr = j.value("lr", d.lr);
  c.warmup_steps = j.value("warmup_steps", d.warmup_steps);
  c.min_lr_frac = j.value("min_lr_frac", d.min_lr_frac);
  c.clip_norm = j.value("clip_norm", d.clip_norm);
  c.classification_fraction = j.value("classification_fraction", d.classification_fraction);
  c.seed = j.value("seed", d.seed);
  c.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
  if (j.contains("tasks")) j.at("tasks").get_to(c.tasks);
  if (j.contains("model")) j.at("model").get_to(c.model);
}

struct TrainResult {
  Weights<float> weights;
  std::vector<std::pair<int64_t, double>> loss_trace;  // (step, batch mean loss)
};

/// Pre-trains the model on the synthetic prior. Deterministic given the
/// config: per-task gradients are merged in task order even when batches run
/// on multiple threads. A non-finite loss aborts with the offending task seed.
template <typename SaveFn = std::nullptr_t>
TrainResult pretrain(const TrainConfig& cfg, SaveFn checkpoint_fn = nullptr) {
  TrainResult result;
  result.weights = init_weights<float>(cfg.model, cfg.seed);
  auto params = result.weights.all();
  AdamConfig adam;
  adam.lr = cfg.lr;

  const int64_t B = cfg.tasks_per_batch;
  for (int64_t step = 0; step < cfg.steps; ++step) {
    std::vector<std::vector<TensorF>> task_grads(static_cast<size_t>(B));
    std::vector<double> task_losses(static_cast<size_t>(B), 0.0);
    std::vector<uint64_t> task_seeds(static_cast<size_t>(B), 0);

    parallel_for(B, cfg.threads, [&](int64_t b) {
      const uint64_t ti = static_cast<uint64_t>(step * B + b);
      const uint64_t task_seed = RngStream(cfg.seed, "train.task", ti).next_u64();
      task_seeds[static_cast<size_t>(b)] = task_seed;
      const bool cls = RngStream(cfg.seed, "train.kind", ti).uniform() < cfg.classification_fraction;
      SynthTask task = sample_scm_task(cfg.tasks, task_seed, cls);
      PreparedTask prep = prepare_task(task);

      ForwardOptions opts;
      opts.train = true;
      Forward<float> f = forward_context(result.weights, prep.ctx, task_seed, opts);
      typename Tape<float>::Id loss;
      if (cls)
        loss = f.tape.cross_entropy_masked(f.logits, prep.query_labels, prep.ctx.n_classes);
      else
        loss = f.tape.mse(f.scalars, prep.query_targets_z);
      task_losses[static_cast<size_t>(b)] = static_cast<double>(f.tape.value(loss).at(0));
      f.tape.backward(loss, static_cast<float>(1.0 / static_cast<double>(B)));
      auto& grads = task_grads[static_cast<size_t>(b)];
      grads.reserve(params.size());
      for (size_t i = 0; i < params.size(); ++i) grads.push_back(f.tape.grad(f.leaves[i]));
    });

    double batch_loss = 0.0;
    for (int64_t b = 0; b < B; ++b) {
      const double l = task_losses[static_cast<size_t>(b)];
      if (!std::isfinite(l))
        throw NumericError("pretrain: non-finite loss at step " + std::to_string(step) +
                           " (task seed " + std::to_string(task_seeds[static_cast<size_t>(b)]) + ")");
      batch_loss += l / static_cast<double>(B);
      for (size_t i = 0; i < params.size(); ++i) {
        auto& dst = params[i]->grad;
        const auto& src = task_grads[static_cast<size_t>(b)][i];
        for (size_t v = 0; v < dst.data.size(); ++v)
          dst.data[v] = static_cast<float>(static_cast<double>(dst.data[v]) + static_cast<double>(src.data[v]));
      }
    }

    clip_grad_norm(params, cfg.clip_norm);
    // linear warmup then cosine decay to min_lr_frac * lr
    double lr_scale;
    if (step < cfg.warmup_steps) {
      lr_scale = static_cast<double>(step + 1) / static_cast<double>(cfg.warmup_steps);
    } else {
      double t = static_cast<double>(step - cfg.warmup_steps) /
                 std::max(1.0, static_cast<double>(cfg.steps - cfg.warmup_steps));
      lr_scale = cfg.min_lr_frac + (1.0 - cfg.min_lr_frac) * 0.5 * (1.0 + std::cos(t * 3.14159265358979323846));
    }
    AdamConfig stepcfg = adam;
    stepcfg.lr = adam.lr * lr_scale;
    adam_update(params, stepcfg, step + 1);
    result.loss_trace.emplace_back(step, batch_loss);

    if constexpr (!std::is_same_v<SaveFn, std::nullptr_t>) {
      if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0)
        checkpoint_fn(result.weights, step + 1);
    }
  }
  return result;
}

struct EvalResult {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::vector<double> per_task;
};

/// Mean accuracy (classification) or RMSE (regression) over n freshly sampled
/// tasks whose seeds live in an "eval" stream disjoint from training seeds.
inline EvalResult eval_synthetic(Weights<float>& w, const ScmTaskSpec& spec, int64_t n_tasks,
                                 uint64_t seed, bool classification, int threads = 1) {
  EvalResult r;
  r.per_task.assign(static_cast<size_t>(n_tasks), 0.0);
  parallel_for(n_tasks, threads, [&](int64_t t) {
    const uint64_t task_seed = RngStream(seed, "eval.task", static_cast<uint64_t>(t)).next_u64();
    SynthTask task = sample_scm_task(spec, task_seed, classification);
    const int64_t ns = task.n_support, nq = task.n_query;
    TensorF sx({ns, task.x.cols()}), qx({nq, task.x.cols()});
    for (int64_t i = 0; i < ns; ++i)
      for (int64_t j = 0; j < task.x.cols(); ++j) sx.at(i, j) = task.x.at(i, j);
    for (int64_t i = 0; i < nq; ++i)
      for (int64_t j = 0; j < task.x.cols(); ++j) qx.at(i, j) = task.x.at(ns + i, j);
    if (classification) {
      std::vector<int> sy(task.labels.begin(), task.labels.begin() + ns);
      auto probs = predict_classification(w, sx, sy, task.n_classes, qx, task_seed);
      int correct = 0;
      for (int64_t i = 0; i < nq; ++i) {
        int arg = 0;
        for (int c = 1; c < task.n_classes; ++c)
          if (probs[static_cast<size_t>(i)][static_cast<size_t>(c)] >
              probs[static_cast<size_t>(i)][static_cast<size_t>(arg)])
            arg = c;
        if (arg == task.labels[static_cast<size_t>(ns + i)]) ++correct;
      }
      r.per_task[static_cast<size_t>(t)] = static_cast<double>(correct) / static_cast<double>(nq);
    } else {
      std::vector<double> sy(task.targets.begin(), task.targets.begin() + ns);
      auto preds = predict_regression(w, sx, sy, qx, task_seed);
      double se = 0.0;
      for (int64_t i = 0; i < nq; ++i) {
        double dd = preds[static_cast<size_t>(i)] - task.targets[static_cast<size_t>(ns + i)];
        se += dd * dd;
      }
      r.per_task[static_cast<size_t>(t)] = std::sqrt(se / static_cast<double>(nq));
    }
  });
  for (double v : r.per_task) r.mean += v;
  r.mean /= static_cast<double>(n_tasks);
  double var = 0.0;
  for (double v : r.per_task) var += (v - r.mean) * (v - r.mean);
  var /= std::max<double>(1.0, static_cast<double>(n_tasks - 1));
  r.stderr_ = std::sqrt(var / static_cast<double>(n_tasks));
  return r;
}

/// The held-out "easy" family: dense low-noise SCMs, binary labels, d <= 8,
/// 128 support rows. Draws are filtered for separability with a leave-one-out
/// 1-NN check on the standardized support, so classes are well separated.
inline ScmTaskSpec easy_binary_spec() {
  ScmTaskSpec s;
  s.min_nodes = 5;
  s.max_nodes = 10;
  s.edge_prob = 0.85;
  s.use_square = false;
  s.use_sign = false;
  s.noise_min = 0.02;
  s.noise_max = 0.15;
  s.min_features = 2;
  s.max_features = 8;
  s.min_classes = 2;
  s.max_classes = 2;
  s.n_support = 128;
  s.min_support = 128;
  s.n_query = 32;
  return s;
}

namespace detail {

inline double loo_1nn_accuracy(const SynthTask& task) {
  const int64_t ns = task.n_support, d = task.x.cols();
  int correct = 0;
  for (int64_t i = 0; i < ns; ++i) {
    double best = 1e300;
    int64_t arg = -1;
    for (int64_t j = 0; j < ns; ++j) {
      if (j == i) continue;
      double dist = 0.0;
      for (int64_t c = 0; c < d; ++c) {
        double dd = static_cast<double>(task.x.at(i, c)) - static_cast<double>(task.x.at(j, c));
        dist += dd * dd;
      }
      if (dist < best) {
        best = dist;
        arg = j;
      }
    }
    if (task.labels[static_cast<size_t>(arg)] == task.labels[static_cast<size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ns);
}

}  // namespace detail

/// Samples from the easy family, resampling (up to 20 draws) until the
/// support is 1-NN separable at the 0.9 level; returns the best draw seen.
inline SynthTask sample_easy_binary_task(uint64_t seed) {
  ScmTaskSpec spec = easy_binary_spec();
  SynthTask best;
  double best_acc = -1.0;
  for (int attempt = 0; attempt < 20; ++attempt) {
    uint64_t inner = RngStream(seed, "easy.attempt", static_cast<uint64_t>(attempt)).next_u64();
    SynthTask task = sample_scm_task(spec, inner, true);
    double acc = detail::loo_1nn_accuracy(task);
    if (acc > best_acc) {
      best_acc = acc;
      best = task;
    }
    if (acc >= 0.9) return best;
  }
  return best;
}

}  // namespace ticl
