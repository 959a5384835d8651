// ticl: desk-scale in-context tabular learner.
// Subcommands: pretrain, predict, embed, inspect, bench, stats.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "ticl/bench.hpp"
#include "ticl/introspect.hpp"
#include "ticl/model.hpp"
#include "ticl/prior.hpp"
#include "ticl/stats.hpp"
#include "ticl/strategies.hpp"

using namespace ticl;

namespace {

struct GlobalOpts {
  uint64_t seed = 0;
  bool seed_set = false;
  int threads = 1;
  bool f64_check = false;
};

std::string sibling_meta(const std::string& csv_path) {
  std::filesystem::path p(csv_path);
  return (p.parent_path() / "meta.json").string();
}

/// Loads a feature-only CSV aligned to the training dataset's columns; a
/// target column, when present, is ignored.
TensorF load_aligned_features(const std::string& csv_path, const TabularDataset& train_raw,
                              const CategoryMaps* maps, const PreprocessStats* stats) {
  std::ifstream in(csv_path);
  if (!in) throw FormatError("cannot open CSV: " + csv_path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("CSV has no header: " + csv_path);
  auto header = csv::split_line(line);
  std::vector<int64_t> col_of(train_raw.col_names.size(), -1);
  for (size_t j = 0; j < train_raw.col_names.size(); ++j) {
    for (size_t h = 0; h < header.size(); ++h)
      if (header[h] == train_raw.col_names[j]) col_of[j] = static_cast<int64_t>(h);
    if (col_of[j] < 0)
      throw FormatError("test CSV is missing feature column \"" + train_raw.col_names[j] + "\"");
  }
  TabularDataset rows;
  rows.d = train_raw.d;
  rows.col_names = train_raw.col_names;
  rows.categorical = train_raw.categorical;
  rows.sym.resize(static_cast<size_t>(rows.d));
  rows.task = train_raw.task;
  rows.n_classes = train_raw.n_classes;
  rows.target_name = train_raw.target_name;
  int64_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    auto cells = csv::split_line(line);
    if (cells.size() != header.size())
      throw FormatError("ragged row at line " + std::to_string(line_no) + " of " + csv_path);
    for (int64_t j = 0; j < rows.d; ++j) {
      const std::string& cell = cells[static_cast<size_t>(col_of[static_cast<size_t>(j)])];
      if (rows.categorical[static_cast<size_t>(j)]) {
        rows.sym[static_cast<size_t>(j)].push_back(cell);
        rows.x.push_back(0.0f);
      } else if (csv::is_missing(cell)) {
        rows.x.push_back(std::numeric_limits<float>::quiet_NaN());
      } else {
        float v;
        if (!csv::parse_float(cell, v))
          throw FormatError("non-numeric value \"" + cell + "\" at line " + std::to_string(line_no));
        rows.x.push_back(v);
      }
    }
    if (rows.task == TaskKind::Classification) rows.labels.push_back(0);
    else rows.targets.push_back(0.0f);
    ++rows.n;
  }
  check(rows.n >= 1, "test CSV has no data rows: " + csv_path);
  TabularDataset enc = rows.any_symbolic() && maps
                           ? encode_categoricals(rows, *maps, EncodeMode::Ordinal)
                           : rows;
  TabularDataset out = stats ? apply_preprocess(enc, *stats) : enc;
  return out.features();
}

struct PreparedPredictInputs {
  TabularDataset train;
  TensorF test_x;
  TabularDataset train_raw;
};

PreparedPredictInputs prepare_predict_inputs(const std::string& train_csv,
                                             const std::string& meta_path,
                                             const std::string& test_csv) {
  PreparedPredictInputs out;
  out.train_raw = load_dataset(train_csv, meta_path);
  TabularDataset train = out.train_raw;
  CategoryMaps maps;
  bool has_cats = train.any_symbolic();
  if (has_cats) {
    maps = fit_categories(train);
    train = encode_categoricals(train, maps, EncodeMode::Ordinal);
  }
  PreprocessStats stats = fit_preprocess(train);
  out.train = apply_preprocess(train, stats);
  out.test_x = load_aligned_features(test_csv, out.train_raw, has_cats ? &maps : nullptr, &stats);
  return out;
}

int run_pretrain(const std::string& config_path, const std::string& out_path,
                 const GlobalOpts& g) {
  TrainConfig cfg;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw FormatError("cannot open training config: " + config_path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw FormatError("training config is not valid JSON");
    cfg = j.get<TrainConfig>();
  }
  if (g.seed_set) cfg.seed = g.seed;
  cfg.threads = g.threads;
  if (!cfg.checkpoint_prefix.empty() && cfg.checkpoint_every > 0) {
    // keep as configured
  } else if (cfg.checkpoint_every > 0) {
    cfg.checkpoint_prefix = out_path;
  }

  auto checkpoint = [&](Weights<float>& w, int64_t step) {
    nlohmann::json prov = {{"train_config", nlohmann::json(cfg)}, {"step", step}};
    save_weights(w, cfg.checkpoint_prefix + ".step" + std::to_string(step), prov);
  };
  TrainResult result = cfg.checkpoint_every > 0 ? pretrain(cfg, checkpoint) : pretrain(cfg);

  nlohmann::json prov = {{"train_config", nlohmann::json(cfg)}, {"step", cfg.steps}};
  save_weights(result.weights, out_path, prov);
  std::ofstream trace(out_path + ".loss.csv");
  trace << "step,loss\n";
  for (auto [step, loss] : result.loss_trace)
    trace << step << "," << csv::format_float(static_cast<float>(loss)) << "\n";
  std::fprintf(stderr, "pretrain: %lld steps, final weights -> %s\n",
               static_cast<long long>(cfg.steps), out_path.c_str());
  return 0;
}

int run_predict(const std::string& model_path, const std::string& train_csv,
                const std::string& meta_path, const std::string& test_csv,
                const std::string& strategy, const std::string& params_json,
                const std::string& out_path, const GlobalOpts& g) {
  auto inputs = prepare_predict_inputs(train_csv, meta_path, test_csv);
  nlohmann::json params = params_json.empty() ? nlohmann::json::object()
                                              : nlohmann::json::parse(params_json);
  auto weights = load_weights<float>(model_path);
  IclPredictor base(weights);
  const uint64_t seed = g.seed;
  const bool cls = inputs.train.task == TaskKind::Classification;

  PredictionSet pred;
  if (strategy.empty()) {
    if (g.f64_check) {
      // 64-bit verification mode: same prediction path at double precision
      auto wd = weights.cast<double>();
      TensorD sx = inputs.train.features().cast<double>();
      TensorD qx = inputs.test_x.cast<double>();
      pred.classification = cls;
      if (cls) {
        pred.probs = predict_classification(wd, sx, inputs.train.labels,
                                            inputs.train.n_classes, qx, seed);
        for (const auto& p : pred.probs) {
          int arg = 0;
          for (size_t c = 1; c < p.size(); ++c)
            if (p[c] > p[static_cast<size_t>(arg)]) arg = static_cast<int>(c);
          pred.labels.push_back(arg);
        }
      } else {
        std::vector<double> sy(inputs.train.targets.begin(), inputs.train.targets.end());
        pred.values = predict_regression(wd, sx, sy, qx, seed);
      }
      pred.strategy = "base(f64)";
    } else {
      pred = base.predict(inputs.train, inputs.test_x, seed);
    }
  } else if (strategy == "subspace") {
    pred = subspace_ensemble_predict(inputs.train, inputs.test_x,
                                     params.value("d_prime", int64_t(16)), seed, base, g.threads);
  } else if (strategy == "pca-bag") {
    pred = pca_bagging_predict(inputs.train, inputs.test_x,
                               params.value("target_dim", std::min<int64_t>(inputs.train.d, 16)),
                               params.value("bags", 4), seed, base, g.threads);
  } else if (strategy == "dpt" || strategy == "star" || strategy == "ecoc") {
    ManyClassMode mode = strategy == "dpt" ? ManyClassMode::Dpt
                        : strategy == "star" ? ManyClassMode::Star
                                             : ManyClassMode::Ecoc;
    ManyClassOptions opts;
    opts.dpt_ensembles_per_digit = params.value("dpt_ensembles", 1);
    opts.ecoc_length = params.value("ecoc_length", int64_t(0));
    pred = many_class_predict(inputs.train, inputs.test_x, mode, seed, base, opts, g.threads);
  } else if (strategy == "b" || strategy == "k" || strategy == "dt" || strategy == "df" ||
             strategy == "sq") {
    LargeScalePlan plan;
    plan.variant = strategy == "b"    ? LargeScalePlan::Variant::B
                   : strategy == "k"  ? LargeScalePlan::Variant::K
                   : strategy == "dt" ? LargeScalePlan::Variant::DT
                   : strategy == "df" ? LargeScalePlan::Variant::DF
                                      : LargeScalePlan::Variant::SQ;
    plan.support_cap = params.value("cap", int64_t(512));
    plan.repetitions = params.value("repetitions", 4);
    plan.df_subsets = params.value("df_subsets", 32);
    plan.df_fraction = params.value("df_fraction", 0.6);
    Embedder embedder = [&](const TabularDataset& support, const TensorF& queries,
                            uint64_t eseed) {
      return detail::layer_embeddings(weights, support, &queries, weights.cfg.depth, eseed);
    };
    pred = large_scale_predict(inputs.train, inputs.test_x, plan, seed, base, embedder,
                               g.threads);
  } else {
    throw ContractError("unknown strategy \"" + strategy + "\"");
  }

  write_predictions_csv(pred, out_path);
  std::ofstream manifest(out_path + ".manifest.json");
  manifest << strategy_manifest(pred, params).dump(2) << "\n";
  std::fprintf(stderr, "predict: %lld rows -> %s (strategy %s)\n",
               static_cast<long long>(pred.n_queries()), out_path.c_str(),
               pred.strategy.c_str());
  return 0;
}

int run_embed(const std::string& model_path, const std::string& data_csv,
              const std::string& meta_path, const std::string& test_csv,
              const std::string& mode, int layer, int folds, const std::string& out_path,
              const GlobalOpts& g) {
  auto weights = load_weights<float>(model_path);
  if (layer < 0) layer = weights.cfg.depth;

  EmbeddingMatrix em;
  if (mode == "vanilla" || mode == "lofo") {
    TabularDataset raw = load_dataset(data_csv, meta_path);
    TabularDataset train = raw;
    CategoryMaps maps;
    bool has_cats = train.any_symbolic();
    if (has_cats) {
      maps = fit_categories(train);
      train = encode_categoricals(train, maps, EncodeMode::Ordinal);
    }
    PreprocessStats stats = fit_preprocess(train);
    train = apply_preprocess(train, stats);
    TensorF test_x({1, train.d});
    bool has_test = !test_csv.empty();
    if (has_test) test_x = load_aligned_features(test_csv, raw, has_cats ? &maps : nullptr, &stats);
    if (mode == "vanilla") {
      em = has_test ? vanilla_embeddings(train, test_x, weights, layer, g.seed)
                    : [&] {
                        // support rows only: reuse the single-context path
                        TensorF none({1, train.d});
                        auto full = vanilla_embeddings(train, none, weights, layer, g.seed);
                        EmbeddingMatrix trimmed;
                        trimmed.mode = full.mode;
                        trimmed.layers = full.layers;
                        trimmed.rows = TensorF({train.n, weights.cfg.k});
                        for (int64_t i = 0; i < train.n; ++i)
                          for (int64_t l = 0; l < weights.cfg.k; ++l)
                            trimmed.rows.at(i, l) = full.rows.at(i, l);
                        trimmed.split.assign(static_cast<size_t>(train.n), "train");
                        trimmed.fold.assign(static_cast<size_t>(train.n), -1);
                        return trimmed;
                      }();
    } else {
      if (has_test)
        em = lofo_embeddings(train, test_x, weights, folds, layer, g.seed, g.threads);
      else {
        // no test rows: embed the training set only
        TensorF none({1, train.d});
        auto full = lofo_embeddings(train, none, weights, folds, layer, g.seed, g.threads);
        em.mode = full.mode;
        em.layers = full.layers;
        em.rows = TensorF({train.n, weights.cfg.k});
        for (int64_t i = 0; i < train.n; ++i)
          for (int64_t l = 0; l < weights.cfg.k; ++l) em.rows.at(i, l) = full.rows.at(i, l);
        em.split.assign(static_cast<size_t>(train.n), "train");
        em.fold.assign(full.fold.begin(), full.fold.begin() + train.n);
      }
    }
  } else if (mode == "dummy" || mode == "permute") {
    TabularDataset raw = load_dataset(data_csv, meta_path);
    TabularDataset enc = raw.any_symbolic() ? encode_categoricals(raw, EncodeMode::Ordinal) : raw;
    PreprocessStats stats = fit_preprocess(enc);
    enc = apply_preprocess(enc, stats);
    std::vector<bool> cats(enc.categorical.begin(), enc.categorical.end());
    em = unsupervised_embeddings(enc.features(), cats, weights,
                                 mode == "dummy" ? UnsupervisedMode::Dummy
                                                 : UnsupervisedMode::Permute,
                                 layer, g.seed, g.threads);
  } else {
    throw ContractError("unknown embed mode \"" + mode + "\"");
  }
  write_embeddings_csv(em, out_path);
  std::fprintf(stderr, "embed: %lld rows x %lld dims (%s, layer %d) -> %s\n",
               static_cast<long long>(em.rows.rows()), static_cast<long long>(em.rows.cols()),
               em.mode.c_str(), layer, out_path.c_str());
  return 0;
}

int run_inspect(const std::string& what, const std::string& model_path,
                const std::string& data_csv, const std::string& meta_path, int layer, int runs,
                const std::string& out_path, const GlobalOpts& g) {
  auto weights = load_weights<float>(model_path);
  TabularDataset raw = load_dataset(data_csv, meta_path);
  TabularDataset ds = raw.any_symbolic() ? encode_categoricals(raw, EncodeMode::Ordinal) : raw;
  PreprocessStats stats = fit_preprocess(ds);
  ds = apply_preprocess(ds, stats);

  if (what == "attention") {
    if (layer < 1) layer = 1;
    auto summary = attention_summary(ds, weights, layer, g.seed);
    write_attention_csv(summary, ds.col_names, out_path);
    if (runs >= 2) {
      auto rep = attention_stability(ds, weights, layer, runs, g.seed, g.threads);
      nlohmann::json j = {{"layer", layer},
                          {"runs", runs},
                          {"pairwise_cosine", rep.pairwise_cosine},
                          {"mean_cosine", rep.mean_cosine},
                          {"var_cosine", rep.var_cosine}};
      std::ofstream out(out_path + ".stability.json");
      out << j.dump(2) << "\n";
    }
  } else if (what == "tokens") {
    if (layer < 0) layer = weights.cfg.depth;
    auto proj = token_pca_projection(ds, weights, layer, g.seed);
    write_projection_csv(proj, out_path);
  } else {
    throw ContractError("inspect expects \"attention\" or \"tokens\"");
  }
  std::fprintf(stderr, "inspect %s -> %s\n", what.c_str(), out_path.c_str());
  return 0;
}

int run_bench(const std::string& suite_dir, const std::string& methods_csv, int seeds,
              const std::string& model_path, const std::string& out_path, const GlobalOpts& g) {
  BenchConfig cfg;
  cfg.suite_dir = suite_dir;
  cfg.seeds = seeds;
  cfg.model_path = model_path;
  cfg.master_seed = g.seed;
  cfg.threads = g.threads;
  std::string token;
  std::stringstream ss(methods_csv);
  while (std::getline(ss, token, ','))
    if (!token.empty()) cfg.methods.push_back(token);

  auto t0 = std::chrono::steady_clock::now();
  auto result = run_benchmark(cfg);
  auto t1 = std::chrono::steady_clock::now();

  std::ofstream out(out_path);
  if (!out) throw FormatError("cannot write results: " + out_path);
  out << results_to_json(result).dump(2) << "\n";
  // wall-clock lives in a sibling run log so the results stay byte-stable
  nlohmann::json runlog = {{"wall_clock_seconds", std::chrono::duration<double>(t1 - t0).count()},
                           {"config_hash", result.manifest["config_hash"]}};
  std::ofstream log(out_path + ".runlog.json");
  log << runlog.dump(2) << "\n";
  std::fprintf(stderr, "bench: %zu cells -> %s\n", result.cells.size(), out_path.c_str());
  return 0;
}

int run_stats(const std::string& what, const std::string& table_path, double alpha,
              const std::string& out_path) {
  std::ifstream in(table_path);
  if (!in) throw FormatError("cannot open results table: " + table_path);
  nlohmann::json results = nlohmann::json::parse(in, nullptr, false);
  if (results.is_discarded()) throw FormatError("results table is not valid JSON");
  ScoreTable table = table_from_json(results);

  nlohmann::json j;
  if (what == "rank") {
    auto ranks = average_rank(table);
    j["methods"] = table.methods;
    j["mean_rank"] = ranks;
  } else if (what == "pama") {
    auto p = pama(table);
    j["methods"] = table.methods;
    j["pama"] = p;
  } else if (what == "wilcoxon") {
    auto res = wilcoxon_holm(table, alpha);
    j = stats_to_json(table, res);
  } else {
    throw ContractError("stats expects rank, pama or wilcoxon");
  }
  std::ofstream out(out_path);
  if (!out) throw FormatError("cannot write stats output: " + out_path);
  out << j.dump(2) << "\n";
  std::fprintf(stderr, "stats %s -> %s\n", what.c_str(), out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ticl: desk-scale in-context tabular learner"};
  app.require_subcommand(1);
  GlobalOpts g;
  app.add_option("--seed", g.seed, "master seed")->each([&](const std::string&) { g.seed_set = true; });
  app.add_option("--threads", g.threads, "worker threads (1 = fully serial)");
  app.add_flag("--f64-check", g.f64_check, "run supported paths at double precision");

  auto* pre = app.add_subcommand("pretrain", "pre-train on the synthetic prior");
  std::string pre_config, pre_out;
  pre->add_option("--config", pre_config, "training config JSON");
  pre->add_option("--out", pre_out, "output weights file")->required();

  auto* prd = app.add_subcommand("predict", "in-context prediction");
  std::string prd_model, prd_train, prd_meta, prd_test, prd_strategy, prd_params, prd_out;
  prd->add_option("--model", prd_model)->required();
  prd->add_option("--train", prd_train)->required();
  prd->add_option("--meta", prd_meta, "metadata JSON (default: meta.json beside --train)");
  prd->add_option("--test", prd_test)->required();
  prd->add_option("--strategy", prd_strategy)
      ->check(CLI::IsMember({"subspace", "pca-bag", "dpt", "star", "ecoc", "b", "k", "dt", "df", "sq"}));
  prd->add_option("--params", prd_params, "strategy parameters as inline JSON");
  prd->add_option("--out", prd_out)->required();

  auto* emb = app.add_subcommand("embed", "extract instance embeddings");
  std::string emb_model, emb_data, emb_meta, emb_test, emb_mode = "vanilla", emb_out;
  int emb_layer = -1, emb_folds = 10;
  emb->add_option("--model", emb_model)->required();
  emb->add_option("--data", emb_data)->required();
  emb->add_option("--meta", emb_meta);
  emb->add_option("--test", emb_test, "optional test CSV embedded alongside --data");
  emb->add_option("--mode", emb_mode)->check(CLI::IsMember({"vanilla", "lofo", "dummy", "permute"}));
  emb->add_option("--layer", emb_layer, "block index, 0..depth (default: depth)");
  emb->add_option("--folds", emb_folds, "LOFO fold count");
  emb->add_option("--out", emb_out)->required();

  auto* ins = app.add_subcommand("inspect", "attention maps and token projections");
  std::string ins_what, ins_model, ins_data, ins_meta, ins_out;
  int ins_layer = -1, ins_runs = 1;
  ins->add_option("what", ins_what)->check(CLI::IsMember({"attention", "tokens"}))->required();
  ins->add_option("--model", ins_model)->required();
  ins->add_option("--data", ins_data)->required();
  ins->add_option("--meta", ins_meta);
  ins->add_option("--layer", ins_layer);
  ins->add_option("--runs", ins_runs, "stability runs (attention)");
  ins->add_option("--out", ins_out)->required();

  auto* ben = app.add_subcommand("bench", "benchmark methods over a suite directory");
  std::string ben_suite, ben_methods, ben_model, ben_out;
  int ben_seeds = 15;
  ben->add_option("--suite", ben_suite)->required();
  ben->add_option("--methods", ben_methods, "comma-separated method list")->required();
  ben->add_option("--seeds", ben_seeds);
  ben->add_option("--model", ben_model, "weights for the icl method");
  ben->add_option("--out", ben_out)->required();

  auto* sta = app.add_subcommand("stats", "rank / pama / wilcoxon over a results table");
  std::string sta_what, sta_table, sta_out;
  double sta_alpha = 0.05;
  sta->add_option("what", sta_what)->check(CLI::IsMember({"rank", "pama", "wilcoxon"}))->required();
  sta->add_option("--table", sta_table)->required();
  sta->add_option("--alpha", sta_alpha);
  sta->add_option("--out", sta_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*pre) return run_pretrain(pre_config, pre_out, g);
    if (*prd)
      return run_predict(prd_model, prd_train,
                         prd_meta.empty() ? sibling_meta(prd_train) : prd_meta, prd_test,
                         prd_strategy, prd_params, prd_out, g);
    if (*emb)
      return run_embed(emb_model, emb_data, emb_meta.empty() ? sibling_meta(emb_data) : emb_meta,
                       emb_test, emb_mode, emb_layer, emb_folds, emb_out, g);
    if (*ins)
      return run_inspect(ins_what, ins_model, ins_data,
                         ins_meta.empty() ? sibling_meta(ins_data) : ins_meta, ins_layer,
                         ins_runs, ins_out, g);
    if (*ben) return run_bench(ben_suite, ben_methods, ben_seeds, ben_model, ben_out, g);
    if (*sta) return run_stats(sta_what, sta_table, sta_alpha, sta_out);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
