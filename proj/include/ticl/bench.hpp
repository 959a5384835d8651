#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ticl/classical.hpp"
#include "ticl/dataset.hpp"
#include "ticl/parallel.hpp"
#include "ticl/prior.hpp"
#include "ticl/stats.hpp"
#include "ticl/strategies.hpp"
#include "ticl/version.hpp"

namespace ticl {

struct BenchConfig {
  std::string suite_dir;
  std::vector<std::string> methods;
  int seeds = 15;
  std::string model_path;  // required by the "icl" method
  uint64_t master_seed = 0;
  int threads = 1;
};

struct CellResult {
  std::string method;
  std::string dataset;
  int seed = 0;
  std::string metric;  // "accuracy" or "rmse"
  double value = 0.0;
  std::string error;   // non-empty marks a failed cell
};

struct BenchResult {
  std::vector<CellResult> cells;
  std::vector<std::string> datasets;
  nlohmann::json manifest;
};

namespace detail {

inline uint64_t fnv1a_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot hash missing file: " + path);
  uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (!in) break;
  }
  return h;
}

inline std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// One fully preprocessed (train, test) pair for a given split seed.
struct PreparedSplit {
  TabularDataset train;
  TabularDataset test;
};

inline PreparedSplit prepare_split(const TabularDataset& raw, uint64_t split_seed) {
  Split sp = split_64_16_20(raw, split_seed);
  TabularDataset train = take_rows(raw, sp.train);
  TabularDataset test = take_rows(raw, sp.test);
  if (raw.any_symbolic()) {
    CategoryMaps maps = fit_categories(train);
    train = encode_categoricals(train, maps, EncodeMode::Ordinal);
    test = encode_categoricals(test, maps, EncodeMode::Ordinal);
  }
  PreprocessStats stats = fit_preprocess(train);
  return {apply_preprocess(train, stats), apply_preprocess(test, stats)};
}

inline double evaluate_method(const std::string& method, const PreparedSplit& ps,
                              Weights<float>* icl_weights, uint64_t seed) {
  const TabularDataset& train = ps.train;
  const TabularDataset& test = ps.test;
  const bool cls = train.task == TaskKind::Classification;
  TensorF train_x = train.features();
  TensorF test_x = test.features();

  std::vector<int> pred_labels;
  std::vector<double> pred_values;
  if (method == "dummy") {
    if (cls) {
      std::vector<int64_t> counts(static_cast<size_t>(train.n_classes), 0);
      for (int y : train.labels) ++counts[static_cast<size_t>(y)];
      int majority = 0;
      for (size_t c = 1; c < counts.size(); ++c)
        if (counts[c] > counts[static_cast<size_t>(majority)]) majority = static_cast<int>(c);
      pred_labels.assign(static_cast<size_t>(test.n), majority);
    } else {
      double mean = 0.0;
      for (float t : train.targets) mean += t;
      mean /= static_cast<double>(train.n);
      pred_values.assign(static_cast<size_t>(test.n), mean);
    }
  } else if (method == "knn") {
    for (int64_t q = 0; q < test.n; ++q) {
      int k = static_cast<int>(std::min<int64_t>(5, train.n));
      if (cls)
        pred_labels.push_back(knn_predict_class(train_x, train.labels, test_x, q, k));
      else {
        std::vector<double> ty(train.targets.begin(), train.targets.end());
        pred_values.push_back(knn_predict_value(train_x, ty, test_x, q, k));
      }
    }
  } else if (method == "logistic") {
    check(cls, "logistic applies to classification datasets only");
    auto m = logistic_fit(train_x, train.labels, train.n_classes);
    auto probs = logistic_predict_proba(m, test_x);
    for (const auto& p : probs) {
      int arg = 0;
      for (size_t c = 1; c < p.size(); ++c)
        if (p[c] > p[static_cast<size_t>(arg)]) arg = static_cast<int>(c);
      pred_labels.push_back(arg);
    }
  } else if (method == "ridge") {
    check(!cls, "ridge applies to regression datasets only");
    std::vector<double> ty(train.targets.begin(), train.targets.end());
    auto m = ridge_fit(train_x, ty, 1e-3);
    for (int64_t q = 0; q < test.n; ++q) pred_values.push_back(ridge_predict(m, test_x, q));
  } else if (method == "cart") {
    if (cls) {
      auto tree = cart_fit(train_x, train.labels, {}, 2, true, train.n_classes);
      for (int64_t q = 0; q < test.n; ++q) pred_labels.push_back(cart_predict_class(tree, test_x, q));
    } else {
      std::vector<double> ty(train.targets.begin(), train.targets.end());
      auto tree = cart_fit(train_x, {}, ty, 2, false);
      for (int64_t q = 0; q < test.n; ++q) pred_values.push_back(cart_predict_value(tree, test_x, q));
    }
  } else if (method == "icl") {
    check(icl_weights != nullptr, "the icl method needs --model weights");
    IclPredictor base(*icl_weights);
    PredictionSet p = base.predict(train, test_x, seed);
    pred_labels = p.labels;
    pred_values = p.values;
  } else {
    throw ContractError("unknown method \"" + method + "\"");
  }

  if (cls) {
    int64_t correct = 0;
    for (int64_t q = 0; q < test.n; ++q)
      if (pred_labels[static_cast<size_t>(q)] == test.labels[static_cast<size_t>(q)]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(test.n);
  }
  double se = 0.0;
  for (int64_t q = 0; q < test.n; ++q) {
    double dd = pred_values[static_cast<size_t>(q)] - static_cast<double>(test.targets[static_cast<size_t>(q)]);
    se += dd * dd;
  }
  return std::sqrt(se / static_cast<double>(test.n));
}

}  // namespace detail

/// Lists the dataset subdirectories of a suite (each holding data.csv +
/// meta.json), sorted by name.
inline std::vector<std::string> suite_datasets(const std::string& suite_dir) {
  std::vector<std::string> names;
  if (!std::filesystem::is_directory(suite_dir))
    throw FormatError("suite directory not found: " + suite_dir);
  for (const auto& entry : std::filesystem::directory_iterator(suite_dir))
    if (entry.is_directory() &&
        std::filesystem::exists(entry.path() / "data.csv") &&
        std::filesystem::exists(entry.path() / "meta.json"))
      names.push_back(entry.path().filename().string());
  std::sort(names.begin(), names.end());
  check(!names.empty(), "suite has no datasets: " + suite_dir);
  return names;
}

/// Runs every (method, dataset, seed) cell: 64/16/20 split, fit/predict,
/// test metric. Failures land in the cell's error field. Cells execute
/// independently and merge by coordinate, so thread count cannot change
/// the result.
inline BenchResult run_benchmark(const BenchConfig& cfg) {
  check(!cfg.methods.empty(), "bench: no methods named");
  check(cfg.seeds >= 1, "bench: need at least one seed");
  BenchResult result;
  result.datasets = suite_datasets(cfg.suite_dir);

  std::unique_ptr<Weights<float>> icl_weights;
  for (const auto& m : cfg.methods)
    if (m == "icl") {
      check(!cfg.model_path.empty(), "bench: the icl method needs --model");
      icl_weights = std::make_unique<Weights<float>>(load_weights<float>(cfg.model_path));
    }

  nlohmann::json dataset_hashes = nlohmann::json::object();
  std::vector<TabularDataset> raw;
  for (const auto& name : result.datasets) {
    std::string csv = cfg.suite_dir + "/" + name + "/data.csv";
    std::string meta = cfg.suite_dir + "/" + name + "/meta.json";
    raw.push_back(load_dataset(csv, meta));
    dataset_hashes[name] =
        detail::hex64(detail::fnv1a_file(csv) ^ (detail::fnv1a_file(meta) * 3));
  }

  const int64_t n_cells = static_cast<int64_t>(result.datasets.size()) * cfg.seeds *
                          static_cast<int64_t>(cfg.methods.size());
  result.cells.resize(static_cast<size_t>(n_cells));
  const int64_t per_dataset = cfg.seeds * static_cast<int64_t>(cfg.methods.size());
  parallel_for(n_cells, cfg.threads, [&](int64_t idx) {
    const int64_t di = idx / per_dataset;
    const int64_t rem = idx % per_dataset;
    const int seed = static_cast<int>(rem / static_cast<int64_t>(cfg.methods.size()));
    const std::string& method = cfg.methods[static_cast<size_t>(rem % static_cast<int64_t>(cfg.methods.size()))];
    const std::string& dataset = result.datasets[static_cast<size_t>(di)];
    CellResult cell;
    cell.method = method;
    cell.dataset = dataset;
    cell.seed = seed;
    cell.metric = raw[static_cast<size_t>(di)].task == TaskKind::Classification ? "accuracy" : "rmse";
    try {
      const uint64_t split_seed =
          RngStream(cfg.master_seed, "bench." + dataset, static_cast<uint64_t>(seed)).next_u64();
      detail::PreparedSplit ps = detail::prepare_split(raw[static_cast<size_t>(di)], split_seed);
      const uint64_t method_seed =
          RngStream(cfg.master_seed, "bench." + dataset + "." + method, static_cast<uint64_t>(seed))
              .next_u64();
      cell.value = detail::evaluate_method(method, ps, icl_weights.get(), method_seed);
    } catch (const Error& e) {
      cell.error = e.what();
    }
    result.cells[static_cast<size_t>(idx)] = std::move(cell);
  });

  nlohmann::json manifest;
  manifest["module_version"] = kVersion;
  manifest["suite"] = std::filesystem::path(cfg.suite_dir).filename().string();
  manifest["datasets"] = dataset_hashes;
  manifest["methods"] = cfg.methods;
  manifest["seeds"] = cfg.seeds;
  manifest["master_seed"] = cfg.master_seed;
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : manifest.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  manifest["config_hash"] = detail::hex64(h);
  result.manifest = manifest;
  return result;
}

/// Results JSON (schema 1): cells plus the deterministic manifest. Timing
/// never goes in here, so byte-identical reruns hash identically.
inline nlohmann::json results_to_json(const BenchResult& r) {
  nlohmann::json j;
  j["schema"] = 1;
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : r.cells) {
    nlohmann::json cell = {{"method", c.method}, {"dataset", c.dataset}, {"seed", c.seed},
                           {"metric", c.metric}};
    if (c.error.empty())
      cell["value"] = c.value;
    else
      cell["error"] = c.error;
    cells.push_back(cell);
  }
  j["cells"] = cells;
  j["manifest"] = r.manifest;
  return j;
}

/// Rebuilds the methods x datasets x seeds table from a results JSON.
inline ScoreTable table_from_json(const nlohmann::json& j) {
  check(j.value("schema", 0) == 1, "results JSON schema mismatch");
  ScoreTable t;
  std::map<std::string, size_t> mi, di;
  for (const auto& c : j.at("cells")) {
    const std::string m = c.at("method").get<std::string>();
    const std::string d = c.at("dataset").get<std::string>();
    if (!mi.count(m)) {
      mi[m] = t.methods.size();
      t.methods.push_back(m);
    }
    if (!di.count(d)) {
      di[d] = t.datasets.size();
      t.datasets.push_back(d);
      t.higher_better.push_back(c.at("metric").get<std::string>() == "accuracy");
    }
  }
  t.scores.assign(t.methods.size(), std::vector<std::vector<double>>(t.datasets.size()));
  t.failed.assign(t.methods.size(), std::vector<bool>(t.datasets.size(), false));
  for (const auto& c : j.at("cells")) {
    size_t m = mi[c.at("method").get<std::string>()];
    size_t d = di[c.at("dataset").get<std::string>()];
    if (c.contains("error"))
      t.failed[m][d] = true;
    else
      t.scores[m][d].push_back(c.at("value").get<double>());
  }
  return t;
}

/// Writes the bundled synthetic benchmark suite: three classification and
/// three regression datasets drawn from the SCM prior.
inline void make_synthetic_suite(const std::string& dir, uint64_t seed = 20240901) {
  std::filesystem::create_directories(dir);
  for (int i = 0; i < 6; ++i) {
    const bool cls = i < 3;
    ScmTaskSpec spec;
    spec.min_nodes = 8;
    spec.max_nodes = 14;
    spec.edge_prob = 0.6;
    spec.noise_min = 0.05;
    spec.noise_max = 0.3;
    spec.min_features = 4;
    spec.max_features = 7;
    spec.min_classes = 2;
    spec.max_classes = cls ? 2 + i : 2;
    spec.n_support = 180;
    spec.min_support = 180;
    spec.n_query = 0;
    SynthTask task = sample_scm_task(spec, seed + static_cast<uint64_t>(i), cls);

    TabularDataset ds;
    ds.n = task.x.rows();
    ds.d = task.x.cols();
    ds.x = task.x.data;
    ds.sym.resize(static_cast<size_t>(ds.d));
    ds.categorical.assign(static_cast<size_t>(ds.d), false);
    for (int64_t j = 0; j < ds.d; ++j) ds.col_names.push_back("x" + std::to_string(j));
    ds.target_name = "y";
    if (cls) {
      ds.task = TaskKind::Classification;
      ds.n_classes = task.n_classes;
      ds.labels = task.labels;
      for (int c = 0; c < task.n_classes; ++c) ds.label_names.push_back("c" + std::to_string(c));
    } else {
      ds.task = TaskKind::Regression;
      ds.targets.assign(task.targets.begin(), task.targets.end());
    }
    std::string name = (cls ? "cls" : "reg") + std::to_string(i % 3);
    std::filesystem::create_directories(dir + "/" + name);
    save_csv(ds, dir + "/" + name + "/data.csv");
    nlohmann::json meta = {{"target", "y"},
                           {"task", cls ? "classification" : "regression"},
                           {"categorical", nlohmann::json::array()}};
    std::ofstream meta_out(dir + "/" + name + "/meta.json");
    meta_out << meta.dump(2) << "\n";
  }
}

}  // namespace ticl
