#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ticl/error.hpp"
#include "ticl/rng.hpp"
#include "ticl/tensor.hpp"

namespace ticl {

enum class TaskKind { Classification, Regression };

/// N x d table plus labels/targets. Categorical columns stay symbolic
/// (string-valued) until encode_categoricals runs; numeric cells use NaN for
/// missing values until preprocessing imputes them.
struct TabularDataset {
  int64_t n = 0;
  int64_t d = 0;
  std::vector<std::string> col_names;
  std::vector<bool> categorical;                // per feature column
  std::vector<float> x;                         // row-major n*d (numeric cells)
  std::vector<std::vector<std::string>> sym;    // column-major; non-empty while symbolic
  TaskKind task = TaskKind::Classification;
  int n_classes = 0;
  std::vector<int> labels;
  std::vector<float> targets;
  std::vector<std::string> label_names;         // class id -> original target string
  std::string target_name;

  float at(int64_t i, int64_t j) const { return x[static_cast<size_t>(i * d + j)]; }
  float& at(int64_t i, int64_t j) { return x[static_cast<size_t>(i * d + j)]; }
  bool is_symbolic(int64_t j) const { return !sym[static_cast<size_t>(j)].empty(); }
  bool any_symbolic() const {
    for (int64_t j = 0; j < d; ++j)
      if (is_symbolic(j)) return true;
    return false;
  }

  TensorF features() const {
    check(!any_symbolic(), "dataset still has symbolic columns; encode first");
    TensorF t({std::max<int64_t>(n, 1), std::max<int64_t>(d, 1)});
    t.shape = {n, d};
    t.data = x;
    return t;
  }
};

namespace csv {

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  for (std::string& s : out) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
    size_t b = 0;
    while (b < s.size() && s[b] == ' ') ++b;
    s.erase(0, b);
  }
  return out;
}

inline bool is_missing(const std::string& s) { return s.empty() || s == "NA" || s == "nan"; }

inline bool parse_float(const std::string& s, float& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e;
}

/// Shortest float formatting that reloads bit-exactly.
inline std::string format_float(float v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
  return buf;
}

}  // namespace csv

/// Loads a dataset from a header-ful CSV plus a metadata JSON of the shape
/// {"target": <column>, "task": "classification"|"regression",
///  "categorical": [<columns>]}.
inline TabularDataset load_dataset(const std::string& csv_path, const std::string& meta_path) {
  std::ifstream meta_in(meta_path);
  if (!meta_in) throw FormatError("cannot open metadata: " + meta_path);
  nlohmann::json meta = nlohmann::json::parse(meta_in, nullptr, false);
  if (meta.is_discarded()) throw FormatError("metadata is not valid JSON: " + meta_path);
  if (!meta.contains("target") || !meta.contains("task"))
    throw FormatError("metadata must name \"target\" and \"task\": " + meta_path);
  const std::string target = meta["target"].get<std::string>();
  const std::string task_str = meta["task"].get<std::string>();
  TaskKind task;
  if (task_str == "classification")
    task = TaskKind::Classification;
  else if (task_str == "regression")
    task = TaskKind::Regression;
  else
    throw FormatError("unknown task kind \"" + task_str + "\" in " + meta_path);
  std::vector<std::string> cat_cols;
  if (meta.contains("categorical")) cat_cols = meta["categorical"].get<std::vector<std::string>>();

  std::ifstream in(csv_path);
  if (!in) throw FormatError("cannot open CSV: " + csv_path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("CSV has no header: " + csv_path);
  std::vector<std::string> header = csv::split_line(line);

  int64_t target_idx = -1;
  for (size_t i = 0; i < header.size(); ++i)
    if (header[i] == target) target_idx = static_cast<int64_t>(i);
  if (target_idx < 0)
    throw FormatError("target column \"" + target + "\" not found in CSV header of " + csv_path);

  TabularDataset ds;
  ds.task = task;
  ds.target_name = target;
  for (size_t i = 0; i < header.size(); ++i) {
    if (static_cast<int64_t>(i) == target_idx) continue;
    ds.col_names.push_back(header[i]);
    ds.categorical.push_back(std::find(cat_cols.begin(), cat_cols.end(), header[i]) != cat_cols.end());
  }
  ds.d = static_cast<int64_t>(ds.col_names.size());
  check(ds.d >= 1, "dataset needs at least one feature column");
  ds.sym.resize(static_cast<size_t>(ds.d));

  std::map<std::string, int> label_ids;
  std::vector<std::vector<float>> rows_num;
  int64_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    std::vector<std::string> cells = csv::split_line(line);
    if (static_cast<int64_t>(cells.size()) != static_cast<int64_t>(header.size()))
      throw FormatError("ragged row at line " + std::to_string(line_no) + " of " + csv_path +
                        " (" + std::to_string(cells.size()) + " cells, header has " +
                        std::to_string(header.size()) + ")");
    const std::string& ty = cells[static_cast<size_t>(target_idx)];
    if (csv::is_missing(ty))
      throw FormatError("missing target at line " + std::to_string(line_no) + " of " + csv_path);
    if (task == TaskKind::Classification) {
      auto it = label_ids.find(ty);
      int id;
      if (it == label_ids.end()) {
        id = static_cast<int>(label_ids.size());
        label_ids.emplace(ty, id);
        ds.label_names.push_back(ty);
      } else {
        id = it->second;
      }
      ds.labels.push_back(id);
    } else {
      float v;
      if (!csv::parse_float(ty, v))
        throw FormatError("non-numeric regression target \"" + ty + "\" at line " +
                          std::to_string(line_no));
      ds.targets.push_back(v);
    }
    std::vector<float> row(static_cast<size_t>(ds.d));
    int64_t fi = 0;
    for (size_t i = 0; i < cells.size(); ++i) {
      if (static_cast<int64_t>(i) == target_idx) continue;
      if (ds.categorical[static_cast<size_t>(fi)]) {
        ds.sym[static_cast<size_t>(fi)].push_back(cells[i]);  // "" stays its own category
        row[static_cast<size_t>(fi)] = 0.0f;
      } else if (csv::is_missing(cells[i])) {
        row[static_cast<size_t>(fi)] = std::numeric_limits<float>::quiet_NaN();
      } else {
        float v;
        if (!csv::parse_float(cells[i], v))
          throw FormatError("non-numeric value \"" + cells[i] + "\" in column " +
                            ds.col_names[static_cast<size_t>(fi)] + " at line " +
                            std::to_string(line_no));
        row[static_cast<size_t>(fi)] = v;
      }
      ++fi;
    }
    ds.x.insert(ds.x.end(), row.begin(), row.end());
    ++ds.n;
  }
  check(ds.n >= 1, "dataset has no data rows: " + csv_path);
  ds.n_classes = static_cast<int>(label_ids.size());
  return ds;
}

/// Writes the dataset back to CSV (features plus target column, header
/// first). Numeric cells round-trip exactly.
inline void save_csv(const TabularDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write CSV: " + path);
  for (int64_t j = 0; j < ds.d; ++j) out << ds.col_names[static_cast<size_t>(j)] << ",";
  out << ds.target_name << "\n";
  for (int64_t i = 0; i < ds.n; ++i) {
    for (int64_t j = 0; j < ds.d; ++j) {
      if (ds.is_symbolic(j))
        out << ds.sym[static_cast<size_t>(j)][static_cast<size_t>(i)];
      else
        out << csv::format_float(ds.at(i, j));
      out << ",";
    }
    if (ds.task == TaskKind::Classification)
      out << (ds.label_names.empty() ? std::to_string(ds.labels[static_cast<size_t>(i)])
                                     : ds.label_names[static_cast<size_t>(ds.labels[static_cast<size_t>(i)])]);
    else
      out << csv::format_float(ds.targets[static_cast<size_t>(i)]);
    out << "\n";
  }
}

/// Row subset, preserving order of `idx`.
inline TabularDataset take_rows(const TabularDataset& ds, const std::vector<int64_t>& idx) {
  TabularDataset out = ds;
  out.n = static_cast<int64_t>(idx.size());
  out.x.clear();
  out.labels.clear();
  out.targets.clear();
  for (auto& col : out.sym) col.clear();
  for (int64_t i : idx) {
    check(i >= 0 && i < ds.n, "take_rows: index out of range");
    for (int64_t j = 0; j < ds.d; ++j) out.x.push_back(ds.at(i, j));
    if (ds.task == TaskKind::Classification)
      out.labels.push_back(ds.labels[static_cast<size_t>(i)]);
    else
      out.targets.push_back(ds.targets[static_cast<size_t>(i)]);
    for (int64_t j = 0; j < ds.d; ++j)
      if (ds.is_symbolic(j))
        out.sym[static_cast<size_t>(j)].push_back(ds.sym[static_cast<size_t>(j)][static_cast<size_t>(i)]);
  }
  return out;
}

/// Column subset (features only), preserving order of `cols`.
inline TabularDataset select_columns(const TabularDataset& ds, const std::vector<int64_t>& cols) {
  TabularDataset out = ds;
  out.d = static_cast<int64_t>(cols.size());
  out.col_names.clear();
  out.categorical.clear();
  out.sym.clear();
  out.x.assign(static_cast<size_t>(out.n * out.d), 0.0f);
  for (size_t c = 0; c < cols.size(); ++c) {
    int64_t j = cols[c];
    check(j >= 0 && j < ds.d, "select_columns: index out of range");
    out.col_names.push_back(ds.col_names[static_cast<size_t>(j)]);
    out.categorical.push_back(ds.categorical[static_cast<size_t>(j)]);
    out.sym.push_back(ds.sym[static_cast<size_t>(j)]);
    for (int64_t i = 0; i < ds.n; ++i) out.at(i, static_cast<int64_t>(c)) = ds.at(i, j);
  }
  return out;
}

enum class EncodeMode { Ordinal, OneHot };

/// Per-column category tables in first-appearance order over the fit rows.
struct CategoryMaps {
  std::vector<std::vector<std::string>> categories;  // per feature column
};

inline CategoryMaps fit_categories(const TabularDataset& ds) {
  CategoryMaps maps;
  maps.categories.resize(static_cast<size_t>(ds.d));
  for (int64_t j = 0; j < ds.d; ++j) {
    if (!ds.is_symbolic(j)) continue;
    auto& cats = maps.categories[static_cast<size_t>(j)];
    for (const std::string& v : ds.sym[static_cast<size_t>(j)])
      if (std::find(cats.begin(), cats.end(), v) == cats.end()) cats.push_back(v);
  }
  return maps;
}

/// Encodes symbolic columns numerically. Ordinal: first-appearance index,
/// unseen values map to v (one past the table). One-hot: v indicator columns,
/// unseen values become all-zeros.
inline TabularDataset encode_categoricals(const TabularDataset& ds, const CategoryMaps& maps,
                                          EncodeMode mode) {
  check(ds.any_symbolic(), "encode_categoricals: no symbolic columns left to encode");
  TabularDataset out;
  out.n = ds.n;
  out.task = ds.task;
  out.n_classes = ds.n_classes;
  out.labels = ds.labels;
  out.targets = ds.targets;
  out.label_names = ds.label_names;
  out.target_name = ds.target_name;

  std::vector<std::vector<float>> cols;  // column-major build
  for (int64_t j = 0; j < ds.d; ++j) {
    if (!ds.is_symbolic(j)) {
      std::vector<float> col(static_cast<size_t>(ds.n));
      for (int64_t i = 0; i < ds.n; ++i) col[static_cast<size_t>(i)] = ds.at(i, j);
      cols.push_back(std::move(col));
      out.col_names.push_back(ds.col_names[static_cast<size_t>(j)]);
      out.categorical.push_back(false);
      continue;
    }
    const auto& cats = maps.categories[static_cast<size_t>(j)];
    check(!cats.empty(), "encode_categoricals: no fitted categories for column " +
                             ds.col_names[static_cast<size_t>(j)]);
    auto index_of = [&](const std::string& v) -> int64_t {
      for (size_t c = 0; c < cats.size(); ++c)
        if (cats[c] == v) return static_cast<int64_t>(c);
      return static_cast<int64_t>(cats.size());  // unseen
    };
    if (mode == EncodeMode::Ordinal) {
      std::vector<float> col(static_cast<size_t>(ds.n));
      for (int64_t i = 0; i < ds.n; ++i)
        col[static_cast<size_t>(i)] =
            static_cast<float>(index_of(ds.sym[static_cast<size_t>(j)][static_cast<size_t>(i)]));
      cols.push_back(std::move(col));
      out.col_names.push_back(ds.col_names[static_cast<size_t>(j)]);
      out.categorical.push_back(true);
    } else {
      for (size_t c = 0; c < cats.size(); ++c) {
        std::vector<float> col(static_cast<size_t>(ds.n), 0.0f);
        for (int64_t i = 0; i < ds.n; ++i)
          if (ds.sym[static_cast<size_t>(j)][static_cast<size_t>(i)] == cats[c])
            col[static_cast<size_t>(i)] = 1.0f;
        cols.push_back(std::move(col));
        out.col_names.push_back(ds.col_names[static_cast<size_t>(j)] + "=" + cats[c]);
        out.categorical.push_back(true);
      }
    }
  }
  out.d = static_cast<int64_t>(cols.size());
  out.sym.resize(static_cast<size_t>(out.d));
  out.x.resize(static_cast<size_t>(out.n * out.d));
  for (int64_t i = 0; i < out.n; ++i)
    for (int64_t j = 0; j < out.d; ++j)
      out.at(i, j) = cols[static_cast<size_t>(j)][static_cast<size_t>(i)];
  return out;
}

/// Fit-and-transform on the same rows (training split).
inline TabularDataset encode_categoricals(const TabularDataset& ds, EncodeMode mode) {
  return encode_categoricals(ds, fit_categories(ds), mode);
}

/// Column means/stds fitted on the training split. Means ignore missing
/// cells; stds of constant columns clamp to 1.
struct PreprocessStats {
  std::vector<double> mean;
  std::vector<double> stdev;
};

inline PreprocessStats fit_preprocess(const TabularDataset& train) {
  check(!train.any_symbolic(), "fit_preprocess: encode categoricals first");
  PreprocessStats st;
  st.mean.resize(static_cast<size_t>(train.d), 0.0);
  st.stdev.resize(static_cast<size_t>(train.d), 1.0);
  for (int64_t j = 0; j < train.d; ++j) {
    double sum = 0.0;
    int64_t cnt = 0;
    for (int64_t i = 0; i < train.n; ++i) {
      float v = train.at(i, j);
      if (!std::isnan(v)) {
        sum += v;
        ++cnt;
      }
    }
    double mean = cnt > 0 ? sum / static_cast<double>(cnt) : 0.0;
    double var = 0.0;
    for (int64_t i = 0; i < train.n; ++i) {
      float v = train.at(i, j);
      double dd = (std::isnan(v) ? mean : static_cast<double>(v)) - mean;
      var += dd * dd;
    }
    var /= static_cast<double>(train.n);
    double sd = std::sqrt(var);
    st.mean[static_cast<size_t>(j)] = mean;
    st.stdev[static_cast<size_t>(j)] = sd > 0.0 ? sd : 1.0;
  }
  return st;
}

/// Imputes missing cells with the training mean and standardizes with the
/// training statistics.
inline TabularDataset apply_preprocess(const TabularDataset& ds, const PreprocessStats& st) {
  check(!ds.any_symbolic(), "apply_preprocess: encode categoricals first");
  check(static_cast<int64_t>(st.mean.size()) == ds.d, "apply_preprocess: stats width mismatch");
  TabularDataset out = ds;
  for (int64_t i = 0; i < ds.n; ++i)
    for (int64_t j = 0; j < ds.d; ++j) {
      float v = ds.at(i, j);
      double raw = std::isnan(v) ? st.mean[static_cast<size_t>(j)] : static_cast<double>(v);
      out.at(i, j) =
          static_cast<float>((raw - st.mean[static_cast<size_t>(j)]) / st.stdev[static_cast<size_t>(j)]);
    }
  return out;
}

struct SplitSpec {
  uint64_t seed = 0;
  // train/valid/test fractions are fixed at 0.64 / 0.16 / 0.20
};

struct Split {
  std::vector<int64_t> train, valid, test;
};

namespace detail {

/// Largest-remainder allocation of n_c rows to the 64/16/20 fractions so the
/// global sizes land exactly on floor(0.64 N) and floor(0.80 N).
inline std::array<int64_t, 3> split_targets(int64_t n) {
  int64_t t0 = static_cast<int64_t>(std::floor(0.64 * static_cast<double>(n)));
  int64_t t1 = static_cast<int64_t>(std::floor(0.80 * static_cast<double>(n)));
  return {t0, t1 - t0, n - t1};
}

}  // namespace detail

/// Seeded 64/16/20 split. Classification splits are label-stratified with a
/// largest-remainder quota per class; exact global sizes follow the floor
/// rule. Throws SplitError when a class ends up absent from the train part.
inline Split split_64_16_20(const TabularDataset& ds, uint64_t seed) {
  check(ds.n >= 5, "split: need at least 5 rows");
  auto targets = detail::split_targets(ds.n);
  Split sp;
  if (ds.task == TaskKind::Regression) {
    std::vector<int64_t> idx(static_cast<size_t>(ds.n));
    for (int64_t i = 0; i < ds.n; ++i) idx[static_cast<size_t>(i)] = i;
    RngStream rng(seed, "split");
    rng.shuffle(idx.begin(), idx.end());
    sp.train.assign(idx.begin(), idx.begin() + targets[0]);
    sp.valid.assign(idx.begin() + targets[0], idx.begin() + targets[0] + targets[1]);
    sp.test.assign(idx.begin() + targets[0] + targets[1], idx.end());
    return sp;
  }

  // per-class quotas by largest remainder, then a global fixup pass so the
  // three parts hit the exact floor-rule sizes
  const int C = std::max(ds.n_classes, 1);
  std::vector<std::vector<int64_t>> by_class(static_cast<size_t>(C));
  for (int64_t i = 0; i < ds.n; ++i)
    by_class[static_cast<size_t>(ds.labels[static_cast<size_t>(i)])].push_back(i);
  RngStream rng(seed, "split");
  for (auto& v : by_class) rng.shuffle(v.begin(), v.end());

  const double fr[3] = {0.64, 0.16, 0.20};
  std::vector<std::array<int64_t, 3>> quota(static_cast<size_t>(C));
  std::array<int64_t, 3> assigned = {0, 0, 0};
  for (int c = 0; c < C; ++c) {
    int64_t nc = static_cast<int64_t>(by_class[static_cast<size_t>(c)].size());
    std::array<double, 3> want = {fr[0] * nc, fr[1] * nc, fr[2] * nc};
    std::array<int64_t, 3>& q = quota[static_cast<size_t>(c)];
    int64_t used = 0;
    for (int p = 0; p < 3; ++p) {
      q[static_cast<size_t>(p)] = static_cast<int64_t>(std::floor(want[static_cast<size_t>(p)]));
      used += q[static_cast<size_t>(p)];
    }
    while (used < nc) {
      int best = 0;
      double best_rem = -1.0;
      for (int p = 0; p < 3; ++p) {
        double rem = want[static_cast<size_t>(p)] - static_cast<double>(q[static_cast<size_t>(p)]);
        if (rem > best_rem + 1e-12) {
          best_rem = rem;
          best = p;
        }
      }
      ++q[static_cast<size_t>(best)];
      ++used;
    }
    for (int p = 0; p < 3; ++p) assigned[static_cast<size_t>(p)] += q[static_cast<size_t>(p)];
  }
  // fixup: move rows between parts (largest classes first) until global
  // totals match the floor rule
  for (int p = 0; p < 3; ++p) {
    while (assigned[static_cast<size_t>(p)] > targets[static_cast<size_t>(p)]) {
      // find the part that is short and a class that can donate
      int short_p = 0;
      for (int p2 = 0; p2 < 3; ++p2)
        if (assigned[static_cast<size_t>(p2)] < targets[static_cast<size_t>(p2)]) short_p = p2;
      int donor = -1;
      int64_t donor_size = -1;
      for (int c = 0; c < C; ++c)
        if (quota[static_cast<size_t>(c)][static_cast<size_t>(p)] > (p == 0 ? 1 : 0) &&
            static_cast<int64_t>(by_class[static_cast<size_t>(c)].size()) > donor_size) {
          donor = c;
          donor_size = static_cast<int64_t>(by_class[static_cast<size_t>(c)].size());
        }
      if (donor < 0)
        throw SplitError("stratified split cannot keep every class in the training part");
      --quota[static_cast<size_t>(donor)][static_cast<size_t>(p)];
      ++quota[static_cast<size_t>(donor)][static_cast<size_t>(short_p)];
      --assigned[static_cast<size_t>(p)];
      ++assigned[static_cast<size_t>(short_p)];
    }
  }
  for (int c = 0; c < C; ++c) {
    if (quota[static_cast<size_t>(c)][0] == 0)
      throw SplitError("class " + std::to_string(c) + " absent from the training split");
    const auto& rows = by_class[static_cast<size_t>(c)];
    int64_t pos = 0;
    for (int p = 0; p < 3; ++p) {
      auto& dst = p == 0 ? sp.train : (p == 1 ? sp.valid : sp.test);
      for (int64_t i = 0; i < quota[static_cast<size_t>(c)][static_cast<size_t>(p)]; ++i)
        dst.push_back(rows[static_cast<size_t>(pos++)]);
    }
  }
  std::sort(sp.train.begin(), sp.train.end());
  std::sort(sp.valid.begin(), sp.valid.end());
  std::sort(sp.test.begin(), sp.test.end());
  return sp;
}

/// Disjoint covering folds with sizes differing by at most one.
inline std::vector<std::vector<int64_t>> kfold_partition(const std::vector<int64_t>& indices,
                                                         int folds, uint64_t seed) {
  check(folds >= 2, "kfold: need at least 2 folds");
  check(static_cast<size_t>(folds) <= indices.size(), "kfold: more folds than indices");
  std::vector<int64_t> idx = indices;
  RngStream rng(seed, "kfold");
  rng.shuffle(idx.begin(), idx.end());
  std::vector<std::vector<int64_t>> out(static_cast<size_t>(folds));
  for (size_t i = 0; i < idx.size(); ++i)
    out[i % static_cast<size_t>(folds)].push_back(idx[i]);
  return out;
}

/// Stratified folds for classification: each class is dealt round-robin.
inline std::vector<std::vector<int64_t>> kfold_partition_stratified(
    const std::vector<int64_t>& indices, const std::vector<int>& labels, int folds,
    uint64_t seed) {
  check(folds >= 2, "kfold: need at least 2 folds");
  check(static_cast<size_t>(folds) <= indices.size(), "kfold: more folds than indices");
  check(indices.size() == labels.size(), "kfold: label count mismatch");
  std::map<int, std::vector<int64_t>> by_class;
  for (size_t i = 0; i < indices.size(); ++i) by_class[labels[i]].push_back(indices[i]);
  RngStream rng(seed, "kfold");
  std::vector<std::vector<int64_t>> out(static_cast<size_t>(folds));
  size_t cursor = 0;
  for (auto& [cls, rows] : by_class) {
    (void)cls;
    rng.shuffle(rows.begin(), rows.end());
    for (int64_t r : rows) out[cursor++ % static_cast<size_t>(folds)].push_back(r);
  }
  return out;
}

}  // namespace ticl
