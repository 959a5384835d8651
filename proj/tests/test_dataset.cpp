#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "ticl/dataset.hpp"

using namespace ticl;

namespace {

std::string tmpdir() {
  static std::string dir = [] {
    std::string d = testing::TempDir() + "/ticl_ds";
    std::filesystem::create_directories(d);
    return d;
  }();
  return dir;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

TabularDataset toy_classification() {
  write_file(tmpdir() + "/toy.csv",
             "a,b,color,y\n"
             "1.5,2,red,yes\n"
             "0.5,1,blue,no\n"
             "2.5,3,red,yes\n");
  write_file(tmpdir() + "/toy.json",
             R"({"target":"y","task":"classification","categorical":["color"]})");
  return load_dataset(tmpdir() + "/toy.csv", tmpdir() + "/toy.json");
}

}  // namespace

TEST(LoadDataset, ParsesShapeAndClasses) {
  auto ds = toy_classification();
  EXPECT_EQ(ds.n, 3);
  EXPECT_EQ(ds.d, 3);
  EXPECT_EQ(ds.n_classes, 2);
  EXPECT_EQ(ds.labels, (std::vector<int>{0, 1, 0}));  // first-appearance ids
  EXPECT_TRUE(ds.is_symbolic(2));
  EXPECT_FALSE(ds.is_symbolic(0));
  EXPECT_FLOAT_EQ(ds.at(0, 0), 1.5f);
}

TEST(LoadDataset, RegressionTask) {
  write_file(tmpdir() + "/reg.csv", "a,t\n1,0.5\n2,1.5\n3,2.5\n4,3.5\n5,4.5\n");
  write_file(tmpdir() + "/reg.json", R"({"target":"t","task":"regression"})");
  auto ds = load_dataset(tmpdir() + "/reg.csv", tmpdir() + "/reg.json");
  EXPECT_EQ(ds.task, TaskKind::Regression);
  EXPECT_FLOAT_EQ(ds.targets[2], 2.5f);
}

TEST(LoadDataset, TargetMismatchAndRaggedRows) {
  write_file(tmpdir() + "/bad.json", R"({"target":"zzz","task":"classification"})");
  EXPECT_THROW(load_dataset(tmpdir() + "/toy.csv", tmpdir() + "/bad.json"), FormatError);
  write_file(tmpdir() + "/ragged.csv", "a,y\n1,yes\n2\n");
  write_file(tmpdir() + "/ragged.json", R"({"target":"y","task":"classification"})");
  EXPECT_THROW(load_dataset(tmpdir() + "/ragged.csv", tmpdir() + "/ragged.json"), FormatError);
  write_file(tmpdir() + "/badtask.json", R"({"target":"y","task":"ranking"})");
  EXPECT_THROW(load_dataset(tmpdir() + "/toy.csv", tmpdir() + "/badtask.json"), FormatError);
}

TEST(Encode, OrdinalFirstAppearance) {
  auto ds = toy_classification();
  auto enc = encode_categoricals(ds, EncodeMode::Ordinal);
  EXPECT_EQ(enc.d, 3);
  EXPECT_FLOAT_EQ(enc.at(0, 2), 0.0f);  // red first
  EXPECT_FLOAT_EQ(enc.at(1, 2), 1.0f);  // blue second
  EXPECT_FLOAT_EQ(enc.at(2, 2), 0.0f);
  EXPECT_FALSE(enc.any_symbolic());
  // already-numeric dataset refuses a second encode
  EXPECT_THROW(encode_categoricals(enc, EncodeMode::Ordinal), ContractError);
}

TEST(Encode, OneHotExpansion) {
  auto ds = toy_classification();
  auto enc = encode_categoricals(ds, EncodeMode::OneHot);
  EXPECT_EQ(enc.d, 4);  // a, b, color=red, color=blue
  EXPECT_FLOAT_EQ(enc.at(0, 2), 1.0f);
  EXPECT_FLOAT_EQ(enc.at(0, 3), 0.0f);
  EXPECT_FLOAT_EQ(enc.at(1, 2), 0.0f);
  EXPECT_FLOAT_EQ(enc.at(1, 3), 1.0f);
}

TEST(Encode, UnseenCategoryAtTransformTime) {
  auto train = toy_classification();
  auto maps = fit_categories(train);
  // build a "test" dataset with an unseen color
  auto test = train;
  test.sym[2] = {"green", "red", "blue"};
  auto ord = encode_categoricals(test, maps, EncodeMode::Ordinal);
  EXPECT_FLOAT_EQ(ord.at(0, 2), 2.0f);  // unseen -> v
  auto hot = encode_categoricals(test, maps, EncodeMode::OneHot);
  EXPECT_FLOAT_EQ(hot.at(0, 2), 0.0f);  // unseen -> all zeros
  EXPECT_FLOAT_EQ(hot.at(0, 3), 0.0f);
}

TEST(Preprocess, StandardizeAndImpute) {
  write_file(tmpdir() + "/std.csv", "a,b,y\n1,5,yes\n3,,no\n");
  write_file(tmpdir() + "/std.json", R"({"target":"y","task":"classification"})");
  auto ds = load_dataset(tmpdir() + "/std.csv", tmpdir() + "/std.json");
  auto st = fit_preprocess(ds);
  auto out = apply_preprocess(ds, st);
  EXPECT_FLOAT_EQ(out.at(0, 0), -1.0f);  // column [1,3] -> [-1, 1]
  EXPECT_FLOAT_EQ(out.at(1, 0), 1.0f);
  // missing cell imputed with the (only) training value, then standardized: 0
  EXPECT_FLOAT_EQ(out.at(1, 1), 0.0f);
  // constant column clamps std to 1
  EXPECT_FLOAT_EQ(out.at(0, 1), 0.0f);

  // test row transformed with train stats: value 5, mean 2, std 1 -> 3
  PreprocessStats manual;
  manual.mean = {2.0, 0.0};
  manual.stdev = {1.0, 1.0};
  auto ds2 = ds;
  ds2.at(0, 0) = 5.0f;
  auto out2 = apply_preprocess(ds2, manual);
  EXPECT_FLOAT_EQ(out2.at(0, 0), 3.0f);
}

TEST(Split, SizesFollowFloorRule) {
  TabularDataset ds;
  ds.n = 100;
  ds.d = 1;
  ds.task = TaskKind::Classification;
  ds.n_classes = 2;
  ds.x.assign(100, 0.0f);
  ds.sym.resize(1);
  ds.col_names = {"a"};
  ds.categorical = {false};
  for (int i = 0; i < 100; ++i) ds.labels.push_back(i % 2);
  auto sp = split_64_16_20(ds, 3);
  EXPECT_EQ(sp.train.size(), 64u);
  EXPECT_EQ(sp.valid.size(), 16u);
  EXPECT_EQ(sp.test.size(), 20u);

  ds.n = 10;
  ds.x.assign(10, 0.0f);
  ds.labels.clear();
  for (int i = 0; i < 10; ++i) ds.labels.push_back(i % 2);
  auto sp10 = split_64_16_20(ds, 3);
  EXPECT_EQ(sp10.train.size(), 6u);
  EXPECT_EQ(sp10.valid.size(), 2u);
  EXPECT_EQ(sp10.test.size(), 2u);
}

TEST(Split, DeterministicAndPartition) {
  TabularDataset ds;
  ds.n = 53;
  ds.d = 1;
  ds.task = TaskKind::Classification;
  ds.n_classes = 3;
  ds.x.assign(53, 0.0f);
  ds.sym.resize(1);
  ds.col_names = {"a"};
  ds.categorical = {false};
  RngStream rng(4, "labels");
  for (int i = 0; i < 53; ++i) ds.labels.push_back(static_cast<int>(rng.uniform_int(0, 2)));

  auto a = split_64_16_20(ds, 11);
  auto b = split_64_16_20(ds, 11);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.valid, b.valid);
  EXPECT_EQ(a.test, b.test);

  std::set<int64_t> all;
  for (auto& part : {a.train, a.valid, a.test})
    for (int64_t i : part) EXPECT_TRUE(all.insert(i).second);
  EXPECT_EQ(all.size(), 53u);

  // every class shows up in train
  std::set<int> train_classes;
  for (int64_t i : a.train) train_classes.insert(ds.labels[static_cast<size_t>(i)]);
  EXPECT_EQ(train_classes.size(), 3u);
}

TEST(Kfold, SizesDisjointCovering) {
  std::vector<int64_t> idx;
  for (int64_t i = 0; i < 10; ++i) idx.push_back(i * 7);

  auto singles = kfold_partition(idx, 10, 1);
  for (auto& f : singles) EXPECT_EQ(f.size(), 1u);

  auto three = kfold_partition(idx, 3, 1);
  std::multiset<size_t> sizes;
  for (auto& f : three) sizes.insert(f.size());
  EXPECT_EQ(sizes, (std::multiset<size_t>{3, 3, 4}));

  std::set<int64_t> all;
  for (auto& f : three)
    for (int64_t i : f) EXPECT_TRUE(all.insert(i).second);
  EXPECT_EQ(all.size(), idx.size());

  EXPECT_THROW(kfold_partition(idx, 1, 0), ContractError);
}

TEST(Kfold, StratifiedKeepsClassesSpread) {
  std::vector<int64_t> idx;
  std::vector<int> labels;
  for (int64_t i = 0; i < 20; ++i) {
    idx.push_back(i);
    labels.push_back(i < 10 ? 0 : 1);
  }
  auto folds = kfold_partition_stratified(idx, labels, 5, 2);
  for (auto& f : folds) {
    EXPECT_EQ(f.size(), 4u);
    int c0 = 0;
    for (int64_t i : f)
      if (labels[static_cast<size_t>(i)] == 0) ++c0;
    EXPECT_EQ(c0, 2);
  }
}

TEST(CsvRoundTrip, ReloadsExactly) {
  auto ds = toy_classification();
  auto enc = encode_categoricals(ds, EncodeMode::Ordinal);
  // perturb values so formatting gets exercised
  enc.at(0, 0) = 0.1234567f;
  enc.at(1, 1) = -3.3333333e-7f;
  save_csv(enc, tmpdir() + "/rt.csv");
  write_file(tmpdir() + "/rt.json", R"({"target":"y","task":"classification"})");
  auto back = load_dataset(tmpdir() + "/rt.csv", tmpdir() + "/rt.json");
  ASSERT_EQ(back.n, enc.n);
  ASSERT_EQ(back.d, enc.d);
  for (int64_t i = 0; i < enc.n; ++i) {
    for (int64_t j = 0; j < enc.d; ++j) ASSERT_EQ(back.at(i, j), enc.at(i, j));
    ASSERT_EQ(back.labels[static_cast<size_t>(i)], enc.labels[static_cast<size_t>(i)]);
  }
}

TEST(TakeSelect, RowAndColumnSubsets) {
  auto ds = toy_classification();
  auto enc = encode_categoricals(ds, EncodeMode::Ordinal);
  auto rows = take_rows(enc, {2, 0});
  EXPECT_EQ(rows.n, 2);
  EXPECT_FLOAT_EQ(rows.at(0, 0), 2.5f);
  EXPECT_EQ(rows.labels, (std::vector<int>{0, 0}));
  auto cols = select_columns(enc, {1});
  EXPECT_EQ(cols.d, 1);
  EXPECT_FLOAT_EQ(cols.at(1, 0), 1.0f);
}
