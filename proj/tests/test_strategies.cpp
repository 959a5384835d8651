#include <gtest/gtest.h>

#include <set>

#include "ticl/strategies.hpp"

using namespace ticl;

namespace {

TabularDataset make_numeric_ds(const TensorF& x, std::vector<int> labels, int n_classes) {
  TabularDataset ds;
  ds.n = x.rows();
  ds.d = x.cols();
  ds.x = x.data;
  ds.task = TaskKind::Classification;
  ds.n_classes = n_classes;
  ds.labels = std::move(labels);
  ds.sym.resize(static_cast<size_t>(ds.d));
  ds.categorical.assign(static_cast<size_t>(ds.d), false);
  for (int64_t j = 0; j < ds.d; ++j) ds.col_names.push_back("f" + std::to_string(j));
  ds.target_name = "y";
  return ds;
}

/// Returns the label of the training row whose features match the query
/// exactly (tests arrange for exact duplicates).
struct ExactMatchPredictor : Predictor {
  PredictionSet predict(const TabularDataset& train, const TensorF& test_x,
                        uint64_t seed) const override {
    PredictionSet out;
    out.seed = seed;
    out.classification = train.task == TaskKind::Classification;
    for (int64_t q = 0; q < test_x.rows(); ++q) {
      int64_t hit = -1;
      for (int64_t i = 0; i < train.n && hit < 0; ++i) {
        bool same = true;
        for (int64_t j = 0; j < train.d; ++j)
          if (train.at(i, j) != test_x.at(q, j)) {
            same = false;
            break;
          }
        if (same) hit = i;
      }
      check(hit >= 0, "oracle: query not found in training set");
      if (out.classification) {
        int lab = train.labels[static_cast<size_t>(hit)];
        out.labels.push_back(lab);
        std::vector<double> p(static_cast<size_t>(std::max(train.n_classes, lab + 1)), 0.0);
        p[static_cast<size_t>(lab)] = 1.0;
        out.probs.push_back(std::move(p));
      } else {
        out.values.push_back(train.targets[static_cast<size_t>(hit)]);
      }
    }
    return out;
  }
};

/// 1-NN on Euclidean distance; rotation-invariant.
struct Knn1Predictor : Predictor {
  PredictionSet predict(const TabularDataset& train, const TensorF& test_x,
                        uint64_t seed) const override {
    PredictionSet out;
    out.seed = seed;
    out.classification = true;
    TensorF tx = train.features();
    for (int64_t q = 0; q < test_x.rows(); ++q) {
      int lab = knn_predict_class(tx, train.labels, test_x, q, 1);
      out.labels.push_back(lab);
      std::vector<double> p(static_cast<size_t>(train.n_classes), 0.0);
      p[static_cast<size_t>(lab)] = 1.0;
      out.probs.push_back(std::move(p));
    }
    return out;
  }
};

/// Counts invocations and records the feature widths it saw.
struct CountingPredictor : Predictor {
  mutable std::vector<int64_t> widths;
  PredictionSet predict(const TabularDataset& train, const TensorF& test_x,
                        uint64_t seed) const override {
    widths.push_back(train.d);
    PredictionSet out;
    out.seed = seed;
    out.classification = true;
    for (int64_t q = 0; q < test_x.rows(); ++q) {
      out.labels.push_back(0);
      out.probs.push_back({1.0, 0.0});
    }
    return out;
  }
};

}  // namespace

TEST(Aggregate, SingleMemberIdentity) {
  PredictionSet m;
  m.classification = true;
  m.labels = {1, 0, 2};
  m.probs = {{0.1, 0.8, 0.1}, {0.9, 0.05, 0.05}, {0.2, 0.2, 0.6}};
  auto out = aggregate({m}, true);
  EXPECT_EQ(out.labels, m.labels);
}

TEST(Aggregate, MajorityAndTieBreaks) {
  auto mk = [](int label, std::vector<double> p) {
    PredictionSet m;
    m.classification = true;
    m.labels = {label};
    m.probs = {std::move(p)};
    return m;
  };
  auto out = aggregate({mk(0, {0.6, 0.4}), mk(0, {0.6, 0.4}), mk(1, {0.1, 0.9})}, true);
  EXPECT_EQ(out.labels[0], 0);

  // 1-1 vote tie: summed probability decides
  auto tie = aggregate({mk(0, {0.55, 0.45}), mk(1, {0.05, 0.95})}, true);
  EXPECT_EQ(tie.labels[0], 1);

  // exact probability tie falls to the lowest label
  auto low = aggregate({mk(1, {0.5, 0.5}), mk(0, {0.5, 0.5})}, true);
  EXPECT_EQ(low.labels[0], 0);
}

TEST(Aggregate, RegressionMeanAndShapeChecks) {
  PredictionSet a, b;
  a.classification = b.classification = false;
  a.values = {1.0};
  b.values = {3.0};
  auto out = aggregate({a, b}, false);
  EXPECT_DOUBLE_EQ(out.values[0], 2.0);

  b.values = {3.0, 4.0};
  EXPECT_THROW(aggregate({a, b}, false), ContractError);
}

TEST(Subspace, SingleMemberEqualsBase) {
  TensorF x({6, 3});
  RngStream rng(3, "x");
  for (float& v : x.data) v = static_cast<float>(rng.normal());
  auto ds = make_numeric_ds(x, {0, 1, 0, 1, 0, 1}, 2);
  Knn1Predictor base;
  auto direct = base.predict(ds, x, 7);
  auto via = subspace_ensemble_predict(ds, x, 8, 21, base);  // d' >= d: one member
  EXPECT_EQ(via.labels, direct.labels);
  EXPECT_EQ(via.member_count, 1);
}

TEST(Subspace, PartitionCoversAllFeatures) {
  TensorF x({4, 4});
  for (float& v : x.data) v = 1.0f;
  auto ds = make_numeric_ds(x, {0, 1, 0, 1}, 2);
  CountingPredictor base;
  auto out = subspace_ensemble_predict(ds, x, 2, 5, base);
  EXPECT_EQ(out.member_count, 2);  // ceil(4/2)
  EXPECT_EQ(base.widths, (std::vector<int64_t>{2, 2}));

  CountingPredictor base2;
  TensorF x5({2, 5});
  for (float& v : x5.data) v = 1.0f;
  auto ds5 = make_numeric_ds(x5, {0, 1}, 2);
  subspace_ensemble_predict(ds5, x5, 2, 5, base2);
  int64_t total = 0;
  for (int64_t w : base2.widths) {
    EXPECT_LE(w, 2);
    total += w;
  }
  EXPECT_EQ(total, 5);  // disjoint cover
  EXPECT_EQ(base2.widths.size(), 3u);  // ceil(5/2)
}

TEST(Subspace, MemberCountMatchesCeilDivision) {
  // d=2000, d'=500 -> m=4
  EXPECT_EQ((2000 + 499) / 500, 4);
  TensorF x({2, 8});
  for (float& v : x.data) v = 1.0f;
  auto ds = make_numeric_ds(x, {0, 1}, 2);
  CountingPredictor base;
  auto out = subspace_ensemble_predict(ds, x, 2, 5, base);
  EXPECT_EQ(out.member_count, 4);  // ceil(8/2)
}

TEST(PcaBagging, SingleBagFullDimEqualsBaseOnRotationInvariantTask) {
  RngStream rng(11, "pb");
  TensorF x({30, 3});
  std::vector<int> y;
  for (int64_t i = 0; i < 30; ++i) {
    double base = i < 15 ? -3.0 : 3.0;
    for (int64_t j = 0; j < 3; ++j) x.at(i, j) = static_cast<float>(base + rng.normal() * 0.3);
    y.push_back(i < 15 ? 0 : 1);
  }
  auto ds = make_numeric_ds(x, y, 2);
  Knn1Predictor base;
  TensorF qx({4, 3}, {-3, -3, -3, 3, 3, 3, -2.5, -3.2, -2.9f, 2.9f, 3.1f, 3.2f});
  auto direct = base.predict(ds, qx, 5);
  auto via = pca_bagging_predict(ds, qx, 3, 1, 13, base);
  EXPECT_EQ(via.labels, direct.labels);

  EXPECT_THROW(pca_bagging_predict(ds, qx, 4, 1, 13, base), ContractError);
}

TEST(PcaBagging, IdenticalMembersAggregateToSame) {
  PredictionSet m;
  m.classification = true;
  m.labels = {2, 1};
  m.probs = {{0, 0, 1}, {0, 1, 0}};
  auto out = aggregate({m, m, m}, true);
  EXPECT_EQ(out.labels, m.labels);
}

TEST(Codec, DecimalEncodeExamples) {
  EXPECT_EQ(decimal_encode(13, 15), (std::vector<int>{1, 3}));
  EXPECT_EQ(decimal_digits(15), 2);
  for (int y = 0; y < 10; ++y) EXPECT_EQ(decimal_encode(y, 10), (std::vector<int>{y}));
  EXPECT_EQ(decimal_digits(10), 1);
  EXPECT_EQ(decimal_digits(11), 2);
  EXPECT_EQ(decimal_digits(100), 2);
  EXPECT_EQ(decimal_digits(101), 3);
  EXPECT_EQ(decimal_digits(1000), 3);
}

TEST(Codec, RoundTripSample) {
  for (int C : {2, 7, 10, 11, 15, 16, 99, 100, 101, 473, 1000})
    for (int y = 0; y < C; ++y) ASSERT_EQ(decimal_decode(decimal_encode(y, C), C), y);
}

TEST(Codec, InvalidDecodeClampsByHamming) {
  // C=15, digits {2,7} decode to 27 -> invalid; nearest valid by digit-wise
  // Hamming: distance 1 candidates share one digit. 7 = [0,7] differs in the
  // tens digit only; ties resolve to the smaller label.
  int lab = decimal_decode({2, 7}, 15);
  auto code = decimal_encode(lab, 15);
  int dist = (code[0] != 2) + (code[1] != 7);
  EXPECT_EQ(dist, 1);
  EXPECT_EQ(lab, 7);
  EXPECT_THROW(decimal_decode({10, 0}, 15), ContractError);
}

TEST(Codec, StarPermutationsAreBijections) {
  std::vector<int> perm = {3, 0, 2, 1};
  auto c = make_star_codec(4, perm);
  EXPECT_EQ(c.code[0], decimal_encode(3, 4));
  std::vector<int> bad = {0, 0, 1, 2};
  EXPECT_THROW(make_star_codec(4, bad), ContractError);
}

TEST(Codec, EcocRowsDistinct) {
  auto c = make_ecoc_codec(40, 4, 9);
  std::set<std::vector<int>> rows(c.code.begin(), c.code.end());
  EXPECT_EQ(rows.size(), 40u);
  for (const auto& row : c.code)
    for (int v : row) {
      EXPECT_GE(v, 0);
      EXPECT_LT(v, 10);
    }
}

namespace {

// 16 distinct one-feature rows, one class each; queries duplicate them
std::pair<TabularDataset, TensorF> many_class_fixture(int C) {
  TensorF x({C, 2});
  std::vector<int> y;
  for (int i = 0; i < C; ++i) {
    x.at(i, 0) = static_cast<float>(i);
    x.at(i, 1) = static_cast<float>(i * i % 37);
    y.push_back(i);
  }
  auto ds = make_numeric_ds(x, y, C);
  return {ds, x};
}

}  // namespace

TEST(ManyClass, OracleBaseGivesPerfectAccuracyEveryMode) {
  auto [ds, qx] = many_class_fixture(15);
  ExactMatchPredictor base;
  for (auto mode : {ManyClassMode::Dpt, ManyClassMode::Star, ManyClassMode::Ecoc}) {
    auto out = many_class_predict(ds, qx, mode, 3, base);
    for (int i = 0; i < 15; ++i) ASSERT_EQ(out.labels[static_cast<size_t>(i)], i) << "mode failed";
  }
}

TEST(ManyClass, MemberCounts) {
  auto [ds16, qx16] = many_class_fixture(16);
  ExactMatchPredictor base;
  auto star = many_class_predict(ds16, qx16, ManyClassMode::Star, 1, base);
  EXPECT_EQ(star.member_count, 4);  // ceil(sqrt(16))

  auto [ds15, qx15] = many_class_fixture(15);
  auto dpt = many_class_predict(ds15, qx15, ManyClassMode::Dpt, 1, base);
  EXPECT_EQ(dpt.member_count, 2);  // two digit positions
}

TEST(ManyClass, SmallCDelegatesToBase) {
  auto [ds, qx] = many_class_fixture(8);
  ExactMatchPredictor base;
  auto out = many_class_predict(ds, qx, ManyClassMode::Star, 1, base);
  EXPECT_EQ(out.strategy, "base");
}

TEST(LargeScale, DegenerateBEqualsBase) {
  auto [ds, qx] = many_class_fixture(6);
  ExactMatchPredictor base;
  LargeScalePlan plan;
  plan.variant = LargeScalePlan::Variant::B;
  plan.support_cap = 100;
  auto out = large_scale_predict(ds, qx, plan, 5, base);
  auto direct = base.predict(ds, qx, 5);
  EXPECT_EQ(out.labels, direct.labels);
  EXPECT_EQ(out.strategy, "base(degenerate)");
}

TEST(LargeScale, DfSubsetSizes) {
  RngStream rng(8, "df");
  TensorF x({50, 2});
  std::vector<int> y;
  for (int64_t i = 0; i < 50; ++i) {
    x.at(i, 0) = static_cast<float>(rng.normal());
    x.at(i, 1) = static_cast<float>(i);
    y.push_back(static_cast<int>(i % 2));
  }
  auto ds = make_numeric_ds(x, y, 2);

  struct SizeRecorder : Predictor {
    mutable std::vector<int64_t> sizes;
    PredictionSet predict(const TabularDataset& train, const TensorF& test_x,
                          uint64_t seed) const override {
      sizes.push_back(train.n);
      PredictionSet out;
      out.seed = seed;
      out.classification = true;
      for (int64_t q = 0; q < test_x.rows(); ++q) {
        out.labels.push_back(0);
        out.probs.push_back({1.0, 0.0});
      }
      return out;
    }
  };

  // subset size = floor(0.6 * 50) = 30; with min_samples_split=100 each DT
  // run keeps its subset whole, so the recorder sees 30-row supports
  SizeRecorder base;
  LargeScalePlan plan;
  plan.variant = LargeScalePlan::Variant::DF;
  plan.support_cap = 100;
  plan.df_subsets = 8;
  TensorF qx({2, 2}, {0, 0, 1, 1});
  auto out = large_scale_predict(ds, qx, plan, 5, base);
  EXPECT_EQ(out.member_count, 8);
  for (int64_t s : base.sizes) EXPECT_EQ(s, 30);
}

TEST(LargeScale, DtPureLeavesAreExact) {
  // two clusters, pure labels; CART with a small split cap separates them
  TensorF x({40, 1});
  std::vector<int> y;
  for (int64_t i = 0; i < 40; ++i) {
    x.at(i, 0) = static_cast<float>(i < 20 ? i * 0.01 : 10.0 + i * 0.01);
    y.push_back(i < 20 ? 0 : 1);
  }
  auto ds = make_numeric_ds(x, y, 2);
  TensorF qx({4, 1}, {0.05f, 0.15f, 10.2f, 10.3f});

  struct NeverCalled : Predictor {
    PredictionSet predict(const TabularDataset&, const TensorF&, uint64_t) const override {
      throw ContractError("base predictor must not be consulted on pure leaves");
    }
  };
  NeverCalled base;
  LargeScalePlan plan;
  plan.variant = LargeScalePlan::Variant::DT;
  plan.support_cap = 25;
  auto out = large_scale_predict(ds, qx, plan, 5, base);
  EXPECT_EQ(out.labels, (std::vector<int>{0, 0, 1, 1}));
}

TEST(LargeScale, KSelectsDistinctSupportRows) {
  RngStream rng(4, "k");
  TensorF x({30, 2});
  std::vector<int> y;
  for (int64_t i = 0; i < 30; ++i) {
    x.at(i, 0) = static_cast<float>(rng.normal());
    x.at(i, 1) = static_cast<float>(rng.normal());
    y.push_back(static_cast<int>(i % 2));
  }
  auto ds = make_numeric_ds(x, y, 2);

  struct DistinctChecker : Predictor {
    PredictionSet predict(const TabularDataset& train, const TensorF& test_x,
                          uint64_t seed) const override {
      for (int64_t a = 0; a < train.n; ++a)
        for (int64_t b = a + 1; b < train.n; ++b) {
          bool same = true;
          for (int64_t j = 0; j < train.d; ++j)
            if (train.at(a, j) != train.at(b, j)) same = false;
          check(!same, "duplicate support row");
        }
      check(train.n <= 8, "support exceeds cap");
      PredictionSet out;
      out.seed = seed;
      out.classification = true;
      for (int64_t q = 0; q < test_x.rows(); ++q) {
        out.labels.push_back(0);
        out.probs.push_back({1.0, 0.0});
      }
      return out;
    }
  };
  DistinctChecker base;
  LargeScalePlan plan;
  plan.variant = LargeScalePlan::Variant::K;
  plan.support_cap = 8;
  TensorF qx({2, 2}, {0, 0, 1, 1});
  auto out = large_scale_predict(ds, qx, plan, 3, base);
  EXPECT_EQ(out.labels.size(), 2u);
}

TEST(LargeScale, SqUsesEmbedderAndProbe) {
  // embeddings = one-hot of the true label make the probe perfect
  RngStream rng(5, "sq");
  TensorF x({60, 2});
  std::vector<int> y;
  for (int64_t i = 0; i < 60; ++i) {
    x.at(i, 0) = static_cast<float>(i);
    x.at(i, 1) = static_cast<float>(rng.normal());
    y.push_back(static_cast<int>(i % 2));
  }
  auto ds = make_numeric_ds(x, y, 2);
  TensorF qx({4, 2}, {2, 0, 3, 0, 10, 0, 11, 0});

  Embedder emb = [&](const TabularDataset&, const TensorF& queries, uint64_t) {
    TensorF e({queries.rows(), 2});
    for (int64_t i = 0; i < queries.rows(); ++i) {
      int label = static_cast<int>(queries.at(i, 0)) % 2;
      e.at(i, label) = 1.0f;
    }
    return e;
  };
  struct Unused : Predictor {
    PredictionSet predict(const TabularDataset&, const TensorF&, uint64_t) const override {
      throw ContractError("unused");
    }
  };
  Unused base;
  LargeScalePlan plan;
  plan.variant = LargeScalePlan::Variant::SQ;
  plan.support_cap = 20;
  plan.repetitions = 2;
  auto out = large_scale_predict(ds, qx, plan, 7, base, emb);
  EXPECT_EQ(out.labels, (std::vector<int>{0, 1, 0, 1}));
}
