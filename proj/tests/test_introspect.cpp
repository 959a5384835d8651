#include <gtest/gtest.h>

#include <set>

#include "ticl/introspect.hpp"

using namespace ticl;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.k = 8;
  c.k_prime = 4;
  c.heads = 2;
  c.depth = 2;
  c.ff_mult = 2;
  c.readout_hidden = 8;
  return c;
}

TabularDataset blob_dataset(int64_t n, int64_t d, uint64_t seed) {
  TabularDataset ds;
  ds.n = n;
  ds.d = d;
  ds.task = TaskKind::Classification;
  ds.n_classes = 2;
  ds.sym.resize(static_cast<size_t>(d));
  ds.categorical.assign(static_cast<size_t>(d), false);
  for (int64_t j = 0; j < d; ++j) ds.col_names.push_back("f" + std::to_string(j));
  ds.target_name = "y";
  RngStream rng(seed, "blob");
  for (int64_t i = 0; i < n; ++i) {
    int label = static_cast<int>(i % 2);
    ds.labels.push_back(label);
    for (int64_t j = 0; j < d; ++j)
      ds.x.push_back(static_cast<float>((label == 0 ? -2.0 : 2.0) + rng.normal() * 0.5));
  }
  return ds;
}

}  // namespace

TEST(Vanilla, ShapeRolesAndLayerZero) {
  auto w = init_weights<float>(tiny_config(), 3);
  auto train = blob_dataset(10, 3, 1);
  TensorF test_x({4, 3});
  RngStream rng(2, "t");
  for (float& v : test_x.data) v = static_cast<float>(rng.normal());

  auto em = vanilla_embeddings(train, test_x, w, 0, 5);
  ASSERT_EQ(em.rows.rows(), 14);
  ASSERT_EQ(em.rows.cols(), w.cfg.k);
  // layer 0: train rows carry their true-label embeddings, test rows the dummy
  for (int64_t i = 0; i < 10; ++i)
    for (int64_t l = 0; l < w.cfg.k; ++l)
      ASSERT_EQ(em.rows.at(i, l), w.tok.class_emb.value.at(train.labels[static_cast<size_t>(i)], l));
  for (int64_t i = 10; i < 14; ++i)
    for (int64_t l = 0; l < w.cfg.k; ++l)
      ASSERT_EQ(em.rows.at(i, l), w.tok.dummy_emb.value.at(0, l));

  auto again = vanilla_embeddings(train, test_x, w, 0, 5);
  EXPECT_EQ(em.rows.data, again.rows.data);
  EXPECT_EQ(em.split[0], "train");
  EXPECT_EQ(em.split[13], "test");
}

TEST(Lofo, FoldsPartitionAndQueriesOnce) {
  auto w = init_weights<float>(tiny_config(), 4);
  auto train = blob_dataset(20, 2, 7);
  TensorF test_x({3, 2});
  for (float& v : test_x.data) v = 0.5f;

  auto em = lofo_embeddings(train, test_x, w, 5, w.cfg.depth, 11);
  ASSERT_EQ(em.rows.rows(), 23);
  std::set<int> folds_seen;
  std::vector<int> count_per_fold(5, 0);
  for (int64_t i = 0; i < 20; ++i) {
    ASSERT_GE(em.fold[static_cast<size_t>(i)], 0);
    ASSERT_LT(em.fold[static_cast<size_t>(i)], 5);
    folds_seen.insert(em.fold[static_cast<size_t>(i)]);
    count_per_fold[static_cast<size_t>(em.fold[static_cast<size_t>(i)])]++;
  }
  EXPECT_EQ(folds_seen.size(), 5u);
  for (int c : count_per_fold) EXPECT_EQ(c, 4);
  for (int64_t i = 20; i < 23; ++i) EXPECT_EQ(em.fold[static_cast<size_t>(i)], -1);

  // at layer 0 every training row sits in the query role: dummy embedding
  auto em0 = lofo_embeddings(train, test_x, w, 5, 0, 11);
  for (int64_t i = 0; i < 20; ++i)
    for (int64_t l = 0; l < w.cfg.k; ++l)
      ASSERT_EQ(em0.rows.at(i, l), w.tok.dummy_emb.value.at(0, l));
}

TEST(Lofo, LeaveOneOutLimitAndClassGuard) {
  auto w = init_weights<float>(tiny_config(), 5);
  auto train = blob_dataset(8, 2, 9);
  TensorF test_x({1, 2});
  test_x.at(0, 0) = test_x.at(0, 1) = 0.0f;
  auto em = lofo_embeddings(train, test_x, w, 8, 1, 3);  // folds = N: leave-one-out
  std::vector<int> per_fold(8, 0);
  for (int64_t i = 0; i < 8; ++i) per_fold[static_cast<size_t>(em.fold[static_cast<size_t>(i)])]++;
  for (int c : per_fold) EXPECT_EQ(c, 1);

  // a 2-row class with 2 folds must empty the support at some round
  TabularDataset tiny = blob_dataset(4, 2, 10);
  tiny.labels = {0, 0, 0, 1};
  EXPECT_THROW(lofo_embeddings(tiny, test_x, w, 4, 1, 3), SplitError);
}

TEST(Unsupervised, DummyIgnoresLabelsAndPermuteWidth) {
  auto w = init_weights<float>(tiny_config(), 6);
  auto train = blob_dataset(12, 3, 11);
  TensorF x = train.features();
  std::vector<bool> cats(3, false);

  auto em = unsupervised_embeddings(x, cats, w, UnsupervisedMode::Dummy, w.cfg.depth, 4);
  EXPECT_EQ(em.rows.cols(), w.cfg.k);
  EXPECT_EQ(em.rows.rows(), 12);

  auto emp = unsupervised_embeddings(x, cats, w, UnsupervisedMode::Permute, w.cfg.depth, 4);
  EXPECT_EQ(emp.rows.cols(), 3 * w.cfg.k);  // concat over features

  // label-permutation no-op: unsupervised modes never read y, and the API
  // cannot even see labels -- x alone determines the output
  auto em2 = unsupervised_embeddings(x, cats, w, UnsupervisedMode::Dummy, w.cfg.depth, 4);
  EXPECT_EQ(em.rows.data, em2.rows.data);

  TensorF one_col({5, 1});
  for (float& v : one_col.data) v = 1.0f;
  EXPECT_THROW(
      unsupervised_embeddings(one_col, {false}, w, UnsupervisedMode::Permute, 0, 1),
      ContractError);
}

TEST(Probe, OneHotEmbeddingsArePerfect) {
  TensorF train_emb({8, 2});
  TensorF test_emb({4, 2});
  std::vector<int> train_y, test_y;
  for (int i = 0; i < 8; ++i) {
    train_y.push_back(i % 2);
    train_emb.at(i, i % 2) = 1.0f;
  }
  for (int i = 0; i < 4; ++i) {
    test_y.push_back(i % 2);
    test_emb.at(i, i % 2) = 1.0f;
  }
  EXPECT_DOUBLE_EQ(linear_probe(train_emb, train_y, test_emb, test_y), 1.0);

  std::vector<int> single(8, 0);
  EXPECT_THROW(linear_probe(train_emb, single, test_emb, test_y), ContractError);
}

TEST(Probe, NoiseEmbeddingsNearChance) {
  RngStream rng(13, "noise");
  double total = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    TensorF train_emb({40, 6}), test_emb({40, 6});
    for (float& v : train_emb.data) v = static_cast<float>(rng.normal());
    for (float& v : test_emb.data) v = static_cast<float>(rng.normal());
    std::vector<int> y;
    for (int i = 0; i < 40; ++i) y.push_back(i % 2);
    total += linear_probe(train_emb, y, test_emb, y);
  }
  EXPECT_NEAR(total / 10.0, 0.5, 0.12);
}

TEST(LayerSelection, TieAndCombinationRules) {
  // one layer dominates
  auto dominant = select_layer_combination(
      [](const std::vector<int>& s) { return s == std::vector<int>{2} ? 0.9 : 0.3; }, 4);
  EXPECT_EQ(dominant, (std::vector<int>{2}));

  // all equal: smallest singleton
  auto all_equal = select_layer_combination([](const std::vector<int>&) { return 0.5; }, 4);
  EXPECT_EQ(all_equal, (std::vector<int>{0}));

  // constructed case where {1,3} beats every singleton and pair
  auto combo = select_layer_combination(
      [](const std::vector<int>& s) {
        if (s == std::vector<int>{1, 3}) return 0.95;
        return 0.4 + 0.01 * static_cast<double>(s.size());
      },
      5);
  EXPECT_EQ(combo, (std::vector<int>{1, 3}));
}

TEST(AttentionMaps, RowsSumToOneAndSeedsReproduce) {
  auto w = init_weights<float>(tiny_config(), 8);
  auto train = blob_dataset(10, 3, 15);
  auto s = attention_summary(train, w, 1, 21);
  ASSERT_EQ(s.map.rows(), 4);
  for (int64_t a = 0; a < 4; ++a) {
    double sum = 0.0;
    for (int64_t b = 0; b < 4; ++b) sum += s.map.at(a, b);
    EXPECT_NEAR(sum, 1.0, 1e-5);
  }
  auto s2 = attention_summary(train, w, 1, 21);
  EXPECT_EQ(s.map.data, s2.map.data);

  // duplicated dataset rows leave the instance-averaged map unchanged
  std::vector<int64_t> dup;
  for (int64_t i = 0; i < 10; ++i) {
    dup.push_back(i);
    dup.push_back(i);
  }
  auto doubled = take_rows(train, dup);
  auto sd = attention_summary(doubled, w, 1, 21);
  for (int64_t i = 0; i < 16; ++i) EXPECT_NEAR(sd.map.at(i), s.map.at(i), 1e-5);

  EXPECT_THROW(attention_summary(train, w, 0, 21), ContractError);
}

TEST(AttentionMaps, StabilityCosines) {
  auto w = init_weights<float>(tiny_config(), 9);
  auto train = blob_dataset(8, 2, 17);
  auto rep = attention_stability(train, w, 1, 4, 33);
  EXPECT_EQ(rep.pairwise_cosine.size(), 6u);  // 4 choose 2
  for (double c : rep.pairwise_cosine) {
    EXPECT_GT(c, 0.0);
    EXPECT_LE(c, 1.0 + 1e-9);
  }
  // identical seeds give cosine exactly 1
  auto a = attention_summary(train, w, 1, 5).map;
  auto b = attention_summary(train, w, 1, 5).map;
  double dot = 0, na = 0, nb = 0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    dot += a.at(i) * b.at(i);
    na += a.at(i) * a.at(i);
    nb += b.at(i) * b.at(i);
  }
  EXPECT_DOUBLE_EQ(dot / (std::sqrt(na) * std::sqrt(nb)), 1.0);
}

TEST(TokenProjection, RowCountAndDeterminism) {
  auto w = init_weights<float>(tiny_config(), 10);
  auto train = blob_dataset(9, 3, 19);
  auto p = token_pca_projection(train, w, 1, 7);
  EXPECT_EQ(p.coords.rows(), 27);  // N * d
  EXPECT_EQ(p.attribute.size(), 27u);
  auto p2 = token_pca_projection(train, w, 1, 7);
  EXPECT_EQ(p.coords.data, p2.coords.data);
}

TEST(TokenProjection, CollapsedPerturbationsSeparateByX) {
  // with W = 0 every token of attribute j is x_ij * u: layer-0 tokens lie on
  // the u line, so the first component magnitude tracks |x|
  auto cfg = tiny_config();
  auto w = init_weights<float>(cfg, 11);
  std::fill(w.tok.w.value.data.begin(), w.tok.w.value.data.end(), 0.0f);
  auto train = blob_dataset(10, 2, 23);
  auto p = token_pca_projection(train, w, 0, 3);
  // second component variance should be ~0 (all tokens colinear with u)
  double m1 = 0.0, m2 = 0.0;
  for (int64_t i = 0; i < p.coords.rows(); ++i) {
    m1 += std::abs(p.coords.at(i, 0));
    m2 += std::abs(p.coords.at(i, 1));
  }
  EXPECT_GT(m1, 10 * m2);
}

TEST(CsvOutputs, WriteAllThree) {
  auto w = init_weights<float>(tiny_config(), 12);
  auto train = blob_dataset(6, 2, 29);
  TensorF test_x({2, 2});
  test_x.at(0, 0) = 1.0f;

  std::string dir = testing::TempDir();
  auto em = vanilla_embeddings(train, test_x, w, 1, 3);
  write_embeddings_csv(em, dir + "/emb.csv");
  auto s = attention_summary(train, w, 1, 3);
  write_attention_csv(s, train.col_names, dir + "/attn.csv");
  auto p = token_pca_projection(train, w, 1, 3);
  write_projection_csv(p, dir + "/proj.csv");

  std::ifstream in(dir + "/emb.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header.substr(0, 19), "instance,split,fold");
}
