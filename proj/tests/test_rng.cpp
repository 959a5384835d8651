#include <gtest/gtest.h>

#include <cmath>

#include "ticl/rng.hpp"

using namespace ticl;

TEST(RngStream, IdenticalTriplesReplay) {
  RngStream a(123, "attr", 4);
  RngStream b(123, "attr", 4);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(RngStream, DistinctTriplesDiffer) {
  RngStream a(123, "attr", 4);
  RngStream b(123, "attr", 5);
  RngStream c(123, "noise", 4);
  RngStream d(124, "attr", 4);
  EXPECT_NE(a.next_u64(), b.next_u64());
  EXPECT_NE(a.next_u64(), c.next_u64());
  EXPECT_NE(a.next_u64(), d.next_u64());
}

TEST(RngStream, UniformInRange) {
  RngStream r(9, "u");
  for (int i = 0; i < 1000; ++i) {
    double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    int64_t k = r.uniform_int(-3, 3);
    ASSERT_GE(k, -3);
    ASSERT_LE(k, 3);
  }
}

TEST(RngStream, NormalMoments) {
  RngStream r(17, "n");
  const int n = 20000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    double z = r.normal();
    sum += z;
    sq += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.03);
  EXPECT_NEAR(sq / n, 1.0, 0.05);
}

TEST(RngStream, ShuffleIsAPermutation) {
  RngStream r(5, "shuffle");
  std::vector<int> v = {0, 1, 2, 3, 4, 5, 6, 7};
  r.shuffle(v.begin(), v.end());
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(sorted, (std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7}));
}
