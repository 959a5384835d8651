// Exercises the ticl binary end to end: every subcommand, exit codes, and
// byte-identical bench reruns. The binary path arrives via TICL_BIN.

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ticl/bench.hpp"

#ifndef TICL_SOURCE_DIR
#define TICL_SOURCE_DIR "."
#endif

namespace {

std::string bin() {
  const char* b = std::getenv("TICL_BIN");
  return b ? b : "ticl";
}

std::string workdir() {
  static std::string dir = [] {
    std::string d = testing::TempDir() + "/ticl_cli";
    std::filesystem::remove_all(d);
    std::filesystem::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args) {
  std::string cmd = bin() + " " + args + " >" + workdir() + "/stdout.txt 2>" + workdir() + "/stderr.txt";
  int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

/// Small separable binary dataset written as train/test CSVs.
void make_dataset(const std::string& stem, int64_t n_train, int64_t n_test, int n_classes) {
  using namespace ticl;
  RngStream rng(42, "cli-data");
  auto make_rows = [&](int64_t n, const std::string& path) {
    std::ofstream out(path);
    out << "a,b,c,y\n";
    for (int64_t i = 0; i < n; ++i) {
      int lab = static_cast<int>(i % n_classes);
      double mu = 3.0 * lab;
      out << csv::format_float(static_cast<float>(mu + rng.normal())) << ","
          << csv::format_float(static_cast<float>(mu + rng.normal())) << ","
          << csv::format_float(static_cast<float>(rng.normal())) << ",c" << lab << "\n";
    }
  };
  make_rows(n_train, stem + "_train.csv");
  make_rows(n_test, stem + "_test.csv");
  write_file(stem + "_meta.json",
             R"({"target":"y","task":"classification","categorical":[]})");
}

}  // namespace

TEST(Cli, UnknownFlagExitsTwo) {
  EXPECT_EQ(run("--no-such-flag"), 2);
  EXPECT_EQ(run("frobnicate"), 2);
}

TEST(Cli, PretrainTinyConfigAndPredict) {
  std::string dir = workdir();
  // a deliberately tiny config: the CLI path matters here, not model quality
  write_file(dir + "/tiny.json", R"({
    "steps": 8, "tasks_per_batch": 2, "lr": 3e-4, "warmup_steps": 2,
    "model": {"k": 8, "k_prime": 4, "heads": 2, "depth": 1, "ff_mult": 2,
              "readout_hidden": 8, "max_classes": 10, "max_rows": 1024,
              "max_attributes": 64},
    "tasks": {"max_nodes": 8, "n_support": 24, "min_support": 16, "n_query": 8,
              "max_features": 4}
  })");
  ASSERT_EQ(run("pretrain --config " + dir + "/tiny.json --out " + dir + "/w.ticl"), 0);
  ASSERT_TRUE(std::filesystem::exists(dir + "/w.ticl"));
  ASSERT_TRUE(std::filesystem::exists(dir + "/w.ticl.loss.csv"));

  make_dataset(dir + "/ds", 60, 20, 2);
  ASSERT_EQ(run("--seed 3 predict --model " + dir + "/w.ticl --train " + dir +
                "/ds_train.csv --meta " + dir + "/ds_meta.json --test " + dir +
                "/ds_test.csv --out " + dir + "/pred.csv"),
            0);
  std::string pred = read_file(dir + "/pred.csv");
  EXPECT_EQ(pred.substr(0, 14), "row,prediction");
  EXPECT_TRUE(std::filesystem::exists(dir + "/pred.csv.manifest.json"));

  // strategies reachable through the CLI
  for (std::string strat : {"subspace", "pca-bag", "b", "dt"}) {
    ASSERT_EQ(run("--seed 3 predict --model " + dir + "/w.ticl --train " + dir +
                  "/ds_train.csv --meta " + dir + "/ds_meta.json --test " + dir +
                  "/ds_test.csv --strategy " + strat +
                  " --params '{\"cap\":32,\"d_prime\":2,\"target_dim\":2}' --out " + dir +
                  "/pred_" + strat + ".csv"),
              0)
        << strat;
  }

  // f64 verification mode
  ASSERT_EQ(run("--seed 3 --f64-check predict --model " + dir + "/w.ticl --train " + dir +
                "/ds_train.csv --meta " + dir + "/ds_meta.json --test " + dir +
                "/ds_test.csv --out " + dir + "/pred64.csv"),
            0);
}

TEST(Cli, ManyClassCapacityErrorNamesStar) {
  std::string dir = workdir();
  make_dataset(dir + "/mc", 90, 15, 15);
  int code = run("predict --model " + dir + "/w.ticl --train " + dir + "/mc_train.csv --meta " +
                 dir + "/mc_meta.json --test " + dir + "/mc_test.csv --out " + dir + "/mc.csv");
  EXPECT_EQ(code, 1);
  std::string err = read_file(dir + "/stderr.txt");
  EXPECT_NE(err.find("star"), std::string::npos) << err;

  // and the star strategy lifts the cap
  EXPECT_EQ(run("--seed 1 predict --model " + dir + "/w.ticl --train " + dir +
                "/mc_train.csv --meta " + dir + "/mc_meta.json --test " + dir +
                "/mc_test.csv --strategy star --out " + dir + "/mc.csv"),
            0);
}

TEST(Cli, EmbedAllModes) {
  std::string dir = workdir();
  for (std::string mode : {"vanilla", "lofo", "dummy", "permute"}) {
    ASSERT_EQ(run("--seed 2 embed --model " + dir + "/w.ticl --data " + dir +
                  "/ds_train.csv --meta " + dir + "/ds_meta.json --test " + dir +
                  "/ds_test.csv --mode " + mode + " --layer 1 --folds 5 --out " + dir + "/emb_" +
                  mode + ".csv"),
              0)
        << mode;
    std::string head = read_file(dir + "/emb_" + mode + ".csv").substr(0, 19);
    EXPECT_EQ(head, "instance,split,fold") << mode;
  }
}

TEST(Cli, InspectAttentionAndTokens) {
  std::string dir = workdir();
  ASSERT_EQ(run("--seed 5 inspect attention --model " + dir + "/w.ticl --data " + dir +
                "/ds_train.csv --meta " + dir + "/ds_meta.json --layer 1 --runs 3 --out " + dir +
                "/attn.csv"),
            0);
  EXPECT_TRUE(std::filesystem::exists(dir + "/attn.csv.stability.json"));
  ASSERT_EQ(run("--seed 5 inspect tokens --model " + dir + "/w.ticl --data " + dir +
                "/ds_train.csv --meta " + dir + "/ds_meta.json --layer 1 --out " + dir +
                "/tokens.csv"),
            0);
  EXPECT_EQ(read_file(dir + "/tokens.csv").substr(0, 17), "attribute,pc1,pc2");
}

TEST(Cli, BenchTwiceByteIdenticalAndStats) {
  std::string dir = workdir();
  std::string suite = std::string(TICL_SOURCE_DIR) + "/suites/desk6";
  // icl as a bench method, with the tiny weights trained earlier
  ASSERT_EQ(run("bench --suite " + suite + " --methods icl --model " + dir +
                "/w.ticl --seeds 1 --out " + dir + "/res_icl.json"),
            0);
  auto icl_json = nlohmann::json::parse(read_file(dir + "/res_icl.json"));
  for (const auto& cell : icl_json["cells"]) ASSERT_FALSE(cell.contains("error")) << cell.dump();

  ASSERT_EQ(run("bench --suite " + suite + " --methods knn,cart --seeds 2 --out " + dir +
                "/res1.json"),
            0);
  ASSERT_EQ(run("bench --suite " + suite + " --methods knn,cart --seeds 2 --out " + dir +
                "/res2.json"),
            0);
  EXPECT_EQ(read_file(dir + "/res1.json"), read_file(dir + "/res2.json"));

  for (std::string what : {"rank", "pama", "wilcoxon"}) {
    ASSERT_EQ(run("stats " + what + " --table " + dir + "/res1.json --out " + dir + "/stats_" +
                  what + ".json"),
              0)
        << what;
  }
  auto pj = nlohmann::json::parse(read_file(dir + "/stats_pama.json"));
  double sum = 0.0;
  for (double v : pj["pama"].get<std::vector<double>>()) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-12);
  auto wj = nlohmann::json::parse(read_file(dir + "/stats_wilcoxon.json"));
  EXPECT_TRUE(wj.contains("cd_groups"));
}
