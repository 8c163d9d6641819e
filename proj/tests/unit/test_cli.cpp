#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "run_config.hpp"
#include "sluadv/corpus.hpp"

namespace sluadv::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

TEST(RunConfig, DefaultsValidate) {
  const RunConfig c = parse_run_config(json::object());
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.variant, "standard-multi");
  EXPECT_EQ(c.seeds, std::vector<std::uint64_t>{1});
}

TEST(RunConfig, UnknownFieldsAreNamed) {
  try {
    parse_run_config(json{{"model", {{"d_modle", 8}}}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("model.d_modle"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_run_config(json{{"bogus", 1}}), ConfigError);
}

TEST(RunConfig, TypeErrorsAreNamed) {
  try {
    parse_run_config(json{{"train", {{"epochs", "ten"}}}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train.epochs"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_run_config(json{{"train", {{"batch_size", -1}}}}), ConfigError);
  EXPECT_THROW(parse_run_config(json{{"seeds", {1, -2}}}), ConfigError);
  EXPECT_THROW(parse_run_config(json{{"seeds", 3}}), ConfigError);
  EXPECT_THROW(parse_run_config(json{{"split", {{"fractions", 0.5}}}}), ConfigError);
}

TEST(RunConfig, ParityPresetsYieldToExplicitFields) {
  const RunConfig p = parse_run_config(json{{"train", {{"parity_mode", true}}}});
  EXPECT_EQ(p.model.cnn_dim, 512);
  EXPECT_EQ(p.model.decoder_hidden, 768);
  EXPECT_EQ(p.train.batch_size, 32u);
  EXPECT_EQ(p.train.epochs, 180);
  const RunConfig q = parse_run_config(json{{"train", {{"parity_mode", true}, {"epochs", 3}}}, {"model", {{"cnn_dim", 7}}}});
  EXPECT_EQ(q.train.epochs, 3);
  EXPECT_EQ(q.model.cnn_dim, 7);
  EXPECT_EQ(q.train.batch_size, 32u);
}

TEST(RunConfig, FractionsAsStringOrObject) {
  const RunConfig a = parse_run_config(json{{"split", {{"fractions", "EN=0.5,DE=0.5"}}}});
  EXPECT_EQ(a.fractions, "EN=0.5,DE=0.5");
  const RunConfig b = parse_run_config(json{{"split", {{"fractions", {{"DE", 0.25}, {"EN", 0.75}}}, {"seed", 4}}}});
  const SplitSpec spec = parse_fractions(b.fractions, b.split_seed);
  ASSERT_EQ(spec.fractions.size(), 2u);
  EXPECT_EQ(spec.fractions[0].first, "DE");
  EXPECT_EQ(spec.fractions[1].second, 0.75);
  EXPECT_EQ(b.split_seed, 4u);
  RunConfig bad = a;
  bad.fractions = "EN=0.6,DE=0.3";
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(RunConfig, JsonRoundTrip) {
  RunConfig c = parse_run_config(json{{"variant", "adversarial"}, {"seeds", {3, 4}}, {"split", {{"fractions", "A=1"}}}});
  c.train.weights = LossWeights{0.5, 1, 1, 1, 1};
  const RunConfig d = parse_run_config(to_json(c));
  EXPECT_EQ(to_json(d), to_json(c));
  RunConfig v = c;
  v.variant = "fancy";
  EXPECT_THROW(v.validate(), ConfigError);
}

TEST(SeedList, ParsesAndRejects) {
  EXPECT_EQ(parse_seed_list("1,2,30"), (std::vector<std::uint64_t>{1, 2, 30}));
  EXPECT_THROW(parse_seed_list(""), ConfigError);
  EXPECT_THROW(parse_seed_list("1,"), ConfigError);
  EXPECT_THROW(parse_seed_list("1,x"), ConfigError);
  EXPECT_THROW(parse_seed_list("-1"), ConfigError);
}

TEST(OutputDir, FlagThenEnvironmentThenConfig) {
  RunConfig c;
  c.output_dir = "from_config";
  ::unsetenv("SLUADV_OUT");
  EXPECT_EQ(resolve_output_dir(std::nullopt, c), fs::path("from_config"));
  ::setenv("SLUADV_OUT", "from_env", 1);
  EXPECT_EQ(resolve_output_dir(std::nullopt, c), fs::path("from_env"));
  EXPECT_EQ(resolve_output_dir(std::string("from_flag"), c), fs::path("from_flag"));
  ::unsetenv("SLUADV_OUT");
  EXPECT_THROW(resolve_output_dir(std::nullopt, RunConfig{}), ConfigError);
}

// ------------------------------------------------------------ binary

class CliBinary : public ::testing::Test {
 protected:
  void SetUp() override {
    ::unsetenv("SLUADV_OUT");
    dir_ = fs::temp_directory_path() / ("sluadv_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(const std::string& args) const {
    const std::string cmd = std::string(SLUADV_CLI_PATH) + " " + args + " >" + (dir_ / "stdout.txt").string() +
                            " 2>" + (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string p(const std::string& rel) const { return (dir_ / rel).string(); }

  static std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  }

  void write_tiny_config() const {
    std::ofstream(p("config.json")) << R"({"model": {"d_model": 8, "n_layers": 1, "n_heads": 2, "ffn_dim": 8,
      "decoder_hidden": 8, "cnn_dim": 8}, "train": {"epochs": 1, "batch_size": 16, "warmup": 5}, "min_token_freq": 1})";
  }

  fs::path dir_;
};

TEST_F(CliBinary, UsageErrors) {
  EXPECT_EQ(run(""), kExitUsage);
  EXPECT_EQ(run("frobnicate"), kExitUsage);
  EXPECT_EQ(run("generate --groups 0 --langs A,B --out " + p("g")), kExitUsage);
  EXPECT_EQ(run("generate --groups 5 --langs A --out " + p("g")), kExitUsage);
  EXPECT_EQ(run("split --corpus " + p("missing") + " --fractions A=1 --out " + p("s")), kExitUsage);
  EXPECT_NE(slurp(dir_ / "stderr.txt").find("--corpus"), std::string::npos);
}

TEST_F(CliBinary, GenerateIsDeterministic) {
  ASSERT_EQ(run("generate --groups 12 --langs L1,L2 --seed 5 --out " + p("a")), kExitOk);
  ASSERT_EQ(run("generate --groups 12 --langs L1,L2 --seed 5 --out " + p("b")), kExitOk);
  for (const char* f : {"L1.txt", "L2.txt", "manifest.json"}) {
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }
  EXPECT_EQ(read_parallel_dir(dir_ / "a").size(), 12u);
}

TEST_F(CliBinary, SplitArithmetic) {
  ASSERT_EQ(run("generate --groups 20 --langs L1,L2 --seed 1 --out " + p("c")), kExitOk);
  ASSERT_EQ(run("split --corpus " + p("c") + " --fractions L1=0.7,L2=0.3 --seed 2 --out " + p("s")), kExitOk);
  EXPECT_EQ(read_corpus_file(dir_ / "s" / "mixed.txt").size(), 20u);
  EXPECT_EQ(read_corpus_file(dir_ / "s" / "naive_L1.txt").size(), 14u);
  EXPECT_EQ(read_corpus_file(dir_ / "s" / "ideal_L2.txt").size(), 20u);
  EXPECT_EQ(run("split --corpus " + p("c") + " --fractions L1=0.6,L2=0.3 --out " + p("t")), kExitUsage);
}

TEST_F(CliBinary, TrainAndEval) {
  write_tiny_config();
  ASSERT_EQ(run("generate --groups 30 --langs L1,L2 --seed 1 --out " + p("c")), kExitOk);
  ASSERT_EQ(run("split --corpus " + p("c") + " --fractions L1=0.5,L2=0.5 --out " + p("s")), kExitOk);
  EXPECT_EQ(run("train --config " + p("config.json") + " --variant adversarial --train " + p("s/naive_L1.txt") +
                " --dev " + p("s/naive_L1.txt") + " --out " + p("adv")),
            kExitUsage);
  ASSERT_EQ(run("train --config " + p("config.json") + " --train " + p("s/mixed.txt") + " --dev " +
                p("s/ideal_L1.txt") + " --out " + p("m")),
            kExitOk);
  ASSERT_EQ(run("eval --model " + p("m/model.ckpt") + " --test " + p("s/ideal_L2.txt") + " --out " + p("e")), kExitOk);
  const json metrics = json::parse(slurp(dir_ / "e" / "metrics.json"));
  EXPECT_TRUE(metrics.at("per_language").contains("L2"));

  Corpus odd;
  odd.add(Utterance{"x", "L1", "no_such_intent", {"hello"}, {"O"}});
  write_corpus_file(dir_ / "odd.txt", odd);
  EXPECT_EQ(run("eval --model " + p("m/model.ckpt") + " --test " + p("odd.txt") + " --out " + p("e2")), kExitRuntime);
  EXPECT_NE(slurp(dir_ / "stderr.txt").find("label inventory"), std::string::npos);
}

}  // namespace
}  // namespace sluadv::cli
