#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "jigsaw/cli.hpp"
#include "jigsaw/permset.hpp"
#include "jigsaw/run_config.hpp"
#include "test_util.hpp"

using namespace jigsaw;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "jigsaw");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

// Synthetic data, an 8-entry set and a toy config inside `dir`.
std::filesystem::path prepare_run(const TempDir& dir, const std::string& out_name, int iterations) {
  EXPECT_EQ(run({"synth", "--out", (dir / "data").string(), "--count", "16", "--seed", "3"}).code, 0);
  EXPECT_EQ(run({"permgen", "--n", "8", "--grid", "3", "--objective", "max", "--seed", "1", "--out",
                 (dir / "perms.txt").string()})
                .code,
            0);
  const auto cfg = dir / (out_name + ".conf");
  std::ofstream os(cfg);
  os << "# toy run\n"
     << "seed = 5\n"
     << "deterministic = true\n"
     << "data.manifest = " << (dir / "data" / "manifest.txt").string() << "\n"
     << "data.norm = " << (dir / "data" / "norm.txt").string() << "\n"
     << "data.permset = " << (dir / "perms.txt").string() << "\n"
     << "cfn.preset = toy\n"
     << "train.batch_size = 4\n"
     << "train.iterations = " << iterations << "\n"
     << "train.checkpoint_every = 2\n"
     << "train.log_every = 1\n"
     << "out.dir = " << (dir / out_name).string() << "\n";
  return cfg;
}

}  // namespace

TEST(Cli, PermgenWritesSetAndReportsDispersion) {
  TempDir dir("permgen");
  const auto r = run({"permgen", "--n", "100", "--grid", "3", "--objective", "max", "--seed", "7", "--out",
                      (dir / "p.txt").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const double avg = std::stod(r.out.substr(r.out.find(' ') + 1));
  EXPECT_NEAR(avg, 0.88, 0.03);
  const auto set = PermutationSet::load(dir / "p.txt");
  EXPECT_EQ(set.size(), 100u);
  const std::string text = slurp(dir / "p.txt");
  EXPECT_EQ(count_lines(text), 104u);  // four header lines, then one line per entry

  ASSERT_EQ(run({"permgen", "--n", "24", "--grid", "2", "--out", (dir / "g2.txt").string()}).code, 0);
  EXPECT_EQ(PermutationSet::load(dir / "g2.txt").size(), 24u);
}

TEST(Cli, UsageErrors) {
  TempDir dir("usage");
  const auto zero = run({"permgen", "--n", "0", "--out", (dir / "p.txt").string()});
  EXPECT_EQ(zero.code, 2);
  EXPECT_EQ(zero.err.rfind("jigsaw: error: ", 0), 0u);
  EXPECT_EQ(count_lines(zero.err), 1u);
  EXPECT_NE(run({"permgen", "--n", "5", "--objective", "median", "--out", "x"}).code, 0);
  EXPECT_NE(run({"permgen", "--out", "x"}).code, 0);
  EXPECT_NE(run({"frobnicate"}).code, 0);
  EXPECT_NE(run({}).code, 0);
  const auto scale = run({"permgen", "--n", "5", "--grid", "4", "--out", (dir / "p.txt").string()});
  EXPECT_EQ(scale.code, 1);
  EXPECT_EQ(scale.err.rfind("jigsaw: error: ", 0), 0u);
}

TEST(Cli, StatsArithmetic) {
  const auto r = run({"stats", "--iters", "350000", "--batch", "256", "--images", "1300000"});
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("puzzles_per_image 68.92"), std::string::npos);
  const auto g = run({"stats", "--iters", "1", "--batch", "1", "--images", "1", "--gap-samples", "3000"});
  EXPECT_NE(g.out.find("gap_min 0"), std::string::npos);
  EXPECT_NE(g.out.find("gap_max 22"), std::string::npos);
  EXPECT_NE(run({"stats", "--iters", "1", "--batch", "1", "--images", "0"}).code, 0);
}

TEST(Cli, TrainMissingManifestFails) {
  TempDir dir("missing");
  const auto cfg = prepare_run(dir, "run", 2);
  std::string text = slurp(cfg);
  text.replace(text.find("manifest.txt"), 12, "nothing.txt");
  std::ofstream(cfg) << text;
  const auto r = run({"train", "--config", cfg.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("manifest"), std::string::npos);
}

TEST(Cli, UnknownConfigKeyRejected) {
  TempDir dir("badkey");
  const auto cfg = prepare_run(dir, "run", 2);
  std::ofstream(cfg, std::ios::app) << "train.warmup = 5\n";
  const auto r = run({"train", "--config", cfg.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("train.warmup"), std::string::npos);
}

TEST(Cli, TrainIsReproducibleAndResumable) {
  TempDir dir("train");
  const auto a = prepare_run(dir, "a", 4);
  const auto b = prepare_run(dir, "b", 4);
  ASSERT_EQ(run({"train", "--config", a.string(), "--deterministic"}).code, 0);
  ASSERT_EQ(run({"train", "--config", b.string(), "--deterministic"}).code, 0);
  EXPECT_EQ(slurp(dir / "a" / "metrics.csv"), slurp(dir / "b" / "metrics.csv"));
  EXPECT_EQ(slurp(dir / "a" / "final.ckpt"), slurp(dir / "b" / "final.ckpt"));
  EXPECT_EQ(count_lines(slurp(dir / "a" / "metrics.csv")), 5u);
  ASSERT_TRUE(std::filesystem::exists(dir / "a" / "iter_2.ckpt"));

  const auto c = prepare_run(dir, "c", 4);
  const auto resumed = run({"train", "--config", c.string(), "--resume", (dir / "a" / "iter_2.ckpt").string()});
  ASSERT_EQ(resumed.code, 0) << resumed.err;
  EXPECT_EQ(slurp(dir / "c" / "final.ckpt"), slurp(dir / "a" / "final.ckpt"));
  const std::string full = slurp(dir / "a" / "metrics.csv"), tail = slurp(dir / "c" / "metrics.csv");
  EXPECT_EQ(full.substr(full.size() - (tail.size() - tail.find('\n') - 1)), tail.substr(tail.find('\n') + 1));

  const auto ev = run({"eval", "--config", a.string(), "--checkpoint", (dir / "a" / "final.ckpt").string(), "--samples",
                       "40", "--report", (dir / "report.csv").string()});
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_EQ(ev.out.rfind("puzzle_accuracy ", 0), 0u);
  EXPECT_EQ(slurp(dir / "report.csv").rfind("metric,value\npuzzle_accuracy,", 0), 0u);

  const auto hits = run({"retrieve", "--checkpoint", (dir / "a" / "final.ckpt").string(), "--manifest",
                         (dir / "data" / "manifest.txt").string(), "--norm", (dir / "data" / "norm.txt").string(),
                         "--query", "synth_00004", "--k", "5", "--out", (dir / "hits.txt").string()});
  ASSERT_EQ(hits.code, 0) << hits.err;
  EXPECT_EQ(hits.out.rfind("synth_00004", 0), 0u);
  EXPECT_EQ(count_lines(slurp(dir / "hits.txt")), 5u);

  auto bytes = slurp(dir / "a" / "final.ckpt");
  bytes[4] = 9;
  std::ofstream(dir / "old.ckpt", std::ios::binary) << bytes;
  const auto bad = run({"eval", "--config", a.string(), "--checkpoint", (dir / "old.ckpt").string()});
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.err.find("version"), std::string::npos);
}

TEST(RunConfig, ParsesAndValidates) {
  const auto rc = parse_run_config("seed = 9\ntrain.lr_steps = 100,200\npuzzle.resize_target = 120\n");
  EXPECT_EQ(rc.seed, 9u);
  EXPECT_EQ(rc.train.seed, 9u);
  EXPECT_EQ(rc.train.lr_steps, (std::vector<int>{100, 200}));
  EXPECT_EQ(rc.network(8), CfnConfig::toy(8));
  EXPECT_THROW(parse_run_config("seed = 1\nseed = 2\n"), ConfigError);
  EXPECT_THROW(parse_run_config("train.batch_size = many\n"), ConfigError);
  EXPECT_THROW(parse_run_config("puzzle.cell = 30\n"), ConfigError);
  EXPECT_THROW(parse_run_config("cfn.preset = toy\ncfn.fc6_width = 64\n"), ConfigError);
}
