#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

#include "advdrive/checkpoint.hpp"
#include "advdrive/cli.hpp"
#include "advdrive/metrics.hpp"
#include "test_support.hpp"

using namespace advdrive;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome Run(std::vector<std::string> args) {
  args.insert(args.begin(), "advdrive");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = Dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> Split(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> v;
  for (std::string w; in >> w;) v.push_back(w);
  return v;
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Tiny budgets so the whole pipeline runs in seconds.
std::string TinyConfig(const fs::path& dir) {
  const fs::path p = dir / "tiny.json";
  std::ofstream(p) << R"({
    "seed": 3,
    "raster": {"mode": "lite21"},
    "sim": {"max_steps": 25},
    "checkpoint_every": 2,
    "ppo": {"train_batch": 16, "minibatch": 8, "epochs_per_batch": 2},
    "phases": {
      "baseline": {"episodes": 2},
      "adversary": {"episodes": 2},
      "retraining": {"episodes": 2},
      "evaluation": {"episodes": 3, "max_steps": 25}
    }
  })";
  return p.string();
}

}  // namespace

TEST_CASE("usage errors exit with status 2") {
  const Outcome none = Run({});
  CHECK(none.code == 2);
  CHECK(none.err.rfind("error: usage:", 0) == 0);
  const Outcome bad = Run({"train-baseline", "--bogus"});
  CHECK(bad.code == 2);
  CHECK(bad.err.rfind("error: usage:", 0) == 0);
  CHECK(Run({"frobnicate"}).code == 2);
  CHECK(Run({"train-adversary"}).code == 2);
  CHECK(Run({"--help"}).code == 0);
}

TEST_CASE("runtime failures exit with status 1 and a kind") {
  const fs::path dir = testing::ScratchDir("cli_errors");
  const Outcome missing = Run({"train-adversary", "--victims", (dir / "nope").string(), "--out",
                               (dir / "o").string()});
  CHECK(missing.code == 1);
  CHECK(missing.err.rfind("error: io_error:", 0) == 0);

  const fs::path bad = dir / "bad.json";
  std::ofstream(bad) << R"({"ppo": {"gamma": 1.5}})";
  const Outcome config = Run({"train-baseline", "--config", bad.string(), "--out", (dir / "o").string()});
  CHECK(config.code == 1);
  CHECK(config.err.find("ppo.gamma") != std::string::npos);

  const Outcome report = Run({"compare", (dir / "missing.json").string()});
  CHECK(report.err.rfind("error: io_error:", 0) == 0);
  CHECK(report.code == 1);
}

TEST_CASE("the commands chain end to end") {
  const fs::path dir = testing::ScratchDir("cli_chain");
  const std::string cfg = TinyConfig(dir);
  const std::string out = (dir / "run").string();

  const Outcome b = Run({"train-baseline", "--config", cfg, "--out", out});
  REQUIRE(b.code == 0);
  CHECK(fs::exists(fs::path(out) / "baseline" / "T1.ckpt"));
  CHECK(fs::exists(fs::path(out) / "train-baseline_manifest.json"));
  CHECK(fs::exists(fs::path(out) / "train-baseline_config.json"));
  CHECK(fs::exists(fs::path(out) / "training_stats.jsonl"));
  const std::string victims = (fs::path(out) / "baseline").string();
  CHECK(FindVictimCheckpoints(victims).size() == 2);

  const Outcome a = Run({"train-adversary", "--config", cfg, "--victims", victims, "--reward",
                         "adv_offroad", "--out", out});
  REQUIRE(a.code == 0);
  const std::string adv = (fs::path(out) / "adversary_adv_offroad" / "adversary.ckpt").string();
  REQUIRE(fs::exists(adv));
  CHECK(LoadCheckpoint(adv).reward_kind == RewardKind::kAdvOffroad);

  const Outcome r = Run({"retrain", "--config", cfg, "--victims", victims, "--adversary", adv, "--out", out});
  REQUIRE(r.code == 0);

  const Outcome e1 = Run({"evaluate", "--config", cfg, "--victims", victims, "--label", "baseline",
                          "--plot-episodes", "0", "--out", out});
  REQUIRE(e1.code == 0);
  const Outcome e2 = Run({"evaluate", "--config", cfg, "--victims", victims, "--adversary", adv,
                          "--label", "attack", "--episodes", "3", "--workers", "2", "--out", out});
  REQUIRE(e2.code == 0);
  const fs::path eval = fs::path(out) / "eval_baseline";
  CHECK(fs::exists(eval / "report.json"));
  CHECK(fs::exists(eval / "report.txt"));
  CHECK(fs::exists(eval / "trajectory_ep0.svg"));
  CHECK(fs::exists(eval / "trajectory_ep0.csv"));
  CHECK(LoadReport((eval / "report.json").string()).episodes == 3);

  const Outcome c = Run({"compare", (eval / "report.json").string(),
                         (fs::path(out) / "eval_attack" / "report.json").string(), "--reference",
                         "attack=baseline", "--out", (dir / "cmp").string()});
  REQUIRE(c.code == 0);
  CHECK(c.out.find("cv_rate") != std::string::npos);
  CHECK(c.out.find("attack") != std::string::npos);
  CHECK(Slurp(dir / "cmp" / "comparison.txt") == c.out);

  const Outcome p = Run({"plot", "--config", cfg, "--victims", victims, "--adversary", adv,
                         "--episode", "1", "--label", "pic", "--out", out});
  REQUIRE(p.code == 0);
  CHECK(fs::exists(fs::path(out) / "eval_pic" / "trajectory_ep1.svg"));
}

TEST_CASE("out flag beats the environment which beats the config") {
  const fs::path dir = testing::ScratchDir("cli_env");
  const std::string cfg = TinyConfig(dir);
  const std::string env_out = (dir / "from_env").string();
  ::setenv("ADVDRIVE_OUT", env_out.c_str(), 1);
  REQUIRE(Run({"train-baseline", "--config", cfg, "--episodes", "1"}).code == 0);
  CHECK(fs::exists(fs::path(env_out) / "baseline" / "T1.ckpt"));
  const std::string flag_out = (dir / "from_flag").string();
  REQUIRE(Run({"train-baseline", "--config", cfg, "--episodes", "1", "--out", flag_out}).code == 0);
  CHECK(fs::exists(fs::path(flag_out) / "baseline" / "T1.ckpt"));
  ::unsetenv("ADVDRIVE_OUT");
}

TEST_CASE("the recorded reproduce command rebuilds identical checkpoints") {
  const fs::path dir = testing::ScratchDir("cli_repro");
  const std::string cfg = TinyConfig(dir);
  const std::string first = (dir / "first").string();
  REQUIRE(Run({"train-baseline", "--config", cfg, "--seed", "17", "--out", first}).code == 0);
  const nlohmann::json m = nlohmann::json::parse(Slurp(fs::path(first) / "train-baseline_manifest.json"));
  CHECK(m.at("master_seed") == 17);
  std::vector<std::string> args = Split(m.at("reproduce").get<std::string>());
  REQUIRE(args.at(0) == "advdrive");
  args.erase(args.begin());
  const std::string second = (dir / "second").string();
  for (std::size_t i = 0; i + 1 < args.size(); ++i) {
    if (args[i] == "--out") args[i + 1] = second;
  }
  REQUIRE(Run(args).code == 0);
  for (const char* id : {"T1", "T2"}) {
    const std::string name = std::string(id) + ".ckpt";
    CHECK(FileSha256((fs::path(first) / "baseline" / name).string()) ==
          FileSha256((fs::path(second) / "baseline" / name).string()));
  }
}
