#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"

#include "advdrive/checkpoint.hpp"
#include "advdrive/config.hpp"
#include "advdrive/orchestrator.hpp"
#include "advdrive/random.hpp"
#include "gradcheck.hpp"
#include "test_support.hpp"

using namespace advdrive;
namespace fs = std::filesystem;

namespace {

Checkpoint TrainedLikeCheckpoint(std::uint64_t seed) {
  const AgentSpec spec = DefaultScenario().agents[0];
  AgentPolicy p = AgentPolicy::Fresh(spec, NetArch::Lite21(), seed, 0.45);
  p.params = testing::RandomLiteParams(seed);
  std::mt19937_64 rng(seed);
  for (auto* moments : {&p.adam.m, &p.adam.v}) {
    for (auto& a : moments->arrays) {
      for (double& v : a.values) v = UniformUnit(rng) * 1e-3;
    }
  }
  p.adam.step = 37;
  p.episodes_trained = 12;
  p.steps_trained = 3456;
  return p.ToCheckpoint();
}

std::string KindOf(const std::string& bytes) {
  try {
    DecodeCheckpoint(bytes);
  } catch (const CheckpointError& e) {
    return e.kind();
  }
  return "";
}

std::string WriteText(const std::string& name, const std::string& text) {
  const std::string path = (fs::path(testing::ScratchDir("config")) / name).string();
  std::ofstream(path) << text;
  return path;
}

}  // namespace

TEST_CASE("checkpoint round trip is bitwise and preserves the forward pass") {
  const Checkpoint c = TrainedLikeCheckpoint(3);
  const std::string path = (fs::path(testing::ScratchDir("ckpt")) / "a.ckpt").string();
  SaveCheckpoint(path, c);
  const Checkpoint back = LoadCheckpoint(path);
  CHECK(back.params == c.params);
  REQUIRE(back.adam.has_value());
  CHECK(back.adam->m == c.adam->m);
  CHECK(back.adam->v == c.adam->v);
  CHECK(back.adam->step == 37);
  CHECK(back.agent_id == c.agent_id);
  CHECK(back.role == c.role);
  CHECK(back.reward_kind == c.reward_kind);
  CHECK(back.kl_coef == 0.45);
  CHECK(back.episodes == 12);
  CHECK(back.steps == 3456);
  CHECK(EncodeCheckpoint(back) == ReadFile(path));
  CHECK(ParamsChecksum(back.params) == ParamsChecksum(c.params));

  const ObservationImage obs = testing::SampleObservation("T1", 4);
  const NetOutput a = Forward(c.params, obs), b = Forward(back.params, obs);
  CHECK(std::memcmp(a.logits.data(), b.logits.data(), sizeof(double) * kNumActions) == 0);
  CHECK(a.value == b.value);
  CHECK_FALSE(fs::exists(path + ".tmp"));
}

TEST_CASE("a flipped byte anywhere is detected") {
  const std::string bytes = EncodeCheckpoint(TrainedLikeCheckpoint(5));
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    std::string bad = bytes;
    const std::size_t pos = static_cast<std::size_t>(UniformUnit(rng) * bad.size());
    bad[pos] ^= static_cast<char>(1 + (trial % 255));
    CHECK_FALSE(KindOf(bad).empty());
  }
  // A flip inside the payload passes every structural check.
  std::string payload_flip = bytes;
  payload_flip[bytes.size() - 32 - 100] ^= 0x10;
  CHECK(KindOf(payload_flip) == "checkpoint_checksum");
}

TEST_CASE("truncation, version, magic and shape errors are distinct") {
  const std::string bytes = EncodeCheckpoint(TrainedLikeCheckpoint(6));
  CHECK(KindOf(bytes.substr(0, bytes.size() / 2)) == "checkpoint_truncated");
  CHECK(KindOf(bytes.substr(0, 10)) == "checkpoint_truncated");

  std::string version = bytes;
  version[8] = 9;
  CHECK(KindOf(version) == "checkpoint_version");

  std::string magic = bytes;
  magic[0] = 'X';
  CHECK(KindOf(magic) == "checkpoint_format");
  CHECK(KindOf("") == "checkpoint_format");

  Checkpoint wrong = TrainedLikeCheckpoint(7);
  wrong.adam.reset();
  ParamArray& first = wrong.params.arrays[0];
  first.shape[0] += 1;
  first.values.resize(first.values.size() / (first.shape[0] - 1) * first.shape[0], 0.0);
  CHECK(KindOf(EncodeCheckpoint(wrong)) == "checkpoint_shape");
}

TEST_CASE("missing optimizer state loads as a fresh optimizer") {
  Checkpoint c = TrainedLikeCheckpoint(8);
  c.adam.reset();
  const Checkpoint back = DecodeCheckpoint(EncodeCheckpoint(c));
  CHECK_FALSE(back.adam.has_value());
  const AgentPolicy p = AgentPolicy::FromCheckpoint(back, PpoHyper{});
  CHECK(p.adam.step == 0);
  CHECK(p.adam.m == NetworkParams::Zeros(NetArch::Lite21()));
  CHECK(p.params == c.params);
}

TEST_CASE("missing checkpoint file is an io error") {
  CHECK_THROWS_AS(LoadCheckpoint("/nonexistent/dir/a.ckpt"), IoError);
}

TEST_CASE("config defaults carry the published hyperparameters") {
  const RunConfig c;
  CHECK(c.ppo.gamma == 0.99);
  CHECK(c.ppo.gae_lambda == 1.0);
  CHECK(c.ppo.clip == 0.3);
  CHECK(c.ppo.kl_target == 0.03);
  CHECK(c.ppo.kl_coef_init == 0.3);
  CHECK(c.ppo.vf_coef == 1.0);
  CHECK(c.ppo.ent_coef == 0.01);
  CHECK(c.ppo.minibatch == 64);
  CHECK(c.ppo.epochs_per_batch == 8);
  CHECK(c.ppo.train_batch == 128);
  CHECK(c.ppo.lr == 6e-4);
  CHECK(c.reward.beta == 0.5);
  CHECK(c.scenario.sim.dt == 0.05);
  CHECK(c.scenario.lane_width == 3.5);
  CHECK(c.raster.mode == ObsMode::kFull84);
  CHECK(c.phases.baseline.episodes == 610);
  CHECK(c.phases.baseline.total_steps == 300672);
  CHECK(c.phases.adversary.episodes == 101);
  CHECK(c.phases.adversary.total_steps == 57728);
  CHECK(c.phases.retraining.episodes == 306);
  CHECK(c.phases.retraining.total_steps == 133888);
  CHECK(c.phases.evaluation.episodes == 50);
  CHECK(c.phases.evaluation.max_steps == 2000);
  CHECK_NOTHROW(c.Validate());
}

TEST_CASE("invalid values name the offending key") {
  try {
    ConfigFromJson(nlohmann::json::parse(R"({"ppo": {"gamma": 1.5}})"));
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("ppo.gamma") != std::string::npos);
  }
  try {
    ConfigFromJson(nlohmann::json::parse(R"({"ppo": {"gama": 0.9}})"));
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("gama") != std::string::npos);
  }
  CHECK_THROWS_AS(ConfigFromJson(nlohmann::json::parse(R"({"raster": {"mode": "huge"}})")), ConfigError);
  CHECK_THROWS_AS(ConfigFromJson(nlohmann::json::parse(R"({"phases": {"baseline": {"episodes": -1}}})")),
                  ConfigError);
  CHECK_THROWS_AS(LoadConfig(WriteText("broken.json", "{ not json")), ConfigError);
}

TEST_CASE("overrides change only their key") {
  const RunConfig c = ConfigFromJson(nlohmann::json::parse(R"({"phases": {"baseline": {"episodes": 5}}})"));
  CHECK(c.phases.baseline.episodes == 5);
  CHECK(c.phases.baseline.total_steps == 300672);
  CHECK(c.ppo.lr == 6e-4);
  CHECK(LoadConfig(WriteText("empty.json", "")).ToJson() == RunConfig{}.ToJson());
  CHECK(LoadConfig(WriteText("braces.json", "{}")).ToJson() == RunConfig{}.ToJson());
}

TEST_CASE("config json round trip is lossless") {
  for (const RunConfig& c : {RunConfig{}, DemoConfig()}) {
    const nlohmann::json j = c.ToJson();
    CHECK(ConfigFromJson(j).ToJson() == j);
  }
  RunConfig odd = DemoConfig();
  odd.scenario = CorridorScenario();
  odd.seed = 123456789012345ull;
  odd.ppo.lr = 1.2345e-5;
  CHECK(ConfigFromJson(odd.ToJson()).ToJson() == odd.ToJson());
}
