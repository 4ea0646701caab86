#include <chrono>
#include <cmath>
#include <random>

#include "doctest.h"

#include "advdrive/errors.hpp"
#include "advdrive/nn.hpp"
#include "gradcheck.hpp"

using namespace advdrive;
using testing::kGradTolerance;

namespace {

NetworkParams Scalar(double w) {
  NetworkParams p;
  p.arch.name = "scalar";
  p.arrays.push_back({"w", {1}, {w}});
  return p;
}

AdamState ScalarAdam() {
  AdamState s;
  s.m = Scalar(0.0);
  s.v = Scalar(0.0);
  return s;
}

}  // namespace

TEST_CASE("layer shapes follow the two topologies") {
  const NetworkParams full = NetworkParams::Zeros(NetArch::Mnih84());
  CHECK(full.Get("conv1.weight").shape == std::vector<int>{32, 8, 8, 3});
  CHECK(full.Get("conv2.weight").shape == std::vector<int>{64, 4, 4, 32});
  CHECK(full.Get("conv3.weight").shape == std::vector<int>{64, 3, 3, 64});
  CHECK(NetArch::Mnih84().ConvSizes() == std::vector<int>{20, 9, 7});
  CHECK(full.Get("dense.weight").shape == std::vector<int>{512, 7 * 7 * 64});
  CHECK(full.Get("policy.weight").shape == std::vector<int>{9, 512});
  CHECK(full.Get("value.weight").shape == std::vector<int>{1, 512});

  const NetArch lite = NetArch::Lite21();
  CHECK(lite.InputSize() == 21);
  CHECK(lite.ConvSizes() == std::vector<int>{10, 4, 2});
  CHECK(lite.FlatSize() == 64);
}

TEST_CASE("zero network outputs zero") {
  for (const NetArch& arch : {NetArch::Mnih84(), NetArch::Lite21()}) {
    const NetworkParams p = NetworkParams::Zeros(arch);
    const NetOutput y = Forward(p, testing::SampleObservation("T2", 1));
    for (double l : y.logits) CHECK(l == 0.0);
    CHECK(y.value == 0.0);
  }
}

TEST_CASE("forward is deterministic and rejects wrong input sizes") {
  const NetworkParams p = NetworkParams::Initialize(NetArch::Mnih84(), 5);
  const ObservationImage obs = testing::SampleObservation("T1", 2);
  const NetOutput a = Forward(p, obs), b = Forward(p, obs);
  CHECK(a.logits == b.logits);
  CHECK(a.value == b.value);
  CHECK(NetworkParams::Initialize(NetArch::Mnih84(), 5) == p);
  CHECK_FALSE(NetworkParams::Initialize(NetArch::Mnih84(), 6) == p);
  const std::vector<double> short_input(100, 0.0);
  CHECK_THROWS_AS(Forward(p, short_input), ContractViolation);
}

TEST_CASE("initialization is orthogonal with the documented gains") {
  const NetworkParams p = NetworkParams::Initialize(NetArch::Lite21(), 3);
  // Rows of the dense layer (64 x 64) are orthogonal with norm sqrt(2).
  const auto& w = p.Get("dense.weight").values;
  for (int i = 0; i < 64; ++i) {
    for (int j = i; j < 64; ++j) {
      double dot = 0;
      for (int k = 0; k < 64; ++k) dot += w[i * 64 + k] * w[j * 64 + k];
      CHECK(std::abs(dot - (i == j ? 2.0 : 0.0)) < 1e-9);
    }
  }
  double norm = 0;
  for (int k = 0; k < 64; ++k) norm += std::pow(p.Get("policy.weight").values[k], 2);
  CHECK(std::abs(std::sqrt(norm) - 0.01) < 1e-9);
  for (const auto& a : p.arrays) {
    if (a.name.ends_with(".bias")) {
      for (double v : a.values) CHECK(v == 0.0);
    }
  }
}

TEST_CASE("a single pixel change propagates to the logits") {
  const NetworkParams p = NetworkParams::Initialize(NetArch::Mnih84(), 8);
  const ObservationImage obs = testing::SampleObservation("T1", 4);
  std::vector<double> input = obs.ToDoubles();
  const NetOutput a = Forward(p, input);
  input[(40 * 84 + 40) * 3 + 1] += 0.5;
  const NetOutput b = Forward(p, input);
  double diff = 0;
  for (int i = 0; i < kNumActions; ++i) diff += std::abs(a.logits[i] - b.logits[i]);
  CHECK(diff > 0.0);
}

TEST_CASE("each layer matches central finite differences") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const testing::LayerErrors e = testing::CheckLayers(seed);
    CHECK(e.conv < kGradTolerance);
    CHECK(e.dense < kGradTolerance);
    CHECK(e.relu < kGradTolerance);
    CHECK(e.pool < kGradTolerance);
  }
}

TEST_CASE("full lite21 network gradient matches central finite differences") {
  CHECK(testing::CheckNetwork(11) < kGradTolerance);
}

TEST_CASE("backward is linear in the upstream gradient and heads are disjoint") {
  const NetworkParams p = testing::RandomLiteParams(4);
  ForwardCache cache;
  Forward(p, testing::SampleObservation("T2", 3), &cache);
  const std::array<double, kNumActions> zero{};
  const NetworkParams none = Backward(p, cache, zero, 0.0);
  for (const auto& a : none.arrays) {
    for (double v : a.values) CHECK(v == 0.0);
  }
  std::array<double, kNumActions> up{};
  up[2] = 1.0;
  up[7] = -0.5;
  const NetworkParams policy_only = Backward(p, cache, up, 0.0);
  const NetworkParams value_only = Backward(p, cache, zero, 1.3);
  const NetworkParams both = Backward(p, cache, up, 1.3);
  CHECK(both.Get("value.weight").values == value_only.Get("value.weight").values);
  for (double v : policy_only.Get("value.weight").values) CHECK(v == 0.0);
  for (double v : value_only.Get("policy.weight").values) CHECK(v == 0.0);
}

TEST_CASE("adam: zero gradient leaves params, first step is -lr") {
  NetworkParams p = Scalar(0.25);
  AdamState s = ScalarAdam();
  AdamUpdate(p, Scalar(0.0), s, 0.0006);
  CHECK(p.arrays[0].values[0] == 0.25);
  CHECK(s.step == 1);

  NetworkParams w = Scalar(0.0);
  AdamState t = ScalarAdam();
  AdamUpdate(w, Scalar(1.0), t, 0.0006);
  // m_hat = 1, v_hat = 1: w = -lr / (1 + 1e-8).
  CHECK(std::abs(w.arrays[0].values[0] - (-0.0006 / (1.0 + 1e-8))) < 1e-15);
}

TEST_CASE("adam descends a quadratic over successive steps") {
  NetworkParams w = Scalar(3.0);
  AdamState s = ScalarAdam();
  auto loss = [&] { return std::pow(w.arrays[0].values[0] - 1.0, 2); };
  double prev = loss();
  for (int i = 0; i < 2; ++i) {
    AdamUpdate(w, Scalar(2.0 * (w.arrays[0].values[0] - 1.0)), s, 0.1);
    CHECK(loss() < prev);
    prev = loss();
  }
}

TEST_CASE("adam rejects non-finite gradients without mutating state") {
  NetworkParams w = Scalar(1.0);
  AdamState s = ScalarAdam();
  CHECK_THROWS_AS(AdamUpdate(w, Scalar(std::nan("")), s, 0.1), NumericError);
  CHECK(w.arrays[0].values[0] == 1.0);
  CHECK(s.step == 0);
  CHECK_THROWS_AS(AdamUpdate(w, Scalar(1.0), s, 0.0), ContractViolation);
}

TEST_CASE("uniform logits sample uniformly") {
  std::mt19937_64 rng(42);
  const std::array<double, kNumActions> logits{};
  std::array<int, kNumActions> counts{};
  const int n = 90000;
  for (int i = 0; i < n; ++i) counts[SampleAction(logits, rng).index]++;
  for (int c : counts) CHECK(std::abs(static_cast<double>(c) / n - 1.0 / 9.0) < 0.01);
}

TEST_CASE("a dominant logit is always chosen") {
  std::mt19937_64 rng(1);
  std::array<double, kNumActions> logits{};
  logits[6] = 1000.0;
  for (int i = 0; i < 1000; ++i) CHECK(SampleAction(logits, rng).index == 6);
  CHECK(GreedyAction(logits).index == 6);
}

TEST_CASE("log-probs normalize and entropy is bounded") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    std::array<double, kNumActions> logits{};
    for (double& l : logits) l = (UniformUnit(rng) * 2 - 1) * 20;
    const PolicyDistribution d = PolicyDistribution::FromLogits(logits);
    double sum = 0;
    for (double lp : d.log_probs) sum += std::exp(lp);
    CHECK(std::abs(sum - 1.0) < 1e-9);
    CHECK(d.entropy >= 0.0);
    CHECK(d.entropy <= std::log(9.0) + 1e-12);
  }
}

TEST_CASE("action grid mapping") {
  const double steer[] = {-0.5, 0.0, 0.5};
  for (int i = 0; i < kNumActions; ++i) {
    const ActionCommand a = ActionFromIndex(i);
    CHECK(a.steer == steer[i / 3]);
    CHECK(a.throttle == (i % 3 == 0 ? 0.6 : 0.0));
    CHECK(a.brake == (i % 3 == 2 ? 0.6 : 0.0));
  }
  const ActionCommand center = ActionFromIndex(4);
  CHECK(center.steer == 0.0);
  CHECK(center.throttle == 0.0);
  CHECK(center.brake == 0.0);
  CHECK_THROWS_AS(ActionFromIndex(9), ContractViolation);
}

TEST_CASE("sampling is deterministic given the generator seed") {
  std::array<double, kNumActions> logits{0.1, -0.3, 0.8, 0.0, 0.2, -1.0, 0.5, 0.4, -0.2};
  std::mt19937_64 a(99), b(99);
  for (int i = 0; i < 100; ++i) CHECK(SampleAction(logits, a).index == SampleAction(logits, b).index);
}
