#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"

#include "advdrive/errors.hpp"
#include "advdrive/ppo.hpp"
#include "gradcheck.hpp"
#include "ppo_oracles.hpp"

using namespace advdrive;

namespace {

// Direct definition: A_t = sum_l (gamma lambda)^l delta_{t+l}.
std::vector<double> GaeByDefinition(const std::vector<double>& r, const std::vector<double>& v,
                                    bool terminal, double bootstrap, double gamma, double lambda) {
  const std::size_t n = r.size();
  std::vector<double> adv(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double weight = 1.0;
    for (std::size_t k = t; k < n; ++k) {
      const double next = k + 1 < n ? v[k + 1] : (terminal ? 0.0 : bootstrap);
      adv[t] += weight * (r[k] + gamma * next - v[k]);
      weight *= gamma * lambda;
    }
  }
  return adv;
}

double MeanEntropy(const NetworkParams& p, const RolloutBatch& b) {
  double h = 0;
  for (const auto& t : b.transitions) h += PolicyDistribution::FromLogits(Forward(p, t.obs).logits).entropy;
  return h / static_cast<double>(b.size());
}

}  // namespace

TEST_CASE("hyperparameter defaults") {
  const PpoHyper h;
  CHECK(h.gamma == 0.99);
  CHECK(h.gae_lambda == 1.0);
  CHECK(h.clip == 0.3);
  CHECK(h.kl_target == 0.03);
  CHECK(h.kl_coef_init == 0.3);
  CHECK(h.vf_coef == 1.0);
  CHECK(h.ent_coef == 0.01);
  CHECK(h.minibatch == 64);
  CHECK(h.epochs_per_batch == 8);
  CHECK(h.train_batch == 128);
  CHECK(h.lr == 0.0006);
}

TEST_CASE("discounted returns for three unit rewards") {
  const std::vector<double> r = {1, 1, 1}, v = {0, 0, 0};
  const Advantages a = ComputeAdvantages(r, v, true, 0.0, 0.99, 1.0);
  CHECK(std::abs(a.returns[0] - 2.9701) < 1e-12);
  CHECK(std::abs(a.returns[1] - 1.99) < 1e-12);
  CHECK(std::abs(a.returns[2] - 1.0) < 1e-12);
}

TEST_CASE("zero rewards and values give zero advantages; gamma 0 gives one-step advantages") {
  const std::vector<double> zeros(5, 0.0);
  for (double x : ComputeAdvantages(zeros, zeros, true, 0.0, 0.99, 1.0).advantages) CHECK(x == 0.0);
  const std::vector<double> r = {0.5, -1.0, 2.0}, v = {0.1, 0.7, -0.3};
  const Advantages a = ComputeAdvantages(r, v, false, 4.0, 0.0, 0.95);
  for (int i = 0; i < 3; ++i) CHECK(a.advantages[i] == r[i] - v[i]);
  CHECK_THROWS_AS(ComputeAdvantages(std::vector<double>{}, std::vector<double>{}, true, 0, 0.99, 1),
                  ContractViolation);
}

TEST_CASE("GAE matches its definition for random trajectories") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + UniformIndex(rng, 40);
    const auto r = testing::RandomVector(n, rng, 3.0);
    const auto v = testing::RandomVector(n, rng, 3.0);
    const bool terminal = UniformIndex(rng, 2);
    const double boot = UniformUnit(rng) * 5.0;
    const double gamma = UniformUnit(rng), lambda = UniformUnit(rng);
    const Advantages a = ComputeAdvantages(r, v, terminal, boot, gamma, lambda);
    const auto oracle = GaeByDefinition(r, v, terminal, boot, gamma, lambda);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(std::abs(a.advantages[i] - oracle[i]) < 1e-9);
      CHECK(std::abs(a.returns[i] - (oracle[i] + v[i])) < 1e-9);
    }
  }
}

TEST_CASE("batch advantages are normalized") {
  std::mt19937_64 rng(5);
  std::vector<Trajectory> trajs;
  for (int e = 0; e < 4; ++e) {
    Trajectory t;
    const std::size_t n = 5 + UniformIndex(rng, 30);
    for (std::size_t i = 0; i < n; ++i) {
      Transition tr;
      tr.reward = UniformUnit(rng) * 10 - 3;
      tr.value_old = UniformUnit(rng);
      tr.done = i + 1 == n;
      t.transitions.push_back(tr);
    }
    trajs.push_back(t);
  }
  const RolloutBatch b = RolloutBatch::FromTrajectories(trajs, PpoHyper{});
  CHECK(b.episodes == 4);
  const double n = static_cast<double>(b.size());
  const double mean = std::accumulate(b.advantages.begin(), b.advantages.end(), 0.0) / n;
  double var = 0;
  for (double a : b.advantages) var += (a - mean) * (a - mean);
  CHECK(std::abs(mean) < 1e-9);
  CHECK(std::abs(std::sqrt(var / n) - 1.0) < 1e-6);
}

TEST_CASE("unchanged params: ratio one, zero KL, surrogate equals mean advantage") {
  const NetworkParams p = testing::RandomLiteParams(2);
  const RolloutBatch b = RolloutBatch::FromTrajectories({testing::CollectedTrajectory(p, 6, 2)}, PpoHyper{});
  CHECK(MaxRatioDeviation(p, b) <= 1e-9);
  const std::vector<std::size_t> idx = {0, 2, 3};
  const LossComponents l = PpoLoss(p, b, idx, PpoHyper{}, 0.3);
  const double mean_adv = (b.advantages[0] + b.advantages[2] + b.advantages[3]) / 3.0;
  CHECK(std::abs(l.surrogate - mean_adv) < 1e-9);
  CHECK(std::abs(l.kl) < 1e-12);
}

TEST_CASE("clip boundaries at epsilon 0.3 against a scalar oracle") {
  const NetworkParams zero = NetworkParams::Zeros(NetArch::Lite21());
  const PpoHyper h;
  const std::array<double, kNumActions> uniform{};
  const std::array<double, kNumActions> skewed{0.4, -0.2, 1.1, 0.0, 0.3, -0.8, 0.5, 0.2, -0.1};
  const std::vector<std::size_t> idx = {0};
  struct Case {
    double ratio, adv, ret;
    double expected_surrogate;
  };
  const Case cases[] = {
      {2.0, 1.0, 0.0, 1.3},     // clipped above
      {0.5, -1.0, 0.0, -0.7},   // clipped below: min(-0.5, -0.7)
      {0.5, 1.0, 0.0, 0.5},     // unclipped: min(0.5, 0.7)
      {2.0, -1.0, 0.0, -2.0},   // unclipped: min(-2.0, -1.3)
      {1.3, 1.0, 0.0, 1.3},     // on the boundary
      {1.1, 2.0, 0.7, 2.2},     // inside the interval
  };
  for (const auto& c : cases) {
    for (const auto& logits_old : {uniform, skewed}) {
      const RolloutBatch b = testing::RatioBatch(c.ratio, c.adv, c.ret, logits_old);
      const LossComponents l = PpoLoss(zero, b, idx, h, 0.3);
      CAPTURE(c.ratio);
      CAPTURE(c.adv);
      CHECK(std::abs(l.surrogate - c.expected_surrogate) < 1e-9);
      CHECK(std::abs(l.total - testing::ZeroNetLoss(c.ratio, c.adv, c.ret, logits_old, h, 0.3)) < 1e-9);
    }
  }
}

TEST_CASE("non-finite ratio names the transition") {
  const NetworkParams zero = NetworkParams::Zeros(NetArch::Lite21());
  RolloutBatch b = testing::RatioBatch(1.0, 1.0, 0.0, {});
  b.transitions[0].log_prob_old = -1e6;
  const std::vector<std::size_t> idx = {0};
  try {
    PpoLoss(zero, b, idx, PpoHyper{}, 0.3);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("transition 0") != std::string::npos);
  }
}

TEST_CASE("adaptive KL rule") {
  CHECK(AdaptKlCoef(0.3, 0.1, 0.03) == 0.3 * 1.5);
  CHECK(AdaptKlCoef(0.3, 0.01, 0.03) == 0.3 * 0.5);
  CHECK(AdaptKlCoef(0.3, 0.03, 0.03) == 0.3);
  CHECK(AdaptKlCoef(0.3, 0.06, 0.03) == 0.3);
  CHECK(AdaptKlCoef(0.3, 0.015, 0.03) == 0.3);
}

TEST_CASE("ppo loss gradient matches central finite differences") {
  CHECK(testing::CheckPpoLoss(21) < testing::kGradTolerance);
}

TEST_CASE("stale batches are rejected") {
  const NetworkParams p = testing::RandomLiteParams(6);
  const RolloutBatch b = RolloutBatch::FromTrajectories({testing::CollectedTrajectory(p, 4, 6)}, PpoHyper{});
  NetworkParams moved = p;
  moved.Get("policy.bias").values[0] += 0.1;
  AdamState adam = AdamState::Zeros(moved.arch);
  double kl = 0.3;
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(UpdatePolicy(moved, adam, b, PpoHyper{}, kl, rng), ContractViolation);
}

TEST_CASE("update adapts the KL coefficient from the measured KL") {
  const NetworkParams p0 = testing::RandomLiteParams(7);
  const RolloutBatch b = RolloutBatch::FromTrajectories({testing::CollectedTrajectory(p0, 12, 7)}, PpoHyper{});
  NetworkParams p = p0;
  AdamState adam = AdamState::Zeros(p.arch);
  double kl = 0.3;
  std::mt19937_64 rng(3);
  PpoHyper h;
  h.minibatch = 4;
  const UpdateStats s = UpdatePolicy(p, adam, b, h, kl, rng);
  CHECK(s.kl_coef_before == 0.3);
  CHECK(s.kl_coef_after == AdaptKlCoef(0.3, s.mean_kl, h.kl_target));
  CHECK(kl == s.kl_coef_after);
  CHECK(s.minibatches == 3u * 8u);
  CHECK(adam.step == 24);
  CHECK(p.AllFinite());
  CHECK_FALSE(p == p0);
  // mean_kl is the post-update KL over the whole batch.
  std::vector<std::size_t> all(b.size());
  std::iota(all.begin(), all.end(), 0);
  CHECK(std::abs(PpoLoss(p, b, all, h, 0.0).kl - s.mean_kl) < 1e-12);
}

TEST_CASE("entropy-only pressure does not decrease entropy") {
  const NetworkParams p0 = testing::RandomLiteParams(8);
  RolloutBatch b = RolloutBatch::FromTrajectories({testing::CollectedTrajectory(p0, 8, 8)}, PpoHyper{});
  for (std::size_t i = 0; i < b.size(); ++i) {
    b.advantages[i] = 0.0;
    b.returns[i] = b.transitions[i].value_old;
  }
  NetworkParams p = p0;
  AdamState adam = AdamState::Zeros(p.arch);
  double kl = 0.3;
  std::mt19937_64 rng(2);
  PpoHyper h;
  h.minibatch = 8;
  h.epochs_per_batch = 4;
  const double before = MeanEntropy(p, b);
  UpdatePolicy(p, adam, b, h, kl, rng);
  CHECK(MeanEntropy(p, b) >= before);
}

TEST_CASE("hyperparameter validation names the key") {
  PpoHyper h;
  h.gamma = 1.5;
  CHECK_THROWS_WITH_AS(h.Validate(), doctest::Contains("ppo.gamma"), ConfigError);
  h = PpoHyper{};
  h.clip = 0.0;
  CHECK_THROWS_WITH_AS(h.Validate(), doctest::Contains("ppo.clip"), ConfigError);
  h = PpoHyper{};
  h.lr = -1;
  CHECK_THROWS_WITH_AS(h.Validate(), doctest::Contains("ppo.lr"), ConfigError);
}
