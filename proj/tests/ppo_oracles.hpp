#pragma once

// Scalar oracles and fixtures for the PPO loss.

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "advdrive/ppo.hpp"
#include "gradcheck.hpp"

namespace advdrive::testing {

// A one-transition batch under the zero network (uniform policy, V = 0)
// whose stored log-prob makes the probability ratio equal `ratio`.
inline RolloutBatch RatioBatch(double ratio, double advantage, double ret,
                               const std::array<double, kNumActions>& logits_old) {
  RolloutBatch b;
  Transition t;
  t.obs = SampleObservation("T1", 0);
  t.action = 2;
  t.log_prob_old = -std::log(9.0) - std::log(ratio);
  t.logits_old = logits_old;
  b.transitions.push_back(t);
  b.advantages = {advantage};
  b.returns = {ret};
  b.episodes = 1;
  return b;
}

// Scalar oracle of the full loss for the zero network.
inline double ZeroNetLoss(double ratio, double advantage, double ret,
                          const std::array<double, kNumActions>& logits_old, const PpoHyper& h,
                          double kl_coef) {
  const double clipped = std::min(std::max(ratio, 1.0 - h.clip), 1.0 + h.clip);
  const double surrogate = std::min(ratio * advantage, clipped * advantage);
  double z = 0;
  for (double l : logits_old) z += std::exp(l);
  double kl = 0;
  for (double l : logits_old) {
    const double q = std::exp(l) / z;
    kl += q * (std::log(q) - std::log(1.0 / 9.0));
  }
  return -surrogate + h.vf_coef * ret * ret - h.ent_coef * std::log(9.0) + kl_coef * kl;
}

inline Trajectory CollectedTrajectory(const NetworkParams& params, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Trajectory traj;
  const char* agents[] = {"T1", "T2", "adversary"};
  for (int i = 0; i < n; ++i) {
    Transition t;
    t.obs = SampleObservation(agents[i % 3], seed * 100 + i);
    const NetOutput y = Forward(params, t.obs);
    const ActionSample s = SampleAction(y.logits, rng);
    t.action = s.index;
    t.log_prob_old = s.log_prob;
    t.logits_old = y.logits;
    t.value_old = y.value;
    t.reward = UniformUnit(rng) * 2.0 - 0.5;
    t.done = i == n - 1;
    traj.transitions.push_back(t);
  }
  return traj;
}

}  // namespace advdrive::testing
