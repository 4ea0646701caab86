#pragma once

// On-policy PPO: complete-episode batches, GAE advantages, clipped surrogate
// with an adaptive KL penalty, entropy bonus and value loss.

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "advdrive/nn.hpp"
#include "advdrive/raster.hpp"

namespace advdrive {

struct PpoHyper {
  double gamma = 0.99;
  double gae_lambda = 1.0;
  double clip = 0.3;
  double kl_target = 0.03;
  double kl_coef_init = 0.3;
  double vf_coef = 1.0;
  double ent_coef = 0.01;
  int minibatch = 64;
  int epochs_per_batch = 8;
  int train_batch = 128;
  double lr = 0.0006;

  // Throws ConfigError naming the offending field.
  void Validate() const;
};

struct Transition {
  ObservationImage obs;
  int action = 0;
  double log_prob_old = 0.0;
  std::array<double, kNumActions> logits_old{};
  double value_old = 0.0;
  double reward = 0.0;
  bool done = false;
};

struct Trajectory {
  std::string agent_id;
  std::int64_t episode = 0;
  std::vector<Transition> transitions;
  // V(s_T) when the episode was cut at max_steps; 0 after a terminal step.
  double bootstrap_value = 0.0;

  std::size_t size() const { return transitions.size(); }
  double TotalReward() const;
};

struct Advantages {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// GAE(gamma, lambda); returns = advantages + values. Throws ContractViolation
// on an empty trajectory.
Advantages ComputeAdvantages(std::span<const double> rewards, std::span<const double> values,
                             bool terminal, double bootstrap_value, double gamma, double lambda);
Advantages ComputeAdvantages(const Trajectory& traj, double gamma, double lambda);

struct RolloutBatch {
  std::vector<Transition> transitions;
  std::vector<double> advantages;  // normalized
  std::vector<double> returns;
  std::size_t episodes = 0;

  std::size_t size() const { return transitions.size(); }
  // Concatenates whole episodes; advantages are normalized to zero mean and
  // unit std (epsilon 1e-8) across the batch.
  static RolloutBatch FromTrajectories(std::vector<Trajectory> trajectories, const PpoHyper& hyper);
};

struct LossComponents {
  double total = 0.0;
  double surrogate = 0.0;  // mean of min(r A, clip(r) A)
  double vf = 0.0;         // mean squared value error
  double entropy = 0.0;    // mean policy entropy
  double kl = 0.0;         // mean KL(old || new)
};

// loss = -surrogate + vf_coef * vf - ent_coef * entropy + kl_coef * kl over
// the selected transitions. When `grads` is given, d(loss)/d(params) is added
// to it. Throws NumericError naming the transition if a ratio is non-finite.
LossComponents PpoLoss(const NetworkParams& params, const RolloutBatch& batch,
                       std::span<const std::size_t> indices, const PpoHyper& hyper, double kl_coef,
                       NetworkParams* grads = nullptr);

// Adaptive KL rule: x1.5 above 2*target, x0.5 below target/2.
double AdaptKlCoef(double kl_coef, double mean_kl, double kl_target);

struct UpdateStats {
  double mean_kl = 0.0;
  double entropy = 0.0;
  double total_loss = 0.0;
  double surrogate = 0.0;
  double vf_loss = 0.0;
  double kl_coef_before = 0.0;
  double kl_coef_after = 0.0;
  std::size_t minibatches = 0;
  std::size_t timesteps = 0;
};

// Runs epochs_per_batch passes of shuffled minibatches with one Adam step
// each, then adapts kl_coef from the post-update mean KL. Throws
// ContractViolation if the batch was not collected under `params`.
UpdateStats UpdatePolicy(NetworkParams& params, AdamState& adam, const RolloutBatch& batch,
                         const PpoHyper& hyper, double& kl_coef, std::mt19937_64& rng);

// Largest |exp(logp_new - logp_old) - 1| over the batch.
double MaxRatioDeviation(const NetworkParams& params, const RolloutBatch& batch);

}  // namespace advdrive
