#include "advdrive/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "advdrive/errors.hpp"
#include "advdrive/random.hpp"

namespace advdrive {

void PpoHyper::Validate() const {
  auto positive = [](const char* key, double v) {
    if (!(v > 0.0)) throw ConfigError(std::string("ppo.") + key + " must be positive");
  };
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("ppo.gamma must lie in [0, 1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) {
    throw ConfigError("ppo.gae_lambda must lie in [0, 1]");
  }
  if (!(clip > 0.0 && clip <= 1.0)) throw ConfigError("ppo.clip must lie in (0, 1]");
  positive("kl_target", kl_target);
  positive("kl_coef_init", kl_coef_init);
  positive("vf_coef", vf_coef);
  positive("ent_coef", ent_coef);
  positive("minibatch", minibatch);
  positive("epochs_per_batch", epochs_per_batch);
  positive("train_batch", train_batch);
  positive("lr", lr);
}

double Trajectory::TotalReward() const {
  double total = 0.0;
  for (const auto& t : transitions) total += t.reward;
  return total;
}

Advantages ComputeAdvantages(std::span<const double> rewards, std::span<const double> values,
                             bool terminal, double bootstrap_value, double gamma, double lambda) {
  if (rewards.empty()) throw ContractViolation("cannot compute advantages of an empty trajectory");
  if (rewards.size() != values.size()) throw ContractViolation("rewards and values misaligned");
  const std::size_t n = rewards.size();
  Advantages out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_value = terminal ? 0.0 : bootstrap_value;
  double gae = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double delta = rewards[i] + gamma * next_value - values[i];
    gae = delta + gamma * lambda * gae;
    out.advantages[i] = gae;
    out.returns[i] = gae + values[i];
    next_value = values[i];
  }
  return out;
}

Advantages ComputeAdvantages(const Trajectory& traj, double gamma, double lambda) {
  std::vector<double> rewards, values;
  for (const auto& t : traj.transitions) {
    rewards.push_back(t.reward);
    values.push_back(t.value_old);
  }
  const bool terminal = !traj.transitions.empty() && traj.transitions.back().done;
  return ComputeAdvantages(rewards, values, terminal, traj.bootstrap_value, gamma, lambda);
}

RolloutBatch RolloutBatch::FromTrajectories(std::vector<Trajectory> trajectories,
                                            const PpoHyper& hyper) {
  RolloutBatch batch;
  for (auto& traj : trajectories) {
    if (traj.transitions.empty()) continue;
    const Advantages adv = ComputeAdvantages(traj, hyper.gamma, hyper.gae_lambda);
    batch.advantages.insert(batch.advantages.end(), adv.advantages.begin(), adv.advantages.end());
    batch.returns.insert(batch.returns.end(), adv.returns.begin(), adv.returns.end());
    std::move(traj.transitions.begin(), traj.transitions.end(),
              std::back_inserter(batch.transitions));
    ++batch.episodes;
  }
  const std::size_t n = batch.advantages.size();
  if (n == 0) return batch;
  const double mean = std::accumulate(batch.advantages.begin(), batch.advantages.end(), 0.0) / n;
  double var = 0.0;
  for (double a : batch.advantages) var += (a - mean) * (a - mean);
  const double std = std::sqrt(var / n);
  for (double& a : batch.advantages) a = (a - mean) / (std + 1e-8);
  return batch;
}

LossComponents PpoLoss(const NetworkParams& params, const RolloutBatch& batch,
                       std::span<const std::size_t> indices, const PpoHyper& hyper, double kl_coef,
                       NetworkParams* grads) {
  LossComponents out;
  if (indices.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(indices.size());
  ForwardCache cache;
  for (std::size_t idx : indices) {
    const Transition& t = batch.transitions.at(idx);
    const double advantage = batch.advantages[idx];
    const double ret = batch.returns[idx];

    const NetOutput y = Forward(params, t.obs, grads ? &cache : nullptr);
    const PolicyDistribution now = PolicyDistribution::FromLogits(y.logits);
    const PolicyDistribution old = PolicyDistribution::FromLogits(t.logits_old);

    const double ratio = std::exp(now.log_probs[t.action] - t.log_prob_old);
    if (!std::isfinite(ratio)) {
      throw NumericError("non-finite probability ratio at transition " + std::to_string(idx));
    }
    const double clipped_ratio = std::clamp(ratio, 1.0 - hyper.clip, 1.0 + hyper.clip);
    const double unclipped_term = ratio * advantage;
    const double clipped_term = clipped_ratio * advantage;
    const double surrogate = std::min(unclipped_term, clipped_term);

    double kl = 0.0;
    for (int j = 0; j < kNumActions; ++j) {
      const double q = std::exp(old.log_probs[j]);
      if (q > 0.0) kl += q * (old.log_probs[j] - now.log_probs[j]);
    }
    const double value_err = y.value - ret;

    out.surrogate += surrogate * inv_n;
    out.vf += value_err * value_err * inv_n;
    out.entropy += now.entropy * inv_n;
    out.kl += kl * inv_n;

    if (grads) {
      // d(surrogate)/d(ratio) is zero once the clipped branch is selected.
      const double dsurr_dratio = unclipped_term <= clipped_term ? advantage : 0.0;
      std::array<double, kNumActions> dlogits{};
      for (int j = 0; j < kNumActions; ++j) {
        const double p = std::exp(now.log_probs[j]);
        const double q = std::exp(old.log_probs[j]);
        const double dlogp = (j == t.action ? 1.0 : 0.0) - p;
        double g = -dsurr_dratio * ratio * dlogp;
        g += hyper.ent_coef * p * (now.log_probs[j] + now.entropy);
        g += kl_coef * (p - q);
        dlogits[j] = g * inv_n;
      }
      const double dvalue = 2.0 * hyper.vf_coef * value_err * inv_n;
      Backward(params, cache, dlogits, dvalue, *grads);
    }
  }
  out.total = -out.surrogate + hyper.vf_coef * out.vf - hyper.ent_coef * out.entropy +
              kl_coef * out.kl;
  return out;
}

double AdaptKlCoef(double kl_coef, double mean_kl, double kl_target) {
  if (mean_kl > 2.0 * kl_target) return kl_coef * 1.5;
  if (mean_kl < 0.5 * kl_target) return kl_coef * 0.5;
  return kl_coef;
}

double MaxRatioDeviation(const NetworkParams& params, const RolloutBatch& batch) {
  double worst = 0.0;
  for (const auto& t : batch.transitions) {
    const NetOutput y = Forward(params, t.obs);
    const PolicyDistribution d = PolicyDistribution::FromLogits(y.logits);
    worst = std::max(worst, std::abs(std::exp(d.log_probs[t.action] - t.log_prob_old) - 1.0));
  }
  return worst;
}

UpdateStats UpdatePolicy(NetworkParams& params, AdamState& adam, const RolloutBatch& batch,
                         const PpoHyper& hyper, double& kl_coef, std::mt19937_64& rng) {
  if (batch.size() == 0) throw ContractViolation("empty rollout batch");
  const double deviation = MaxRatioDeviation(params, batch);
  if (!(deviation <= 1e-9)) {
    throw ContractViolation("batch was not collected under the current parameters (ratio off by " +
                            std::to_string(deviation) + ")");
  }

  UpdateStats stats;
  stats.kl_coef_before = kl_coef;
  stats.timesteps = batch.size();
  std::vector<std::size_t> order(batch.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t mb = static_cast<std::size_t>(hyper.minibatch);

  for (int epoch = 0; epoch < hyper.epochs_per_batch; ++epoch) {
    Shuffle(order, rng);
    for (std::size_t start = 0; start < order.size(); start += mb) {
      const std::size_t end = std::min(order.size(), start + mb);
      std::span<const std::size_t> indices(order.data() + start, end - start);
      NetworkParams grads = params.ZerosLike();
      const LossComponents loss = PpoLoss(params, batch, indices, hyper, kl_coef, &grads);
      if (!std::isfinite(loss.total)) throw NumericError("non-finite PPO loss");
      AdamUpdate(params, grads, adam, hyper.lr);
      ++stats.minibatches;
    }
  }

  std::vector<std::size_t> all(batch.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const LossComponents final_loss = PpoLoss(params, batch, all, hyper, kl_coef);
  if (!std::isfinite(final_loss.total) || !params.AllFinite()) {
    throw NumericError("non-finite parameters after PPO update");
  }
  stats.mean_kl = final_loss.kl;
  stats.entropy = final_loss.entropy;
  stats.total_loss = final_loss.total;
  stats.surrogate = final_loss.surrogate;
  stats.vf_loss = final_loss.vf;
  kl_coef = AdaptKlCoef(kl_coef, final_loss.kl, hyper.kl_target);
  stats.kl_coef_after = kl_coef;
  return stats;
}

}  // namespace advdrive
