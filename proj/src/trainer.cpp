#include "pirl_lab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "pirl_lab/errors.hpp"

namespace pirl_lab::trainer {

bool uses_pipo(Variant v) { return v == Variant::grpo_pipo || v == Variant::dapo_pipo; }

bool uses_group_filtering(Variant v) {
  return v == Variant::dapo || v == Variant::dapo_pipo;
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::grpo: return "grpo";
    case Variant::grpo_pipo: return "grpo_pipo";
    case Variant::dapo: return "dapo";
    case Variant::dapo_pipo: return "dapo_pipo";
  }
  return "unknown";
}

Variant variant_from_string(const std::string& name) {
  if (name == "grpo") return Variant::grpo;
  if (name == "grpo_pipo") return Variant::grpo_pipo;
  if (name == "dapo") return Variant::dapo;
  if (name == "dapo_pipo") return Variant::dapo_pipo;
  throw ConfigError("unknown variant '" + name +
                    "' (expected grpo, grpo_pipo, dapo or dapo_pipo)");
}

std::vector<std::string> TrainerConfig::violations() const {
  std::vector<std::string> v;
  if (batch_size < 1) v.push_back("B: batch size must be >= 1");
  if (group_size < 2) v.push_back("G: group size must be >= 2");
  if (window < 2) v.push_back("K: window must be >= 2 (sigma_his is undefined for K=1)");
  if (!(lambda >= 0.0 && lambda <= 1.0))
    v.push_back("lambda: must lie in [0,1], got " + std::to_string(lambda));
  // alpha_pi = 0 is the documented reduction to the base variant, so only
  // negative rates are rejected.
  if (!(alpha_std >= 0.0) || !std::isfinite(alpha_std))
    v.push_back("alpha_std: must be a finite non-negative learning rate");
  if (!(alpha_pi >= 0.0) || !std::isfinite(alpha_pi))
    v.push_back("alpha_pi: must be a finite non-negative learning rate");
  if (!(clip_low > 0.0 && clip_low <= 1.0))
    v.push_back("clip_low: must lie in (0,1]");
  if (!(clip_high > 0.0)) v.push_back("clip_high: must be positive");
  if (max_iters < 1) v.push_back("max_iters: must be >= 1");
  if (!(epsilon_sigma > 0.0)) v.push_back("epsilon_sigma: must be positive");
  return v;
}

void TrainerConfig::validate() const {
  auto v = violations();
  if (!v.empty()) throw ConfigError(std::move(v));
}

namespace {

// Gradient weight of min(ratio*r, clip(ratio)*r): the unclipped branch when
// it attains the min (ties included), zero otherwise.
double surrogate_weight(double ratio, double reward, double clip_low, double clip_high) {
  const double clipped = std::clamp(ratio, 1.0 - clip_low, 1.0 + clip_high);
  return ratio * reward <= clipped * reward ? ratio * reward : 0.0;
}

double surrogate_value(double ratio, double reward, double clip_low, double clip_high) {
  const double clipped = std::clamp(ratio, 1.0 - clip_low, 1.0 + clip_high);
  return std::min(ratio * reward, clipped * reward);
}

// Accumulates coeff * (one_hot(answer) - probs) into the gradient row.
void add_score(Gradient& grad, const env::SoftmaxPolicy& policy, int row, int answer,
               double coeff) {
  grad[row] -= coeff * policy.probs(row);
  grad[row][answer] += coeff;
}

env::SoftmaxPolicy apply_step(const env::SoftmaxPolicy& policy, const Gradient& grad,
                              double alpha) {
  std::vector<Vec> logits = policy.logits();
  for (std::size_t r = 0; r < logits.size(); ++r) logits[r] += alpha * grad[r];
  return env::SoftmaxPolicy(std::move(logits));
}

}  // namespace

Gradient explore_gradient(const env::SoftmaxPolicy& policy, const env::QuerySpace& space,
                          const group::BatchRollout& batch, double clip_low,
                          double clip_high) {
  if (batch.groups.empty())
    throw std::invalid_argument("explore_gradient: empty batch");
  Gradient grad = zeros_like(policy.logits());
  const double batch_count = static_cast<double>(batch.groups.size());
  for (const auto& g : batch.groups) {
    const auto adv = group::grpo_advantages(g.rewards);
    if (adv.degenerate) continue;
    const int row = space.index_of(g.query_id);
    const double scale = 1.0 / (batch_count * g.size());
    for (int i = 0; i < g.size(); ++i) {
      const double ratio =
          std::exp(policy.log_prob(row, g.answers[i]) - g.behavior_log_probs[i]);
      const double w = surrogate_weight(ratio, adv.values[i], clip_low, clip_high);
      if (w != 0.0) add_score(grad, policy, row, g.answers[i], scale * w);
    }
  }
  return grad;
}

env::SoftmaxPolicy explore_step(const env::SoftmaxPolicy& policy,
                                const env::QuerySpace& space,
                                const group::BatchRollout& batch, double alpha_std,
                                double clip_low, double clip_high) {
  return apply_step(policy, explore_gradient(policy, space, batch, clip_low, clip_high),
                    alpha_std);
}

Gradient verify_gradient(const env::SoftmaxPolicy& policy_now, const env::QuerySpace& space,
                         const group::BatchRollout& prev_batch,
                         const pirl::PiRewardSet& rewards, double clip_low,
                         double clip_high, VerifySampleStats* stats) {
  if (rewards.groups.size() != prev_batch.groups.size())
    throw std::invalid_argument("verify_gradient: reward set does not match the batch");
  Gradient grad = zeros_like(policy_now.logits());
  const double batch_count = static_cast<double>(prev_batch.groups.size());
  for (std::size_t gi = 0; gi < prev_batch.groups.size(); ++gi) {
    const auto& g = prev_batch.groups[gi];
    const auto& r = rewards.groups[gi];
    if (r.empty()) continue;  // degenerate group: no attribution signal
    if (static_cast<int>(r.size()) != g.size())
      throw std::invalid_argument("verify_gradient: reward group has the wrong length");
    const int row = space.index_of(g.query_id);
    const double scale = 1.0 / (batch_count * g.size());
    for (int i = 0; i < g.size(); ++i) {
      const double nu =
          std::exp(policy_now.log_prob(row, g.answers[i]) - g.behavior_log_probs[i]);
      if (stats) {
        stats->max_importance_ratio = std::max(stats->max_importance_ratio, nu);
        if (r[i] != 0.0) {
          const double contribution = surrogate_value(nu, r[i], clip_low, clip_high);
          stats->max_contribution_ratio =
              std::max(stats->max_contribution_ratio, std::abs(contribution) / std::abs(r[i]));
        }
      }
      const double w = surrogate_weight(nu, r[i], clip_low, clip_high);
      if (w != 0.0) add_score(grad, policy_now, row, g.answers[i], scale * w);
    }
  }
  return grad;
}

double effective_scaling_factor(double alpha_std, double alpha_pi, int group_size,
                                double phi_xi, double abs_advantage_sum) {
  if (!(abs_advantage_sum > 0.0))
    throw std::domain_error("effective_scaling_factor: requires Z > 0");
  return alpha_std + alpha_pi * group_size * phi_xi / abs_advantage_sum;
}

VerifyOutcome verify_step(const env::SoftmaxPolicy& policy, const env::QuerySpace& space,
                          const pirl::StoredBatch& prev, const pirl::ImprovementSignal& signal,
                          const TrainerConfig& config) {
  if (signal.skipped()) {
    return {policy, zeros_like(policy.logits()), false, {}};
  }
  const double phi = *signal.phi_xi;
  const auto rewards = pirl::pi_rewards(prev.advantages, phi);
  VerifySampleStats stats;
  Gradient grad = verify_gradient(policy, space, prev.batch, rewards, config.clip_low,
                                  config.clip_high, &stats);
  bool warning = false;
  if (phi != 0.0) {
    for (const auto& adv : prev.advantages) {
      if (adv.degenerate) continue;
      const double z = group::abs_advantage_sum(adv.values);
      if (config.alpha_pi >= 2.0 * config.alpha_std * z / (config.group_size * std::abs(phi)))
        warning = true;
    }
  }
  return {apply_step(policy, grad, config.alpha_pi), std::move(grad), warning, stats};
}

RunResult run(const TrainerConfig& config, const env::QuerySpace& space,
              const env::SoftmaxPolicy& initial_policy) {
  config.validate();
  if (initial_policy.num_queries() != space.size())
    throw std::invalid_argument("run: policy and query space disagree in size");

  TrainState state{initial_policy, pirl::HistoryMemory(config.window), 0};
  RunResult result{{}, initial_policy, {}};
  result.records.reserve(config.max_iters);

  for (int t = 1; t <= config.max_iters; ++t) {
    state.iteration = t;
    auto batch = group::sample_batch(state.policy, space, config.batch_size,
                                     config.group_size, config.seed, t);
    const double mu_t = group::batch_mean_reward(batch);

    std::vector<group::Advantages> advantages;
    advantages.reserve(batch.groups.size());
    int degenerate_count = 0;
    for (const auto& g : batch.groups) {
      advantages.push_back(group::grpo_advantages(g.rewards));
      if (advantages.back().degenerate) ++degenerate_count;
    }

    IterationRecord record;
    record.t = t;
    record.mu_t = mu_t;
    record.j_exact = env::rlvr_objective(state.policy, space);
    record.degenerate_group_count = degenerate_count;

    env::SoftmaxPolicy verified = state.policy;
    if (!uses_pipo(config.variant)) {
      record.verify_skip_reason = "variant-without-verify";
    } else if (t <= config.window) {
      record.verify_skip_reason = "warm-up";
    } else {
      const auto signal = pirl::improvement_signal(mu_t, state.memory, config.lambda,
                                                   config.epsilon_sigma);
      record.mu_his = signal.mu_his;
      record.sigma_his = signal.sigma_his;
      if (signal.skipped()) {
        record.verify_skip_reason = signal.skip_reason;
      } else {
        record.xi = signal.xi;
        record.phi_xi = signal.phi_xi;
        const auto& prev = *state.memory.previous_batch();
        auto outcome = verify_step(state.policy, space, prev, signal, config);
        verified = std::move(outcome.policy);
        record.grad_norm_verify = norm(outcome.gradient);

        auto& audit = result.audit;
        ++audit.verify_steps;
        if (t <= config.window) ++audit.warmup_verify_steps;
        if (outcome.stability_warning) ++audit.stability_warnings;
        audit.max_contribution_ratio =
            std::max(audit.max_contribution_ratio, outcome.sample_stats.max_contribution_ratio);

        double k_sum = 0.0;
        int k_count = 0;
        for (const auto& adv : prev.advantages) {
          if (adv.degenerate) continue;
          const double z = group::abs_advantage_sum(adv.values);
          k_sum += effective_scaling_factor(config.alpha_std, config.alpha_pi,
                                            config.group_size, *signal.phi_xi, z);
          ++k_count;
          const auto normalized = pirl::normalized_local_advantages(adv.values);
          double reward_sum = 0.0;
          double mass = 0.0;
          for (double a : *normalized) {
            reward_sum += a * *signal.phi_xi;
            mass += std::abs(a);
          }
          audit.max_abs_reward_sum = std::max(audit.max_abs_reward_sum, std::abs(reward_sum));
          audit.max_mass_error =
              std::max(audit.max_mass_error, std::abs(mass - config.group_size));
        }
        if (k_count > 0) record.k_effective = k_sum / k_count;
      }
    }

    // Phase 1: the exploratory step, taken from the verified policy. Under
    // the filtering variants an all-degenerate batch makes this a no-op.
    group::BatchRollout explore_batch =
        uses_group_filtering(config.variant) ? group::filter_degenerate(batch).batch : batch;
    env::SoftmaxPolicy next = verified;
    if (!explore_batch.groups.empty()) {
      Gradient egrad = explore_gradient(verified, space, explore_batch, config.clip_low,
                                        config.clip_high);
      record.grad_norm_explore = norm(egrad);
      next = apply_step(verified, egrad, config.alpha_std);
    }

    state.memory.push(mu_t, pirl::StoredBatch{std::move(batch), std::move(advantages)});
    state.policy = std::move(next);
    result.records.push_back(std::move(record));
  }

  result.final_policy = state.policy;
  return result;
}

}  // namespace pirl_lab::trainer
