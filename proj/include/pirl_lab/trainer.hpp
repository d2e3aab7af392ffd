#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pirl_lab/env.hpp"
#include "pirl_lab/group.hpp"
#include "pirl_lab/pirl.hpp"

namespace pirl_lab::trainer {

enum class Variant { grpo, grpo_pipo, dapo, dapo_pipo };

bool uses_pipo(Variant v);
bool uses_group_filtering(Variant v);
std::string to_string(Variant v);
Variant variant_from_string(const std::string& name);  // throws ConfigError

struct TrainerConfig {
  int batch_size = 8;     // B
  int group_size = 8;     // G
  int window = 8;         // K
  double lambda = 0.1;    // rectification coefficient
  double alpha_std = 0.05;
  double alpha_pi = 0.05;
  double clip_low = 0.2;
  double clip_high = 0.2;  // 0.28 under the decoupled-clipping variants
  Variant variant = Variant::grpo;
  int max_iters = 400;  // T
  std::uint64_t seed = 1;
  double epsilon_sigma = pirl::kDefaultEpsilonSigma;

  std::vector<std::string> violations() const;
  void validate() const;  // throws ConfigError listing every violation
};

// Per-iteration telemetry. Verify fields are absent exactly when no verify
// step ran (warm-up, zero-variance skip, or a variant without verification).
struct IterationRecord {
  int t = 0;
  double mu_t = 0.0;
  std::optional<double> mu_his;
  std::optional<double> sigma_his;
  std::optional<double> xi;
  std::optional<double> phi_xi;
  double j_exact = 0.0;  // exact objective of the sampling policy theta_t
  double grad_norm_explore = 0.0;
  std::optional<double> grad_norm_verify;
  std::optional<double> k_effective;
  std::optional<std::string> verify_skip_reason;
  int degenerate_group_count = 0;

  bool verify_skipped() const { return verify_skip_reason.has_value(); }
};

struct TrainState {
  env::SoftmaxPolicy policy;
  pirl::HistoryMemory memory;
  int iteration = 0;
};

// Gradient of the clipped group-relative surrogate
//   (1/B) sum_groups (1/G) sum_i min(rho_i A_i, clip(rho_i) A_i)
// with rho_i taken against the stored behavior log-probs. Degenerate groups
// contribute nothing. Throws on an empty batch.
Gradient explore_gradient(const env::SoftmaxPolicy& policy, const env::QuerySpace& space,
                          const group::BatchRollout& batch, double clip_low,
                          double clip_high);

env::SoftmaxPolicy explore_step(const env::SoftmaxPolicy& policy,
                                const env::QuerySpace& space,
                                const group::BatchRollout& batch, double alpha_std,
                                double clip_low, double clip_high);

struct VerifySampleStats {
  // max over samples of |objective contribution| / |pi reward|
  double max_contribution_ratio = 0.0;
  double max_importance_ratio = 0.0;
};

// Gradient of the retrospective surrogate on the previous batch, with
// importance ratios nu_i computed from the stored behavior log-probs against
// the current policy and the same clip bounds as the explore stage.
Gradient verify_gradient(const env::SoftmaxPolicy& policy_now, const env::QuerySpace& space,
                         const group::BatchRollout& prev_batch,
                         const pirl::PiRewardSet& rewards, double clip_low,
                         double clip_high, VerifySampleStats* stats = nullptr);

struct VerifyOutcome {
  env::SoftmaxPolicy policy;
  Gradient gradient;
  bool stability_warning = false;  // step-size bound exceeded for some group
  VerifySampleStats sample_stats;
};

// Applies the verify update from the stored previous batch; identity when
// the signal is skipped. A warning (never a failure) is raised when
// alpha_pi >= 2 alpha_std Z_g / (G |phi_xi|) for any group.
VerifyOutcome verify_step(const env::SoftmaxPolicy& policy, const env::QuerySpace& space,
                          const pirl::StoredBatch& prev, const pirl::ImprovementSignal& signal,
                          const TrainerConfig& config);

// First-order effective step scale of the combined verify+explore update:
// k = alpha_std + alpha_pi * G * phi_xi / Z. Requires Z > 0.
double effective_scaling_factor(double alpha_std, double alpha_pi, int group_size,
                                double phi_xi, double abs_advantage_sum);

struct VerifyAudit {
  long verify_steps = 0;
  long warmup_verify_steps = 0;  // must stay 0
  double max_abs_reward_sum = 0.0;    // per-group |sum r_i|
  double max_mass_error = 0.0;        // per-group | sum|A~_i| - G |
  double max_contribution_ratio = 0.0;
  long stability_warnings = 0;
};

struct RunResult {
  std::vector<IterationRecord> records;
  env::SoftmaxPolicy final_policy;
  VerifyAudit audit;
};

// The dual-stage loop: sample a fresh batch under theta_t, verify the
// previous update against the historical window (when past warm-up and the
// variant calls for it), then take the exploratory step from the verified
// policy, and push (mu_t, batch) into memory.
RunResult run(const TrainerConfig& config, const env::QuerySpace& space,
              const env::SoftmaxPolicy& initial_policy);

}  // namespace pirl_lab::trainer
