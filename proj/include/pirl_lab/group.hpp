#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "pirl_lab/env.hpp"

namespace pirl_lab::group {

// G rollouts of one query with binary rewards and the log-probabilities
// under the policy that sampled them.
struct GroupRollout {
  int query_id = 0;
  std::vector<int> answers;
  std::vector<int> rewards;  // exactly 0 or 1
  Vec behavior_log_probs;

  int size() const { return static_cast<int>(rewards.size()); }
  int successes() const;
};

struct GroupStats {
  double mu = 0.0;     // S / G
  double sigma = 0.0;  // sqrt(S(G-S)) / G, the population form
  int successes = 0;
  bool degenerate = false;  // S in {0, G}  <=>  sigma == 0
};

struct BatchRollout {
  std::vector<GroupRollout> groups;
  int iteration = 0;

  int group_size() const { return groups.empty() ? 0 : groups.front().size(); }
};

// Exact group statistics from integer success counts; no floating-point
// comparison is ever used to decide degeneracy.
GroupStats group_stats(const std::vector<int>& rewards);

struct Advantages {
  std::vector<double> values;
  bool degenerate = false;  // all-zero values when set
};

// Group-relative advantages (R_i - mu) / sigma. For binary rewards these
// collapse to the two discrete values of discrete_advantages, which is how
// they are computed so the equivalence is exact.
Advantages grpo_advantages(const std::vector<int>& rewards);

// (A_plus, A_minus) = (sqrt((G-S)/S), -sqrt(S/(G-S))); requires 1 <= S <= G-1.
std::pair<double, double> discrete_advantages(int group_size, int successes);

// Z = sum |A_i|; equals 2*sqrt(S(G-S)) for binary groups.
double abs_advantage_sum(const std::vector<double>& advantages);

struct FilteredBatch {
  BatchRollout batch;
  bool all_degenerate = false;
};

// Drops degenerate groups (the group-filtering baseline variant). Does not
// resample; batch-size semantics of the batch mean are left untouched.
FilteredBatch filter_degenerate(const BatchRollout& batch);

// Samples B queries by the space weights and rolls each out G times.
// Streams are keyed (seed, iteration, batch position, slot) so the result
// is independent of evaluation order.
BatchRollout sample_batch(const env::SoftmaxPolicy& policy, const env::QuerySpace& space,
                          int batch_size, int group_size, std::uint64_t seed, int iteration);

// Grand reward mean mu_t = (1/B) sum_j (1/G) sum_i R_ji, all groups included.
double batch_mean_reward(const BatchRollout& batch);

// JSONL replay format, one group per line:
// {"query_id":..,"answers":[..],"rewards":[..],"log_probs":[..]}
void save_batch_jsonl(const BatchRollout& batch, const std::filesystem::path& path);
BatchRollout load_batch_jsonl(const std::filesystem::path& path, int iteration = 0);

}  // namespace pirl_lab::group
