#include "pirl_lab/pirl.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "pirl_lab/errors.hpp"

namespace pirl_lab::pirl {

HistoryMemory::HistoryMemory(int capacity) : capacity_(capacity) {
  if (capacity < 2)
    throw ConfigError("history window must be >= 2 (sigma_his is undefined for K=1)");
}

void HistoryMemory::push(double mu_t, StoredBatch batch) {
  window_.push_back(mu_t);
  if (static_cast<int>(window_.size()) > capacity_) window_.pop_front();
  prev_ = std::move(batch);
}

std::optional<HistoricalStats> historical_stats(const HistoryMemory& memory) {
  if (!memory.full()) return std::nullopt;
  const auto& window = memory.window();
  const int k = memory.capacity();
  double mean = 0.0;
  for (double mu : window) mean += mu;
  mean /= k;
  double ss = 0.0;
  for (double mu : window) ss += (mu - mean) * (mu - mean);
  return HistoricalStats{mean, std::sqrt(ss / (k - 1))};
}

std::optional<double> xi(double mu_t, double mu_his, double sigma_his,
                         double epsilon_sigma) {
  if (!(sigma_his >= epsilon_sigma)) return std::nullopt;
  return (mu_t - mu_his) / sigma_his;
}

double phi_lambda(double x, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw ConfigError("lambda must lie in [0,1], got " + std::to_string(lambda));
  return x >= 0.0 ? x : lambda * x;
}

std::optional<std::vector<double>> normalized_local_advantages(
    const std::vector<double>& advantages) {
  const double z = group::abs_advantage_sum(advantages);
  if (!(z > 0.0)) return std::nullopt;
  const double g = static_cast<double>(advantages.size());
  std::vector<double> out(advantages.size());
  for (std::size_t i = 0; i < advantages.size(); ++i) out[i] = g * advantages[i] / z;
  return out;
}

PiRewardSet pi_rewards(const std::vector<group::Advantages>& prev_advantages,
                       double phi_xi) {
  PiRewardSet set;
  set.groups.reserve(prev_advantages.size());
  for (const auto& adv : prev_advantages) {
    auto normalized = normalized_local_advantages(adv.values);
    if (!normalized) {
      set.groups.emplace_back();  // degenerate: no attribution signal
      continue;
    }
    for (double& r : *normalized) r *= phi_xi;
    set.groups.push_back(std::move(*normalized));
  }
  return set;
}

std::optional<double> smoothed_improvement(double j_t, const HistoryMemory& memory) {
  const auto stats = historical_stats(memory);
  if (!stats) return std::nullopt;
  return j_t - stats->mu_his;
}

IdentityCheck telescoping_check(const std::vector<double>& j_sequence) {
  if (j_sequence.size() < 2)
    throw std::domain_error("telescoping_check: need at least 2 values");
  double lhs = 0.0;
  for (std::size_t t = 1; t < j_sequence.size(); ++t) {
    lhs += j_sequence[t] - j_sequence[t - 1];
  }
  return {lhs, j_sequence.back() - j_sequence.front()};
}

IdentityCheck weighted_sum_identity(const std::vector<double>& j_sequence, double j0,
                                    int window) {
  const int t_max = static_cast<int>(j_sequence.size());
  if (window < 1) throw std::domain_error("weighted_sum_identity: window must be >= 1");
  if (t_max <= window)
    throw std::domain_error("weighted_sum_identity: need more steps than the window");
  const auto value_at = [&](int m) { return m >= 1 ? j_sequence[m - 1] : j0; };

  double lhs = 0.0;
  for (int t = 1; t <= t_max; ++t) {
    double baseline = 0.0;
    for (int k = 1; k <= window; ++k) baseline += value_at(t - k);
    lhs += value_at(t) - baseline / window;
  }

  // Consolidated form: only the final K terms survive, with weights (K-i)/K,
  // plus the constant contribution of the pre-history values.
  double rhs = 0.0;
  for (int i = 0; i < window; ++i) {
    rhs += (static_cast<double>(window - i) / window) * value_at(t_max - i);
  }
  rhs -= j0 * (window + 1.0) / 2.0;
  return {lhs, rhs};
}

ImprovementSignal improvement_signal(double mu_t, const HistoryMemory& memory,
                                     double lambda, double epsilon_sigma) {
  ImprovementSignal signal;
  signal.mu_t = mu_t;
  const auto stats = historical_stats(memory);
  if (!stats) {
    signal.skip_reason = "warm-up";
    return signal;
  }
  signal.mu_his = stats->mu_his;
  signal.sigma_his = stats->sigma_his;
  const auto value = xi(mu_t, stats->mu_his, stats->sigma_his, epsilon_sigma);
  if (!value) {
    signal.skip_reason = "zero-variance history";
    return signal;
  }
  signal.xi = *value;
  signal.phi_xi = phi_lambda(*value, lambda);
  return signal;
}

}  // namespace pirl_lab::pirl
