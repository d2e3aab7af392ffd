#pragma once

#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "pirl_lab/group.hpp"

namespace pirl_lab::pirl {

inline constexpr double kDefaultEpsilonSigma = 1e-8;

// The most recent batch together with the advantages computed when it was
// sampled; the verify step reuses these stored values rather than
// recomputing them later.
struct StoredBatch {
  group::BatchRollout batch;
  std::vector<group::Advantages> advantages;
};

// Sliding window of the last K batch means plus the single most recent
// batch. Eviction is strictly oldest-first; older batches are not retained.
class HistoryMemory {
 public:
  explicit HistoryMemory(int capacity);  // capacity >= 2

  void push(double mu_t, StoredBatch batch);

  int capacity() const { return capacity_; }
  bool full() const { return static_cast<int>(window_.size()) == capacity_; }
  const std::deque<double>& window() const { return window_; }
  const std::optional<StoredBatch>& previous_batch() const { return prev_; }

 private:
  int capacity_;
  std::deque<double> window_;
  std::optional<StoredBatch> prev_;
};

struct HistoricalStats {
  double mu_his = 0.0;
  double sigma_his = 0.0;  // sample std, divisor K-1
};

// nullopt while the window is still warming up (< K entries).
std::optional<HistoricalStats> historical_stats(const HistoryMemory& memory);

// Standardized improvement signal (mu_t - mu_his) / sigma_his, or nullopt
// when sigma_his < epsilon_sigma ("zero-variance history": flooring sigma
// would manufacture enormous signals from noise, so the step is skipped).
std::optional<double> xi(double mu_t, double mu_his, double sigma_his,
                         double epsilon_sigma = kDefaultEpsilonSigma);

// Asymmetric rectification: identity on x >= 0, lambda * x on x < 0.
// lambda must lie in [0, 1].
double phi_lambda(double x, double lambda);

// Normalized local advantages G * A_i / sum|A_j|. Sum is 0, absolute mass is
// exactly G. Degenerate groups (zero advantage mass) carry no attribution
// signal and yield nullopt.
std::optional<std::vector<double>> normalized_local_advantages(
    const std::vector<double>& advantages);

// Per-group policy-improvement rewards r_i = A~_i * phi_xi, aligned with the
// stored previous batch. Degenerate groups get an empty entry.
struct PiRewardSet {
  std::vector<std::vector<double>> groups;
};

PiRewardSet pi_rewards(const std::vector<group::Advantages>& prev_advantages,
                       double phi_xi);

// J_t minus the window mean; nullopt during warm-up.
std::optional<double> smoothed_improvement(double j_t, const HistoryMemory& memory);

struct IdentityCheck {
  double lhs = 0.0;
  double rhs = 0.0;
};

// lhs = sum_t (J_t - J_{t-1}), rhs = J_T - J_0; equal by telescoping.
IdentityCheck telescoping_check(const std::vector<double>& j_sequence);

// lhs = sum_t [J_t - (1/K) sum_{k=1..K} J_{t-k}] with J_m = j0 for m <= 0.
// rhs = sum_{i=0}^{K-1} ((K-i)/K) J_{T-i} - j0 (K+1)/2, both sides built
// independently. Requires T > K.
IdentityCheck weighted_sum_identity(const std::vector<double>& j_sequence, double j0,
                                    int window);

// Everything the verify step needs to know about the current iteration's
// signal; the skip reason doubles as telemetry.
struct ImprovementSignal {
  double mu_t = 0.0;
  std::optional<double> mu_his;
  std::optional<double> sigma_his;
  std::optional<double> xi;
  std::optional<double> phi_xi;
  std::optional<std::string> skip_reason;

  bool skipped() const { return skip_reason.has_value(); }
};

ImprovementSignal improvement_signal(double mu_t, const HistoryMemory& memory,
                                     double lambda,
                                     double epsilon_sigma = kDefaultEpsilonSigma);

}  // namespace pirl_lab::pirl
