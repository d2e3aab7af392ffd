#pragma once

#include <cstdint>
#include <filesystem>
#include <unordered_map>
#include <vector>

#include "pirl_lab/gradient.hpp"
#include "pirl_lab/rng.hpp"

namespace pirl_lab::env {

// One synthetic query: V candidate answers, a verifier accept-set.
// Plain aggregate; invariants are enforced by QuerySpace.
struct QuerySpec {
  int id = 0;
  int vocab_size = 0;
  std::vector<int> correct_set;  // sorted, unique
};

class QuerySpace {
 public:
  QuerySpace(std::vector<QuerySpec> queries, Vec weights);

  const std::vector<QuerySpec>& queries() const { return queries_; }
  const Vec& weights() const { return weights_; }
  int size() const { return static_cast<int>(queries_.size()); }

  // Row index for a query id; unknown ids are a domain error.
  int index_of(int query_id) const;

 private:
  std::vector<QuerySpec> queries_;
  Vec weights_;
  std::unordered_map<int, int> index_;
};

// Categorical policy over answers, one logit row per query. Rows align with
// QuerySpace::queries() by position. Immutable once built; updates construct
// a new policy. Logits are clamped to [-kMaxLogit, kMaxLogit] so softmax
// stays away from underflow while still reaching success rates within
// ~1e-13 of {0, 1}.
class SoftmaxPolicy {
 public:
  static constexpr double kMaxLogit = 30.0;

  explicit SoftmaxPolicy(std::vector<Vec> logits);

  int num_queries() const { return static_cast<int>(logits_.size()); }
  const std::vector<Vec>& logits() const { return logits_; }
  const Vec& logits(int row) const { return logits_[row]; }
  const Vec& probs(int row) const { return probs_[row]; }
  double log_prob(int row, int answer) const;

 private:
  std::vector<Vec> logits_;
  std::vector<Vec> probs_;
  std::vector<double> log_norm_;  // logsumexp per row
};

struct Response {
  int answer = 0;
  int reward = 0;  // 1 iff answer is in the query's correct set
  double log_prob = 0.0;
};

// Exact success rate p = sum of softmax probabilities over the correct set.
double success_rate(const SoftmaxPolicy& policy, const QuerySpace& space, int query_id);

// Row-level form, usable with relaxed fixtures that bypass QuerySpace checks.
double success_rate_row(const Vec& probs, const std::vector<int>& correct_set);

// Exact objective: sum_q w_q * p(q). No sampling anywhere.
double rlvr_objective(const SoftmaxPolicy& policy, const QuerySpace& space);

// Closed-form gradient of the exact objective. Row u-th entry:
// w_q * pi_u * (1[u in correct] - p).
Gradient ideal_gradient(const SoftmaxPolicy& policy, const QuerySpace& space);

// Central-difference oracle for ideal_gradient. Works on raw logits (no
// clamping), step h balances truncation and round-off for |logit| <= 30.
Gradient fd_gradient(const SoftmaxPolicy& policy, const QuerySpace& space, double h = 1e-5);

// Draws one answer from the query's softmax row; reward is exact
// set-membership; log_prob is the exact categorical log-probability.
Response sample_response(const SoftmaxPolicy& policy, const QuerySpace& space,
                         int query_id, RngStream& rng);

// Score function of the categorical row: one_hot(answer) - softmax(row).
Vec grad_log_prob(const SoftmaxPolicy& policy, int row, int answer);

// Uniform bound M with ||grad_log_prob|| <= M for every softmax row,
// hence ||grad p|| <= M * min(p, 1-p).
double score_norm_bound(const SoftmaxPolicy&);

// Minimal two-outcome task with exact p = logistic(theta). The appendix-level
// identities (distortion factor, verify-gradient cancellation) are exact here,
// which makes it the oracle substrate for the theory suites.
struct BernoulliTask {
  double theta = 0.0;

  double p() const { return 1.0 / (1.0 + std::exp(-theta)); }
  double grad_p() const {
    const double q = p();
    return q * (1.0 - q);
  }
  // d log P(outcome) / d theta
  double score(int reward) const {
    const double q = p();
    return reward ? 1.0 - q : -q;
  }
  int sample(RngStream& rng) const { return rng.next_double() < p() ? 1 : 0; }

  static BernoulliTask from_p(double p);
};

// JSON files: {"queries":[{"id","vocab_size","correct_set"}],"weights":[...]}
// and the same layout plus a "logits" matrix for policies.
QuerySpace load_query_space(const std::filesystem::path& path);
void save_query_space(const QuerySpace& space, const std::filesystem::path& path);
SoftmaxPolicy load_policy(const std::filesystem::path& path);
void save_policy(const QuerySpace& space, const SoftmaxPolicy& policy,
                 const std::filesystem::path& path);

}  // namespace pirl_lab::env
