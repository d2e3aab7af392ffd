#pragma once

#include <cstdint>
#include <stdexcept>

#include "pirl_lab/env.hpp"
#include "pirl_lab/group.hpp"

namespace pirl_lab::theory {

class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// C(G,k) p^k (1-p)^(G-k), evaluated in log space so G up to 1024 works.
double binomial_pmf(int group_size, int successes, double p);

// P(non-degenerate) = 1 - p^G - (1-p)^G, computed cancellation-free.
double nondegenerate_prob(int group_size, double p);

// Exact scaling factor between the expected group-relative update and the
// ideal gradient:
//   eta(p) = sum_{k=1}^{G-1} sqrt(k(G-k)) C(G,k) p^k (1-p)^{G-k}
//            / [ G p (1-p) (1 - p^G - (1-p)^G) ].
// Symmetric in p <-> 1-p; singular at the boundaries.
double eta_exact(int group_size, double p);

// Boundary asymptote sqrt(G-1) / (G p (1-p)); exact for G = 2.
double eta_asymptotic(int group_size, double p);

struct EtaEvaluation {
  int group_size = 0;
  double p = 0.0;
  double eta_exact = 0.0;
  double eta_asymptotic = 0.0;
  double nondegenerate_prob = 0.0;
};

EtaEvaluation evaluate_eta(int group_size, double p);

struct McGradientReport {
  Vec estimate;        // size 1 for BernoulliTask
  Vec standard_error;  // per component
  long samples_used = 0;
  long degenerate_discarded = 0;
};

// Per-group explore gradient of a two-outcome task with S successes:
// (1/G) sum_i A_i * score_i, the advantages in their discrete form.
double bernoulli_group_explore_gradient(const env::BernoulliTask& task, int group_size,
                                        int successes);

// Same group, but weighted by normalized local advantages times the
// rectified signal (unit importance ratio, no clipping). Independent of S:
// every non-degenerate group contributes phi_lambda(xi) * grad_p / (2p(1-p)).
double bernoulli_group_verify_gradient(const env::BernoulliTask& task, int group_size,
                                       int successes, double xi_value, double lambda);

// Monte Carlo estimate of the expected group-relative update, conditioned on
// the non-degenerate event by rejection. Per-group streams; at least 1000
// groups required.
McGradientReport mc_grpo_gradient(const env::BernoulliTask& task, int group_size,
                                  long num_groups, std::uint64_t seed);

// Categorical-policy variant for a single query; the estimate is that
// query's gradient row.
McGradientReport mc_grpo_gradient(const env::SoftmaxPolicy& policy,
                                  const env::QuerySpace& space, int query_id,
                                  int group_size, long num_groups, std::uint64_t seed);

// Monte Carlo estimate of the verify-step gradient with unit ratio and
// rewards built from the supplied signal. Across-group variance is ~0 by the
// exact cancellation identity.
McGradientReport mc_verify_gradient(const env::BernoulliTask& task, int group_size,
                                    double xi_value, double lambda, long num_groups,
                                    std::uint64_t seed);

}  // namespace pirl_lab::theory
