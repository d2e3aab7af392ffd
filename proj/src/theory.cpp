#include "pirl_lab/theory.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "pirl_lab/pirl.hpp"

namespace pirl_lab::theory {

namespace {

double log_choose(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// Streaming mean/variance, one pass, deterministic in group-index order.
class Welford {
 public:
  void add(double x) {
    ++n_;
    const double d = x - mean_;
    mean_ += d / n_;
    m2_ += d * (x - mean_);
  }
  long count() const { return n_; }
  double mean() const { return mean_; }
  double standard_error() const {
    if (n_ < 2) return 0.0;
    return std::sqrt(m2_ / (n_ - 1) / n_);
  }

 private:
  long n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

void require_group_size(int group_size) {
  if (group_size < 2) throw std::invalid_argument("group size must be >= 2");
}

void require_num_groups(long num_groups) {
  if (num_groups < 1000) throw std::invalid_argument("need at least 1000 Monte Carlo groups");
}

}  // namespace

double binomial_pmf(int group_size, int successes, double p) {
  require_group_size(group_size);
  if (successes < 0 || successes > group_size)
    throw std::invalid_argument("binomial_pmf: successes out of range");
  if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("binomial_pmf: p must lie in [0,1]");
  if (p == 0.0) return successes == 0 ? 1.0 : 0.0;
  if (p == 1.0) return successes == group_size ? 1.0 : 0.0;
  const double log_pmf = log_choose(group_size, successes) + successes * std::log(p) +
                         (group_size - successes) * std::log1p(-p);
  return std::exp(log_pmf);
}

double nondegenerate_prob(int group_size, double p) {
  require_group_size(group_size);
  if (!(p >= 0.0 && p <= 1.0))
    throw std::domain_error("nondegenerate_prob: p must lie in [0,1]");
  if (p == 0.0 || p == 1.0) return 0.0;
  // 1 - (1-p)^G - p^G, with the near-one factor handled by expm1.
  return -std::expm1(group_size * std::log1p(-p)) - std::exp(group_size * std::log(p));
}

double eta_exact(int group_size, double p) {
  require_group_size(group_size);
  if (!(p > 0.0 && p < 1.0))
    throw std::domain_error("eta_exact: singular at p in {0,1}");
  double numerator = 0.0;
  for (int k = 1; k < group_size; ++k) {
    numerator += std::sqrt(static_cast<double>(k) * (group_size - k)) *
                 binomial_pmf(group_size, k, p);
  }
  return numerator / (group_size * p * (1.0 - p) * nondegenerate_prob(group_size, p));
}

double eta_asymptotic(int group_size, double p) {
  require_group_size(group_size);
  if (!(p > 0.0 && p < 1.0))
    throw std::domain_error("eta_asymptotic: p must lie in (0,1)");
  return std::sqrt(group_size - 1.0) / (group_size * p * (1.0 - p));
}

EtaEvaluation evaluate_eta(int group_size, double p) {
  return {group_size, p, eta_exact(group_size, p), eta_asymptotic(group_size, p),
          nondegenerate_prob(group_size, p)};
}

double bernoulli_group_explore_gradient(const env::BernoulliTask& task, int group_size,
                                        int successes) {
  const auto [a_plus, a_minus] = group::discrete_advantages(group_size, successes);
  return (successes * a_plus * task.score(1) +
          (group_size - successes) * a_minus * task.score(0)) /
         group_size;
}

double bernoulli_group_verify_gradient(const env::BernoulliTask& task, int group_size,
                                       int successes, double xi_value, double lambda) {
  const auto [a_plus, a_minus] = group::discrete_advantages(group_size, successes);
  const double z = 2.0 * std::sqrt(static_cast<double>(successes) * (group_size - successes));
  const double phi = pirl::phi_lambda(xi_value, lambda);
  const double r_plus = group_size * a_plus / z * phi;
  const double r_minus = group_size * a_minus / z * phi;
  return (successes * r_plus * task.score(1) +
          (group_size - successes) * r_minus * task.score(0)) /
         group_size;
}

namespace {

template <typename GroupGradient>
McGradientReport mc_bernoulli(const env::BernoulliTask& task, int group_size,
                              long num_groups, std::uint64_t seed,
                              GroupGradient&& group_gradient) {
  require_group_size(group_size);
  require_num_groups(num_groups);
  Welford acc;
  long discarded = 0;
  for (long g = 0; g < num_groups; ++g) {
    auto stream = make_stream(seed, static_cast<std::uint64_t>(g));
    int successes = 0;
    for (int i = 0; i < group_size; ++i) successes += task.sample(stream);
    if (successes == 0 || successes == group_size) {
      ++discarded;
      continue;
    }
    acc.add(group_gradient(successes));
  }
  if (acc.count() == 0)
    throw EstimationError("all " + std::to_string(num_groups) + " groups were degenerate");
  McGradientReport report;
  report.estimate = Vec::Constant(1, acc.mean());
  report.standard_error = Vec::Constant(1, acc.standard_error());
  report.samples_used = acc.count();
  report.degenerate_discarded = discarded;
  return report;
}

}  // namespace

McGradientReport mc_grpo_gradient(const env::BernoulliTask& task, int group_size,
                                  long num_groups, std::uint64_t seed) {
  return mc_bernoulli(task, group_size, num_groups, seed, [&](int successes) {
    return bernoulli_group_explore_gradient(task, group_size, successes);
  });
}

McGradientReport mc_verify_gradient(const env::BernoulliTask& task, int group_size,
                                    double xi_value, double lambda, long num_groups,
                                    std::uint64_t seed) {
  pirl::phi_lambda(0.0, lambda);  // validate lambda up front
  return mc_bernoulli(task, group_size, num_groups, seed, [&](int successes) {
    return bernoulli_group_verify_gradient(task, group_size, successes, xi_value, lambda);
  });
}

McGradientReport mc_grpo_gradient(const env::SoftmaxPolicy& policy,
                                  const env::QuerySpace& space, int query_id,
                                  int group_size, long num_groups, std::uint64_t seed) {
  require_group_size(group_size);
  require_num_groups(num_groups);
  const int row = space.index_of(query_id);
  const Eigen::Index vocab = policy.logits(row).size();
  Vec mean = Vec::Zero(vocab);
  Vec m2 = Vec::Zero(vocab);
  long used = 0;
  long discarded = 0;
  for (long g = 0; g < num_groups; ++g) {
    std::vector<int> rewards(group_size);
    std::vector<int> answers(group_size);
    for (int i = 0; i < group_size; ++i) {
      auto stream = make_stream(seed, static_cast<std::uint64_t>(g),
                                static_cast<std::uint64_t>(i));
      const env::Response resp = env::sample_response(policy, space, query_id, stream);
      rewards[i] = resp.reward;
      answers[i] = resp.answer;
    }
    const auto adv = group::grpo_advantages(rewards);
    if (adv.degenerate) {
      ++discarded;
      continue;
    }
    Vec grad = Vec::Zero(vocab);
    for (int i = 0; i < group_size; ++i) {
      grad += adv.values[i] * env::grad_log_prob(policy, row, answers[i]);
    }
    grad /= group_size;
    ++used;
    const Vec delta = grad - mean;
    mean += delta / used;
    m2 += delta.cwiseProduct(grad - mean);
  }
  if (used == 0)
    throw EstimationError("all " + std::to_string(num_groups) + " groups were degenerate");
  McGradientReport report;
  report.estimate = mean;
  report.standard_error =
      used > 1 ? Vec((m2 / (used - 1) / used).cwiseSqrt()) : Vec(Vec::Zero(vocab));
  report.samples_used = used;
  report.degenerate_discarded = discarded;
  return report;
}

}  // namespace pirl_lab::theory
