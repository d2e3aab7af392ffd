#include "pirl_lab/env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "pirl_lab/errors.hpp"

namespace pirl_lab::env {

using nlohmann::json;

namespace {

constexpr double kWeightSumTol = 1e-12;

Vec softmax_row(const Vec& logits, double& log_norm) {
  const double m = logits.maxCoeff();
  Vec e = (logits.array() - m).exp();
  const double s = e.sum();
  log_norm = m + std::log(s);
  return e / s;
}

double objective_raw(const std::vector<Vec>& logits, const QuerySpace& space) {
  double j = 0.0;
  for (int qi = 0; qi < space.size(); ++qi) {
    double log_norm = 0.0;
    const Vec probs = softmax_row(logits[qi], log_norm);
    j += space.weights()[qi] * success_rate_row(probs, space.queries()[qi].correct_set);
  }
  return j;
}

}  // namespace

QuerySpace::QuerySpace(std::vector<QuerySpec> queries, Vec weights)
    : queries_(std::move(queries)), weights_(std::move(weights)) {
  std::vector<std::string> errors;
  if (queries_.empty()) errors.push_back("query space must contain at least one query");
  if (weights_.size() != static_cast<Eigen::Index>(queries_.size())) {
    errors.push_back("weights length must match the number of queries");
  } else {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < weights_.size(); ++i) {
      if (!(weights_[i] >= 0.0)) errors.push_back("sampling weights must be non-negative");
      sum += weights_[i];
    }
    if (std::abs(sum - 1.0) > kWeightSumTol)
      errors.push_back("sampling weights must sum to 1 within 1e-12");
  }
  for (const auto& q : queries_) {
    if (q.vocab_size < 2)
      errors.push_back("query " + std::to_string(q.id) + ": vocab_size must be >= 2");
    const std::set<int> correct(q.correct_set.begin(), q.correct_set.end());
    if (correct.empty() || static_cast<int>(correct.size()) >= q.vocab_size)
      errors.push_back("query " + std::to_string(q.id) +
                       ": correct_set must be a non-empty proper subset of the vocabulary");
    for (int v : correct) {
      if (v < 0 || v >= q.vocab_size)
        errors.push_back("query " + std::to_string(q.id) + ": correct answer index out of range");
    }
  }
  for (std::size_t i = 0; i < queries_.size(); ++i) {
    if (!index_.emplace(queries_[i].id, static_cast<int>(i)).second)
      errors.push_back("duplicate query id " + std::to_string(queries_[i].id));
  }
  if (!errors.empty()) throw ConfigError(errors);
  for (auto& q : queries_) std::sort(q.correct_set.begin(), q.correct_set.end());
}

int QuerySpace::index_of(int query_id) const {
  auto it = index_.find(query_id);
  if (it == index_.end())
    throw std::domain_error("unknown query id " + std::to_string(query_id));
  return it->second;
}

SoftmaxPolicy::SoftmaxPolicy(std::vector<Vec> logits) : logits_(std::move(logits)) {
  probs_.reserve(logits_.size());
  log_norm_.reserve(logits_.size());
  for (auto& row : logits_) {
    if (row.size() < 2) throw std::invalid_argument("policy rows need at least 2 logits");
    if (!row.allFinite()) throw std::invalid_argument("policy logits must be finite");
    row = row.cwiseMax(-kMaxLogit).cwiseMin(kMaxLogit);
    double log_norm = 0.0;
    probs_.push_back(softmax_row(row, log_norm));
    log_norm_.push_back(log_norm);
  }
}

double SoftmaxPolicy::log_prob(int row, int answer) const {
  return logits_[row][answer] - log_norm_[row];
}

double success_rate_row(const Vec& probs, const std::vector<int>& correct_set) {
  double p = 0.0;
  for (int v : correct_set) p += probs[v];
  return p;
}

double success_rate(const SoftmaxPolicy& policy, const QuerySpace& space, int query_id) {
  const int row = space.index_of(query_id);
  return success_rate_row(policy.probs(row), space.queries()[row].correct_set);
}

double rlvr_objective(const SoftmaxPolicy& policy, const QuerySpace& space) {
  double j = 0.0;
  for (int qi = 0; qi < space.size(); ++qi) {
    j += space.weights()[qi] *
         success_rate_row(policy.probs(qi), space.queries()[qi].correct_set);
  }
  return j;
}

Gradient ideal_gradient(const SoftmaxPolicy& policy, const QuerySpace& space) {
  Gradient grad;
  grad.reserve(space.size());
  for (int qi = 0; qi < space.size(); ++qi) {
    const Vec& probs = policy.probs(qi);
    const auto& correct = space.queries()[qi].correct_set;
    const double p = success_rate_row(probs, correct);
    Vec row = -p * probs;
    for (int v : correct) row[v] += probs[v];
    grad.push_back(space.weights()[qi] * row);
  }
  return grad;
}

Gradient fd_gradient(const SoftmaxPolicy& policy, const QuerySpace& space, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("fd_gradient: step size must be positive");
  std::vector<Vec> logits = policy.logits();
  Gradient grad = zeros_like(logits);
  for (std::size_t r = 0; r < logits.size(); ++r) {
    for (Eigen::Index v = 0; v < logits[r].size(); ++v) {
      const double saved = logits[r][v];
      logits[r][v] = saved + h;
      const double plus = objective_raw(logits, space);
      logits[r][v] = saved - h;
      const double minus = objective_raw(logits, space);
      logits[r][v] = saved;
      grad[r][v] = (plus - minus) / (2.0 * h);
    }
  }
  return grad;
}

Response sample_response(const SoftmaxPolicy& policy, const QuerySpace& space,
                         int query_id, RngStream& rng) {
  const int row = space.index_of(query_id);
  const Vec& probs = policy.probs(row);
  const double u = rng.next_double();
  int answer = static_cast<int>(probs.size()) - 1;
  double cum = 0.0;
  for (Eigen::Index v = 0; v < probs.size(); ++v) {
    cum += probs[v];
    if (u < cum) {
      answer = static_cast<int>(v);
      break;
    }
  }
  const auto& correct = space.queries()[row].correct_set;
  const int reward = std::binary_search(correct.begin(), correct.end(), answer) ? 1 : 0;
  return {answer, reward, policy.log_prob(row, answer)};
}

Vec grad_log_prob(const SoftmaxPolicy& policy, int row, int answer) {
  if (answer < 0 || answer >= policy.logits(row).size())
    throw std::invalid_argument("grad_log_prob: answer index out of range");
  Vec g = -policy.probs(row);
  g[answer] += 1.0;
  return g;
}

double score_norm_bound(const SoftmaxPolicy&) { return std::numbers::sqrt2; }

BernoulliTask BernoulliTask::from_p(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::domain_error("BernoulliTask::from_p: p must lie in (0,1)");
  return BernoulliTask{std::log(p / (1.0 - p))};
}

namespace {

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return doc;
}

QuerySpace space_from_json(const json& doc, const std::string& origin) {
  try {
    std::vector<QuerySpec> queries;
    for (const auto& jq : doc.at("queries")) {
      QuerySpec q;
      q.id = jq.at("id").get<int>();
      q.vocab_size = jq.at("vocab_size").get<int>();
      q.correct_set = jq.at("correct_set").get<std::vector<int>>();
      queries.push_back(std::move(q));
    }
    const auto w = doc.at("weights").get<std::vector<double>>();
    Vec weights = Eigen::Map<const Vec>(w.data(), static_cast<Eigen::Index>(w.size()));
    return QuerySpace(std::move(queries), std::move(weights));
  } catch (const json::exception& e) {
    throw ConfigError(origin + ": " + e.what());
  }
}

json space_to_json(const QuerySpace& space) {
  json doc;
  doc["queries"] = json::array();
  for (const auto& q : space.queries()) {
    doc["queries"].push_back(
        {{"id", q.id}, {"vocab_size", q.vocab_size}, {"correct_set", q.correct_set}});
  }
  doc["weights"] = std::vector<double>(space.weights().data(),
                                       space.weights().data() + space.weights().size());
  return doc;
}

}  // namespace

QuerySpace load_query_space(const std::filesystem::path& path) {
  return space_from_json(read_json_file(path), path.string());
}

void save_query_space(const QuerySpace& space, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << space_to_json(space).dump(2) << "\n";
}

SoftmaxPolicy load_policy(const std::filesystem::path& path) {
  const json doc = read_json_file(path);
  try {
    std::vector<Vec> rows;
    for (const auto& jrow : doc.at("logits")) {
      const auto values = jrow.get<std::vector<double>>();
      rows.push_back(Eigen::Map<const Vec>(values.data(), static_cast<Eigen::Index>(values.size())));
    }
    return SoftmaxPolicy(std::move(rows));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void save_policy(const QuerySpace& space, const SoftmaxPolicy& policy,
                 const std::filesystem::path& path) {
  json doc = space_to_json(space);
  doc["logits"] = json::array();
  for (const auto& row : policy.logits()) {
    doc["logits"].push_back(std::vector<double>(row.data(), row.data() + row.size()));
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump(2) << "\n";
}

}  // namespace pirl_lab::env
