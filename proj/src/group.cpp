#include "pirl_lab/group.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "pirl_lab/errors.hpp"

namespace pirl_lab::group {

using nlohmann::json;

namespace {

int count_successes(const std::vector<int>& rewards) {
  int s = 0;
  for (int r : rewards) {
    if (r != 0 && r != 1) throw std::invalid_argument("rewards must be exactly 0 or 1");
    s += r;
  }
  return s;
}

int pick_index(const Vec& weights, double u) {
  double cum = 0.0;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    cum += weights[i];
    if (u < cum) return static_cast<int>(i);
  }
  return static_cast<int>(weights.size()) - 1;
}

}  // namespace

int GroupRollout::successes() const { return count_successes(rewards); }

GroupStats group_stats(const std::vector<int>& rewards) {
  const int g = static_cast<int>(rewards.size());
  if (g < 2) throw std::domain_error("group_stats: need at least 2 rewards");
  const int s = count_successes(rewards);
  GroupStats stats;
  stats.successes = s;
  stats.mu = static_cast<double>(s) / g;
  stats.sigma = std::sqrt(static_cast<double>(s) * (g - s)) / g;
  stats.degenerate = (s == 0 || s == g);
  return stats;
}

std::pair<double, double> discrete_advantages(int group_size, int successes) {
  if (group_size < 2) throw std::domain_error("discrete_advantages: group size must be >= 2");
  if (successes <= 0 || successes >= group_size)
    throw std::domain_error("discrete_advantages: degenerate group (S in {0, G})");
  const double s = successes;
  const double f = group_size - successes;
  return {std::sqrt(f / s), -std::sqrt(s / f)};
}

Advantages grpo_advantages(const std::vector<int>& rewards) {
  const GroupStats stats = group_stats(rewards);
  Advantages out;
  out.values.assign(rewards.size(), 0.0);
  out.degenerate = stats.degenerate;
  if (stats.degenerate) return out;
  const auto [a_plus, a_minus] =
      discrete_advantages(static_cast<int>(rewards.size()), stats.successes);
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    out.values[i] = rewards[i] ? a_plus : a_minus;
  }
  return out;
}

double abs_advantage_sum(const std::vector<double>& advantages) {
  double z = 0.0;
  for (double a : advantages) z += std::abs(a);
  return z;
}

FilteredBatch filter_degenerate(const BatchRollout& batch) {
  FilteredBatch out;
  out.batch.iteration = batch.iteration;
  for (const auto& g : batch.groups) {
    const int s = g.successes();
    if (s != 0 && s != g.size()) out.batch.groups.push_back(g);
  }
  out.all_degenerate = !batch.groups.empty() && out.batch.groups.empty();
  return out;
}

BatchRollout sample_batch(const env::SoftmaxPolicy& policy, const env::QuerySpace& space,
                          int batch_size, int group_size, std::uint64_t seed, int iteration) {
  if (batch_size < 1) throw std::invalid_argument("sample_batch: batch size must be >= 1");
  if (group_size < 1) throw std::invalid_argument("sample_batch: group size must be >= 1");
  BatchRollout batch;
  batch.iteration = iteration;
  batch.groups.reserve(batch_size);
  const auto it = static_cast<std::uint64_t>(iteration);
  for (int j = 0; j < batch_size; ++j) {
    // slot G picks the query, slots 0..G-1 are the rollouts
    auto query_stream = make_stream(seed, it, static_cast<std::uint64_t>(j),
                                    static_cast<std::uint64_t>(group_size));
    const int qi = pick_index(space.weights(), query_stream.next_double());
    GroupRollout g;
    g.query_id = space.queries()[qi].id;
    g.answers.reserve(group_size);
    g.rewards.reserve(group_size);
    g.behavior_log_probs = Vec(group_size);
    for (int i = 0; i < group_size; ++i) {
      auto slot = make_stream(seed, it, static_cast<std::uint64_t>(j),
                              static_cast<std::uint64_t>(i));
      const env::Response resp = env::sample_response(policy, space, g.query_id, slot);
      g.answers.push_back(resp.answer);
      g.rewards.push_back(resp.reward);
      g.behavior_log_probs[i] = resp.log_prob;
    }
    batch.groups.push_back(std::move(g));
  }
  return batch;
}

double batch_mean_reward(const BatchRollout& batch) {
  if (batch.groups.empty()) throw std::domain_error("batch_mean_reward: empty batch");
  double mean = 0.0;
  for (const auto& g : batch.groups) {
    mean += static_cast<double>(g.successes()) / g.size();
  }
  return mean / static_cast<double>(batch.groups.size());
}

void save_batch_jsonl(const BatchRollout& batch, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  char buf[32];
  for (const auto& g : batch.groups) {
    json line;
    line["query_id"] = g.query_id;
    line["answers"] = g.answers;
    line["rewards"] = g.rewards;
    json lps = json::array();
    for (Eigen::Index i = 0; i < g.behavior_log_probs.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", g.behavior_log_probs[i]);
      lps.push_back(json::parse(buf));
    }
    line["log_probs"] = std::move(lps);
    out << line.dump() << "\n";
  }
}

BatchRollout load_batch_jsonl(const std::filesystem::path& path, int iteration) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  BatchRollout batch;
  batch.iteration = iteration;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json doc;
    try {
      doc = json::parse(line);
      GroupRollout g;
      g.query_id = doc.at("query_id").get<int>();
      g.answers = doc.at("answers").get<std::vector<int>>();
      g.rewards = doc.at("rewards").get<std::vector<int>>();
      const auto lps = doc.at("log_probs").get<std::vector<double>>();
      g.behavior_log_probs =
          Eigen::Map<const Vec>(lps.data(), static_cast<Eigen::Index>(lps.size()));
      if (g.answers.size() != g.rewards.size() ||
          g.answers.size() != static_cast<std::size_t>(g.behavior_log_probs.size())) {
        throw ConfigError(path.string() + ": group fields disagree in length");
      }
      batch.groups.push_back(std::move(g));
    } catch (const json::exception& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
  }
  return batch;
}

}  // namespace pirl_lab::group
