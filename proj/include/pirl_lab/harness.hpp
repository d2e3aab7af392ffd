#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pirl_lab/metrics.hpp"
#include "pirl_lab/theory.hpp"
#include "pirl_lab/trainer.hpp"

namespace pirl_lab::harness {

// Deterministic synthetic environment recipe. Queries cycle through the
// target success rates; each query has a single correct answer whose logit
// is set so the initial policy hits the target exactly. The default mix is
// boundary-heavy: most queries start deep in the distortion-amplified
// regime, with a small mid tier so easy progress exists from the start.
struct GeneratorSpec {
  int num_queries = 9;
  int vocab_size = 6;
  std::vector<double> target_success_rates = {0.02, 0.02, 0.02, 0.02, 0.02,
                                              0.5,  0.98, 0.98, 0.98};
};

struct EnvironmentSpec {
  std::optional<std::filesystem::path> space_file;  // takes precedence
  GeneratorSpec generator;
};

struct ExperimentSpec {
  std::string name = "experiment";
  trainer::TrainerConfig config;
  EnvironmentSpec environment;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path output_dir = "out";
};

// Versioned JSON config; fills Table-style defaults and reports every
// violation at once.
ExperimentSpec load_config(const std::filesystem::path& path);
ExperimentSpec parse_config_json(const std::string& text, const std::string& origin);

env::QuerySpace make_space(const GeneratorSpec& spec);
env::SoftmaxPolicy make_policy(const GeneratorSpec& spec);
std::pair<env::QuerySpace, env::SoftmaxPolicy> build_environment(const EnvironmentSpec& spec);

struct CellSummary {
  std::string experiment;
  std::uint64_t seed = 0;
  long iterations = 0;
  double final_j_exact = 0.0;  // objective of the final policy
  double max_grad_norm_explore = 0.0;
  double max_grad_norm_verify = 0.0;
  long verify_steps = 0;
  long verify_skips = 0;
  trainer::VerifyAudit audit;
};

// Runs one experiment over its whole seed list, writing
// out_dir/<name>/seed_<s>/metrics.jsonl + summary.csv per cell.
std::vector<CellSummary> run_experiment(const ExperimentSpec& spec,
                                        const std::filesystem::path& out_dir);

struct TheoryGridOptions {
  std::vector<int> group_sizes = {2, 4, 8};
  double p_lo = 0.1;
  double p_hi = 0.9;
  int p_count = 5;
  long mc_groups = 200000;
  std::uint64_t seed = 1;
};

// Writes eta_grid.csv (G,p,eta_exact,eta_asymptotic,mc_ratio,mc_stderr,
// nondeg_prob) and mc_agreement.txt; returns kExitAssertionFailure iff any
// cell misses its 3-standard-error band.
int run_theory_grid(const TheoryGridOptions& options, const std::filesystem::path& out_dir);

// Built-in suites: "theory", "stability" (paired base vs +pipo over the seed
// list), "ablation" (lambda and window sweeps). Returns a process exit code.
int run_suite(const std::string& suite_name, const ExperimentSpec& spec,
              const std::filesystem::path& out_dir);

// Parallelism cap: PIRL_LAB_THREADS when set, else hardware concurrency.
int thread_cap();
void run_parallel(std::vector<std::function<void()>> jobs);

}  // namespace pirl_lab::harness
