// pirl-lab: synthetic group-relative RLVR training lab.
//
// Subcommands:
//   theory   closed-form vs Monte Carlo gradient-distortion grid
//   train    run one experiment from a JSON config
//   suite    built-in suites: theory | stability | ablation
//   compare  per-column diff of two metrics.jsonl files

#include <cstdio>
#include <exception>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pirl_lab/errors.hpp"
#include "pirl_lab/harness.hpp"

namespace {

using namespace pirl_lab;

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  if (out.empty()) throw ConfigError("expected a comma-separated list of integers");
  return out;
}

// "lo:hi:n"
void parse_p_grid(const std::string& text, harness::TheoryGridOptions& options) {
  std::stringstream ss(text);
  std::string lo, hi, n;
  if (!std::getline(ss, lo, ':') || !std::getline(ss, hi, ':') || !std::getline(ss, n))
    throw ConfigError("--p-grid expects lo:hi:n");
  options.p_lo = std::stod(lo);
  options.p_hi = std::stod(hi);
  options.p_count = std::stoi(n);
}

int cmd_theory(const std::string& group_sizes, const std::string& p_grid, long mc_groups,
               std::uint64_t seed, const std::string& out_dir) {
  harness::TheoryGridOptions options;
  if (!group_sizes.empty()) options.group_sizes = parse_int_list(group_sizes);
  if (!p_grid.empty()) parse_p_grid(p_grid, options);
  options.mc_groups = mc_groups;
  options.seed = seed;
  const int code = harness::run_theory_grid(options, out_dir);
  std::cout << (code == kExitOk ? "theory grid: all cells within 3 standard errors\n"
                                : "theory grid: at least one cell failed; see mc_agreement.txt\n");
  std::cout << "artifacts written to " << out_dir << "\n";
  return code;
}

int cmd_train(const std::string& config_path, std::int64_t seed_override,
              const std::string& out_override) {
  harness::ExperimentSpec spec = harness::load_config(config_path);
  if (seed_override >= 0) spec.seeds = {static_cast<std::uint64_t>(seed_override)};
  const std::filesystem::path out_dir =
      out_override.empty() ? spec.output_dir : std::filesystem::path(out_override);
  const auto cells = harness::run_experiment(spec, out_dir);
  for (const auto& c : cells) {
    std::printf("%s seed=%llu final_j=%.17g max_grad_norm=%.17g\n", c.experiment.c_str(),
                static_cast<unsigned long long>(c.seed), c.final_j_exact,
                c.max_grad_norm_explore);
  }
  std::cout << "metrics written to " << out_dir << "\n";
  return kExitOk;
}

int cmd_suite(const std::string& suite, const std::string& config_path,
              const std::string& out_dir) {
  const harness::ExperimentSpec spec = harness::load_config(config_path);
  return harness::run_suite(suite, spec, out_dir);
}

int cmd_compare(const std::string& path_a, const std::string& path_b, double max_abs,
                bool has_tolerance) {
  const auto report = harness::compare_runs(path_a, path_b);
  std::cout << harness::format_diff_report(report);
  if (has_tolerance && report.max_shared_abs_diff() > max_abs) {
    std::cout << "max shared diff " << report.max_shared_abs_diff() << " exceeds "
              << max_abs << "\n";
    return kExitAssertionFailure;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic group-relative RLVR training lab"};
  app.require_subcommand(1);

  auto* theory = app.add_subcommand("theory", "closed-form vs Monte Carlo distortion grid");
  std::string group_sizes;
  std::string p_grid;
  long mc_groups = 200000;
  std::uint64_t theory_seed = 1;
  std::string theory_out = "out/theory";
  theory->add_option("--group-sizes", group_sizes, "comma-separated group sizes (default 2,4,8)");
  theory->add_option("--p-grid", p_grid, "success-rate grid lo:hi:n (default 0.1:0.9:5)");
  theory->add_option("--mc-groups", mc_groups, "Monte Carlo groups per cell");
  theory->add_option("--seed", theory_seed, "master seed for the Monte Carlo streams");
  theory->add_option("--out", theory_out, "output directory");

  auto* train = app.add_subcommand("train", "run one experiment from a JSON config");
  std::string train_config;
  std::int64_t train_seed = -1;
  std::string train_out;
  train->add_option("--config", train_config, "experiment config (JSON)")->required();
  train->add_option("--seed", train_seed, "override the config seed list with one seed");
  train->add_option("--out", train_out, "override the config output directory");

  auto* suite = app.add_subcommand("suite", "run a built-in suite");
  std::string suite_name;
  std::string suite_config;
  std::string suite_out = "out";
  suite->add_option("name", suite_name, "theory | stability | ablation")->required();
  suite->add_option("--config", suite_config, "experiment config (JSON)")->required();
  suite->add_option("--out", suite_out, "output directory")->required();

  auto* compare = app.add_subcommand("compare", "diff two metrics.jsonl files");
  std::string compare_a;
  std::string compare_b;
  double max_abs = 0.0;
  compare->add_option("a", compare_a, "first metrics.jsonl")->required();
  compare->add_option("b", compare_b, "second metrics.jsonl")->required();
  auto* tol_opt = compare->add_option(
      "--max-abs", max_abs, "fail (exit 1) when any shared column differs by more");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? pirl_lab::kExitOk : pirl_lab::kExitConfigError;
  }

  try {
    if (theory->parsed())
      return cmd_theory(group_sizes, p_grid, mc_groups, theory_seed, theory_out);
    if (train->parsed()) return cmd_train(train_config, train_seed, train_out);
    if (suite->parsed()) return cmd_suite(suite_name, suite_config, suite_out);
    if (compare->parsed())
      return cmd_compare(compare_a, compare_b, max_abs, tol_opt->count() > 0);
  } catch (const pirl_lab::ConfigError& e) {
    std::cerr << "configuration error:\n";
    for (const auto& v : e.violations()) std::cerr << "  - " << v << "\n";
    return pirl_lab::kExitConfigError;
  } catch (const pirl_lab::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return pirl_lab::kExitIoError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return pirl_lab::kExitAssertionFailure;
  }
  return pirl_lab::kExitOk;
}
