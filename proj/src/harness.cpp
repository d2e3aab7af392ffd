#include "pirl_lab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "pirl_lab/errors.hpp"

namespace pirl_lab::harness {

using nlohmann::json;

namespace {

constexpr int kConfigVersion = 1;

std::string fmt17(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void expect_keys(const json& obj, const std::set<std::string>& allowed,
                 const std::string& scope, std::vector<std::string>& errors) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key()))
      errors.push_back(scope + ": unknown field '" + it.key() + "'");
  }
}

template <typename T>
bool fetch(const json& obj, const char* key, T& out, const std::string& scope,
           std::vector<std::string>& errors) {
  if (!obj.contains(key)) return false;
  try {
    out = obj.at(key).get<T>();
    return true;
  } catch (const json::exception&) {
    errors.push_back(scope + "." + key + ": wrong type");
    return false;
  }
}

}  // namespace

ExperimentSpec parse_config_json(const std::string& text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  if (!doc.is_object()) throw ConfigError(origin + ": config must be a JSON object");

  std::vector<std::string> errors;
  ExperimentSpec spec;

  expect_keys(doc,
              {"version", "name", "variant", "seed", "seeds", "trainer", "environment",
               "output_dir"},
              origin, errors);

  int version = kConfigVersion;
  fetch(doc, "version", version, origin, errors);
  if (version != kConfigVersion)
    errors.push_back(origin + ".version: unsupported config version " +
                     std::to_string(version));

  fetch(doc, "name", spec.name, origin, errors);
  std::string out_dir;
  if (fetch(doc, "output_dir", out_dir, origin, errors)) spec.output_dir = out_dir;

  std::string variant_name;
  if (fetch(doc, "variant", variant_name, origin, errors)) {
    try {
      spec.config.variant = trainer::variant_from_string(variant_name);
    } catch (const ConfigError& e) {
      errors.push_back(origin + ".variant: " + e.what());
    }
  } else {
    errors.push_back(origin + ".variant: required field is missing");
  }

  // Decoupled-clipping variants raise the upper clip bound by default.
  bool clip_high_given = false;
  if (doc.contains("trainer") && doc.at("trainer").is_object()) {
    const json& tr = doc.at("trainer");
    const std::string scope = origin + ".trainer";
    expect_keys(tr,
                {"B", "G", "K", "lambda", "alpha_std", "alpha_pi", "clip_low", "clip_high",
                 "max_iters", "epsilon_sigma"},
                scope, errors);
    fetch(tr, "B", spec.config.batch_size, scope, errors);
    fetch(tr, "G", spec.config.group_size, scope, errors);
    fetch(tr, "K", spec.config.window, scope, errors);
    fetch(tr, "lambda", spec.config.lambda, scope, errors);
    fetch(tr, "alpha_std", spec.config.alpha_std, scope, errors);
    fetch(tr, "alpha_pi", spec.config.alpha_pi, scope, errors);
    fetch(tr, "clip_low", spec.config.clip_low, scope, errors);
    clip_high_given = fetch(tr, "clip_high", spec.config.clip_high, scope, errors);
    fetch(tr, "max_iters", spec.config.max_iters, scope, errors);
    fetch(tr, "epsilon_sigma", spec.config.epsilon_sigma, scope, errors);
  } else if (doc.contains("trainer")) {
    errors.push_back(origin + ".trainer: must be an object");
  }
  if (!clip_high_given && trainer::uses_group_filtering(spec.config.variant))
    spec.config.clip_high = 0.28;

  if (doc.contains("seeds")) {
    fetch(doc, "seeds", spec.seeds, origin, errors);
  } else if (doc.contains("seed")) {
    std::uint64_t seed = 0;
    if (fetch(doc, "seed", seed, origin, errors)) spec.seeds = {seed};
  }
  if (spec.seeds.empty())
    errors.push_back(origin + ".seed(s): at least one seed is required");

  if (doc.contains("environment")) {
    const json& envj = doc.at("environment");
    const std::string scope = origin + ".environment";
    if (!envj.is_object()) {
      errors.push_back(scope + ": must be an object");
    } else {
      expect_keys(envj, {"file", "generator"}, scope, errors);
      std::string file;
      if (fetch(envj, "file", file, scope, errors)) spec.environment.space_file = file;
      if (envj.contains("generator")) {
        const json& gen = envj.at("generator");
        const std::string gscope = scope + ".generator";
        expect_keys(gen, {"num_queries", "vocab_size", "target_success_rates"}, gscope,
                    errors);
        fetch(gen, "num_queries", spec.environment.generator.num_queries, gscope, errors);
        fetch(gen, "vocab_size", spec.environment.generator.vocab_size, gscope, errors);
        fetch(gen, "target_success_rates",
              spec.environment.generator.target_success_rates, gscope, errors);
      }
    }
  }
  const auto& gen = spec.environment.generator;
  if (!spec.environment.space_file) {
    if (gen.num_queries < 1)
      errors.push_back(origin + ".environment.generator.num_queries: must be >= 1");
    if (gen.vocab_size < 2)
      errors.push_back(origin + ".environment.generator.vocab_size: must be >= 2");
    if (gen.target_success_rates.empty())
      errors.push_back(origin +
                       ".environment.generator.target_success_rates: must be non-empty");
    for (double p : gen.target_success_rates) {
      if (!(p > 0.0 && p < 1.0))
        errors.push_back(origin +
                         ".environment.generator.target_success_rates: rates must lie in "
                         "(0,1), got " +
                         std::to_string(p));
    }
  }

  for (const auto& v : spec.config.violations()) errors.push_back(origin + ".trainer." + v);
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return spec;
}

ExperimentSpec load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_json(buffer.str(), path.string());
}

env::QuerySpace make_space(const GeneratorSpec& spec) {
  std::vector<env::QuerySpec> queries;
  queries.reserve(spec.num_queries);
  for (int i = 0; i < spec.num_queries; ++i) {
    queries.push_back({i, spec.vocab_size, {0}});
  }
  Vec weights = Vec::Constant(spec.num_queries, 1.0 / spec.num_queries);
  return env::QuerySpace(std::move(queries), std::move(weights));
}

env::SoftmaxPolicy make_policy(const GeneratorSpec& spec) {
  std::vector<Vec> rows;
  rows.reserve(spec.num_queries);
  for (int i = 0; i < spec.num_queries; ++i) {
    const double target =
        spec.target_success_rates[i % spec.target_success_rates.size()];
    Vec row = Vec::Zero(spec.vocab_size);
    // p = e^t / (e^t + V - 1) solved for the correct-answer logit.
    row[0] = std::log(target * (spec.vocab_size - 1) / (1.0 - target));
    rows.push_back(std::move(row));
  }
  return env::SoftmaxPolicy(std::move(rows));
}

std::pair<env::QuerySpace, env::SoftmaxPolicy> build_environment(const EnvironmentSpec& spec) {
  if (spec.space_file) {
    env::QuerySpace space = env::load_query_space(*spec.space_file);
    env::SoftmaxPolicy policy = env::load_policy(*spec.space_file);
    if (policy.num_queries() != space.size())
      throw ConfigError(spec.space_file->string() +
                        ": logits do not cover every query");
    return {std::move(space), std::move(policy)};
  }
  return {make_space(spec.generator), make_policy(spec.generator)};
}

int thread_cap() {
  if (const char* env_cap = std::getenv("PIRL_LAB_THREADS")) {
    const long cap = std::strtol(env_cap, nullptr, 10);
    if (cap >= 1) return static_cast<int>(cap);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void run_parallel(std::vector<std::function<void()>> jobs) {
  const int workers = std::min<int>(thread_cap(), static_cast<int>(jobs.size()));
  if (workers <= 1) {
    for (auto& job : jobs) job();
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= jobs.size()) return;
        try {
          jobs[i]();
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

namespace {

CellSummary summarize(const std::string& name, std::uint64_t seed,
                      const trainer::RunResult& result, const env::QuerySpace& space) {
  CellSummary cell;
  cell.experiment = name;
  cell.seed = seed;
  cell.iterations = static_cast<long>(result.records.size());
  cell.final_j_exact = env::rlvr_objective(result.final_policy, space);
  for (const auto& r : result.records) {
    cell.max_grad_norm_explore = std::max(cell.max_grad_norm_explore, r.grad_norm_explore);
    if (r.grad_norm_verify)
      cell.max_grad_norm_verify = std::max(cell.max_grad_norm_verify, *r.grad_norm_verify);
    if (r.verify_skipped()) {
      ++cell.verify_skips;
    } else {
      ++cell.verify_steps;
    }
  }
  cell.audit = result.audit;
  return cell;
}

CellSummary run_cell(const ExperimentSpec& spec, std::uint64_t seed,
                     const std::filesystem::path& out_dir) {
  auto [space, policy] = build_environment(spec.environment);
  trainer::TrainerConfig config = spec.config;
  config.seed = seed;
  const trainer::RunResult result = trainer::run(config, space, policy);

  std::vector<MetricsRow> rows;
  rows.reserve(result.records.size());
  for (const auto& record : result.records) rows.push_back({spec.name, seed, record});
  const CellSummary cell = summarize(spec.name, seed, result, space);
  write_metrics(rows, out_dir / spec.name / ("seed_" + std::to_string(seed)),
                cell.final_j_exact);
  return cell;
}

void write_cells_csv(const std::vector<CellSummary>& cells,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "experiment,seed,iterations,final_j_exact,max_grad_norm_explore,"
         "max_grad_norm_verify,verify_steps,verify_skips\n";
  for (const auto& c : cells) {
    out << c.experiment << ',' << c.seed << ',' << c.iterations << ','
        << fmt17(c.final_j_exact) << ',' << fmt17(c.max_grad_norm_explore) << ','
        << fmt17(c.max_grad_norm_verify) << ',' << c.verify_steps << ',' << c.verify_skips
        << "\n";
  }
}

std::vector<CellSummary> run_experiment_cells(const std::vector<ExperimentSpec>& specs,
                                              const std::filesystem::path& out_dir) {
  struct Slot {
    const ExperimentSpec* spec;
    std::uint64_t seed;
    CellSummary cell;
  };
  std::vector<Slot> slots;
  for (const auto& spec : specs) {
    for (std::uint64_t seed : spec.seeds) slots.push_back({&spec, seed, {}});
  }
  std::vector<std::function<void()>> jobs;
  jobs.reserve(slots.size());
  for (auto& slot : slots) {
    jobs.push_back([&slot, &out_dir] { slot.cell = run_cell(*slot.spec, slot.seed, out_dir); });
  }
  run_parallel(std::move(jobs));
  std::vector<CellSummary> cells;
  cells.reserve(slots.size());
  for (auto& slot : slots) cells.push_back(std::move(slot.cell));
  std::sort(cells.begin(), cells.end(), [](const CellSummary& a, const CellSummary& b) {
    return a.experiment != b.experiment ? a.experiment < b.experiment : a.seed < b.seed;
  });
  return cells;
}

}  // namespace

std::vector<CellSummary> run_experiment(const ExperimentSpec& spec,
                                        const std::filesystem::path& out_dir) {
  auto cells = run_experiment_cells({spec}, out_dir);
  write_cells_csv(cells, out_dir / spec.name / "cells.csv");
  return cells;
}

int run_theory_grid(const TheoryGridOptions& options, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  if (options.p_count < 1) throw ConfigError("theory grid: p grid needs at least one point");
  if (!(options.p_lo > 0.0 && options.p_hi < 1.0 && options.p_lo <= options.p_hi))
    throw ConfigError("theory grid: p grid must lie inside (0,1)");

  std::vector<double> p_grid;
  for (int i = 0; i < options.p_count; ++i) {
    p_grid.push_back(options.p_count == 1
                         ? options.p_lo
                         : options.p_lo + (options.p_hi - options.p_lo) * i /
                               (options.p_count - 1));
  }

  std::ofstream csv(out_dir / "eta_grid.csv", std::ios::binary);
  if (!csv) throw IoError("cannot write " + (out_dir / "eta_grid.csv").string());
  csv << "G,p,eta_exact,eta_asymptotic,mc_ratio,mc_stderr,nondeg_prob\n";

  std::ostringstream report;
  bool all_ok = true;
  std::uint64_t cell_index = 0;
  for (int g : options.group_sizes) {
    for (double p : p_grid) {
      const auto eval = theory::evaluate_eta(g, p);
      const auto task = env::BernoulliTask::from_p(p);
      const auto mc = theory::mc_grpo_gradient(
          task, g, options.mc_groups, options.seed + 7919 * cell_index++);
      const double grad = task.grad_p();
      const double ratio = mc.estimate[0] / grad;
      const double se = mc.standard_error[0] / grad;
      // 3 standard errors plus a round-off floor: cells whose group outcome
      // is unique (G=2) report zero sample variance.
      const double tol = 3.0 * se + 64.0 * 2.220446049250313e-16 * eval.eta_exact;
      const bool ok = std::abs(ratio - eval.eta_exact) <= tol;
      all_ok = all_ok && ok;
      csv << g << ',' << fmt17(p) << ',' << fmt17(eval.eta_exact) << ','
          << fmt17(eval.eta_asymptotic) << ',' << fmt17(ratio) << ',' << fmt17(se)
          << ',' << fmt17(eval.nondegenerate_prob) << "\n";
      report << (ok ? "ok   " : "FAIL ") << "G=" << g << " p=" << fmt17(p)
             << " eta=" << fmt17(eval.eta_exact) << " mc_ratio=" << fmt17(ratio)
             << " stderr=" << fmt17(se) << " groups_used=" << mc.samples_used << "\n";
    }
  }
  report << (all_ok ? "all cells within 3 standard errors\n"
                    : "at least one cell outside its 3-standard-error band\n");
  std::ofstream txt(out_dir / "mc_agreement.txt", std::ios::binary);
  if (!txt) throw IoError("cannot write " + (out_dir / "mc_agreement.txt").string());
  txt << report.str();
  return all_ok ? kExitOk : kExitAssertionFailure;
}

namespace {

trainer::Variant base_variant(trainer::Variant v) {
  return trainer::uses_group_filtering(v) ? trainer::Variant::dapo : trainer::Variant::grpo;
}

trainer::Variant pipo_variant(trainer::Variant v) {
  return trainer::uses_group_filtering(v) ? trainer::Variant::dapo_pipo
                                          : trainer::Variant::grpo_pipo;
}

int run_stability_suite(const ExperimentSpec& spec, const std::filesystem::path& out_dir) {
  ExperimentSpec base = spec;
  base.config.variant = base_variant(spec.config.variant);
  base.name = trainer::to_string(base.config.variant);
  ExperimentSpec pipo = spec;
  pipo.config.variant = pipo_variant(spec.config.variant);
  pipo.name = trainer::to_string(pipo.config.variant);

  auto cells = run_experiment_cells({base, pipo}, out_dir);
  write_cells_csv(cells, out_dir / "stability_summary.csv");
  return kExitOk;
}

int run_ablation_suite(const ExperimentSpec& spec, const std::filesystem::path& out_dir) {
  const std::vector<double> lambda_grid = {0.0, 0.05, 0.1, 0.2, 0.5, 1.0};
  const std::vector<int> window_grid = {2, 4, 8, 16, 32};

  std::vector<ExperimentSpec> specs;
  for (double lambda : lambda_grid) {
    ExperimentSpec cell = spec;
    cell.config.variant = pipo_variant(spec.config.variant);
    cell.config.lambda = lambda;
    std::ostringstream name;
    name << "lambda_" << lambda;
    cell.name = name.str();
    specs.push_back(std::move(cell));
  }
  for (int window : window_grid) {
    ExperimentSpec cell = spec;
    cell.config.variant = pipo_variant(spec.config.variant);
    cell.config.window = window;
    cell.name = "window_" + std::to_string(window);
    specs.push_back(std::move(cell));
  }

  auto cells = run_experiment_cells(specs, out_dir);
  write_cells_csv(cells, out_dir / "ablation_summary.csv");
  return kExitOk;
}

}  // namespace

int run_suite(const std::string& suite_name, const ExperimentSpec& spec,
              const std::filesystem::path& out_dir) {
  if (suite_name == "theory") {
    TheoryGridOptions options;
    options.seed = spec.seeds.empty() ? 1 : spec.seeds.front();
    return run_theory_grid(options, out_dir);
  }
  if (suite_name == "stability") return run_stability_suite(spec, out_dir);
  if (suite_name == "ablation") return run_ablation_suite(spec, out_dir);
  throw ConfigError("unknown suite '" + suite_name +
                    "' (expected theory, stability or ablation)");
}

}  // namespace pirl_lab::harness
