#include "pirl_lab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pirl_lab/errors.hpp"

namespace pirl_lab::harness {

using nlohmann::json;

namespace {

std::string fmt17(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::string opt17(const std::optional<double>& x) { return x ? fmt17(*x) : "null"; }

std::string quoted(const std::string& s) { return json(s).dump(); }

}  // namespace

const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> columns = {
      "v",          "experiment", "seed",
      "t",          "mu_t",       "j_exact",
      "grad_norm_explore",        "degenerate_group_count",
      "verify_skipped",           "skip_reason",
      "mu_his",     "sigma_his",  "xi",
      "phi_xi",     "grad_norm_verify",
      "k_effective",
  };
  return columns;
}

void write_metrics(const std::vector<MetricsRow>& rows, const std::filesystem::path& dir,
                   std::optional<double> final_j_exact) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  const auto jsonl_path = dir / "metrics.jsonl";
  std::ofstream jsonl(jsonl_path, std::ios::binary);
  if (!jsonl) throw IoError("cannot write " + jsonl_path.string());
  for (const auto& row : rows) {
    const auto& r = row.record;
    // Hand-built lines keep the column order and formatting byte-stable.
    jsonl << "{\"v\":" << kMetricsSchemaVersion
          << ",\"experiment\":" << quoted(row.experiment) << ",\"seed\":" << row.seed
          << ",\"t\":" << r.t << ",\"mu_t\":" << fmt17(r.mu_t)
          << ",\"j_exact\":" << fmt17(r.j_exact)
          << ",\"grad_norm_explore\":" << fmt17(r.grad_norm_explore)
          << ",\"degenerate_group_count\":" << r.degenerate_group_count
          << ",\"verify_skipped\":" << (r.verify_skipped() ? "true" : "false")
          << ",\"skip_reason\":"
          << (r.verify_skip_reason ? quoted(*r.verify_skip_reason) : "null")
          << ",\"mu_his\":" << opt17(r.mu_his) << ",\"sigma_his\":" << opt17(r.sigma_his)
          << ",\"xi\":" << opt17(r.xi) << ",\"phi_xi\":" << opt17(r.phi_xi)
          << ",\"grad_norm_verify\":" << opt17(r.grad_norm_verify)
          << ",\"k_effective\":" << opt17(r.k_effective) << "}\n";
  }
  jsonl.close();

  const auto csv_path = dir / "summary.csv";
  std::ofstream csv(csv_path, std::ios::binary);
  if (!csv) throw IoError("cannot write " + csv_path.string());
  csv << "experiment,seed,iterations,final_j_exact,max_grad_norm_explore,"
         "max_grad_norm_verify,verify_steps,verify_skips\n";
  if (!rows.empty()) {
    double max_explore = 0.0;
    double max_verify = 0.0;
    long verify_steps = 0;
    long skips = 0;
    for (const auto& row : rows) {
      max_explore = std::max(max_explore, row.record.grad_norm_explore);
      if (row.record.grad_norm_verify)
        max_verify = std::max(max_verify, *row.record.grad_norm_verify);
      if (row.record.verify_skipped()) {
        ++skips;
      } else {
        ++verify_steps;
      }
    }
    const double final_j =
        final_j_exact ? *final_j_exact : rows.back().record.j_exact;
    csv << rows.front().experiment << ',' << rows.front().seed << ',' << rows.size()
        << ',' << fmt17(final_j) << ',' << fmt17(max_explore) << ',' << fmt17(max_verify)
        << ',' << verify_steps << ',' << skips << "\n";
  }
}

namespace {

std::optional<double> opt_from(const json& doc, const char* key) {
  const auto& v = doc.at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

}  // namespace

std::vector<MetricsRow> read_metrics(const std::filesystem::path& jsonl_path) {
  std::ifstream in(jsonl_path);
  if (!in) throw IoError("cannot open " + jsonl_path.string());
  std::vector<MetricsRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json doc;
    try {
      doc = json::parse(line);
      if (doc.at("v").get<int>() != kMetricsSchemaVersion)
        throw ConfigError(jsonl_path.string() + ": unsupported metrics schema version");
      MetricsRow row;
      row.experiment = doc.at("experiment").get<std::string>();
      row.seed = doc.at("seed").get<std::uint64_t>();
      auto& r = row.record;
      r.t = doc.at("t").get<int>();
      r.mu_t = doc.at("mu_t").get<double>();
      r.j_exact = doc.at("j_exact").get<double>();
      r.grad_norm_explore = doc.at("grad_norm_explore").get<double>();
      r.degenerate_group_count = doc.at("degenerate_group_count").get<int>();
      if (!doc.at("skip_reason").is_null())
        r.verify_skip_reason = doc.at("skip_reason").get<std::string>();
      r.mu_his = opt_from(doc, "mu_his");
      r.sigma_his = opt_from(doc, "sigma_his");
      r.xi = opt_from(doc, "xi");
      r.phi_xi = opt_from(doc, "phi_xi");
      r.grad_norm_verify = opt_from(doc, "grad_norm_verify");
      r.k_effective = opt_from(doc, "k_effective");
      rows.push_back(std::move(row));
    } catch (const json::exception& e) {
      throw ConfigError(jsonl_path.string() + ": " + e.what());
    }
  }
  return rows;
}

namespace {

struct CellValue {
  bool present = false;
  bool is_number = false;
  double number = 0.0;
  std::string text;
};

CellValue cell(const json& doc, const std::string& column) {
  CellValue v;
  if (!doc.contains(column)) return v;
  const auto& j = doc.at(column);
  if (j.is_null()) return v;
  v.present = true;
  if (j.is_number() || j.is_boolean()) {
    v.is_number = true;
    v.number = j.is_boolean() ? (j.get<bool>() ? 1.0 : 0.0) : j.get<double>();
  } else {
    v.text = j.dump();
  }
  return v;
}

std::vector<json> read_raw_rows(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<json> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
  }
  return rows;
}

}  // namespace

DiffReport compare_runs(const std::filesystem::path& path_a,
                        const std::filesystem::path& path_b) {
  const auto rows_a = read_raw_rows(path_a);
  const auto rows_b = read_raw_rows(path_b);
  if (!rows_a.empty() && !rows_b.empty()) {
    std::vector<std::string> keys_a, keys_b;
    for (auto it = rows_a.front().begin(); it != rows_a.front().end(); ++it)
      keys_a.push_back(it.key());
    for (auto it = rows_b.front().begin(); it != rows_b.front().end(); ++it)
      keys_b.push_back(it.key());
    std::sort(keys_a.begin(), keys_a.end());
    std::sort(keys_b.begin(), keys_b.end());
    if (keys_a != keys_b) throw ConfigError("compare_runs: schema mismatch between files");
    if (rows_a.front().at("v") != rows_b.front().at("v"))
      throw ConfigError("compare_runs: metrics schema versions differ");
  }

  DiffReport report;
  report.rows_a = static_cast<long>(rows_a.size());
  report.rows_b = static_cast<long>(rows_b.size());
  const std::size_t n = std::min(rows_a.size(), rows_b.size());
  for (const auto& column : metrics_columns()) {
    ColumnDiff diff;
    diff.column = column;
    for (std::size_t i = 0; i < n; ++i) {
      const CellValue a = cell(rows_a[i], column);
      const CellValue b = cell(rows_b[i], column);
      const int t = rows_a[i].contains("t") ? rows_a[i].at("t").get<int>()
                                            : static_cast<int>(i) + 1;
      if (a.present != b.present) {
        ++diff.presence_mismatches;
        if (diff.first_diff_t < 0) diff.first_diff_t = t;
        continue;
      }
      if (!a.present) continue;
      double d = 0.0;
      if (a.is_number && b.is_number) {
        d = std::abs(a.number - b.number);
      } else {
        d = (a.text == b.text) ? 0.0 : 1.0;
      }
      if (d > diff.max_abs_diff) diff.max_abs_diff = d;
      if (d != 0.0 && diff.first_diff_t < 0) diff.first_diff_t = t;
    }
    report.columns.push_back(std::move(diff));
  }
  return report;
}

const ColumnDiff* DiffReport::find(const std::string& column) const {
  for (const auto& c : columns) {
    if (c.column == column) return &c;
  }
  return nullptr;
}

double DiffReport::max_shared_abs_diff() const {
  double max = 0.0;
  for (const auto& c : columns) {
    if (c.presence_mismatches == 0) max = std::max(max, c.max_abs_diff);
  }
  return max;
}

std::string format_diff_report(const DiffReport& report) {
  std::ostringstream out;
  out << "rows: " << report.rows_a << " vs " << report.rows_b << "\n";
  out << "column                    max_abs_diff   presence_mismatch  first_diff_t\n";
  for (const auto& c : report.columns) {
    char line[128];
    std::snprintf(line, sizeof(line), "%-25s %-14.6g %-18ld %d\n", c.column.c_str(),
                  c.max_abs_diff, c.presence_mismatches, c.first_diff_t);
    out << line;
  }
  return out.str();
}

}  // namespace pirl_lab::harness
