#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pirl_lab/trainer.hpp"

namespace pirl_lab::harness {

inline constexpr int kMetricsSchemaVersion = 1;

// Column order of version 1; never reordered within a version.
const std::vector<std::string>& metrics_columns();

struct MetricsRow {
  std::string experiment;
  std::uint64_t seed = 0;
  trainer::IterationRecord record;
};

// Writes dir/metrics.jsonl (one row per iteration, numbers at 17 significant
// digits) and dir/summary.csv. final_j_exact is the exact objective of the
// policy after the last update; absent for empty runs.
void write_metrics(const std::vector<MetricsRow>& rows, const std::filesystem::path& dir,
                   std::optional<double> final_j_exact = std::nullopt);

std::vector<MetricsRow> read_metrics(const std::filesystem::path& jsonl_path);

struct ColumnDiff {
  std::string column;
  double max_abs_diff = 0.0;
  long presence_mismatches = 0;  // value on one side, null on the other
  int first_diff_t = -1;
};

struct DiffReport {
  std::vector<ColumnDiff> columns;
  long rows_a = 0;
  long rows_b = 0;

  const ColumnDiff* find(const std::string& column) const;
  // Max diff over columns with no presence mismatches on either side.
  double max_shared_abs_diff() const;
};

// Per-column max absolute difference between two metrics.jsonl files.
// Schema (version + column set) must match.
DiffReport compare_runs(const std::filesystem::path& path_a,
                        const std::filesystem::path& path_b);

std::string format_diff_report(const DiffReport& report);

}  // namespace pirl_lab::harness
