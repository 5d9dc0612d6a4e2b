#pragma once

// Run outputs (CSV / JSON files) and the cross-run speedup report.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fedseq/approximator.hpp"
#include "fedseq/config.hpp"
#include "fedseq/data.hpp"
#include "fedseq/fl.hpp"
#include "fedseq/grouping.hpp"

namespace fedseq {

inline constexpr const char* kVersion = "0.1.0";

/// round,equivalent_round,test_accuracy,aggregation_flag,wall_seconds
std::string history_csv(const TrainHistory& history);
void write_history_csv(const std::filesystem::path& path, const TrainHistory& history);
std::vector<RoundRecord> read_history_csv(const std::filesystem::path& path);

/// One row per superclient followed by a mean row.
std::string grouping_csv(const std::vector<Superclient>& superclients, const ClientPartition& partition,
                         const LabeledDataset& train);

std::string partition_json(const ClientPartition& partition);
std::string estimates_csv(const DistributionEstimate& estimate);

struct ManifestInfo {
  std::string command;
  std::string started;
  std::string finished;
  bool diverged = false;
  std::string diagnostic;
  std::optional<double> final_accuracy;
  std::optional<double> centralized_accuracy;
  std::size_t rounds_recorded = 0;
  std::size_t exemplars_excluded = 0;
  std::vector<std::string> files;
};

std::string manifest_json(const ExperimentConfig& config, const ManifestInfo& info);

/// UTC time as ISO-8601.
std::string utc_timestamp();

void write_text(const std::filesystem::path& path, const std::string& text);

struct SpeedupRow {
  std::string algorithm;
  double target_fraction = 0.0;
  std::size_t rounds = 0;  // kNotReached when not reached
  std::optional<double> speedup;
};

struct RunSummary {
  std::string name;  // run directory name
  std::string algorithm;
  std::vector<double> accuracies;
  std::optional<double> centralized_accuracy;
  std::size_t window = 10;
};

/// Reads every run directory (the directory itself and its immediate
/// subdirectories) holding history.csv and manifest.json.
std::vector<RunSummary> collect_runs(const std::filesystem::path& dir);

/// Rows for every non-centralized run. Acc_centr comes from the first
/// centralized run; FedAvg's round counts come from the first fedavg run.
std::vector<SpeedupRow> speedup_table(const std::vector<RunSummary>& runs);

/// algorithm,target_fraction,rounds,speedup_vs_fedavg
std::string speedups_csv(const std::vector<SpeedupRow>& rows);

/// Builds the speedup table for `dir` and writes `output` (default
/// dir/speedups.csv). Run files are only read.
std::filesystem::path write_report(const std::filesystem::path& dir,
                                   const std::optional<std::filesystem::path>& output = std::nullopt);

}  // namespace fedseq
