#include "fedseq/report.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "fedseq/harness.hpp"

namespace fedseq {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string history_csv(const TrainHistory& history) {
  std::string s = "round,equivalent_round,test_accuracy,aggregation_flag,wall_seconds\n";
  for (const auto& r : history.rounds) {
    s += std::to_string(r.round) + "," + num(r.equivalent_round) + "," + num(r.test_accuracy) + "," +
         (r.aggregated ? "1" : "0") + "," + num(r.wall_seconds) + "\n";
  }
  return s;
}

void write_history_csv(const fs::path& path, const TrainHistory& history) { write_text(path, history_csv(history)); }

std::vector<RoundRecord> read_history_csv(const fs::path& path) {
  std::stringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line) || line.rfind("round,", 0) != 0) {
    throw IoError(path.string() + ": missing history header");
  }
  std::vector<RoundRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 5) throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected 5 columns");
    try {
      RoundRecord r;
      r.round = std::stoull(cells[0]);
      r.equivalent_round = std::stod(cells[1]);
      r.test_accuracy = std::stod(cells[2]);
      r.aggregated = cells[3] == "1";
      r.wall_seconds = std::stod(cells[4]);
      out.push_back(r);
    } catch (const std::logic_error&) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  return out;
}

std::string grouping_csv(const std::vector<Superclient>& superclients, const ClientPartition& partition,
                         const LabeledDataset& train) {
  std::string s = "superclient_id,members,num_samples,balance_ratio,covered_classes\n";
  const auto quality = grouping_quality(superclients, partition, train);
  std::size_t total = 0;
  for (std::size_t i = 0; i < superclients.size(); ++i) {
    const auto& sc = superclients[i];
    std::string members;
    for (auto k : sc.clients) members += (members.empty() ? "" : " ") + std::to_string(k);
    s += std::to_string(sc.id) + "," + members + "," + std::to_string(sc.num_samples) + "," +
         num(quality.balance[i]) + "," + num(quality.covered[i]) + "\n";
    total += sc.num_samples;
  }
  const double mean_n = superclients.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(superclients.size());
  s += "mean,," + num(mean_n) + "," + num(quality.mean_balance) + "," + num(quality.mean_covered) + "\n";
  return s;
}

std::string partition_json(const ClientPartition& partition) {
  json j = json::object();
  for (std::size_t k = 0; k < partition.num_clients(); ++k) j[std::to_string(k)] = partition.clients[k];
  return j.dump() + "\n";
}

std::string estimates_csv(const DistributionEstimate& estimate) {
  const std::string prefix = estimate.kind == EstimateKind::confidence ? "confidence_" : "embedding_";
  std::string s = "client_id";
  for (Eigen::Index c = 0; c < estimate.rows.cols(); ++c) s += "," + prefix + std::to_string(c);
  s += "\n";
  for (Eigen::Index k = 0; k < estimate.rows.rows(); ++k) {
    s += std::to_string(k);
    for (Eigen::Index c = 0; c < estimate.rows.cols(); ++c) s += "," + num(estimate.rows(k, c));
    s += "\n";
  }
  return s;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string manifest_json(const ExperimentConfig& config, const ManifestInfo& info) {
  json j;
  j["version"] = kVersion;
  j["command"] = info.command;
  j["config"] = to_config_map(config);
  j["seeds"] = {
      {"master", config.seed},
      {"init", derive_seed({config.seed, stream::init})},
      {"partition", derive_seed({config.seed, stream::partition})},
      {"data_train", derive_seed({config.seed, stream::data, 1})},
      {"data_test", derive_seed({config.seed, stream::data, 2})},
      {"exemplars", derive_seed({config.seed, stream::exemplars})},
  };
  j["started"] = info.started;
  j["finished"] = info.finished;
  j["diverged"] = info.diverged;
  if (!info.diagnostic.empty()) j["diagnostic"] = info.diagnostic;
  j["results"] = {{"rounds_recorded", info.rounds_recorded}};
  if (info.final_accuracy) j["results"]["final_accuracy"] = *info.final_accuracy;
  if (info.centralized_accuracy) j["results"]["centralized_accuracy"] = *info.centralized_accuracy;
  j["evaluation"] = {{"exemplars_excluded_from_test", info.exemplars_excluded}};
  if (config.data_source == "cifar10") {
    j["normalization"] = {{"mean", kCifarMean}, {"std", kCifarStd}};
  }
  j["files"] = info.files;
  return j.dump(2) + "\n";
}

std::vector<RunSummary> collect_runs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("report directory " + dir.string() + " does not exist");
  std::vector<fs::path> candidates{dir};
  std::vector<fs::path> subdirs;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_directory()) subdirs.push_back(entry.path());
  std::sort(subdirs.begin(), subdirs.end());
  candidates.insert(candidates.end(), subdirs.begin(), subdirs.end());

  std::vector<RunSummary> runs;
  for (const auto& p : candidates) {
    if (!fs::exists(p / "history.csv") || !fs::exists(p / "manifest.json")) continue;
    json manifest;
    try {
      manifest = json::parse(read_text(p / "manifest.json"));
    } catch (const json::exception& e) {
      throw IoError((p / "manifest.json").string() + ": " + e.what());
    }
    RunSummary run;
    run.name = p.filename().string();
    const auto& cfg = manifest.at("config");
    run.algorithm = cfg.at("train.algorithm").get<std::string>();
    if (cfg.contains("report.window")) run.window = std::stoull(cfg.at("report.window").get<std::string>());
    const auto& results = manifest.at("results");
    if (results.contains("centralized_accuracy")) run.centralized_accuracy = results.at("centralized_accuracy").get<double>();
    for (const auto& r : read_history_csv(p / "history.csv")) run.accuracies.push_back(r.test_accuracy);
    runs.push_back(std::move(run));
  }
  return runs;
}

std::vector<SpeedupRow> speedup_table(const std::vector<RunSummary>& runs) {
  const RunSummary* central = nullptr;
  const RunSummary* fedavg = nullptr;
  std::map<std::string, int> seen;
  for (const auto& r : runs) {
    if (r.centralized_accuracy && !central) central = &r;
    if (r.algorithm == "fedavg" && !fedavg) fedavg = &r;
    ++seen[r.algorithm];
  }
  if (!central) throw InvalidArgument("report needs a centralized run to define the target accuracy");
  const double acc_centr = *central->centralized_accuracy;

  std::vector<std::size_t> fedavg_rounds;
  if (fedavg) {
    for (const auto& t : rounds_to_targets(fedavg->accuracies, acc_centr, kDefaultTargets, fedavg->window))
      fedavg_rounds.push_back(t.rounds);
  }
  std::vector<SpeedupRow> rows;
  for (const auto& r : runs) {
    if (r.centralized_accuracy || r.algorithm == "centralized") continue;
    const std::string label = seen[r.algorithm] > 1 ? r.algorithm + "@" + r.name : r.algorithm;
    const auto targets = rounds_to_targets(r.accuracies, acc_centr, kDefaultTargets, r.window);
    for (std::size_t i = 0; i < targets.size(); ++i) {
      SpeedupRow row{label, targets[i].fraction, targets[i].rounds, std::nullopt};
      if (fedavg) row.speedup = speedup_vs_fedavg(fedavg_rounds[i], targets[i].rounds);
      rows.push_back(row);
    }
  }
  return rows;
}

std::string speedups_csv(const std::vector<SpeedupRow>& rows) {
  std::string s = "algorithm,target_fraction,rounds,speedup_vs_fedavg\n";
  for (const auto& r : rows) {
    char frac[16];
    std::snprintf(frac, sizeof frac, "%.2f", r.target_fraction);
    s += r.algorithm + "," + frac + "," + (r.rounds == kNotReached ? std::string("not_reached") : std::to_string(r.rounds)) +
         "," + (r.speedup ? num(*r.speedup) : std::string("")) + "\n";
  }
  return s;
}

fs::path write_report(const fs::path& dir, const std::optional<fs::path>& output) {
  const auto runs = collect_runs(dir);
  if (runs.empty()) throw IoError("no runs (history.csv + manifest.json) found under " + dir.string());
  const fs::path out = output.value_or(dir / "speedups.csv");
  write_text(out, speedups_csv(speedup_table(runs)));
  return out;
}

}  // namespace fedseq
