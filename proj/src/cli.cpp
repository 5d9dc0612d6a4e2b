#include "fedseq/cli.hpp"

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fedseq/config.hpp"
#include "fedseq/harness.hpp"
#include "fedseq/report.hpp"

namespace fedseq {

namespace fs = std::filesystem;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("-c,--config", args.config_path, "Experiment config file");
  cmd->add_option("-s,--set", args.overrides, "Override a config value (key=value), repeatable")->allow_extra_args(false);
  cmd->add_option("-o,--out", args.out_dir, "Output directory (overrides output.dir)");
}

ExperimentConfig load_config(const CommonArgs& args) {
  ConfigMap map;
  if (!args.config_path.empty()) {
    if (!fs::exists(args.config_path)) throw ConfigError("config file '" + args.config_path + "' does not exist");
    map = read_config_file(args.config_path);
  }
  apply_overrides(map, args.overrides);
  if (!args.out_dir.empty()) map["output.dir"] = args.out_dir;
  return resolve_config(map);
}

class RunWriter {
 public:
  RunWriter(const ExperimentConfig& config, std::string command) : config_(config), dir_(config.output_dir) {
    info_.command = std::move(command);
    info_.started = utc_timestamp();
    fs::create_directories(dir_);
  }

  void file(const std::string& name, const std::string& text) {
    write_text(dir_ / name, text);
    info_.files.push_back(name);
  }

  void checkpoint(const std::string& name, const ParamVector& params) {
    fs::create_directories((dir_ / name).parent_path());
    save_params(params, dir_ / name);
    info_.files.push_back(name);
  }

  ManifestInfo& info() { return info_; }
  const fs::path& dir() const { return dir_; }

  void finish() {
    info_.finished = utc_timestamp();
    info_.files.push_back("manifest.json");
    write_text(dir_ / "manifest.json", manifest_json(config_, info_));
  }

 private:
  const ExperimentConfig& config_;
  fs::path dir_;
  ManifestInfo info_;
};

std::string pad(std::size_t k) {
  std::string s = std::to_string(k);
  return std::string(s.size() < 5 ? 5 - s.size() : 0, '0') + s;
}

void record_history(RunWriter& w, const TrainHistory& history) {
  w.file("history.csv", history_csv(history));
  auto& info = w.info();
  info.diverged = history.diverged;
  info.diagnostic = history.diagnostic;
  info.rounds_recorded = history.rounds.size();
  if (!history.rounds.empty()) info.final_accuracy = final_accuracy(history.accuracies());
}

int cmd_partition(const ExperimentConfig& cfg, std::ostream& out) {
  RunWriter w(cfg, "partition");
  const auto data = prepare_data(cfg);
  w.file("partition.json", partition_json(data.partition));
  w.info().exemplars_excluded = data.exemplars.source_indices.size();
  w.finish();
  out << "partitioned " << data.train.size() << " samples over " << data.partition.num_clients() << " clients into "
      << w.dir().string() << "\n";
  return kExitOk;
}

int cmd_pretrain(const ExperimentConfig& cfg, std::ostream& out) {
  RunWriter w(cfg, "pretrain");
  const auto data = prepare_data(cfg);
  const auto est = estimate_clients(cfg, data);
  w.file("estimates.csv", estimates_csv(est.estimate));
  if (cfg.checkpoints && est.pretrain) {
    for (std::size_t k = 0; k < est.pretrain->clients.size(); ++k)
      w.checkpoint("pretrain/client_" + pad(k) + ".bin", est.pretrain->clients[k]);
  }
  w.info().exemplars_excluded = data.exemplars.source_indices.size();
  w.finish();
  out << "estimated " << est.estimate.num_clients() << " clients into " << w.dir().string() << "\n";
  return kExitOk;
}

int cmd_group(const ExperimentConfig& cfg, std::ostream& out) {
  RunWriter w(cfg, "group");
  const auto data = prepare_data(cfg);
  const auto est = estimate_clients(cfg, data);
  const auto superclients = build_superclients(cfg, data, est.estimate);
  w.file("estimates.csv", estimates_csv(est.estimate));
  w.file("grouping.csv", grouping_csv(superclients, data.partition, data.train));
  w.info().exemplars_excluded = data.exemplars.source_indices.size();
  w.finish();
  const auto q = grouping_quality(superclients, data.partition, data.train);
  out << superclients.size() << " superclients, mean balance " << q.mean_balance << ", mean covered classes "
      << q.mean_covered << "\n";
  return kExitOk;
}

int cmd_train(const ExperimentConfig& cfg, const std::string& command, std::ostream& out, std::ostream& err) {
  RunWriter w(cfg, command);
  const auto result = run_experiment(cfg);
  record_history(w, result.history);
  w.info().centralized_accuracy = result.centralized_accuracy;
  w.info().exemplars_excluded = result.data.exemplars.source_indices.size();
  if (!result.superclients.empty()) {
    w.file("grouping.csv", grouping_csv(result.superclients, result.data.partition, result.data.train));
  }
  if (cfg.checkpoints && !result.history.diverged) w.checkpoint("final.bin", result.history.final_params);
  w.finish();
  if (result.history.diverged) {
    err << "diverged: " << result.history.diagnostic << "\n";
    return kExitDiverged;
  }
  out << to_string(cfg.algorithm) << ": " << result.history.rounds.size() << " rounds, final accuracy "
      << w.info().final_accuracy.value_or(0.0) << " -> " << w.dir().string() << "\n";
  return kExitOk;
}

int cmd_report(const std::string& dir, const std::string& output, std::ostream& out) {
  std::optional<fs::path> target;
  if (!output.empty()) target = output;
  const auto path = write_report(dir, target);
  out << "wrote " << path.string() << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Federated learning simulator with sequential superclient training"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  CommonArgs common;
  auto* partition = app.add_subcommand("partition", "Partition the training set across clients");
  auto* pretrain = app.add_subcommand("pretrain", "Pre-train clients and export distribution estimates");
  auto* group = app.add_subcommand("group", "Group clients into superclients");
  auto* train = app.add_subcommand("train", "Run the configured training algorithm");
  auto* centralized = app.add_subcommand("centralized", "Train one model on the full training set");
  for (auto* cmd : {partition, pretrain, group, train, centralized}) add_common(cmd, common);

  std::string report_dir, report_output;
  auto* report = app.add_subcommand("report", "Build the rounds-to-target speedup table for a set of runs");
  report->add_option("-d,--dir", report_dir, "Directory holding run outputs")->required();
  report->add_option("--output", report_output, "Output CSV (default <dir>/speedups.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitConfig;
  }

  try {
    if (report->parsed()) return cmd_report(report_dir, report_output, out);
    ExperimentConfig cfg = load_config(common);
    if (partition->parsed()) return cmd_partition(cfg, out);
    if (pretrain->parsed()) return cmd_pretrain(cfg, out);
    if (group->parsed()) return cmd_group(cfg, out);
    if (centralized->parsed()) {
      cfg.algorithm = Algorithm::centralized;
      return cmd_train(cfg, "centralized", out, err);
    }
    return cmd_train(cfg, "train", out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace fedseq
