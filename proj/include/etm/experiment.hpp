#pragma once

#include "etm/dataset.hpp"
#include "etm/evaluator.hpp"
#include "etm/trainer.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace etm {

/// Applies flag-named keys ("ns", "nq", "nc", "nr", "margin", "np", "nn",
/// "episodes", "lr", "lr-period", "warmup", "loss", "unlabeled-mode",
/// "hidden", "embed-dim", "clip-norm", "beta1", "beta2", "adam-eps",
/// "monitor-every", "monitor-episodes", "seed") onto a training config.
/// Unknown keys are ignored so one object can carry data and eval settings.
void apply_train_options(const nlohmann::json& options, TrainConfig& cfg);

/// Flag-named view of a training config (inverse of apply_train_options).
nlohmann::json train_options(const TrainConfig& cfg);

struct DataSource {
  std::optional<SyntheticSpec> synthetic;
  std::filesystem::path csv;
};

/// How classes are divided. Either explicit class sets, class counts, or
/// class fractions; the first present wins.
struct ClassSplit {
  std::optional<SplitSpec> explicit_sets;
  std::optional<std::array<int, 3>> counts;      // train, val, test
  double train_fraction = 0.7;
  double val_fraction = 0.1;

  SplitSpec resolve(const Dataset& ds, double labeled_fraction, std::uint64_t seed) const;
};

struct Variant {
  std::string name;
  nlohmann::json options;  // flag-named overrides, plus "labeled-fraction"
};

struct EvalShape {
  int way = 5;
  int shot = 1;
};

struct ExperimentConfig {
  DataSource data;
  ClassSplit split;
  double labeled_fraction = 1.0;
  nlohmann::json train = nlohmann::json::object();
  std::vector<Variant> variants;
  std::vector<EvalShape> evals{{5, 1}, {5, 5}, {20, 1}, {20, 5}};
  int eval_episodes = 1000;
  int eval_queries = 15;
  int eval_threads = 1;
  std::vector<std::uint64_t> seeds{0};
};

ExperimentConfig experiment_from_json(const nlohmann::json& j);

struct SummaryRow {
  std::string variant;
  std::uint64_t seed = 0;
  std::string loss_kind;
  double labeled_fraction = 1.0;
  std::string unlabeled_mode;
  int way = 0;
  int shot = 0;
  double mean_acc = 0.0;
  double ci95 = 0.0;
};

nlohmann::json to_json(const SummaryRow& row);
std::string summary_csv(const std::vector<SummaryRow>& rows);

/// Per-seed derived seeds; every stage draws from its own stream.
struct StageSeeds {
  std::uint64_t data, split, train, eval;
  static StageSeeds from(std::uint64_t seed) { return {seed, seed + 1, seed + 2, seed + 3}; }
};

/// Loads or generates the dataset for one run seed.
Dataset load_experiment_data(const DataSource& source, std::uint64_t data_seed);

/// Trains every variant for every seed and evaluates each trained network on
/// every listed shape. When `out_dir` is set, writes the config copy, split
/// manifests, checkpoints, training logs, eval reports and summary.{csv,json}.
std::vector<SummaryRow> run_experiment(const ExperimentConfig& cfg,
                                       const std::optional<std::filesystem::path>& out_dir,
                                       std::ostream* progress = nullptr);

void write_text(const std::filesystem::path& path, const std::string& text);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace etm
