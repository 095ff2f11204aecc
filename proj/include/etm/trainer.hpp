#pragma once

#include "etm/dataset.hpp"
#include "etm/embedder.hpp"
#include "etm/episodic.hpp"
#include "etm/mining.hpp"
#include "etm/rng.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace etm {

enum class LossKind { etm, prototypical };

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& name);

struct TrainConfig {
  int episodes = 10000;
  double lr0 = 1e-3;
  int lr_halving_period = 1000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int warmup_supervised_episodes = 50;
  std::uint64_t seed = 0;
  EpisodeConfig episode;
  MiningConfig mining;
  LossKind loss_kind = LossKind::etm;
  std::vector<int> hidden_dims{64, 64};
  int embedding_dim = 128;
  double clip_norm = 0.0;  // <= 0 disables global-norm clipping
  int monitor_every = 500;
  int monitor_episodes = 50;
  bool record_timing = true;

  void validate() const;
  std::vector<int> layer_dims(int feature_dim) const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// lr0 * 0.5^floor(episode / period).
double lr_at(int episode, const TrainConfig& cfg);

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::int64_t t = 0;

  static AdamState zeros_like(const EmbeddingNet& net);
};

/// One bias-corrected Adam update of every parameter.
void adam_step(EmbeddingNet& net, const Gradients& grads, AdamState& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

struct TrainLogEntry {
  int episode = 0;  // zero-based, the same index lr_at receives
  double loss = 0.0;
  double lr = 0.0;
  int n_support_effective = 0;
  double wall_ms = 0.0;
  bool pseudo_labeled = false;
  std::optional<double> val_accuracy;
};

nlohmann::json to_json(const TrainLogEntry& e);
std::string log_to_jsonl(const std::vector<TrainLogEntry>& log);

/// Loss and parameter gradients for one sampled episode. When the episode
/// carries unlabeled samples they are pseudo-labeled and appended to the
/// support set first.
struct EpisodeStep {
  double loss = 0.0;
  Gradients grads;
  int n_support_effective = 0;
  bool pseudo_labeled = false;
};

EpisodeStep episode_gradients(const EmbeddingNet& net, const Dataset& labeled,
                              const Dataset& unlabeled, const Episode& episode,
                              const TrainConfig& cfg);

/// Episode-loop optimizer. Datasets are borrowed and must outlive the trainer.
class Trainer {
public:
  Trainer(const Dataset& labeled, const Dataset& unlabeled, TrainConfig cfg,
          const Dataset* validation = nullptr);

  /// Continues from a checkpoint produced by checkpoint().
  static Trainer resume(const Dataset& labeled, const Dataset& unlabeled,
                        const nlohmann::json& checkpoint, const Dataset* validation = nullptr);

  const TrainLogEntry& step();
  void run(int n_episodes);
  void run_to_end();

  int episode() const noexcept { return episode_; }
  bool done() const noexcept { return episode_ >= cfg_.episodes; }
  const TrainConfig& config() const noexcept { return cfg_; }
  const EmbeddingNet& net() const noexcept { return net_; }
  const AdamState& adam() const noexcept { return adam_; }
  const std::vector<TrainLogEntry>& log() const noexcept { return log_; }

  nlohmann::json checkpoint() const;

private:
  std::optional<double> monitor() const;

  const Dataset* labeled_;
  const Dataset* unlabeled_;
  const Dataset* validation_;
  TrainConfig cfg_;
  EmbeddingNet net_;
  AdamState adam_;
  Rng rng_;
  int episode_ = 0;
  std::vector<TrainLogEntry> log_;
};

struct TrainResult {
  EmbeddingNet net;
  std::vector<TrainLogEntry> log;
  nlohmann::json checkpoint;
};

TrainResult train(const Dataset& labeled, const Dataset& unlabeled, const TrainConfig& cfg,
                  const Dataset* validation = nullptr);

/// Network, loss kind and config stored in a checkpoint.
EmbeddingNet net_from_checkpoint(const nlohmann::json& checkpoint);
TrainConfig config_from_checkpoint(const nlohmann::json& checkpoint);

}  // namespace etm
