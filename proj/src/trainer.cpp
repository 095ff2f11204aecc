#include "etm/trainer.hpp"

#include "etm/errors.hpp"
#include "etm/evaluator.hpp"
#include "etm/protobaseline.hpp"
#include "etm/semisup.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace etm {

namespace {

constexpr const char* kCheckpointFormat = "etm-checkpoint";
constexpr int kCheckpointVersion = 1;

// Distinct streams for weight init and episode sampling.
constexpr std::uint64_t kEpisodeStream = 0x9E3779B97F4A7C15ULL;

std::vector<double> to_vector(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd from_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::string to_string(LossKind kind) {
  return kind == LossKind::prototypical ? "prototypical" : "etm";
}

LossKind loss_kind_from_string(const std::string& name) {
  if (name == "etm" || name == "triplet") return LossKind::etm;
  if (name == "proto" || name == "prototypical") return LossKind::prototypical;
  throw ConfigError("unknown loss kind '" + name + "' (expected etm or proto)");
}

void TrainConfig::validate() const {
  if (episodes < 1) throw ConfigError("episodes must be >= 1");
  if (!(lr0 > 0.0) || !std::isfinite(lr0)) throw ConfigError("learning rate must be positive");
  if (lr_halving_period < 1) throw ConfigError("lr halving period must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("Adam epsilon must be positive");
  if (warmup_supervised_episodes < 0) throw ConfigError("warm-up episodes must be >= 0");
  if (embedding_dim < 1) throw ConfigError("embedding dimension must be >= 1");
  for (int h : hidden_dims) {
    if (h < 1) throw ConfigError("hidden layer widths must be >= 1");
  }
  if (monitor_every < 0 || monitor_episodes < 0) {
    throw ConfigError("monitoring settings must be >= 0");
  }
  episode.validate();
  mining.validate();
}

std::vector<int> TrainConfig::layer_dims(int feature_dim) const {
  std::vector<int> dims{feature_dim};
  dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
  dims.push_back(embedding_dim);
  return dims;
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"episodes", c.episodes},
       {"lr0", c.lr0},
       {"lr_halving_period", c.lr_halving_period},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"adam_eps", c.adam_eps},
       {"warmup_supervised_episodes", c.warmup_supervised_episodes},
       {"seed", c.seed},
       {"episode", c.episode},
       {"mining", c.mining},
       {"loss_kind", to_string(c.loss_kind)},
       {"hidden_dims", c.hidden_dims},
       {"embedding_dim", c.embedding_dim},
       {"clip_norm", c.clip_norm},
       {"monitor_every", c.monitor_every},
       {"monitor_episodes", c.monitor_episodes},
       {"record_timing", c.record_timing}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.episodes = j.value("episodes", c.episodes);
  c.lr0 = j.value("lr0", c.lr0);
  c.lr_halving_period = j.value("lr_halving_period", c.lr_halving_period);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.warmup_supervised_episodes = j.value("warmup_supervised_episodes", c.warmup_supervised_episodes);
  c.seed = j.value("seed", c.seed);
  if (j.contains("episode")) c.episode = j.at("episode").get<EpisodeConfig>();
  if (j.contains("mining")) c.mining = j.at("mining").get<MiningConfig>();
  c.loss_kind = loss_kind_from_string(j.value("loss_kind", to_string(c.loss_kind)));
  c.hidden_dims = j.value("hidden_dims", c.hidden_dims);
  c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.monitor_every = j.value("monitor_every", c.monitor_every);
  c.monitor_episodes = j.value("monitor_episodes", c.monitor_episodes);
  c.record_timing = j.value("record_timing", c.record_timing);
}

double lr_at(int episode, const TrainConfig& cfg) {
  if (episode < 0) throw ConfigError("episode index must be >= 0");
  // Halving is exact in binary floating point, so ldexp matches repeated *0.5.
  return std::ldexp(cfg.lr0, -(episode / cfg.lr_halving_period));
}

AdamState AdamState::zeros_like(const EmbeddingNet& net) {
  const auto n = static_cast<Eigen::Index>(net.num_params());
  return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), 0};
}

void adam_step(EmbeddingNet& net, const Gradients& grads, AdamState& state, double lr,
               double beta1, double beta2, double eps) {
  const Eigen::VectorXd g = grads.flatten();
  const auto n = static_cast<Eigen::Index>(net.num_params());
  if (g.size() != n || state.m.size() != n || state.v.size() != n) {
    throw ShapeError("gradient and optimizer state shapes do not match the network");
  }
  if (!g.allFinite()) {
    const Eigen::Index bad = [&] {
      for (Eigen::Index i = 0; i < g.size(); ++i) {
        if (!std::isfinite(g[i])) return i;
      }
      return Eigen::Index{-1};
    }();
    throw TrainingError("non-finite gradient at parameter " + std::to_string(bad) +
                        " (optimizer step " + std::to_string(state.t + 1) + ")");
  }
  state.t += 1;
  state.m = beta1 * state.m + (1.0 - beta1) * g;
  state.v = beta2 * state.v + (1.0 - beta2) * g.cwiseProduct(g);
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  Eigen::VectorXd theta = net.flat_params();
  theta.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + eps);
  net.set_flat_params(theta);
}

nlohmann::json to_json(const TrainLogEntry& e) {
  nlohmann::json j = {{"episode", e.episode},
                      {"loss", e.loss},
                      {"lr", e.lr},
                      {"n_support_effective", e.n_support_effective},
                      {"wall_ms", e.wall_ms}};
  if (e.pseudo_labeled) j["pseudo_labeled"] = true;
  if (e.val_accuracy) j["val_accuracy"] = *e.val_accuracy;
  return j;
}

std::string log_to_jsonl(const std::vector<TrainLogEntry>& log) {
  std::string out;
  for (const auto& e : log) {
    out += to_json(e).dump();
    out += '\n';
  }
  return out;
}

EpisodeStep episode_gradients(const EmbeddingNet& net, const Dataset& labeled,
                              const Dataset& unlabeled, const Episode& episode,
                              const TrainConfig& cfg) {
  const auto n_s = static_cast<Eigen::Index>(episode.support.size());
  const auto n_r = static_cast<Eigen::Index>(episode.unlabeled.size());
  const auto n_q = static_cast<Eigen::Index>(episode.query.size());
  const int f = labeled.feature_dim();

  // One batch [S; R; Q] so a single backward pass covers every embedding.
  Eigen::MatrixXd batch(n_s + n_r + n_q, f);
  batch.topRows(n_s) = labeled.gather(ids_of(episode.support));
  if (n_r > 0) batch.middleRows(n_s, n_r) = unlabeled.gather(episode.unlabeled);
  batch.bottomRows(n_q) = labeled.gather(ids_of(episode.query));
  ForwardResult fwd = forward(net, batch);

  const Eigen::MatrixXd e_s = fwd.embeddings.topRows(n_s);
  const Eigen::MatrixXd e_q = fwd.embeddings.bottomRows(n_q);
  const std::vector<ClassId> q_labels = labels_of(episode.query);

  EpisodeStep out;
  std::vector<LabeledRef> support = episode.support;
  Eigen::MatrixXd e_support;
  if (n_r > 0) {
    // S~ = S followed by R~, so its rows are exactly the first n_s + n_r
    // rows of the batch embeddings.
    const PseudoLabeledSet pseudo =
        pseudo_label(fwd.embeddings.middleRows(n_s, n_r), episode.unlabeled, e_s,
                     labels_of(episode.support), cfg.mining.n_positive);
    support = augment_support(episode.support, pseudo);
    e_support = fwd.embeddings.topRows(n_s + n_r);
    out.pseudo_labeled = true;
  } else {
    e_support = e_s;
  }
  const std::vector<ClassId> s_labels = labels_of(support);
  out.n_support_effective = static_cast<int>(support.size());

  Eigen::MatrixXd grad_support;
  Eigen::MatrixXd grad_queries;
  if (cfg.loss_kind == LossKind::etm) {
    const auto results = mine(distance_matrix(e_q, e_support), q_labels, s_labels, cfg.mining);
    out.loss = episode_loss(results);
    EmbeddingGrads g = loss_grad_embeddings(e_q, e_support, results, cfg.mining);
    grad_support = std::move(g.support);
    grad_queries = std::move(g.queries);
  } else {
    const Prototypes protos = prototypes(e_support, s_labels);
    ProtoLoss pl = proto_loss(e_q, q_labels, protos);
    out.loss = pl.loss;
    grad_support = support_grad_from_centers(protos, s_labels, pl.grad_centers);
    grad_queries = std::move(pl.grad_queries);
  }
  if (!std::isfinite(out.loss)) throw TrainingError("non-finite episode loss");

  Eigen::MatrixXd upstream(batch.rows(), net.output_dim());
  upstream.topRows(n_s + n_r) = grad_support;
  upstream.bottomRows(n_q) = grad_queries;
  out.grads = backward(net, fwd.trace, upstream);
  return out;
}

Trainer::Trainer(const Dataset& labeled, const Dataset& unlabeled, TrainConfig cfg,
                 const Dataset* validation)
    : labeled_(&labeled),
      unlabeled_(&unlabeled),
      validation_(validation),
      cfg_(std::move(cfg)),
      rng_(cfg_.seed ^ kEpisodeStream) {
  cfg_.validate();
  check_episode_feasible(labeled, cfg_.episode);
  if (cfg_.episode.semi_supervised() && unlabeled.empty()) {
    throw ConfigError("semi-supervised training needs a non-empty unlabeled set");
  }
  if (!unlabeled.empty() && unlabeled.feature_dim() != labeled.feature_dim()) {
    throw ShapeError("labeled and unlabeled data differ in feature dimension");
  }
  net_ = EmbeddingNet::init(cfg_.layer_dims(labeled.feature_dim()), cfg_.seed);
  adam_ = AdamState::zeros_like(net_);
}

const TrainLogEntry& Trainer::step() {
  if (done()) throw ConfigError("training already finished");
  const auto start = std::chrono::steady_clock::now();
  EpisodeConfig ep_cfg = cfg_.episode;
  if (episode_ < cfg_.warmup_supervised_episodes) {
    ep_cfg.unlabeled_mode = UnlabeledMode::none;
    ep_cfg.n_unlabeled = 0;
  }
  const Episode ep = sample_episode(*labeled_, *unlabeled_, ep_cfg, rng_);
  EpisodeStep st = episode_gradients(net_, *labeled_, *unlabeled_, ep, cfg_);

  if (cfg_.clip_norm > 0.0) {
    double sq = 0.0;
    for (std::size_t l = 0; l < st.grads.weights.size(); ++l) {
      sq += st.grads.weights[l].squaredNorm() + st.grads.biases[l].squaredNorm();
    }
    const double norm = std::sqrt(sq);
    if (norm > cfg_.clip_norm) {
      const double scale = cfg_.clip_norm / norm;
      for (std::size_t l = 0; l < st.grads.weights.size(); ++l) {
        st.grads.weights[l] *= scale;
        st.grads.biases[l] *= scale;
      }
    }
  }
  const double lr = lr_at(episode_, cfg_);
  adam_step(net_, st.grads, adam_, lr, cfg_.beta1, cfg_.beta2, cfg_.adam_eps);

  TrainLogEntry entry;
  entry.episode = episode_;
  entry.loss = st.loss;
  entry.lr = lr;
  entry.n_support_effective = st.n_support_effective;
  entry.pseudo_labeled = st.pseudo_labeled;
  ++episode_;
  if (cfg_.monitor_every > 0 && episode_ % cfg_.monitor_every == 0) entry.val_accuracy = monitor();
  if (cfg_.record_timing) {
    entry.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                              start)
                        .count();
  }
  log_.push_back(entry);
  return log_.back();
}

std::optional<double> Trainer::monitor() const {
  if (!validation_ || validation_->empty() || cfg_.monitor_episodes < 1) return std::nullopt;
  const auto& index = validation_->class_index();
  if (index.size() < 2) return std::nullopt;
  std::size_t smallest = SIZE_MAX;
  for (const auto& [cls, ids] : index) smallest = std::min(smallest, ids.size());
  if (smallest < 2) return std::nullopt;
  EvalConfig ec;
  ec.way = std::min(cfg_.episode.n_classes, static_cast<int>(index.size()));
  ec.shot = 1;
  ec.queries_per_class = static_cast<int>(std::min<std::size_t>(15, smallest - 1));
  ec.episodes = cfg_.monitor_episodes;
  ec.n_positive = cfg_.mining.n_positive;
  ec.seed = cfg_.seed + static_cast<std::uint64_t>(episode_);
  ec.rule = cfg_.loss_kind == LossKind::prototypical ? InferenceRule::nearest_prototype
                                                     : InferenceRule::nearest_neighbors;
  return evaluate(net_, *validation_, ec).mean;
}

void Trainer::run(int n_episodes) {
  for (int i = 0; i < n_episodes && !done(); ++i) step();
}

void Trainer::run_to_end() {
  while (!done()) step();
}

nlohmann::json Trainer::checkpoint() const {
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"network", net_to_json(net_)},
          {"episode", episode_},
          {"loss_kind", to_string(cfg_.loss_kind)},
          {"config", cfg_},
          {"adam", {{"m", to_vector(adam_.m)}, {"v", to_vector(adam_.v)}, {"t", adam_.t}}},
          {"rng", rng_state(rng_)}};
}

namespace {

void check_checkpoint(const nlohmann::json& ck) {
  if (!ck.is_object() || ck.value("format", std::string()) != kCheckpointFormat) {
    throw ConfigError("not an ETM checkpoint");
  }
  if (ck.value("version", 0) != kCheckpointVersion) {
    throw ConfigError("unsupported checkpoint version");
  }
  for (const char* key : {"network", "episode", "config", "adam", "rng"}) {
    if (!ck.contains(key)) throw ConfigError(std::string("checkpoint is missing '") + key + "'");
  }
}

}  // namespace

Trainer Trainer::resume(const Dataset& labeled, const Dataset& unlabeled,
                        const nlohmann::json& checkpoint, const Dataset* validation) {
  check_checkpoint(checkpoint);
  Trainer t(labeled, unlabeled, checkpoint.at("config").get<TrainConfig>(), validation);
  EmbeddingNet net = net_from_json(checkpoint.at("network"));
  if (net.layer_dims() != t.net_.layer_dims()) {
    throw ConfigError("checkpoint network shape does not match the data and config");
  }
  t.net_ = std::move(net);
  const auto& adam = checkpoint.at("adam");
  t.adam_.m = from_vector(adam.at("m").get<std::vector<double>>());
  t.adam_.v = from_vector(adam.at("v").get<std::vector<double>>());
  t.adam_.t = adam.at("t").get<std::int64_t>();
  if (static_cast<std::size_t>(t.adam_.m.size()) != t.net_.num_params() ||
      static_cast<std::size_t>(t.adam_.v.size()) != t.net_.num_params()) {
    throw ConfigError("checkpoint optimizer state does not match the network");
  }
  restore_rng_state(t.rng_, checkpoint.at("rng").get<std::string>());
  t.episode_ = checkpoint.at("episode").get<int>();
  return t;
}

TrainResult train(const Dataset& labeled, const Dataset& unlabeled, const TrainConfig& cfg,
                  const Dataset* validation) {
  Trainer t(labeled, unlabeled, cfg, validation);
  t.run_to_end();
  return {t.net(), t.log(), t.checkpoint()};
}

EmbeddingNet net_from_checkpoint(const nlohmann::json& checkpoint) {
  check_checkpoint(checkpoint);
  return net_from_json(checkpoint.at("network"));
}

TrainConfig config_from_checkpoint(const nlohmann::json& checkpoint) {
  check_checkpoint(checkpoint);
  return checkpoint.at("config").get<TrainConfig>();
}

}  // namespace etm
