#include "etm/errors.hpp"
#include "etm/trainer.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace etm;

namespace {

struct Data {
  Dataset full;
  SplitResult parts;
};

Data small_data(double labeled_fraction, std::uint64_t seed = 0) {
  SyntheticSpec s;
  s.num_classes = 8;
  s.samples_per_class = 20;
  s.feature_dim = 6;
  s.class_mean_scale = 2.0;
  s.noise_sigma = 1.0;
  s.seed = seed;
  Data d;
  d.full = generate_synthetic(s);
  d.parts = split(d.full, SplitSpec{{1, 2, 3, 4, 5, 6}, {7, 8}, {}, labeled_fraction}, 1);
  return d;
}

TrainConfig small_config() {
  TrainConfig c;
  c.episodes = 40;
  c.hidden_dims = {12};
  c.embedding_dim = 8;
  c.episode = EpisodeConfig{4, 3, 3, 0, UnlabeledMode::none};
  c.warmup_supervised_episodes = 5;
  c.monitor_every = 0;
  c.record_timing = false;
  c.seed = 17;
  return c;
}

}  // namespace

TEST_CASE("learning rate halves every period") {
  TrainConfig c;
  CHECK(lr_at(0, c) == 1e-3);
  CHECK(lr_at(999, c) == 1e-3);
  CHECK(lr_at(1000, c) == 5e-4);
  CHECK(lr_at(2000, c) == 2.5e-4);
  CHECK(lr_at(3500, c) == 1.25e-4);
}

TEST_CASE("config validation and JSON round-trip") {
  TrainConfig c = small_config();
  c.validate();
  const nlohmann::json j = c;
  const TrainConfig back = j.get<TrainConfig>();
  CHECK(nlohmann::json(back) == j);
  CHECK(c.layer_dims(6) == std::vector<int>{6, 12, 8});
  TrainConfig bad = c;
  bad.lr0 = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.episode.unlabeled_mode = UnlabeledMode::weakly_labeled;
  bad.episode.n_unlabeled = 1;
  bad.warmup_supervised_episodes = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("Adam leaves parameters alone under a zero gradient") {
  EmbeddingNet net = EmbeddingNet::init({3, 4, 2}, 1);
  const EmbeddingNet before = net;
  AdamState st = AdamState::zeros_like(net);
  Gradients g = Gradients::zeros_like(net);
  for (int i = 0; i < 5; ++i) adam_step(net, g, st, 1e-3);
  CHECK(net == before);
  CHECK(st.t == 5);
}

TEST_CASE("first Adam step moves each parameter by about lr against the gradient sign") {
  EmbeddingNet net = EmbeddingNet::init({2, 2}, 3);
  const Eigen::VectorXd before = net.flat_params();
  AdamState st = AdamState::zeros_like(net);
  Gradients g = Gradients::zeros_like(net);
  g.weights[0] << 1.0, -2.0, 0.5, 3.0;
  g.biases[0] << -1.0, 4.0;
  adam_step(net, g, st, 1e-3);
  const Eigen::VectorXd delta = net.flat_params() - before;
  const Eigen::VectorXd flat = g.flatten();
  for (Eigen::Index i = 0; i < delta.size(); ++i) {
    // m_hat = g, v_hat = g^2, so delta = -lr * g / (|g| + eps).
    const double expected = -1e-3 * flat(i) / (std::abs(flat(i)) + 1e-8);
    CHECK(delta(i) == doctest::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("Adam rejects non-finite gradients") {
  EmbeddingNet net = EmbeddingNet::init({2, 2}, 3);
  AdamState st = AdamState::zeros_like(net);
  Gradients g = Gradients::zeros_like(net);
  g.biases[0](1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(adam_step(net, g, st, 1e-3), TrainingError);
}

TEST_CASE("training is deterministic in the seed") {
  const Data d = small_data(1.0);
  const TrainResult a = train(d.parts.train_labeled, d.parts.train_unlabeled, small_config());
  const TrainResult b = train(d.parts.train_labeled, d.parts.train_unlabeled, small_config());
  CHECK(a.net == b.net);
  CHECK(log_to_jsonl(a.log) == log_to_jsonl(b.log));
  CHECK(a.checkpoint.dump() == b.checkpoint.dump());
  TrainConfig other = small_config();
  other.seed = 18;
  CHECK_FALSE(train(d.parts.train_labeled, d.parts.train_unlabeled, other).net == a.net);
}

TEST_CASE("N_R = 0 in a semi-supervised mode equals supervised training") {
  const Data d = small_data(0.5);
  TrainConfig sup = small_config();
  TrainConfig zero = small_config();
  zero.episode.unlabeled_mode = UnlabeledMode::weakly_labeled;
  zero.episode.n_unlabeled = 0;
  const TrainResult a = train(d.parts.train_labeled, d.parts.train_unlabeled, sup);
  const TrainResult b = train(d.parts.train_labeled, d.parts.train_unlabeled, zero);
  CHECK(a.net == b.net);
  CHECK(log_to_jsonl(a.log) == log_to_jsonl(b.log));
}

TEST_CASE("warm-up episodes never pseudo-label") {
  const Data d = small_data(0.5);
  TrainConfig c = small_config();
  c.episodes = 12;
  c.warmup_supervised_episodes = 5;
  c.episode.unlabeled_mode = UnlabeledMode::weakly_labeled;
  c.episode.n_unlabeled = 2;
  const TrainResult r = train(d.parts.train_labeled, d.parts.train_unlabeled, c);
  for (const auto& e : r.log) {
    CHECK(e.pseudo_labeled == (e.episode >= 5));
    CHECK(e.n_support_effective == (e.episode >= 5 ? 4 * (3 + 2) : 4 * 3));
  }
}

TEST_CASE("training lowers the episode loss") {
  const Data d = small_data(1.0);
  TrainConfig c = small_config();
  c.episodes = 300;
  c.lr0 = 3e-3;
  const TrainResult r = train(d.parts.train_labeled, d.parts.train_unlabeled, c);
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 50; ++i) {
    first += r.log[static_cast<std::size_t>(i)].loss;
    last += r.log[r.log.size() - 1 - static_cast<std::size_t>(i)].loss;
  }
  CHECK(last < first);
}

TEST_CASE("prototypical loss trains too") {
  const Data d = small_data(1.0);
  TrainConfig c = small_config();
  c.loss_kind = LossKind::prototypical;
  c.episodes = 200;
  const TrainResult r = train(d.parts.train_labeled, d.parts.train_unlabeled, c);
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 40; ++i) {
    first += r.log[static_cast<std::size_t>(i)].loss;
    last += r.log[r.log.size() - 1 - static_cast<std::size_t>(i)].loss;
  }
  CHECK(last < first);
}

TEST_CASE("resuming from a checkpoint reproduces an uninterrupted run") {
  const Data d = small_data(0.5);
  TrainConfig c = small_config();
  c.episode.unlabeled_mode = UnlabeledMode::weakly_labeled;
  c.episode.n_unlabeled = 2;
  const TrainResult whole = train(d.parts.train_labeled, d.parts.train_unlabeled, c);

  Trainer first(d.parts.train_labeled, d.parts.train_unlabeled, c);
  first.run(17);
  const std::string saved = first.checkpoint().dump();
  Trainer second = Trainer::resume(d.parts.train_labeled, d.parts.train_unlabeled,
                                   nlohmann::json::parse(saved));
  CHECK(second.episode() == 17);
  second.run_to_end();
  CHECK(second.net() == whole.net);
  CHECK(second.checkpoint().dump() == whole.checkpoint.dump());
  std::vector<TrainLogEntry> joined = first.log();
  joined.insert(joined.end(), second.log().begin(), second.log().end());
  CHECK(log_to_jsonl(joined) == log_to_jsonl(whole.log));
}

TEST_CASE("checkpoint helpers and malformed checkpoints") {
  const Data d = small_data(1.0);
  TrainConfig c = small_config();
  c.episodes = 3;
  const TrainResult r = train(d.parts.train_labeled, d.parts.train_unlabeled, c);
  CHECK(net_from_checkpoint(r.checkpoint) == r.net);
  CHECK(nlohmann::json(config_from_checkpoint(r.checkpoint)) == nlohmann::json(c));
  nlohmann::json broken = r.checkpoint;
  broken["format"] = "something-else";
  CHECK_THROWS_AS(Trainer::resume(d.parts.train_labeled, d.parts.train_unlabeled, broken),
                  ConfigError);
}

TEST_CASE("validation monitor records accuracy") {
  const Data d = small_data(1.0);
  TrainConfig c = small_config();
  c.episodes = 10;
  c.monitor_every = 5;
  c.monitor_episodes = 4;
  const TrainResult r = train(d.parts.train_labeled, d.parts.train_unlabeled, c, &d.parts.val);
  for (const auto& e : r.log) {
    CHECK(e.val_accuracy.has_value() == ((e.episode + 1) % 5 == 0));
    if (e.val_accuracy) {
      CHECK(*e.val_accuracy >= 0.0);
      CHECK(*e.val_accuracy <= 1.0);
    }
  }
}

TEST_CASE("a diverging run is a training error") {
  const Data d = small_data(1.0);
  TrainConfig c = small_config();
  c.lr0 = 1e300;
  c.episodes = 30;
  CHECK_THROWS_AS(train(d.parts.train_labeled, d.parts.train_unlabeled, c), TrainingError);
}
