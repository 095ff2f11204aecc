#include "etm/evaluator.hpp"

#include "etm/episodic.hpp"
#include "etm/errors.hpp"
#include "etm/mining.hpp"
#include "etm/protobaseline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <thread>

namespace etm {

Vote vote_nearest(const Eigen::Ref<const Eigen::RowVectorXd>& distances,
                  const std::vector<ClassId>& support_labels, int n_positive) {
  if (support_labels.empty()) throw ConfigError("inference needs a non-empty support set");
  if (static_cast<std::size_t>(distances.size()) != support_labels.size()) {
    throw ShapeError("distance row and support labels differ in length");
  }
  if (n_positive < 1) throw ConfigError("n_P must be >= 1");
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(n_positive), support_labels.size());
  std::vector<Eigen::Index> order(support_labels.size());
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](Eigen::Index a, Eigen::Index b) {
                      return distances(a) < distances(b) || (distances(a) == distances(b) && a < b);
                    });
  order.resize(k);

  struct Tally {
    int votes = 0;
    double sum = 0.0;
  };
  std::map<ClassId, Tally> tally;  // ascending class id
  for (Eigen::Index j : order) {
    Tally& t = tally[support_labels[static_cast<std::size_t>(j)]];
    ++t.votes;
    t.sum += distances(j);
  }
  Vote best;
  bool have = false;
  for (const auto& [cls, t] : tally) {
    const double mean = t.sum / t.votes;
    if (!have || t.votes > best.votes || (t.votes == best.votes && mean < best.mean_distance)) {
      best.cls = cls;
      best.votes = t.votes;
      best.mean_distance = mean;
      have = true;
    }
  }
  best.neighbors = std::move(order);
  return best;
}

ClassId infer(const Eigen::Ref<const Eigen::RowVectorXd>& query, const Eigen::MatrixXd& support,
              const std::vector<ClassId>& support_labels, int n_positive) {
  const DistanceMatrix d = distance_matrix(Eigen::MatrixXd(query), support);
  return vote_nearest(d.row(0), support_labels, n_positive).cls;
}

std::vector<ClassId> infer_all(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& support,
                               const std::vector<ClassId>& support_labels, int n_positive) {
  const DistanceMatrix d = distance_matrix(queries, support);
  std::vector<ClassId> out;
  out.reserve(static_cast<std::size_t>(queries.rows()));
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    out.push_back(vote_nearest(d.row(i), support_labels, n_positive).cls);
  }
  return out;
}

std::string to_string(InferenceRule rule) {
  return rule == InferenceRule::nearest_prototype ? "nearest_prototype" : "nearest_neighbors";
}

InferenceRule inference_rule_from_string(const std::string& name) {
  if (name == "nearest_neighbors" || name == "knn") return InferenceRule::nearest_neighbors;
  if (name == "nearest_prototype" || name == "proto") return InferenceRule::nearest_prototype;
  throw ConfigError("unknown inference rule '" + name + "'");
}

void EvalConfig::validate() const {
  if (way < 2) throw ConfigError("way must be >= 2");
  if (shot < 1) throw ConfigError("shot must be >= 1");
  if (queries_per_class < 1) throw ConfigError("queries per class must be >= 1");
  if (episodes < 1) throw ConfigError("episodes must be >= 1");
  if (n_positive < 1) throw ConfigError("n_P must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

void to_json(nlohmann::json& j, const EvalConfig& c) {
  j = {{"way", c.way},
       {"shot", c.shot},
       {"queries_per_class", c.queries_per_class},
       {"episodes", c.episodes},
       {"n_positive", c.n_positive},
       {"seed", c.seed},
       {"rule", to_string(c.rule)}};
}

void summarize(EvalReport& report) {
  const auto& acc = report.accuracies;
  if (acc.empty()) {
    report.mean = 0.0;
    report.ci95 = 0.0;
    return;
  }
  const double n = static_cast<double>(acc.size());
  report.mean = std::accumulate(acc.begin(), acc.end(), 0.0) / n;
  double ss = 0.0;
  for (double a : acc) ss += (a - report.mean) * (a - report.mean);
  const double stddev = acc.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  report.ci95 = 1.96 * stddev / std::sqrt(n);
}

namespace {

double run_episode(const EmbeddingNet& net, const Dataset& test, const EvalConfig& cfg,
                   const EpisodeConfig& ep_cfg, std::uint64_t seed) {
  Rng rng(seed);
  const Episode ep = sample_episode(test, Dataset{}, ep_cfg, rng);
  const Eigen::MatrixXd e_s = embed(net, test.gather(ids_of(ep.support)));
  const Eigen::MatrixXd e_q = embed(net, test.gather(ids_of(ep.query)));
  const std::vector<ClassId> s_labels = labels_of(ep.support);
  const std::vector<ClassId> predicted =
      cfg.rule == InferenceRule::nearest_prototype
          ? proto_infer(e_q, prototypes(e_s, s_labels))
          : infer_all(e_q, e_s, s_labels, cfg.n_positive);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] == ep.query[i].cls) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(predicted.size());
}

}  // namespace

EvalReport evaluate(const EmbeddingNet& net, const Dataset& test, const EvalConfig& cfg) {
  cfg.validate();
  if (test.feature_dim() != net.input_dim()) {
    throw ShapeError("test data has " + std::to_string(test.feature_dim()) +
                     " features, network expects " + std::to_string(net.input_dim()));
  }
  EpisodeConfig ep_cfg;
  ep_cfg.n_classes = cfg.way;
  ep_cfg.n_support = cfg.shot;
  ep_cfg.n_query = cfg.queries_per_class;
  try {
    check_episode_feasible(test, ep_cfg);
  } catch (const SamplingError& e) {
    throw ConfigError(std::string("test data cannot support this evaluation: ") + e.what());
  }

  EvalReport report;
  report.config = cfg;
  report.accuracies.assign(static_cast<std::size_t>(cfg.episodes), 0.0);
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t e = begin; e < report.accuracies.size(); e += stride) {
      report.accuracies[e] = run_episode(net, test, cfg, ep_cfg, cfg.seed + e);
    }
  };
  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(cfg.threads),
                                             report.accuracies.size());
  if (threads <= 1) {
    work(0, 1);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          work(t, threads);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& err : errors) {
      if (err) std::rethrow_exception(err);
    }
  }
  summarize(report);
  return report;
}

nlohmann::json report_to_json(const EvalReport& report) {
  return {{"config", report.config},
          {"seed", report.config.seed},
          {"mean_accuracy", report.mean},
          {"ci95", report.ci95},
          {"episode_accuracies", report.accuracies}};
}

std::string report_episodes_csv(const EvalReport& report) {
  std::string out = "episode,accuracy\n";
  for (std::size_t e = 0; e < report.accuracies.size(); ++e) {
    nlohmann::json v = report.accuracies[e];
    out += std::to_string(e) + "," + v.dump() + "\n";
  }
  return out;
}

}  // namespace etm
