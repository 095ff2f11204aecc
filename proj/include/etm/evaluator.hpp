#pragma once

#include "etm/dataset.hpp"
#include "etm/embedder.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace etm {

/// Outcome of the top-n_P neighbour vote for one query.
struct Vote {
  ClassId cls = 0;
  int votes = 0;
  double mean_distance = 0.0;            // over the winning class's voters
  std::vector<Eigen::Index> neighbors;   // the k nearest support columns
};

/// Majority vote among the min(n_P, |support|) nearest columns of one
/// distance row. Vote ties go to the smaller mean voter distance, then to the
/// lower class id.
Vote vote_nearest(const Eigen::Ref<const Eigen::RowVectorXd>& distances,
                  const std::vector<ClassId>& support_labels, int n_positive);

ClassId infer(const Eigen::Ref<const Eigen::RowVectorXd>& query, const Eigen::MatrixXd& support,
              const std::vector<ClassId>& support_labels, int n_positive);

std::vector<ClassId> infer_all(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& support,
                               const std::vector<ClassId>& support_labels, int n_positive);

enum class InferenceRule { nearest_neighbors, nearest_prototype };

std::string to_string(InferenceRule rule);
InferenceRule inference_rule_from_string(const std::string& name);

struct EvalConfig {
  int way = 5;
  int shot = 1;
  int queries_per_class = 15;
  int episodes = 1000;
  int n_positive = 3;
  std::uint64_t seed = 0;
  int threads = 1;
  InferenceRule rule = InferenceRule::nearest_neighbors;

  void validate() const;
};

void to_json(nlohmann::json& j, const EvalConfig& c);

struct EvalReport {
  EvalConfig config;
  std::vector<double> accuracies;  // per episode
  double mean = 0.0;
  double ci95 = 0.0;  // half-width, 1.96 * sample std / sqrt(episodes)
};

/// Mean and 95% normal-approximation half-width of per-episode accuracies.
void summarize(EvalReport& report);

/// Runs cfg.episodes seeded episodes (episode i uses seed + i) over the
/// classes of `test`. The result does not depend on cfg.threads.
EvalReport evaluate(const EmbeddingNet& net, const Dataset& test, const EvalConfig& cfg);

nlohmann::json report_to_json(const EvalReport& report);
std::string report_episodes_csv(const EvalReport& report);

}  // namespace etm
