#pragma once

#include "etm/dataset.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <utility>
#include <vector>

namespace etm {

struct MiningConfig {
  int n_positive = 3;   // farthest positives averaged
  int n_negative = 5;   // nearest negatives averaged
  double margin = 0.3;

  void validate() const;
};

void to_json(nlohmann::json& j, const MiningConfig& c);
void from_json(const nlohmann::json& j, MiningConfig& c);

/// Query-vs-support Euclidean distances: rows are queries, columns supports.
using DistanceMatrix = Eigen::MatrixXd;

/// Mining outcome for one query (anchor).
struct QueryMining {
  double d_pos = 0.0;
  double d_neg = 0.0;
  double loss = 0.0;                  // max(d_pos - d_neg + margin, 0)
  std::vector<Eigen::Index> positives;  // selected support columns
  std::vector<Eigen::Index> negatives;

  bool active() const { return loss > 0.0; }
};

/// Plain (non-squared) Euclidean distance between every query and support row.
DistanceMatrix distance_matrix(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& support);

/// Semi-hard selection per query: d_pos averages the min(n_P, #pos) largest
/// same-class distances, d_neg the min(n_N, #neg) smallest other-class
/// distances. Ties at the selection boundary go to the lower column.
std::vector<QueryMining> mine(const DistanceMatrix& distances,
                              const std::vector<ClassId>& query_labels,
                              const std::vector<ClassId>& support_labels,
                              const MiningConfig& cfg);

/// Sum of the per-query hinge losses.
double episode_loss(const std::vector<QueryMining>& results);

struct EmbeddingGrads {
  Eigen::MatrixXd queries;
  Eigen::MatrixXd support;
};

/// Gradient of episode_loss with respect to every query and support
/// embedding, holding the selected columns fixed. Pairs closer than 1e-12
/// contribute nothing.
EmbeddingGrads loss_grad_embeddings(const Eigen::MatrixXd& queries,
                                    const Eigen::MatrixXd& support,
                                    const std::vector<QueryMining>& results,
                                    const MiningConfig& cfg);

}  // namespace etm
