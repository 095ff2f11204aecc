#include "etm/mining.hpp"

#include "etm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace etm {

namespace {

constexpr double kMinGradDistance = 1e-12;

double mean_of(const DistanceMatrix& d, Eigen::Index row, const std::vector<Eigen::Index>& cols) {
  double sum = 0.0;
  for (Eigen::Index c : cols) sum += d(row, c);
  return sum / static_cast<double>(cols.size());
}

}  // namespace

void MiningConfig::validate() const {
  if (n_positive < 1 || n_negative < 1) throw ConfigError("n_P and n_N must be >= 1");
  if (!(margin >= 0.0) || !std::isfinite(margin)) throw ConfigError("margin must be >= 0");
}

void to_json(nlohmann::json& j, const MiningConfig& c) {
  j = {{"n_positive", c.n_positive}, {"n_negative", c.n_negative}, {"margin", c.margin}};
}

void from_json(const nlohmann::json& j, MiningConfig& c) {
  c.n_positive = j.value("n_positive", c.n_positive);
  c.n_negative = j.value("n_negative", c.n_negative);
  c.margin = j.value("margin", c.margin);
}

DistanceMatrix distance_matrix(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& support) {
  if (queries.cols() != support.cols()) {
    throw ShapeError("query embeddings have dimension " + std::to_string(queries.cols()) +
                     ", support embeddings " + std::to_string(support.cols()));
  }
  DistanceMatrix d(queries.rows(), support.rows());
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    for (Eigen::Index j = 0; j < support.rows(); ++j) {
      d(i, j) = (queries.row(i) - support.row(j)).norm();
    }
  }
  return d;
}

std::vector<QueryMining> mine(const DistanceMatrix& distances,
                              const std::vector<ClassId>& query_labels,
                              const std::vector<ClassId>& support_labels,
                              const MiningConfig& cfg) {
  cfg.validate();
  if (static_cast<std::size_t>(distances.rows()) != query_labels.size() ||
      static_cast<std::size_t>(distances.cols()) != support_labels.size()) {
    throw ShapeError("distance matrix is " + std::to_string(distances.rows()) + " x " +
                     std::to_string(distances.cols()) + " but labels give " +
                     std::to_string(query_labels.size()) + " x " +
                     std::to_string(support_labels.size()));
  }
  std::vector<QueryMining> results(query_labels.size());
  std::vector<Eigen::Index> pos;
  std::vector<Eigen::Index> neg;
  for (Eigen::Index i = 0; i < distances.rows(); ++i) {
    pos.clear();
    neg.clear();
    const ClassId label = query_labels[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < distances.cols(); ++j) {
      (support_labels[static_cast<std::size_t>(j)] == label ? pos : neg).push_back(j);
    }
    if (pos.empty() || neg.empty()) {
      throw MiningError("query " + std::to_string(i) + " (class " + std::to_string(label) +
                        ") has " + std::to_string(pos.size()) + " positives and " +
                        std::to_string(neg.size()) + " negatives in the support set");
    }
    const auto k_pos = std::min<std::size_t>(static_cast<std::size_t>(cfg.n_positive), pos.size());
    const auto k_neg = std::min<std::size_t>(static_cast<std::size_t>(cfg.n_negative), neg.size());
    auto row = distances.row(i);
    std::partial_sort(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(k_pos), pos.end(),
                      [&](Eigen::Index a, Eigen::Index b) {
                        return row(a) > row(b) || (row(a) == row(b) && a < b);
                      });
    std::partial_sort(neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(k_neg), neg.end(),
                      [&](Eigen::Index a, Eigen::Index b) {
                        return row(a) < row(b) || (row(a) == row(b) && a < b);
                      });
    QueryMining& r = results[static_cast<std::size_t>(i)];
    r.positives.assign(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(k_pos));
    r.negatives.assign(neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(k_neg));
    r.d_pos = mean_of(distances, i, r.positives);
    r.d_neg = mean_of(distances, i, r.negatives);
    r.loss = std::max(r.d_pos - r.d_neg + cfg.margin, 0.0);
  }
  return results;
}

double episode_loss(const std::vector<QueryMining>& results) {
  double total = 0.0;
  for (const auto& r : results) total += r.loss;
  return total;
}

EmbeddingGrads loss_grad_embeddings(const Eigen::MatrixXd& queries,
                                    const Eigen::MatrixXd& support,
                                    const std::vector<QueryMining>& results,
                                    const MiningConfig& cfg) {
  cfg.validate();
  if (queries.cols() != support.cols()) throw ShapeError("embedding dimensions differ");
  if (results.size() != static_cast<std::size_t>(queries.rows())) {
    throw ConsistencyError("mining results cover " + std::to_string(results.size()) +
                           " queries, embeddings have " + std::to_string(queries.rows()));
  }
  EmbeddingGrads g{Eigen::MatrixXd::Zero(queries.rows(), queries.cols()),
                   Eigen::MatrixXd::Zero(support.rows(), support.cols())};
  Eigen::RowVectorXd diff(queries.cols());
  // Fixed query order keeps the support accumulation bit-reproducible.
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    const QueryMining& r = results[static_cast<std::size_t>(i)];
    if (r.positives.empty() || r.negatives.empty()) {
      throw ConsistencyError("mining result for query " + std::to_string(i) + " is empty");
    }
    double d_pos = 0.0;
    double d_neg = 0.0;
    for (auto cols : {&r.positives, &r.negatives}) {
      for (Eigen::Index c : *cols) {
        if (c < 0 || c >= support.rows()) {
          throw ConsistencyError("mining result references support column " + std::to_string(c));
        }
        (cols == &r.positives ? d_pos : d_neg) += (queries.row(i) - support.row(c)).norm();
      }
    }
    d_pos /= static_cast<double>(r.positives.size());
    d_neg /= static_cast<double>(r.negatives.size());
    const double tol = 1e-9 * std::max({1.0, std::abs(r.d_pos), std::abs(r.d_neg)});
    if (std::abs(d_pos - r.d_pos) > tol || std::abs(d_neg - r.d_neg) > tol) {
      throw ConsistencyError("mining result for query " + std::to_string(i) +
                             " does not match these embeddings");
    }
    if (!r.active()) continue;

    const double w_pos = 1.0 / static_cast<double>(r.positives.size());
    for (Eigen::Index c : r.positives) {
      diff = queries.row(i) - support.row(c);
      const double d = diff.norm();
      if (d < kMinGradDistance) continue;
      diff *= w_pos / d;
      g.queries.row(i) += diff;
      g.support.row(c) -= diff;
    }
    const double w_neg = 1.0 / static_cast<double>(r.negatives.size());
    for (Eigen::Index c : r.negatives) {
      diff = queries.row(i) - support.row(c);
      const double d = diff.norm();
      if (d < kMinGradDistance) continue;
      diff *= w_neg / d;
      g.queries.row(i) -= diff;
      g.support.row(c) += diff;
    }
  }
  return g;
}

}  // namespace etm
