#pragma once

#include "etm/dataset.hpp"

#include <Eigen/Dense>

#include <vector>

namespace etm {

/// Per-class mean of the support embeddings, classes in ascending id order.
struct Prototypes {
  std::vector<ClassId> classes;
  Eigen::MatrixXd centers;  // one row per entry of `classes`
  std::vector<int> counts;  // support samples behind each center

  Eigen::Index row_of(ClassId cls) const;
};

Prototypes prototypes(const Eigen::MatrixXd& support, const std::vector<ClassId>& support_labels);

struct ProtoLoss {
  double loss = 0.0;          // mean over queries
  Eigen::MatrixXd grad_queries;
  Eigen::MatrixXd grad_centers;
};

/// Cross-entropy of softmax(-||q - c_k||^2) at the true class, averaged over
/// queries, with exact gradients.
ProtoLoss proto_loss(const Eigen::MatrixXd& queries, const std::vector<ClassId>& query_labels,
                     const Prototypes& protos);

/// Spreads center gradients back onto the support rows that formed them.
Eigen::MatrixXd support_grad_from_centers(const Prototypes& protos,
                                          const std::vector<ClassId>& support_labels,
                                          const Eigen::MatrixXd& grad_centers);

/// Nearest prototype; ties go to the lower class id.
std::vector<ClassId> proto_infer(const Eigen::MatrixXd& queries, const Prototypes& protos);

}  // namespace etm
