#include "etm/protobaseline.hpp"

#include "etm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

namespace etm {

Eigen::Index Prototypes::row_of(ClassId cls) const {
  auto it = std::lower_bound(classes.begin(), classes.end(), cls);
  if (it == classes.end() || *it != cls) {
    throw ConfigError("no prototype for class " + std::to_string(cls));
  }
  return it - classes.begin();
}

Prototypes prototypes(const Eigen::MatrixXd& support, const std::vector<ClassId>& support_labels) {
  if (static_cast<std::size_t>(support.rows()) != support_labels.size()) {
    throw ShapeError("support rows and labels differ in length");
  }
  if (support_labels.empty()) throw ConfigError("cannot build prototypes from an empty support set");
  std::map<ClassId, int> counts;
  for (ClassId c : support_labels) ++counts[c];
  Prototypes p;
  for (const auto& [cls, n] : counts) {
    p.classes.push_back(cls);
    p.counts.push_back(n);
  }
  p.centers = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p.classes.size()), support.cols());
  for (std::size_t j = 0; j < support_labels.size(); ++j) {
    p.centers.row(p.row_of(support_labels[j])) += support.row(static_cast<Eigen::Index>(j));
  }
  for (std::size_t k = 0; k < p.classes.size(); ++k) {
    p.centers.row(static_cast<Eigen::Index>(k)) /= static_cast<double>(p.counts[k]);
  }
  return p;
}

ProtoLoss proto_loss(const Eigen::MatrixXd& queries, const std::vector<ClassId>& query_labels,
                     const Prototypes& protos) {
  if (static_cast<std::size_t>(queries.rows()) != query_labels.size()) {
    throw ShapeError("query rows and labels differ in length");
  }
  if (queries.rows() == 0) throw ConfigError("proto_loss needs at least one query");
  if (queries.cols() != protos.centers.cols()) throw ShapeError("embedding dimensions differ");
  const Eigen::Index n_q = queries.rows();
  const Eigen::Index n_k = protos.centers.rows();
  ProtoLoss out;
  out.grad_queries = Eigen::MatrixXd::Zero(n_q, queries.cols());
  out.grad_centers = Eigen::MatrixXd::Zero(n_k, queries.cols());
  const double inv_n = 1.0 / static_cast<double>(n_q);
  Eigen::VectorXd logits(n_k);
  for (Eigen::Index i = 0; i < n_q; ++i) {
    const Eigen::Index target = protos.row_of(query_labels[static_cast<std::size_t>(i)]);
    for (Eigen::Index k = 0; k < n_k; ++k) {
      logits[k] = -(queries.row(i) - protos.centers.row(k)).squaredNorm();
    }
    const double top = logits.maxCoeff();
    const Eigen::VectorXd e = (logits.array() - top).exp();
    const double z = e.sum();
    out.loss += (top + std::log(z) - logits[target]) * inv_n;
    // dL/dlogit_k = p_k - [k == target]; dlogit_k/dq = -2 (q - c_k).
    for (Eigen::Index k = 0; k < n_k; ++k) {
      const double coeff = (e[k] / z - (k == target ? 1.0 : 0.0)) * inv_n;
      const Eigen::RowVectorXd diff = queries.row(i) - protos.centers.row(k);
      out.grad_queries.row(i) -= 2.0 * coeff * diff;
      out.grad_centers.row(k) += 2.0 * coeff * diff;
    }
  }
  return out;
}

Eigen::MatrixXd support_grad_from_centers(const Prototypes& protos,
                                          const std::vector<ClassId>& support_labels,
                                          const Eigen::MatrixXd& grad_centers) {
  Eigen::MatrixXd g(static_cast<Eigen::Index>(support_labels.size()), grad_centers.cols());
  for (std::size_t j = 0; j < support_labels.size(); ++j) {
    const Eigen::Index k = protos.row_of(support_labels[j]);
    g.row(static_cast<Eigen::Index>(j)) =
        grad_centers.row(k) / static_cast<double>(protos.counts[static_cast<std::size_t>(k)]);
  }
  return g;
}

std::vector<ClassId> proto_infer(const Eigen::MatrixXd& queries, const Prototypes& protos) {
  if (queries.cols() != protos.centers.cols()) throw ShapeError("embedding dimensions differ");
  std::vector<ClassId> out;
  out.reserve(static_cast<std::size_t>(queries.rows()));
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    Eigen::Index best = 0;
    double best_d = (queries.row(i) - protos.centers.row(0)).squaredNorm();
    // Classes are ascending, so strict < keeps the lower id on ties.
    for (Eigen::Index k = 1; k < protos.centers.rows(); ++k) {
      const double d = (queries.row(i) - protos.centers.row(k)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    out.push_back(protos.classes[static_cast<std::size_t>(best)]);
  }
  return out;
}

}  // namespace etm
