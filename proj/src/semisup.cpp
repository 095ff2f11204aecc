#include "etm/semisup.hpp"

#include "etm/errors.hpp"
#include "etm/evaluator.hpp"
#include "etm/mining.hpp"

#include <set>
#include <unordered_set>

namespace etm {

PseudoLabeledSet pseudo_label(const Eigen::MatrixXd& unlabeled,
                              const std::vector<SampleId>& unlabeled_ids,
                              const Eigen::MatrixXd& support,
                              const std::vector<ClassId>& support_labels, int n_positive) {
  if (support.rows() == 0 || support_labels.empty()) {
    throw ConfigError("pseudo-labeling needs a non-empty support set");
  }
  if (static_cast<std::size_t>(unlabeled.rows()) != unlabeled_ids.size()) {
    throw ShapeError("unlabeled rows and ids differ in length");
  }
  if (std::set<ClassId>(support_labels.begin(), support_labels.end()).size() < 2) {
    throw ConfigError("pseudo-labeling needs support from at least 2 classes");
  }
  PseudoLabeledSet out;
  if (unlabeled.rows() == 0) return out;
  const DistanceMatrix d = distance_matrix(unlabeled, support);
  out.reserve(unlabeled_ids.size());
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    const Vote v = vote_nearest(d.row(i), support_labels, n_positive);
    out.push_back({unlabeled_ids[static_cast<std::size_t>(i)], v.cls, v.mean_distance});
  }
  return out;
}

std::vector<LabeledRef> augment_support(const std::vector<LabeledRef>& support,
                                        const PseudoLabeledSet& pseudo) {
  std::unordered_set<SampleId> ids;
  for (const auto& s : support) ids.insert(s.id);
  std::vector<LabeledRef> out = support;
  out.reserve(support.size() + pseudo.size());
  for (const auto& p : pseudo) {
    if (!ids.insert(p.id).second) {
      throw ConsistencyError("sample " + std::to_string(p.id) +
                             " appears both in the support set and the pseudo-labeled set");
    }
    out.push_back({p.id, p.cls});
  }
  return out;
}

}  // namespace etm
