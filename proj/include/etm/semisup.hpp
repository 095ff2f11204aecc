#pragma once

#include "etm/dataset.hpp"
#include "etm/episodic.hpp"

#include <Eigen/Dense>

#include <vector>

namespace etm {

struct PseudoLabel {
  SampleId id = 0;
  ClassId cls = 0;
  double confidence = 0.0;  // mean distance to the voters of `cls`; diagnostics only
};

using PseudoLabeledSet = std::vector<PseudoLabel>;

/// Labels every unlabeled embedding with the evaluator's top-n_P vote against
/// the support set. `unlabeled_ids` names the rows of `unlabeled`.
PseudoLabeledSet pseudo_label(const Eigen::MatrixXd& unlabeled,
                              const std::vector<SampleId>& unlabeled_ids,
                              const Eigen::MatrixXd& support,
                              const std::vector<ClassId>& support_labels, int n_positive);

/// Original support first, then the pseudo-labeled entries in order.
std::vector<LabeledRef> augment_support(const std::vector<LabeledRef>& support,
                                        const PseudoLabeledSet& pseudo);

}  // namespace etm
