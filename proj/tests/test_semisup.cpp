#include "etm/errors.hpp"
#include "etm/evaluator.hpp"
#include "etm/mining.hpp"
#include "etm/semisup.hpp"

#include <doctest.h>

using namespace etm;

TEST_CASE("pseudo-label picks the nearby cluster") {
  Eigen::MatrixXd s(4, 2), r(1, 2);
  s << 0, 0, 0, 1, 10, 10, 10, 11;
  r << 0.5, 0.5;
  const auto p = pseudo_label(r, {42}, s, {1, 1, 2, 2}, 3);
  REQUIRE(p.size() == 1);
  CHECK(p[0].id == 42);
  CHECK(p[0].cls == 1);
  CHECK(p[0].confidence == doctest::Approx(std::sqrt(0.5)));
}

TEST_CASE("coincident one-shot support point decides the label") {
  Eigen::MatrixXd s(3, 2), r(1, 2);
  s << 0, 0, 5, 5, -3, 2;
  r << 5, 5;
  CHECK(pseudo_label(r, {7}, s, {1, 3, 2}, 3)[0].cls == 3);
}

TEST_CASE("full tie goes to the lower class id") {
  Eigen::MatrixXd s(2, 1), r(1, 1);
  s << -1, 1;
  r << 0;
  CHECK(pseudo_label(r, {1}, s, {5, 2}, 2)[0].cls == 2);
  CHECK(pseudo_label(r, {1}, s, {2, 5}, 2)[0].cls == 2);
}

TEST_CASE("pseudo-label input validation") {
  Eigen::MatrixXd r(1, 2);
  r << 0, 0;
  CHECK_THROWS_AS(pseudo_label(r, {1}, Eigen::MatrixXd(0, 2), {}, 3), ConfigError);
  CHECK_THROWS_AS(pseudo_label(r, {1}, Eigen::MatrixXd::Zero(2, 2), {1, 1}, 3), ConfigError);
  CHECK(pseudo_label(Eigen::MatrixXd(0, 2), {}, Eigen::MatrixXd::Zero(2, 2), {1, 2}, 3).empty());
}

TEST_CASE("augment_support appends after the original support") {
  const std::vector<LabeledRef> support{{1, 1}, {2, 2}};
  CHECK(augment_support(support, {}) == support);
  const auto aug = augment_support(support, {{9, 2, 0.1}, {8, 1, 0.2}});
  CHECK(aug == std::vector<LabeledRef>{{1, 1}, {2, 2}, {9, 2}, {8, 1}});
  CHECK_THROWS_AS(augment_support(support, {{2, 1, 0.0}}), ConsistencyError);
}

TEST_CASE("one pseudo label per class grows every positive set by one") {
  std::vector<LabeledRef> support;
  SampleId id = 0;
  for (ClassId c = 1; c <= 5; ++c) {
    for (int k = 0; k < 20; ++k) support.push_back({id++, c});
  }
  PseudoLabeledSet pseudo;
  for (ClassId c = 1; c <= 5; ++c) pseudo.push_back({id++, c, 0.0});
  const auto aug = augment_support(support, pseudo);
  for (ClassId c = 1; c <= 5; ++c) {
    CHECK(std::count_if(aug.begin(), aug.end(), [c](const LabeledRef& r) { return r.cls == c; }) == 21);
  }
}

TEST_CASE("well separated clusters are pseudo-labeled perfectly") {
  SyntheticSpec spec;
  spec.num_classes = 6;
  spec.samples_per_class = 20;
  spec.feature_dim = 8;
  spec.noise_sigma = 0.01;
  spec.class_mean_scale = 10.0;
  const Dataset ds = generate_synthetic(spec);
  std::set<ClassId> all{1, 2, 3, 4, 5, 6};
  const SplitResult parts = split(ds, SplitSpec{all, {}, {}, 0.25}, 3);
  EpisodeConfig cfg{5, 3, 2, 4, UnlabeledMode::weakly_labeled};
  Rng rng(1);
  int total = 0, correct = 0;
  for (int e = 0; e < 50; ++e) {
    const Episode ep = sample_episode(parts.train_labeled, parts.train_unlabeled, cfg, rng);
    const auto pseudo =
        pseudo_label(parts.train_unlabeled.gather(ep.unlabeled), ep.unlabeled,
                     parts.train_labeled.gather(ids_of(ep.support)), labels_of(ep.support), 3);
    for (const auto& p : pseudo) {
      ++total;
      if (p.cls == *parts.train_unlabeled.hidden_label(p.id)) ++correct;
    }
  }
  CHECK(total == 50 * 20);
  CHECK(correct == total);
}

TEST_CASE("an empty unlabeled set leaves the mining loss unchanged") {
  Eigen::MatrixXd q(2, 2), s(4, 2);
  q << 0.1, 0.2, 3.0, 2.5;
  s << 0, 0, 0.3, 0.1, 3, 3, 2.5, 2;
  const std::vector<LabeledRef> support{{0, 1}, {1, 1}, {2, 2}, {3, 2}};
  const auto aug = augment_support(support, pseudo_label(Eigen::MatrixXd(0, 2), {}, s,
                                                         labels_of(support), 3));
  const MiningConfig cfg;
  CHECK(episode_loss(mine(distance_matrix(q, s), {1, 2}, labels_of(aug), cfg)) ==
        episode_loss(mine(distance_matrix(q, s), {1, 2}, labels_of(support), cfg)));
}
