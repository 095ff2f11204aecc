#include "etm/errors.hpp"
#include "etm/protobaseline.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace etm;

TEST_CASE("prototype is the class mean") {
  Eigen::MatrixXd s(3, 2);
  s << 0, 0, 2, 2, 5, -1;
  const Prototypes p = prototypes(s, {4, 4, 9});
  CHECK(p.classes == std::vector<ClassId>{4, 9});
  CHECK(p.centers.row(0) == Eigen::RowVector2d(1, 1));
  CHECK(p.centers.row(1) == Eigen::RowVector2d(5, -1));
  CHECK(p.counts == std::vector<int>{2, 1});
}

TEST_CASE("prototypes ignore support order") {
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd s = oracle::random_matrix(rng, 6, 3);
  const std::vector<ClassId> lab{1, 2, 1, 3, 2, 1};
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(6);
  perm.indices() << 5, 3, 1, 0, 4, 2;
  const Eigen::MatrixXd sp = perm * s;
  std::vector<ClassId> lp(6);
  for (int i = 0; i < 6; ++i) lp[static_cast<std::size_t>(perm.indices()[i])] = lab[static_cast<std::size_t>(i)];
  CHECK((prototypes(s, lab).centers - prototypes(sp, lp).centers).cwiseAbs().maxCoeff() < 1e-15);
  CHECK_THROWS_AS(prototypes(Eigen::MatrixXd(0, 3), {}), ConfigError);
}

TEST_CASE("symmetric query has loss log K") {
  Eigen::MatrixXd s(4, 2), q(1, 2);
  s << 1, 0, -1, 0, 0, 1, 0, -1;
  q << 0, 0;
  const ProtoLoss l = proto_loss(q, {2}, prototypes(s, {1, 2, 3, 4}));
  CHECK(l.loss == doctest::Approx(std::log(4.0)));
}

TEST_CASE("query on its prototype with distant rivals has near-zero loss") {
  Eigen::MatrixXd s(2, 2), q(1, 2);
  s << 0, 0, 100, 100;
  q << 0, 0;
  CHECK(proto_loss(q, {1}, prototypes(s, {1, 2})).loss < 1e-12);
  CHECK_THROWS_AS(proto_loss(q, {3}, prototypes(s, {1, 2})), ConfigError);
}

TEST_CASE("proto loss gradients match finite differences") {
  std::mt19937_64 rng(8);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::MatrixXd q = oracle::random_matrix(rng, 6, 3);
    const Eigen::MatrixXd s = oracle::random_matrix(rng, 6, 3);
    const std::vector<ClassId> sl{1, 1, 2, 2, 3, 3}, ql{1, 2, 3, 1, 2, 3};
    const Prototypes p = prototypes(s, sl);
    const ProtoLoss l = proto_loss(q, ql, p);
    Eigen::VectorXd qflat = Eigen::Map<const Eigen::VectorXd>(q.data(), q.size());
    auto fq = [&](const Eigen::VectorXd& x) {
      return proto_loss(Eigen::Map<const Eigen::MatrixXd>(x.data(), 6, 3), ql, p).loss;
    };
    const Eigen::VectorXd gq = oracle::central_diff(fq, qflat, 1e-6);
    worst = std::max(worst, oracle::max_rel_error(
                                Eigen::Map<const Eigen::VectorXd>(l.grad_queries.data(), 18), gq));

    Eigen::VectorXd sflat = Eigen::Map<const Eigen::VectorXd>(s.data(), s.size());
    auto fs = [&](const Eigen::VectorXd& x) {
      return proto_loss(q, ql, prototypes(Eigen::Map<const Eigen::MatrixXd>(x.data(), 6, 3), sl)).loss;
    };
    const Eigen::VectorXd gs = oracle::central_diff(fs, sflat, 1e-6);
    const Eigen::MatrixXd analytic_s = support_grad_from_centers(p, sl, l.grad_centers);
    worst = std::max(worst, oracle::max_rel_error(
                                Eigen::Map<const Eigen::VectorXd>(analytic_s.data(), 18), gs));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("nearest-prototype inference") {
  Eigen::MatrixXd c(1, 2), q(2, 2);
  c << 0, 0;
  q << 5, 5, -1, 2;
  const Prototypes one = prototypes(c, {7});
  CHECK(proto_infer(q, one) == std::vector<ClassId>{7, 7});

  Eigen::MatrixXd s(2, 1), at(1, 1), mid(1, 1);
  s << -1, 1;
  at << -1;
  mid << 0;
  const Prototypes two = prototypes(s, {3, 2});
  CHECK(proto_infer(at, two) == std::vector<ClassId>{3});
  CHECK(proto_infer(mid, two) == std::vector<ClassId>{2});
}

TEST_CASE("nearest-prototype inference matches a brute-force argmin") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::MatrixXd s = oracle::random_matrix(rng, 10, 4);
    const Eigen::MatrixXd q = oracle::random_matrix(rng, 8, 4);
    const std::vector<ClassId> sl{1, 2, 3, 4, 5, 1, 2, 3, 4, 5};
    const Prototypes p = prototypes(s, sl);
    const auto pred = proto_infer(q, p);
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
      int best = -1;
      double best_d = 1e300;
      for (int k = 1; k <= 5; ++k) {
        Eigen::RowVectorXd center = (s.row(k - 1) + s.row(k + 4)) / 2.0;
        const double d = (q.row(i) - center).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      CHECK(pred[static_cast<std::size_t>(i)] == best);
    }
  }
}

TEST_CASE("nearest-prototype prediction is translation invariant") {
  std::mt19937_64 rng(4);
  const Eigen::MatrixXd s = oracle::random_matrix(rng, 6, 3);
  const Eigen::MatrixXd q = oracle::random_matrix(rng, 9, 3);
  const std::vector<ClassId> sl{1, 2, 3, 1, 2, 3};
  const Eigen::RowVectorXd shift = oracle::random_matrix(rng, 1, 3) * 50.0;
  CHECK(proto_infer(q, prototypes(s, sl)) ==
        proto_infer(q.rowwise() + shift, prototypes(s.rowwise() + shift, sl)));
}
