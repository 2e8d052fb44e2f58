#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "smallnoise/nondegeneracy.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>

using namespace smallnoise;
using std::numbers::pi;

namespace {

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  int k = 0;
  for (double x : v) out(k++) = x;
  return out;
}

Minimizer only_minimizer(const VectorFieldSystem& sys, const TargetSpec& t) {
  auto set = enumerate_minimizers(sys, t);
  REQUIRE(set.minimizers.size() == 1);
  return set.minimizers.front();
}

double cosine_with_constant(const Mat& u, const Vec& direction) {
  Mat k = direction.replicate(1, u.cols());
  return std::abs((u.array() * k.array()).sum()) / (u.norm() * k.norm());
}

}  // namespace

TEST_CASE("malliavin covariance closed forms") {
  auto ou = make_builtin("ou1d", {{"alpha", 1.0}, {"beta", 0.5}, {"gamma", 1.0}});
  TargetSpec t{vec({2.0}), 1.0};
  auto mz = only_minimizer(*ou, t);
  Mat c = malliavin_covariance(*ou, mz);
  CHECK(c(0, 0) == doctest::Approx(std::exp(1.0) - 1.0).epsilon(1e-10));
  auto inv = check_invertibility(c);
  CHECK(inv.invertible);
  CHECK(inv.smallest_singular_value == doctest::Approx(std::exp(1.0) - 1.0).epsilon(1e-10));

  auto flat = make_builtin("flatmetric", {{"theta", 0.0}});
  auto fm = only_minimizer(*flat, {vec({1.0}), 1.0});
  CHECK((malliavin_covariance(*flat, fm) - Mat::Identity(2, 2)).norm() <= 1e-12);

  auto h = make_builtin("heisenberg", {});
  auto zero = enumerate_minimizers(*h, {vec({0, 0, 0}), 1.0}).minimizers.front();
  Mat c0 = malliavin_covariance(*h, zero);
  CHECK(std::abs(c0.determinant()) <= 1e-14);
  CHECK_FALSE(check_invertibility(c0).invertible);

  auto lv = make_builtin("langevin", {});
  auto lm = only_minimizer(*lv, {vec({1.0}), 1.0});
  Mat cl = malliavin_covariance(*lv, lm);
  Mat expect(2, 2);
  expect << 1.0 / 3.0, 0.5, 0.5, 1.0;
  CHECK((cl - expect).norm() <= 1e-12);
}

TEST_CASE("malliavin covariance is positive semidefinite") {
  auto h = make_builtin("heisenberg", {}, {0, 2});
  auto set = enumerate_minimizers(*h, {vec({1.0, 2.0}), 1.0});
  for (const auto& mz : set.minimizers) {
    Mat c = malliavin_covariance(*h, mz);
    CHECK((c - c.transpose()).norm() == 0.0);
    Eigen::SelfAdjointEigenSolver<Mat> eig(c);
    CHECK(eig.eigenvalues()(0) >= -1e-9 * eig.eigenvalues()(2));
    CHECK(check_invertibility(c).invertible);
  }
}

TEST_CASE("invertibility check") {
  Mat c = Mat::Zero(2, 2);
  c(0, 0) = 1.0;
  c(1, 1) = 1e-3;
  CHECK(check_invertibility(c).invertible);
  c(1, 1) = 1e-9;
  CHECK_FALSE(check_invertibility(c).invertible);
  c(0, 1) = 0.1;
  CHECK_THROWS_AS(check_invertibility(c), Error);
}

TEST_CASE("ellipticity witness") {
  auto flat = make_builtin("flatmetric", {{"theta", 0.6}});
  auto fm = only_minimizer(*flat, {vec({1.0}), 1.0});
  auto t = ellipticity_witness(*flat, fm.path);
  REQUIRE(t.has_value());
  CHECK(*t == 0.0);
  CHECK(check_invertibility(malliavin_covariance(*flat, fm)).invertible);

  auto lv = make_builtin("langevin", {});
  auto lm = only_minimizer(*lv, {vec({1.0}), 1.0});
  CHECK_FALSE(ellipticity_witness(*lv, lm.path).has_value());

  auto ou = make_builtin("ou1d", {{"gamma", 2.0}});
  auto om = only_minimizer(*ou, {vec({1.0}), 1.0});
  CHECK(ellipticity_witness(*ou, om.path) == std::optional<double>(0.0));
}

TEST_CASE("bracket rank") {
  auto lv = make_builtin("langevin", {});
  CHECK(hormander_rank(*lv, Vec::Zero(2), 2, true).rank == 2);
  CHECK(hormander_rank(*lv, Vec::Zero(2), 2, false).rank == 1);
  CHECK(hormander_rank(*lv, Vec::Zero(2), 1, true).rank == 1);
  auto h = make_builtin("heisenberg", {});
  for (double s : {0.0, 1.3, -2.0}) {
    CHECK(hormander_rank(*h, Vec::Constant(3, s), 2, false).rank == 3);
    CHECK(hormander_rank(*h, Vec::Constant(3, s), 1, false).rank == 2);
  }
  CHECK_THROWS_AS(hormander_rank(*h, Vec::Zero(3), 5, false), Error);
  // monotone in depth and in include_drift
  auto xz = make_builtin("heisenberg", {}, {0, 2});
  for (const auto& sys : {lv, h, xz}) {
    int previous = 0;
    for (int depth = 1; depth <= 4; ++depth) {
      int without = hormander_rank(*sys, Vec::Constant(sys->d(), 0.3), depth, false).rank;
      int with = hormander_rank(*sys, Vec::Constant(sys->d(), 0.3), depth, true).rank;
      CHECK(with >= without);
      CHECK(without >= previous);
      previous = without;
    }
  }
}

TEST_CASE("non-focality determinants") {
  auto lv = make_builtin("langevin", {});
  auto lm = only_minimizer(*lv, {vec({1.0}), 1.0});
  auto nf = nonfocality_matrix(*lv, lm);
  CHECK(std::abs(nf.det) == doctest::Approx(1.0 / 3.0).epsilon(1e-10));

  auto h = make_builtin("heisenberg", {}, {0, 2});
  auto set = enumerate_minimizers(*h, {vec({1.0, 2.0}), 1.0});
  REQUIRE(set.minimizers.size() == 2);
  for (const auto& mz : set.minimizers) {
    CHECK(nonfocality_matrix(*h, mz).det == doctest::Approx((16.0 / pi - 1.0) / 4.0).epsilon(1e-6));
  }

  auto flat = make_builtin("flatmetric", {{"theta", 1.0}});
  auto fm = only_minimizer(*flat, {vec({1.0}), 1.0});
  auto nff = nonfocality_matrix(*flat, fm);
  CHECK(std::abs(nff.det) <= 1e-10 * nff.scale);

  auto full = make_builtin("heisenberg", {});
  MultistartConfig cfg;
  cfg.low_discrepancy = 100;
  cfg.random = 100;
  auto point = enumerate_minimizers(*full, {vec({1.0, 0.0, (pi / 2 - 1) / 4}), 1.0}, cfg);
  REQUIRE(point.minimizers.size() == 1);
  CHECK(nonfocality_matrix(*full, point.minimizers[0]).det == doctest::Approx((pi - 4) / (pi * pi)).epsilon(1e-6));
}

TEST_CASE("non-focality matrix agrees with perturbed backward flows") {
  auto h = make_builtin("heisenberg", {}, {0, 2});
  auto set = enumerate_minimizers(*h, {vec({1.0, 2.0}), 1.0});
  const auto& mz = set.minimizers.front();
  auto nf = nonfocality_matrix(*h, mz);
  CotangentPoint end = mz.path.back();
  const double step = 1e-6;
  Mat fd(3, 3);
  for (int c = 0; c < 3; ++c) {
    CotangentPoint plus = end, minus = end;
    if (c == 0) {
      plus.x(2) += step;
      minus.x(2) -= step;
    } else {
      plus.p(c - 1) += step;
      minus.p(c - 1) -= step;
    }
    fd.col(c) = (flow(*h, plus, 1.0, Direction::Backward).front().x -
                 flow(*h, minus, 1.0, Direction::Backward).front().x) / (2 * step);
  }
  CHECK((fd - nf.matrix).norm() <= 1e-4 * nf.matrix.norm());
}

TEST_CASE("hessian oracle on the flat metric") {
  for (double theta : {0.5, 1.0}) {
    auto flat = make_builtin("flatmetric", {{"theta", theta}});
    TargetSpec t{vec({1.0}), 1.0};
    auto fm = only_minimizer(*flat, t);
    auto oracle = hessian_oracle(*flat, fm, t, 32);
    if (theta == 1.0) {
      CHECK(std::abs(oracle.min_eig) < 1e-3);
      CHECK(cosine_with_constant(oracle.null_direction, vec({0.0, 1.0})) > 0.99);
    } else {
      CHECK(oracle.min_eig == doctest::Approx(1.0 - theta).epsilon(1e-3));
    }
  }
  auto lv = make_builtin("langevin", {});
  TargetSpec t{vec({1.0}), 1.0};
  auto lm = only_minimizer(*lv, t);
  CHECK(hessian_oracle(*lv, lm, t, 32).min_eig > 0.1);
}

TEST_CASE("nd verdicts") {
  auto lv = make_builtin("langevin", {});
  TargetSpec t{vec({1.0}), 1.0};
  auto report = assemble_nd_report(*lv, enumerate_minimizers(*lv, t), t);
  CHECK(report.verdict == Verdict::NdHolds);

  auto h = make_builtin("heisenberg", {});
  TargetSpec origin{vec({0, 0, 0}), 1.0};
  CHECK(assemble_nd_report(*h, enumerate_minimizers(*h, origin), origin).verdict ==
        Verdict::SingularMalliavin);

  auto xz = make_builtin("heisenberg", {}, {0, 2});
  const double z = 2.0;
  TargetSpec boundary{vec({std::sqrt(8 * z / pi), z}), 1.0};
  auto focal = assemble_nd_report(*xz, enumerate_minimizers(*xz, boundary), boundary);
  CHECK(focal.verdict == Verdict::Focal);

  auto levy = make_builtin("heisenberg", {}, {2});
  TargetSpec area{vec({1.0}), 1.0};
  CHECK(assemble_nd_report(*levy, enumerate_minimizers(*levy, area), area).verdict == Verdict::Continuum);
  CHECK(to_string(Verdict::SingularMalliavin) == "SINGULAR_MALLIAVIN");
}

TEST_CASE("determinant test and hessian oracle agree across the theta grid") {
  NdOptions opts;
  opts.hessian_oracle = true;
  opts.hessian_grid = 32;
  for (int k = 0; k <= 10; ++k) {
    const double theta = 0.1 * k;
    auto flat = make_builtin("flatmetric", {{"theta", theta}});
    TargetSpec t{vec({1.0}), 1.0};
    auto report = assemble_nd_report(*flat, enumerate_minimizers(*flat, t), t, opts);
    REQUIRE(report.records.size() == 1);
    const auto& rec = report.records.front();
    REQUIRE(rec.hessian.has_value());
    bool nonfocal = std::abs(rec.nonfocality.det) > rec.focal_threshold;
    bool positive = rec.hessian->min_eig > opts.thresholds.tol_eig;
    CHECK(nonfocal == positive);
    CHECK((report.verdict == Verdict::NdHolds) == (k < 10));
  }
}
