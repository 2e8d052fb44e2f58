#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "smallnoise/expansion.hpp"

#include <algorithm>
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

// closed forms for dY = (eps*alpha + beta*Y) dt + eps*gamma dW, Y_0 = eps*yhat0
struct OuMoments {
  double sigma2;
  double mu;
};

OuMoments ou_moments(double alpha, double beta, double gamma, double yhat0, double T) {
  if (beta == 0.0) return {gamma * gamma * T, yhat0 + alpha * T};
  return {gamma * gamma * (std::exp(2 * beta * T) - 1) / (2 * beta),
          yhat0 * std::exp(beta * T) + alpha * (std::exp(beta * T) - 1) / beta};
}

}  // namespace

TEST_CASE("ou1d closed form") {
  auto ou = make_builtin("ou1d", {{"alpha", 1.0}, {"beta", 0.5}, {"gamma", 1.0}, {"yhat0", 0.3}});
  const double y = 2.0;
  auto [s2, mu] = ou_moments(1.0, 0.5, 1.0, 0.3, 1.0);
  CHECK(s2 == doctest::Approx(std::exp(1.0) - 1.0).epsilon(1e-15));

  auto r = expand(*ou, {vec({y}), 1.0});
  CHECK(r.l == 1);
  CHECK(r.certified);
  CHECK(r.c1 == doctest::Approx(y * y / (2 * s2)).epsilon(1e-6));
  CHECK(r.c2 == doctest::Approx(mu * y / s2).epsilon(1e-6));
  CHECK(r.lambda_grad(0) == doctest::Approx(y / s2).epsilon(1e-6));
  REQUIRE(r.per_minimizer.size() == 1);
  CHECK(r.per_minimizer[0].yhat_T(0) == doctest::Approx(mu).epsilon(1e-8));
  CHECK(r.gradient_agrees);
  CHECK(r.warnings.empty());
}

TEST_CASE("ou1d without mean reversion") {
  auto ou = make_builtin("ou1d", {{"gamma", 0.7}});
  for (double T : {0.5, 1.0, 2.0}) {
    auto level = lambda_at(*ou, {vec({1.3}), T});
    CHECK(level.lambda == doctest::Approx(1.3 * 1.3 / (2 * 0.49 * T)).epsilon(1e-8));
  }
}

TEST_CASE("langevin closed form") {
  const double yh = 0.2, zh = 0.1;
  auto lv = make_builtin("langevin", {{"yhat0", yh}, {"zhat0", zh}});
  for (double T : {1.0, 2.0}) {
    CAPTURE(T);
    auto r = expand(*lv, {vec({1.0}), T});
    const double c1 = 3.0 / (2.0 * T * T * T);
    const double mu = yh + zh * T;
    CHECK(r.certified);
    CHECK(r.c1 == doctest::Approx(c1).epsilon(1e-6));
    CHECK(r.c2 == doctest::Approx(2 * mu * c1).epsilon(1e-6));
    CHECK(r.per_minimizer[0].yhat_T(0) == doctest::Approx(mu).epsilon(1e-10));
    CHECK(r.nd_report.records[0].nonfocality.det ==
          doctest::Approx(T * T * T / 3.0).epsilon(1e-6));
    CHECK(r.gradient_agrees);
  }
  auto r = expand(*lv, {vec({1.0}), 1.0});
  CHECK(r.lambda_grad(0) == doctest::Approx(2 * r.c1).epsilon(1e-8));
}

TEST_CASE("energy scales quadratically for langevin") {
  auto lv = make_builtin("langevin", {});
  const double base = lambda_at(*lv, {vec({0.8}), 1.0}).lambda;
  for (double s : {0.5, 2.0}) {
    const double scaled = lambda_at(*lv, {vec({0.8 * s}), 1.0}).lambda;
    CHECK(scaled == doctest::Approx(s * s * base).epsilon(1e-6));
  }
}

TEST_CASE("heisenberg marginal with two minimizers") {
  const double yh = 0.3, zh = -0.2;
  auto h = make_builtin("heisenberg", {{"yhat0", yh}, {"zhat0", zh}}, {0, 2});
  auto r = expand(*h, {vec({1.0, 2.0}), 1.0});
  REQUIRE(r.minimizers.minimizers.size() == 2);
  CHECK(r.certified);
  CHECK(r.l == 2);
  CHECK(r.c1 == doctest::Approx(2 * pi).epsilon(1e-6));
  CHECK(std::abs(r.lambda_grad(0)) <= 1e-6);
  CHECK(r.lambda_grad(1) == doctest::Approx(pi).epsilon(1e-6));
  CHECK(r.gradient_agrees);
  CHECK(r.c2 == doctest::Approx(pi * (zh - yh / 2)).epsilon(1e-5));

  // the mirror-image minimizers contribute the same value
  for (const auto& c : r.per_minimizer) {
    CHECK(c.c2_contribution == doctest::Approx(r.c2).epsilon(1e-8));
  }
}

TEST_CASE("c2 takes the largest contribution") {
  // a start offset in x breaks the mirror symmetry of the two minimizers
  auto h = make_builtin("heisenberg", {{"xhat0", 0.3}, {"yhat0", 0.3}, {"zhat0", -0.2}}, {0, 2});
  ExpansionOptions opt;
  opt.gradient_check = false;
  auto r = expand(*h, {vec({1.0, 2.0}), 1.0}, opt);
  REQUIRE(r.per_minimizer.size() == 2);
  double lo = r.per_minimizer[0].c2_contribution, hi = r.per_minimizer[1].c2_contribution;
  if (lo > hi) std::swap(lo, hi);
  CHECK(lo < hi - 0.1);
  CHECK(r.c2 == hi);

  std::reverse(r.minimizers.minimizers.begin(), r.minimizers.minimizers.end());
  double again = -1e300;
  for (const auto& mz : r.minimizers.minimizers) {
    again = std::max(again, r.lambda_grad.dot(yhat_terminal(*h, mz)));
  }
  CHECK(again == doctest::Approx(r.c2).epsilon(1e-14));
}

TEST_CASE("heisenberg positive area target") {
  auto h = make_builtin("heisenberg", {}, {0, 2});
  auto r = expand(*h, {vec({1.0, -2.0}), 1.0});
  CHECK(r.lambda_grad(1) == doctest::Approx(-pi).epsilon(1e-6));
}

TEST_CASE("yhat vanishes without perturbation") {
  auto lv = make_builtin("langevin", {});
  auto set = enumerate_minimizers(*lv, {vec({1.0}), 1.0});
  Vec y = yhat_terminal(*lv, set.minimizers.front());
  CHECK(y(0) == 0.0);
}

TEST_CASE("yhat rejects a path from another system") {
  auto lv = make_builtin("langevin", {});
  auto ou = make_builtin("ou1d", {});
  auto set = enumerate_minimizers(*ou, {vec({1.0}), 1.0});
  CHECK_THROWS_AS(yhat_terminal(*lv, set.minimizers.front()), Error);
}

TEST_CASE("finite-difference gradient flags branch switches") {
  auto ou = make_builtin("ou1d", {{"beta", 0.5}});
  TargetSpec t{vec({1.0}), 1.0};
  auto set = enumerate_minimizers(*ou, t);
  FdGradientOptions opt;
  opt.delta = 1e-4;
  auto g = lambda_gradient_fd(*ou, t, set, opt);
  CHECK(g.value(0) == doctest::Approx(set.minimizers[0].q_T(0)).epsilon(1e-6));
  CHECK(g.branch_warnings.empty());

  opt.delta = 200.0;
  try {
    lambda_gradient_fd(*ou, t, set, opt);
    FAIL("expected a branch switch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::BranchSwitch);
  }
}

TEST_CASE("short-time mode") {
  auto flat = make_builtin("flatmetric", {{"theta", 0.0}});
  auto r = short_time(flat, vec({1.0}));
  CHECK(r.mode == ExpansionMode::ShortTime);
  CHECK(r.distance == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(r.c2 == 0.0);

  auto h = make_builtin("heisenberg", {{"yhat0", 0.4}, {"zhat0", 0.1}});
  const double x = 0.6, y = -0.8;
  auto p = short_time(h, vec({x, y, 0.0}));
  CHECK(p.distance * p.distance == doctest::Approx(x * x + y * y).epsilon(1e-6));
  CHECK(p.c2 == 0.0);
  for (const auto& c : p.per_minimizer) CHECK(c.yhat_T.isZero(0.0));
  CHECK(p.certified);

  // drift of the base model disappears after rescaling
  auto ou = make_builtin("ou1d", {{"alpha", 3.0}, {"beta", 1.0}, {"gamma", 2.0}, {"yhat0", 1.0}});
  auto q = short_time(ou, vec({1.0}));
  CHECK(q.c1 == doctest::Approx(1.0 / 8.0).epsilon(1e-8));
  CHECK(q.c2 == 0.0);
}

TEST_CASE("short-time levy area is a continuum") {
  auto h = make_builtin("heisenberg", {}, {2});
  ExpansionOptions opt;
  opt.gradient_check = false;
  auto r = short_time(h, vec({0.5}), opt);
  CHECK(r.nd_report.verdict == Verdict::Continuum);
  CHECK_FALSE(r.certified);
  CHECK(r.c1 == doctest::Approx(pi * 0.5).epsilon(1e-5));
  CHECK_FALSE(r.warnings.empty());
}

TEST_CASE("degenerate zero control") {
  auto h = make_builtin("heisenberg", {});
  auto r = expand(*h, {vec({0.0, 0.0, 0.0}), 1.0});
  CHECK(r.minimizers.degenerate_zero_control);
  CHECK(r.c1 == 0.0);
  CHECK(r.nd_report.verdict == Verdict::SingularMalliavin);
  CHECK(r.lambda_grad_fd.size() == 0);
}

TEST_CASE("plot data") {
  ExpansionResult r;
  r.c1 = 1.5;
  r.c2 = 0.9;
  r.l = 1;
  auto rows = plot_data(r, {0.5, 0.1});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].log_density == doctest::Approx(-6.0 + 1.8 + std::log(2.0)));
  CHECK(rows[1].log_density == doctest::Approx(-150.0 + 9.0 - std::log(0.1)));
  CHECK_THROWS_AS(plot_data(r, {0.0}), Error);
}
