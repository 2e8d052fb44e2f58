#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "smallnoise/bvp.hpp"

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

}  // namespace

TEST_CASE("shooting residuals at known solutions") {
  auto lv = make_builtin("langevin", {});
  CHECK(shoot_residual(*lv, {vec({1.0}), 1.0}, vec({3, 3})).residual.norm() <= 1e-9);

  auto h = make_builtin("heisenberg", {});
  CHECK(shoot_residual(*h, {vec({0, 0, 0}), 1.0}, Vec::Zero(3)).residual.norm() == 0.0);

  const double alpha = 1.0, beta = 0.5, gamma = 1.0, T = 1.0, y = 2.0;
  auto ou = make_builtin("ou1d", {{"alpha", alpha}, {"beta", beta}, {"gamma", gamma}});
  double sigma2 = gamma * gamma * (std::exp(2 * beta * T) - 1) / (2 * beta);
  double p0 = y / sigma2 * std::exp(beta * T);
  CHECK(std::abs(shoot_residual(*ou, {vec({y}), T}, vec({p0})).residual(0)) <= 1e-9);

  CHECK_THROWS_AS(shoot_residual(*lv, {vec({1.0, 2.0}), 1.0}, vec({3, 3})), Error);
  CHECK_THROWS_AS(shoot_residual(*lv, {vec({1.0}), 0.0}, vec({3, 3})), Error);
}

TEST_CASE("langevin: grid of guesses finds the unique solution") {
  auto lv = make_builtin("langevin", {});
  std::vector<Vec> guesses;
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) guesses.push_back(vec({-10.0 + 5.0 * i, -10.0 + 5.0 * j}));
  }
  auto sols = solve_bvp(*lv, {vec({1.0}), 1.0}, guesses);
  REQUIRE(sols.size() == 1);
  CHECK((sols[0].p0 - vec({3, 3})).norm() <= 1e-8);
  CHECK(sols[0].energy == doctest::Approx(1.5).epsilon(1e-10));
  CHECK(sols[0].residual <= 1e-9);
  CHECK(sols[0].residual_doubled <= 1e-9);
  CHECK(sols[0].q_T(0) == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(sols[0].z_T(0) == doctest::Approx(1.5).epsilon(1e-9));

  auto set = enumerate_minimizers(*lv, {vec({1.0}), 1.0});
  CHECK(set.minimizers.size() == 1);
  CHECK_FALSE(set.continuum_flag);
  // an explicit admissible control u = 2 costs 2 > 1.5
  CHECK(set.minimizers[0].energy <= 2.0);
}

TEST_CASE("heisenberg (x, z) marginal has two minimizers") {
  auto h = make_builtin("heisenberg", {}, {0, 2});
  MultistartConfig cfg;
  cfg.low_discrepancy = 100;
  cfg.random = 100;
  auto set = enumerate_minimizers(*h, {vec({1.0, 2.0}), 1.0}, cfg);
  REQUIRE(set.minimizers.size() == 2);
  CHECK_FALSE(set.continuum_flag);
  for (const auto& mz : set.minimizers) {
    CHECK(mz.energy == doctest::Approx(2 * pi).epsilon(1e-8));
    CHECK(std::abs(mz.path.ps(2, mz.path.steps())) <= 1e-9);  // transversality in y
  }
  // p0 = (p, q, r) in internal order (x, z, y): r = pi, q0 = -pi/2
  for (const auto& mz : set.minimizers) {
    CHECK(mz.p0(1) == doctest::Approx(pi).epsilon(1e-8));
    CHECK(mz.p0(2) == doctest::Approx(-pi / 2).epsilon(1e-8));
    CHECK(std::abs(mz.p0(0)) == doctest::Approx(std::sqrt(pi * (16 - pi) / 4)).epsilon(1e-8));
  }
  CHECK(set.minimizers[0].p0(0) == doctest::Approx(-set.minimizers[1].p0(0)).epsilon(1e-8));
}

TEST_CASE("flat metric: energy one half") {
  auto flat = make_builtin("flatmetric", {{"theta", 0.5}});
  auto set = enumerate_minimizers(*flat, {vec({1.0}), 1.0});
  REQUIRE(set.minimizers.size() == 1);
  CHECK(set.minimizers[0].energy == doctest::Approx(0.5).epsilon(1e-10));
}

TEST_CASE("heisenberg point target with r = pi/2") {
  auto h = make_builtin("heisenberg", {});
  const double z = (pi / 2 - 1) / 4;
  MultistartConfig cfg;
  cfg.low_discrepancy = 100;
  cfg.random = 100;
  auto set = enumerate_minimizers(*h, {vec({1.0, 0.0, z}), 1.0}, cfg);
  REQUIRE(set.minimizers.size() == 1);
  CHECK(set.minimizers[0].p0(2) == doctest::Approx(pi / 2).epsilon(1e-7));
  CHECK(set.minimizers[0].energy == doctest::Approx(pi * pi / 16).epsilon(1e-7));
}

TEST_CASE("continua of minimizers are flagged") {
  auto levy = make_builtin("heisenberg", {}, {2});
  auto set = enumerate_minimizers(*levy, {vec({1.0}), 1.0});
  CHECK(set.continuum_flag);
  CHECK(set.minimizers.size() > 8);
  for (const auto& mz : set.minimizers) CHECK(mz.energy == doctest::Approx(pi).epsilon(1e-6));

  auto h = make_builtin("heisenberg", {});
  auto loop = enumerate_minimizers(*h, {vec({0.0, 0.0, 0.5}), 1.0});
  CHECK(loop.continuum_flag);
  for (const auto& mz : loop.minimizers) CHECK(mz.energy == doctest::Approx(pi).epsilon(1e-6));
}

TEST_CASE("degenerate origin target") {
  auto h = make_builtin("heisenberg", {});
  auto set = enumerate_minimizers(*h, {vec({0.0, 0.0, 0.0}), 1.0});
  CHECK(set.degenerate_zero_control);
  REQUIRE(set.minimizers.size() == 1);
  CHECK(set.minimizers[0].energy == 0.0);
  CHECK(set.minimizers[0].p0.norm() == 0.0);
}

TEST_CASE("multistart is deterministic and schedule independent") {
  auto h = make_builtin("heisenberg", {}, {0, 2});
  MultistartConfig cfg;
  cfg.newton.jobs = 1;
  auto a = enumerate_minimizers(*h, {vec({1.0, 2.0}), 1.0}, cfg);
  cfg.newton.jobs = 3;
  auto b = enumerate_minimizers(*h, {vec({1.0, 2.0}), 1.0}, cfg);
  REQUIRE(a.solutions.size() == b.solutions.size());
  for (std::size_t i = 0; i < a.solutions.size(); ++i) {
    CHECK(a.solutions[i].p0 == b.solutions[i].p0);
    CHECK(a.solutions[i].energy == b.solutions[i].energy);
  }
  CHECK(a.stats.converged == b.stats.converged);
  auto g1 = multistart_guesses(*h, {vec({1.0, 2.0}), 1.0}, cfg);
  auto g2 = multistart_guesses(*h, {vec({1.0, 2.0}), 1.0}, cfg);
  CHECK(g1.size() == 128);
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("unreachable target reports no admissible control") {
  // sigma_1 = (1, 0) only moves the first coordinate; no drift
  PolynomialModelSpec s;
  s.d = 2;
  s.m = 1;
  s.l = 2;
  s.fields = {PolyField::zero(2, 2), PolyField({Polynomial::constant(2, 1.0), Polynomial(2)})};
  s.drift_eps = PolyField::zero(2, 2);
  s.x0 = Vec::Zero(2);
  s.x0_hat = Vec::Zero(2);
  auto sys = make_polynomial_system(s);
  MultistartConfig cfg;
  cfg.low_discrepancy = 8;
  cfg.random = 8;
  try {
    enumerate_minimizers(*sys, {vec({1.0, 1.0}), 1.0}, cfg);
    FAIL("expected failure");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NoAdmissibleControl);
  }
}
