#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "smallnoise/montecarlo.hpp"
#include "smallnoise/random.hpp"

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

struct Moments {
  double mean;
  double var;
};

Moments moments(const Mat& s) {
  const double mean = s.row(0).mean();
  const double var = (s.row(0).array() - mean).square().sum() / static_cast<double>(s.cols() - 1);
  return {mean, var};
}

// dY = (eps*alpha + beta*Y) dt + eps*gamma dW, Y_0 = eps*yhat0: Y_T ~ N(eps*mu, eps^2*sigma2)
struct Ou {
  double alpha, beta, gamma, yhat0;
  double sigma2(double T) const { return gamma * gamma * (std::exp(2 * beta * T) - 1) / (2 * beta); }
  double mu(double T) const { return yhat0 * std::exp(beta * T) + alpha * (std::exp(beta * T) - 1) / beta; }
  double log_density(double eps, double y, double T) const {
    const double v = eps * eps * sigma2(T);
    const double m = eps * mu(T);
    return -0.5 * std::log(2 * pi * v) - (y - m) * (y - m) / (2 * v);
  }
  SystemPtr system() const {
    return make_builtin("ou1d", {{"alpha", alpha}, {"beta", beta}, {"gamma", gamma}, {"yhat0", yhat0}});
  }
};

}  // namespace

TEST_CASE("ou1d endpoint moments") {
  Ou ou{1.0, 0.5, 1.0, 0.3};
  auto sys = ou.system();
  SimulationOptions opt;
  opt.eps = 0.3;
  opt.n_paths = 20000;
  opt.euler_steps = 200;
  auto sim = simulate(*sys, opt);
  CHECK(sim.censored_count == 0);
  auto [mean, var] = moments(sim.kept());
  const double n = opt.n_paths;
  const double v = 0.09 * ou.sigma2(1.0);
  CHECK(std::abs(mean - 0.3 * ou.mu(1.0)) < 3 * std::sqrt(v / n));
  CHECK(std::abs(var - v) < 3 * v * std::sqrt(2 / (n - 1)));
}

TEST_CASE("langevin endpoint variance") {
  auto sys = make_builtin("langevin", {});
  SimulationOptions opt;
  opt.eps = 0.5;
  opt.T = 1.5;
  opt.n_paths = 20000;
  opt.euler_steps = 400;
  auto [mean, var] = moments(simulate(*sys, opt).kept());
  const double v = 0.25 * std::pow(1.5, 3) / 3;
  CHECK(std::abs(mean) < 3 * std::sqrt(v / opt.n_paths));
  CHECK(std::abs(var - v) < 3 * v * std::sqrt(2.0 / (opt.n_paths - 1)));
}

TEST_CASE("noiseless limit follows the drift") {
  PolynomialModelSpec spec;
  spec.d = 1;
  spec.m = 1;
  spec.l = 1;
  spec.projection = {0};
  spec.fields = {PolyField({Polynomial::variable(1, 0, -1.0)}), PolyField({Polynomial::constant(1, 1.0)})};
  spec.drift_eps = PolyField::zero(1, 1);
  spec.x0 = vec({1.0});
  spec.x0_hat = vec({0.0});
  auto sys = make_polynomial_system(spec);
  SimulationOptions opt;
  opt.eps = 1e-9;
  opt.n_paths = 100;
  opt.euler_steps = 50;
  auto sim = simulate(*sys, opt);
  // Euler recursion of xdot = -x from x0 = 1
  const double flow = std::pow(1.0 - 1.0 / 50, 50);
  CHECK((sim.endpoints.array() - flow).abs().maxCoeff() < 1e-8);
}

TEST_CASE("simulation is reproducible and schedule independent") {
  auto sys = make_builtin("heisenberg", {{"zhat0", 0.5}}, {0, 2});
  SimulationOptions opt;
  opt.eps = 0.4;
  opt.n_paths = 3000;
  opt.euler_steps = 50;
  opt.jobs = 1;
  auto a = simulate(*sys, opt);
  opt.jobs = 4;
  auto b = simulate(*sys, opt);
  CHECK(a.endpoints == b.endpoints);
  CHECK(a.max_norm == b.max_norm);
  opt.seed += 1;
  auto c = simulate(*sys, opt);
  CHECK(a.endpoints != c.endpoints);
}

TEST_CASE("blown-up paths are censored") {
  PolynomialModelSpec spec;
  spec.d = 1;
  spec.m = 1;
  spec.l = 1;
  spec.projection = {0};
  // xdot = x^3 explodes before T from x0 = 1
  PolyField drift({Polynomial(1, {Term{{3}, 1.0}})});
  PolyField noise({Polynomial::constant(1, 1.0)});
  spec.fields = {drift, noise};
  spec.drift_eps = PolyField::zero(1, 1);
  spec.x0 = vec({1.0});
  spec.x0_hat = vec({0.0});
  auto sys = make_polynomial_system(spec);
  SimulationOptions opt;
  opt.eps = 0.1;
  opt.n_paths = 64;
  opt.euler_steps = 400;
  auto sim = simulate(*sys, opt);
  CHECK(sim.censored_count == 64);
  CHECK(sim.kept().cols() == 0);
}

TEST_CASE("kernel density of standard normal samples") {
  const int n = 100000;
  Mat s(1, n);
  CounterRng rng(7, 0);
  for (int k = 0; k < n; ++k) s(0, k) = rng.normal();
  auto est = estimate_log_density(s, vec({0.0}));
  CHECK(est.log_density == doctest::Approx(-0.5 * std::log(2 * pi)).epsilon(0.02 / 0.91894));
  CHECK(est.std_error > 0.0);
  CHECK(est.std_error < 0.02);
  CHECK(est.bandwidth(0) == doctest::Approx(1.06 * std::pow(n, -0.2)).epsilon(0.02));
}

TEST_CASE("kernel density of a point mass") {
  Mat s = vec({0.5, -1.0}).replicate(1, 2000);
  KdeOptions opt;
  opt.rule = Bandwidth::Fixed;
  opt.fixed_h = 0.25;
  auto est = estimate_log_density(s, vec({0.5, -1.0}), opt);
  CHECK(est.log_density == doctest::Approx(-std::log(2 * pi * 0.25 * 0.25)).epsilon(1e-12));
  CHECK(est.std_error == doctest::Approx(0.0).epsilon(1e-12));
  CHECK_THROWS_AS(estimate_log_density(s, vec({0.5, -1.0})), Error);  // no spread
}

TEST_CASE("kernel density rejects unreachable targets") {
  Mat s(1, 2000);
  CounterRng rng(3, 0);
  for (int k = 0; k < s.cols(); ++k) s(0, k) = rng.normal();
  try {
    estimate_log_density(s, vec({40.0}));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::TargetUnreached);
    CHECK(std::string(e.what()).find("nearest sample") != std::string::npos);
  }
  CHECK_THROWS_AS(estimate_log_density(s.leftCols(500), vec({0.0})), Error);
}

TEST_CASE("ou1d kernel estimate matches the gaussian density") {
  Ou ou{1.0, 0.5, 1.0, 0.3};
  auto sys = ou.system();
  SimulationOptions opt;
  opt.eps = 0.3;
  opt.n_paths = 100000;
  opt.euler_steps = 400;
  auto sim = simulate(*sys, opt);
  const double y = 0.8;
  auto est = estimate_log_density(sim.kept(), vec({y}));
  CHECK(std::abs(est.log_density - ou.log_density(0.3, y, 1.0)) < 3 * est.std_error);
}

TEST_CASE("exponent fit on exact rows") {
  const std::vector<double> eps = {0.4, 0.3, 0.2, 0.15, 0.1};
  std::vector<double> logf;
  for (double e : eps) logf.push_back(-1.5 / (e * e) + 3.0 / e - std::log(e));
  auto fit = fit_exponents(eps, logf, 1);
  CHECK(fit.c1_hat == doctest::Approx(1.5).epsilon(1e-10));
  CHECK(fit.c2_hat == doctest::Approx(3.0).epsilon(1e-10));
  CHECK(std::abs(fit.beta) < 1e-10);

  auto wrong = fit_exponents(eps, logf, 2);
  CHECK(wrong.residual >= 5 * fit.residual);
  CHECK(wrong.residual > 1e-6);

  CHECK_THROWS_AS(fit_exponents({0.3, 0.3, 0.2}, {1.0, 1.0, 2.0}, 1), Error);
  CHECK_THROWS_AS(fit_exponents({0.3, 0.2}, {1.0, 2.0}, 1), Error);
}

TEST_CASE("exponent fit on closed-form ou densities") {
  Ou ou{1.0, 0.5, 1.0, 0.3};
  const double y = 0.5;
  const std::vector<double> eps = {0.4, 0.3, 0.2, 0.15, 0.1};
  std::vector<double> logf;
  for (double e : eps) logf.push_back(ou.log_density(e, y, 1.0));
  auto fit = fit_exponents(eps, logf, 1);
  const double s2 = ou.sigma2(1.0);
  CHECK(fit.c1_hat == doctest::Approx(y * y / (2 * s2)).epsilon(1e-3));
  CHECK(fit.c2_hat == doctest::Approx(ou.mu(1.0) * y / s2).epsilon(1e-3));
}

TEST_CASE("exit fractions") {
  Ou ou{1.0, 0.5, 1.0, 0.3};
  auto sys = ou.system();
  SimulationOptions opt;
  opt.n_paths = 5000;
  opt.euler_steps = 100;
  auto rows = localization_probe(*sys, {0.2, 0.1}, {0.01, 20.0}, 0.5, opt);
  REQUIRE(rows.size() == 4);
  for (const auto& r : rows) {
    if (r.radius == 20.0) {
      CHECK(r.exits == 0);
      CHECK_FALSE(r.rate.has_value());
      CHECK(r.exceeds_c1);
    } else {
      CHECK(r.fraction == 1.0);
      CHECK(*r.rate == 0.0);
      CHECK_FALSE(r.exceeds_c1);
    }
  }

  auto lv = make_builtin("langevin", {});
  opt.n_paths = 20000;
  auto ladder = localization_probe(*lv, {2.0}, {2.0, 4.0, 8.0}, 1.5, opt);
  double previous = 0.0;
  for (const auto& r : ladder) {
    const double rate = r.rate.value_or(INFINITY);
    CHECK(rate >= previous);
    previous = rate;
  }
  CHECK(ladder[0].exits > ladder[1].exits);
}

TEST_CASE("mc config validation") {
  auto sys = make_builtin("ou1d", {});
  McConfig cfg;
  cfg.a = vec({0.5});
  cfg.n_paths = 1000;
  cfg.epsilons = {0.2, 0.3, 0.1};
  CHECK_THROWS_AS(validate(cfg, *sys), Error);
  cfg.epsilons = {0.3, 0.2};
  CHECK_THROWS_AS(validate(cfg, *sys), Error);
  cfg.epsilons = {0.3, 0.2, 0.1};
  cfg.n_paths = 999;
  CHECK_THROWS_AS(validate(cfg, *sys), Error);
  cfg.n_paths = 1000;
  cfg.a = vec({0.5, 0.5});
  CHECK_THROWS_AS(validate(cfg, *sys), Error);
  cfg.a = vec({0.5});
  CHECK_NOTHROW(validate(cfg, *sys));
}

TEST_CASE("mc ladder on ou1d") {
  Ou ou{1.0, 0.5, 1.0, 0.3};
  auto sys = ou.system();
  McConfig cfg;
  cfg.a = vec({0.5});
  cfg.n_paths = 50000;
  cfg.euler_steps = 100;
  cfg.radii = {10.0};
  auto rep = mc_validate(*sys, cfg);
  REQUIRE(rep.rows.size() == 5);
  CHECK(rep.valid);
  for (const auto& r : rep.rows) {
    CHECK(r.std_error > 0.0);
    CHECK(r.kept == 50000);
    REQUIRE(r.exits.size() == 1);
  }
  const double s2 = ou.sigma2(1.0);
  CHECK(rep.fit.c1_hat == doctest::Approx(0.25 / (2 * s2)).epsilon(0.2));

  // same seed, same report
  auto again = mc_validate(*sys, cfg);
  for (std::size_t k = 0; k < rep.rows.size(); ++k) {
    CHECK(again.rows[k].log_density == rep.rows[k].log_density);
    CHECK(again.rows[k].std_error == rep.rows[k].std_error);
  }
}

TEST_CASE("euler mean bias is first order") {
  Ou ou{1.0, 1.0, 1.0, 1.0};
  auto sys = make_builtin("ou1d", {{"alpha", 1.0}, {"beta", 1.0}, {"gamma", 1.0}, {"yhat0", 1.0}});
  const double eps = 0.2;
  const double exact = eps * ou.mu(1.0);
  SimulationOptions opt;
  opt.eps = eps;
  opt.n_paths = 100000;
  opt.euler_steps = 10;
  const double coarse = moments(simulate(*sys, opt).kept()).mean - exact;
  opt.euler_steps = 20;
  const double fine = moments(simulate(*sys, opt).kept()).mean - exact;
  CHECK(coarse / fine > 1.6);
  CHECK(coarse / fine < 2.3);
}
