#include "smallnoise/montecarlo.hpp"

#include "smallnoise/parallel.hpp"
#include "smallnoise/random.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace smallnoise {

Mat SimulationResult::kept() const {
  const Eigen::Index n = endpoints.cols();
  Mat out(endpoints.rows(), n - censored_count);
  Eigen::Index j = 0;
  for (Eigen::Index k = 0; k < n; ++k) {
    if (!censored[static_cast<std::size_t>(k)]) out.col(j++) = endpoints.col(k);
  }
  return out;
}

SimulationResult simulate(const VectorFieldSystem& sys, const SimulationOptions& options) {
  if (!(options.eps > 0.0)) fail(ErrorKind::InvalidArgument, "eps must be positive");
  if (!(options.T > 0.0)) fail(ErrorKind::InvalidArgument, "horizon must be positive");
  if (options.n_paths < 1 || options.euler_steps < 1) {
    fail(ErrorKind::InvalidArgument, "need at least one path and one Euler step");
  }
  const int d = sys.d();
  const int m = sys.m();
  const int l = sys.l();
  const int n = options.n_paths;
  const double h = options.T / options.euler_steps;
  const double noise = options.eps * std::sqrt(h);
  const Vec x0 = sys.start(options.eps);

  SimulationResult out;
  out.endpoints.resize(l, n);
  out.max_norm.resize(n);
  out.censored.assign(static_cast<std::size_t>(n), 0);

  constexpr int kChunk = 1024;
  const int chunks = (n + kChunk - 1) / kChunk;
  parallel_for(static_cast<std::size_t>(chunks), options.jobs, [&](std::size_t c) {
    Vec x(d), dx(d), col(d);
    const int first = static_cast<int>(c) * kChunk;
    const int last = std::min(n, first + kChunk);
    for (int k = first; k < last; ++k) {
      CounterRng rng(options.seed, static_cast<std::uint64_t>(k));
      x = x0;
      double peak = x.norm();
      for (int s = 0; s < options.euler_steps; ++s) {
        sys.drift(options.eps, x, dx);
        dx *= h;
        for (int i = 1; i <= m; ++i) {
          sys.field(i, x, col);
          dx += (noise * rng.normal()) * col;
        }
        x += dx;
        peak = std::max(peak, x.norm());
        if (!(peak <= options.blowup)) break;  // also catches NaN
      }
      out.max_norm(k) = peak;
      if (!(peak <= options.blowup)) {
        out.censored[static_cast<std::size_t>(k)] = 1;
        out.endpoints.col(k).setConstant(std::numeric_limits<double>::quiet_NaN());
      } else {
        out.endpoints.col(k) = x.head(l);
      }
    }
  });
  out.censored_count = static_cast<int>(std::count(out.censored.begin(), out.censored.end(), 1));
  return out;
}

DensityEstimate estimate_log_density(const Mat& samples, const Vec& a, const KdeOptions& options) {
  const Eigen::Index l = samples.rows();
  const Eigen::Index n = samples.cols();
  if (a.size() != l) fail(ErrorKind::DimensionMismatch, "evaluation point does not match sample dimension");
  if (n < 1000) {
    fail(ErrorKind::InvalidArgument, "density estimate needs at least 1000 samples, got " + std::to_string(n));
  }
  require_finite(samples, "samples");

  DensityEstimate out;
  out.bandwidth.resize(l);
  if (options.rule == Bandwidth::Fixed) {
    if (!(options.fixed_h > 0.0)) fail(ErrorKind::InvalidArgument, "fixed bandwidth must be positive");
    out.bandwidth.setConstant(options.fixed_h);
  } else {
    const double factor =
        std::pow(4.0 / ((static_cast<double>(l) + 2.0) * static_cast<double>(n)), 1.0 / (static_cast<double>(l) + 4.0));
    for (Eigen::Index j = 0; j < l; ++j) {
      const double mean = samples.row(j).mean();
      const double sd = std::sqrt((samples.row(j).array() - mean).square().sum() / static_cast<double>(n - 1));
      if (!(sd > 0.0)) fail(ErrorKind::InvalidArgument, "samples have no spread; use a fixed bandwidth");
      out.bandwidth(j) = sd * factor;
    }
  }

  // log kernel weights, shifted by their maximum
  std::vector<double> w(static_cast<std::size_t>(n));
  double top = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < n; ++k) {
    const double e = -0.5 * ((a - samples.col(k)).array() / out.bandwidth.array()).square().sum();
    w[static_cast<std::size_t>(k)] = e;
    top = std::max(top, e);
  }
  if (top < -32.0) {
    const double nearest = (samples.colwise() - a).colwise().norm().minCoeff();
    std::ostringstream msg;
    msg << "target unreached: no sample within 8 bandwidths of a (nearest sample at distance " << nearest << ")";
    fail(ErrorKind::TargetUnreached, msg.str());
  }
  for (double& v : w) v = std::exp(v - top);
  const double log_norm = top - out.bandwidth.array().log().sum() -
                          0.5 * static_cast<double>(l) * std::log(2.0 * std::numbers::pi) -
                          std::log(static_cast<double>(n));
  out.log_density = std::log(pairwise_sum(w.data(), w.size())) + log_norm;

  const int b = options.bootstrap;
  if (b < 2) fail(ErrorKind::InvalidArgument, "bootstrap needs at least two resamples");
  std::vector<double> reps(static_cast<std::size_t>(b));
  parallel_for(reps.size(), options.jobs, [&](std::size_t r) {
    CounterRng rng(options.seed, r);
    double sum = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      auto idx = static_cast<std::size_t>(rng.uniform() * static_cast<double>(n));
      sum += w[std::min(idx, w.size() - 1)];
    }
    reps[r] = std::log(sum) + log_norm;
  });
  const double mean = pairwise_sum(reps.data(), reps.size()) / b;
  double var = 0.0;
  for (double v : reps) var += (v - mean) * (v - mean);
  out.std_error = std::sqrt(var / (b - 1));
  return out;
}

ExponentFit fit_exponents(const std::vector<double>& eps, const std::vector<double>& log_density, int l) {
  if (eps.size() != log_density.size()) fail(ErrorKind::DimensionMismatch, "eps and density lists differ in length");
  if (eps.size() < 3) fail(ErrorKind::InvalidArgument, "exponent fit needs at least 3 eps values");
  const auto n = static_cast<Eigen::Index>(eps.size());
  Mat design(n, 3);
  Vec g(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double e = eps[static_cast<std::size_t>(i)];
    if (!(e > 0.0)) fail(ErrorKind::InvalidArgument, "eps values must be positive");
    design.row(i) << 1.0, e, e * e;
    g(i) = e * e * log_density[static_cast<std::size_t>(i)] + l * e * e * std::log(e);
  }
  require_finite(g, "log densities");
  Eigen::ColPivHouseholderQR<Mat> qr(design);
  qr.setThreshold(1e-12);
  if (qr.rank() < 3) fail(ErrorKind::RankDeficient, "exponent fit is rank deficient (repeated eps values?)");
  Vec coef = qr.solve(g);
  ExponentFit out;
  out.c1_hat = -coef(0);
  out.c2_hat = coef(1);
  out.beta = coef(2);
  out.residual = std::sqrt((design * coef - g).squaredNorm() / static_cast<double>(n));
  return out;
}

std::vector<ExitRow> exit_rows(const SimulationResult& sim, double eps, const std::vector<double>& radii,
                               double c1) {
  std::vector<ExitRow> rows;
  const auto n = static_cast<int>(sim.max_norm.size());
  for (double radius : radii) {
    ExitRow row;
    row.eps = eps;
    row.radius = radius;
    row.paths = n;
    for (int k = 0; k < n; ++k) {
      // censored paths left every ball
      if (sim.censored[static_cast<std::size_t>(k)] || sim.max_norm(k) >= radius) ++row.exits;
    }
    row.fraction = static_cast<double>(row.exits) / n;
    if (row.exits > 0) row.rate = -eps * eps * std::log(row.fraction);
    row.exceeds_c1 = !row.rate || *row.rate > c1;
    rows.push_back(row);
  }
  return rows;
}

std::vector<ExitRow> localization_probe(const VectorFieldSystem& sys, const std::vector<double>& epsilons,
                                        const std::vector<double>& radii, double c1,
                                        const SimulationOptions& base) {
  for (double r : radii) {
    if (!(r > 0.0)) fail(ErrorKind::InvalidArgument, "radii must be positive");
  }
  std::vector<ExitRow> rows;
  for (double eps : epsilons) {
    SimulationOptions opt = base;
    opt.eps = eps;
    auto sim = simulate(sys, opt);
    auto part = exit_rows(sim, eps, radii, c1);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  return rows;
}

void validate(const McConfig& config, const VectorFieldSystem& sys) {
  const auto& e = config.epsilons;
  if (e.size() < 3) fail(ErrorKind::InvalidArgument, "the eps ladder needs at least 3 values");
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (!(e[i] > 0.0)) fail(ErrorKind::InvalidArgument, "eps values must be positive");
    if (i > 0 && !(e[i] < e[i - 1])) fail(ErrorKind::InvalidArgument, "eps values must be strictly decreasing");
  }
  if (config.n_paths < 1000) fail(ErrorKind::InvalidArgument, "need at least 1000 paths per eps");
  if (config.euler_steps < 1) fail(ErrorKind::InvalidArgument, "need at least one Euler step");
  if (!(config.T > 0.0)) fail(ErrorKind::InvalidArgument, "horizon must be positive");
  if (config.a.size() != sys.l()) {
    fail(ErrorKind::DimensionMismatch, "target has " + std::to_string(config.a.size()) +
                                           " components, projection has l=" + std::to_string(sys.l()));
  }
  if (config.rule == Bandwidth::Fixed && !(config.fixed_h > 0.0)) {
    fail(ErrorKind::InvalidArgument, "fixed bandwidth must be positive");
  }
  for (double r : config.radii) {
    if (!(r > 0.0)) fail(ErrorKind::InvalidArgument, "radii must be positive");
  }
}

McReport mc_validate(const VectorFieldSystem& sys, const McConfig& config, std::optional<double> c1_reference,
                     std::optional<double> c2_reference) {
  validate(config, sys);
  McReport report;
  report.reference_c1 = c1_reference;
  report.reference_c2 = c2_reference;

  for (std::size_t k = 0; k < config.epsilons.size(); ++k) {
    const double eps = config.epsilons[k];
    SimulationOptions sim_opt;
    sim_opt.eps = eps;
    sim_opt.T = config.T;
    sim_opt.n_paths = config.n_paths;
    sim_opt.euler_steps = config.euler_steps;
    sim_opt.seed = config.seed + k;  // independent rungs
    sim_opt.jobs = config.jobs;
    auto sim = simulate(sys, sim_opt);

    McRow row;
    row.eps = eps;
    row.censored = sim.censored_count;
    row.kept = config.n_paths - sim.censored_count;
    if (sim.censored_count > 1e-3 * config.n_paths) {
      report.valid = false;
      std::ostringstream msg;
      msg << "eps=" << eps << ": " << sim.censored_count << " of " << config.n_paths
          << " paths blew up; censoring above 1e-3 invalidates the run";
      report.warnings.push_back(msg.str());
    }
    KdeOptions kde;
    kde.rule = config.rule;
    kde.fixed_h = config.fixed_h;
    kde.bootstrap = config.bootstrap;
    kde.seed = mix64(config.seed) + k;
    kde.jobs = config.jobs;
    auto est = estimate_log_density(sim.kept(), config.a, kde);
    row.log_density = est.log_density;
    row.std_error = est.std_error;
    row.bandwidth = est.bandwidth;
    if (!config.radii.empty()) {
      // the rate comparison needs c1; filled in after the fit if no reference
      row.exits = exit_rows(sim, eps, config.radii, c1_reference.value_or(0.0));
    }
    report.rows.push_back(std::move(row));
  }

  std::vector<double> eps_list, logf;
  for (const auto& r : report.rows) {
    eps_list.push_back(r.eps);
    logf.push_back(r.log_density);
  }
  report.fit = fit_exponents(eps_list, logf, sys.l());

  const double c1 = c1_reference.value_or(report.fit.c1_hat);
  for (auto& r : report.rows) {
    for (auto& e : r.exits) e.exceeds_c1 = !e.rate || *e.rate > c1;
  }

  const double span = std::abs(report.fit.c2_hat) * (config.epsilons.front() - config.epsilons.back());
  for (const auto& r : report.rows) {
    if (r.eps * r.eps * r.std_error > 0.1 * span) {
      std::ostringstream msg;
      msg << "eps=" << r.eps << ": sampling error " << r.eps * r.eps * r.std_error
          << " exceeds 10% of the fitted c2*eps span " << span;
      report.warnings.push_back(msg.str());
    }
  }
  return report;
}

}  // namespace smallnoise
