#include "smallnoise/expansion.hpp"

#include "controlled.hpp"
#include "smallnoise/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace smallnoise {

std::string_view to_string(ExpansionMode mode) {
  return mode == ExpansionMode::ShortTime ? "short_time" : "small_noise";
}

EnergyLevel lambda_at(const VectorFieldSystem& sys, const TargetSpec& target,
                      const MultistartConfig& multistart) {
  EnergyLevel out;
  out.set = enumerate_minimizers(sys, target, multistart);
  out.lambda = out.set.minimizers.front().energy;
  return out;
}

Vec lambda_gradient_multiplier(const MinimizerSet& set) {
  if (set.minimizers.empty()) fail(ErrorKind::NoAdmissibleControl, "empty minimizer set");
  return set.minimizers.front().q_T;
}

FdGradient lambda_gradient_fd(const VectorFieldSystem& sys, const TargetSpec& target,
                              const MinimizerSet& set, const FdGradientOptions& options) {
  const Vec q = lambda_gradient_multiplier(set);
  const double lambda = set.minimizers.front().energy;
  const int l = sys.l();
  FdGradient out;
  out.delta = options.delta > 0.0 ? options.delta : 1e-4 * (1.0 + target.a.norm());
  out.value.resize(l);
  std::vector<Vec> warm;
  for (const auto& mz : set.minimizers) warm.push_back(mz.p0);
  const double jump = 10.0 * out.delta * (1.0 + q.norm());

  auto energy_at = [&](int j, double sign) {
    TargetSpec near = target;
    near.a(j) += sign * out.delta;
    auto sols = solve_bvp(sys, near, warm, options.steps, options.newton);
    double e;
    if (!sols.empty()) {
      e = sols.front().energy;
    } else {
      MultistartConfig cfg = options.fallback;
      cfg.warm_starts = warm;
      e = enumerate_minimizers(sys, near, cfg).minimizers.front().energy;
    }
    if (std::abs(e - lambda) > jump) {
      std::ostringstream msg;
      msg << "energy jumps from " << lambda << " to " << e << " at a" << (sign > 0 ? " + " : " - ")
          << out.delta << " e_" << j << ": the neighbouring solve left the branch";
      if (set.minimizers.size() == 1) fail(ErrorKind::BranchSwitch, msg.str());
      out.branch_warnings.push_back(msg.str());
    }
    return e;
  };

  for (int j = 0; j < l; ++j) {
    const double up = energy_at(j, 1.0);
    const double down = energy_at(j, -1.0);
    out.value(j) = (up - down) / (2.0 * out.delta);
  }
  return out;
}

Vec yhat_terminal(const VectorFieldSystem& sys, const Minimizer& minimizer) {
  const PhasePath& path = minimizer.path;
  const int d = sys.d();
  const int steps = path.steps();
  if (steps < 1 || path.xs.cols() != steps + 1 || path.xs.rows() != d ||
      minimizer.p0.size() != d) {
    fail(ErrorKind::DimensionMismatch, "minimizer path does not match the system grid");
  }
  const double h = path.T / steps;
  ControlledSystem cs(sys);
  Vec u(sys.m());
  Mat a(d, d);
  Vec src(d);

  // state (x, p, Xhat)
  auto deriv = [&](const Vec& s) {
    Vec ds(3 * d);
    ds.head(2 * d) = hamiltonian_rhs(sys, {s.head(d), s.segment(d, d)});
    cs.feedback(s.head(d), s.segment(d, d), u);
    cs.state_jacobian(s.head(d), u, a);
    sys.drift_eps_deriv(s.head(d), src);
    ds.tail(d) = a * s.tail(d) + src;
    return ds;
  };

  Vec s(3 * d);
  s << sys.start_limit(), minimizer.p0, sys.start_deriv();
  for (int n = 0; n < steps; ++n) {
    Vec k1 = deriv(s);
    Vec k2 = deriv(s + 0.5 * h * k1);
    Vec k3 = deriv(s + 0.5 * h * k2);
    Vec k4 = deriv(s + h * k3);
    s += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  if (!s.allFinite()) fail(ErrorKind::DivergedFlow, "first-order perturbation diverged");
  const Vec& x_end = path.xs.col(steps);
  if ((s.head(d) - x_end).norm() > 1e-8 * (1.0 + x_end.norm())) {
    fail(ErrorKind::DimensionMismatch, "re-integrated extremal does not match the stored path");
  }
  return s.segment(2 * d, sys.l());
}

ExpansionResult expand(const VectorFieldSystem& sys, const TargetSpec& target,
                       const ExpansionOptions& options) {
  check_target(sys, target);
  ExpansionResult r;
  r.l = sys.l();
  r.T = target.T;
  r.a = target.a;

  MultistartConfig ms = options.multistart;
  if (options.jobs != 0) ms.newton.jobs = options.jobs;
  auto level = lambda_at(sys, target, ms);
  r.c1 = level.lambda;
  r.minimizers = std::move(level.set);
  const auto& mins = r.minimizers.minimizers;

  NdOptions nd = options.nd;
  if (options.jobs != 0) nd.jobs = options.jobs;
  r.nd_report = assemble_nd_report(sys, r.minimizers, target, nd);
  r.certified = r.nd_report.verdict == Verdict::NdHolds;
  if (!r.certified) {
    r.warnings.push_back("ND verdict " + std::string(to_string(r.nd_report.verdict)) +
                         ": expansion numbers are not certified");
  }

  r.lambda_grad = lambda_gradient_multiplier(r.minimizers);
  r.per_minimizer.resize(mins.size());
  parallel_for(mins.size(), nd.jobs, [&](std::size_t i) {
    auto& c = r.per_minimizer[i];
    c.energy = mins[i].energy;
    c.p0 = mins[i].p0;
    c.yhat_T = yhat_terminal(sys, mins[i]);
    c.c2_contribution = r.lambda_grad.dot(c.yhat_T);
  });
  r.c2 = r.per_minimizer.front().c2_contribution;
  for (const auto& c : r.per_minimizer) r.c2 = std::max(r.c2, c.c2_contribution);

  if (options.gradient_check && !r.minimizers.degenerate_zero_control) {
    FdGradientOptions fd;
    fd.delta = options.fd_delta;
    fd.steps = ms.steps;
    fd.newton = ms.newton;
    fd.fallback = ms;
    auto g = lambda_gradient_fd(sys, target, r.minimizers, fd);
    r.lambda_grad_fd = g.value;
    r.warnings.insert(r.warnings.end(), g.branch_warnings.begin(), g.branch_warnings.end());
    r.gradient_gap = (g.value - r.lambda_grad).lpNorm<Eigen::Infinity>();
    r.gradient_agrees = r.gradient_gap <= 1e-4 * (1.0 + r.lambda_grad.norm());
    if (!r.gradient_agrees) {
      std::ostringstream msg;
      msg << "multiplier and finite-difference gradients differ by " << r.gradient_gap;
      r.warnings.push_back(msg.str());
    }
  }
  return r;
}

ExpansionResult short_time(SystemPtr base, const Vec& a, const ExpansionOptions& options) {
  auto scaled = make_short_time_system(std::move(base));
  ExpansionResult r = expand(*scaled, {a, 1.0}, options);
  r.mode = ExpansionMode::ShortTime;
  r.c2 = 0.0;
  r.distance = std::sqrt(2.0 * r.c1);
  return r;
}

std::vector<PlotPoint> plot_data(const ExpansionResult& result, const std::vector<double>& epsilons) {
  std::vector<PlotPoint> out;
  out.reserve(epsilons.size());
  for (double eps : epsilons) {
    if (!(eps > 0.0)) fail(ErrorKind::InvalidArgument, "epsilon values must be positive");
    out.push_back({eps, -result.c1 / (eps * eps) + result.c2 / eps - result.l * std::log(eps)});
  }
  return out;
}

}  // namespace smallnoise
