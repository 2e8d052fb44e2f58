#include "smallnoise/bvp.hpp"

#include "smallnoise/parallel.hpp"
#include "smallnoise/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

namespace smallnoise {

namespace {

constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};

double radical_inverse(std::uint64_t index, int base) {
  double inv = 1.0 / base;
  double f = inv;
  double r = 0.0;
  while (index > 0) {
    r += f * static_cast<double>(index % base);
    index /= base;
    f *= inv;
  }
  return r;
}

Vec residual_of(const VectorFieldSystem& sys, const TargetSpec& target, const PhasePath& path) {
  const int d = sys.d();
  const int l = sys.l();
  Vec r(d);
  r.head(l) = path.xs.col(path.steps()).head(l) - target.a;
  r.tail(d - l) = path.ps.col(path.steps()).tail(d - l);
  return r;
}

enum class Outcome { Converged, Diverged, Stalled };

struct NewtonRun {
  Outcome outcome = Outcome::Stalled;
  Vec p0;
  int iterations = 0;
};

struct Trial {
  Vec r;
  Mat jac;
  double norm = 0.0;
};

std::optional<Trial> evaluate(const VectorFieldSystem& sys, const TargetSpec& target,
                              const Vec& p0, int steps, const Mat& seed) {
  FlowOptions loose;
  loose.enforce_conservation = false;
  try {
    auto fj = flow_with_jacobian(sys, {sys.start_limit(), p0}, target.T, Direction::Forward, steps,
                                 seed, loose);
    const int d = sys.d();
    const int l = sys.l();
    Trial t;
    t.r = residual_of(sys, target, fj.path);
    // rows of the residual: x_{1..l}(T) then p_{l+1..d}(T)
    t.jac.resize(d, d);
    t.jac.topRows(l) = fj.jacobian.topRows(l);
    t.jac.bottomRows(d - l) = fj.jacobian.bottomRows(d - l);
    if (!t.r.allFinite() || !t.jac.allFinite()) return std::nullopt;
    t.norm = t.r.norm();
    return t;
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::DivergedFlow || e.kind() == ErrorKind::NonFinite) return std::nullopt;
    throw;
  }
}

NewtonRun newton(const VectorFieldSystem& sys, const TargetSpec& target, const Vec& guess,
                 int steps, const NewtonOptions& options) {
  const int d = sys.d();
  Mat seed = Mat::Zero(2 * d, d);
  seed.bottomRows(d).setIdentity();
  NewtonRun run;
  run.p0 = guess;
  auto current = evaluate(sys, target, run.p0, steps, seed);
  if (!current) {
    run.outcome = Outcome::Diverged;
    return run;
  }
  // residual norms at recent iterations, for giving up on slow progress
  std::vector<double> history;
  int polish = 0;
  for (int it = 0; it < options.max_iterations; ++it) {
    run.iterations = it;
    const bool small = current->r.lpNorm<Eigen::Infinity>() <= options.tol_bvp;
    if (small) {
      run.outcome = Outcome::Converged;
      // keep iterating while the residual still drops: near degenerate roots
      // the tolerance is met long before p0 has settled
      if (++polish > options.polish_iterations) return run;
    }
    history.push_back(current->norm);
    constexpr int kWindow = 10;
    if (!small && it >= kWindow && current->norm > 0.5 * history[it - kWindow]) return run;
    // truncated minimum-norm step: well defined on continua of solutions
    Eigen::CompleteOrthogonalDecomposition<Mat> cod(current->jac.rows(), current->jac.cols());
    // polishing resolves the nearly singular direction too
    cod.setThreshold(small ? 1e-14 : 1e-8);
    cod.compute(current->jac);
    Vec step = -cod.solve(current->r);
    if (!step.allFinite()) break;
    if (small && step.norm() <= 1e-15 * (1.0 + run.p0.norm())) return run;
    bool accepted = false;
    for (double lambda = 1.0; lambda >= 1.0 / 1024.0; lambda *= 0.5) {
      Vec candidate = run.p0 + lambda * step;
      if (candidate.lpNorm<Eigen::Infinity>() > 1e8) continue;
      auto trial = evaluate(sys, target, candidate, steps, seed);
      if (trial && trial->norm < (1.0 - 1e-4 * lambda) * current->norm) {
        run.p0 = candidate;
        current = std::move(trial);
        accepted = true;
        break;
      }
      if (small) break;  // polishing takes full steps only
    }
    if (!accepted) {
      if (current->r.lpNorm<Eigen::Infinity>() <= options.tol_bvp) run.outcome = Outcome::Converged;
      return run;
    }
  }
  run.iterations = options.max_iterations;
  if (current->r.lpNorm<Eigen::Infinity>() <= options.tol_bvp) run.outcome = Outcome::Converged;
  return run;
}

Minimizer finish(const VectorFieldSystem& sys, const TargetSpec& target, const Vec& p0, int steps) {
  const int d = sys.d();
  const int l = sys.l();
  Minimizer mz;
  mz.p0 = p0;
  mz.path = flow(sys, {sys.start_limit(), p0}, target.T, Direction::Forward, steps);
  Vec r = residual_of(sys, target, mz.path);
  mz.residual = r.lpNorm<Eigen::Infinity>();
  mz.z_T = mz.path.xs.col(steps).tail(d - l);
  mz.q_T = mz.path.ps.col(steps).head(l);
  mz.energy = energy_direct(mz.path);
  mz.energy_invariant = energy_invariant(mz.path);
  FlowOptions loose;
  loose.enforce_conservation = false;
  auto fine = flow(sys, {sys.start_limit(), p0}, target.T, Direction::Forward, 2 * steps, loose);
  mz.residual_doubled = residual_of(sys, target, fine).lpNorm<Eigen::Infinity>();
  return mz;
}

bool lex_less(const Vec& a, const Vec& b) {
  for (Eigen::Index j = 0; j < a.size(); ++j) {
    if (a(j) != b(j)) return a(j) < b(j);
  }
  return false;
}

}  // namespace

void check_target(const VectorFieldSystem& sys, const TargetSpec& target) {
  if (target.a.size() != sys.l()) {
    fail(ErrorKind::DimensionMismatch, "target has " + std::to_string(target.a.size()) +
                                           " components but the projection has l=" +
                                           std::to_string(sys.l()));
  }
  require_finite(target.a, "target");
  if (!(target.T > 0.0) || !std::isfinite(target.T)) {
    fail(ErrorKind::InvalidArgument, "horizon T must be positive");
  }
}

ShootResult shoot_residual(const VectorFieldSystem& sys, const TargetSpec& target,
                           const ConstVecRef& p0, int steps) {
  check_target(sys, target);
  if (p0.size() != sys.d()) fail(ErrorKind::DimensionMismatch, "p0 must have dimension d");
  require_finite(p0, "p0");
  FlowOptions loose;
  loose.enforce_conservation = false;
  ShootResult out;
  out.path = flow(sys, {sys.start_limit(), p0}, target.T, Direction::Forward, steps, loose);
  out.residual = residual_of(sys, target, out.path);
  return out;
}

std::vector<Minimizer> solve_bvp(const VectorFieldSystem& sys, const TargetSpec& target,
                                 const std::vector<Vec>& guesses, int steps,
                                 const NewtonOptions& options, MultistartStats* stats) {
  check_target(sys, target);
  if (guesses.empty()) fail(ErrorKind::InvalidArgument, "solve_bvp needs at least one guess");
  for (const auto& g : guesses) {
    if (g.size() != sys.d()) fail(ErrorKind::DimensionMismatch, "guess must have dimension d");
  }

  struct Slot {
    Outcome outcome = Outcome::Stalled;
    std::optional<Minimizer> minimizer;
  };
  std::vector<Slot> slots(guesses.size());
  parallel_for(guesses.size(), options.jobs, [&](std::size_t i) {
    NewtonRun run = newton(sys, target, guesses[i], steps, options);
    slots[i].outcome = run.outcome;
    if (run.outcome != Outcome::Converged) return;
    try {
      Minimizer mz = finish(sys, target, run.p0, steps);
      mz.iterations = run.iterations;
      slots[i].minimizer = std::move(mz);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Accuracy && e.kind() != ErrorKind::DivergedFlow) throw;
      slots[i].outcome = Outcome::Diverged;
    }
  });

  MultistartStats local;
  local.starts = static_cast<int>(guesses.size());
  std::vector<Minimizer> found;
  for (auto& s : slots) {
    if (s.minimizer) {
      ++local.converged;
      found.push_back(std::move(*s.minimizer));
    } else if (s.outcome == Outcome::Diverged) {
      ++local.diverged;
    } else {
      ++local.stalled;
    }
  }
  std::sort(found.begin(), found.end(), [](const Minimizer& a, const Minimizer& b) {
    if (a.energy != b.energy) return a.energy < b.energy;
    return lex_less(a.p0, b.p0);
  });
  // Near degenerate roots the residual is flat along the kernel and Newton
  // stops up to ~sqrt(tol_bvp) away from the root, so the merge radius is
  // never tighter than that. The best-resolved member represents the cluster.
  const double radius = std::max(options.tol_dedup, 10.0 * std::sqrt(options.tol_bvp));
  std::vector<Minimizer> distinct;
  for (auto& mz : found) {
    auto kept = std::find_if(distinct.begin(), distinct.end(), [&](const Minimizer& k) {
      return (k.p0 - mz.p0).norm() < radius * (1.0 + mz.p0.norm());
    });
    if (kept == distinct.end()) {
      distinct.push_back(std::move(mz));
      continue;
    }
    ++local.duplicates;
    if (mz.residual < kept->residual) *kept = std::move(mz);
  }
  std::sort(distinct.begin(), distinct.end(), [](const Minimizer& a, const Minimizer& b) {
    if (a.energy != b.energy) return a.energy < b.energy;
    return lex_less(a.p0, b.p0);
  });
  if (stats) *stats = local;
  return distinct;
}

std::vector<Vec> multistart_guesses(const VectorFieldSystem& sys, const TargetSpec& target,
                                    const MultistartConfig& config) {
  check_target(sys, target);
  const int d = sys.d();
  if (d > static_cast<int>(std::size(kPrimes))) {
    fail(ErrorKind::InvalidArgument, "multistart supports d <= 16");
  }
  if (config.low_discrepancy < 0 || config.random < 0) {
    fail(ErrorKind::InvalidArgument, "multistart counts must be non-negative");
  }
  double speed = (target.a - project(sys, sys.start_limit())).norm() / target.T;
  if (speed == 0.0) speed = 1.0 / target.T;
  const double scale = config.box_scale > 0.0 ? config.box_scale : 2.0 * std::numbers::pi;
  const double half = scale * speed;

  std::vector<Vec> guesses = config.warm_starts;
  CounterRng shift_rng(config.seed, 0);
  Vec shift(d);
  for (int j = 0; j < d; ++j) shift(j) = shift_rng.uniform();
  for (int i = 0; i < config.low_discrepancy; ++i) {
    Vec g(d);
    for (int j = 0; j < d; ++j) {
      double u = radical_inverse(static_cast<std::uint64_t>(i) + 1, kPrimes[j]) + shift(j);
      u -= std::floor(u);
      g(j) = (2.0 * u - 1.0) * half;
    }
    guesses.push_back(std::move(g));
  }
  CounterRng normal_rng(config.seed, 1);
  for (int i = 0; i < config.random; ++i) {
    Vec g(d);
    for (int j = 0; j < d; ++j) g(j) = 0.5 * half * normal_rng.normal();
    guesses.push_back(std::move(g));
  }
  return guesses;
}

MinimizerSet enumerate_minimizers(const VectorFieldSystem& sys, const TargetSpec& target,
                                  const MultistartConfig& config) {
  check_target(sys, target);
  MinimizerSet set;
  if (sys.drift_free() && (target.a - project(sys, sys.start_limit())).lpNorm<Eigen::Infinity>() == 0.0) {
    // zero control reaches the target; its Malliavin matrix is singular
    Minimizer mz = finish(sys, target, Vec::Zero(sys.d()), config.steps);
    mz.degenerate_zero_control = true;
    set.solutions = {mz};
    set.minimizers = {mz};
    set.degenerate_zero_control = true;
    set.stats.starts = 1;
    set.stats.converged = 1;
    return set;
  }
  auto guesses = multistart_guesses(sys, target, config);
  if (guesses.empty()) fail(ErrorKind::InvalidArgument, "multistart produced no guesses");
  set.solutions = solve_bvp(sys, target, guesses, config.steps, config.newton, &set.stats);
  if (set.solutions.empty()) {
    fail(ErrorKind::NoAdmissibleControl,
         "no admissible control found: " + std::to_string(set.stats.starts) + " starts, " +
             std::to_string(set.stats.diverged) + " diverged, " + std::to_string(set.stats.stalled) +
             " stalled");
  }
  const double least = set.solutions.front().energy;
  const double tie = config.tol_energy_tie * (1.0 + least);
  for (const auto& s : set.solutions) {
    if (s.energy <= least + tie) set.minimizers.push_back(s);
  }
  set.continuum_flag = static_cast<int>(set.minimizers.size()) > config.continuum_threshold;
  return set;
}

}  // namespace smallnoise
