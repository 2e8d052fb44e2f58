#pragma once

#include "smallnoise/model.hpp"

#include <iosfwd>

namespace smallnoise {

struct CotangentPoint {
  Vec x;
  Vec p;
};

enum class Direction { Forward, Backward };

/// A discretized solution of the Hamiltonian ODEs on a uniform grid of
/// `steps` intervals. Samples are stored in increasing time order whatever
/// the integration direction. Columns of `xs`, `ps`, `hdot` are grid points.
struct PhasePath {
  double T = 0.0;
  Vec grid;
  Mat xs;
  Mat ps;
  Mat hdot;                 // m x (N+1), hdot_i = <sigma_i(x), p>
  Vec drift_pairing;        // <sigma_0(x), p> per grid point
  double hamiltonian_value = 0.0;
  double conservation_error = 0.0;
  double energy_direct = 0.0;

  int steps() const { return static_cast<int>(grid.size()) - 1; }
  CotangentPoint at(int k) const { return {xs.col(k), ps.col(k)}; }
  CotangentPoint front() const { return at(0); }
  CotangentPoint back() const { return at(steps()); }
};

struct FlowOptions {
  double tol_conserve = 1e-8;
  double overflow_guard = 1e12;
  /// When false the conservation monitor only records the error; used by
  /// Newton iterations that may visit wild covectors.
  bool enforce_conservation = true;
};

inline constexpr int kDefaultSteps = 256;

double eval_hamiltonian(const VectorFieldSystem& sys, const CotangentPoint& q);

/// (dH/dp, -dH/dx) stacked into R^{2d}.
Vec hamiltonian_rhs(const VectorFieldSystem& sys, const CotangentPoint& q);

/// Second-derivative blocks of H at (x, p):
///   d/dt (dx, dp) = [[Hpx, Hpp], [-Hxx, -Hxp]] (dx, dp),  Hxp = Hpx^T.
struct HamiltonianHessian {
  Mat hpx;
  Mat hpp;
  Mat hxx;
};

HamiltonianHessian hamiltonian_hessian(const VectorFieldSystem& sys, const CotangentPoint& q);

PhasePath flow(const VectorFieldSystem& sys, const CotangentPoint& endpoint, double T,
               Direction direction, int steps = kDefaultSteps, const FlowOptions& options = {});

enum class SeedBlock { Position, Covector, Full };

/// Sensitivity of the far-end CotangentPoint (stacked x, p) with respect to
/// perturbations of the starting endpoint along the columns of `seed`
/// (2d x k). Returns the 2d x k matrix.
Mat flow_jacobian(const VectorFieldSystem& sys, const CotangentPoint& endpoint, double T,
                  Direction direction, int steps, const Mat& seed,
                  const FlowOptions& options = {});

Mat flow_jacobian(const VectorFieldSystem& sys, const CotangentPoint& endpoint, double T,
                  Direction direction, int steps, SeedBlock block,
                  const FlowOptions& options = {});

/// Flow and its sensitivities in one pass.
struct FlowWithJacobian {
  PhasePath path;
  Mat jacobian;
};

FlowWithJacobian flow_with_jacobian(const VectorFieldSystem& sys, const CotangentPoint& endpoint,
                                    double T, Direction direction, int steps, const Mat& seed,
                                    const FlowOptions& options = {});

/// 1/2 int |hdot|^2 by composite Simpson.
double energy_direct(const PhasePath& path);

/// T*C - int <sigma_0(x), p> dt, using conservation of H.
double energy_invariant(const PhasePath& path);

/// Columns t, x1..xd, p1..pd, hdot1..hdotm.
void write_path_csv(std::ostream& out, const PhasePath& path);

}  // namespace smallnoise
