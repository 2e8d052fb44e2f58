#pragma once

#include "smallnoise/bvp.hpp"

#include <optional>
#include <string_view>

namespace smallnoise {

enum class Verdict { NdHolds, Focal, SingularMalliavin, Continuum, Undecided };

std::string_view to_string(Verdict v);

struct NdThresholds {
  double tol_sv = 1e-7;         // relative to the largest singular value
  double tol_focal = 1e-6;      // relative to the Hadamard bound of M
  double undecided_band = 10.0; // |det| within this factor of the threshold
  double tol_eig = 1e-3;        // Hessian-oracle positivity
};

/// Deterministic Malliavin covariance
///   C = int_0^T Phi_{T<-t} sigma(x_t) sigma(x_t)^T Phi_{T<-t}^T dt
/// along the minimizer, with Phi the linearization of the controlled ODE.
Mat malliavin_covariance(const VectorFieldSystem& sys, const Minimizer& minimizer,
                         int steps = kDefaultSteps);

struct InvertibilityCheck {
  bool invertible = false;
  double smallest_singular_value = 0.0;
  double largest_singular_value = 0.0;
};

/// SVD test sigma_min > tol_sv * scale; scale <= 0 selects sigma_max.
InvertibilityCheck check_invertibility(const Mat& c, double scale = 0.0, double tol_sv = 1e-7);

/// First grid time where sigma_1..sigma_m span R^d, if any.
std::optional<double> ellipticity_witness(const VectorFieldSystem& sys, const PhasePath& path,
                                          double tol_sv = 1e-7);

struct BracketRank {
  int rank = 0;
  int bracket_count = 0;
};

/// Rank at x of the span of sigma_1..sigma_m and their iterated brackets up
/// to `depth` (1 = the fields themselves). With include_drift, sigma_0 enters
/// as a bracketing partner but never on its own.
BracketRank hormander_rank(const VectorFieldSystem& sys, const ConstVecRef& x, int depth,
                           bool include_drift, double tol_sv = 1e-10);

struct Nonfocality {
  Mat matrix;         // d x d
  double det = 0.0;
  double scale = 0.0; // product of the row norms of dx(0)/d(x_T, p_T)
};

/// Jacobian of x(0) under the backward flow from (x_T + (0, z), p_T + (q, 0))
/// with respect to (z, q), columns ordered z then q.
Nonfocality nonfocality_matrix(const VectorFieldSystem& sys, const Minimizer& minimizer,
                               int steps = kDefaultSteps);

struct HessianOracle {
  double min_eig = 0.0;
  Mat null_direction;  // m x grid_size control increments of the lowest mode
  int kernel_dim = 0;
};

/// Smallest eigenvalue of the Lagrangian Hessian restricted to the tangent
/// space of the constraint, for piecewise-constant controls on `grid_size`
/// intervals, normalized by the discrete Cameron-Martin norm.
HessianOracle hessian_oracle(const VectorFieldSystem& sys, const Minimizer& minimizer,
                             const TargetSpec& target, int grid_size = 64, int substeps = 8);

struct MinimizerNd {
  Mat malliavin;
  InvertibilityCheck invertibility;
  std::optional<double> ellipticity_time;
  Nonfocality nonfocality;
  double focal_threshold = 0.0;
  std::optional<HessianOracle> hessian;
  Verdict verdict = Verdict::NdHolds;
};

struct NdReport {
  int minimizer_count = 0;
  bool continuum_flag = false;
  bool degenerate_zero_control = false;
  std::vector<MinimizerNd> records;
  Verdict verdict = Verdict::NdHolds;
  NdThresholds thresholds;
};

struct NdOptions {
  int steps = kDefaultSteps;
  bool hessian_oracle = false;
  int hessian_grid = 64;
  NdThresholds thresholds;
  int jobs = 0;
};

/// Verdict precedence: CONTINUUM > SINGULAR_MALLIAVIN > FOCAL > UNDECIDED > ND_HOLDS.
NdReport assemble_nd_report(const VectorFieldSystem& sys, const MinimizerSet& set,
                            const TargetSpec& target, const NdOptions& options = {});

}  // namespace smallnoise
