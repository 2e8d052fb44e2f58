#pragma once

#include "smallnoise/hamiltonian.hpp"

#include <cstdint>
#include <vector>

namespace smallnoise {

/// Target set N_a = {x : Pi_l x = a} reached at time T.
struct TargetSpec {
  Vec a;
  double T = 1.0;
};

struct Minimizer {
  Vec p0;
  Vec z_T;  // free terminal coordinates x_{l+1..d}(T)
  Vec q_T;  // p_{1..l}(T), the terminal multiplier
  PhasePath path;
  double energy = 0.0;            // energy_direct
  double energy_invariant = 0.0;  // T*C - int <sigma_0, p>
  double residual = 0.0;          // max-norm boundary mismatch
  double residual_doubled = 0.0;  // same p0 re-integrated with twice the steps
  int iterations = 0;
  bool degenerate_zero_control = false;
};

struct MultistartStats {
  int starts = 0;
  int converged = 0;
  int diverged = 0;
  int stalled = 0;
  int duplicates = 0;
};

struct MinimizerSet {
  std::vector<Minimizer> solutions;   // distinct, sorted by energy then p0
  std::vector<Minimizer> minimizers;  // energy within the tie tolerance of the least
  bool continuum_flag = false;
  bool degenerate_zero_control = false;
  MultistartStats stats;
};

struct NewtonOptions {
  int max_iterations = 100;
  double tol_bvp = 1e-9;
  double tol_dedup = 1e-5;
  /// Extra full Newton steps taken after the tolerance is met, while the
  /// residual keeps decreasing.
  int polish_iterations = 40;
  int jobs = 0;
};

struct MultistartConfig {
  int low_discrepancy = 64;
  int random = 64;
  std::uint64_t seed = 20240601;
  /// Half-width of the sampling box in units of the mean velocity
  /// |a - Pi x0| / T; 0 selects the default 2*pi.
  double box_scale = 0.0;
  int steps = kDefaultSteps;
  double tol_energy_tie = 1e-6;
  int continuum_threshold = 8;
  NewtonOptions newton;
  /// Extra guesses tried before the sampled ones (warm starts).
  std::vector<Vec> warm_starts;
};

struct ShootResult {
  Vec residual;
  PhasePath path;
};

/// Forward shot from (x0, p0): residual (Pi_l x(T) - a, p_{l+1..d}(T)).
ShootResult shoot_residual(const VectorFieldSystem& sys, const TargetSpec& target,
                           const ConstVecRef& p0, int steps = kDefaultSteps);

/// Damped Newton from every guess; converged solutions are deduplicated and
/// sorted by energy then lexicographically by p0. Empty when nothing
/// converges.
std::vector<Minimizer> solve_bvp(const VectorFieldSystem& sys, const TargetSpec& target,
                                 const std::vector<Vec>& guesses, int steps = kDefaultSteps,
                                 const NewtonOptions& options = {},
                                 MultistartStats* stats = nullptr);

/// The guesses enumerate_minimizers would try (warm starts first).
std::vector<Vec> multistart_guesses(const VectorFieldSystem& sys, const TargetSpec& target,
                                    const MultistartConfig& config);

/// Multistart shooting. Throws NoAdmissibleControl when no start converges.
MinimizerSet enumerate_minimizers(const VectorFieldSystem& sys, const TargetSpec& target,
                                  const MultistartConfig& config = {});

void check_target(const VectorFieldSystem& sys, const TargetSpec& target);

}  // namespace smallnoise
