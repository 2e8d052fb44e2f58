#pragma once

#include "smallnoise/model.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace smallnoise {

struct SimulationOptions {
  double eps = 0.1;
  double T = 1.0;
  int n_paths = 10000;
  int euler_steps = 400;
  std::uint64_t seed = 20240601;
  double blowup = 1e12;  // |X| beyond this censors the path
  int jobs = 0;
};

/// Euler-Maruyama samples of the eps-SDE (Ito form). Path k draws its
/// normals from CounterRng(seed, k).
struct SimulationResult {
  Mat endpoints;                 // l x n_paths, Pi_l X_T (undefined where censored)
  Vec max_norm;                  // sup_t |X_t| on the Euler grid
  std::vector<unsigned char> censored;
  int censored_count = 0;

  /// Uncensored endpoints, in path order.
  Mat kept() const;
};

SimulationResult simulate(const VectorFieldSystem& sys, const SimulationOptions& options);

enum class Bandwidth { Silverman, Fixed };

struct KdeOptions {
  Bandwidth rule = Bandwidth::Silverman;
  double fixed_h = 0.0;
  int bootstrap = 100;
  std::uint64_t seed = 20240601;
  int jobs = 0;
};

struct DensityEstimate {
  double log_density = 0.0;
  double std_error = 0.0;  // bootstrap standard deviation of log f
  Vec bandwidth;           // per coordinate
};

/// Product-Gaussian kernel estimate of the density of `samples` (l x n) at a.
/// Throws TargetUnreached when no sample lies within 8 bandwidths of a.
DensityEstimate estimate_log_density(const Mat& samples, const Vec& a, const KdeOptions& options = {});

struct ExponentFit {
  double c1_hat = 0.0;
  double c2_hat = 0.0;
  double beta = 0.0;      // absorbs log c0
  double residual = 0.0;  // RMS of the fit in g
};

/// Least squares of g(eps) = eps^2 log f + l eps^2 log eps on [1, eps, eps^2];
/// c1_hat = -intercept, c2_hat = slope.
ExponentFit fit_exponents(const std::vector<double>& eps, const std::vector<double>& log_density, int l);

struct ExitRow {
  double eps = 0.0;
  double radius = 0.0;
  int exits = 0;
  int paths = 0;
  double fraction = 0.0;
  /// -eps^2 log P, absent when nothing exited (P < 1 / paths).
  std::optional<double> rate;
  /// rate > c1 (or no exits at all), so localization at R is harmless.
  bool exceeds_c1 = false;
};

/// Exit fractions P[sup |X| >= R] for every (eps, R) pair, from one
/// simulation per eps.
std::vector<ExitRow> localization_probe(const VectorFieldSystem& sys, const std::vector<double>& epsilons,
                                        const std::vector<double>& radii, double c1,
                                        const SimulationOptions& base);

/// Exit rows for an existing simulation.
std::vector<ExitRow> exit_rows(const SimulationResult& sim, double eps, const std::vector<double>& radii,
                               double c1);

struct McConfig {
  std::vector<double> epsilons = {0.4, 0.3, 0.2, 0.15, 0.1};
  int n_paths = 100000;
  int euler_steps = 400;
  std::uint64_t seed = 20240601;
  Bandwidth rule = Bandwidth::Silverman;
  double fixed_h = 0.0;
  Vec a;
  double T = 1.0;
  std::vector<double> radii;
  int bootstrap = 100;
  int jobs = 0;
};

struct McRow {
  double eps = 0.0;
  double log_density = 0.0;
  double std_error = 0.0;
  Vec bandwidth;
  int kept = 0;
  int censored = 0;
  std::vector<ExitRow> exits;
};

struct McReport {
  std::vector<McRow> rows;
  ExponentFit fit;
  std::optional<double> reference_c1;
  std::optional<double> reference_c2;
  bool valid = true;  // censoring fraction <= 1e-3 everywhere
  std::vector<std::string> warnings;
};

void validate(const McConfig& config, const VectorFieldSystem& sys);

/// Simulates every eps of the ladder, estimates log f(a) and fits (c1, c2).
/// `c1_reference` feeds the localization rows when present.
McReport mc_validate(const VectorFieldSystem& sys, const McConfig& config,
                     std::optional<double> c1_reference = std::nullopt,
                     std::optional<double> c2_reference = std::nullopt);

}  // namespace smallnoise
