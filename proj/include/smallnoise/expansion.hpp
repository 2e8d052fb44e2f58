#pragma once

#include "smallnoise/nondegeneracy.hpp"

#include <string>
#include <vector>

namespace smallnoise {

enum class ExpansionMode { SmallNoise, ShortTime };

std::string_view to_string(ExpansionMode mode);

enum class GradientMethod { Multiplier, FiniteDifference };

struct EnergyLevel {
  double lambda = 0.0;
  MinimizerSet set;
};

/// Lambda(a): least energy over the multistart solutions.
EnergyLevel lambda_at(const VectorFieldSystem& sys, const TargetSpec& target,
                      const MultistartConfig& multistart = {});

struct FdGradientOptions {
  double delta = 0.0;  // 0 selects 1e-4 * (1 + |a|)
  int steps = kDefaultSteps;
  NewtonOptions newton;
  /// Full multistart used only when no warm start converges at a neighbour.
  MultistartConfig fallback;
};

struct FdGradient {
  Vec value;
  double delta = 0.0;
  /// Neighbour energies that jumped by more than 10 * delta * (1 + |q|).
  std::vector<std::string> branch_warnings;
};

/// Terminal multiplier q_T of the first (least-energy) minimizer.
Vec lambda_gradient_multiplier(const MinimizerSet& set);

/// Central differences of Lambda from 2l neighbouring solves warm-started at
/// the minimizers' p0. A branch switch throws BranchSwitch when the minimizer
/// is unique and is only reported otherwise.
FdGradient lambda_gradient_fd(const VectorFieldSystem& sys, const TargetSpec& target,
                              const MinimizerSet& set, const FdGradientOptions& options = {});

/// Pi_l of the solution of
///   Xhat' = (D sigma_0 + sum_i hdot_i D sigma_i)(phi_t) Xhat + d_eps b(0, phi_t),
///   Xhat(0) = xhat_0,
/// integrated jointly with the extremal on the minimizer's own grid.
Vec yhat_terminal(const VectorFieldSystem& sys, const Minimizer& minimizer);

struct MinimizerContribution {
  double energy = 0.0;
  Vec p0;
  Vec yhat_T;
  double c2_contribution = 0.0;
};

struct ExpansionResult {
  ExpansionMode mode = ExpansionMode::SmallNoise;
  double c1 = 0.0;
  double c2 = 0.0;
  int l = 0;
  double T = 1.0;
  Vec a;
  Vec lambda_grad;              // multiplier
  Vec lambda_grad_fd;           // empty when the cross-check was skipped
  double gradient_gap = 0.0;    // max |multiplier - fd|
  bool gradient_agrees = true;  // gap <= 1e-4 * (1 + |q|)
  std::vector<MinimizerContribution> per_minimizer;
  MinimizerSet minimizers;
  NdReport nd_report;
  bool certified = false;       // ND verdict is ND_HOLDS
  double distance = 0.0;        // short-time mode: sqrt(2 c1)
  std::vector<std::string> warnings;
};

struct ExpansionOptions {
  MultistartConfig multistart;
  NdOptions nd;
  bool gradient_check = true;
  double fd_delta = 0.0;
  int jobs = 0;
};

ExpansionResult expand(const VectorFieldSystem& sys, const TargetSpec& target,
                       const ExpansionOptions& options = {});

/// Brownian-scaled problem at T = 1: sigma_0 removed, no first-order
/// perturbation, so c2 = 0 and the template is t^{-l/2} exp(-d^2 / 2t).
ExpansionResult short_time(SystemPtr base, const Vec& a, const ExpansionOptions& options = {});

struct PlotPoint {
  double eps = 0.0;
  double log_density = 0.0;  // -c1/eps^2 + c2/eps - l log eps, constant omitted
};

std::vector<PlotPoint> plot_data(const ExpansionResult& result, const std::vector<double>& epsilons);

}  // namespace smallnoise
