#pragma once

#include "smallnoise/core.hpp"
#include "smallnoise/polynomial.hpp"

#include <map>
#include <memory>
#include <string>
#include <vector>

namespace smallnoise {

/// The controlled/stochastic system
///
///   dX = b(eps, X) dt + eps * sum_i sigma_i(X) dW^i,   X_0 = x0(eps),
///
/// with sigma_0 = b(0, .). Field index 0 is sigma_0, indices 1..m are the
/// diffusion fields. The first l state coordinates are the projected ones;
/// `state_order()` maps internal coordinates back to the user's labelling.
///
/// Implementations are immutable; every method is safe to call concurrently.
class VectorFieldSystem {
 public:
  virtual ~VectorFieldSystem() = default;

  int d() const { return d_; }
  int m() const { return m_; }
  int l() const { return l_; }
  const std::string& name() const { return name_; }
  /// state_order()[j] is the user coordinate stored at internal slot j.
  const std::vector<int>& state_order() const { return order_; }

  virtual void field(int i, const ConstVecRef& x, VecRef out) const = 0;
  virtual void jacobian(int i, const ConstVecRef& x, MatRef out) const = 0;
  /// sum_k w_k * Hess(sigma_i^k)(x).
  virtual void hessian_contract(int i, const ConstVecRef& x, const ConstVecRef& w,
                                MatRef out) const = 0;

  virtual void drift(double eps, const ConstVecRef& x, VecRef out) const = 0;
  virtual void drift_eps_deriv(const ConstVecRef& x, VecRef out) const = 0;

  virtual Vec start(double eps) const = 0;
  virtual Vec start_deriv() const = 0;
  Vec start_limit() const { return start(0.0); }

  /// Polynomial form of sigma_0..sigma_m, used for exact Lie brackets.
  virtual std::vector<PolyField> polynomial_fields() const = 0;

  /// True when sigma_0 vanishes identically.
  virtual bool drift_free() const = 0;

 protected:
  VectorFieldSystem(std::string name, int d, int m, int l);
  void set_state_order(std::vector<int> order) { order_ = std::move(order); }

 private:
  std::string name_;
  int d_;
  int m_;
  int l_;
  std::vector<int> order_;
};

using SystemPtr = std::shared_ptr<const VectorFieldSystem>;
using Params = std::map<std::string, double>;

/// Polynomial-coefficient user model. b(eps, x) = sigma_0(x) + sum_k eps^k b_k(x)
/// with b_1 = d/d eps b(0, .), and x0(eps) = x0 + eps * x0_hat.
struct PolynomialModelSpec {
  std::string name = "polynomial";
  int d = 0;
  int m = 0;
  int l = 0;
  std::vector<int> projection;     // user coordinates projected, increasing
  std::vector<PolyField> fields;   // m + 1 fields in user coordinates
  PolyField drift_eps;             // b_1
  std::vector<PolyField> drift_eps_higher;  // b_2, b_3, ...
  Vec x0;
  Vec x0_hat;
};

SystemPtr make_polynomial_system(const PolynomialModelSpec& spec);

/// Builtin names: ou1d, langevin, flatmetric, heisenberg. `projection` lists
/// user coordinates to project (empty = builtin default).
SystemPtr make_builtin(const std::string& name, const Params& params,
                       const std::vector<int>& projection = {});

const std::vector<std::string>& builtin_names();

/// Reorders coordinates so the projected ones come first. `projection` must
/// be a strictly increasing list of user coordinates.
SystemPtr with_projection(SystemPtr base, const std::vector<int>& projection);

/// Short-time rescaling: sigma_0 = 0, b(eps, .) = eps^2 * sigma_0^{base}, fixed
/// start x0 = base start limit.
SystemPtr make_short_time_system(SystemPtr base);

// Checked accessors.
Vec eval_field(const VectorFieldSystem& sys, int i, const ConstVecRef& x);
Mat eval_jacobian(const VectorFieldSystem& sys, int i, const ConstVecRef& x);
Vec eval_drift(const VectorFieldSystem& sys, double eps, const ConstVecRef& x);
/// d x m matrix [sigma_1 .. sigma_m](x).
Mat diffusion_matrix(const VectorFieldSystem& sys, const ConstVecRef& x);

/// Pi_l x for internal coordinates.
inline Vec project(const VectorFieldSystem& sys, const ConstVecRef& x) {
  return x.head(sys.l());
}

}  // namespace smallnoise
