#pragma once

#include "smallnoise/core.hpp"

#include <vector>

namespace smallnoise {

/// One monomial c * x_0^e_0 * ... * x_{n-1}^e_{n-1}.
struct Term {
  std::vector<int> exponents;
  double coeff = 0.0;
};

/// Sparse multivariate polynomial with real coefficients. Like terms are
/// merged and zero terms dropped on construction, so structural equality
/// of two canonical polynomials is term-by-term equality.
class Polynomial {
 public:
  Polynomial() = default;
  explicit Polynomial(int nvars) : nvars_(nvars) {}
  Polynomial(int nvars, std::vector<Term> terms);

  static Polynomial constant(int nvars, double c);
  static Polynomial variable(int nvars, int index, double c = 1.0);

  int nvars() const { return nvars_; }
  const std::vector<Term>& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }
  int degree() const;

  template <typename Derived>
  typename Derived::Scalar operator()(const Eigen::MatrixBase<Derived>& x) const {
    using Scalar = typename Derived::Scalar;
    Scalar sum(0);
    for (const auto& t : terms_) {
      Scalar mono(t.coeff);
      for (int j = 0; j < nvars_; ++j) {
        for (int e = 0; e < t.exponents[j]; ++e) mono *= x(j);
      }
      sum += mono;
    }
    return sum;
  }

  Polynomial derivative(int var) const;

  /// Substitutes x_j -> x_{perm[j]}: the result evaluated at y equals this
  /// polynomial evaluated at x with x_j = y_{perm[j]}.
  Polynomial relabel(const std::vector<int>& perm) const;

  /// Drops the last variable by evaluating it at `value`.
  Polynomial restrict_last(double value) const;

  Polynomial& operator+=(const Polynomial& rhs);
  Polynomial& operator-=(const Polynomial& rhs);
  Polynomial& operator*=(double s);

  friend Polynomial operator+(Polynomial a, const Polynomial& b) { return a += b; }
  friend Polynomial operator-(Polynomial a, const Polynomial& b) { return a -= b; }
  friend Polynomial operator*(Polynomial a, double s) { return a *= s; }
  friend Polynomial operator*(double s, Polynomial a) { return a *= s; }
  friend Polynomial operator*(const Polynomial& a, const Polynomial& b);

  /// Maximum absolute coefficient difference; both operands canonical.
  friend double max_coeff_distance(const Polynomial& a, const Polynomial& b);

 private:
  void canonicalize();

  int nvars_ = 0;
  std::vector<Term> terms_;
};

/// A vector field R^n -> R^d with polynomial components and symbolically
/// precomputed first and second derivatives.
class PolyField {
 public:
  PolyField() = default;
  explicit PolyField(std::vector<Polynomial> components);

  static PolyField zero(int dim, int nvars);

  int dim() const { return static_cast<int>(comps_.size()); }
  int nvars() const { return comps_.empty() ? 0 : comps_.front().nvars(); }
  const Polynomial& operator[](int k) const { return comps_[k]; }
  const std::vector<Polynomial>& components() const { return comps_; }
  bool is_zero() const;

  void eval(const ConstVecRef& x, VecRef out) const;
  void jacobian(const ConstVecRef& x, MatRef out) const;
  /// sum_k w_k * Hess(component k), an nvars x nvars matrix.
  void hessian_contract(const ConstVecRef& x, const ConstVecRef& w, MatRef out) const;

  Vec operator()(const ConstVecRef& x) const;

  PolyField relabel(const std::vector<int>& perm) const;

 private:
  std::vector<Polynomial> comps_;
  std::vector<std::vector<Polynomial>> d1_;               // d1_[k][j] = d comp_k / d x_j
  std::vector<std::vector<std::vector<Polynomial>>> d2_;  // d2_[k][i][j]
};

/// Lie bracket [U, V] = DV U - DU V, computed symbolically.
PolyField lie_bracket(const PolyField& u, const PolyField& v);

}  // namespace smallnoise
