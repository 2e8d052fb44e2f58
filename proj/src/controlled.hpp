#pragma once

#include "smallnoise/model.hpp"

namespace smallnoise {

// Linearization of xdot = sigma_0(x) + sum_i u_i sigma_i(x) in x, and the
// control matrix [sigma_1 .. sigma_m], at fixed controls u.
class ControlledSystem {
 public:
  explicit ControlledSystem(const VectorFieldSystem& sys)
      : sys_(sys), d_(sys.d()), m_(sys.m()), col_(d_), jac_(d_, d_) {}

  void velocity(const ConstVecRef& x, const ConstVecRef& u, VecRef out) {
    sys_.field(0, x, out);
    for (int i = 1; i <= m_; ++i) {
      sys_.field(i, x, col_);
      out += u(i - 1) * col_;
    }
  }

  void state_jacobian(const ConstVecRef& x, const ConstVecRef& u, MatRef out) {
    sys_.jacobian(0, x, out);
    for (int i = 1; i <= m_; ++i) {
      sys_.jacobian(i, x, jac_);
      out += u(i - 1) * jac_;
    }
  }

  void control_matrix(const ConstVecRef& x, MatRef out) {
    for (int i = 1; i <= m_; ++i) sys_.field(i, x, out.col(i - 1));
  }

  // u_i = <sigma_i(x), p>
  void feedback(const ConstVecRef& x, const ConstVecRef& p, VecRef u) {
    for (int i = 1; i <= m_; ++i) {
      sys_.field(i, x, col_);
      u(i - 1) = p.dot(col_);
    }
  }

 private:
  const VectorFieldSystem& sys_;
  int d_;
  int m_;
  Vec col_;
  Mat jac_;
};

}  // namespace smallnoise
