#include "smallnoise/hamiltonian.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace smallnoise {

namespace {

// Scratch buffers for evaluating H and its derivatives without allocating in
// the integration loop.
class Workspace {
 public:
  explicit Workspace(const VectorFieldSystem& sys)
      : sys_(sys), d_(sys.d()), m_(sys.m()), sig_(d_, sys.m() + 1), jac_(sys.m() + 1),
        dtp_(d_, sys.m() + 1), u_(sys.m() + 1), hess_(d_, d_) {
    for (auto& j : jac_) j.resize(d_, d_);
  }

  // Fields, Jacobians, u_i = <p, sigma_i> and D sigma_i^T p at z = (x, p).
  void load(const ConstVecRef& z, bool jacobians) {
    auto x = z.head(d_);
    auto p = z.tail(d_);
    for (int i = 0; i <= m_; ++i) {
      sys_.field(i, x, sig_.col(i));
      u_(i) = p.dot(sig_.col(i));
      if (jacobians) {
        sys_.jacobian(i, x, jac_[i]);
        dtp_.col(i).noalias() = jac_[i].transpose() * p;
      }
    }
  }

  void rhs(const ConstVecRef& z, VecRef out) {
    load(z, true);
    out.head(d_) = sig_.col(0);
    out.tail(d_) = -dtp_.col(0);
    for (int i = 1; i <= m_; ++i) {
      out.head(d_) += u_(i) * sig_.col(i);
      out.tail(d_) -= u_(i) * dtp_.col(i);
    }
  }

  // Assumes load(z, true) was called for the same z.
  void hessian_blocks(const ConstVecRef& z, MatRef hpx, MatRef hpp, MatRef hxx) {
    auto x = z.head(d_);
    auto p = z.tail(d_);
    hpx = jac_[0];
    hpp.setZero();
    sys_.hessian_contract(0, x, p, hxx);
    for (int i = 1; i <= m_; ++i) {
      hpx.noalias() += u_(i) * jac_[i];
      hpx.noalias() += sig_.col(i) * dtp_.col(i).transpose();
      hpp.noalias() += sig_.col(i) * sig_.col(i).transpose();
      hxx.noalias() += dtp_.col(i) * dtp_.col(i).transpose();
      sys_.hessian_contract(i, x, p, hess_);
      hxx += u_(i) * hess_;
    }
  }

  // Full 2d x 2d linearization of the Hamiltonian vector field.
  void linearization(const ConstVecRef& z, MatRef a) {
    load(z, true);
    hessian_blocks(z, a.topLeftCorner(d_, d_), a.topRightCorner(d_, d_),
                   a.bottomLeftCorner(d_, d_));
    a.bottomLeftCorner(d_, d_) *= -1.0;
    a.bottomRightCorner(d_, d_) = -a.topLeftCorner(d_, d_).transpose();
  }

  void rhs_and_linearization(const ConstVecRef& z, VecRef out, MatRef a) {
    rhs(z, out);
    hessian_blocks(z, a.topLeftCorner(d_, d_), a.topRightCorner(d_, d_),
                   a.bottomLeftCorner(d_, d_));
    a.bottomLeftCorner(d_, d_) *= -1.0;
    a.bottomRightCorner(d_, d_) = -a.topLeftCorner(d_, d_).transpose();
  }

  double hamiltonian() const { return u_(0) + 0.5 * u_.tail(m_).squaredNorm(); }
  const Vec& u() const { return u_; }

 private:
  const VectorFieldSystem& sys_;
  int d_;
  int m_;
  Mat sig_;
  std::vector<Mat> jac_;
  Mat dtp_;
  Vec u_;
  Mat hess_;
};

void check_endpoint(const VectorFieldSystem& sys, const CotangentPoint& q) {
  if (q.x.size() != sys.d() || q.p.size() != sys.d()) {
    fail(ErrorKind::DimensionMismatch, "cotangent point must have x and p of dimension " +
                                           std::to_string(sys.d()));
  }
  require_finite(q.x, "cotangent point x");
  require_finite(q.p, "cotangent point p");
}

void check_horizon(double T, int steps) {
  if (!(T > 0.0) || !std::isfinite(T)) fail(ErrorKind::InvalidArgument, "horizon T must be positive");
  if (steps < 16 || steps % 2 != 0) {
    fail(ErrorKind::InvalidArgument,
         "steps must be even and at least 16, got " + std::to_string(steps));
  }
}

Vec stack(const CotangentPoint& q) {
  Vec z(q.x.size() + q.p.size());
  z << q.x, q.p;
  return z;
}

// Integrates the Hamiltonian flow, optionally carrying a block of variational
// columns V with dV/dt = A(z) V.
FlowWithJacobian integrate(const VectorFieldSystem& sys, const CotangentPoint& endpoint, double T,
                           Direction direction, int steps, const Mat* seed,
                           const FlowOptions& options) {
  check_endpoint(sys, endpoint);
  check_horizon(T, steps);
  const int d = sys.d();
  const int m = sys.m();
  const int n = 2 * d;
  const bool variational = seed != nullptr;
  if (variational && seed->rows() != n) {
    fail(ErrorKind::DimensionMismatch, "seed must have 2d rows");
  }
  const int k = variational ? static_cast<int>(seed->cols()) : 0;
  const double h = (direction == Direction::Forward ? T : -T) / steps;

  Workspace ws(sys);
  FlowWithJacobian result;
  PhasePath& path = result.path;
  path.T = T;
  path.grid = Vec::LinSpaced(steps + 1, 0.0, T);
  path.xs.resize(d, steps + 1);
  path.ps.resize(d, steps + 1);
  path.hdot.resize(m, steps + 1);
  path.drift_pairing.resize(steps + 1);

  Vec z = stack(endpoint);
  Vec k1(n), k2(n), k3(n), k4(n), zs(n);
  Mat v, a, v1, v2, v3, v4, vs;
  if (variational) {
    v = *seed;
    a.resize(n, n);
    v1.resize(n, k);
    v2.resize(n, k);
    v3.resize(n, k);
    v4.resize(n, k);
  }

  auto record = [&](int step) {
    int col = direction == Direction::Forward ? step : steps - step;
    ws.load(z, false);
    path.xs.col(col) = z.head(d);
    path.ps.col(col) = z.tail(d);
    path.hdot.col(col) = ws.u().tail(m);
    path.drift_pairing(col) = ws.u()(0);
    return ws.hamiltonian();
  };

  const double c = record(0);
  double worst = 0.0;
  for (int s = 0; s < steps; ++s) {
    if (variational) {
      ws.rhs_and_linearization(z, k1, a);
      v1.noalias() = a * v;
      zs = z + 0.5 * h * k1;
      vs = v + 0.5 * h * v1;
      ws.rhs_and_linearization(zs, k2, a);
      v2.noalias() = a * vs;
      zs = z + 0.5 * h * k2;
      vs = v + 0.5 * h * v2;
      ws.rhs_and_linearization(zs, k3, a);
      v3.noalias() = a * vs;
      zs = z + h * k3;
      vs = v + h * v3;
      ws.rhs_and_linearization(zs, k4, a);
      v4.noalias() = a * vs;
      v += (h / 6.0) * (v1 + 2.0 * v2 + 2.0 * v3 + v4);
    } else {
      ws.rhs(z, k1);
      zs = z + 0.5 * h * k1;
      ws.rhs(zs, k2);
      zs = z + 0.5 * h * k2;
      ws.rhs(zs, k3);
      zs = z + h * k3;
      ws.rhs(zs, k4);
    }
    z += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!z.allFinite() || z.lpNorm<Eigen::Infinity>() > options.overflow_guard ||
        (variational && !v.allFinite())) {
      fail(ErrorKind::DivergedFlow, "Hamiltonian flow diverged at step " + std::to_string(s + 1) +
                                        " of " + std::to_string(steps));
    }
    worst = std::max(worst, std::abs(record(s + 1) - c));
  }

  path.hamiltonian_value = c;
  path.conservation_error = worst;
  const double limit = 100.0 * options.tol_conserve * (1.0 + std::abs(c));
  if (options.enforce_conservation && worst > limit) {
    std::ostringstream msg;
    msg << "Hamiltonian drift " << worst << " exceeds " << limit << " with " << steps
        << " steps; increase steps";
    fail(ErrorKind::Accuracy, msg.str());
  }
  path.energy_direct = energy_direct(path);
  if (variational) result.jacobian = std::move(v);
  return result;
}

Mat seed_for(int d, SeedBlock block) {
  Mat seed = Mat::Zero(2 * d, block == SeedBlock::Full ? 2 * d : d);
  switch (block) {
    case SeedBlock::Position: seed.topRows(d).setIdentity(); break;
    case SeedBlock::Covector: seed.bottomRows(d).setIdentity(); break;
    case SeedBlock::Full: seed.setIdentity(); break;
  }
  return seed;
}

}  // namespace

double eval_hamiltonian(const VectorFieldSystem& sys, const CotangentPoint& q) {
  check_endpoint(sys, q);
  Workspace ws(sys);
  ws.load(stack(q), false);
  return ws.hamiltonian();
}

Vec hamiltonian_rhs(const VectorFieldSystem& sys, const CotangentPoint& q) {
  check_endpoint(sys, q);
  Workspace ws(sys);
  Vec out(2 * sys.d());
  ws.rhs(stack(q), out);
  return out;
}

HamiltonianHessian hamiltonian_hessian(const VectorFieldSystem& sys, const CotangentPoint& q) {
  check_endpoint(sys, q);
  const int d = sys.d();
  Workspace ws(sys);
  Mat a(2 * d, 2 * d);
  ws.linearization(stack(q), a);
  return {a.topLeftCorner(d, d), a.topRightCorner(d, d), -a.bottomLeftCorner(d, d)};
}

PhasePath flow(const VectorFieldSystem& sys, const CotangentPoint& endpoint, double T,
               Direction direction, int steps, const FlowOptions& options) {
  return integrate(sys, endpoint, T, direction, steps, nullptr, options).path;
}

FlowWithJacobian flow_with_jacobian(const VectorFieldSystem& sys, const CotangentPoint& endpoint,
                                    double T, Direction direction, int steps, const Mat& seed,
                                    const FlowOptions& options) {
  return integrate(sys, endpoint, T, direction, steps, &seed, options);
}

Mat flow_jacobian(const VectorFieldSystem& sys, const CotangentPoint& endpoint, double T,
                  Direction direction, int steps, const Mat& seed, const FlowOptions& options) {
  return integrate(sys, endpoint, T, direction, steps, &seed, options).jacobian;
}

Mat flow_jacobian(const VectorFieldSystem& sys, const CotangentPoint& endpoint, double T,
                  Direction direction, int steps, SeedBlock block, const FlowOptions& options) {
  Mat seed = seed_for(sys.d(), block);
  return integrate(sys, endpoint, T, direction, steps, &seed, options).jacobian;
}

double energy_direct(const PhasePath& path) {
  const int n = path.steps();
  Vec w = simpson_weights(n, path.T / n);
  return 0.5 * w.dot(path.hdot.colwise().squaredNorm().transpose());
}

double energy_invariant(const PhasePath& path) {
  const int n = path.steps();
  Vec w = simpson_weights(n, path.T / n);
  return path.T * path.hamiltonian_value - w.dot(path.drift_pairing);
}

void write_path_csv(std::ostream& out, const PhasePath& path) {
  const int d = static_cast<int>(path.xs.rows());
  const int m = static_cast<int>(path.hdot.rows());
  out << "t";
  for (int j = 1; j <= d; ++j) out << ",x" << j;
  for (int j = 1; j <= d; ++j) out << ",p" << j;
  for (int j = 1; j <= m; ++j) out << ",hdot" << j;
  out << '\n' << std::setprecision(17);
  for (int k = 0; k <= path.steps(); ++k) {
    out << path.grid(k);
    for (int j = 0; j < d; ++j) out << ',' << path.xs(j, k);
    for (int j = 0; j < d; ++j) out << ',' << path.ps(j, k);
    for (int j = 0; j < m; ++j) out << ',' << path.hdot(j, k);
    out << '\n';
  }
}

}  // namespace smallnoise
