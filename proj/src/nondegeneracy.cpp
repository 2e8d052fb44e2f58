#include "smallnoise/nondegeneracy.hpp"

#include "controlled.hpp"
#include "smallnoise/parallel.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace smallnoise {

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::NdHolds: return "ND_HOLDS";
    case Verdict::Focal: return "FOCAL";
    case Verdict::SingularMalliavin: return "SINGULAR_MALLIAVIN";
    case Verdict::Continuum: return "CONTINUUM";
    case Verdict::Undecided: return "UNDECIDED";
  }
  return "UNKNOWN";
}

Mat malliavin_covariance(const VectorFieldSystem& sys, const Minimizer& minimizer, int steps) {
  const int d = sys.d();
  const int m = sys.m();
  const double T = minimizer.path.T;
  if (steps < 2 || steps % 2 != 0) {
    fail(ErrorKind::Internal, "Malliavin quadrature needs an even grid, got " + std::to_string(steps));
  }
  // (x, p, Phi) integrated jointly; Phi_{t<-0} solves Phi' = A(t) Phi
  ControlledSystem cs(sys);
  const double h = T / steps;
  Vec z(2 * d);
  z << sys.start_limit(), minimizer.p0;
  Mat phi = Mat::Identity(d, d);
  std::vector<Mat> phis(steps + 1), controls(steps + 1);
  Mat s(d, m), a(d, d);
  Vec u(m);

  auto sample = [&](int k) {
    cs.control_matrix(z.head(d), s);
    controls[k] = s;
    phis[k] = phi;
  };
  auto deriv = [&](const Vec& zz, const Mat& ph, Vec& dz, Mat& dph) {
    dz = hamiltonian_rhs(sys, {zz.head(d), zz.tail(d)});
    cs.feedback(zz.head(d), zz.tail(d), u);
    cs.state_jacobian(zz.head(d), u, a);
    dph = a * ph;
  };

  sample(0);
  Vec k1, k2, k3, k4;
  Mat q1, q2, q3, q4;
  for (int n = 0; n < steps; ++n) {
    deriv(z, phi, k1, q1);
    deriv(z + 0.5 * h * k1, phi + 0.5 * h * q1, k2, q2);
    deriv(z + 0.5 * h * k2, phi + 0.5 * h * q2, k3, q3);
    deriv(z + h * k3, phi + h * q3, k4, q4);
    z += (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4);
    phi += (h / 6.0) * (q1 + 2 * q2 + 2 * q3 + q4);
    if (!z.allFinite() || !phi.allFinite()) {
      fail(ErrorKind::DivergedFlow, "linearized flow diverged while forming the Malliavin matrix");
    }
    sample(n + 1);
  }

  Vec w = simpson_weights(steps, h);
  const Mat& phi_T = phis.back();
  Mat c = Mat::Zero(d, d);
  for (int k = 0; k <= steps; ++k) {
    // Phi_{T<-t} S = Phi_T Phi_t^{-1} S
    Mat g = phi_T * phis[k].partialPivLu().solve(controls[k]);
    c.noalias() += w(k) * g * g.transpose();
  }
  return 0.5 * (c + c.transpose());
}

InvertibilityCheck check_invertibility(const Mat& c, double scale, double tol_sv) {
  if (c.rows() != c.cols()) fail(ErrorKind::DimensionMismatch, "covariance must be square");
  require_finite(c, "covariance");
  const double size = c.cwiseAbs().maxCoeff();
  if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-10 * (1.0 + size)) {
    fail(ErrorKind::InvalidArgument, "covariance is not symmetric");
  }
  Eigen::JacobiSVD<Mat> svd(c);
  const Vec& sv = svd.singularValues();
  InvertibilityCheck out;
  out.largest_singular_value = sv(0);
  out.smallest_singular_value = sv(sv.size() - 1);
  const double reference = scale > 0.0 ? scale : out.largest_singular_value;
  out.invertible = out.smallest_singular_value > tol_sv * reference && reference > 0.0;
  return out;
}

std::optional<double> ellipticity_witness(const VectorFieldSystem& sys, const PhasePath& path,
                                          double tol_sv) {
  const int d = sys.d();
  if (sys.m() < d) return std::nullopt;
  for (int k = 0; k <= path.steps(); ++k) {
    Mat s = diffusion_matrix(sys, path.xs.col(k));
    Eigen::JacobiSVD<Mat> svd(s);
    const Vec& sv = svd.singularValues();
    if (sv(0) > 0.0 && sv(d - 1) > tol_sv * sv(0)) return path.grid(k);
  }
  return std::nullopt;
}

BracketRank hormander_rank(const VectorFieldSystem& sys, const ConstVecRef& x, int depth,
                           bool include_drift, double tol_sv) {
  if (depth < 1 || depth > 4) {
    fail(ErrorKind::InvalidArgument, "bracket depth must be between 1 and 4, got " + std::to_string(depth));
  }
  if (x.size() != sys.d()) fail(ErrorKind::DimensionMismatch, "point must have dimension d");
  require_finite(x, "bracket point");
  auto fields = sys.polynomial_fields();
  std::vector<PolyField> generators;
  if (include_drift && !fields.front().is_zero()) generators.push_back(fields.front());
  for (int i = 1; i <= sys.m(); ++i) generators.push_back(fields[i]);

  std::vector<PolyField> level(fields.begin() + 1, fields.end());
  std::vector<PolyField> all = level;
  for (int k = 2; k <= depth; ++k) {
    std::vector<PolyField> next;
    for (const auto& g : generators) {
      for (const auto& v : level) {
        PolyField b = lie_bracket(g, v);
        if (!b.is_zero()) next.push_back(std::move(b));
      }
    }
    all.insert(all.end(), next.begin(), next.end());
    level = std::move(next);
  }
  Mat span(sys.d(), static_cast<Eigen::Index>(all.size()));
  for (std::size_t j = 0; j < all.size(); ++j) span.col(static_cast<Eigen::Index>(j)) = all[j](x);
  BracketRank out;
  out.bracket_count = static_cast<int>(all.size());
  Eigen::JacobiSVD<Mat> svd(span);
  const Vec& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return out;
  for (Eigen::Index j = 0; j < sv.size(); ++j) out.rank += sv(j) > tol_sv * sv(0) ? 1 : 0;
  return out;
}

Nonfocality nonfocality_matrix(const VectorFieldSystem& sys, const Minimizer& minimizer, int steps) {
  const int d = sys.d();
  const int l = sys.l();
  // full sensitivity of the backward flow; the (z, q) columns form M
  CotangentPoint end = minimizer.path.back();
  Mat jac = flow_jacobian(sys, end, minimizer.path.T, Direction::Backward, steps, SeedBlock::Full);
  Nonfocality out;
  out.matrix.resize(d, d);
  out.matrix.leftCols(d - l) = jac.block(0, l, d, d - l);  // z: free terminal coordinates
  out.matrix.rightCols(l) = jac.block(0, d, d, l);         // q: transversal covector slots
  out.det = out.matrix.determinant();
  // Hadamard bound from the rows of dx(0)/d(x_T, p_T): invariant under
  // rescaling of x(0) coordinates, and does not collapse when a whole row of
  // M degenerates at a symmetric focal point
  out.scale = jac.topRows(d).rowwise().norm().prod();
  return out;
}

namespace {

// Piecewise-constant controls on a uniform grid, RK4 with a fixed number of
// substeps per interval, and the exact discrete adjoint of that scheme.
class DiscreteEndpointMap {
 public:
  DiscreteEndpointMap(const VectorFieldSystem& sys, double T, int intervals, int substeps)
      : sys_(sys), cs_(sys), d_(sys.d()), m_(sys.m()), n_(intervals), sub_(substeps),
        h_(T / (intervals * substeps)), stages_(static_cast<std::size_t>(intervals * substeps) * 4) {}

  // Forward pass; stores every stage input for the adjoint.
  Vec endpoint(const Mat& u) {
    Vec x = sys_.start_limit();
    Vec k1(d_), k2(d_), k3(d_), k4(d_), y(d_);
    std::size_t s = 0;
    for (int j = 0; j < n_; ++j) {
      const auto uj = u.col(j);
      for (int r = 0; r < sub_; ++r) {
        stages_[s++] = x;
        cs_.velocity(x, uj, k1);
        y = x + 0.5 * h_ * k1;
        stages_[s++] = y;
        cs_.velocity(y, uj, k2);
        y = x + 0.5 * h_ * k2;
        stages_[s++] = y;
        cs_.velocity(y, uj, k3);
        y = x + h_ * k3;
        stages_[s++] = y;
        cs_.velocity(y, uj, k4);
        x += (h_ / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      }
    }
    if (!x.allFinite()) fail(ErrorKind::DivergedFlow, "discretized endpoint map diverged");
    return x;
  }

  // Gradient of <lambda, x_T> with respect to u (m x intervals); requires a
  // preceding endpoint(u) call with the same u.
  Mat gradient(const Mat& u, const Vec& lambda) {
    Mat grad = Mat::Zero(m_, n_);
    Vec bar = lambda;
    Mat a(d_, d_), b(d_, m_);
    Vec by(d_), carry(d_), ak(d_);
    const double coeff[4] = {h_ / 6.0, h_ / 3.0, h_ / 3.0, h_ / 6.0};
    const double shift[4] = {0.0, 0.5 * h_, 0.5 * h_, h_};  // y_i = x + shift_i k_{i-1}
    for (int j = n_ - 1; j >= 0; --j) {
      const auto uj = u.col(j);
      for (int r = sub_ - 1; r >= 0; --r) {
        const std::size_t base = static_cast<std::size_t>(j * sub_ + r) * 4;
        Vec bar_x = bar;
        carry.setZero();
        for (int st = 3; st >= 0; --st) {
          const Vec& y = stages_[base + st];
          ak = coeff[st] * bar + carry;  // cotangent of k_st
          cs_.state_jacobian(y, uj, a);
          cs_.control_matrix(y, b);
          by.noalias() = a.transpose() * ak;
          grad.col(j).noalias() += b.transpose() * ak;
          bar_x += by;
          carry = shift[st] * by;  // flows into k_{st-1}
        }
        bar = bar_x;
      }
    }
    return grad;
  }

  int intervals() const { return n_; }

 private:
  const VectorFieldSystem& sys_;
  ControlledSystem cs_;
  int d_, m_, n_, sub_;
  double h_;
  std::vector<Vec> stages_;
};

Mat flatten_as(const Vec& v, int rows, int cols) { return Eigen::Map<const Mat>(v.data(), rows, cols); }

Vec flatten(const Mat& m) { return Eigen::Map<const Vec>(m.data(), m.size()); }

}  // namespace

HessianOracle hessian_oracle(const VectorFieldSystem& sys, const Minimizer& minimizer,
                             const TargetSpec& target, int grid_size, int substeps) {
  if (grid_size < 16) fail(ErrorKind::InvalidArgument, "Hessian oracle needs grid_size >= 16");
  if (substeps < 1) fail(ErrorKind::InvalidArgument, "substeps must be positive");
  check_target(sys, target);
  const int d = sys.d();
  const int m = sys.m();
  const int l = sys.l();
  const int n = grid_size;
  const double dt = target.T / n;

  // base controls: hdot at interval midpoints of the minimizer
  auto fine = flow(sys, {sys.start_limit(), minimizer.p0}, target.T, Direction::Forward, 2 * n * substeps);
  Mat u0(m, n);
  for (int j = 0; j < n; ++j) u0.col(j) = fine.hdot.col((2 * j + 1) * substeps);

  DiscreteEndpointMap map(sys, target.T, n, substeps);
  map.endpoint(u0);
  Vec lambda = Vec::Zero(d);
  lambda.head(l) = minimizer.q_T;

  // constraint Jacobian D(Pi F), one adjoint sweep per projected coordinate
  const int dim = m * n;
  Mat dc(l, dim);
  for (int j = 0; j < l; ++j) dc.row(j) = flatten(map.gradient(u0, Vec::Unit(d, j))).transpose();

  // Hessian of <lambda, F> by central differences of the exact gradient
  const double delta = 1e-6 * (1.0 + u0.cwiseAbs().maxCoeff());
  Mat hg(dim, dim);
  Vec base = flatten(u0);
  for (int c = 0; c < dim; ++c) {
    Vec up = base, down = base;
    up(c) += delta;
    down(c) -= delta;
    Mat uu = flatten_as(up, m, n);
    map.endpoint(uu);
    Vec gp = flatten(map.gradient(uu, lambda));
    Mat ud = flatten_as(down, m, n);
    map.endpoint(ud);
    Vec gm = flatten(map.gradient(ud, lambda));
    hg.col(c) = (gp - gm) / (2.0 * delta);
  }
  Mat hess = dt * Mat::Identity(dim, dim) - 0.5 * (hg + hg.transpose());

  Eigen::JacobiSVD<Mat> svd(dc, Eigen::ComputeFullV);
  const Vec& sv = svd.singularValues();
  int rank = 0;
  for (Eigen::Index j = 0; j < sv.size(); ++j) rank += sv(j) > 1e-10 * std::max(sv(0), 1e-300) ? 1 : 0;
  if (rank < l) {
    fail(ErrorKind::RankDeficient, "constraint Jacobian has rank " + std::to_string(rank) +
                                       " < l=" + std::to_string(l) + "; the endpoint map is degenerate");
  }
  Mat z = svd.matrixV().rightCols(dim - rank);
  Mat reduced = z.transpose() * hess * z / dt;
  Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (reduced + reduced.transpose()));
  HessianOracle out;
  out.kernel_dim = dim - rank;
  out.min_eig = eig.eigenvalues()(0);
  Vec mode = z * eig.eigenvectors().col(0);
  out.null_direction = flatten_as(mode, m, n);
  return out;
}

NdReport assemble_nd_report(const VectorFieldSystem& sys, const MinimizerSet& set,
                            const TargetSpec& target, const NdOptions& options) {
  const auto& th = options.thresholds;
  NdReport report;
  report.thresholds = th;
  report.minimizer_count = static_cast<int>(set.minimizers.size());
  report.continuum_flag = set.continuum_flag;
  report.degenerate_zero_control = set.degenerate_zero_control;
  report.records.resize(set.minimizers.size());
  const bool oracle = options.hessian_oracle && !set.continuum_flag;

  parallel_for(set.minimizers.size(), options.jobs, [&](std::size_t i) {
    const Minimizer& mz = set.minimizers[i];
    MinimizerNd& rec = report.records[i];
    rec.malliavin = malliavin_covariance(sys, mz, options.steps);
    rec.invertibility = check_invertibility(rec.malliavin, 0.0, th.tol_sv);
    rec.ellipticity_time = ellipticity_witness(sys, mz.path, th.tol_sv);
    rec.nonfocality = nonfocality_matrix(sys, mz, options.steps);
    rec.focal_threshold = th.tol_focal * rec.nonfocality.scale;
    if (oracle && rec.invertibility.invertible) {
      rec.hessian = hessian_oracle(sys, mz, target, options.hessian_grid);
    }
    const double det = std::abs(rec.nonfocality.det);
    if (!rec.invertibility.invertible) {
      rec.verdict = Verdict::SingularMalliavin;
    } else if (det < rec.focal_threshold || rec.nonfocality.scale == 0.0) {
      rec.verdict = Verdict::Focal;
    } else if (det < th.undecided_band * rec.focal_threshold) {
      rec.verdict = Verdict::Undecided;
    } else {
      rec.verdict = Verdict::NdHolds;
    }
  });

  auto any = [&](Verdict v) {
    return std::any_of(report.records.begin(), report.records.end(),
                       [&](const MinimizerNd& r) { return r.verdict == v; });
  };
  if (report.continuum_flag) {
    report.verdict = Verdict::Continuum;
  } else if (any(Verdict::SingularMalliavin)) {
    report.verdict = Verdict::SingularMalliavin;
  } else if (any(Verdict::Focal)) {
    report.verdict = Verdict::Focal;
  } else if (any(Verdict::Undecided)) {
    report.verdict = Verdict::Undecided;
  } else {
    report.verdict = Verdict::NdHolds;
  }
  return report;
}

}  // namespace smallnoise
