#include "smallnoise/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace smallnoise {

VectorFieldSystem::VectorFieldSystem(std::string name, int d, int m, int l)
    : name_(std::move(name)), d_(d), m_(m), l_(l), order_(d) {
  if (d <= 0 || m <= 0) fail(ErrorKind::DimensionMismatch, "d and m must be positive");
  if (l < 1 || l > d) {
    fail(ErrorKind::DimensionMismatch,
         "projection dimension l=" + std::to_string(l) + " must satisfy 1 <= l <= d=" +
             std::to_string(d));
  }
  std::iota(order_.begin(), order_.end(), 0);
}

namespace {

void check_index(const VectorFieldSystem& sys, int i) {
  if (i < 0 || i > sys.m()) {
    fail(ErrorKind::InvalidArgument,
         "field index " + std::to_string(i) + " out of range 0.." + std::to_string(sys.m()));
  }
}

void check_point(const VectorFieldSystem& sys, const ConstVecRef& x) {
  if (x.size() != sys.d()) {
    fail(ErrorKind::DimensionMismatch,
         "point has dimension " + std::to_string(x.size()) + ", expected " +
             std::to_string(sys.d()));
  }
  require_finite(x, "state");
}

double param(const Params& p, const std::string& key, double fallback) {
  auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

void reject_unknown(const std::string& model, const Params& p,
                    std::initializer_list<const char*> known) {
  for (const auto& [key, value] : p) {
    bool ok = std::any_of(known.begin(), known.end(), [&](const char* k) { return key == k; });
    if (!ok) fail(ErrorKind::Config, "unknown parameter '" + key + "' for builtin " + model);
    if (!std::isfinite(value)) fail(ErrorKind::NonFinite, "parameter '" + key + "' is not finite");
  }
}

Polynomial mono(int n, std::vector<int> e, double c) {
  return Polynomial(n, {Term{std::move(e), c}});
}

// Builtins carry hand-coded fields and Jacobians; the polynomial form is kept
// alongside for bracket computations and cross-checks.
class BuiltinSystem : public VectorFieldSystem {
 public:
  using VectorFieldSystem::VectorFieldSystem;

  std::vector<PolyField> polynomial_fields() const override { return poly_; }
  bool drift_free() const override { return poly_.front().is_zero(); }

  void hessian_contract(int, const ConstVecRef&, const ConstVecRef&, MatRef out) const override {
    // every builtin field is affine
    out.setZero();
  }

 protected:
  std::vector<PolyField> poly_;
};

class Ou1d final : public BuiltinSystem {
 public:
  explicit Ou1d(const Params& p) : BuiltinSystem("ou1d", 1, 1, 1) {
    reject_unknown("ou1d", p, {"alpha", "beta", "gamma", "yhat0"});
    alpha_ = param(p, "alpha", 0.0);
    beta_ = param(p, "beta", 0.0);
    gamma_ = param(p, "gamma", 1.0);
    yhat0_ = param(p, "yhat0", 0.0);
    poly_ = {PolyField({mono(1, {1}, beta_)}), PolyField({Polynomial::constant(1, gamma_)})};
  }

  void field(int i, const ConstVecRef& x, VecRef out) const override {
    out(0) = i == 0 ? beta_ * x(0) : gamma_;
  }
  void jacobian(int i, const ConstVecRef&, MatRef out) const override {
    out(0, 0) = i == 0 ? beta_ : 0.0;
  }
  void drift(double eps, const ConstVecRef& x, VecRef out) const override {
    out(0) = alpha_ * eps + beta_ * x(0);
  }
  void drift_eps_deriv(const ConstVecRef&, VecRef out) const override { out(0) = alpha_; }
  Vec start(double eps) const override { return Vec::Constant(1, eps * yhat0_); }
  Vec start_deriv() const override { return Vec::Constant(1, yhat0_); }

 private:
  double alpha_, beta_, gamma_, yhat0_;
};

class Langevin final : public BuiltinSystem {
 public:
  explicit Langevin(const Params& p) : BuiltinSystem("langevin", 2, 1, 1) {
    reject_unknown("langevin", p, {"yhat0", "zhat0"});
    hat_ = Vec(2);
    hat_ << param(p, "yhat0", 0.0), param(p, "zhat0", 0.0);
    poly_ = {PolyField({mono(2, {0, 1}, 1.0), Polynomial(2)}),
             PolyField({Polynomial(2), Polynomial::constant(2, 1.0)})};
  }

  void field(int i, const ConstVecRef& x, VecRef out) const override {
    if (i == 0) {
      out << x(1), 0.0;
    } else {
      out << 0.0, 1.0;
    }
  }
  void jacobian(int i, const ConstVecRef&, MatRef out) const override {
    out.setZero();
    if (i == 0) out(0, 1) = 1.0;
  }
  void drift(double, const ConstVecRef& x, VecRef out) const override { out << x(1), 0.0; }
  void drift_eps_deriv(const ConstVecRef&, VecRef out) const override { out.setZero(); }
  Vec start(double eps) const override { return eps * hat_; }
  Vec start_deriv() const override { return hat_; }

 private:
  Vec hat_;
};

class FlatMetric final : public BuiltinSystem {
 public:
  explicit FlatMetric(const Params& p) : BuiltinSystem("flatmetric", 2, 2, 1) {
    reject_unknown("flatmetric", p, {"theta"});
    theta_ = param(p, "theta", 0.0);
    poly_ = {PolyField::zero(2, 2),
             PolyField({Polynomial::constant(2, 1.0), Polynomial(2)}),
             PolyField({mono(2, {0, 1}, theta_), Polynomial::constant(2, 1.0)})};
  }

  void field(int i, const ConstVecRef& x, VecRef out) const override {
    switch (i) {
      case 0: out.setZero(); break;
      case 1: out << 1.0, 0.0; break;
      default: out << theta_ * x(1), 1.0; break;
    }
  }
  void jacobian(int i, const ConstVecRef&, MatRef out) const override {
    out.setZero();
    if (i == 2) out(0, 1) = theta_;
  }
  void drift(double, const ConstVecRef&, VecRef out) const override { out.setZero(); }
  void drift_eps_deriv(const ConstVecRef&, VecRef out) const override { out.setZero(); }
  Vec start(double) const override { return Vec::Zero(2); }
  Vec start_deriv() const override { return Vec::Zero(2); }

 private:
  double theta_;
};

class Heisenberg final : public BuiltinSystem {
 public:
  explicit Heisenberg(const Params& p) : BuiltinSystem("heisenberg", 3, 2, 3) {
    reject_unknown("heisenberg", p, {"xhat0", "yhat0", "zhat0"});
    hat_ = Vec(3);
    hat_ << param(p, "xhat0", 0.0), param(p, "yhat0", 0.0), param(p, "zhat0", 0.0);
    poly_ = {PolyField::zero(3, 3),
             PolyField({Polynomial::constant(3, 1.0), Polynomial(3), mono(3, {0, 1, 0}, -0.5)}),
             PolyField({Polynomial(3), Polynomial::constant(3, 1.0), mono(3, {1, 0, 0}, 0.5)})};
  }

  void field(int i, const ConstVecRef& x, VecRef out) const override {
    switch (i) {
      case 0: out.setZero(); break;
      case 1: out << 1.0, 0.0, -0.5 * x(1); break;
      default: out << 0.0, 1.0, 0.5 * x(0); break;
    }
  }
  void jacobian(int i, const ConstVecRef&, MatRef out) const override {
    out.setZero();
    if (i == 1) out(2, 1) = -0.5;
    if (i == 2) out(2, 0) = 0.5;
  }
  void drift(double, const ConstVecRef&, VecRef out) const override { out.setZero(); }
  void drift_eps_deriv(const ConstVecRef&, VecRef out) const override { out.setZero(); }
  Vec start(double eps) const override { return eps * hat_; }
  Vec start_deriv() const override { return hat_; }

 private:
  Vec hat_;
};

class PolynomialSystem final : public VectorFieldSystem {
 public:
  PolynomialSystem(const PolynomialModelSpec& s, const std::vector<int>& order)
      : VectorFieldSystem(s.name, s.d, s.m, s.l) {
    set_state_order(order);
    std::vector<int> inv(s.d);
    for (int j = 0; j < s.d; ++j) inv[order[j]] = j;
    for (const auto& f : s.fields) fields_.push_back(f.relabel(inv));
    drift_terms_.push_back(s.drift_eps.relabel(inv));
    for (const auto& f : s.drift_eps_higher) drift_terms_.push_back(f.relabel(inv));
    x0_ = Vec(s.d);
    x0_hat_ = Vec(s.d);
    for (int j = 0; j < s.d; ++j) {
      x0_(j) = s.x0(order[j]);
      x0_hat_(j) = s.x0_hat(order[j]);
    }
  }

  void field(int i, const ConstVecRef& x, VecRef out) const override { fields_[i].eval(x, out); }
  void jacobian(int i, const ConstVecRef& x, MatRef out) const override {
    fields_[i].jacobian(x, out);
  }
  void hessian_contract(int i, const ConstVecRef& x, const ConstVecRef& w,
                        MatRef out) const override {
    fields_[i].hessian_contract(x, w, out);
  }
  void drift(double eps, const ConstVecRef& x, VecRef out) const override {
    fields_[0].eval(x, out);
    Vec tmp(d());
    double power = 1.0;
    for (const auto& term : drift_terms_) {
      power *= eps;
      if (term.is_zero()) continue;
      term.eval(x, tmp);
      out += power * tmp;
    }
  }
  void drift_eps_deriv(const ConstVecRef& x, VecRef out) const override {
    drift_terms_.front().eval(x, out);
  }
  Vec start(double eps) const override { return x0_ + eps * x0_hat_; }
  Vec start_deriv() const override { return x0_hat_; }
  std::vector<PolyField> polynomial_fields() const override { return fields_; }
  bool drift_free() const override { return fields_.front().is_zero(); }

 private:
  std::vector<PolyField> fields_;
  std::vector<PolyField> drift_terms_;
  Vec x0_;
  Vec x0_hat_;
};

class PermutedSystem final : public VectorFieldSystem {
 public:
  PermutedSystem(SystemPtr base, std::vector<int> local, int l)
      : VectorFieldSystem(base->name(), base->d(), base->m(), l),
        base_(std::move(base)),
        local_(std::move(local)) {
    std::vector<int> order(d());
    for (int j = 0; j < d(); ++j) order[j] = base_->state_order()[local_[j]];
    set_state_order(order);
  }

  void field(int i, const ConstVecRef& x, VecRef out) const override {
    Scratch& s = scratch();
    to_base(x, s.x);
    base_->field(i, s.x, s.y);
    from_base(s.y, out);
  }
  void jacobian(int i, const ConstVecRef& x, MatRef out) const override {
    Scratch& s = scratch();
    to_base(x, s.x);
    base_->jacobian(i, s.x, s.m);
    permute_matrix(s.m, out);
  }
  void hessian_contract(int i, const ConstVecRef& x, const ConstVecRef& w,
                        MatRef out) const override {
    Scratch& s = scratch();
    to_base(x, s.x);
    to_base(w, s.w);
    base_->hessian_contract(i, s.x, s.w, s.m);
    permute_matrix(s.m, out);
  }
  void drift(double eps, const ConstVecRef& x, VecRef out) const override {
    Scratch& s = scratch();
    to_base(x, s.x);
    base_->drift(eps, s.x, s.y);
    from_base(s.y, out);
  }
  void drift_eps_deriv(const ConstVecRef& x, VecRef out) const override {
    Scratch& s = scratch();
    to_base(x, s.x);
    base_->drift_eps_deriv(s.x, s.y);
    from_base(s.y, out);
  }
  Vec start(double eps) const override {
    Vec out(d());
    from_base(base_->start(eps), out);
    return out;
  }
  Vec start_deriv() const override {
    Vec out(d());
    from_base(base_->start_deriv(), out);
    return out;
  }
  std::vector<PolyField> polynomial_fields() const override {
    std::vector<int> inv(d());
    for (int j = 0; j < d(); ++j) inv[local_[j]] = j;
    std::vector<PolyField> out;
    for (const auto& f : base_->polynomial_fields()) out.push_back(f.relabel(inv));
    return out;
  }
  bool drift_free() const override { return base_->drift_free(); }

 private:
  // per-thread buffers keep evaluation allocation-free and thread safe
  struct Scratch {
    Vec x, y, w;
    Mat m;
  };
  Scratch& scratch() const {
    thread_local Scratch s;
    if (s.x.size() != d()) {
      s.x.resize(d());
      s.y.resize(d());
      s.w.resize(d());
      s.m.resize(d(), d());
    }
    return s;
  }
  void to_base(const ConstVecRef& x, Vec& y) const {
    for (int j = 0; j < d(); ++j) y(local_[j]) = x(j);
  }
  void from_base(const ConstVecRef& y, VecRef out) const {
    for (int j = 0; j < d(); ++j) out(j) = y(local_[j]);
  }
  void permute_matrix(const Mat& m, MatRef out) const {
    for (int j = 0; j < d(); ++j) {
      for (int k = 0; k < d(); ++k) out(j, k) = m(local_[j], local_[k]);
    }
  }

  SystemPtr base_;
  std::vector<int> local_;
};

class ShortTimeSystem final : public VectorFieldSystem {
 public:
  explicit ShortTimeSystem(SystemPtr base)
      : VectorFieldSystem(base->name() + "/short_time", base->d(), base->m(), base->l()),
        base_(std::move(base)),
        x0_(base_->start_limit()) {
    set_state_order(base_->state_order());
  }

  void field(int i, const ConstVecRef& x, VecRef out) const override {
    if (i == 0) {
      out.setZero();
    } else {
      base_->field(i, x, out);
    }
  }
  void jacobian(int i, const ConstVecRef& x, MatRef out) const override {
    if (i == 0) {
      out.setZero();
    } else {
      base_->jacobian(i, x, out);
    }
  }
  void hessian_contract(int i, const ConstVecRef& x, const ConstVecRef& w,
                        MatRef out) const override {
    if (i == 0) {
      out.setZero();
    } else {
      base_->hessian_contract(i, x, w, out);
    }
  }
  void drift(double eps, const ConstVecRef& x, VecRef out) const override {
    base_->field(0, x, out);
    out *= eps * eps;
  }
  void drift_eps_deriv(const ConstVecRef&, VecRef out) const override { out.setZero(); }
  Vec start(double) const override { return x0_; }
  Vec start_deriv() const override { return Vec::Zero(d()); }
  std::vector<PolyField> polynomial_fields() const override {
    auto f = base_->polynomial_fields();
    f.front() = PolyField::zero(d(), d());
    return f;
  }
  bool drift_free() const override { return true; }

 private:
  SystemPtr base_;
  Vec x0_;
};

std::vector<int> order_from_projection(int d, const std::vector<int>& projection) {
  if (projection.empty()) fail(ErrorKind::Config, "projection must select at least one coordinate");
  for (std::size_t k = 0; k < projection.size(); ++k) {
    if (projection[k] < 0 || projection[k] >= d) {
      fail(ErrorKind::Config, "projection coordinate " + std::to_string(projection[k]) +
                                  " out of range for d=" + std::to_string(d));
    }
    if (k > 0 && projection[k] <= projection[k - 1]) {
      fail(ErrorKind::Config, "projection coordinates must be strictly increasing");
    }
  }
  std::vector<int> order = projection;
  for (int j = 0; j < d; ++j) {
    if (std::find(projection.begin(), projection.end(), j) == projection.end()) order.push_back(j);
  }
  return order;
}

}  // namespace

SystemPtr make_polynomial_system(const PolynomialModelSpec& spec) {
  const int d = spec.d;
  if (d <= 0 || spec.m <= 0) fail(ErrorKind::DimensionMismatch, "dims d and m must be positive");
  if (spec.l < 1 || spec.l > d) {
    fail(ErrorKind::DimensionMismatch, "l must satisfy 1 <= l <= d");
  }
  if (static_cast<int>(spec.fields.size()) != spec.m + 1) {
    fail(ErrorKind::DimensionMismatch, "expected " + std::to_string(spec.m + 1) +
                                           " field tables (sigma_0..sigma_m), got " +
                                           std::to_string(spec.fields.size()));
  }
  auto check_field = [&](const PolyField& f, const std::string& what) {
    if (f.dim() != d) {
      fail(ErrorKind::DimensionMismatch,
           what + " has " + std::to_string(f.dim()) + " components, expected " + std::to_string(d));
    }
    if (f.nvars() != d) {
      fail(ErrorKind::DimensionMismatch, what + " has monomials in " + std::to_string(f.nvars()) +
                                             " variables, expected " + std::to_string(d));
    }
  };
  for (int i = 0; i <= spec.m; ++i) check_field(spec.fields[i], "field " + std::to_string(i));
  check_field(spec.drift_eps, "drift_eps");
  for (const auto& f : spec.drift_eps_higher) check_field(f, "drift_eps_higher entry");
  if (spec.x0.size() != d || spec.x0_hat.size() != d) {
    fail(ErrorKind::DimensionMismatch, "start vectors must have dimension d");
  }
  std::vector<int> projection = spec.projection;
  if (projection.empty()) {
    projection.resize(spec.l);
    std::iota(projection.begin(), projection.end(), 0);
  }
  if (static_cast<int>(projection.size()) != spec.l) {
    fail(ErrorKind::DimensionMismatch, "projection selects " + std::to_string(projection.size()) +
                                           " coordinates but l=" + std::to_string(spec.l));
  }
  return std::make_shared<PolynomialSystem>(spec, order_from_projection(d, projection));
}

const std::vector<std::string>& builtin_names() {
  static const std::vector<std::string> names = {"ou1d", "langevin", "flatmetric", "heisenberg"};
  return names;
}

SystemPtr make_builtin(const std::string& name, const Params& params,
                       const std::vector<int>& projection) {
  SystemPtr sys;
  if (name == "ou1d") {
    sys = std::make_shared<Ou1d>(params);
  } else if (name == "langevin") {
    sys = std::make_shared<Langevin>(params);
  } else if (name == "flatmetric") {
    sys = std::make_shared<FlatMetric>(params);
  } else if (name == "heisenberg") {
    sys = std::make_shared<Heisenberg>(params);
  } else {
    fail(ErrorKind::Config, "unknown builtin model '" + name + "'");
  }
  if (projection.empty()) return sys;
  return with_projection(sys, projection);
}

SystemPtr with_projection(SystemPtr base, const std::vector<int>& projection) {
  for (int j = 0; j < base->d(); ++j) {
    if (base->state_order()[j] != j) {
      fail(ErrorKind::InvalidArgument, "with_projection expects a system in user coordinates");
    }
  }
  auto order = order_from_projection(base->d(), projection);
  const int l = static_cast<int>(projection.size());
  bool identity = true;
  for (int j = 0; j < base->d(); ++j) identity = identity && order[j] == j;
  if (identity && l == base->l()) return base;
  return std::make_shared<PermutedSystem>(std::move(base), std::move(order), l);
}

SystemPtr make_short_time_system(SystemPtr base) {
  return std::make_shared<ShortTimeSystem>(std::move(base));
}

Vec eval_field(const VectorFieldSystem& sys, int i, const ConstVecRef& x) {
  check_index(sys, i);
  check_point(sys, x);
  Vec out(sys.d());
  sys.field(i, x, out);
  return out;
}

Mat eval_jacobian(const VectorFieldSystem& sys, int i, const ConstVecRef& x) {
  check_index(sys, i);
  check_point(sys, x);
  Mat out(sys.d(), sys.d());
  sys.jacobian(i, x, out);
  return out;
}

Vec eval_drift(const VectorFieldSystem& sys, double eps, const ConstVecRef& x) {
  check_point(sys, x);
  Vec out(sys.d());
  sys.drift(eps, x, out);
  return out;
}

Mat diffusion_matrix(const VectorFieldSystem& sys, const ConstVecRef& x) {
  Mat s(sys.d(), sys.m());
  for (int i = 1; i <= sys.m(); ++i) {
    Vec col(sys.d());
    sys.field(i, x, col);
    s.col(i - 1) = col;
  }
  return s;
}

}  // namespace smallnoise
