#include "smallnoise/polynomial.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace smallnoise {

Polynomial::Polynomial(int nvars, std::vector<Term> terms)
    : nvars_(nvars), terms_(std::move(terms)) {
  for (const auto& t : terms_) {
    if (static_cast<int>(t.exponents.size()) != nvars_) {
      fail(ErrorKind::DimensionMismatch,
           "monomial has " + std::to_string(t.exponents.size()) +
               " exponents, expected " + std::to_string(nvars_));
    }
    for (int e : t.exponents) {
      if (e < 0) fail(ErrorKind::Config, "negative monomial exponent");
    }
    if (!std::isfinite(t.coeff)) fail(ErrorKind::NonFinite, "non-finite coefficient");
  }
  canonicalize();
}

Polynomial Polynomial::constant(int nvars, double c) {
  return Polynomial(nvars, {Term{std::vector<int>(nvars, 0), c}});
}

Polynomial Polynomial::variable(int nvars, int index, double c) {
  std::vector<int> e(nvars, 0);
  e.at(index) = 1;
  return Polynomial(nvars, {Term{std::move(e), c}});
}

int Polynomial::degree() const {
  int deg = 0;
  for (const auto& t : terms_) {
    deg = std::max(deg, std::accumulate(t.exponents.begin(), t.exponents.end(), 0));
  }
  return deg;
}

void Polynomial::canonicalize() {
  std::sort(terms_.begin(), terms_.end(),
            [](const Term& a, const Term& b) { return a.exponents < b.exponents; });
  std::vector<Term> merged;
  for (auto& t : terms_) {
    if (!merged.empty() && merged.back().exponents == t.exponents) {
      merged.back().coeff += t.coeff;
    } else {
      merged.push_back(std::move(t));
    }
  }
  std::erase_if(merged, [](const Term& t) { return t.coeff == 0.0; });
  terms_ = std::move(merged);
}

Polynomial Polynomial::derivative(int var) const {
  std::vector<Term> out;
  for (const auto& t : terms_) {
    int e = t.exponents[var];
    if (e == 0) continue;
    Term d = t;
    d.coeff *= e;
    d.exponents[var] = e - 1;
    out.push_back(std::move(d));
  }
  return Polynomial(nvars_, std::move(out));
}

Polynomial Polynomial::relabel(const std::vector<int>& perm) const {
  std::vector<Term> out;
  out.reserve(terms_.size());
  for (const auto& t : terms_) {
    Term r{std::vector<int>(nvars_, 0), t.coeff};
    for (int j = 0; j < nvars_; ++j) r.exponents[perm[j]] += t.exponents[j];
    out.push_back(std::move(r));
  }
  return Polynomial(nvars_, std::move(out));
}

Polynomial Polynomial::restrict_last(double value) const {
  std::vector<Term> out;
  for (const auto& t : terms_) {
    Term r{std::vector<int>(t.exponents.begin(), t.exponents.end() - 1),
           t.coeff * std::pow(value, t.exponents.back())};
    out.push_back(std::move(r));
  }
  return Polynomial(nvars_ - 1, std::move(out));
}

Polynomial& Polynomial::operator+=(const Polynomial& rhs) {
  if (rhs.nvars_ != nvars_) fail(ErrorKind::DimensionMismatch, "polynomial variable count");
  terms_.insert(terms_.end(), rhs.terms_.begin(), rhs.terms_.end());
  canonicalize();
  return *this;
}

Polynomial& Polynomial::operator-=(const Polynomial& rhs) { return *this += rhs * -1.0; }

Polynomial& Polynomial::operator*=(double s) {
  for (auto& t : terms_) t.coeff *= s;
  canonicalize();
  return *this;
}

Polynomial operator*(const Polynomial& a, const Polynomial& b) {
  if (a.nvars_ != b.nvars_) fail(ErrorKind::DimensionMismatch, "polynomial variable count");
  std::vector<Term> out;
  out.reserve(a.terms_.size() * b.terms_.size());
  for (const auto& s : a.terms_) {
    for (const auto& t : b.terms_) {
      Term p{s.exponents, s.coeff * t.coeff};
      for (int j = 0; j < a.nvars_; ++j) p.exponents[j] += t.exponents[j];
      out.push_back(std::move(p));
    }
  }
  return Polynomial(a.nvars_, std::move(out));
}

double max_coeff_distance(const Polynomial& a, const Polynomial& b) {
  double worst = 0.0;
  for (const auto& t : (a - b).terms_) worst = std::max(worst, std::abs(t.coeff));
  return worst;
}

PolyField::PolyField(std::vector<Polynomial> components) : comps_(std::move(components)) {
  const int n = nvars();
  for (const auto& c : comps_) {
    if (c.nvars() != n) fail(ErrorKind::DimensionMismatch, "field components disagree on variables");
  }
  d1_.resize(comps_.size());
  d2_.resize(comps_.size());
  for (std::size_t k = 0; k < comps_.size(); ++k) {
    d1_[k].reserve(n);
    d2_[k].resize(n);
    for (int i = 0; i < n; ++i) d1_[k].push_back(comps_[k].derivative(i));
    for (int i = 0; i < n; ++i) {
      d2_[k][i].reserve(n);
      for (int j = 0; j < n; ++j) d2_[k][i].push_back(d1_[k][i].derivative(j));
    }
  }
}

PolyField PolyField::zero(int dim, int nvars) {
  return PolyField(std::vector<Polynomial>(dim, Polynomial(nvars)));
}

bool PolyField::is_zero() const {
  return std::all_of(comps_.begin(), comps_.end(), [](const Polynomial& p) { return p.is_zero(); });
}

void PolyField::eval(const ConstVecRef& x, VecRef out) const {
  for (int k = 0; k < dim(); ++k) out(k) = comps_[k](x);
}

void PolyField::jacobian(const ConstVecRef& x, MatRef out) const {
  const int n = nvars();
  for (int k = 0; k < dim(); ++k) {
    for (int j = 0; j < n; ++j) out(k, j) = d1_[k][j](x);
  }
}

void PolyField::hessian_contract(const ConstVecRef& x, const ConstVecRef& w, MatRef out) const {
  const int n = nvars();
  out.setZero();
  for (int k = 0; k < dim(); ++k) {
    if (w(k) == 0.0) continue;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (!d2_[k][i][j].is_zero()) out(i, j) += w(k) * d2_[k][i][j](x);
      }
    }
  }
}

Vec PolyField::operator()(const ConstVecRef& x) const {
  Vec out(dim());
  eval(x, out);
  return out;
}

PolyField PolyField::relabel(const std::vector<int>& perm) const {
  // Component k of the relabelled field is component perm^{-1}(k) of this one.
  std::vector<Polynomial> out(comps_.size());
  for (std::size_t k = 0; k < comps_.size(); ++k) out[perm[k]] = comps_[k].relabel(perm);
  return PolyField(std::move(out));
}

PolyField lie_bracket(const PolyField& u, const PolyField& v) {
  const int n = u.nvars();
  if (v.nvars() != n || u.dim() != n || v.dim() != n) {
    fail(ErrorKind::DimensionMismatch, "lie_bracket needs square fields on the same space");
  }
  std::vector<Polynomial> out;
  out.reserve(n);
  for (int k = 0; k < n; ++k) {
    Polynomial acc(n);
    for (int j = 0; j < n; ++j) {
      acc += v[k].derivative(j) * u[j];
      acc -= u[k].derivative(j) * v[j];
    }
    out.push_back(std::move(acc));
  }
  return PolyField(std::move(out));
}

}  // namespace smallnoise
