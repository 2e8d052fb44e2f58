#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <string_view>

namespace smallnoise {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using VecRef = Eigen::Ref<Vec>;
using MatRef = Eigen::Ref<Mat>;
using ConstVecRef = Eigen::Ref<const Vec>;
using ConstMatRef = Eigen::Ref<const Mat>;

inline constexpr std::string_view kVersion = "0.3.1";

enum class ErrorKind {
  InvalidArgument,
  DimensionMismatch,
  NonFinite,
  Config,
  DivergedFlow,
  Accuracy,
  NoAdmissibleControl,
  BranchSwitch,
  RankDeficient,
  TargetUnreached,
  Internal,
};

std::string_view to_string(ErrorKind kind);

/// Single exception type of the library; `kind()` lets callers map failures
/// to exit codes without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& v) {
  return v.allFinite();
}

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& v, std::string_view what) {
  if (!v.allFinite()) {
    fail(ErrorKind::NonFinite, std::string(what) + ": non-finite input");
  }
}

/// Composite Simpson weights on a uniform grid with an even number of
/// intervals.
Vec simpson_weights(int intervals, double h);

/// Pairwise (cascade) summation; result does not depend on how the input
/// was produced, only on its order.
double pairwise_sum(const double* data, std::size_t n);

}  // namespace smallnoise
