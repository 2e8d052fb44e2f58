#include "smallnoise/core.hpp"

namespace smallnoise {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid_argument";
    case ErrorKind::DimensionMismatch: return "dimension_mismatch";
    case ErrorKind::NonFinite: return "non_finite";
    case ErrorKind::Config: return "config";
    case ErrorKind::DivergedFlow: return "diverged_flow";
    case ErrorKind::Accuracy: return "accuracy";
    case ErrorKind::NoAdmissibleControl: return "no_admissible_control";
    case ErrorKind::BranchSwitch: return "branch_switch";
    case ErrorKind::RankDeficient: return "rank_deficient";
    case ErrorKind::TargetUnreached: return "target_unreached";
    case ErrorKind::Internal: return "internal";
  }
  return "unknown";
}

Vec simpson_weights(int intervals, double h) {
  if (intervals < 2 || intervals % 2 != 0) {
    fail(ErrorKind::Internal, "Simpson quadrature needs an even number of intervals, got " +
                                  std::to_string(intervals));
  }
  Vec w(intervals + 1);
  for (int k = 0; k <= intervals; ++k) {
    w(k) = (k == 0 || k == intervals) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
  }
  return w * (h / 3.0);
}

double pairwise_sum(const double* data, std::size_t n) {
  if (n <= 16) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += data[i];
    return s;
  }
  std::size_t half = n / 2;
  return pairwise_sum(data, half) + pairwise_sum(data + half, n - half);
}

}  // namespace smallnoise
