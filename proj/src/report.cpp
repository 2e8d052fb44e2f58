#include "smallnoise/report.hpp"

#include <cmath>
#include <iomanip>

namespace smallnoise {

Json to_json(const Vec& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Json to_json(const Mat& m) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(to_json(Vec(m.row(i).transpose())));
  return out;
}

Vec to_user_order(const VectorFieldSystem& sys, const Vec& v) {
  const auto& order = sys.state_order();
  Vec out(v.size());
  for (std::size_t j = 0; j < order.size(); ++j) out(order[j]) = v(static_cast<Eigen::Index>(j));
  return out;
}

Json system_json(const VectorFieldSystem& sys) {
  const auto& order = sys.state_order();
  return {{"name", sys.name()},
          {"d", sys.d()},
          {"m", sys.m()},
          {"l", sys.l()},
          {"projected_coordinates", std::vector<int>(order.begin(), order.begin() + sys.l())},
          {"free_coordinates", std::vector<int>(order.begin() + sys.l(), order.end())},
          {"drift_free", sys.drift_free()}};
}

Json to_json(const VectorFieldSystem& sys, const Minimizer& mz) {
  return {{"p0", to_json(to_user_order(sys, mz.p0))},
          {"z_T", to_json(mz.z_T)},
          {"q_T", to_json(mz.q_T)},
          {"energy", mz.energy},
          {"energy_invariant", mz.energy_invariant},
          {"residual", mz.residual},
          {"residual_doubled", mz.residual_doubled},
          {"iterations", mz.iterations},
          {"steps", mz.path.steps()},
          {"degenerate_zero_control", mz.degenerate_zero_control}};
}

Json to_json(const VectorFieldSystem& sys, const MinimizerSet& set) {
  Json mins = Json::array();
  for (const auto& mz : set.minimizers) mins.push_back(to_json(sys, mz));
  Json sols = Json::array();
  for (const auto& mz : set.solutions) sols.push_back(to_json(sys, mz));
  return {{"lambda", set.minimizers.empty() ? Json(nullptr) : Json(set.minimizers.front().energy)},
          {"minimizer_count", set.minimizers.size()},
          {"continuum_flag", set.continuum_flag},
          {"degenerate_zero_control", set.degenerate_zero_control},
          {"minimizers", mins},
          {"solutions", sols},
          {"stats",
           {{"starts", set.stats.starts},
            {"converged", set.stats.converged},
            {"diverged", set.stats.diverged},
            {"stalled", set.stats.stalled},
            {"duplicates", set.stats.duplicates}}}};
}

Json to_json(const NdReport& report) {
  Json records = Json::array();
  for (const auto& r : report.records) {
    Json rec = {{"verdict", std::string(to_string(r.verdict))},
                {"malliavin", to_json(r.malliavin)},
                {"invertible", r.invertibility.invertible},
                {"smallest_singular_value", r.invertibility.smallest_singular_value},
                {"largest_singular_value", r.invertibility.largest_singular_value},
                {"ellipticity_time", r.ellipticity_time ? Json(*r.ellipticity_time) : Json(nullptr)},
                {"nonfocality",
                 {{"matrix", to_json(r.nonfocality.matrix)},
                  {"det", r.nonfocality.det},
                  {"scale", r.nonfocality.scale},
                  {"threshold", r.focal_threshold}}},
                {"hessian", nullptr}};
    if (r.hessian) {
      rec["hessian"] = {{"min_eig", r.hessian->min_eig},
                        {"kernel_dim", r.hessian->kernel_dim},
                        {"null_direction", to_json(r.hessian->null_direction)}};
    }
    records.push_back(std::move(rec));
  }
  const auto& th = report.thresholds;
  return {{"verdict", std::string(to_string(report.verdict))},
          {"minimizer_count", report.minimizer_count},
          {"continuum_flag", report.continuum_flag},
          {"degenerate_zero_control", report.degenerate_zero_control},
          {"thresholds",
           {{"tol_sv", th.tol_sv},
            {"tol_focal", th.tol_focal},
            {"undecided_band", th.undecided_band},
            {"tol_eig", th.tol_eig}}},
          {"records", records}};
}

Json to_json(const VectorFieldSystem& sys, const ExpansionResult& r) {
  Json per = Json::array();
  for (const auto& c : r.per_minimizer) {
    per.push_back({{"energy", c.energy},
                   {"p0", to_json(to_user_order(sys, c.p0))},
                   {"yhat_T", to_json(c.yhat_T)},
                   {"c2_contribution", c.c2_contribution}});
  }
  Json out = {{"mode", std::string(to_string(r.mode))},
              {"c1", r.c1},
              {"c2", r.c2},
              {"l", r.l},
              {"T", r.T},
              {"a", to_json(r.a)},
              {"certified", r.certified},
              {"lambda_grad", to_json(r.lambda_grad)},
              {"lambda_grad_fd", r.lambda_grad_fd.size() ? to_json(r.lambda_grad_fd) : Json(nullptr)},
              {"gradient_gap", r.gradient_gap},
              {"gradient_agrees", r.gradient_agrees},
              {"per_minimizer", per},
              {"warnings", r.warnings},
              {"nd_report", to_json(r.nd_report)},
              {"minimizer_set", to_json(sys, r.minimizers)}};
  if (r.mode == ExpansionMode::ShortTime) out["distance"] = r.distance;
  return out;
}

Json to_json(const McReport& report) {
  Json rows = Json::array();
  for (const auto& r : report.rows) {
    Json exits = Json::array();
    for (const auto& e : r.exits) {
      exits.push_back({{"radius", e.radius},
                       {"exits", e.exits},
                       {"paths", e.paths},
                       {"fraction", e.fraction},
                       {"rate", e.rate ? Json(*e.rate) : Json(nullptr)},
                       {"exceeds_c1", e.exceeds_c1}});
    }
    rows.push_back({{"eps", r.eps},
                    {"log_density", r.log_density},
                    {"std_error", r.std_error},
                    {"bandwidth", to_json(r.bandwidth)},
                    {"kept", r.kept},
                    {"censored", r.censored},
                    {"exit_fractions", exits}});
  }
  Json reference = nullptr;
  if (report.reference_c1 || report.reference_c2) {
    reference = {{"c1", report.reference_c1 ? Json(*report.reference_c1) : Json(nullptr)},
                 {"c2", report.reference_c2 ? Json(*report.reference_c2) : Json(nullptr)}};
  }
  return {{"rows", rows},
          {"fit",
           {{"c1_hat", report.fit.c1_hat},
            {"c2_hat", report.fit.c2_hat},
            {"beta", report.fit.beta},
            {"residual", report.fit.residual}}},
          {"reference", reference},
          {"valid", report.valid},
          {"warnings", report.warnings}};
}

namespace {

void set_precision(std::ostream& out) { out << std::setprecision(17); }

}  // namespace

void write_minimizers_csv(std::ostream& out, const VectorFieldSystem& sys, const MinimizerSet& set) {
  set_precision(out);
  out << "index,energy,energy_invariant,residual,iterations";
  for (int j = 0; j < sys.d(); ++j) out << ",p0_" << j + 1;
  for (int j = 0; j < sys.l(); ++j) out << ",q_T_" << j + 1;
  out << "\n";
  for (std::size_t k = 0; k < set.minimizers.size(); ++k) {
    const auto& mz = set.minimizers[k];
    out << k << "," << mz.energy << "," << mz.energy_invariant << "," << mz.residual << "," << mz.iterations;
    Vec p = to_user_order(sys, mz.p0);
    for (Eigen::Index j = 0; j < p.size(); ++j) out << "," << p(j);
    for (Eigen::Index j = 0; j < mz.q_T.size(); ++j) out << "," << mz.q_T(j);
    out << "\n";
  }
}

void write_nd_csv(std::ostream& out, const NdReport& report) {
  set_precision(out);
  out << "index,verdict,invertible,smallest_singular_value,det,scale,threshold,min_eig\n";
  for (std::size_t k = 0; k < report.records.size(); ++k) {
    const auto& r = report.records[k];
    out << k << "," << to_string(r.verdict) << "," << (r.invertibility.invertible ? 1 : 0) << ","
        << r.invertibility.smallest_singular_value << "," << r.nonfocality.det << "," << r.nonfocality.scale
        << "," << r.focal_threshold << ",";
    if (r.hessian) out << r.hessian->min_eig;
    out << "\n";
  }
}

void write_expansion_csv(std::ostream& out, const ExpansionResult& r) {
  set_precision(out);
  out << "key,value\n";
  out << "mode," << to_string(r.mode) << "\n";
  out << "c1," << r.c1 << "\n";
  out << "c2," << r.c2 << "\n";
  out << "l," << r.l << "\n";
  out << "verdict," << to_string(r.nd_report.verdict) << "\n";
  out << "certified," << (r.certified ? 1 : 0) << "\n";
  for (Eigen::Index j = 0; j < r.lambda_grad.size(); ++j) out << "lambda_grad_" << j + 1 << "," << r.lambda_grad(j) << "\n";
  if (r.mode == ExpansionMode::ShortTime) out << "distance," << r.distance << "\n";
}

void write_mc_csv(std::ostream& out, const McReport& report) {
  set_precision(out);
  out << "eps,log_density,std_error,kept,censored\n";
  for (const auto& r : report.rows) {
    out << r.eps << "," << r.log_density << "," << r.std_error << "," << r.kept << "," << r.censored << "\n";
  }
}

void write_plot_csv(std::ostream& out, const std::vector<PlotPoint>& points) {
  set_precision(out);
  out << "eps,log_density\n";
  for (const auto& p : points) out << p.eps << "," << p.log_density << "\n";
}

void write_mc_plot_csv(std::ostream& out, const McReport& report, int l) {
  set_precision(out);
  out << "eps,g,fit\n";
  const auto& f = report.fit;
  for (const auto& r : report.rows) {
    const double e = r.eps;
    const double g = e * e * r.log_density + l * e * e * std::log(e);
    out << e << "," << g << "," << (-f.c1_hat + f.c2_hat * e + f.beta * e * e) << "\n";
  }
}

}  // namespace smallnoise
