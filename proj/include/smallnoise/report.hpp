#pragma once

#include "smallnoise/config.hpp"
#include "smallnoise/expansion.hpp"
#include "smallnoise/montecarlo.hpp"

#include <ostream>

namespace smallnoise {

// JSON views of the result types. Full-state vectors (p0) are written in the
// user's coordinate labelling; projected quantities follow the target order.

Json to_json(const Vec& v);
Json to_json(const Mat& m);  // array of rows

Json system_json(const VectorFieldSystem& sys);
Json to_json(const VectorFieldSystem& sys, const Minimizer& mz);
Json to_json(const VectorFieldSystem& sys, const MinimizerSet& set);
Json to_json(const NdReport& report);
Json to_json(const VectorFieldSystem& sys, const ExpansionResult& result);
Json to_json(const McReport& report);

/// p in internal order -> user order.
Vec to_user_order(const VectorFieldSystem& sys, const Vec& v);

// CSV tables; first line is the header.
void write_minimizers_csv(std::ostream& out, const VectorFieldSystem& sys, const MinimizerSet& set);
void write_nd_csv(std::ostream& out, const NdReport& report);
void write_expansion_csv(std::ostream& out, const ExpansionResult& result);
void write_mc_csv(std::ostream& out, const McReport& report);
void write_plot_csv(std::ostream& out, const std::vector<PlotPoint>& points);
/// eps, g(eps) = eps^2 log f + l eps^2 log eps, fitted -c1 + c2 eps + beta eps^2
void write_mc_plot_csv(std::ostream& out, const McReport& report, int l);

}  // namespace smallnoise
