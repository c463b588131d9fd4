#ifndef PALEOKALMAN_IMPUTATION_HPP
#define PALEOKALMAN_IMPUTATION_HPP

// Smoothed levels on an equidistant grid: the grid stamps are merged into the
// data as all-MISSING rows and one smoother pass is run at fixed parameters.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "paleokalman/csv.hpp"
#include "paleokalman/errors.hpp"
#include "paleokalman/kalman.hpp"
#include "paleokalman/model_spec.hpp"
#include "paleokalman/timeseries.hpp"

namespace paleokalman {

inline constexpr double kStampTolerance = 1e-12;  // My

struct Grid {
    std::vector<double> stamps;  // negative ages, increasing
    std::vector<std::string> warnings;

    std::size_t size() const noexcept { return stamps.size(); }
};

/// floor(span / mesh) stamps, mesh apart, starting at the old end.
inline Grid make_grid(double span_start_mya, double span_end_mya, double mesh_years) {
    if (!(span_start_mya > span_end_mya) || !(span_end_mya >= 0.0))
        throw DomainError("make_grid: need span_start > span_end >= 0");
    if (!(mesh_years > 0.0)) throw DomainError("make_grid: mesh must be positive");
    Grid g;
    const double span_years = (span_start_mya - span_end_mya) * 1e6;
    // the ratio is exact in decimal for the usual inputs; absorb binary noise
    const double ratio = span_years / mesh_years;
    const auto n = static_cast<std::size_t>(std::floor(ratio * (1.0 + 1e-12)));
    if (n == 0) {
        g.warnings.push_back("mesh of " + csv::format(mesh_years) + " years exceeds the span; grid is empty");
        return g;
    }
    g.stamps.reserve(n);
    for (std::size_t k = 0; k < n; ++k)
        g.stamps.push_back(-span_start_mya + static_cast<double>(k) * mesh_years / 1e6);
    return g;
}

struct ImputedSeries {
    Series series;
    std::vector<double> mean;
    std::vector<double> sd;
};

struct ImputationTable {
    std::vector<double> stamps;
    std::vector<ImputedSeries> columns;  // one per modelled series
    std::vector<bool> coincident;        // grid stamp fell on a data row
};

/// Smoothed level mean/SD at each grid stamp. `params` must belong to
/// build_layout(spec, data).
inline ImputationTable impute(const ModelSpec& spec, const ParameterLayout& layout, const Eigen::VectorXd& params,
                              const PanelDataset& data, const Grid& grid,
                              const ClimateAssigner& climate = assign_climate_state, const FilterOptions& opts = {}) {
    ImputationTable out;
    out.stamps = grid.stamps;
    for (Series s : spec.series()) out.columns.push_back({s, {}, {}});
    if (grid.stamps.empty()) return out;

    const PanelDataset merged = with_missing_rows(data, grid.stamps, climate, kStampTolerance);
    const StatePaths paths = smooth(filter(spec, layout, params, merged, opts));

    const auto& rows = merged.rows();
    for (double g : grid.stamps) {
        auto it = std::lower_bound(rows.begin(), rows.end(), g - kStampTolerance,
                                   [](const ObservationRow& r, double v) { return r.stamp < v; });
        if (it == rows.end() || std::abs(it->stamp - g) > kStampTolerance)
            throw DomainError("grid stamp lost during merge");  // unreachable
        const auto t = static_cast<std::size_t>(it - rows.begin());
        out.coincident.push_back(!it->all_missing());
        for (std::size_t b = 0; b < out.columns.size(); ++b) {
            const auto i = static_cast<Eigen::Index>(b) * spec.order_m;
            out.columns[b].mean.push_back(paths.smoothed_mean[t][i]);
            out.columns[b].sd.push_back(std::sqrt(std::max(0.0, paths.smoothed_cov[t](i, i))));
        }
    }
    return out;
}

/// stamp_mya (positive age), then mean_<series>, sd_<series> per modelled series.
inline void write_imputation_csv(std::ostream& os, const ImputationTable& t) {
    os << "stamp_mya";
    for (const auto& c : t.columns) os << ",mean_" << series_name(c.series) << ",sd_" << series_name(c.series);
    os << '\n';
    for (std::size_t k = 0; k < t.stamps.size(); ++k) {
        os << csv::format(-t.stamps[k]);
        for (const auto& c : t.columns) os << ',' << csv::format(c.mean[k]) << ',' << csv::format(c.sd[k]);
        os << '\n';
    }
}

}  // namespace paleokalman

#endif  // PALEOKALMAN_IMPUTATION_HPP
