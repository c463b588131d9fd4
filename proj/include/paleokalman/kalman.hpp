#ifndef PALEOKALMAN_KALMAN_HPP
#define PALEOKALMAN_KALMAN_HPP

// Kalman filter and fixed-interval smoother for the model family in
// model_spec.hpp.
//
// Rows are processed by sequential univariate updates over their observed
// slots (H is diagonal). The initial state is exactly diffuse by default:
// P = P_star + kappa * P_inf with kappa -> infinity handled analytically; the
// diffuse phase ends once max|P_inf| drops below `diffuse_tol`. The smoother
// uses the matching expansion r = r0 + r1/kappa, N = N0 + N1/kappa + N2/kappa^2.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "paleokalman/errors.hpp"
#include "paleokalman/model_spec.hpp"
#include "paleokalman/timeseries.hpp"

namespace paleokalman {

/// Initial state distribution: alpha_1 ~ N(a1, P_star + kappa * P_inf).
struct InitialState {
    Eigen::VectorXd a1;
    Eigen::MatrixXd P_star;
    Eigen::MatrixXd P_inf;

    static InitialState diffuse(int s) {
        return {Eigen::VectorXd::Zero(s), Eigen::MatrixXd::Zero(s, s), Eigen::MatrixXd::Identity(s, s)};
    }
    static InitialState proper(Eigen::VectorXd a1, Eigen::MatrixXd P1) {
        const auto s = a1.size();
        return {std::move(a1), std::move(P1), Eigen::MatrixXd::Zero(s, s)};
    }
    /// Large-variance approximation of the diffuse prior.
    static InitialState big_kappa(int s, double kappa) {
        return {Eigen::VectorXd::Zero(s), kappa * Eigen::MatrixXd::Identity(s, s), Eigen::MatrixXd::Zero(s, s)};
    }
};

struct FilterOptions {
    std::optional<InitialState> init;  // default: exact diffuse
    double diffuse_tol = 1e-10;
};

struct FilterState {
    Eigen::VectorXd a;
    Eigen::MatrixXd P;
    Eigen::MatrixXd P_inf;
    double loglik_acc = 0.0;
    std::size_t t_index = 0;
};

/// Predicted, filtered and smoothed moments per row, plus per-slot
/// innovations. Covariances reported on diffuse rows are the finite part
/// P_star; `diffuse[t]` marks those rows.
struct StatePaths {
    std::vector<double> stamps;
    std::vector<Eigen::VectorXd> predicted_mean, filtered_mean, smoothed_mean;
    std::vector<Eigen::MatrixXd> predicted_cov, filtered_cov, smoothed_cov;
    std::vector<bool> diffuse;
    // n x p; MISSING where the slot is MISSING
    Eigen::MatrixXd innovations;
    Eigen::MatrixXd innovation_var;
    Eigen::MatrixXd residuals;  // also MISSING on diffuse slots
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> diffuse_slot;
    bool smoothed = false;

    std::size_t size() const noexcept { return stamps.size(); }
};

namespace detail {

inline constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)

// In-place structured products with the unit-bidiagonal transition.
struct TransitionOps {
    int m;
    int blocks;
    std::array<bool, kSeriesCount> move;

    void mean(Eigen::VectorXd& a) const {
        for (int b = 0; b < blocks; ++b) {
            if (!move[b]) continue;
            for (int i = b * m; i < b * m + m - 1; ++i) a[i] += a[i + 1];
        }
    }
    // P <- T P T'
    void cov(Eigen::MatrixXd& P) const {
        for (int b = 0; b < blocks; ++b) {
            if (!move[b]) continue;
            for (int i = b * m; i < b * m + m - 1; ++i) P.row(i) += P.row(i + 1);
        }
        for (int b = 0; b < blocks; ++b) {
            if (!move[b]) continue;
            for (int i = b * m; i < b * m + m - 1; ++i) P.col(i) += P.col(i + 1);
        }
    }
    // r <- T' r
    void mean_t(Eigen::VectorXd& r) const {
        for (int b = 0; b < blocks; ++b) {
            if (!move[b]) continue;
            for (int j = b * m + m - 1; j > b * m; --j) r[j] += r[j - 1];
        }
    }
    // N <- T' N T
    void cov_t(Eigen::MatrixXd& N) const {
        for (int b = 0; b < blocks; ++b) {
            if (!move[b]) continue;
            for (int j = b * m + m - 1; j > b * m; --j) N.row(j) += N.row(j - 1);
        }
        for (int b = 0; b < blocks; ++b) {
            if (!move[b]) continue;
            for (int j = b * m + m - 1; j > b * m; --j) N.col(j) += N.col(j - 1);
        }
    }
    bool any() const noexcept { return move[0] || (blocks > 1 && move[1]); }
};

inline void symmetrize(Eigen::MatrixXd& P) {
    const auto s = P.rows();
    for (Eigen::Index i = 0; i < s; ++i)
        for (Eigen::Index j = i + 1; j < s; ++j) P(i, j) = P(j, i) = 0.5 * (P(i, j) + P(j, i));
}

// P <- P - k k' / f
inline void downdate(Eigen::MatrixXd& P, const Eigen::VectorXd& k, double f) {
    const auto s = P.rows();
    for (Eigen::Index j = 0; j < s; ++j)
        for (Eigen::Index i = 0; i < s; ++i) P(i, j) -= k[i] * k[j] / f;
}

// With L = I - k e_idx': r <- L' r and N <- L' N L.
inline void apply_Lt(Eigen::VectorXd& r, const Eigen::VectorXd& k, int idx) { r[idx] -= k.dot(r); }

inline void apply_LtNL(Eigen::MatrixXd& N, const Eigen::VectorXd& k, int idx, Eigen::VectorXd& work) {
    // L'NL = N - e k'N - N k e' + e (k'Nk) e'
    work.noalias() = N * k;  // N symmetric: k'N = work'
    const double knk = k.dot(work);
    N.row(idx) -= work.transpose();
    N.col(idx) -= work;
    N(idx, idx) += knk;
}

struct SlotTrace {
    int row;
    int slot;
    int state;
    double v;
    double F_star;
    double F_inf;
    bool diffuse;
};

}  // namespace detail

/// Result of a filter pass. Holds what the smoother needs.
struct FilterOutput {
    double loglik = 0.0;
    std::size_t n_obs = 0;
    std::size_t diffuse_rows = 0;  // rows predicted with P_inf != 0
    FilterState final_state;
    StatePaths paths;

    // smoother inputs
    int order_m = 1;
    int blocks = 1;
    std::vector<std::array<bool, kSeriesCount>> moved;  // per row: block propagated into this row
    std::vector<detail::SlotTrace> slots;
    std::vector<std::size_t> row_slot_begin;            // n + 1 offsets into `slots`
    Eigen::MatrixXd K_star;                             // s x total slots
    Eigen::MatrixXd K_inf;                              // s x total slots (zero off the diffuse phase)
    std::vector<Eigen::MatrixXd> predicted_P_inf;       // per diffuse row
};

namespace detail {

template <bool Store>
inline void run_filter(const ModelSpec& spec, const ParameterLayout& layout, const Eigen::VectorXd& params,
                       const PanelDataset& data, const FilterOptions& options, FilterOutput& out) {
    validate_params(layout, params);
    const int s = spec.state_dim();
    const int p = spec.obs_dim();
    const std::size_t n = data.size();
    const InitialState init = options.init ? *options.init : InitialState::diffuse(s);
    if (init.a1.size() != s || init.P_star.rows() != s || init.P_inf.rows() != s)
        throw MismatchError("initial state dimension does not match the model");

    Eigen::VectorXd a = init.a1;
    Eigen::MatrixXd P = init.P_star;
    Eigen::MatrixXd Pinf = init.P_inf;
    bool diffuse = Pinf.cwiseAbs().maxCoeff() > 0.0;
    Eigen::VectorXd k_star(s), k_inf(s);
    double loglik = 0.0;
    std::size_t nobs = 0;

    out.order_m = spec.order_m;
    out.blocks = spec.block_count();
    if constexpr (Store) {
        auto& ps = out.paths;
        ps.stamps.resize(n);
        ps.predicted_mean.resize(n);
        ps.predicted_cov.resize(n);
        ps.filtered_mean.resize(n);
        ps.filtered_cov.resize(n);
        ps.diffuse.assign(n, false);
        ps.innovations = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n), p, kMissing);
        ps.innovation_var = ps.innovations;
        ps.residuals = ps.innovations;
        ps.diffuse_slot = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(static_cast<Eigen::Index>(n), p, false);
        out.moved.assign(n, {false, false});
        out.slots.clear();
        out.row_slot_begin.assign(n + 1, 0);
        out.predicted_P_inf.clear();
    }
    std::vector<Eigen::VectorXd> kstar_cols, kinf_cols;

    GapState gap(n > 0 ? data.row(0).stamp : 0.0);
    RowModel rm;
    for (std::size_t t = 0; t < n; ++t) {
        const auto& row = data.row(t);
        describe_row(spec, layout, params, row, gap, t == 0, rm);
        const TransitionOps ops{rm.order_m, rm.blocks, rm.propagate};
        if (ops.any()) {
            ops.mean(a);
            ops.cov(P);
            for (int b = 0; b < rm.blocks; ++b) {
                if (!rm.propagate[b]) continue;
                for (int c = 0; c < rm.blocks; ++c) {
                    if (!rm.propagate[c]) continue;
                    P(b * rm.order_m + rm.order_m - 1, c * rm.order_m + rm.order_m - 1) += rm.Q(b, c);
                }
            }
            if (diffuse) ops.cov(Pinf);
        }

        if constexpr (Store) {
            out.paths.stamps[t] = row.stamp;
            out.paths.predicted_mean[t] = a;
            out.paths.predicted_cov[t] = P;
            out.paths.diffuse[t] = diffuse;
            out.moved[t] = rm.propagate;
            out.row_slot_begin[t] = out.slots.size();
            if (diffuse) out.predicted_P_inf.push_back(Pinf);
        }
        if (diffuse) ++out.diffuse_rows;

        for (const auto& o : rm.obs) {
            const int idx = o.state;
            const double v = o.value - a[idx];
            const double f_star = P(idx, idx) + o.variance;
            k_star = P.col(idx);
            double f_inf = 0.0;
            bool diffuse_slot = false;
            if (diffuse) {
                f_inf = Pinf(idx, idx);
                const double scale = std::max(1.0, Pinf.cwiseAbs().maxCoeff());
                diffuse_slot = f_inf > options.diffuse_tol * scale;
            }
            if (diffuse_slot) {
                k_inf = Pinf.col(idx);
                a += k_inf * (v / f_inf);
                // P* <- P* + k_inf k_inf' F*/F_inf^2 - (k* k_inf' + k_inf k*')/F_inf
                const double c = f_star / (f_inf * f_inf);
                for (Eigen::Index j = 0; j < s; ++j)
                    for (Eigen::Index i = 0; i < s; ++i)
                        P(i, j) += k_inf[i] * k_inf[j] * c - (k_star[i] * k_inf[j] + k_inf[i] * k_star[j]) / f_inf;
                downdate(Pinf, k_inf, f_inf);
                symmetrize(Pinf);
                loglik -= 0.5 * (kLog2Pi + std::log(f_inf));
            } else {
                if (!(f_star > 0.0) || !std::isfinite(f_star)) {
                    throw ConditioningError("non-positive innovation variance " + std::to_string(f_star) +
                                                " at row " + std::to_string(t),
                                            t);
                }
                a += k_star * (v / f_star);
                downdate(P, k_star, f_star);
                loglik -= 0.5 * (kLog2Pi + std::log(f_star) + v * v / f_star);
            }
            symmetrize(P);
            ++nobs;

            if constexpr (Store) {
                const auto ti = static_cast<Eigen::Index>(t);
                out.paths.innovations(ti, o.slot) = v;
                out.paths.innovation_var(ti, o.slot) = diffuse_slot ? f_inf : f_star;
                out.paths.diffuse_slot(ti, o.slot) = diffuse_slot;
                out.paths.residuals(ti, o.slot) = diffuse_slot ? kMissing : v / std::sqrt(f_star);
                out.slots.push_back({static_cast<int>(t), o.slot, idx, v, f_star, f_inf, diffuse_slot});
                kstar_cols.push_back(k_star);
                kinf_cols.push_back(diffuse_slot ? Eigen::VectorXd(k_inf) : Eigen::VectorXd::Zero(s));
            }
        }

        if (diffuse && Pinf.cwiseAbs().maxCoeff() < options.diffuse_tol) {
            Pinf.setZero();
            diffuse = false;
        }
        if constexpr (Store) {
            out.paths.filtered_mean[t] = a;
            out.paths.filtered_cov[t] = P;
        }
    }

    out.loglik = loglik;
    out.n_obs = nobs;
    out.final_state = FilterState{a, P, Pinf, loglik, n};
    if constexpr (Store) {
        out.row_slot_begin[n] = out.slots.size();
        const auto ns = static_cast<Eigen::Index>(out.slots.size());
        out.K_star.resize(s, ns);
        out.K_inf.resize(s, ns);
        for (Eigen::Index j = 0; j < ns; ++j) {
            out.K_star.col(j) = kstar_cols[static_cast<std::size_t>(j)];
            out.K_inf.col(j) = kinf_cols[static_cast<std::size_t>(j)];
        }
    }
}

}  // namespace detail

/// Full filter pass with stored paths (needed by smooth()).
inline FilterOutput filter(const ModelSpec& spec, const ParameterLayout& layout, const Eigen::VectorXd& params,
                           const PanelDataset& data, const FilterOptions& options = {}) {
    FilterOutput out;
    detail::run_filter<true>(spec, layout, params, data, options, out);
    return out;
}

/// Log-likelihood only; no per-row storage.
inline double loglik(const ModelSpec& spec, const ParameterLayout& layout, const Eigen::VectorXd& params,
                     const PanelDataset& data, const FilterOptions& options = {}) {
    FilterOutput out;
    detail::run_filter<false>(spec, layout, params, data, options, out);
    return out.loglik;
}

/// Fixed-interval smoother. Fills smoothed_mean / smoothed_cov of the paths.
inline StatePaths smooth(const FilterOutput& f) {
    StatePaths paths = f.paths;
    const std::size_t n = paths.size();
    if (n == 0) {
        paths.smoothed = true;
        return paths;
    }
    const auto s = paths.predicted_mean.front().size();
    Eigen::VectorXd r0 = Eigen::VectorXd::Zero(s), r1 = Eigen::VectorXd::Zero(s);
    Eigen::MatrixXd N0 = Eigen::MatrixXd::Zero(s, s), N1 = N0, N2 = N0;
    Eigen::VectorXd work(s);
    Eigen::MatrixXd L0(s, s), L1(s, s), tmp(s, s);
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(s, s);
    paths.smoothed_mean.resize(n);
    paths.smoothed_cov.resize(n);

    std::size_t diffuse_rows = f.predicted_P_inf.size();
    for (std::size_t tt = n; tt-- > 0;) {
        if (tt + 1 < n) {
            const detail::TransitionOps ops{f.order_m, f.blocks, f.moved[tt + 1]};
            if (ops.any()) {
                ops.mean_t(r0);
                ops.mean_t(r1);
                ops.cov_t(N0);
                ops.cov_t(N1);
                ops.cov_t(N2);
            }
        }
        for (std::size_t j = f.row_slot_begin[tt + 1]; j-- > f.row_slot_begin[tt];) {
            const auto& sl = f.slots[j];
            const auto ji = static_cast<Eigen::Index>(j);
            const int idx = sl.state;
            if (sl.diffuse) {
                const Eigen::VectorXd k = f.K_inf.col(ji) / sl.F_inf;
                const Eigen::VectorXd c = (f.K_inf.col(ji) * (sl.F_star / sl.F_inf) - f.K_star.col(ji)) / sl.F_inf;
                L0 = I;
                L0.col(idx) -= k;
                L1.setZero();
                L1.col(idx) = c;
                // r1 <- e v/F_inf + L0' r1 + L1' r0 ; r0 <- L0' r0
                Eigen::VectorXd r1n = L0.transpose() * r1 + L1.transpose() * r0;
                r1n[idx] += sl.v / sl.F_inf;
                r0 = L0.transpose() * r0;
                r1 = r1n;
                Eigen::MatrixXd N2n = L0.transpose() * N2 * L0 + L1.transpose() * N1 * L0 +
                                      L0.transpose() * N1 * L1 + L1.transpose() * N0 * L1;
                N2n(idx, idx) -= sl.F_star / (sl.F_inf * sl.F_inf);
                Eigen::MatrixXd N1n = L0.transpose() * N1 * L0 + L1.transpose() * N0 * L0 + L0.transpose() * N0 * L1;
                N1n(idx, idx) += 1.0 / sl.F_inf;
                N0 = L0.transpose() * N0 * L0;
                N1 = N1n;
                N2 = N2n;
                detail::symmetrize(N0);
                detail::symmetrize(N1);
                detail::symmetrize(N2);
            } else {
                const Eigen::VectorXd k = f.K_star.col(ji) / sl.F_star;
                detail::apply_Lt(r0, k, idx);
                r0[idx] += sl.v / sl.F_star;
                detail::apply_LtNL(N0, k, idx, work);
                N0(idx, idx) += 1.0 / sl.F_star;
                detail::symmetrize(N0);
                if (!r1.isZero(0.0) || !N1.isZero(0.0) || !N2.isZero(0.0)) {
                    detail::apply_Lt(r1, k, idx);
                    detail::apply_LtNL(N1, k, idx, work);
                    detail::apply_LtNL(N2, k, idx, work);
                }
            }
        }
        const auto& a = paths.predicted_mean[tt];
        const auto& Ps = paths.predicted_cov[tt];
        if (paths.diffuse[tt]) {
            const auto& Pi = f.predicted_P_inf[--diffuse_rows];
            paths.smoothed_mean[tt] = a + Ps * r0 + Pi * r1;
            tmp = Pi * N1 * Ps;
            Eigen::MatrixXd V = Ps - Ps * N0 * Ps - tmp - tmp.transpose() - Pi * N2 * Pi;
            detail::symmetrize(V);
            paths.smoothed_cov[tt] = V;
        } else {
            paths.smoothed_mean[tt] = a + Ps * r0;
            Eigen::MatrixXd V = Ps - Ps * N0 * Ps;
            detail::symmetrize(V);
            paths.smoothed_cov[tt] = V;
        }
    }
    paths.smoothed = true;
    return paths;
}

/// v / sqrt(F) per processed slot; MISSING elsewhere and on diffuse slots.
inline Eigen::MatrixXd standardized_residuals(const FilterOutput& f) {
    const auto& ps = f.paths;
    Eigen::MatrixXd out = Eigen::MatrixXd::Constant(ps.innovations.rows(), ps.innovations.cols(), kMissing);
    for (Eigen::Index t = 0; t < out.rows(); ++t) {
        for (Eigen::Index j = 0; j < out.cols(); ++j) {
            if (is_missing(ps.innovations(t, j)) || ps.diffuse_slot(t, j)) continue;
            const double F = ps.innovation_var(t, j);
            if (!(F > 0.0)) throw ConditioningError("non-positive innovation variance in residuals", static_cast<std::size_t>(t));
            out(t, j) = ps.innovations(t, j) / std::sqrt(F);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV export
// ---------------------------------------------------------------------------

inline std::vector<std::string> state_names(const ModelSpec& spec) {
    std::vector<std::string> names;
    for (Series s : spec.series()) {
        const std::string base(series_name(s));
        names.push_back(base + "_level");
        for (int k = spec.order_m - 1; k >= 1; --k) names.push_back(base + "_int" + std::to_string(k));
    }
    return names;
}

namespace detail {
inline void put_number(std::ostream& os, double x) {
    if (is_missing(x)) return;
    char buf[32];
    const int len = std::snprintf(buf, sizeof buf, "%.17g", x);
    os.write(buf, len);
}
}  // namespace detail

/// Columns: stamp, diffuse, per state {pred_mean, filt_mean, smooth_mean,
/// smooth_var}, per slot residual. MISSING is an empty field.
inline void write_state_paths_csv(std::ostream& os, const ModelSpec& spec, const StatePaths& paths) {
    const auto names = state_names(spec);
    os << "stamp,diffuse";
    for (const auto& nm : names) os << ',' << nm << "_pred_mean," << nm << "_filt_mean," << nm << "_smooth_mean," << nm << "_smooth_var";
    for (Series s : spec.series())
        for (int k = 1; k <= kSlotsPerSeries; ++k) os << ",resid_" << series_name(s) << '_' << k;
    os << '\n';
    for (std::size_t t = 0; t < paths.size(); ++t) {
        detail::put_number(os, paths.stamps[t]);
        os << ',' << (paths.diffuse[t] ? 1 : 0);
        for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(names.size()); ++i) {
            os << ',';
            detail::put_number(os, paths.predicted_mean[t][i]);
            os << ',';
            detail::put_number(os, paths.filtered_mean[t][i]);
            os << ',';
            if (paths.smoothed) detail::put_number(os, paths.smoothed_mean[t][i]);
            os << ',';
            if (paths.smoothed) detail::put_number(os, paths.smoothed_cov[t](i, i));
        }
        for (Eigen::Index j = 0; j < paths.residuals.cols(); ++j) {
            os << ',';
            detail::put_number(os, paths.residuals(static_cast<Eigen::Index>(t), j));
        }
        os << '\n';
    }
}

}  // namespace paleokalman

#endif  // PALEOKALMAN_KALMAN_HPP
