#ifndef PALEOKALMAN_SIMULATION_HPP
#define PALEOKALMAN_SIMULATION_HPP

// Simulation from the model family and a brute-force Gaussian oracle.
//
// The oracle stacks every row state into one vector,
//   x = G (alpha_0, eta_1, ..., eta_{n-1})',   cov(x) = G D G',
// with D = blockdiag(P1, Q_1, ..., Q_{n-1}), and conditions the joint normal of
// (x, y) directly. It never runs a recursion, so it is an independent check
// of the filter and smoother.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "paleokalman/errors.hpp"
#include "paleokalman/kalman.hpp"
#include "paleokalman/model_spec.hpp"
#include "paleokalman/timeseries.hpp"

namespace paleokalman {

/// Climate assigner placing every stamp in regime 1.
inline int single_regime(double) { return 1; }

/// Shape of a simulated dataset; values are filled by simulate().
struct Design {
    std::vector<double> stamps;          // strictly increasing
    int slots_per_row = 1;               // per series, 1..4
    int n_sources = 1;                   // slots draw a source uniformly; species = source
    double missing_prob = 0.0;           // each slot independently MISSING
    bool both_series = true;             // otherwise only d18O slots are created
    ClimateAssigner climate = single_regime;
};

/// Stamps with Exp(mean_dt) increments, starting at `start`.
inline std::vector<double> exponential_stamps(std::size_t n, double mean_dt, std::uint64_t seed, double start = 0.0) {
    std::mt19937_64 rng(seed);
    std::exponential_distribution<double> gap(1.0 / mean_dt);
    std::vector<double> st;
    st.reserve(n);
    double t = start;
    for (std::size_t i = 0; i < n; ++i) {
        st.push_back(t);
        double d = 0.0;
        while (!(d > 0.0)) d = gap(rng);
        t += d;
    }
    return st;
}

/// Dataset with the design's slot pattern; every filled slot holds 0.
inline PanelDataset make_skeleton(const Design& d, std::uint64_t seed) {
    if (d.slots_per_row < 1 || d.slots_per_row > kSlotsPerSeries) throw DomainError("slots_per_row must be 1..4");
    if (d.n_sources < 1) throw DomainError("need at least one source");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick(0, d.n_sources - 1);
    std::bernoulli_distribution drop(d.missing_prob);
    Registry sources, species;
    for (int g = 0; g < d.n_sources; ++g) {
        sources.intern("source" + std::to_string(g + 1));
        species.intern("species" + std::to_string(g + 1));
    }
    std::vector<Record> recs;
    for (double st : d.stamps) {
        bool any = false;
        for (Series s : kAllSeries) {
            if (s == Series::d13C && !d.both_series) continue;
            for (int k = 0; k < d.slots_per_row; ++k) {
                const int g = pick(rng);
                if (drop(rng)) continue;
                recs.push_back({st, s, 0.0, g, g});
                any = true;
            }
        }
        if (!any) recs.push_back({st, std::nullopt, kMissing, -1, -1});
    }
    return collate_rows(std::move(recs), std::move(sources), std::move(species), d.climate);
}

namespace detail {
/// Symmetric square root via eigen-decomposition; tolerates singular
/// (e.g. rho = +-1) covariances.
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& S) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}
}  // namespace detail

/// Draw values for every filled slot of `skeleton` from the model. With no
/// proper `init` the initial state is 0 (a diffuse start has no distribution
/// to draw from). Unlike the filter, |rho| = 1 and zero variances are accepted.
inline PanelDataset simulate(const ModelSpec& spec, const ParameterLayout& layout, const Eigen::VectorXd& params,
                             const PanelDataset& skeleton, std::uint64_t seed,
                             const std::optional<InitialState>& init = std::nullopt,
                             const ClimateAssigner& climate = single_regime) {
    spec.validate();
    {
        Eigen::VectorXd check = params;
        for (int k = 0; k < layout.size(); ++k)
            if (layout.params[static_cast<std::size_t>(k)].role == ParamRole::corr) {
                if (std::abs(check[k]) == 1.0) check[k] = 0.0;
            } else if (check[k] == 0.0) {
                check[k] = 1.0;
            }
        validate_params(layout, check);
    }
    const int s = spec.state_dim();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    auto normals = [&](Eigen::Index k) {
        Eigen::VectorXd v(k);
        for (Eigen::Index i = 0; i < k; ++i) v[i] = z(rng);
        return v;
    };

    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(s);
    if (init) {
        if (init->P_inf.cwiseAbs().maxCoeff() > 0.0) throw DomainError("simulate: initial state must be proper");
        alpha = init->a1 + detail::psd_sqrt(init->P_star) * normals(s);
    }

    std::vector<Record> recs;
    GapState gap(skeleton.empty() ? 0.0 : skeleton.row(0).stamp);
    for (std::size_t t = 0; t < skeleton.size(); ++t) {
        const auto& row = skeleton.row(t);
        RowModel rm;
        describe_row(spec, layout, params, row, gap, t == 0, rm);
        const SystemMatrices sm = expand(spec, rm);
        alpha = sm.T * alpha + sm.R * (detail::psd_sqrt(sm.Q) * normals(sm.Q.rows()));
        if (row.all_missing()) {
            recs.push_back({row.stamp, std::nullopt, kMissing, -1, -1});
            continue;
        }
        // every filled slot of the skeleton, in slot order, including
        // series the spec does not model (those keep their placeholder)
        for (Series ser : kAllSeries) {
            const int b = spec.block_of(ser);
            for (int k = 0; k < kSlotsPerSeries; ++k) {
                const auto& slot = row.series(ser)[static_cast<std::size_t>(k)];
                if (slot.missing()) continue;
                double v = slot.value;
                if (b >= 0) {
                    const int p = b * kSlotsPerSeries + k;
                    v = (sm.Z.row(p) * alpha)(0) + std::sqrt(sm.H(p, p)) * z(rng);
                }
                recs.push_back({row.stamp, ser, v, slot.source_id, slot.species_id});
            }
        }
    }
    return collate_rows(std::move(recs), skeleton.sources(), skeleton.species(), climate);
}

// ---------------------------------------------------------------------------
// Exact Gaussian oracle
// ---------------------------------------------------------------------------

inline constexpr std::size_t kOracleMaxObs = 64;

struct ExactGaussian {
    double loglik = 0.0;
    std::size_t n_obs = 0;
    std::vector<Eigen::VectorXd> predicted_mean, filtered_mean, smoothed_mean;
    std::vector<Eigen::MatrixXd> predicted_cov, filtered_cov, smoothed_cov;
};

/// Exact answers for a small instance with a proper prior N(a1, P1).
inline ExactGaussian exact_gaussian(const ModelSpec& spec, const ParameterLayout& layout, const Eigen::VectorXd& params,
                                    const PanelDataset& data, const InitialState& prior) {
    if (prior.P_inf.size() > 0 && prior.P_inf.cwiseAbs().maxCoeff() > 0.0)
        throw DomainError("exact_gaussian needs a proper prior");
    validate_params(layout, params);
    const int s = spec.state_dim();
    const auto n = static_cast<Eigen::Index>(data.size());
    ExactGaussian out;
    if (n == 0) return out;

    // realize every row
    std::vector<SystemMatrices> sys;
    GapState gap(data.row(0).stamp);
    for (Eigen::Index t = 0; t < n; ++t)
        sys.push_back(realize(spec, layout, params, data.row(static_cast<std::size_t>(t)), gap, t == 0));

    // observed slots: (row, Z row, value, variance)
    struct Obs {
        Eigen::Index row;
        Eigen::VectorXd z;
        double y, h;
    };
    std::vector<Obs> obs;
    for (Eigen::Index t = 0; t < n; ++t) {
        const auto& sm = sys[static_cast<std::size_t>(t)];
        for (Eigen::Index p = 0; p < sm.Z.rows(); ++p)
            if (sm.observed[static_cast<std::size_t>(p)]) obs.push_back({t, sm.Z.row(p).transpose(), sm.y[p], sm.H(p, p)});
    }
    if (obs.size() > kOracleMaxObs)
        throw RefusalError("exact_gaussian: " + std::to_string(obs.size()) + " observations exceed the cap of " +
                           std::to_string(kOracleMaxObs));
    out.n_obs = obs.size();

    // G maps (alpha_0, eta_1..eta_{n-1}) to stacked states
    const int r = spec.disturbance_dim();
    const Eigen::Index ncols = s + (n - 1) * r;
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n * s, ncols);
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(ncols, ncols);
    Eigen::VectorXd mu(n * s);
    D.topLeftCorner(s, s) = prior.P_star;
    G.block(0, 0, s, s).setIdentity();
    mu.head(s) = prior.a1;
    for (Eigen::Index t = 1; t < n; ++t) {
        const auto& sm = sys[static_cast<std::size_t>(t)];
        G.block(t * s, 0, s, ncols) = sm.T * G.block((t - 1) * s, 0, s, ncols);
        G.block(t * s, s + (t - 1) * r, s, r) += sm.R;
        D.block(s + (t - 1) * r, s + (t - 1) * r, r, r) = sm.Q;
        mu.segment(t * s, s) = sm.T * mu.segment((t - 1) * s, s);
    }
    const Eigen::MatrixXd Sxx = G * D * G.transpose();

    const auto m = static_cast<Eigen::Index>(obs.size());
    Eigen::MatrixXd C(n * s, m);  // cov(x, y)
    Eigen::VectorXd ymean(m), y(m);
    for (Eigen::Index j = 0; j < m; ++j) {
        const auto& o = obs[static_cast<std::size_t>(j)];
        C.col(j) = Sxx.middleCols(o.row * s, s) * o.z;
        ymean[j] = o.z.dot(mu.segment(o.row * s, s));
        y[j] = o.y;
    }
    // cov(y_i, y_j) = z_i' cov(x_{row i}, y_j)
    Eigen::MatrixXd Syy(m, m);
    for (Eigen::Index j = 0; j < m; ++j) {
        for (Eigen::Index i = 0; i < m; ++i) {
            const auto& oi = obs[static_cast<std::size_t>(i)];
            Syy(i, j) = oi.z.dot(C.block(oi.row * s, j, s, 1).col(0));
        }
        Syy(j, j) += obs[static_cast<std::size_t>(j)].h;
    }
    Syy = 0.5 * (Syy + Syy.transpose()).eval();

    if (m > 0) {
        Eigen::LLT<Eigen::MatrixXd> llt(Syy);
        if (llt.info() != Eigen::Success) throw ConditioningError("oracle: observation covariance not positive definite", 0);
        const Eigen::VectorXd e = y - ymean;
        const Eigen::VectorXd w = llt.solve(e);
        const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
        out.loglik = -0.5 * (static_cast<double>(m) * std::log(2.0 * std::numbers::pi) + logdet + e.dot(w));
    }

    // condition row-t states on the observations from rows < limit
    auto conditional = [&](Eigen::Index t, Eigen::Index limit, Eigen::VectorXd& mean, Eigen::MatrixXd& cov) {
        mean = mu.segment(t * s, s);
        cov = Sxx.block(t * s, t * s, s, s);
        std::vector<Eigen::Index> idx;
        for (Eigen::Index j = 0; j < m; ++j)
            if (obs[static_cast<std::size_t>(j)].row < limit) idx.push_back(j);
        if (idx.empty()) return;
        const auto k = static_cast<Eigen::Index>(idx.size());
        Eigen::MatrixXd Sk(k, k), Ck(s, k);
        Eigen::VectorXd ek(k);
        for (Eigen::Index a = 0; a < k; ++a) {
            Ck.col(a) = C.block(t * s, idx[static_cast<std::size_t>(a)], s, 1);
            ek[a] = y[idx[static_cast<std::size_t>(a)]] - ymean[idx[static_cast<std::size_t>(a)]];
            for (Eigen::Index b = 0; b < k; ++b) Sk(a, b) = Syy(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
        }
        Eigen::LLT<Eigen::MatrixXd> llt(Sk);
        mean += Ck * llt.solve(ek);
        cov -= Ck * llt.solve(Ck.transpose());
        cov = 0.5 * (cov + cov.transpose()).eval();
    };

    const auto nn = static_cast<std::size_t>(n);
    out.predicted_mean.resize(nn);
    out.predicted_cov.resize(nn);
    out.filtered_mean.resize(nn);
    out.filtered_cov.resize(nn);
    out.smoothed_mean.resize(nn);
    out.smoothed_cov.resize(nn);
    for (Eigen::Index t = 0; t < n; ++t) {
        const auto tt = static_cast<std::size_t>(t);
        conditional(t, t, out.predicted_mean[tt], out.predicted_cov[tt]);
        conditional(t, t + 1, out.filtered_mean[tt], out.filtered_cov[tt]);
        conditional(t, n, out.smoothed_mean[tt], out.smoothed_cov[tt]);
    }
    return out;
}

}  // namespace paleokalman

#endif  // PALEOKALMAN_SIMULATION_HPP
