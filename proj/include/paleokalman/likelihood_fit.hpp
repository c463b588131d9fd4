#ifndef PALEOKALMAN_LIKELIHOOD_FIT_HPP
#define PALEOKALMAN_LIKELIHOOD_FIT_HPP

// Maximum-likelihood estimation over a ModelSpec.
//
// The optimizer works on unconstrained theta: variances are exp(theta),
// correlations tanh(theta). A Nelder-Mead start (capped at 200 evaluations
// per dimension) is polished by BFGS with central-difference gradients.
// Standard errors come from the central-difference Hessian of -loglik at the
// optimum, mapped to the natural scale by the delta method.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "paleokalman/errors.hpp"
#include "paleokalman/kalman.hpp"
#include "paleokalman/model_spec.hpp"
#include "paleokalman/optimize.hpp"
#include "paleokalman/timeseries.hpp"

namespace paleokalman {

// ---------------------------------------------------------------------------
// Transform
// ---------------------------------------------------------------------------

struct ParamTransform {
    const ParameterLayout* layout;

    Eigen::VectorXd to_natural(const Eigen::VectorXd& theta) const {
        Eigen::VectorXd p(theta.size());
        for (Eigen::Index k = 0; k < theta.size(); ++k)
            p[k] = is_corr(k) ? std::tanh(theta[k]) : std::exp(theta[k]);
        return p;
    }
    Eigen::VectorXd to_unconstrained(const Eigen::VectorXd& params) const {
        Eigen::VectorXd t(params.size());
        for (Eigen::Index k = 0; k < params.size(); ++k)
            t[k] = is_corr(k) ? std::atanh(params[k]) : std::log(params[k]);
        return t;
    }
    /// d(natural)/d(theta) at the natural-scale value.
    double jacobian(Eigen::Index k, double natural) const {
        return is_corr(k) ? 1.0 - natural * natural : natural;
    }

private:
    bool is_corr(Eigen::Index k) const {
        return layout->params[static_cast<std::size_t>(k)].role == ParamRole::corr;
    }
};

// ---------------------------------------------------------------------------
// BIC
// ---------------------------------------------------------------------------

inline double bic(double loglik, int n_params, std::size_t n_obs) {
    if (n_obs < 1) throw DomainError("bic: n_obs must be at least 1");
    return -2.0 * loglik + static_cast<double>(n_params) * std::log(static_cast<double>(n_obs));
}

// ---------------------------------------------------------------------------
// Standard errors
// ---------------------------------------------------------------------------

struct HessianSE {
    Eigen::VectorXd se;  // theta scale; MISSING where not identified
    std::vector<std::string> notes;
};

/// Standard errors of the minimizer of `neg_loglik` from the inverse of its
/// Hessian. Coordinates loading on a (numerically) flat direction are MISSING.
inline HessianSE hessian_standard_errors(const optimize::Objective& neg_loglik, const Eigen::VectorXd& theta,
                                         double rel_step = 1e-4, int threads = 1) {
    const auto n = theta.size();
    HessianSE out{Eigen::VectorXd::Constant(n, kMissing), {}};
    if (n == 0) return out;
    const Eigen::MatrixXd H = optimize::hessian(neg_loglik, theta, rel_step, threads);
    if (!H.allFinite()) {
        out.notes.push_back("Hessian has non-finite entries; standard errors unavailable");
        return out;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(H);
    const Eigen::VectorXd& lam = eig.eigenvalues();
    const Eigen::MatrixXd& V = eig.eigenvectors();
    const double lam_max = lam.cwiseAbs().maxCoeff();
    const double tol = 1e-8 * std::max(lam_max, 1e-300);
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(n);
    std::vector<bool> flat(static_cast<std::size_t>(n), false);
    for (Eigen::Index k = 0; k < n; ++k) {
        if (lam[k] > tol) {
            inv[k] = 1.0 / lam[k];
            continue;
        }
        for (Eigen::Index i = 0; i < n; ++i)
            if (std::abs(V(i, k)) > 1e-6) flat[static_cast<std::size_t>(i)] = true;
    }
    const Eigen::MatrixXd cov = V * inv.asDiagonal() * V.transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
        if (flat[static_cast<std::size_t>(i)]) {
            out.notes.push_back("parameter " + std::to_string(i) + " lies on a flat or non-convex direction of the likelihood");
            continue;
        }
        out.se[i] = std::sqrt(cov(i, i));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Fit
// ---------------------------------------------------------------------------

struct FitOptions {
    int n_starts = 1;
    std::uint64_t seed = 0;
    std::optional<Eigen::VectorXd> start;  // natural scale
    int threads = 1;
    int nm_evals_per_dim = 200;
    int bfgs_max_iterations = 500;
    bool compute_standard_errors = true;
    FilterOptions filter;
};

struct FitResult {
    ModelSpec spec;
    ParameterLayout layout;
    Eigen::VectorXd params_hat;
    Eigen::VectorXd theta_hat;
    Eigen::VectorXd std_errors;
    double loglik = kMissing;
    double bic = kMissing;
    std::size_t n_obs = 0;
    int n_params = 0;
    bool converged = false;
    int iterations = 0;
    double mean_dt = kMissing;
    std::string layout_hash;
    std::vector<std::string> notes;
};

/// Non-MISSING measurement slots of the modelled series.
inline std::size_t count_obs(const ModelSpec& spec, const PanelDataset& data) {
    std::size_t n = 0;
    for (Series s : spec.series()) n += data.n_obs(s);
    return n;
}

/// Hash tying a fit to its (spec, layout, dataset shape).
inline std::string layout_hash(const ModelSpec& spec, const ParameterLayout& layout, const PanelDataset& data) {
    std::string key = nlohmann::json(spec).dump();
    for (const auto& p : layout.params) key += "|" + p.name() + "@" + p.group_label;
    key += "|rows=" + std::to_string(data.size()) + "|obs=" + std::to_string(count_obs(spec, data));
    if (!data.empty()) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "|%.17g|%.17g", data.rows().front().stamp, data.rows().back().stamp);
        key += buf;
    }
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (unsigned char c : key) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char out[17];
    std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
    return out;
}

namespace detail {
inline double sample_variance(const std::vector<double>& x) {
    if (x.size() < 2) return kMissing;
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    return ss / static_cast<double>(x.size() - 1);
}
}  // namespace detail

/// Scale-aware starting values on the natural scale.
inline Eigen::VectorXd starting_values(const ModelSpec& spec, const ParameterLayout& layout, const PanelDataset& data) {
    Eigen::VectorXd p(layout.size());
    const double span = data.size() > 1 ? data.rows().back().stamp - data.rows().front().stamp : 1.0;
    std::array<double, kSeriesCount> eps{}, eta{};
    const auto series = spec.series();
    for (std::size_t b = 0; b < series.size(); ++b) {
        std::vector<double> values, diffs;
        for (const auto& row : data.rows()) {
            double prev = kMissing;
            for (const auto& slot : row.series(series[b])) {
                if (slot.missing()) continue;
                values.push_back(slot.value);
                if (!is_missing(prev)) diffs.push_back(slot.value - prev);
                prev = slot.value;
            }
        }
        double total = detail::sample_variance(values);
        if (is_missing(total) || !(total > 0.0)) total = 1.0;
        double e = 0.5 * detail::sample_variance(diffs);
        if (is_missing(e) || !(e > 0.0)) e = 0.5 * total;
        eps[b] = e;
        const double n = static_cast<double>(std::max<std::size_t>(data.size(), 2));
        eta[b] = total / (span > 0.0 ? span : 1.0) / std::pow(n, 2.0 * (spec.order_m - 1));
    }
    for (int k = 0; k < layout.size(); ++k) {
        const auto& info = layout.params[static_cast<std::size_t>(k)];
        const auto b = static_cast<std::size_t>(spec.block_of(info.series));
        switch (info.role) {
            case ParamRole::meas_var: p[k] = eps[b]; break;
            case ParamRole::trans_var: p[k] = eta[b]; break;
            case ParamRole::corr: p[k] = 0.0; break;
        }
    }
    return p;
}

/// Natural-scale standard errors at theta_hat via the delta method.
inline HessianSE standard_errors(const Eigen::VectorXd& theta_hat, const ModelSpec& spec, const ParameterLayout& layout,
                                 const PanelDataset& data, const FilterOptions& filter_options = {}, int threads = 1) {
    const ParamTransform tr{&layout};
    const optimize::Objective nll = [&](const Eigen::VectorXd& th) {
        try {
            return -loglik(spec, layout, tr.to_natural(th), data, filter_options);
        } catch (const ConditioningError&) {
            return optimize::kInf;
        } catch (const DomainError&) {
            return optimize::kInf;
        }
    };
    HessianSE out = hessian_standard_errors(nll, theta_hat, 1e-4, threads);
    const Eigen::VectorXd natural = tr.to_natural(theta_hat);
    for (Eigen::Index k = 0; k < out.se.size(); ++k)
        if (!is_missing(out.se[k])) out.se[k] *= std::abs(tr.jacobian(k, natural[k]));
    return out;
}

inline FitResult fit(const ModelSpec& spec, const PanelDataset& data, const FitOptions& options = {}) {
    FitResult res;
    res.spec = spec;
    res.layout = build_layout(spec, data);
    const auto& layout = res.layout;
    if (layout.size() < 1) throw DomainError("fit: layout has no parameters");
    res.n_params = layout.size();
    res.n_obs = count_obs(spec, data);
    res.layout_hash = layout_hash(spec, layout, data);
    if (data.size() > 1) res.mean_dt = data.mean_dt();

    const ParamTransform tr{&layout};
    const optimize::Objective nll = [&](const Eigen::VectorXd& th) {
        try {
            return -loglik(spec, layout, tr.to_natural(th), data, options.filter);
        } catch (const ConditioningError&) {
            return optimize::kInf;
        } catch (const DomainError&) {
            return optimize::kInf;
        }
    };

    const Eigen::VectorXd start_nat = options.start ? *options.start : starting_values(spec, layout, data);
    if (start_nat.size() != layout.size()) throw MismatchError("start vector does not match the layout");
    const Eigen::VectorXd theta0 = tr.to_unconstrained(start_nat);
    if (!std::isfinite(nll(theta0))) throw InitializationError("log-likelihood is not finite at the starting point");

    std::mt19937_64 rng(options.seed);
    std::normal_distribution<double> jitter(0.0, 0.5);
    optimize::Minimum best;
    const int dim = layout.size();
    for (int start = 0; start < std::max(options.n_starts, 1); ++start) {
        Eigen::VectorXd th = theta0;
        if (start > 0)
            for (Eigen::Index k = 0; k < th.size(); ++k) th[k] += jitter(rng);
        optimize::NelderMeadOptions nm;
        nm.max_evals = options.nm_evals_per_dim * dim;
        const auto coarse = optimize::nelder_mead(nll, th, nm);
        optimize::BfgsOptions bo;
        bo.max_iterations = options.bfgs_max_iterations;
        bo.threads = options.threads;
        auto polished = optimize::bfgs(nll, coarse.fx < optimize::kInf ? coarse.x : th, bo);
        polished.iterations += coarse.iterations;
        if (polished.fx < best.fx) best = polished;  // ties keep the earlier start
    }
    if (!std::isfinite(best.fx)) throw InitializationError("optimizer found no point with a finite log-likelihood");

    res.theta_hat = best.x;
    res.params_hat = tr.to_natural(best.x);
    res.loglik = -best.fx;
    res.bic = bic(res.loglik, res.n_params, res.n_obs);
    res.converged = best.converged;
    res.iterations = best.iterations;
    if (!res.converged) res.notes.push_back("optimizer stopped before meeting the convergence criteria");
    res.std_errors = Eigen::VectorXd::Constant(dim, kMissing);
    if (options.compute_standard_errors) {
        auto se = standard_errors(res.theta_hat, spec, layout, data, options.filter, options.threads);
        res.std_errors = se.se;
        for (auto& note : se.notes) res.notes.push_back(std::move(note));
    }
    return res;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const FitResult& r) {
    auto num = [](double x) { return is_missing(x) ? nlohmann::json(nullptr) : nlohmann::json(x); };
    nlohmann::json params = nlohmann::json::array();
    for (int k = 0; k < r.layout.size(); ++k) {
        const auto& info = r.layout.params[static_cast<std::size_t>(k)];
        params.push_back({{"name", info.name()},
                          {"group", info.group_label},
                          {"estimate", num(r.params_hat[k])},
                          {"se", num(r.std_errors.size() > k ? r.std_errors[k] : kMissing)}});
    }
    return {{"model", r.spec},        {"params", params},         {"loglik", num(r.loglik)},
            {"bic", num(r.bic)},      {"n_obs", r.n_obs},         {"n_params", r.n_params},
            {"converged", r.converged}, {"iterations", r.iterations}, {"mean_dt", num(r.mean_dt)},
            {"layout_hash", r.layout_hash}, {"notes", r.notes}};
}

/// Stored estimates from a fit file, checked against the layout rebuilt from
/// (spec, data). Throws MismatchError when they do not belong together.
struct StoredFit {
    ModelSpec spec;
    Eigen::VectorXd params;
    std::string layout_hash;
    double mean_dt = kMissing;
    nlohmann::json raw;
};

inline StoredFit stored_fit_from_json(const nlohmann::json& j) {
    StoredFit f;
    f.raw = j;
    f.spec = j.at("model").get<ModelSpec>();
    const auto& ps = j.at("params");
    f.params.resize(static_cast<Eigen::Index>(ps.size()));
    for (std::size_t k = 0; k < ps.size(); ++k) {
        if (ps[k].at("estimate").is_null()) throw MismatchError("fit file has a null estimate");
        f.params[static_cast<Eigen::Index>(k)] = ps[k].at("estimate").get<double>();
    }
    f.layout_hash = j.value("layout_hash", std::string());
    if (j.contains("mean_dt") && !j.at("mean_dt").is_null()) f.mean_dt = j.at("mean_dt").get<double>();
    return f;
}

inline ParameterLayout checked_layout(const StoredFit& f, const PanelDataset& data) {
    auto layout = build_layout(f.spec, data);
    if (layout.size() != f.params.size() || layout_hash(f.spec, layout, data) != f.layout_hash)
        throw MismatchError("fit file does not match this model/data (layout hash differs)");
    return layout;
}

}  // namespace paleokalman

#endif  // PALEOKALMAN_LIKELIHOOD_FIT_HPP
