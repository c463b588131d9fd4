#ifndef PALEOKALMAN_OPTIMIZE_HPP
#define PALEOKALMAN_OPTIMIZE_HPP

// Derivative-free and quasi-Newton minimizers with finite-difference
// derivatives. Objectives return +inf where they are undefined.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <thread>
#include <vector>

#include <Eigen/Dense>

namespace paleokalman::optimize {

using Objective = std::function<double(const Eigen::VectorXd&)>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Run fn(i) for i in [0, n) on up to `threads` threads.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += workers) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

inline double safe_eval(const Objective& f, const Eigen::VectorXd& x) {
    const double v = f(x);
    return std::isfinite(v) ? v : kInf;
}

struct Minimum {
    Eigen::VectorXd x;
    double fx = kInf;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
};

// ---------------------------------------------------------------------------
// Nelder-Mead
// ---------------------------------------------------------------------------

struct NelderMeadOptions {
    int max_evals = 400;
    double initial_step = 0.5;
    double ftol = 1e-10;  // stop when the simplex spread in f falls below this
};

inline Minimum nelder_mead(const Objective& f, const Eigen::VectorXd& x0, const NelderMeadOptions& opt = {}) {
    const auto n = x0.size();
    std::vector<Eigen::VectorXd> pts(static_cast<std::size_t>(n + 1), x0);
    std::vector<double> fv(static_cast<std::size_t>(n + 1));
    for (Eigen::Index i = 0; i < n; ++i) pts[static_cast<std::size_t>(i + 1)][i] += opt.initial_step;
    int evals = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        fv[i] = safe_eval(f, pts[i]);
        ++evals;
    }
    std::vector<std::size_t> order(pts.size());
    int iter = 0;
    bool converged = false;
    while (evals < opt.max_evals) {
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
        const std::size_t best = order.front(), worst = order.back(), second = order[order.size() - 2];
        if (std::isfinite(fv[worst]) && std::abs(fv[worst] - fv[best]) <= opt.ftol * (1.0 + std::abs(fv[best]))) {
            converged = true;
            break;
        }
        ++iter;
        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
        for (std::size_t i = 0; i < pts.size(); ++i)
            if (i != worst) centroid += pts[i];
        centroid /= static_cast<double>(n);

        const Eigen::VectorXd xr = centroid + (centroid - pts[worst]);
        const double fr = safe_eval(f, xr);
        ++evals;
        if (fr < fv[best]) {
            const Eigen::VectorXd xe = centroid + 2.0 * (centroid - pts[worst]);
            const double fe = safe_eval(f, xe);
            ++evals;
            if (fe < fr) {
                pts[worst] = xe;
                fv[worst] = fe;
            } else {
                pts[worst] = xr;
                fv[worst] = fr;
            }
            continue;
        }
        if (fr < fv[second]) {
            pts[worst] = xr;
            fv[worst] = fr;
            continue;
        }
        const bool outside = fr < fv[worst];
        const Eigen::VectorXd xc = outside ? Eigen::VectorXd(centroid + 0.5 * (xr - centroid))
                                           : Eigen::VectorXd(centroid + 0.5 * (pts[worst] - centroid));
        const double fc = safe_eval(f, xc);
        ++evals;
        if (fc < (outside ? fr : fv[worst])) {
            pts[worst] = xc;
            fv[worst] = fc;
            continue;
        }
        // shrink toward the best vertex
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (i == best) continue;
            pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
            fv[i] = safe_eval(f, pts[i]);
            ++evals;
        }
    }
    const auto best = static_cast<std::size_t>(std::min_element(fv.begin(), fv.end()) - fv.begin());
    return {pts[best], fv[best], iter, evals, converged};
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

/// Central-difference gradient, step rel_step * (1 + |x_i|).
inline Eigen::VectorXd gradient(const Objective& f, const Eigen::VectorXd& x, double rel_step = 1e-5,
                                int threads = 1) {
    const auto n = x.size();
    Eigen::VectorXd g(n);
    parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t ii) {
        const auto i = static_cast<Eigen::Index>(ii);
        const double h = rel_step * (1.0 + std::abs(x[i]));
        Eigen::VectorXd xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        g[i] = (safe_eval(f, xp) - safe_eval(f, xm)) / (2.0 * h);
    });
    return g;
}

/// Central-difference Hessian, step rel_step * (1 + |x_i|).
inline Eigen::MatrixXd hessian(const Objective& f, const Eigen::VectorXd& x, double rel_step = 1e-4, int threads = 1) {
    const auto n = x.size();
    Eigen::VectorXd h(n);
    for (Eigen::Index i = 0; i < n; ++i) h[i] = rel_step * (1.0 + std::abs(x[i]));
    const double f0 = safe_eval(f, x);
    Eigen::MatrixXd H(n, n);
    std::vector<std::pair<Eigen::Index, Eigen::Index>> cells;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) cells.emplace_back(i, j);
    parallel_for(cells.size(), threads, [&](std::size_t c) {
        const auto [i, j] = cells[c];
        auto at = [&](double si, double sj) {
            Eigen::VectorXd y = x;
            y[i] += si * h[i];
            y[j] += sj * h[j];
            return safe_eval(f, y);
        };
        double v;
        if (i == j) {
            v = (at(0.5, 0.5) - 2.0 * f0 + at(-0.5, -0.5)) / (h[i] * h[i]);  // +-h on coordinate i
        } else {
            v = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * h[i] * h[j]);
        }
        H(i, j) = H(j, i) = v;
    });
    return H;
}

// ---------------------------------------------------------------------------
// BFGS
// ---------------------------------------------------------------------------

struct BfgsOptions {
    int max_iterations = 500;
    double f_tol = 1e-8;      // improvement over one iteration
    double g_tol = 1e-4;      // infinity norm of the gradient
    double grad_step = 1e-5;  // relative finite-difference step
    int threads = 1;
};

inline Minimum bfgs(const Objective& f, const Eigen::VectorXd& x0, const BfgsOptions& opt = {}) {
    const auto n = x0.size();
    Minimum res;
    res.x = x0;
    res.fx = safe_eval(f, x0);
    res.evaluations = 1;
    if (!std::isfinite(res.fx)) return res;

    Eigen::MatrixXd Hinv = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd g = gradient(f, res.x, opt.grad_step, opt.threads);
    res.evaluations += static_cast<int>(2 * n);
    for (int it = 0; it < opt.max_iterations; ++it) {
        res.iterations = it + 1;
        if (g.lpNorm<Eigen::Infinity>() < opt.g_tol && it > 0) {
            res.converged = true;
            break;
        }
        Eigen::VectorXd d = -Hinv * g;
        if (!(d.dot(g) < 0.0)) {
            Hinv.setIdentity();
            d = -g;
        }
        // backtracking Armijo line search
        double step = 1.0;
        const double slope = d.dot(g);
        Eigen::VectorXd x_new;
        double f_new = kInf;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            x_new = res.x + step * d;
            f_new = safe_eval(f, x_new);
            ++res.evaluations;
            if (f_new <= res.fx + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            // no descent along d: converged only if the gradient is already small
            res.converged = g.lpNorm<Eigen::Infinity>() < opt.g_tol;
            break;
        }
        const double improvement = res.fx - f_new;
        const Eigen::VectorXd s_vec = x_new - res.x;
        const Eigen::VectorXd g_new = gradient(f, x_new, opt.grad_step, opt.threads);
        res.evaluations += static_cast<int>(2 * n);
        const Eigen::VectorXd y = g_new - g;
        res.x = x_new;
        res.fx = f_new;
        g = g_new;
        if (improvement < opt.f_tol && g.lpNorm<Eigen::Infinity>() < opt.g_tol) {
            res.converged = true;
            break;
        }
        const double sy = s_vec.dot(y);
        if (sy > 1e-12 * s_vec.norm() * y.norm()) {
            if (it == 0) Hinv *= sy / y.squaredNorm();
            const double rho = 1.0 / sy;
            const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
            Hinv = (I - rho * s_vec * y.transpose()) * Hinv * (I - rho * y * s_vec.transpose()) +
                   rho * s_vec * s_vec.transpose();
        }
    }
    return res;
}

}  // namespace paleokalman::optimize

#endif  // PALEOKALMAN_OPTIMIZE_HPP
