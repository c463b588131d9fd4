#ifndef PALEOKALMAN_TESTS_SUPPORT_HPP
#define PALEOKALMAN_TESTS_SUPPORT_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "paleokalman/paleokalman.hpp"

namespace pktest {

using namespace paleokalman;

/// Three regimes cycling with the integer part of the age.
inline int cyclic_regimes(double age) {
    const int k = static_cast<int>(std::floor(age));
    return 1 + ((k % 3) + 3) % 3;
}

inline ModelSpec make_spec(Arity arity, int m, MeasGrouping mg = MeasGrouping::pooled,
                           TransGrouping tg = TransGrouping::pooled, TransGrouping cg = TransGrouping::pooled) {
    ModelSpec s;
    s.arity = arity;
    s.order_m = m;
    s.meas_grouping = mg;
    s.trans_grouping = tg;
    if (arity == Arity::bivariate) s.corr_grouping = cg;
    return s;
}

/// Natural-scale parameters drawn from moderate ranges.
inline Eigen::VectorXd random_params(const ParameterLayout& layout, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> var(0.1, 1.5), corr(-0.8, 0.8);
    Eigen::VectorXd p(layout.size());
    for (int k = 0; k < layout.size(); ++k)
        p[k] = layout.params[static_cast<std::size_t>(k)].role == ParamRole::corr ? corr(rng) : var(rng);
    return p;
}

/// Parameters set by role: every measurement variance `eps`, transition `eta`, correlation `rho`.
inline Eigen::VectorXd role_params(const ParameterLayout& layout, double eps, double eta, double rho = 0.0) {
    Eigen::VectorXd p(layout.size());
    for (int k = 0; k < layout.size(); ++k) {
        switch (layout.params[static_cast<std::size_t>(k)].role) {
            case ParamRole::meas_var: p[k] = eps; break;
            case ParamRole::trans_var: p[k] = eta; break;
            case ParamRole::corr: p[k] = rho; break;
        }
    }
    return p;
}

struct Instance {
    ModelSpec spec;
    PanelDataset data;
    ParameterLayout layout;
    Eigen::VectorXd params;
};

/// A simulated dataset for `spec` with random slot pattern and parameters.
inline Instance random_instance(const ModelSpec& spec, std::size_t rows, int groups, std::uint64_t seed,
                                double missing = 0.25, int slots = 2, double mean_dt = 0.7) {
    std::mt19937_64 rng(seed);
    Design d;
    d.stamps = exponential_stamps(rows, mean_dt, seed + 11, -9.5);
    d.slots_per_row = slots;
    d.n_sources = groups;
    d.missing_prob = missing;
    d.both_series = true;
    d.climate = cyclic_regimes;
    const PanelDataset skel = make_skeleton(d, seed + 17);
    Instance inst{spec, skel, build_layout(spec, skel), {}};
    inst.params = random_params(inst.layout, rng);
    inst.data = simulate(spec, inst.layout, inst.params, skel, seed + 23, std::nullopt, cyclic_regimes);
    return inst;
}

inline InitialState random_prior(int s, std::mt19937_64& rng) {
    std::normal_distribution<double> z(0.0, 1.0);
    Eigen::MatrixXd A(s, s);
    for (int i = 0; i < s; ++i)
        for (int j = 0; j < s; ++j) A(i, j) = z(rng);
    Eigen::VectorXd a(s);
    for (int i = 0; i < s; ++i) a[i] = z(rng);
    return InitialState::proper(a, A * A.transpose() / s + Eigen::MatrixXd::Identity(s, s));
}

/// max |a - b| / (1 + |b|) over entries.
inline double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return ((a - b).array().abs() / (1.0 + b.array().abs())).maxCoeff();
}
inline double rel_err(double a, double b) { return std::abs(a - b) / (1.0 + std::abs(b)); }

}  // namespace pktest

#endif  // PALEOKALMAN_TESTS_SUPPORT_HPP
