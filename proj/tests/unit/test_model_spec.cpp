#include <gtest/gtest.h>

#include "support.hpp"

using namespace paleokalman;
using namespace pktest;

namespace {

/// Dataset with `sources` sources, each observing both series at least once
/// in every one of the six climate regimes.
PanelDataset full_grid(int sources) {
    Registry src, spc;
    for (int g = 0; g < sources; ++g) {
        src.intern("study " + std::to_string(g));
        spc.intern("species " + std::to_string(g % 5));
    }
    const double ages[6] = {60.0, 50.0, 40.0, 20.0, 10.0, 1.0};
    std::vector<Record> recs;
    for (int j = 0; j < 6; ++j)
        for (int g = 0; g < sources; ++g) {
            const double stamp = -ages[j] + 0.01 * g;
            recs.push_back({stamp, Series::d18O, 1.0 + g, g, g % 5});
            recs.push_back({stamp, Series::d13C, 2.0 - g, g, g % 5});
        }
    return collate_rows(recs, src, spc);
}

}  // namespace

TEST(ModelSpecJson, RoundTripAndFieldNames) {
    const auto s = make_spec(Arity::bivariate, 3, MeasGrouping::by_species, TransGrouping::by_climate_state,
                             TransGrouping::pooled);
    const nlohmann::json j = s;
    EXPECT_EQ(j.at("arity"), "bivariate");
    EXPECT_EQ(j.at("order_m"), 3);
    EXPECT_EQ(j.at("meas_grouping"), "by-species");
    EXPECT_EQ(j.at("trans_grouping"), "by-climate-state");
    EXPECT_EQ(j.at("corr_grouping"), "pooled");
    EXPECT_EQ(j.get<ModelSpec>(), s);

    const auto u = make_spec(Arity::univariate_series2, 1);
    EXPECT_FALSE(nlohmann::json(u).contains("corr_grouping"));
    EXPECT_EQ(nlohmann::json(u).get<ModelSpec>(), u);
}

TEST(ModelSpecJson, RejectsUnknownValues) {
    nlohmann::json j = make_spec(Arity::univariate_series1, 1);
    j["meas_grouping"] = "by-planet";
    EXPECT_ANY_THROW(j.get<ModelSpec>());
}

TEST(ModelSpec, Validation) {
    auto s = make_spec(Arity::univariate_series1, 9);
    EXPECT_THROW(s.validate(), DomainError);
    s.order_m = 0;
    EXPECT_THROW(s.validate(), DomainError);
    s.order_m = 8;
    EXPECT_NO_THROW(s.validate());
    s.corr_grouping = TransGrouping::pooled;
    EXPECT_THROW(s.validate(), DomainError);
    auto b = make_spec(Arity::bivariate, 1);
    b.corr_grouping.reset();
    EXPECT_THROW(b.validate(), DomainError);
}

TEST(Layout, PooledRwnHasTwoParameters) {
    const auto d = full_grid(3);
    const auto l = build_layout(make_spec(Arity::univariate_series1, 1), d);
    ASSERT_EQ(l.size(), 2);
    EXPECT_EQ(l.params[0].name(), "sigma2_eps_d18O");
    EXPECT_EQ(l.params[1].name(), "sigma2_eta_d18O");
}

TEST(Layout, BySourceWith34SourcesHas35Parameters) {
    const auto d = full_grid(34);
    const auto l = build_layout(make_spec(Arity::univariate_series1, 1, MeasGrouping::by_source), d);
    EXPECT_EQ(l.size(), 35);
    EXPECT_EQ(l.meas_var_count, 34);
    EXPECT_EQ(l.params[5].group_label, "study 5");
}

TEST(Layout, FullBivariateHas86Parameters) {
    const auto d = full_grid(34);
    const auto l = build_layout(make_spec(Arity::bivariate, 1, MeasGrouping::by_source, TransGrouping::by_climate_state,
                                          TransGrouping::by_climate_state),
                                d);
    EXPECT_EQ(l.size(), 86);
    EXPECT_EQ(l.meas_var_count, 68);
    EXPECT_EQ(l.trans_var_count, 12);
    EXPECT_EQ(l.corr_count, 6);
    EXPECT_EQ(l.params.back().group_label, "Icehouse");
}

TEST(Layout, EmptyGroupsGetNoParameter) {
    // species 1 only ever has d18O values
    const auto d = collate_rows({{-2.0, Series::d18O, 1.0, 0, 0},
                                 {-2.0, Series::d13C, 1.0, 0, 0},
                                 {-1.0, Series::d18O, 1.0, 1, 1}},
                                Registry({"a", "b"}), Registry({"x", "y"}));
    const auto l = build_layout(make_spec(Arity::bivariate, 1, MeasGrouping::by_species), d);
    EXPECT_EQ(l.meas_var_count, 3);
    EXPECT_EQ(l.meas_index[1][1], -1);
    EXPECT_EQ(l.corr_count, 1);
    EXPECT_THROW(build_layout(make_spec(Arity::univariate_series1, 1), PanelDataset()), DomainError);
}

TEST(Realize, TransitionBlocks) {
    const auto d = full_grid(1);
    GapState gap(d.row(0).stamp);
    for (int m = 1; m <= 3; ++m) {
        const auto spec = make_spec(Arity::univariate_series1, m);
        const auto l = build_layout(spec, d);
        GapState g(d.row(0).stamp);
        const auto sm = realize(spec, l, role_params(l, 1.0, 1.0), d.row(1), g);
        Eigen::MatrixXd expect = Eigen::MatrixXd::Identity(m, m);
        for (int i = 0; i + 1 < m; ++i) expect(i, i + 1) = 1.0;
        EXPECT_EQ(sm.T, expect);
        EXPECT_EQ(sm.R(m - 1, 0), 1.0);
        EXPECT_EQ(sm.R.sum(), 1.0);
    }
    Eigen::Matrix3d t3;
    t3 << 1, 1, 0, 0, 1, 1, 0, 0, 1;
    EXPECT_EQ(integration_block(3), Eigen::MatrixXd(t3));
}

TEST(Realize, BivariateOverlapCovariance) {
    // series 1 observed at stamps 0 and 2, series 2 at 0, 1 and 2
    const auto d = collate_rows({{-10.0, Series::d18O, 0.0, 0, 0},
                                 {-10.0, Series::d13C, 0.0, 0, 0},
                                 {-9.0, Series::d13C, 0.0, 0, 0},
                                 {-8.0, Series::d18O, 0.0, 0, 0},
                                 {-8.0, Series::d13C, 0.0, 0, 0}},
                                Registry({"s"}), Registry({"x"}));
    const auto spec = make_spec(Arity::bivariate, 1);
    const auto l = build_layout(spec, d);
    const auto p = role_params(l, 1.0, 1.0, 0.5);
    GapState gap(d.row(0).stamp);
    (void)realize(spec, l, p, d.row(0), gap, true);
    (void)realize(spec, l, p, d.row(1), gap);
    const auto sm = realize(spec, l, p, d.row(2), gap);
    EXPECT_DOUBLE_EQ(sm.Q(0, 0), 2.0);
    EXPECT_DOUBLE_EQ(sm.Q(1, 1), 1.0);
    EXPECT_DOUBLE_EQ(sm.Q(0, 1), 0.5);
    EXPECT_GT(Eigen::LLT<Eigen::MatrixXd>(sm.Q + 1e-15 * Eigen::MatrixXd::Identity(2, 2)).info() == Eigen::Success, 0);
}

TEST(Realize, GapAccumulation) {
    // series 2 missing at the middle row (dt 0.2), present again after dt 0.3
    const auto d = collate_rows({{-5.0, Series::d18O, 0.0, 0, 0},
                                 {-5.0, Series::d13C, 0.0, 0, 0},
                                 {-4.8, Series::d18O, 0.0, 0, 0},
                                 {-4.5, Series::d18O, 0.0, 0, 0},
                                 {-4.5, Series::d13C, 0.0, 0, 0}},
                                Registry({"s"}), Registry({"x"}));
    const auto spec = make_spec(Arity::bivariate, 1);
    const auto l = build_layout(spec, d);
    const auto p = role_params(l, 1.0, 1.0, 0.0);
    GapState gap(d.row(0).stamp);
    (void)realize(spec, l, p, d.row(0), gap, true);
    const auto mid = realize(spec, l, p, d.row(1), gap);
    EXPECT_EQ(mid.Q(1, 1), 0.0);
    EXPECT_EQ(mid.T(1, 1), 1.0);
    EXPECT_FALSE(mid.observed[4]);
    const auto last = realize(spec, l, p, d.row(2), gap);
    EXPECT_NEAR(last.Q(1, 1), 0.5, 1e-12);
    EXPECT_NEAR(last.Q(0, 0), 0.3, 1e-12);
}

TEST(Realize, GapSumEqualsObservedSpan) {
    const auto inst = random_instance(make_spec(Arity::bivariate, 2), 60, 2, 3, 0.5, 1);
    for (Series s : kAllSeries) {
        GapState gap(inst.data.row(0).stamp);
        RowModel rm;
        double sum = 0.0, first = kMissing, last = kMissing;
        for (std::size_t t = 0; t < inst.data.size(); ++t) {
            describe_row(inst.spec, inst.layout, inst.params, inst.data.row(t), gap, t == 0, rm);
            const int b = index_of(s);
            if (inst.data.row(t).observed(s)) {
                if (is_missing(first)) first = inst.data.row(t).stamp;
                else sum += rm.dt_eff[static_cast<std::size_t>(b)];
                last = inst.data.row(t).stamp;
            }
        }
        EXPECT_NEAR(sum, last - first, 1e-9 * (last - first));
    }
}

TEST(Realize, MeasurementMatricesAndPsd) {
    const auto inst = random_instance(make_spec(Arity::bivariate, 2, MeasGrouping::by_source), 40, 3, 9, 0.3, 3);
    GapState gap(inst.data.row(0).stamp);
    for (std::size_t t = 0; t < inst.data.size(); ++t) {
        const auto sm = realize(inst.spec, inst.layout, inst.params, inst.data.row(t), gap, t == 0);
        EXPECT_EQ(sm.Z.rows(), 8);
        EXPECT_EQ(sm.Z.cols(), 4);
        for (Eigen::Index p = 0; p < 8; ++p) {
            EXPECT_EQ(sm.Z.row(p).sum(), 1.0);
            EXPECT_EQ(sm.Z(p, p < 4 ? 0 : 2), 1.0);
            EXPECT_GE(sm.H(p, p), 0.0);
            EXPECT_EQ(sm.H(p, p) > 0.0, static_cast<bool>(sm.observed[static_cast<std::size_t>(p)]));
        }
        EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sm.Q).eigenvalues().minCoeff(), -1e-14);
    }
}

TEST(Realize, ZeroCorrelationMatchesUnivariateBlocks) {
    const auto biv = make_spec(Arity::bivariate, 2, MeasGrouping::by_source);
    const auto inst = random_instance(biv, 30, 2, 14, 0.3, 2);
    Eigen::VectorXd p = inst.params;
    for (int k = 0; k < inst.layout.size(); ++k)
        if (inst.layout.params[static_cast<std::size_t>(k)].role == ParamRole::corr) p[k] = 0.0;
    for (Series s : kAllSeries) {
        const auto uni = make_spec(s == Series::d18O ? Arity::univariate_series1 : Arity::univariate_series2, 2,
                                   MeasGrouping::by_source);
        const auto ul = build_layout(uni, inst.data);
        Eigen::VectorXd up(ul.size());
        for (int k = 0; k < ul.size(); ++k) {
            const auto& info = ul.params[static_cast<std::size_t>(k)];
            for (int j = 0; j < inst.layout.size(); ++j) {
                const auto& bi = inst.layout.params[static_cast<std::size_t>(j)];
                if (bi.role == info.role && bi.series == info.series && bi.group == info.group) up[k] = p[j];
            }
        }
        GapState gb(inst.data.row(0).stamp), gu(inst.data.row(0).stamp);
        const int b = index_of(s);
        for (std::size_t t = 0; t < inst.data.size(); ++t) {
            const auto sb = realize(biv, inst.layout, p, inst.data.row(t), gb, t == 0);
            const auto su = realize(uni, ul, up, inst.data.row(t), gu, t == 0);
            EXPECT_EQ(sb.Q(0, 1), 0.0);
            EXPECT_EQ(sb.T.block(2 * b, 2 * b, 2, 2), su.T);
            EXPECT_EQ(sb.Q(b, b), su.Q(0, 0));
            EXPECT_EQ(sb.H.block(4 * b, 4 * b, 4, 4), su.H);
        }
    }
}

TEST(Realize, RejectsInadmissibleParameters) {
    const auto d = full_grid(1);
    const auto spec = make_spec(Arity::bivariate, 1);
    const auto l = build_layout(spec, d);
    GapState gap(d.row(0).stamp);
    EXPECT_THROW(realize(spec, l, role_params(l, 0.0, 1.0), d.row(1), gap), DomainError);
    EXPECT_THROW(realize(spec, l, role_params(l, 1.0, -1.0), d.row(1), gap), DomainError);
    EXPECT_THROW(realize(spec, l, role_params(l, 1.0, 1.0, 1.0), d.row(1), gap), DomainError);
    EXPECT_THROW(realize(spec, l, Eigen::VectorXd::Ones(2), d.row(1), gap), MismatchError);
}
