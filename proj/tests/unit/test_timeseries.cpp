#include <gtest/gtest.h>

#include <algorithm>
#include <tuple>

#include "paleokalman/timeseries.hpp"

using namespace paleokalman;

TEST(Increments, TableOneStamps) {
    const std::vector<double> st = {-67.101133, -67.098975, -67.096818};
    const auto dt = compute_increments(st);
    ASSERT_EQ(dt.size(), 3u);
    EXPECT_TRUE(is_missing(dt[0]));
    EXPECT_NEAR(dt[1], 0.002158, 1e-12);
    EXPECT_NEAR(dt[2], 0.002157, 1e-12);
}

TEST(Increments, Simple) {
    const std::vector<double> st = {-1.0, -0.5};
    const auto dt = compute_increments(st);
    EXPECT_TRUE(is_missing(dt[0]));
    EXPECT_EQ(dt[1], 0.5);
}

TEST(Increments, DuplicateStampIsOrderingError) {
    const std::vector<double> st = {-2.0, -1.0, -1.0};
    try {
        (void)compute_increments(st);
        FAIL();
    } catch (const OrderingError& e) {
        EXPECT_EQ(e.index(), 2u);
    }
}

TEST(Climate, TableThreeExamples) {
    EXPECT_EQ(assign_climate_state(60.0), 1);
    EXPECT_EQ(assign_climate_state(10.0), 5);
    EXPECT_EQ(assign_climate_state(56.0), 1);  // boundary goes to the older regime
    EXPECT_EQ(assign_climate_state(67.101133), 1);
    EXPECT_EQ(assign_climate_state(0.000564), 6);
    EXPECT_THROW(assign_climate_state(0.0001), OutOfRangeError);
    EXPECT_THROW(assign_climate_state(67.2), OutOfRangeError);
}

TEST(Climate, EveryBoundaryMapsToExactlyOneRegime) {
    for (int j = 0; j + 1 < kClimateStateCount; ++j) {
        const double b = kClimateRegimes[static_cast<std::size_t>(j)].younger_mya;
        EXPECT_EQ(assign_climate_state(b), j + 1);
        EXPECT_EQ(assign_climate_state(std::nextafter(b, 0.0)), j + 2);
    }
    // piecewise constant and non-increasing in age
    int prev = 6;
    for (double age = 0.001; age < 67.1; age += 0.01) {
        const int j = assign_climate_state(age);
        EXPECT_LE(j, prev);
        prev = j;
    }
}

namespace {
Registry regs(int n) {
    Registry r;
    for (int i = 0; i < n; ++i) r.intern("g" + std::to_string(i));
    return r;
}
}  // namespace

TEST(Collate, SameStampTwoSources) {
    const auto d = collate_rows({{-1.0, Series::d18O, 0.5, 0, 0}, {-1.0, Series::d18O, 0.7, 1, 1}}, regs(2), regs(2));
    ASSERT_EQ(d.size(), 1u);
    EXPECT_EQ(d.row(0).filled(Series::d18O), 2);
    EXPECT_EQ(d.row(0).series(Series::d18O)[0].value, 0.5);  // input order
    EXPECT_EQ(d.row(0).series(Series::d18O)[1].source_id, 1);
}

TEST(Collate, FiveAtOneStampIsCapacityError) {
    std::vector<Record> recs(5, Record{-1.0, Series::d13C, 1.0, 0, 0});
    EXPECT_THROW(collate_rows(recs, regs(1), regs(1)), CapacityError);
    recs.pop_back();
    EXPECT_NO_THROW(collate_rows(recs, regs(1), regs(1)));
}

TEST(Collate, NanValueIsParseError) {
    EXPECT_THROW(collate_rows({{-1.0, Series::d18O, kMissing, 0, 0}}, regs(1), regs(1)), ParseError);
}

TEST(Collate, ThreeStampsMatchHandBuiltRows) {
    const auto d = collate_rows({{-3.0, Series::d18O, 1.0, 0, 0},
                                 {-5.0, Series::d13C, 2.0, 0, 0},
                                 {-4.5, Series::d18O, 3.0, 0, 0},
                                 {-3.0, Series::d13C, 4.0, 0, 0}},
                                regs(1), regs(1));
    ObservationRow r0, r1, r2;
    r0.stamp = -5.0;
    r0.series(Series::d13C)[0] = {2.0, 0, 0};
    r0.climate_state = 5;
    r1.stamp = -4.5;
    r1.dt = 0.5;
    r1.series(Series::d18O)[0] = {3.0, 0, 0};
    r1.climate_state = 5;
    r2.stamp = -3.0;
    r2.dt = 1.5;
    r2.series(Series::d18O)[0] = {1.0, 0, 0};
    r2.series(Series::d13C)[0] = {4.0, 0, 0};
    r2.climate_state = 6;
    EXPECT_EQ(d, PanelDataset({r0, r1, r2}, regs(1), regs(1)));
}

TEST(Collate, FlattenRoundTripAndDtSum) {
    std::vector<Record> recs;
    for (int i = 0; i < 60; ++i)
        recs.push_back({-50.0 + 0.37 * (i / 3), i % 2 ? Series::d18O : Series::d13C, 0.1 * i, i % 3, i % 2});
    recs.push_back({-1.0, std::nullopt, kMissing, -1, -1});
    const auto d = collate_rows(recs, regs(3), regs(2));
    auto back = flatten(d);
    auto key = [](const Record& r) {
        return std::make_tuple(r.stamp, r.series ? index_of(*r.series) : -1, r.series ? r.value : 0.0, r.source_id);
    };
    std::vector<decltype(key(recs[0]))> a, b;
    for (const auto& r : recs) a.push_back(key(r));
    for (const auto& r : back) b.push_back(key(r));
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b);
    EXPECT_EQ(collate_rows(back, regs(3), regs(2)), d);

    double sum = 0.0;
    for (std::size_t i = 1; i < d.size(); ++i) sum += d.row(i).dt;
    const double span = d.rows().back().stamp - d.rows().front().stamp;
    EXPECT_NEAR(sum, span, 1e-9 * std::abs(span));
}

TEST(Dataset, RejectsUnknownIdsAndBadDt) {
    ObservationRow r;
    r.stamp = -1.0;
    r.series(Series::d18O)[0] = {1.0, 3, 0};
    EXPECT_THROW(PanelDataset({r}, regs(1), regs(1)), DomainError);
    ObservationRow a, b;
    a.stamp = -2.0;
    b.stamp = -1.0;
    b.dt = 0.7;
    EXPECT_THROW(PanelDataset({a, b}, regs(1), regs(1)), DomainError);
    b.dt = 1.0;
    EXPECT_THROW(PanelDataset({b, a}, regs(1), regs(1)), OrderingError);
}

TEST(Dataset, CountsAndMeanDt) {
    const auto d = collate_rows({{-67.101133, Series::d18O, 1.0, 0, 0},
                                 {-30.0, Series::d18O, 1.0, 0, 0},
                                 {-30.0, Series::d18O, 1.0, 0, 0},
                                 {-0.000564, Series::d13C, 1.0, 0, 0}},
                                regs(1), regs(1));
    EXPECT_EQ(d.n_obs(Series::d18O), 3u);
    EXPECT_EQ(d.n_obs(Series::d13C), 1u);
    EXPECT_EQ(d.max_slots_used(), 2);
    EXPECT_NEAR(d.mean_dt(), (67.101133 - 0.000564) / 2.0, 1e-12);
}

TEST(Dataset, WithMissingRowsSkipsCoincidentStamps) {
    const auto d = collate_rows({{-2.0, Series::d18O, 1.0, 0, 0}, {-1.0, Series::d18O, 2.0, 0, 0}}, regs(1), regs(1));
    const std::vector<double> extra = {-1.5, -1.0, -1.0 + 1e-14, -0.5, -1.5};
    const auto m = with_missing_rows(d, extra);
    ASSERT_EQ(m.size(), 4u);
    EXPECT_TRUE(m.row(1).all_missing());
    EXPECT_EQ(m.row(2).series(Series::d18O)[0].value, 2.0);
    EXPECT_TRUE(m.row(3).all_missing());
    EXPECT_DOUBLE_EQ(m.row(3).dt, 0.5);
}
