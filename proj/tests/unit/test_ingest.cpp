#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "paleokalman/ingest.hpp"

using namespace paleokalman;
using namespace paleokalman::ingest;

namespace {

ParsedTable parse(const std::string& text) {
    std::istringstream in(text);
    return parse_csv(in);
}

const std::string kHeader = "age_tuned,d18O,d13C,source,species\n";

std::size_t filled_slots(const PanelDataset& d) {
    std::size_t n = 0;
    for (Series s : kAllSeries) n += d.n_obs(s);
    return n;
}

}  // namespace

TEST(ParseCsv, TableOneRow) {
    const auto t = parse(kHeader + "67.101133,0.800,1.376,X,Y\n");
    ASSERT_EQ(t.records.size(), 1u);
    EXPECT_EQ(t.records[0].age_tuned, 67.101133);
    EXPECT_EQ(t.records[0].d18O, 0.800);
    EXPECT_EQ(t.records[0].d13C, 1.376);
    EXPECT_EQ(t.records[0].source, "X");
    EXPECT_EQ(t.records[0].species, "Y");
    EXPECT_EQ(t.diagnostics.records, 1u);
}

TEST(ParseCsv, EmptyCellIsMissing) {
    const auto t = parse(kHeader + "1.0,,0.5,X,Y\n2.0,NA,,X,Y\n");
    EXPECT_TRUE(is_missing(t.records[0].d18O));
    EXPECT_EQ(t.records[0].d13C, 0.5);
    EXPECT_TRUE(t.records[1].both_empty());
    EXPECT_EQ(t.diagnostics.missing_d18O, 2u);
    EXPECT_EQ(t.diagnostics.missing_d13C, 1u);
    EXPECT_EQ(t.diagnostics.both_empty, 1u);
}

TEST(ParseCsv, MalformedNumberReportsLine) {
    try {
        (void)parse(kHeader + "2.0,1,1,X,Y\n1.0,abc,0.5,X,Y\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
        EXPECT_NE(std::string(e.what()).find("abc"), std::string::npos);
    }
    EXPECT_THROW(parse(kHeader + "75.0,1,1,X,Y\n"), ParseError);
}

TEST(ParseCsv, MissingColumnIsSchemaError) {
    EXPECT_THROW(parse("age_tuned,d18O,source,species\n1,1,X,Y\n"), SchemaError);
    EXPECT_THROW(parse(""), SchemaError);
}

TEST(ParseCsv, QuotedFieldsColumnOrderAndCrlf) {
    const auto t = parse("\xEF\xBB\xBF" "species,source,d13C,d18O,age_tuned\r\n\"CSPP, >250\",\"Smith, 1999\",0.1,0.2,3.5\r\n");
    ASSERT_EQ(t.records.size(), 1u);
    EXPECT_EQ(t.records[0].species, "CSPP, >250");
    EXPECT_EQ(t.records[0].source, "Smith, 1999");
    EXPECT_EQ(t.records[0].d18O, 0.2);
    EXPECT_EQ(t.records[0].age_tuned, 3.5);
}

TEST(Canonicalize, AliasesAndPassThrough) {
    std::vector<RawRecord> r(4);
    r[0].source = "McCarren et al. 2008 et al. 2008";
    r[1].source = "Bickert et al.1997";
    r[2].source = "McCarren et al. 2008";
    r[3].source = "Somebody 2001";
    for (auto& x : r) x.d18O = 1.0;
    const auto reg = canonicalize_sources(r);
    EXPECT_EQ(r[0].source, "McCarren et al. 2008");
    EXPECT_EQ(r[1].source, "Bickert et al. 1997");
    EXPECT_EQ(r[3].source, "Somebody 2001");
    EXPECT_EQ(reg.labels(), (std::vector<std::string>{"McCarren et al. 2008", "Bickert et al. 1997", "Somebody 2001"}));
}

TEST(Canonicalize, SpeciesBuckets) {
    std::vector<RawRecord> r(4);
    r[0].species = "CSPP, specimen >250 \xCE\xBCm";
    r[1].species = "CSPP, 150-250";
    r[2].species = "CSPP, >250";
    r[3].species = "GORB";
    for (auto& x : r) x.d13C = 1.0;
    const auto reg = bucket_species(r);
    EXPECT_EQ(r[0].species, "CSPP >250");
    EXPECT_EQ(r[1].species, "CSPP other");
    EXPECT_EQ(r[2].species, "CSPP >250");
    EXPECT_EQ(reg.size(), 3u);
    const auto m = label_map_from_json(nlohmann::json::parse(R"({"GORB": "other"})"));
    bucket_species(r, m);
    EXPECT_EQ(r[3].species, "other");
}

TEST(BuildDataset, TwoRecordsOneStamp) {
    auto t = parse(kHeader + "5.0,1.0,,A,Y\n5.0,2.0,0.3,B,Y\n4.0,1.5,0.2,A,Y\n");
    const auto b = build_dataset(t.records, t.diagnostics);
    ASSERT_EQ(b.data.size(), 2u);
    EXPECT_EQ(b.data.row(0).stamp, -5.0);
    EXPECT_EQ(b.data.row(0).filled(Series::d18O), 2);
    EXPECT_EQ(b.data.row(0).filled(Series::d13C), 1);
    EXPECT_EQ(b.diagnostics.unique_stamps, 2u);
    EXPECT_EQ(b.diagnostics.max_slots, 2);
    EXPECT_EQ(b.diagnostics.min_dt, 1.0);
    EXPECT_EQ(b.diagnostics.per_source.at("A"), std::make_pair(std::size_t{2}, std::size_t{1}));
    EXPECT_EQ(b.data.row(1).climate_state, 5);
}

TEST(BuildDataset, EmptyInputWarns) {
    auto t = parse(kHeader);
    EXPECT_FALSE(t.diagnostics.warnings.empty());
    const auto b = build_dataset(t.records, t.diagnostics);
    EXPECT_TRUE(b.data.empty());
    EXPECT_FALSE(b.diagnostics.warnings.empty());
}

TEST(BuildDataset, BothEmptyRowKeptWithoutPhantomSource) {
    auto t = parse(kHeader + "3.0,,,,\n2.0,1.0,1.0,A,Y\n");
    const auto b = build_dataset(t.records, t.diagnostics);
    ASSERT_EQ(b.data.size(), 2u);
    EXPECT_TRUE(b.data.row(0).all_missing());
    EXPECT_EQ(b.data.sources().size(), 1u);
    EXPECT_EQ(b.diagnostics.warnings.size(), 1u);
}

TEST(BuildDataset, RecordCountAndCanonicalRoundTrip) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::string text = kHeader;
    std::size_t values = 0, both_empty = 0;
    for (int i = 0; i < 300; ++i) {
        const double age = 0.5 + (i / 2) * 0.2;  // two records per stamp
        const bool a = u(rng) < 0.8, c = u(rng) < 0.7;
        values += a + c;
        both_empty += !a && !c;
        text += csv::format(age) + "," + (a ? csv::format(u(rng)) : "") + "," + (c ? csv::format(u(rng)) : "") +
                ",src" + std::to_string(i % 7) + ",sp" + std::to_string(i % 3) + "\n";
    }
    auto t = parse(text);
    const auto b = build_dataset(t.records, t.diagnostics);
    EXPECT_EQ(filled_slots(b.data), values);
    EXPECT_EQ(b.diagnostics.both_empty, both_empty);

    std::ostringstream csv_out;
    write_canonical_csv(csv_out, b.data);
    std::istringstream csv_in(csv_out.str());
    const auto back = read_canonical(csv_in, nlohmann::json::parse(registry_json(b.data).dump()));
    EXPECT_EQ(back, b.data);

    std::ostringstream ing;
    write_ingest_csv(ing, b.data);
    auto t2 = parse(ing.str());
    EXPECT_EQ(build_dataset(t2.records, t2.diagnostics).data.size(), b.data.size());
}

TEST(Diagnostics, Json) {
    auto t = parse(kHeader + "5.0,1.0,,A,Y\n");
    const auto j = to_json(build_dataset(t.records, t.diagnostics).diagnostics);
    EXPECT_EQ(j.at("records"), 1);
    EXPECT_EQ(j.at("missing_d13C"), 1);
    EXPECT_TRUE(j.at("min_dt").is_null());
}
