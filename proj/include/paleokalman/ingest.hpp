#ifndef PALEOKALMAN_INGEST_HPP
#define PALEOKALMAN_INGEST_HPP

// Flat-table ingestion: age_tuned, d18O, d13C, source, species.
//
// Ages are positive MYA in the file and become negative stamps in the
// dataset. Empty cells (or NA) are MISSING; a record with both values empty
// still reserves its stamp as an all-MISSING row.

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "paleokalman/csv.hpp"
#include "paleokalman/errors.hpp"
#include "paleokalman/timeseries.hpp"

namespace paleokalman::ingest {

struct RawRecord {
    double age_tuned = 0.0;
    double d18O = kMissing;
    double d13C = kMissing;
    std::string source;
    std::string species;
    std::size_t line = 0;

    bool both_empty() const noexcept { return is_missing(d18O) && is_missing(d13C); }
};

struct Diagnostics {
    std::size_t records = 0;
    std::size_t missing_d18O = 0;
    std::size_t missing_d13C = 0;
    std::size_t both_empty = 0;
    std::size_t unique_stamps = 0;
    int max_slots = 0;
    double min_dt = kMissing;
    double max_dt = kMissing;
    // source label -> (d18O count, d13C count)
    std::map<std::string, std::pair<std::size_t, std::size_t>> per_source;
    std::vector<std::string> warnings;
};

struct ParsedTable {
    std::vector<RawRecord> records;
    Diagnostics diagnostics;
};

inline ParsedTable parse_csv(std::istream& in) {
    csv::Reader reader(in);
    ParsedTable out;
    const auto header = reader.next();
    if (!header) throw SchemaError("empty input: missing header row");
    const std::vector<std::string> required = {"age_tuned", "d18O", "d13C", "source", "species"};
    std::vector<std::size_t> col(required.size());
    for (std::size_t k = 0; k < required.size(); ++k) {
        auto it = std::find_if(header->begin(), header->end(),
                               [&](const std::string& h) { return csv::trim(h) == required[k]; });
        if (it == header->end()) throw SchemaError("missing header column '" + required[k] + "'");
        col[k] = static_cast<std::size_t>(it - header->begin());
    }
    auto value = [](const std::string& field, const char* name, std::size_t line) {
        const auto t = csv::trim(field);
        if (t.empty() || t == "NA" || t == "NaN") return kMissing;
        const auto v = csv::to_double(t);
        if (!v) throw ParseError("malformed " + std::string(name) + " value '" + std::string(t) + "' at line " +
                                     std::to_string(line),
                                 line);
        return *v;
    };
    while (auto fields = reader.next()) {
        const std::size_t line = reader.line();
        if (fields->size() == 1 && csv::trim((*fields)[0]).empty()) continue;  // blank line
        if (fields->size() < header->size())
            throw ParseError("too few fields at line " + std::to_string(line), line);
        RawRecord r;
        r.line = line;
        const auto age = csv::to_double((*fields)[col[0]]);
        if (!age) throw ParseError("malformed age_tuned at line " + std::to_string(line), line);
        if (!(*age > 0.0 && *age < 70.0))
            throw ParseError("age_tuned outside (0, 70) at line " + std::to_string(line), line);
        r.age_tuned = *age;
        r.d18O = value((*fields)[col[1]], "d18O", line);
        r.d13C = value((*fields)[col[2]], "d13C", line);
        r.source = std::string(csv::trim((*fields)[col[3]]));
        r.species = std::string(csv::trim((*fields)[col[4]]));
        auto& d = out.diagnostics;
        ++d.records;
        d.missing_d18O += is_missing(r.d18O) ? 1 : 0;
        d.missing_d13C += is_missing(r.d13C) ? 1 : 0;
        d.both_empty += r.both_empty() ? 1 : 0;
        out.records.push_back(std::move(r));
    }
    if (out.records.empty()) out.diagnostics.warnings.push_back("input has no data rows");
    return out;
}

inline ParsedTable parse_csv_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path);
    return parse_csv(in);
}

using LabelMap = std::map<std::string, std::string>;

inline LabelMap default_source_aliases() {
    return {
        {"McCarren et al. 2008 et al. 2008", "McCarren et al. 2008"},
        {"Bickert et al.1997", "Bickert et al. 1997"},
        {"this study", "Westerhold et al. 2020"},
    };
}

inline LabelMap default_species_buckets() {
    return {
        {"CSPP, >250", "CSPP >250"},
        {"CSPP, specimen >250 \xCE\xBCm", "CSPP >250"},
        {"CSPP, whole specimen", "CSPP other"},
        {"CSPP, 150-250", "CSPP other"},
        {"CSPP, >250, Reruns", "CSPP other"},
    };
}

/// Label map from a JSON object {"from": "to", ...}.
inline LabelMap label_map_from_json(const nlohmann::json& j) {
    LabelMap m;
    for (auto it = j.begin(); it != j.end(); ++it) m[it.key()] = it.value().get<std::string>();
    return m;
}

/// Rewrites source labels through `aliases`; registry ids follow first
/// appearance in record order. Records without values register nothing.
inline Registry canonicalize_sources(std::vector<RawRecord>& records, const LabelMap& aliases = default_source_aliases()) {
    Registry reg;
    for (auto& r : records) {
        if (auto it = aliases.find(r.source); it != aliases.end()) r.source = it->second;
        if (!r.both_empty()) reg.intern(r.source);
    }
    return reg;
}

inline Registry bucket_species(std::vector<RawRecord>& records, const LabelMap& buckets = default_species_buckets()) {
    Registry reg;
    for (auto& r : records) {
        if (auto it = buckets.find(r.species); it != buckets.end()) r.species = it->second;
        if (!r.both_empty()) reg.intern(r.species);
    }
    return reg;
}

struct BuildOptions {
    LabelMap source_aliases = default_source_aliases();
    LabelMap species_buckets = default_species_buckets();
    ClimateAssigner climate = assign_climate_state;
};

struct BuiltDataset {
    PanelDataset data;
    Diagnostics diagnostics;
};

inline BuiltDataset build_dataset(std::vector<RawRecord> records, Diagnostics diagnostics = {},
                                  const BuildOptions& options = {}) {
    Registry sources = canonicalize_sources(records, options.source_aliases);
    Registry species = bucket_species(records, options.species_buckets);

    std::stable_sort(records.begin(), records.end(),
                     [](const RawRecord& a, const RawRecord& b) { return a.age_tuned > b.age_tuned; });
    std::vector<Record> recs;
    recs.reserve(records.size() * 2);
    for (const auto& r : records) {
        const double stamp = -r.age_tuned;
        if (r.both_empty()) {
            recs.push_back({stamp, std::nullopt, kMissing, -1, -1});
            continue;
        }
        const int src = *sources.find(r.source);
        const int spc = *species.find(r.species);
        if (!is_missing(r.d18O)) recs.push_back({stamp, Series::d18O, r.d18O, src, spc});
        if (!is_missing(r.d13C)) recs.push_back({stamp, Series::d13C, r.d13C, src, spc});
        auto& counts = diagnostics.per_source[r.source];
        counts.first += is_missing(r.d18O) ? 0 : 1;
        counts.second += is_missing(r.d13C) ? 0 : 1;
    }

    BuiltDataset out{collate_rows(std::move(recs), std::move(sources), std::move(species), options.climate),
                     std::move(diagnostics)};
    auto& d = out.diagnostics;
    d.unique_stamps = out.data.size();
    d.max_slots = out.data.max_slots_used();
    for (std::size_t i = 1; i < out.data.size(); ++i) {
        const double dt = out.data.row(i).dt;
        if (is_missing(d.min_dt) || dt < d.min_dt) d.min_dt = dt;
        if (is_missing(d.max_dt) || dt > d.max_dt) d.max_dt = dt;
    }
    std::size_t all_missing = 0;
    for (const auto& row : out.data.rows()) all_missing += row.all_missing() ? 1 : 0;
    if (all_missing > 0)
        d.warnings.push_back(std::to_string(all_missing) + " time stamp(s) have no value in either series");
    if (out.data.empty()) d.warnings.push_back("dataset is empty");
    return out;
}

inline nlohmann::json to_json(const Diagnostics& d) {
    auto num = [](double x) { return is_missing(x) ? nlohmann::json(nullptr) : nlohmann::json(x); };
    nlohmann::json per = nlohmann::json::object();
    for (const auto& [k, v] : d.per_source) per[k] = {{"d18O", v.first}, {"d13C", v.second}};
    return {{"records", d.records},         {"missing_d18O", d.missing_d18O},
            {"missing_d13C", d.missing_d13C}, {"both_empty", d.both_empty},
            {"unique_stamps", d.unique_stamps}, {"max_slots", d.max_slots},
            {"min_dt", num(d.min_dt)},      {"max_dt", num(d.max_dt)},
            {"per_source", per},            {"warnings", d.warnings}};
}

// ---------------------------------------------------------------------------
// Canonical form
// ---------------------------------------------------------------------------

/// One line per filled slot: stamp_mya (positive age), series, value,
/// source_id, species_id, climate_state. All-MISSING rows get one line with
/// empty series/value/id fields.
inline void write_canonical_csv(std::ostream& os, const PanelDataset& data) {
    os << "stamp_mya,series,value,source_id,species_id,climate_state\n";
    for (const auto& row : data.rows()) {
        const std::string age = csv::format(-row.stamp);
        if (row.all_missing()) {
            os << age << ",,,,," << row.climate_state << '\n';
            continue;
        }
        for (Series s : kAllSeries) {
            for (const auto& slot : row.series(s)) {
                if (slot.missing()) continue;
                os << age << ',' << series_name(s) << ',' << csv::format(slot.value) << ',' << slot.source_id << ','
                   << slot.species_id << ',' << row.climate_state << '\n';
            }
        }
    }
}

inline nlohmann::json registry_json(const PanelDataset& data) {
    return {{"sources", data.sources().labels()}, {"species", data.species().labels()}};
}

inline PanelDataset read_canonical(std::istream& csv_in, const nlohmann::json& registry,
                                   const ClimateAssigner& climate = assign_climate_state) {
    Registry sources(registry.at("sources").get<std::vector<std::string>>());
    Registry species(registry.at("species").get<std::vector<std::string>>());
    csv::Reader reader(csv_in);
    const auto header = reader.next();
    if (!header || header->size() < 6 || (*header)[0] != "stamp_mya") throw SchemaError("not a canonical CSV");
    std::vector<Record> recs;
    while (auto f = reader.next()) {
        const std::size_t line = reader.line();
        if (f->size() < 6) throw ParseError("too few fields at line " + std::to_string(line), line);
        const auto age = csv::to_double((*f)[0]);
        if (!age) throw ParseError("malformed stamp_mya at line " + std::to_string(line), line);
        if ((*f)[1].empty()) {
            recs.push_back({-*age, std::nullopt, kMissing, -1, -1});
            continue;
        }
        const auto series = parse_series((*f)[1]);
        const auto v = csv::to_double((*f)[2]);
        const auto src = csv::to_double((*f)[3]);
        const auto spc = csv::to_double((*f)[4]);
        if (!series || !v || !src || !spc) throw ParseError("malformed canonical line " + std::to_string(line), line);
        recs.push_back({-*age, *series, *v, static_cast<int>(*src), static_cast<int>(*spc)});
    }
    return collate_rows(std::move(recs), std::move(sources), std::move(species), climate);
}

/// Writes `data` in the ingest schema. Slot k of both series shares a line
/// when it carries the same source and species.
inline void write_ingest_csv(std::ostream& os, const PanelDataset& data) {
    os << "age_tuned,d18O,d13C,source,species\n";
    auto label = [](const Registry& reg, int id) { return reg.contains(id) ? csv::quote(reg.label(id)) : std::string(); };
    for (const auto& row : data.rows()) {
        const std::string age = csv::format(-row.stamp);
        if (row.all_missing()) {
            os << age << ",,,,\n";
            continue;
        }
        const auto& a = row.series(Series::d18O);
        const auto& b = row.series(Series::d13C);
        for (int k = 0; k < kSlotsPerSeries; ++k) {
            const auto& x = a[static_cast<std::size_t>(k)];
            const auto& y = b[static_cast<std::size_t>(k)];
            if (!x.missing() && !y.missing() && x.source_id == y.source_id && x.species_id == y.species_id) {
                os << age << ',' << csv::format(x.value) << ',' << csv::format(y.value) << ','
                   << label(data.sources(), x.source_id) << ',' << label(data.species(), x.species_id) << '\n';
                continue;
            }
            if (!x.missing())
                os << age << ',' << csv::format(x.value) << ",," << label(data.sources(), x.source_id) << ','
                   << label(data.species(), x.species_id) << '\n';
            if (!y.missing())
                os << age << ",," << csv::format(y.value) << ',' << label(data.sources(), y.source_id) << ','
                   << label(data.species(), y.species_id) << '\n';
        }
    }
}

}  // namespace paleokalman::ingest

#endif  // PALEOKALMAN_INGEST_HPP
