#ifndef PALEOKALMAN_TIMESERIES_HPP
#define PALEOKALMAN_TIMESERIES_HPP

// Panel data model for irregularly stamped, multi-source proxy records.
//
// Time stamps are negative ages in million years (My), so "forward in time"
// is ascending. Each unique stamp is one ObservationRow holding up to four
// measurements per series. MISSING values are quiet NaNs.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "paleokalman/errors.hpp"

namespace paleokalman {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double x) noexcept { return std::isnan(x); }

enum class Series : int { d18O = 0, d13C = 1 };

inline constexpr int kSeriesCount = 2;
inline constexpr int kSlotsPerSeries = 4;

inline constexpr std::array<Series, 2> kAllSeries = {Series::d18O, Series::d13C};

inline constexpr int index_of(Series s) noexcept { return static_cast<int>(s); }

inline std::string_view series_name(Series s) noexcept {
    return s == Series::d18O ? "d18O" : "d13C";
}

inline std::optional<Series> parse_series(std::string_view name) {
    if (name == "d18O") return Series::d18O;
    if (name == "d13C") return Series::d13C;
    return std::nullopt;
}

struct MeasurementSlot {
    double value = kMissing;
    int source_id = -1;
    int species_id = -1;

    bool missing() const noexcept { return is_missing(value); }
};

using SlotArray = std::array<MeasurementSlot, kSlotsPerSeries>;

struct ObservationRow {
    double stamp = 0.0;
    double dt = kMissing;  // MISSING on the first row
    std::array<SlotArray, kSeriesCount> slots{};
    int climate_state = 0;  // 1..6

    const SlotArray& series(Series s) const noexcept { return slots[index_of(s)]; }
    SlotArray& series(Series s) noexcept { return slots[index_of(s)]; }

    int filled(Series s) const noexcept {
        int n = 0;
        for (const auto& slot : series(s)) n += slot.missing() ? 0 : 1;
        return n;
    }
    bool observed(Series s) const noexcept { return filled(s) > 0; }
    bool all_missing() const noexcept { return !observed(Series::d18O) && !observed(Series::d13C); }
};

/// Dense id <-> label table. Ids are assigned in first-appearance order.
class Registry {
public:
    Registry() = default;
    explicit Registry(std::vector<std::string> labels) {
        for (auto& l : labels) intern(l);
    }

    int intern(const std::string& label) {
        if (auto it = index_.find(label); it != index_.end()) return it->second;
        const int id = static_cast<int>(labels_.size());
        labels_.push_back(label);
        index_.emplace(label, id);
        return id;
    }

    std::optional<int> find(const std::string& label) const {
        if (auto it = index_.find(label); it != index_.end()) return it->second;
        return std::nullopt;
    }

    const std::string& label(int id) const { return labels_.at(static_cast<std::size_t>(id)); }
    int size() const noexcept { return static_cast<int>(labels_.size()); }
    bool contains(int id) const noexcept { return id >= 0 && id < size(); }
    const std::vector<std::string>& labels() const noexcept { return labels_; }

    friend bool operator==(const Registry& a, const Registry& b) { return a.labels_ == b.labels_; }

private:
    std::vector<std::string> labels_;
    std::unordered_map<std::string, int> index_;
};

// ---------------------------------------------------------------------------
// Climate states
// ---------------------------------------------------------------------------

struct ClimateRegime {
    double older_mya;
    double younger_mya;
    std::string_view name;
};

inline constexpr int kClimateStateCount = 6;

// Regime j covers ages [younger, older); the oldest regime also includes its
// upper end, so a boundary age belongs to the older regime.
inline constexpr std::array<ClimateRegime, kClimateStateCount> kClimateRegimes = {{
    {67.101133, 56.0, "Warmhouse 2"},
    {56.0, 47.0, "Hothouse"},
    {47.0, 34.0, "Warmhouse 1"},
    {34.0, 13.9, "Coolhouse 1"},
    {13.9, 3.3, "Coolhouse 2"},
    {3.3, 0.000564, "Icehouse"},
}};

inline constexpr double kOldestAgeMya = 67.101133;
inline constexpr double kYoungestAgeMya = 0.000564;

/// Climate-state index j in 1..6 for a positive age in MYA.
inline int assign_climate_state(double age_mya) {
    if (!(age_mya >= kYoungestAgeMya && age_mya <= kOldestAgeMya)) {
        throw OutOfRangeError("age " + std::to_string(age_mya) +
                              " MYA outside the climate-state table [0.000564, 67.101133]");
    }
    for (int j = 0; j < kClimateStateCount; ++j) {
        const auto& r = kClimateRegimes[static_cast<std::size_t>(j)];
        if (age_mya >= r.younger_mya && (age_mya < r.older_mya || j == 0)) return j + 1;
    }
    return kClimateStateCount;  // unreachable for in-range ages
}

inline std::string_view climate_state_name(int j) {
    return kClimateRegimes.at(static_cast<std::size_t>(j - 1)).name;
}

using ClimateAssigner = std::function<int(double age_mya)>;

// ---------------------------------------------------------------------------
// Increments
// ---------------------------------------------------------------------------

/// out[0] is MISSING, out[i] = stamps[i] - stamps[i-1].
inline std::vector<double> compute_increments(std::span<const double> stamps) {
    std::vector<double> out(stamps.size(), kMissing);
    for (std::size_t i = 1; i < stamps.size(); ++i) {
        if (!(stamps[i] > stamps[i - 1])) {
            throw OrderingError("time stamps not strictly increasing at index " + std::to_string(i), i);
        }
        out[i] = stamps[i] - stamps[i - 1];
    }
    return out;
}

// ---------------------------------------------------------------------------
// PanelDataset
// ---------------------------------------------------------------------------

/// Immutable, validated collection of observation rows plus group registries.
class PanelDataset {
public:
    PanelDataset() = default;

    PanelDataset(std::vector<ObservationRow> rows, Registry sources, Registry species)
        : rows_(std::move(rows)), sources_(std::move(sources)), species_(std::move(species)) {
        validate();
    }

    const std::vector<ObservationRow>& rows() const noexcept { return rows_; }
    const ObservationRow& row(std::size_t i) const { return rows_.at(i); }
    std::size_t size() const noexcept { return rows_.size(); }
    bool empty() const noexcept { return rows_.empty(); }
    const Registry& sources() const noexcept { return sources_; }
    const Registry& species() const noexcept { return species_; }

    /// Number of non-MISSING measurement slots of one series.
    std::size_t n_obs(Series s) const noexcept {
        std::size_t n = 0;
        for (const auto& r : rows_) n += static_cast<std::size_t>(r.filled(s));
        return n;
    }

    /// (last stamp - first stamp) / (N - 1) over unique stamps.
    double mean_dt() const {
        if (rows_.size() < 2) throw DomainError("mean_dt needs at least two rows");
        return (rows_.back().stamp - rows_.front().stamp) / static_cast<double>(rows_.size() - 1);
    }

    int max_slots_used() const noexcept {
        int m = 0;
        for (const auto& r : rows_)
            for (Series s : kAllSeries) m = std::max(m, r.filled(s));
        return m;
    }

    friend bool operator==(const PanelDataset& a, const PanelDataset& b) {
        if (!(a.sources_ == b.sources_) || !(a.species_ == b.species_) || a.rows_.size() != b.rows_.size())
            return false;
        auto same = [](double x, double y) { return (is_missing(x) && is_missing(y)) || x == y; };
        for (std::size_t i = 0; i < a.rows_.size(); ++i) {
            const auto& ra = a.rows_[i];
            const auto& rb = b.rows_[i];
            if (ra.stamp != rb.stamp || !same(ra.dt, rb.dt) || ra.climate_state != rb.climate_state) return false;
            for (int s = 0; s < kSeriesCount; ++s) {
                for (int k = 0; k < kSlotsPerSeries; ++k) {
                    const auto& x = ra.slots[s][k];
                    const auto& y = rb.slots[s][k];
                    if (!same(x.value, y.value)) return false;
                    if (!x.missing() && (x.source_id != y.source_id || x.species_id != y.species_id)) return false;
                }
            }
        }
        return true;
    }

private:
    void validate() const {
        for (std::size_t i = 0; i < rows_.size(); ++i) {
            const auto& r = rows_[i];
            if (!std::isfinite(r.stamp)) throw DomainError("non-finite stamp at row " + std::to_string(i));
            if (i > 0) {
                if (!(r.stamp > rows_[i - 1].stamp))
                    throw OrderingError("rows not strictly increasing at index " + std::to_string(i), i);
                const double expect = r.stamp - rows_[i - 1].stamp;
                if (is_missing(r.dt) || std::abs(r.dt - expect) > 1e-12 * std::max(1.0, std::abs(expect)))
                    throw DomainError("dt inconsistent with stamps at row " + std::to_string(i));
            }
            for (const auto& slots : r.slots) {
                for (const auto& slot : slots) {
                    if (slot.missing()) continue;
                    if (!sources_.contains(slot.source_id))
                        throw DomainError("unknown source id at row " + std::to_string(i));
                    if (slot.species_id != -1 && !species_.contains(slot.species_id))
                        throw DomainError("unknown species id at row " + std::to_string(i));
                }
            }
        }
    }

    std::vector<ObservationRow> rows_;
    Registry sources_;
    Registry species_;
};

// ---------------------------------------------------------------------------
// Collation
// ---------------------------------------------------------------------------

/// One measurement. A record without a series only reserves its stamp
/// (used for rows where every value is empty).
struct Record {
    double stamp = 0.0;
    std::optional<Series> series;
    double value = kMissing;
    int source_id = -1;
    int species_id = -1;
};

/// Merge records sharing a stamp into rows (slot order = input order),
/// compute increments and assign climate states from the age -stamp.
inline PanelDataset collate_rows(std::vector<Record> records, Registry sources, Registry species,
                                 const ClimateAssigner& climate = assign_climate_state) {
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& rec = records[i];
        if (!std::isfinite(rec.stamp)) throw ParseError("non-finite stamp in record " + std::to_string(i));
        if (rec.series && is_missing(rec.value)) throw ParseError("NaN value in record " + std::to_string(i));
    }
    std::stable_sort(records.begin(), records.end(),
                     [](const Record& a, const Record& b) { return a.stamp < b.stamp; });

    std::vector<ObservationRow> rows;
    for (const auto& rec : records) {
        if (rows.empty() || rows.back().stamp != rec.stamp) {
            ObservationRow row;
            row.stamp = rec.stamp;
            rows.push_back(row);
        }
        if (!rec.series) continue;
        auto& slots = rows.back().series(*rec.series);
        auto free = std::find_if(slots.begin(), slots.end(), [](const MeasurementSlot& s) { return s.missing(); });
        if (free == slots.end()) {
            throw CapacityError("more than 4 " + std::string(series_name(*rec.series)) +
                                " measurements at stamp " + std::to_string(rec.stamp));
        }
        *free = MeasurementSlot{rec.value, rec.source_id, rec.species_id};
    }

    std::vector<double> stamps(rows.size());
    std::transform(rows.begin(), rows.end(), stamps.begin(), [](const ObservationRow& r) { return r.stamp; });
    const auto dts = compute_increments(stamps);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        rows[i].dt = dts[i];
        rows[i].climate_state = climate(-rows[i].stamp);
    }
    return PanelDataset(std::move(rows), std::move(sources), std::move(species));
}

/// Inverse of collate_rows: one record per filled slot, plus a series-less
/// record for each all-MISSING row.
inline std::vector<Record> flatten(const PanelDataset& data) {
    std::vector<Record> out;
    for (const auto& row : data.rows()) {
        if (row.all_missing()) {
            out.push_back(Record{row.stamp, std::nullopt, kMissing, -1, -1});
            continue;
        }
        for (Series s : kAllSeries) {
            for (const auto& slot : row.series(s)) {
                if (!slot.missing()) out.push_back(Record{row.stamp, s, slot.value, slot.source_id, slot.species_id});
            }
        }
    }
    return out;
}

/// Copy of `data` with extra all-MISSING rows at `stamps`. Stamps that
/// coincide (within `tol` My) with an existing row are skipped.
inline PanelDataset with_missing_rows(const PanelDataset& data, std::span<const double> stamps,
                                      const ClimateAssigner& climate = assign_climate_state, double tol = 1e-12) {
    std::vector<ObservationRow> rows = data.rows();
    std::vector<double> extra(stamps.begin(), stamps.end());
    std::sort(extra.begin(), extra.end());
    for (double s : extra) {
        auto it = std::lower_bound(rows.begin(), rows.end(), s - tol,
                                   [](const ObservationRow& r, double v) { return r.stamp < v; });
        if (it != rows.end() && std::abs(it->stamp - s) <= tol) continue;
        ObservationRow row;
        row.stamp = s;
        row.climate_state = climate(-s);
        rows.insert(it, row);
    }
    std::vector<double> st(rows.size());
    std::transform(rows.begin(), rows.end(), st.begin(), [](const ObservationRow& r) { return r.stamp; });
    const auto dts = compute_increments(st);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i].dt = dts[i];
    return PanelDataset(std::move(rows), data.sources(), data.species());
}

}  // namespace paleokalman

#endif  // PALEOKALMAN_TIMESERIES_HPP
