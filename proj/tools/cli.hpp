#ifndef PALEOKALMAN_TOOLS_CLI_HPP
#define PALEOKALMAN_TOOLS_CLI_HPP

// Command-line front end. run_cli() is the whole program minus main(), so the
// tests can drive it in-process.
//
// Exit codes: 0 ok, 1 other failure, 2 fit not converged, 3 no finite cutoff,
// 64 usage, 65 unreadable/malformed input, 66 fit/model/data mismatch.

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "paleokalman/paleokalman.hpp"

namespace paleokalman::cli {

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kNotConverged = 2,
    kNoCutoff = 3,
    kUsage = 64,
    kDataError = 65,
    kMismatch = 66,
};

struct UsageError : Error {
    using Error::Error;
};
struct InputError : Error {
    using Error::Error;
};

namespace detail {

inline std::string invocation(const std::vector<std::string>& args) {
    std::string s = "paleokalman";
    for (std::size_t i = 0; i < args.size(); ++i) {
        s += ' ';
        s += args[i];
    }
    return s;
}

inline std::string header_comment(const std::vector<std::string>& args) {
    return std::string("# paleokalman ") + kVersion + ": " + invocation(args) + "\n";
}

inline nlohmann::json generator(const std::vector<std::string>& args) {
    return {{"version", kVersion}, {"invocation", invocation(args)}};
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write " + path);
    return os;
}

inline nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(path + ": " + e.what());
    }
}

struct DataFlags {
    std::string path;
    std::string source_map;
    std::string species_map;
};

inline void add_data_flags(CLI::App* cmd, DataFlags& d) {
    cmd->add_option("--data", d.path, "ingest CSV (age_tuned,d18O,d13C,source,species)")->required();
    cmd->add_option("--source-map", d.source_map, "JSON object mapping raw source labels to canonical ones");
    cmd->add_option("--species-map", d.species_map, "JSON object mapping raw species labels to buckets");
}

inline ingest::BuiltDataset load_data(const DataFlags& d) {
    try {
        ingest::BuildOptions opt;
        if (!d.source_map.empty()) opt.source_aliases = ingest::label_map_from_json(read_json(d.source_map));
        if (!d.species_map.empty()) opt.species_buckets = ingest::label_map_from_json(read_json(d.species_map));
        auto parsed = ingest::parse_csv_file(d.path);
        return ingest::build_dataset(std::move(parsed.records), std::move(parsed.diagnostics), opt);
    } catch (const InputError&) {
        throw;
    } catch (const Error& e) {
        throw InputError(d.path + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
        throw InputError(e.what());
    }
}

inline StoredFit load_fit(const std::string& path) {
    const auto j = read_json(path);
    try {
        return stored_fit_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(path + ": " + e.what());
    }
}

inline int thread_count(int flag) {
    if (flag > 0) return flag;
    if (const char* env = std::getenv("PALEOKALMAN_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    return 1;
}

// NA rows never propagate, so their regime is irrelevant; clamp grid stamps
// that fall outside the climate table instead of rejecting them.
inline int clamped_climate(double age) {
    return assign_climate_state(std::clamp(age, kYoungestAgeMya, kOldestAgeMya));
}

struct ModelFlags {
    std::string preset = "rwn";
    int order = 0;
    std::string series;
    bool meas_source = false;
    bool meas_species = false;
    bool trans_climate = false;
    bool corr_climate = false;
};

inline ModelSpec resolve_model(const ModelFlags& f) {
    ModelSpec spec;
    bool biv = false;
    if (f.preset == "rwn") {
    } else if (f.preset == "rwn-source") {
        spec.meas_grouping = MeasGrouping::by_source;
    } else if (f.preset == "rwn-species") {
        spec.meas_grouping = MeasGrouping::by_species;
    } else if (f.preset == "rwn-climate") {
        spec.trans_grouping = TransGrouping::by_climate_state;
    } else if (f.preset == "biv") {
        biv = true;
    } else if (f.preset == "biv-full") {
        biv = true;
        spec.meas_grouping = MeasGrouping::by_source;
        spec.trans_grouping = TransGrouping::by_climate_state;
    } else if (f.preset == "irw") {
        spec.order_m = 2;
    } else {
        throw UsageError("unknown --model '" + f.preset + "'");
    }
    if (f.meas_source && f.meas_species) throw UsageError("--meas-source and --meas-species are exclusive");
    if (f.meas_source) spec.meas_grouping = MeasGrouping::by_source;
    if (f.meas_species) spec.meas_grouping = MeasGrouping::by_species;
    if (f.trans_climate) spec.trans_grouping = TransGrouping::by_climate_state;
    if (f.order != 0) spec.order_m = f.order;

    const std::string series = f.series.empty() ? (biv ? "both" : "d18O") : f.series;
    if (series == "both") {
        biv = true;
    } else if (biv) {
        throw UsageError("--model " + f.preset + " needs --series both");
    }
    if (biv) {
        spec.arity = Arity::bivariate;
        const bool climate_corr = f.corr_climate || f.preset == "biv-full";
        spec.corr_grouping = climate_corr ? TransGrouping::by_climate_state : TransGrouping::pooled;
    } else if (series == "d18O") {
        spec.arity = Arity::univariate_series1;
    } else if (series == "d13C") {
        spec.arity = Arity::univariate_series2;
    } else {
        throw UsageError("--series must be d18O, d13C or both");
    }
    if (f.corr_climate && !biv) throw UsageError("--corr-climate needs a bivariate model");
    try {
        spec.validate();
    } catch (const DomainError& e) {
        throw UsageError(e.what());
    }
    return spec;
}

inline std::string fmt(double x, int prec = 6) {
    if (is_missing(x)) return "NA";
    std::ostringstream ss;
    ss << std::setprecision(prec) << x;
    return ss.str();
}

inline void print_fit_summary(std::ostream& out, const FitResult& r) {
    out << "model: " << nlohmann::json(r.spec).dump() << '\n';
    out << std::left << std::setw(18) << "parameter" << std::setw(28) << "group" << std::right << std::setw(14)
        << "estimate" << std::setw(14) << "se" << '\n';
    for (int k = 0; k < r.n_params; ++k) {
        const auto& p = r.layout.params[static_cast<std::size_t>(k)];
        out << std::left << std::setw(18) << p.name() << std::setw(28) << p.group_label << std::right << std::setw(14)
            << fmt(r.params_hat[k]) << std::setw(14) << fmt(r.std_errors[k]) << '\n';
    }
    out << "loglik     " << fmt(r.loglik, 10) << '\n';
    out << "BIC        " << fmt(r.bic, 10) << '\n';
    out << "n_obs      " << r.n_obs << '\n';
    out << "n_params   " << r.n_params << '\n';
    out << "converged  " << (r.converged ? "yes" : "no") << '\n';
    for (const auto& n : r.notes) out << "note: " << n << '\n';
}

}  // namespace detail

/// `args` excludes the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    using namespace detail;
    CLI::App app{"Kalman filtering and smoothing of irregularly sampled isotope records", "paleokalman"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    // ingest
    DataFlags ingest_data;
    std::string ingest_out, ingest_registry, ingest_diag;
    auto* c_ingest = app.add_subcommand("ingest", "validate a data file and write its canonical form");
    add_data_flags(c_ingest, ingest_data);
    c_ingest->add_option("--out", ingest_out, "canonical CSV");
    c_ingest->add_option("--registry", ingest_registry, "source/species registry JSON");
    c_ingest->add_option("--diagnostics", ingest_diag, "diagnostics JSON");

    // fit
    DataFlags fit_data;
    ModelFlags model;
    std::string fit_out;
    int starts = 1, threads = 0;
    std::uint64_t seed = 1;
    auto* c_fit = app.add_subcommand("fit", "maximum-likelihood fit");
    add_data_flags(c_fit, fit_data);
    c_fit->add_option("--model", model.preset, "rwn|rwn-source|rwn-species|rwn-climate|biv|biv-full|irw")
        ->check(CLI::IsMember({"rwn", "rwn-source", "rwn-species", "rwn-climate", "biv", "biv-full", "irw"}));
    c_fit->add_option("--order", model.order, "integration order m (1..8)")->check(CLI::Range(1, kMaxOrder));
    c_fit->add_option("--series", model.series, "d18O|d13C|both")->check(CLI::IsMember({"d18O", "d13C", "both"}));
    c_fit->add_flag("--meas-source", model.meas_source, "measurement variance per source");
    c_fit->add_flag("--meas-species", model.meas_species, "measurement variance per species bucket");
    c_fit->add_flag("--trans-climate", model.trans_climate, "transition variance per climate state");
    c_fit->add_flag("--corr-climate", model.corr_climate, "correlation per climate state (bivariate)");
    c_fit->add_option("--out", fit_out, "fit JSON")->required();
    c_fit->add_option("--starts", starts, "number of optimizer starts")->check(CLI::PositiveNumber);
    c_fit->add_option("--seed", seed, "seed for start jitter");
    c_fit->add_option("--threads", threads, "gradient threads (default $PALEOKALMAN_THREADS or 1)");

    // smooth
    DataFlags smooth_data;
    std::string smooth_fit, smooth_out;
    auto* c_smooth = app.add_subcommand("smooth", "filter and smooth at fitted parameters");
    add_data_flags(c_smooth, smooth_data);
    c_smooth->add_option("--fit", smooth_fit, "fit JSON")->required();
    c_smooth->add_option("--out", smooth_out, "state paths CSV")->required();

    // impute
    DataFlags impute_data;
    std::string impute_fit, impute_out;
    double mesh = 0.0, span_start = 67.0, span_end = 0.0;
    auto* c_impute = app.add_subcommand("impute", "smoothed levels on an equidistant grid");
    add_data_flags(c_impute, impute_data);
    c_impute->add_option("--fit", impute_fit, "fit JSON")->required();
    c_impute->add_option("--mesh-years", mesh, "grid mesh in years")->required()->check(CLI::PositiveNumber);
    c_impute->add_option("--start", span_start, "old end of the span, MYA");
    c_impute->add_option("--end", span_end, "young end of the span, MYA");
    c_impute->add_option("--out", impute_out, "grid CSV")->required();

    // gain
    std::string gain_fit, gain_out, gain_series;
    double q = 0.0, eta2 = 0.0, eps2 = 0.0, mean_dt = 0.0;
    int gain_order = 0, points = 1024;
    auto* c_gain = app.add_subcommand("gain", "Butterworth gain and cutoff frequency");
    auto* o_fit = c_gain->add_option("--fit", gain_fit, "fit JSON (pooled variances)");
    auto* o_q = c_gain->add_option("--q", q, "signal-to-noise ratio")->check(CLI::PositiveNumber);
    auto* o_eta = c_gain->add_option("--sigma-eta2", eta2, "transition variance")->check(CLI::PositiveNumber);
    auto* o_eps = c_gain->add_option("--sigma-eps2", eps2, "measurement variance")->check(CLI::PositiveNumber);
    auto* o_dt = c_gain->add_option("--mean-dt", mean_dt, "mean increment, My")->check(CLI::PositiveNumber);
    c_gain->add_option("--series", gain_series, "series to read from --fit")->check(CLI::IsMember({"d18O", "d13C"}));
    c_gain->add_option("--order", gain_order, "order m")->check(CLI::Range(1, kMaxOrder));
    c_gain->add_option("--points", points, "gain curve samples")->check(CLI::Range(2, 1 << 20));
    c_gain->add_option("--out", gain_out, "gain curve CSV");
    o_fit->excludes(o_q)->excludes(o_eta)->excludes(o_eps)->excludes(o_dt);
    o_q->excludes(o_eta)->excludes(o_eps)->excludes(o_dt);
    o_eta->needs(o_eps)->needs(o_dt);
    o_eps->needs(o_eta);
    o_dt->needs(o_eta);

    // simulate
    ModelFlags sim_model;
    std::size_t sim_n = 1000;
    double sim_dt = 0.00283, sim_start = 67.0, sim_missing = 0.0, sim_rho = 0.0;
    std::vector<double> sim_eta{1.8}, sim_eps{0.02};
    int sim_slots = 1, sim_sources = 1;
    std::uint64_t sim_seed = 1;
    std::string sim_out;
    auto* c_sim = app.add_subcommand("simulate", "simulate a pooled model and write an ingest CSV");
    c_sim->add_option("--model", sim_model.preset, "rwn|biv|irw")->check(CLI::IsMember({"rwn", "biv", "irw"}));
    c_sim->add_option("--order", sim_model.order, "order m")->check(CLI::Range(1, kMaxOrder));
    c_sim->add_option("--n", sim_n, "number of stamps")->check(CLI::PositiveNumber);
    c_sim->add_option("--mean-dt", sim_dt, "mean exponential increment, My")->check(CLI::PositiveNumber);
    c_sim->add_option("--start", sim_start, "age of the first stamp, MYA");
    c_sim->add_option("--sigma-eta2", sim_eta, "transition variance(s), one per series")->expected(1, 2);
    c_sim->add_option("--sigma-eps2", sim_eps, "measurement variance(s), one per series")->expected(1, 2);
    c_sim->add_option("--rho", sim_rho, "correlation (biv)")->check(CLI::Range(-1.0, 1.0));
    c_sim->add_option("--slots", sim_slots, "slots per row and series")->check(CLI::Range(1, kSlotsPerSeries));
    c_sim->add_option("--sources", sim_sources, "number of sources")->check(CLI::PositiveNumber);
    c_sim->add_option("--missing", sim_missing, "slot missingness probability")->check(CLI::Range(0.0, 1.0));
    c_sim->add_option("--seed", sim_seed, "seed");
    c_sim->add_option("--out", sim_out, "ingest CSV")->required();

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (c_ingest->parsed()) {
            const auto built = load_data(ingest_data);
            const auto& d = built.diagnostics;
            out << "records        " << d.records << '\n'
                << "unique stamps  " << d.unique_stamps << '\n'
                << "missing d18O   " << d.missing_d18O << '\n'
                << "missing d13C   " << d.missing_d13C << '\n'
                << "both empty     " << d.both_empty << '\n'
                << "max slots      " << d.max_slots << '\n'
                << "min dt         " << fmt(d.min_dt, 10) << '\n'
                << "max dt         " << fmt(d.max_dt, 10) << '\n'
                << "sources        " << built.data.sources().size() << '\n'
                << "species        " << built.data.species().size() << '\n';
            for (const auto& w : d.warnings) err << "warning: " << w << '\n';
            if (!ingest_out.empty()) {
                auto os = open_out(ingest_out);
                os << header_comment(args);
                ingest::write_canonical_csv(os, built.data);
            }
            if (!ingest_registry.empty()) {
                auto j = ingest::registry_json(built.data);
                j["generator"] = generator(args);
                open_out(ingest_registry) << j.dump(2) << '\n';
            }
            if (!ingest_diag.empty()) {
                auto j = ingest::to_json(d);
                j["generator"] = generator(args);
                open_out(ingest_diag) << j.dump(2) << '\n';
            }
            return kOk;
        }

        if (c_fit->parsed()) {
            const ModelSpec spec = resolve_model(model);
            const auto built = load_data(fit_data);
            FitOptions opt;
            opt.n_starts = starts;
            opt.seed = seed;
            opt.threads = thread_count(threads);
            const FitResult r = fit(spec, built.data, opt);
            auto j = to_json(r);
            j["generator"] = generator(args);
            open_out(fit_out) << j.dump(2) << '\n';
            print_fit_summary(out, r);
            return r.converged ? kOk : kNotConverged;
        }

        if (c_smooth->parsed()) {
            const auto built = load_data(smooth_data);
            const StoredFit f = load_fit(smooth_fit);
            const auto layout = checked_layout(f, built.data);
            const StatePaths paths = smooth(filter(f.spec, layout, f.params, built.data));
            auto os = open_out(smooth_out);
            os << header_comment(args);
            write_state_paths_csv(os, f.spec, paths);
            out << "rows " << paths.size() << '\n';
            return kOk;
        }

        if (c_impute->parsed()) {
            if (!(span_start > span_end) || span_end < 0.0) throw UsageError("need --start > --end >= 0");
            const auto built = load_data(impute_data);
            const StoredFit f = load_fit(impute_fit);
            const auto layout = checked_layout(f, built.data);
            const Grid grid = make_grid(span_start, span_end, mesh);
            for (const auto& w : grid.warnings) err << "warning: " << w << '\n';
            const auto table = impute(f.spec, layout, f.params, built.data, grid, clamped_climate);
            auto os = open_out(impute_out);
            os << header_comment(args);
            write_imputation_csv(os, table);
            out << "N_g = " << grid.size() << '\n';
            return kOk;
        }

        if (c_gain->parsed()) {
            int m = gain_order;
            if (!gain_fit.empty()) {
                const StoredFit f = load_fit(gain_fit);
                const auto& ps = f.raw.at("params");
                const std::string s = gain_series.empty() ? std::string(series_name(f.spec.series().front())) : gain_series;
                double e2 = kMissing, n2 = kMissing;
                int ne = 0, nn = 0;
                for (const auto& p : ps) {
                    const auto name = p.at("name").get<std::string>();
                    if (name == "sigma2_eps_" + s) {
                        e2 = p.at("estimate").get<double>();
                        ++ne;
                    } else if (name == "sigma2_eta_" + s) {
                        n2 = p.at("estimate").get<double>();
                        ++nn;
                    }
                }
                if (ne != 1 || nn != 1)
                    throw UsageError("gain --fit needs one measurement and one transition variance for " + s +
                                     "; pass --q for grouped models");
                if (is_missing(f.mean_dt)) throw InputError("fit file has no mean_dt");
                q = signal_to_noise(n2, e2, f.mean_dt);
                if (m == 0) m = f.spec.order_m;
            } else if (*o_eta) {
                q = signal_to_noise(eta2, eps2, mean_dt);
            } else if (!*o_q) {
                throw UsageError("gain needs --fit, --q, or --sigma-eta2/--sigma-eps2/--mean-dt");
            }
            if (m == 0) m = 1;
            if (!gain_out.empty()) {
                auto os = open_out(gain_out);
                os << header_comment(args);
                write_gain_csv(os, gain_curve(q, m, points));
            }
            out << "q = " << fmt(q, 10) << '\n';
            out << "m = " << m << '\n';
            if (q > std::ldexp(1.0, 2 * m)) {
                out << "no finite cutoff\n";
                return kNoCutoff;
            }
            const double lh = cutoff_frequency(q, m);
            out << "lambda_h = " << fmt(lh, 10) << '\n';
            out << "cutoff = lambda_h/2 = " << fmt(lh / 2.0, 10) << '\n';
            return kOk;
        }

        if (c_sim->parsed()) {
            ModelFlags mf = sim_model;
            if (mf.preset == "biv") mf.series = "both";
            const ModelSpec spec = resolve_model(mf);
            const std::size_t nb = static_cast<std::size_t>(spec.block_count());
            if (sim_eta.size() != nb || sim_eps.size() != nb)
                throw UsageError("need one --sigma-eta2 and one --sigma-eps2 value per series");
            auto stamps = exponential_stamps(sim_n, sim_dt, sim_seed, -sim_start);
            if (!(sim_start < 70.0) || !(-stamps.back() > 0.0))
                throw UsageError("simulated ages leave (0, 70) MYA; lower --n or --mean-dt");
            Design d;
            d.stamps = std::move(stamps);
            d.slots_per_row = sim_slots;
            d.n_sources = sim_sources;
            d.missing_prob = sim_missing;
            d.both_series = spec.bivariate();
            d.climate = clamped_climate;
            const PanelDataset skel = make_skeleton(d, sim_seed + 1);
            const ParameterLayout layout = build_layout(spec, skel);
            Eigen::VectorXd params(layout.size());
            for (int k = 0; k < layout.size(); ++k) {
                const auto& p = layout.params[static_cast<std::size_t>(k)];
                const std::size_t b = static_cast<std::size_t>(spec.block_of(p.series));
                params[k] = p.role == ParamRole::meas_var ? sim_eps[b] : p.role == ParamRole::trans_var ? sim_eta[b] : sim_rho;
            }
            const PanelDataset sim = simulate(spec, layout, params, skel, sim_seed + 2, std::nullopt, clamped_climate);
            auto os = open_out(sim_out);
            os << header_comment(args);
            ingest::write_ingest_csv(os, sim);
            out << "rows " << sim.size() << '\n';
            return kOk;
        }
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const InputError& e) {
        err << "input error: " << e.what() << '\n';
        return kDataError;
    } catch (const MismatchError& e) {
        err << "mismatch: " << e.what() << '\n';
        return kMismatch;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kFailure;
    }
    return kUsage;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    return run_cli(std::vector<std::string>(argv + (argc > 0 ? 1 : 0), argv + argc), out, err);
}

}  // namespace paleokalman::cli

#endif  // PALEOKALMAN_TOOLS_CLI_HPP
