// qzd: batch front-end. `qzd run <config.json>` runs one scenario and writes
// plot-ready CSV / JSON files plus manifest.json into the output directory.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "qzd/pipelines.hpp"
#include "qzd/scenario.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace qzd;

namespace {

struct Run {
    const Scenario& sc;
    fs::path dir;
    std::string hash;
    unsigned threads;
    std::vector<std::string> files;
    std::vector<std::string> warnings;
    json results = json::object();

    json stamp() const { return {{"schema_version", kSchemaVersion}, {"parameter_hash", hash}}; }

    std::ofstream open(const std::string& name) {
        std::ofstream out(dir / name, std::ios::binary);
        if (!out) throw Error("cannot write " + (dir / name).string());
        files.push_back(name);
        return out;
    }

    void write_json(const std::string& name, json body) {
        const json s = stamp();
        for (auto& [k, v] : s.items()) body[k] = v;
        open(name) << body.dump(2) << "\n";
    }

    /// CSV with a "# {json}" first line carrying the schema version and hash.
    void write_csv(const std::string& name, const std::vector<std::string>& columns,
                   const std::vector<std::vector<double>>& rows) {
        auto out = open(name);
        json header = stamp();
        header["columns"] = columns;
        out << "# " << header.dump() << "\n";
        for (std::size_t c = 0; c < columns.size(); ++c) out << (c ? "," : "") << columns[c];
        out << "\n";
        char buf[64];
        for (const auto& row : rows) {
            for (std::size_t c = 0; c < row.size(); ++c) {
                std::snprintf(buf, sizeof buf, "%.12g", row[c]);
                out << (c ? "," : "") << buf;
            }
            out << "\n";
        }
    }

    void write_map(const std::string& stem, const PhaseSpaceMap& map, const json& extra = json::object()) {
        json header = map_header(map);
        const json s = stamp();
        for (auto& [k, v] : s.items()) header[k] = v;
        for (auto& [k, v] : extra.items()) header[k] = v;
        auto out = open(stem + ".csv");
        write_map_csv(out, map, &header);
        std::vector<std::vector<double>> rows;
        for (const auto& s : cap_projection(map, sc.cap_theta_max)) rows.push_back({s.x, s.y, s.theta, s.phi, s.value});
        write_csv(stem + "_cap.csv", {"x", "y", "theta", "phi", "value"}, rows);
    }

    void add_warnings(const std::vector<std::string>& w) { warnings.insert(warnings.end(), w.begin(), w.end()); }
};

void write_populations(Run& run, const PopulationSeries& series) {
    std::vector<std::vector<double>> rows;
    std::vector<std::vector<double>> totals;
    for (const auto& r : series.records) {
        for (std::size_t i = 0; i < r.steps.size(); ++i) rows.push_back({r.t1, static_cast<double>(r.steps[i]), r.populations[i]});
        totals.push_back({r.t1, r.total});
    }
    run.write_csv("populations.csv", {"t1_us", "k", "P"}, rows);
    run.write_csv("totals.csv", {"t1_us", "P_tot"}, totals);
}

json peaks_json(const std::vector<MapPeak>& peaks) {
    json arr = json::array();
    for (const auto& p : peaks) arr.push_back({{"theta", p.theta}, {"phi", p.phi}, {"value", p.value}});
    return arr;
}

void free_rotation(Run& run) {
    const Scenario& sc = run.sc;
    const ScanResult scan = sequence_scan(sc.setup, sc.sequence, sc.times.values(), sc.inhomogeneity, run.threads);
    run.add_warnings(scan.warnings);
    const PopulationSeries series = population_series(scan, sc.steps, sc.detection, sc.ideal_detection, sc.setup.k_z);
    write_populations(run, series);
    double worst = 0.0;
    for (std::size_t t = 0; t < scan.t1.size(); ++t) {
        PulseSequence at = sc.sequence;
        at.t1 = scan.t1[t];
        for (int k : sc.steps) {
            const double p = scan.states[t].population({kManifoldE, k});
            worst = std::max(worst, std::abs(p - rotating_coherent_population(50, k, sc.setup.params.omega_rf, at.effective_t1())));
        }
    }
    run.results["coherent_state_max_deviation"] = worst;
}

void qzd_populations(Run& run) {
    const Scenario& sc = run.sc;
    const ScanResult scan = sequence_scan(sc.setup, sc.sequence, sc.times.values(), sc.inhomogeneity, run.threads);
    run.add_warnings(scan.warnings);
    const PopulationSeries series = population_series(scan, sc.steps, sc.detection, sc.ideal_detection, sc.setup.k_z);
    write_populations(run, series);
    const BounceSummary b = bounce_summary(series);
    run.results["bounce"] = {{"dip_depth", b.dip_depth}, {"dip_time_us", b.dip_time},
                             {"revival_time_us", b.revival_time}, {"revival_population", b.revival_population}};
}

void q_snapshots(Run& run) {
    const Scenario& sc = run.sc;
    const ScanResult scan = sequence_scan(sc.setup, sc.sequence, sc.snapshots, sc.inhomogeneity, run.threads);
    run.add_warnings(scan.warnings);
    const SphereGrid grid = sphere_grid(sc.n_theta, sc.n_phi);
    json snaps = json::array();
    for (std::size_t i = 0; i < scan.t1.size(); ++i) {
        const DensityMatrix spin = spin_picture(scan.states[i], sc.setup.k_z);
        const PhaseSpaceMap q = q_map(spin, grid, run.threads);
        char stem[32];
        std::snprintf(stem, sizeof stem, "q_%02zu", i);
        run.write_map(stem, q, {{"t1_us", scan.t1[i]}});
        const auto best = std::max_element(q.values.begin(), q.values.end()) - q.values.begin();
        snaps.push_back({{"t1_us", scan.t1[i]}, {"file", std::string(stem) + ".csv"},
                         {"max", {{"theta", grid.points[static_cast<std::size_t>(best)].theta},
                                  {"phi", grid.points[static_cast<std::size_t>(best)].phi},
                                  {"value", q.values[static_cast<std::size_t>(best)]}}},
                         {"integral", sphere_integrate(q)}});
    }
    run.results["snapshots"] = snaps;
}

struct CatAnalysis {
    std::vector<MapPeak> peaks;
    double minimum = 0.0;
};

CatAnalysis analyse_wigner(const PhaseSpaceMap& w, const DensityMatrix& spin, int k_z, int truncation) {
    CatAnalysis a;
    a.minimum = *std::min_element(w.values.begin(), w.values.end());
    const DensityMatrix truncated = truncate_spin_state(spin, truncation);
    const MultipoleTable table = multipole_components(truncated);
    auto f = [&](double t, double p) { return wigner_from_multipoles(table, SphericalPoint::make(t, p)); };
    for (const auto& p : dominant_peaks(w, ladder_colatitude(50, k_z), 0.2)) {
        a.peaks.push_back(refine_peak(f, p, kPi / w.grid.n_phi));
    }
    return a;
}

void cat_wigner(Run& run) {
    const Scenario& sc = run.sc;
    const ScanResult scan = sequence_scan(sc.setup, sc.sequence, {sc.t1}, sc.inhomogeneity, run.threads);
    run.add_warnings(scan.warnings);
    const DensityMatrix& rho_t = scan.states[0];
    const DensityMatrix spin = spin_picture(rho_t, sc.setup.k_z);
    WignerOptions wopts;
    wopts.truncation = sc.truncation;
    const PhaseSpaceMap w = w_map(spin, sphere_grid(sc.n_theta, sc.n_phi), wopts, run.threads);
    run.write_map("wigner", w, {{"t1_us", sc.t1}});
    run.write_json("rho_t.json", to_json(rho_t));
    run.write_json("rho_spin.json", to_json(spin));
    const CatAnalysis a = analyse_wigner(w, spin, sc.setup.k_z, sc.truncation);
    run.results["purity"] = purity(rho_t);
    run.results["purity_spin"] = purity(spin);
    run.results["wigner_min"] = a.minimum;
    run.results["wigner_integral"] = sphere_integrate(w);
    run.results["dominant_peaks"] = peaks_json(a.peaks);
    if (a.peaks.size() >= 2) run.results["peak_azimuth_separation"] = azimuth_separation(a.peaks[0].phi, a.peaks[1].phi);
    if (rho_t.basis().find({kManifoldG, sc.setup.k_z})) run.results["minus_population"] = minus_state_population(rho_t, sc.setup.k_z);
}

void ramsey(Run& run) {
    const Scenario& sc = run.sc;
    const RamseyResult r = ramsey_scan(sc.setup, sc.setup.nominal, sc.ramsey_delays, sc.ramsey_pulse_area, sc.ramsey_pulse_rabi,
                                       run.threads);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < r.delays.size(); ++i) rows.push_back({r.delays[i], r.populations[i]});
    run.write_csv("ramsey.csv", {"T_us", "P0"}, rows);
    const double programmed = std::abs(sc.setup.params.detuning);
    run.results["fitted_frequency_mhz"] = angular_to_mhz(r.fitted_frequency);
    run.results["programmed_detuning_mhz"] = angular_to_mhz(programmed);
    if (programmed > 0) run.results["relative_error"] = std::abs(r.fitted_frequency - programmed) / programmed;
}

void tomography(Run& run) {
    const Scenario& sc = run.sc;
    PulseSequence prep = sc.sequence;
    prep.rotation.reset();
    prep.switch_off.reset();
    const ScanResult scan = sequence_scan(sc.setup, prep, {sc.t1}, sc.inhomogeneity, run.threads);
    run.add_warnings(scan.warnings);
    const DensityMatrix& rho_true = scan.states[0];
    PulseSequence measurement = sc.sequence;
    measurement.switch_off = SwitchOffRamp::for_step(sc.setup.k_z);
    RoundTripOptions opts = sc.tomography;
    opts.maxlike.threads = run.threads;
    RoundTripResult rt = tomography_roundtrip(rho_true, sc.setup, measurement, opts, run.threads);
    run.add_warnings(rt.reconstruction.warnings);

    json monitored = json::array();
    for (const auto& l : MeasurementContext::default_monitored(rho_true.basis())) {
        monitored.push_back({{"manifold", l.manifold}, {"step", l.step}});
    }
    run.write_json("dataset.json",
                   {{"header", {{"settings", opts.settings},
                                {"placement", "equal-area rings in cos(theta) over the cap theta <= theta_max, golden-angle azimuths"},
                                {"cap_theta_max", opts.cap_angle},
                                {"rotation", "setting (theta, phi) applies R(theta, phi)^+ before the readout"},
                                {"measurement", opts.ideal_measurement ? "ideal spin rotation" : "gap, strong RF rotation, switch-off"},
                                {"monitored", monitored},
                                {"mode", opts.shots ? "shots" : "exact"}}},
                    {"records", to_json(rt.dataset)}});
    run.write_json("rho_true.json", to_json(rho_true));
    json reco = to_json(rt.reconstruction.rho);
    reco["diagnostics"] = diagnostics_to_json(rt.reconstruction);
    reco["diagnostics"]["minus_population"] = rt.spin_state.minus_population;
    run.write_json("rho_reconstructed.json", reco);
    run.write_json("rho_spin.json", to_json(rt.spin_state.rho));
    WignerOptions wopts;
    wopts.truncation = sc.truncation;
    run.write_map("wigner_reconstructed", w_map(rt.spin_state.rho, sphere_grid(sc.n_theta, sc.n_phi), wopts, run.threads));
    run.results["fidelity"] = rt.fidelity;
    run.results["spin_fidelity"] = rt.spin_fidelity;
    run.results["iterations"] = rt.reconstruction.iterations;
    run.results["converged"] = rt.reconstruction.converged;
    run.results["log_likelihood"] = rt.reconstruction.log_likelihood;
    run.results["leak_fraction"] = rt.reconstruction.leak_fraction;
    run.results["purity_reconstructed_spin"] = purity(rt.spin_state.rho);
}

int run_command(const std::string& config, std::optional<std::uint64_t> seed, std::optional<std::string> out_dir,
                unsigned threads, bool validate_only) {
    Scenario sc = load_scenario(config);
    if (seed) {
        sc.seed = *seed;
        sc.tomography.seed = *seed;
        sc.resolved["seed"] = *seed;
    }
    const std::string hash = parameter_hash(sc.resolved);
    if (validate_only) {
        std::cout << "ok: " << to_string(sc.kind) << " parameter_hash " << hash << "\n";
        return 0;
    }
    const fs::path dir = out_dir.value_or(sc.output_directory);
    fs::create_directories(dir);
    Run run{sc, dir, hash, threads, {}, {}, json::object()};
    switch (sc.kind) {
        case ScenarioKind::free_rotation: free_rotation(run); break;
        case ScenarioKind::qzd_populations: qzd_populations(run); break;
        case ScenarioKind::q_snapshots: q_snapshots(run); break;
        case ScenarioKind::cat_wigner: cat_wigner(run); break;
        case ScenarioKind::ramsey: ramsey(run); break;
        case ScenarioKind::tomography_roundtrip: tomography(run); break;
    }
    json manifest = {{"code_version", kCodeVersion}, {"kind", to_string(sc.kind)}, {"parameters", sc.resolved},
                     {"outputs", run.files}, {"results", run.results}, {"warnings", run.warnings}};
    run.write_json("manifest.json", manifest);
    for (const auto& w : run.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << "wrote " << run.files.size() << " files to " << dir.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quantum Zeno dynamics simulator"};
    app.require_subcommand(1);
    auto* run = app.add_subcommand("run", "run a scenario config");
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    unsigned threads = std::max(1u, std::thread::hardware_concurrency());
    bool validate_only = false;
    run->add_option("config", config, "scenario JSON")->required();
    run->add_option("--seed", seed, "random seed (overrides the config)");
    run->add_option("--out-dir", out_dir, "output directory (overrides the config)");
    run->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    run->add_flag("--validate-only", validate_only, "check the config and exit");
    CLI11_PARSE(app, argc, argv);

    try {
        return run_command(config, seed, out_dir, threads, validate_only);
    } catch (const ConfigError& e) {
        std::cerr << "error: invalid config: " << e.what() << "\n";
        return 2;
    } catch (const InvariantViolation& e) {
        std::cerr << "error: invariant violated: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
