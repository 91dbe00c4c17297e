#pragma once

// End-to-end simulations behind the batch scenarios: population scans of the
// pulse sequence, phase-space snapshots, the cat state, Ramsey calibration,
// leakage past the Zeno wall and the tomography round trip.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qzd/common.hpp"
#include "qzd/detection.hpp"
#include "qzd/evolution.hpp"
#include "qzd/ladder.hpp"
#include "qzd/operators.hpp"
#include "qzd/parallel.hpp"
#include "qzd/phasespace.hpp"
#include "qzd/tomography.hpp"

namespace qzd {

struct TimeGrid {
    double start = 0.0;
    double stop = 3.0;
    int count = 50;

    std::vector<double> values() const {
        if (count < 1) throw Error("time grid needs at least one point");
        if (count > 1 && !(stop > start)) throw Error("time grid stop must exceed start");
        std::vector<double> out;
        for (int i = 0; i < count; ++i) out.push_back(count == 1 ? start : start + (stop - start) * i / (count - 1));
        return out;
    }
};

/// Levels the simulation runs on: n_e alone without the Zeno microwave, n_e + n_g with it.
inline Basis simulation_basis(bool zeno_on) { return zeno_on ? zeno_basis() : SpinBasis().basis(); }

struct ScanResult {
    std::vector<double> t1;
    std::vector<DensityMatrix> states;
    std::vector<std::string> warnings;
};

/// Inhomogeneity-averaged state after `seq` for every t1 in `t1_values`
/// (seq.t1 is ignored). Each field sample is diagonalized once.
inline ScanResult sequence_scan(const ZenoSetup& setup, const PulseSequence& seq, const std::vector<double>& t1_values,
                                const InhomogeneityModel& inhomogeneity, unsigned threads = 1) {
    if (t1_values.empty()) throw Error("no t1 values to simulate");
    setup.params.validate(seq.zeno_on);
    const Basis basis = simulation_basis(seq.zeno_on);
    const QuadratureRule rule = inhomogeneity.rule();
    const std::vector<FieldModel> fields = inhomogeneity.fields(setup.nominal);
    const DriveFrame frame = setup.frame();
    const double omega_mw = setup.params.omega_mw;

    // states[sample][time]
    std::vector<std::vector<CVector>> states(fields.size());
    std::vector<std::string> sample_warnings(fields.size());
    parallel_for(fields.size(), threads, [&](std::size_t s) {
        const FieldModel& atom = fields[s];
        const Propagator qzd(ladder_hamiltonian(basis, frame, atom, {setup.params.omega_rf, kPi / 2, seq.zeno_on, omega_mw}));
        CMatrix after = CMatrix::Identity(static_cast<Eigen::Index>(basis.size()), static_cast<Eigen::Index>(basis.size()));
        if (seq.rotation) {
            const CMatrix gap = Propagator(ladder_hamiltonian(basis, frame, atom, {0.0, 0.0, seq.zeno_on, omega_mw})).unitary(seq.gap);
            const CMatrix rot = Propagator(ladder_hamiltonian(basis, frame, atom,
                                                              {setup.params.omega_rf_strong, seq.rotation->azimuth, seq.zeno_on, omega_mw}))
                                    .unitary(seq.effective_t2());
            after = rot * gap;
        }
        if (seq.switch_off && seq.zeno_on) {
            const SwitchOffMap map = switch_off_map(basis, *seq.switch_off, setup, atom);
            if (map.plus_mapping < 0.99 || map.worst_bare_mapping < 0.99) {
                sample_warnings[s] = "switch-off mapping below 0.99 at F/F0 = " +
                                     std::to_string(atom.field() / setup.nominal.field());
            }
            after = map.unitary * after;
        }
        const CVector psi0 = zeno_initial_state(basis, setup, atom, seq.zeno_on).amplitudes;
        for (double t1 : t1_values) {
            PulseSequence at = seq;
            at.t1 = t1;
            CVector psi = after * qzd.apply(psi0, at.effective_t1());
            const double n = psi.norm();
            if (std::abs(n - 1.0) > 1e-9) throw InvariantViolation("norm conservation", std::to_string(n));
            states[s].push_back(psi / n);
        }
    });

    ScanResult out;
    out.t1 = t1_values;
    for (const auto& w : sample_warnings) {
        if (!w.empty()) out.warnings.push_back(w);
    }
    if (std::any_of(t1_values.begin(), t1_values.end(), [&](double t) { return t < seq.t1_offset; })) {
        out.warnings.push_back("t1 shorter than its offset for some points; QZD pulse clamped to zero");
    }
    if (seq.rotation && seq.rotation->t2 < seq.t2_offset) out.warnings.push_back("t2 shorter than its offset; rotation clamped to zero");
    const auto d = static_cast<Eigen::Index>(basis.size());
    for (std::size_t t = 0; t < t1_values.size(); ++t) {
        CMatrix rho = CMatrix::Zero(d, d);
        for (std::size_t s = 0; s < fields.size(); ++s) rho += rule.weights[s] * states[s][t] * states[s][t].adjoint();
        out.states.push_back(DensityMatrix::from_unnormalized(basis, rho));
    }
    return out;
}

// --- Populations -------------------------------------------------------------------

struct PopulationSeries {
    std::vector<PopulationRecord> records;
    std::vector<std::string> warnings;
};

inline PopulationSeries population_series(const ScanResult& scan, const std::vector<int>& steps, const DetectionModel& detection,
                                          bool ideal, int k_z) {
    PopulationSeries out{{}, scan.warnings};
    for (std::size_t t = 0; t < scan.t1.size(); ++t) {
        out.records.push_back(measure_populations(scan.states[t], steps, detection, ideal, k_z, scan.t1[t]));
    }
    return out;
}

/// Populations of a spin coherent state rotating at Rabi frequency omega
/// from the circular state: C(2J,k) cos^{2(2J-k)}(wt/2) sin^{2k}(wt/2).
inline double rotating_coherent_population(int two_j, int k, double omega, double t) {
    const double c = std::cos(0.5 * omega * t);
    const double s = std::sin(0.5 * omega * t);
    if (c == 0.0) return k == two_j ? 1.0 : 0.0;
    if (s == 0.0) return k == 0 ? 1.0 : 0.0;
    return std::exp(log_binomial(two_j, k) + 2.0 * (two_j - k) * std::log(std::abs(c)) + 2.0 * k * std::log(std::abs(s)));
}

/// Bounce features of a population series: the revival is the largest P(k=0)
/// after its first minimum, the dip the lowest P_tot before the revival
/// relative to the first point.
struct BounceSummary {
    double dip_time = 0.0;
    double dip_depth = 0.0;
    double revival_time = 0.0;
    double revival_population = 0.0;
};

inline double series_population(const PopulationRecord& r, int k) {
    auto it = std::find(r.steps.begin(), r.steps.end(), k);
    if (it == r.steps.end()) throw Error("population series lacks k=" + std::to_string(k));
    return r.populations[static_cast<std::size_t>(it - r.steps.begin())];
}

inline BounceSummary bounce_summary(const PopulationSeries& series) {
    const auto& recs = series.records;
    if (recs.size() < 3) throw Error("population series too short for a bounce");
    std::size_t low = 0;
    while (low + 1 < recs.size() && series_population(recs[low + 1], 0) <= series_population(recs[low], 0)) ++low;
    std::size_t rev = low;
    for (std::size_t i = low; i < recs.size(); ++i) {
        if (series_population(recs[i], 0) > series_population(recs[rev], 0)) rev = i;
    }
    BounceSummary out;
    out.revival_time = recs[rev].t1;
    out.revival_population = series_population(recs[rev], 0);
    double min_total = recs.front().total;
    out.dip_time = recs.front().t1;
    for (std::size_t i = 0; i <= rev; ++i) {
        if (recs[i].total < min_total) {
            min_total = recs[i].total;
            out.dip_time = recs[i].t1;
        }
    }
    out.dip_depth = recs.front().total > 0.0 ? 1.0 - min_total / recs.front().total : 0.0;
    return out;
}

// --- Leakage past the Zeno wall --------------------------------------------------------

/// Population in levels k > k_z (both manifolds) of the state before switch-off.
inline double leaked_population(const DensityMatrix& rho, int k_z) {
    double out = 0.0;
    for (std::size_t i = 0; i < rho.basis().size(); ++i) {
        if (rho.basis()[i].step > k_z) out += rho.matrix()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)).real();
    }
    return out;
}

/// Largest leaked population over the first bounce, t1 in (0, horizon].
inline double first_bounce_leak(const ZenoSetup& setup, const PulseSequence& seq, const InhomogeneityModel& inhomogeneity,
                                double horizon, int points, unsigned threads = 1) {
    PulseSequence bare = seq;
    bare.rotation.reset();
    bare.switch_off.reset();
    const ScanResult scan = sequence_scan(setup, bare, TimeGrid{bare.t1_offset, horizon + bare.t1_offset, points}.values(),
                                          inhomogeneity, threads);
    double out = 0.0;
    for (const auto& rho : scan.states) out = std::max(out, leaked_population(rho, setup.k_z));
    return out;
}

// --- Phase space -----------------------------------------------------------------------

/// Spin-ladder state used for phase-space pictures of a simulated rho_t.
inline DensityMatrix spin_picture(const DensityMatrix& rho_t, std::optional<int> k_z) {
    if (rho_t.basis() == SpinBasis().basis()) return rho_t;
    ProjectionOptions opts;
    if (k_z && rho_t.basis().find({kManifoldG, *k_z})) opts.dressed_step = k_z;
    return project_to_spin_ladder(rho_t, opts).rho;
}

struct MapPeak {
    double theta = 0.0;
    double phi = 0.0;
    double value = 0.0;
};

inline double great_circle_distance(double t1, double p1, double t2, double p2) {
    const double c = std::cos(t1) * std::cos(t2) + std::sin(t1) * std::sin(t2) * std::cos(p1 - p2);
    return std::acos(std::clamp(c, -1.0, 1.0));
}

/// Dominant positive maxima of a map on a ring-ordered grid (n_phi points per
/// ring, northmost ring first) within `band` of colatitude `theta0`. Grid-local
/// maxima weaker than `dominance` times the strongest are dropped, and maxima
/// closer than `merge_radius` (great-circle) are one peak, the strongest.
inline std::vector<MapPeak> dominant_peaks(const PhaseSpaceMap& map, double theta0, double band, double dominance = 0.5,
                                           double merge_radius = 0.45) {
    const int n_phi = map.grid.n_phi;
    const int n_theta = map.grid.n_theta;
    if (static_cast<std::size_t>(n_theta) * static_cast<std::size_t>(n_phi) != map.values.size()) {
        throw Error("map is not on a ring grid");
    }
    auto at = [&](int ring, int j) { return map.values[static_cast<std::size_t>(ring * n_phi + ((j % n_phi) + n_phi) % n_phi)]; };
    std::vector<MapPeak> maxima;
    for (int ring = 0; ring < n_theta; ++ring) {
        const auto& first = map.grid.points[static_cast<std::size_t>(ring * n_phi)];
        if (std::abs(first.theta - theta0) > band) continue;
        for (int j = 0; j < n_phi; ++j) {
            const double v = at(ring, j);
            if (v <= 0.0) continue;
            bool is_max = true;
            for (int dr = -1; dr <= 1 && is_max; ++dr) {
                const int r = ring + dr;
                if (r < 0 || r >= n_theta) continue;
                for (int dj = -1; dj <= 1; ++dj) {
                    if ((dr != 0 || dj != 0) && at(r, j + dj) > v) {
                        is_max = false;
                        break;
                    }
                }
            }
            if (is_max) {
                const auto& pt = map.grid.points[static_cast<std::size_t>(ring * n_phi + j)];
                maxima.push_back({pt.theta, pt.phi, v});
            }
        }
    }
    std::sort(maxima.begin(), maxima.end(), [](const MapPeak& a, const MapPeak& b) { return a.value > b.value; });
    std::vector<MapPeak> out;
    for (const auto& m : maxima) {
        if (m.value < dominance * maxima.front().value) break;
        const bool merged = std::any_of(out.begin(), out.end(), [&](const MapPeak& p) {
            return great_circle_distance(p.theta, p.phi, m.theta, m.phi) < merge_radius;
        });
        if (!merged) out.push_back(m);
    }
    return out;
}

/// Off-grid position of a maximum of f(theta, phi) by compass search from a
/// grid peak, halving the step down to `resolution`.
template <typename F>
MapPeak refine_peak(F&& f, MapPeak start, double step, double resolution = 1e-4) {
    MapPeak best = start;
    best.value = f(best.theta, best.phi);
    while (step > resolution) {
        bool moved = false;
        for (auto [dt, dp] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
            const double t = std::clamp(best.theta + dt * step, 0.0, kPi);
            const double p = best.phi + dp * step / std::max(std::sin(best.theta), 0.05);
            const double v = f(t, p);
            if (v > best.value) {
                best = {t, std::fmod(p + kTwoPi, kTwoPi), v};
                moved = true;
            }
        }
        if (!moved) step *= 0.5;
    }
    return best;
}

/// Difference of two azimuths folded into [0, pi].
inline double azimuth_separation(double a, double b) {
    const double d = std::fmod(std::abs(a - b), kTwoPi);
    return d > kPi ? kTwoPi - d : d;
}

/// Colatitude of the spin-ladder level k: cos(theta) = (J - k) / J.
inline double ladder_colatitude(int two_j, int k) { return std::acos(1.0 - 2.0 * k / static_cast<double>(two_j)); }

/// Azimuthal-equidistant projection of the cap theta <= theta_max, viewed
/// from above the pole: x = theta cos(phi), y = theta sin(phi).
struct CapSample {
    double x = 0.0;
    double y = 0.0;
    double theta = 0.0;
    double phi = 0.0;
    double value = 0.0;
};

inline std::vector<CapSample> cap_projection(const PhaseSpaceMap& map, double theta_max = kPi / 2) {
    std::vector<CapSample> out;
    for (std::size_t i = 0; i < map.values.size(); ++i) {
        const auto& pt = map.grid.points[i];
        if (pt.theta > theta_max) continue;
        out.push_back({pt.theta * std::cos(pt.phi), pt.theta * std::sin(pt.phi), pt.theta, pt.phi, map.values[i]});
    }
    return out;
}

// --- Ramsey calibration ------------------------------------------------------------------

struct RamseyResult {
    std::vector<double> delays;
    std::vector<double> populations;
    double fitted_frequency = 0.0;   ///< rad/us
};

inline RamseyResult ramsey_scan(const ZenoSetup& setup, const FieldModel& atom, const TimeGrid& delays, double pulse_area,
                                double pulse_rabi, unsigned threads = 1) {
    if (!(pulse_area > 0.0 && pulse_rabi > 0.0)) throw Error("Ramsey pulses need positive area and Rabi frequency");
    RamseyResult out;
    out.delays = delays.values();
    out.populations.resize(out.delays.size());
    parallel_for(out.delays.size(), threads, [&](std::size_t i) {
        out.populations[i] = ramsey_circular_population(setup, atom, out.delays[i], pulse_area, pulse_rabi);
    });
    // search between a quarter and four times the programmed detuning
    const double w0 = std::abs(setup.params.detuning);
    const double span = out.delays.back() - out.delays.front();
    const double w_min = w0 > 0.0 ? 0.25 * w0 : kTwoPi / span;
    const double w_max = w0 > 0.0 ? 4.0 * w0 : kPi * (out.delays.size() - 1) / span;
    out.fitted_frequency = fit_oscillation_frequency(out.delays, out.populations, w_min, w_max);
    return out;
}

// --- Tomography round trip ------------------------------------------------------------------

struct RoundTripOptions {
    int settings = 96;
    double cap_angle = kPi / 2;
    std::optional<std::int64_t> shots;
    std::uint64_t seed = 0;
    bool ideal_measurement = false;   ///< bare spin rotations instead of the simulated procedure
    MaxLikeOptions maxlike;
    double leak_coefficient = 0.91;
};

struct RoundTripResult {
    Dataset dataset;
    ReconstructionResult reconstruction;
    FinalizedState spin_state;
    double fidelity = 0.0;        ///< full reconstructed state against the input
    double spin_fidelity = 0.0;   ///< spin-ladder projections of both
};

inline RoundTripResult tomography_roundtrip(const DensityMatrix& rho_true, const ZenoSetup& setup, const PulseSequence& measurement,
                                            const RoundTripOptions& opts, unsigned threads = 1) {
    const auto settings = cap_settings(opts.settings, opts.cap_angle);
    const MeasurementContext ctx =
        opts.ideal_measurement ? MeasurementContext::ideal(rho_true.basis()) : MeasurementContext::simulated(setup, measurement);
    const Dataset dataset = synthesize_dataset(rho_true, settings, ctx, opts.shots, opts.seed, threads);
    const Povm povm = build_povm(settings, ctx, threads);
    ReconstructionResult reconstruction = maxlike_reconstruct(povm, dataset, opts.maxlike);
    RoundTripResult out{dataset, reconstruction, finalize_spin_state(reconstruction, setup.k_z, opts.leak_coefficient), 0.0, 0.0};
    out.reconstruction = reconstruction;
    out.fidelity = fidelity(rho_true, out.reconstruction.rho);
    out.spin_fidelity = fidelity(spin_picture(rho_true, setup.k_z), out.spin_state.rho);
    return out;
}

}  // namespace qzd
