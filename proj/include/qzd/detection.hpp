#pragma once

// Level-selective population readout and synthetic tomography data.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "qzd/common.hpp"
#include "qzd/evolution.hpp"
#include "qzd/ladder.hpp"
#include "qzd/operators.hpp"
#include "qzd/parallel.hpp"

namespace qzd {

/// Probe pi-pulse |n_e,k_p> -> |n_f,k_p> followed by field ionization.
struct DetectionModel {
    std::vector<double> efficiencies{0.90, 0.90, 0.90, 0.90, 0.87, 0.84};
    double probe_duration = 0.9;                          ///< us
    double step_difference = mhz_to_angular(4.6);         ///< Delta, rad/us

    void validate() const {
        for (double e : efficiencies) {
            if (!(e >= 0.0 && e <= 1.0)) throw Error("probe efficiencies must lie in [0, 1]");
        }
        if (!(probe_duration > 0.0)) throw Error("probe duration must be positive");
    }

    double probe_rabi() const { return kPi / probe_duration; }

    /// Transfer probability of a level detuned by `detuning` from the probe.
    double off_resonant_transfer(double detuning) const {
        const double w = probe_rabi();
        const double g2 = w * w + detuning * detuning;
        const double s = std::sin(0.5 * std::sqrt(g2) * probe_duration);
        return w * w / g2 * s * s;
    }
};

/// Detected |n_f,k_p> population given the n_e ladder populations (index k).
inline double probe_transfer(const RVector& populations, int k_p, const DetectionModel& model, bool ideal) {
    if (k_p < 0 || k_p >= static_cast<int>(model.efficiencies.size())) {
        throw Error("probe level k_p=" + std::to_string(k_p) + " outside the efficiency table");
    }
    if (k_p >= populations.size()) throw Error("probe level beyond the supplied populations");
    if (ideal) return populations(k_p);
    double out = model.efficiencies[static_cast<std::size_t>(k_p)] * populations(k_p);
    for (Eigen::Index k = 0; k < populations.size(); ++k) {
        if (k == k_p) continue;
        out += populations(k) * model.off_resonant_transfer(static_cast<double>(k - k_p) * model.step_difference);
    }
    return out;
}

struct PopulationRecord {
    double t1 = 0.0;
    std::vector<int> steps;
    std::vector<double> populations;
    double total = 0.0;   ///< sum over k <= k_z
};

/// n_e ladder populations of rho (zero for levels absent from its basis).
inline RVector ladder_populations(const DensityMatrix& rho) {
    RVector p = RVector::Zero(kManifoldE);
    for (int k = 0; k < kManifoldE; ++k) p(k) = rho.population({kManifoldE, k});
    return p;
}

inline PopulationRecord measure_populations(const DensityMatrix& rho, const std::vector<int>& steps,
                                            const DetectionModel& model, bool ideal, int k_z, double t1 = 0.0) {
    const RVector p = ladder_populations(rho);
    PopulationRecord rec;
    rec.t1 = t1;
    for (int k : steps) {
        const double v = probe_transfer(p, k, model, ideal);
        rec.steps.push_back(k);
        rec.populations.push_back(v);
        if (k <= k_z) rec.total += v;
    }
    return rec;
}

// --- Measurement settings ----------------------------------------------------------

/// Measure after the rotation R(theta, phi)^+ that brings (theta, phi) to the pole.
struct MeasurementSetting {
    int id = 0;
    double theta = 0.0;
    double phi = 0.0;
};

/// Quasi-uniform covering of the cap theta <= theta_max: equal-area rings in
/// cos(theta) with golden-angle azimuths.
inline std::vector<MeasurementSetting> cap_settings(int count, double theta_max) {
    if (count < 1) throw Error("need at least one setting");
    if (!(theta_max > 0.0 && theta_max <= kPi)) throw Error("cap angle outside (0, pi]");
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    const double span = 1.0 - std::cos(theta_max);
    std::vector<MeasurementSetting> out;
    for (int i = 0; i < count; ++i) {
        const double z = 1.0 - span * (i + 0.5) / count;
        out.push_back({i, std::acos(z), std::fmod(i * golden, kTwoPi)});
    }
    return out;
}

/// How a setting is turned into a unitary on the state space.
struct MeasurementContext {
    Basis basis;
    std::vector<LadderLevel> monitored;
    /// Simulated reconstruction procedure; ideal spin rotation when absent.
    std::optional<ZenoSetup> setup;
    double gap = 0.030;
    double t2_offset = 0.074;
    std::optional<SwitchOffRamp> switch_off;

    /// Levels |n_e,k> and |n_g,k>, k < 6, present in `basis`.
    static std::vector<LadderLevel> default_monitored(const Basis& basis, int below = 6) {
        std::vector<LadderLevel> out;
        for (int manifold : {kManifoldE, kManifoldG}) {
            for (int k = 0; k < below; ++k) {
                if (basis.find({manifold, k})) out.push_back({manifold, k});
            }
        }
        return out;
    }

    static MeasurementContext ideal(const Basis& basis) {
        MeasurementContext c{basis, default_monitored(basis), std::nullopt, 0.0, 0.0, std::nullopt};
        return c;
    }

    static MeasurementContext simulated(const ZenoSetup& setup, const PulseSequence& seq) {
        MeasurementContext c{zeno_basis(), {}, setup, seq.gap, seq.t2_offset, seq.switch_off};
        c.monitored = default_monitored(c.basis);
        return c;
    }
};

/// Unitary applied between the state to reconstruct and the population readout.
class SettingUnitaries {
public:
    explicit SettingUnitaries(const MeasurementContext& ctx) : ctx_(ctx) {
        if (ctx_.setup) {
            const ZenoSetup& s = *ctx_.setup;
            const DriveFrame frame = s.frame();
            const Operator free = ladder_hamiltonian(ctx_.basis, frame, s.nominal, {0.0, 0.0, true, s.params.omega_mw});
            pre_ = Propagator(free).unitary(ctx_.gap);
            if (ctx_.switch_off) post_ = switch_off_map(ctx_.basis, *ctx_.switch_off, s, s.nominal).unitary;
            // The rotation Hamiltonian at azimuth phi is D(phi) H(0) D(phi)^+ with D diagonal in k,
            // so one eigendecomposition serves every setting.
            rotation_ = std::make_unique<Propagator>(
                ladder_hamiltonian(ctx_.basis, frame, s.nominal, {s.params.omega_rf_strong, 0.0, true, s.params.omega_mw}));
        }
    }

    CMatrix unitary(const MeasurementSetting& setting) const {
        const auto d = static_cast<Eigen::Index>(ctx_.basis.size());
        const double azimuth = setting.phi + kPi;   // R(theta, phi + pi) = R(theta, phi)^+
        if (!ctx_.setup) {
            const SpinBasis spin;
            const CMatrix r = rotation_operator(spin, setting.theta, azimuth).matrix;
            CMatrix u = CMatrix::Identity(d, d);
            std::vector<Eigen::Index> idx;
            for (int k = 0; k <= spin.two_j(); ++k) {
                auto i = ctx_.basis.find(spin.level(k));
                if (!i) throw Error("ideal measurement needs the full spin ladder in the basis");
                idx.push_back(static_cast<Eigen::Index>(*i));
            }
            for (std::size_t a = 0; a < idx.size(); ++a) {
                for (std::size_t b = 0; b < idx.size(); ++b) u(idx[a], idx[b]) = r(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
            }
            return u;
        }
        const ZenoSetup& s = *ctx_.setup;
        const double duration = setting.theta / s.params.omega_rf_strong;   // effective t2 - t2_offset
        CVector phases(d);
        for (Eigen::Index i = 0; i < d; ++i) {
            phases(i) = std::polar(1.0, -ctx_.basis[static_cast<std::size_t>(i)].step * azimuth);
        }
        // drive(phi) = D drive(0) D^+ with D = diag(e^{-i k phi})
        CMatrix rot = phases.asDiagonal() * rotation_->unitary(duration) * phases.conjugate().asDiagonal();
        CMatrix u = rot * pre_;
        if (post_.size() > 0) u = post_ * u;
        return u;
    }

    const MeasurementContext& context() const { return ctx_; }

private:
    MeasurementContext ctx_;
    CMatrix pre_;
    CMatrix post_;
    std::unique_ptr<Propagator> rotation_;
};

struct DatasetRecord {
    MeasurementSetting setting;
    LadderLevel level;
    double probability = 0.0;                 ///< exact mode, or empirical frequency in shot mode
    std::optional<std::int64_t> count;
    std::optional<std::int64_t> shots;
};

struct Dataset {
    std::vector<MeasurementSetting> settings;
    std::vector<DatasetRecord> records;
};

/// Populations of the monitored levels after each setting's unitary. With
/// `shots` the outcomes (monitored levels plus "elsewhere") are multinomial
/// draws from a generator seeded per setting by (seed, setting id).
inline Dataset synthesize_dataset(const DensityMatrix& rho_true, const std::vector<MeasurementSetting>& settings,
                                  const MeasurementContext& ctx, std::optional<std::int64_t> shots = std::nullopt,
                                  std::uint64_t seed = 0, unsigned threads = 1) {
    if (settings.empty()) throw Error("no measurement settings");
    if (shots && *shots < 1) throw Error("shot count must be at least 1");
    if (!(rho_true.basis() == ctx.basis)) throw Error("state and measurement context use different bases");
    const SettingUnitaries unitaries(ctx);
    std::vector<std::vector<DatasetRecord>> per_setting(settings.size());
    parallel_for(settings.size(), threads, [&](std::size_t s) {
        const CMatrix u = unitaries.unitary(settings[s]);
        const CMatrix out = u * rho_true.matrix() * u.adjoint();
        std::vector<double> probs;
        for (const auto& level : ctx.monitored) {
            const auto i = static_cast<Eigen::Index>(ctx.basis.index_of(level));
            probs.push_back(std::clamp(out(i, i).real(), 0.0, 1.0));
        }
        auto& recs = per_setting[s];
        if (!shots) {
            for (std::size_t l = 0; l < probs.size(); ++l) recs.push_back({settings[s], ctx.monitored[l], probs[l], {}, {}});
            return;
        }
        std::seed_seq sseq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                           static_cast<std::uint32_t>(settings[s].id)};
        std::mt19937_64 rng(sseq);
        std::int64_t remaining = *shots;
        double mass = 1.0;
        for (std::size_t l = 0; l < probs.size(); ++l) {
            std::int64_t c = 0;
            if (remaining > 0 && mass > 0.0) {
                const double p = std::clamp(probs[l] / mass, 0.0, 1.0);
                c = std::binomial_distribution<std::int64_t>(remaining, p)(rng);
            }
            remaining -= c;
            mass -= probs[l];
            recs.push_back({settings[s], ctx.monitored[l], static_cast<double>(c) / static_cast<double>(*shots), c, *shots});
        }
    });
    Dataset ds{settings, {}};
    for (auto& recs : per_setting) ds.records.insert(ds.records.end(), recs.begin(), recs.end());
    return ds;
}

inline nlohmann::json to_json(const Dataset& ds) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : ds.records) {
        nlohmann::json j = {{"setting", {{"id", r.setting.id}, {"theta", r.setting.theta}, {"phi", r.setting.phi}}},
                            {"level", {{"manifold", r.level.manifold}, {"step", r.level.step}}}};
        if (r.count) {
            j["count"] = *r.count;
            j["shots"] = *r.shots;
        } else {
            j["probability"] = r.probability;
            j["shots"] = nullptr;
        }
        arr.push_back(std::move(j));
    }
    return arr;
}

inline Dataset dataset_from_json(const nlohmann::json& arr) {
    Dataset ds;
    for (const auto& j : arr) {
        DatasetRecord r;
        const auto& s = j.at("setting");
        r.setting = {s.at("id").get<int>(), s.at("theta").get<double>(), s.at("phi").get<double>()};
        r.level = {j.at("level").at("manifold").get<int>(), j.at("level").at("step").get<int>()};
        if (j.contains("count")) {
            r.count = j.at("count").get<std::int64_t>();
            r.shots = j.at("shots").get<std::int64_t>();
            r.probability = static_cast<double>(*r.count) / static_cast<double>(*r.shots);
        } else {
            r.probability = j.at("probability").get<double>();
        }
        const bool seen = std::any_of(ds.settings.begin(), ds.settings.end(),
                                      [&](const MeasurementSetting& m) { return m.id == r.setting.id; });
        if (!seen) ds.settings.push_back(r.setting);
        ds.records.push_back(r);
    }
    return ds;
}

}  // namespace qzd
