#pragma once

// Batch scenario configuration: JSON with frequencies in MHz and times in us
// or ns (the unit is the key suffix), converted to rad/us and us on load.

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "qzd/common.hpp"
#include "qzd/detection.hpp"
#include "qzd/evolution.hpp"
#include "qzd/pipelines.hpp"

namespace qzd {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kCodeVersion = "qzd 1.0.0";

/// Invalid configuration; `where` is "line L, column C" or a dotted field path.
class ConfigError : public Error {
public:
    ConfigError(std::string where, const std::string& what) : Error(where + ": " + what), where_(std::move(where)) {}
    const std::string& where() const noexcept { return where_; }

private:
    std::string where_;
};

enum class ScenarioKind { free_rotation, qzd_populations, q_snapshots, cat_wigner, ramsey, tomography_roundtrip };

inline std::string to_string(ScenarioKind k) {
    switch (k) {
        case ScenarioKind::free_rotation: return "free_rotation";
        case ScenarioKind::qzd_populations: return "qzd_populations";
        case ScenarioKind::q_snapshots: return "q_snapshots";
        case ScenarioKind::cat_wigner: return "cat_wigner";
        case ScenarioKind::ramsey: return "ramsey";
        case ScenarioKind::tomography_roundtrip: return "tomography_roundtrip";
    }
    return "unknown";
}

struct Scenario {
    ScenarioKind kind = ScenarioKind::qzd_populations;
    std::uint64_t seed = 0;
    ZenoSetup setup;
    PulseSequence sequence;
    InhomogeneityModel inhomogeneity;
    TimeGrid times;
    std::vector<double> snapshots;   ///< t1 values, us
    double t1 = 0.76;
    DetectionModel detection;
    bool ideal_detection = true;
    std::vector<int> steps{0, 1, 2, 3, 4, 5};
    int n_theta = 64;
    int n_phi = 128;
    int truncation = 16;
    double cap_theta_max = kPi / 2;
    TimeGrid ramsey_delays{0.0, 40.0, 161};
    double ramsey_pulse_area = 0.1;
    double ramsey_pulse_rabi = mhz_to_angular(0.152);
    RoundTripOptions tomography;
    std::string output_directory = "out";
    nlohmann::json resolved;         ///< every parameter after defaults, in config units
};

namespace detail {

/// Walks a JSON object, tracking the dotted path and the keys consumed so
/// that misspelled keys are reported instead of silently ignored.
class ConfigReader {
public:
    ConfigReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_.empty() ? "config" : path_, "expected an object");
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    bool has(const std::string& key) const { return j_.contains(key); }

    template <typename T>
    T get(const std::string& key, T fallback) {
        if (!j_.contains(key)) return fallback;
        used_.insert(key);
        return convert<T>(j_.at(key), field(key));
    }

    template <typename T>
    T require(const std::string& key) {
        if (!j_.contains(key)) throw ConfigError(field(key), "missing required parameter");
        used_.insert(key);
        return convert<T>(j_.at(key), field(key));
    }

    /// Frequency given as `<base>_mhz`; returns rad/us.
    double frequency(const std::string& base, double fallback_angular) {
        const std::string key = base + "_mhz";
        if (!j_.contains(key)) return fallback_angular;
        return mhz_to_angular(get<double>(key, 0.0));
    }

    /// Time given as `<base>_us` or `<base>_ns`; returns us.
    double time(const std::string& base, double fallback_us) {
        const bool us = j_.contains(base + "_us");
        const bool ns = j_.contains(base + "_ns");
        if (us && ns) throw ConfigError(field(base), "given both in us and ns");
        if (us) return get<double>(base + "_us", 0.0);
        if (ns) return ns_to_us(get<double>(base + "_ns", 0.0));
        return fallback_us;
    }

    std::optional<ConfigReader> child(const std::string& key) {
        if (!j_.contains(key)) return std::nullopt;
        used_.insert(key);
        return ConfigReader(j_.at(key), field(key));
    }

    const nlohmann::json& raw(const std::string& key) {
        used_.insert(key);
        return j_.at(key);
    }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (!used_.count(key)) throw ConfigError(field(key), "unknown parameter");
        }
    }

private:
    template <typename T>
    static T convert(const nlohmann::json& v, const std::string& where) {
        try {
            if constexpr (std::is_same_v<T, double>) {
                if (!v.is_number()) throw ConfigError(where, "expected a number");
            } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
                if (!v.is_number_integer()) throw ConfigError(where, "expected an integer");
            } else if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw ConfigError(where, "expected true or false");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string()) throw ConfigError(where, "expected a string");
            }
            return v.get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(where, e.what());
        }
    }

    const nlohmann::json& j_;
    std::string path_;
    std::set<std::string> used_;
};

inline std::string position(const std::string& text, std::size_t byte) {
    std::size_t line = 1;
    std::size_t col = 1;
    for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col > 1 ? col - 1 : 1);
}

inline TimeGrid read_grid(ConfigReader& r, TimeGrid fallback) {
    TimeGrid g{r.time("start", fallback.start), r.time("stop", fallback.stop), r.get<int>("count", fallback.count)};
    r.finish();
    try {
        (void)g.values();
    } catch (const Error& e) {
        throw ConfigError(r.field("count"), e.what());
    }
    return g;
}

inline nlohmann::json grid_json(const TimeGrid& g) { return {{"start_us", g.start}, {"stop_us", g.stop}, {"count", g.count}}; }

inline ScenarioKind parse_kind(const std::string& s, const std::string& where) {
    for (auto k : {ScenarioKind::free_rotation, ScenarioKind::qzd_populations, ScenarioKind::q_snapshots,
                   ScenarioKind::cat_wigner, ScenarioKind::ramsey, ScenarioKind::tomography_roundtrip}) {
        if (to_string(k) == s) return k;
    }
    throw ConfigError(where, "unknown scenario kind '" + s + "'");
}

}  // namespace detail

/// Validates and resolves a parsed config.
inline Scenario scenario_from_json(const nlohmann::json& config) {
    detail::ConfigReader root(config, "");
    const int version = root.require<int>("schema_version");
    if (version != kSchemaVersion) {
        throw ConfigError("schema_version", "expected " + std::to_string(kSchemaVersion) + ", got " + std::to_string(version));
    }
    Scenario sc;
    sc.kind = detail::parse_kind(root.require<std::string>("kind"), "kind");
    sc.seed = root.get<std::uint64_t>("seed", 0);
    const bool zeno_default = sc.kind != ScenarioKind::free_rotation && sc.kind != ScenarioKind::ramsey;

    // field
    bool second_order = true;
    double stark = mhz_to_angular(230.15);
    std::optional<double> field_v;
    if (auto f = root.child("field")) {
        second_order = f->get<bool>("second_order", true);
        if (f->has("stark_frequency_mhz") && f->has("field_v_per_cm")) {
            throw ConfigError(f->field("field_v_per_cm"), "give either the field or the Stark frequency, not both");
        }
        stark = f->frequency("stark_frequency", stark);
        if (f->has("field_v_per_cm")) field_v = f->get<double>("field_v_per_cm", 0.0);
        f->finish();
    }
    try {
        sc.setup.nominal = field_v ? FieldModel(*field_v, second_order) : FieldModel::from_stark_frequency(stark, second_order);
    } catch (const Error& e) {
        throw ConfigError("field", e.what());
    }

    sc.setup.k_z = root.get<int>("k_z", sc.kind == ScenarioKind::qzd_populations ? 5 : 4);
    if (sc.setup.k_z < 0 || sc.setup.k_z > 49) throw ConfigError("k_z", "must lie in 0..49");

    // drive
    DriveParameters& p = sc.setup.params;
    p.omega_mw = mhz_to_angular(sc.setup.k_z == 4 ? 3.08 : 3.4);
    if (auto d = root.child("drive")) {
        p.omega_rf = d->frequency("omega_rf", p.omega_rf);
        p.omega_rf_strong = d->frequency("omega_rf_strong", p.omega_rf_strong);
        p.omega_mw = d->frequency("omega_mw", p.omega_mw);
        p.detuning = d->frequency("detuning", p.detuning);
        p.mw_detuning = d->frequency("mw_detuning", p.mw_detuning);
        d->finish();
    }

    // sequence
    PulseSequence& seq = sc.sequence;
    seq.zeno_on = zeno_default;
    bool switch_off = sc.kind == ScenarioKind::qzd_populations;
    SwitchOffRamp ramp = SwitchOffRamp::for_step(sc.setup.k_z);
    if (auto s = root.child("sequence")) {
        seq.zeno_on = s->get<bool>("zeno", seq.zeno_on);
        seq.t1_offset = s->time("t1_offset", seq.t1_offset);
        seq.t2_offset = s->time("t2_offset", seq.t2_offset);
        seq.gap = s->time("gap", seq.gap);
        switch_off = s->get<bool>("switch_off", switch_off);
        ramp.field_factor = s->get<double>("switch_off_field_factor", ramp.field_factor);
        ramp.field_ramp = s->time("field_ramp", ramp.field_ramp);
        ramp.mw_ramp = s->time("mw_ramp", ramp.mw_ramp);
        s->finish();
    }
    if (switch_off && seq.zeno_on) seq.switch_off = ramp;
    if (seq.t1_offset < 0 || seq.t2_offset < 0 || seq.gap < 0) throw ConfigError("sequence", "offsets must be non-negative");
    try {
        p.validate(seq.zeno_on);
    } catch (const Error& e) {
        throw ConfigError("drive", e.what());
    }

    // inhomogeneity
    p.sigma_is_fwhm = true;
    int samples = 7;
    bool averaging = sc.kind != ScenarioKind::free_rotation && sc.kind != ScenarioKind::ramsey;
    if (auto h = root.child("inhomogeneity")) {
        averaging = h->get<bool>("enabled", averaging);
        p.sigma_omega_a = h->frequency("sigma_omega_a", p.sigma_omega_a);
        const std::string convention = h->get<std::string>("convention", "fwhm");
        if (convention != "fwhm" && convention != "rms") throw ConfigError(h->field("convention"), "expected \"fwhm\" or \"rms\"");
        p.sigma_is_fwhm = convention == "fwhm";
        samples = h->get<int>("samples", samples);
        h->finish();
    }
    sc.inhomogeneity = InhomogeneityModel::from_drive(p, sc.setup.nominal, samples);
    if (!averaging) sc.inhomogeneity.relative_sigma = 0.0;
    try {
        sc.inhomogeneity.validate();
    } catch (const Error& e) {
        throw ConfigError("inhomogeneity.samples", e.what());
    }

    // time axes
    sc.times = sc.kind == ScenarioKind::free_rotation ? TimeGrid{0.0, 3.0, 50} : TimeGrid{0.0, 2.5, 51};
    if (auto t = root.child("times")) sc.times = detail::read_grid(*t, sc.times);
    sc.snapshots = {0.0, 0.3, 0.55, 0.76, 1.0, 1.46};
    if (root.has("snapshots_us")) {
        const auto& arr = root.raw("snapshots_us");
        if (!arr.is_array() || arr.empty()) throw ConfigError("snapshots_us", "expected a non-empty array of times");
        sc.snapshots.clear();
        for (const auto& v : arr) {
            if (!v.is_number()) throw ConfigError("snapshots_us", "expected numbers");
            sc.snapshots.push_back(v.get<double>());
        }
    }
    sc.t1 = root.time("t1", sc.t1);

    // detection
    sc.detection.step_difference = sc.setup.nominal.manifold_step_difference();
    if (auto d = root.child("detection")) {
        sc.ideal_detection = d->get<bool>("ideal", sc.ideal_detection);
        sc.detection.efficiencies = d->get<std::vector<double>>("efficiencies", sc.detection.efficiencies);
        sc.detection.probe_duration = d->time("probe_duration", sc.detection.probe_duration);
        sc.steps = d->get<std::vector<int>>("steps", sc.steps);
        d->finish();
    }
    try {
        sc.detection.validate();
    } catch (const Error& e) {
        throw ConfigError("detection", e.what());
    }
    for (int k : sc.steps) {
        if (k < 0 || k >= static_cast<int>(sc.detection.efficiencies.size())) {
            throw ConfigError("detection.steps", "level " + std::to_string(k) + " has no probe efficiency");
        }
    }

    // phase space
    if (auto ps = root.child("phase_space")) {
        sc.n_theta = ps->get<int>("n_theta", sc.n_theta);
        sc.n_phi = ps->get<int>("n_phi", sc.n_phi);
        sc.truncation = ps->get<int>("truncation", sc.truncation);
        sc.cap_theta_max = ps->get<double>("cap_theta_max_deg", 90.0) * kPi / 180.0;
        ps->finish();
    }
    if (sc.n_theta < 2 || sc.n_phi < 3) throw ConfigError("phase_space", "grid too small");
    if (sc.truncation < 1 || sc.truncation > 51) throw ConfigError("phase_space.truncation", "must lie in 1..51");

    // Ramsey
    sc.ramsey_pulse_rabi = p.omega_rf;
    if (auto r = root.child("ramsey")) {
        if (auto g = r->child("delays")) sc.ramsey_delays = detail::read_grid(*g, sc.ramsey_delays);
        sc.ramsey_pulse_area = r->get<double>("pulse_area", sc.ramsey_pulse_area);
        sc.ramsey_pulse_rabi = r->frequency("pulse_rabi", sc.ramsey_pulse_rabi);
        r->finish();
    }

    // tomography
    RoundTripOptions& tomo = sc.tomography;
    tomo.seed = sc.seed;
    if (auto t = root.child("tomography")) {
        tomo.settings = t->get<int>("settings", tomo.settings);
        tomo.cap_angle = t->get<double>("cap_theta_max_deg", 90.0) * kPi / 180.0;
        if (t->has("shots") && !t->raw("shots").is_null()) tomo.shots = t->get<std::int64_t>("shots", 0);
        tomo.ideal_measurement = t->get<bool>("ideal_measurement", tomo.ideal_measurement);
        tomo.maxlike.max_iterations = t->get<int>("max_iterations", tomo.maxlike.max_iterations);
        tomo.maxlike.tolerance = t->get<double>("tolerance", tomo.maxlike.tolerance);
        tomo.leak_coefficient = t->get<double>("leak_coefficient", tomo.leak_coefficient);
        t->finish();
    }
    if (tomo.settings < 1) throw ConfigError("tomography.settings", "need at least one setting");
    if (tomo.shots && *tomo.shots < 1) throw ConfigError("tomography.shots", "shot count must be at least 1");
    if (!(tomo.cap_angle > 0 && tomo.cap_angle <= kPi)) throw ConfigError("tomography.cap_theta_max_deg", "must lie in (0, 180]");
    if (!tomo.shots) tomo.maxlike.probability_floor = 1e-12;

    if (auto o = root.child("output")) {
        sc.output_directory = o->get<std::string>("directory", sc.output_directory);
        o->finish();
    }
    root.finish();

    sc.resolved = {
        {"schema_version", kSchemaVersion},
        {"kind", to_string(sc.kind)},
        {"seed", sc.seed},
        {"k_z", sc.setup.k_z},
        {"field", {{"field_v_per_cm", sc.setup.nominal.field()},
                   {"stark_frequency_mhz", angular_to_mhz(sc.setup.nominal.stark_frequency())},
                   {"manifold_step_difference_mhz", angular_to_mhz(sc.setup.nominal.manifold_step_difference())},
                   {"second_order", sc.setup.nominal.second_order()}}},
        {"drive", {{"omega_rf_mhz", angular_to_mhz(p.omega_rf)},
                   {"omega_rf_strong_mhz", angular_to_mhz(p.omega_rf_strong)},
                   {"omega_mw_mhz", angular_to_mhz(p.omega_mw)},
                   {"detuning_mhz", angular_to_mhz(p.detuning)},
                   {"mw_detuning_mhz", angular_to_mhz(p.mw_detuning)}}},
        {"sequence", {{"zeno", seq.zeno_on}, {"t1_offset_us", seq.t1_offset}, {"t2_offset_us", seq.t2_offset},
                      {"gap_us", seq.gap}, {"switch_off", seq.switch_off.has_value()},
                      {"switch_off_field_factor", ramp.field_factor}, {"field_ramp_us", ramp.field_ramp},
                      {"mw_ramp_us", ramp.mw_ramp}}},
        {"inhomogeneity", {{"enabled", averaging}, {"sigma_omega_a_mhz", angular_to_mhz(p.sigma_omega_a)},
                           {"convention", p.sigma_is_fwhm ? "fwhm" : "rms"}, {"samples", sc.inhomogeneity.samples},
                           {"relative_field_rms", sc.inhomogeneity.relative_sigma}}},
        {"times", detail::grid_json(sc.times)},
        {"snapshots_us", sc.snapshots},
        {"t1_us", sc.t1},
        {"detection", {{"ideal", sc.ideal_detection}, {"efficiencies", sc.detection.efficiencies},
                       {"probe_duration_us", sc.detection.probe_duration}, {"steps", sc.steps}}},
        {"phase_space", {{"n_theta", sc.n_theta}, {"n_phi", sc.n_phi}, {"truncation", sc.truncation},
                         {"cap_theta_max_deg", sc.cap_theta_max * 180.0 / kPi}}},
        {"ramsey", {{"delays", detail::grid_json(sc.ramsey_delays)}, {"pulse_area", sc.ramsey_pulse_area},
                    {"pulse_rabi_mhz", angular_to_mhz(sc.ramsey_pulse_rabi)}}},
        {"tomography", {{"settings", tomo.settings}, {"cap_theta_max_deg", tomo.cap_angle * 180.0 / kPi},
                        {"shots", tomo.shots ? nlohmann::json(*tomo.shots) : nlohmann::json(nullptr)},
                        {"ideal_measurement", tomo.ideal_measurement}, {"max_iterations", tomo.maxlike.max_iterations},
                        {"tolerance", tomo.maxlike.tolerance}, {"leak_coefficient", tomo.leak_coefficient}}},
    };
    return sc;
}

inline Scenario scenario_from_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text, nullptr, true, /*ignore_comments=*/false);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(detail::position(text, e.byte), "JSON syntax error");
    }
    return scenario_from_json(j);
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path, "cannot open config");
    std::stringstream ss;
    ss << in.rdbuf();
    return scenario_from_text(ss.str());
}

/// 64-bit FNV-1a of the canonical (sorted-key, compact) dump.
inline std::string parameter_hash(const nlohmann::json& resolved) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : resolved.dump()) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace qzd
