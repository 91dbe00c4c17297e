#pragma once

// Time evolution: exact propagators of static Hamiltonians, the square-pulse
// experimental sequence, the adiabatic Zeno switch-off and averaging over the
// static-field spread.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "qzd/common.hpp"
#include "qzd/ladder.hpp"
#include "qzd/operators.hpp"
#include "qzd/parallel.hpp"

namespace qzd {

/// exp(-i H t) for many t from one Hermitian eigendecomposition.
class Propagator {
public:
    explicit Propagator(const Operator& h) : basis_(h.basis) {
        if (h.kind != OperatorKind::hermitian) throw Error("propagator needs a Hermitian generator");
        const double defect = hermiticity_defect(h.matrix);
        if (defect > kMatrixTolerance * std::max(1.0, max_abs(h.matrix))) {
            throw Error("propagator generator is not Hermitian");
        }
        Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (h.matrix + h.matrix.adjoint()));
        vectors_ = es.eigenvectors();
        values_ = es.eigenvalues();
    }

    const Basis& basis() const { return basis_; }
    const RVector& eigenvalues() const { return values_; }

    CMatrix unitary(double t) const {
        return vectors_ * phases(t).asDiagonal() * vectors_.adjoint();
    }

    CVector apply(const CVector& psi, double t) const {
        CVector c = vectors_.adjoint() * psi;
        return vectors_ * phases(t).cwiseProduct(c);
    }

private:
    CVector phases(double t) const {
        CVector p(values_.size());
        for (Eigen::Index i = 0; i < values_.size(); ++i) p(i) = std::polar(1.0, -values_(i) * t);
        return p;
    }

    Basis basis_;
    CMatrix vectors_;
    RVector values_;
};

inline Operator propagator(const Operator& h, double duration) {
    CMatrix u = Propagator(h).unitary(duration);
    const double defect = unitarity_defect(u);
    if (defect > kMatrixTolerance) throw InvariantViolation("propagator unitarity", std::to_string(defect));
    return {h.basis, std::move(u), OperatorKind::unitary};
}

// --- Sequence description ----------------------------------------------------

/// Zeno microwave switch-off: the field is lowered linearly by `field_factor`
/// over `field_ramp`, then the microwave amplitude decays linearly to zero
/// over `mw_ramp`. Times in us.
struct SwitchOffRamp {
    double field_factor = 0.92;
    double field_ramp = 3.0;
    double mw_ramp = 4.5;
    int min_steps = 500;
    double convergence = 1e-6;

    static SwitchOffRamp for_step(int k_z) {
        SwitchOffRamp r;
        r.field_factor = k_z == 4 ? 0.90 : 0.92;
        return r;
    }
};

struct RotationPulse {
    double t2 = 0.0;        ///< programmed duration, us
    double azimuth = 0.0;   ///< RF phase; the pulse realizes R(theta, azimuth)
};

/// Times in us. Effective pulse lengths are t - offset, clamped at zero.
struct PulseSequence {
    double t1 = 0.0;
    double t1_offset = 0.069;
    double t2_offset = 0.074;
    double gap = 0.030;
    bool zeno_on = true;
    std::optional<RotationPulse> rotation;
    std::optional<SwitchOffRamp> switch_off;

    double effective_t1() const { return std::max(0.0, t1 - t1_offset); }
    double effective_t2() const { return rotation ? std::max(0.0, rotation->t2 - t2_offset) : 0.0; }
};

/// Everything that defines the drives, independent of the field an atom sees.
struct ZenoSetup {
    DriveParameters params;
    FieldModel nominal;
    int k_z = 5;

    DriveFrame frame() const { return make_frame(params, nominal, k_z); }
};

// --- Adiabatic switch-off ------------------------------------------------------

struct SwitchOffMap {
    CMatrix unitary;
    int steps = 0;
    double plus_mapping = 1.0;         ///< P(|n_e,k_z>) starting from |+>
    double worst_bare_mapping = 1.0;   ///< min_k P(|n_e,k>) from the e-like dressed state of block k != k_z
};

namespace detail {

/// Eigenvector of [[ee, w/2], [w/2, eg]] with the larger |n_e> weight, e-component positive.
inline Eigen::Vector2d e_like_eigenvector(double ee, double eg, double omega_mw) {
    Eigen::Matrix2d block;
    block << ee, 0.5 * omega_mw, 0.5 * omega_mw, eg;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(block);
    Eigen::Vector2d v = std::abs(es.eigenvectors()(0, 0)) >= std::abs(es.eigenvectors()(0, 1)) ? es.eigenvectors().col(0)
                                                                                                 : es.eigenvectors().col(1);
    return v(0) < 0 ? Eigen::Vector2d(-v) : v;
}

// With the RF off the Hamiltonian only couples |n_e,k> to |n_g,k>, so the
// switch-off is a product of 2x2 blocks, each integrated exactly over
// piecewise-constant steps.
inline SwitchOffMap switch_off_blocks(const Basis& basis, const SwitchOffRamp& ramp, const ZenoSetup& setup,
                                      const FieldModel& atom, int steps) {
    const DriveFrame frame = setup.frame();
    const double total = ramp.field_ramp + ramp.mw_ramp;
    const double dt = total / steps;
    const auto d = static_cast<Eigen::Index>(basis.size());

    struct Pair {
        Eigen::Index e, g;
        int k;
        Eigen::Matrix2cd u = Eigen::Matrix2cd::Identity();
        double phase = 0.0;
        Eigen::Vector2d start{1.0, 0.0};   // e-like eigenvector of the block at the ramp start
    };
    std::vector<Pair> pairs;
    std::vector<std::pair<Eigen::Index, double>> singles;
    std::vector<bool> used(basis.size(), false);
    for (std::size_t i = 0; i < basis.size(); ++i) {
        if (basis[i].manifold != kManifoldE) continue;
        if (auto g = basis.find({kManifoldG, basis[i].step})) {
            pairs.push_back({static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(*g), basis[i].step});
            used[i] = used[*g] = true;
        }
    }
    for (std::size_t i = 0; i < basis.size(); ++i) {
        if (!used[i]) singles.emplace_back(static_cast<Eigen::Index>(i), 0.0);
    }

    for (auto& p : pairs) {
        p.start = detail::e_like_eigenvector(frame_energy(frame, atom, basis[static_cast<std::size_t>(p.e)]),
                                             frame_energy(frame, atom, basis[static_cast<std::size_t>(p.g)]),
                                             setup.params.omega_mw);
    }

    for (int s = 0; s < steps; ++s) {
        const double t = (s + 0.5) * dt;
        double factor = ramp.field_factor;
        double amplitude = 0.0;
        if (t < ramp.field_ramp) {
            factor = 1.0 - (1.0 - ramp.field_factor) * (t / ramp.field_ramp);
            amplitude = setup.params.omega_mw;
        } else {
            amplitude = setup.params.omega_mw * std::max(0.0, 1.0 - (t - ramp.field_ramp) / ramp.mw_ramp);
        }
        const FieldModel field = atom.scaled(factor);
        for (auto& p : pairs) {
            const double ee = frame_energy(frame, field, basis[static_cast<std::size_t>(p.e)]);
            const double eg = frame_energy(frame, field, basis[static_cast<std::size_t>(p.g)]);
            const double mean = 0.5 * (ee + eg);
            const double dz = 0.5 * (ee - eg);
            const double x = 0.5 * amplitude;
            const double w = std::hypot(dz, x);
            const double c = std::cos(w * dt);
            const double sinc = w > 0 ? std::sin(w * dt) / w : dt;
            Eigen::Matrix2cd step;
            step << complex(c, -sinc * dz), complex(0, -sinc * x), complex(0, -sinc * x), complex(c, sinc * dz);
            p.u = step * p.u;
            p.phase += mean * dt;
        }
        for (auto& [idx, phase] : singles) {
            phase += frame_energy(frame, field, basis[static_cast<std::size_t>(idx)]) * dt;
        }
    }

    SwitchOffMap out;
    out.steps = steps;
    out.unitary = CMatrix::Zero(d, d);
    for (const auto& p : pairs) {
        const complex ph = std::polar(1.0, -p.phase);
        out.unitary(p.e, p.e) = ph * p.u(0, 0);
        out.unitary(p.e, p.g) = ph * p.u(0, 1);
        out.unitary(p.g, p.e) = ph * p.u(1, 0);
        out.unitary(p.g, p.g) = ph * p.u(1, 1);
        if (p.k == setup.k_z) {
            const complex amp = (p.u(0, 0) + p.u(0, 1)) / std::sqrt(2.0);
            out.plus_mapping = std::norm(amp);
        } else {
            const complex amp = p.u(0, 0) * p.start(0) + p.u(0, 1) * p.start(1);
            out.worst_bare_mapping = std::min(out.worst_bare_mapping, std::norm(amp));
        }
    }
    for (const auto& [idx, phase] : singles) out.unitary(idx, idx) = std::polar(1.0, -phase);
    return out;
}

}  // namespace detail

/// Switch-off unitary, refined by step doubling until transfer probabilities
/// change by less than ramp.convergence.
inline SwitchOffMap switch_off_map(const Basis& basis, const SwitchOffRamp& ramp, const ZenoSetup& setup,
                                   const FieldModel& atom) {
    if (!(ramp.field_factor > 0.0) || ramp.field_ramp < 0 || ramp.mw_ramp < 0) throw Error("invalid switch-off ramp");
    int steps = std::max(ramp.min_steps, 500);
    SwitchOffMap current = detail::switch_off_blocks(basis, ramp, setup, atom, steps);
    for (int round = 0; round < 12; ++round) {
        SwitchOffMap refined = detail::switch_off_blocks(basis, ramp, setup, atom, 2 * steps);
        const double change = (refined.unitary.cwiseAbs2() - current.unitary.cwiseAbs2()).cwiseAbs().maxCoeff();
        current = std::move(refined);
        steps *= 2;
        if (change < ramp.convergence) return current;
    }
    throw InvariantViolation("switch-off convergence", "step doubling did not converge");
}

struct SwitchOffResult {
    StateVector state;
    int steps = 0;
    double plus_mapping = 1.0;
    double worst_bare_mapping = 1.0;
    bool adiabatic = true;   ///< both mappings reach 0.99
};

inline SwitchOffResult adiabatic_switch_off(const StateVector& state, const SwitchOffRamp& ramp,
                                            const ZenoSetup& setup, const FieldModel& atom) {
    const SwitchOffMap map = switch_off_map(state.basis, ramp, setup, atom);
    SwitchOffResult out{StateVector(state.basis, map.unitary * state.amplitudes), map.steps, map.plus_mapping,
                        map.worst_bare_mapping, true};
    out.adiabatic = map.plus_mapping >= 0.99 && map.worst_bare_mapping >= 0.99;
    return out;
}

inline SwitchOffResult adiabatic_switch_off(const StateVector& state, const SwitchOffRamp& ramp,
                                            const ZenoSetup& setup) {
    return adiabatic_switch_off(state, ramp, setup, setup.nominal);
}

// --- Pulse sequence -------------------------------------------------------------

/// Circular-like starting state with the Zeno microwave already on: the
/// e-like eigenstate of the {|n_e,0>, |n_g,0>} block (|n_e,0> itself when the
/// basis has no n_g partner or the microwave is off).
inline StateVector zeno_initial_state(const Basis& basis, const ZenoSetup& setup, const FieldModel& atom,
                                      bool zeno_on = true) {
    const LadderLevel e0{kManifoldE, 0};
    StateVector psi = StateVector::basis_state(basis, e0);
    const auto g = basis.find({kManifoldG, 0});
    if (!zeno_on || !g || setup.params.omega_mw == 0.0) return psi;
    const DriveFrame frame = setup.frame();
    const Eigen::Vector2d v = detail::e_like_eigenvector(frame_energy(frame, atom, e0),
                                                         frame_energy(frame, atom, {kManifoldG, 0}), setup.params.omega_mw);
    psi.amplitudes(static_cast<Eigen::Index>(basis.index_of(e0))) = v(0);
    psi.amplitudes(static_cast<Eigen::Index>(*g)) = v(1);
    return psi;
}

struct SequenceResult {
    StateVector state;
    std::vector<std::string> warnings;
};

/// QZD pulse, RF-free gap, strong rotation, then the switch-off, each optional
/// as described by `seq`. `atom` defaults to the nominal field.
inline SequenceResult run_sequence(const PulseSequence& seq, const ZenoSetup& setup, const StateVector& psi0,
                                   std::optional<FieldModel> atom = std::nullopt) {
    if (std::abs(psi0.norm() - 1.0) > 1e-9) throw Error("initial state is not normalized");
    const FieldModel field = atom.value_or(setup.nominal);
    setup.params.validate(seq.zeno_on);
    const DriveFrame frame = setup.frame();
    SequenceResult out{psi0, {}};

    if (seq.t1 < seq.t1_offset) out.warnings.push_back("t1 shorter than its offset; QZD pulse clamped to zero");
    if (seq.rotation && seq.rotation->t2 < seq.t2_offset) {
        out.warnings.push_back("t2 shorter than its offset; rotation pulse clamped to zero");
    }

    auto evolve = [&](const DriveTerms& terms, double t) {
        if (t <= 0.0) return;
        const Operator h = ladder_hamiltonian(psi0.basis, frame, field, terms);
        out.state.amplitudes = Propagator(h).apply(out.state.amplitudes, t);
    };

    evolve({setup.params.omega_rf, kPi / 2, seq.zeno_on, setup.params.omega_mw}, seq.effective_t1());
    if (seq.rotation) {
        evolve({0.0, 0.0, seq.zeno_on, setup.params.omega_mw}, seq.gap);
        evolve({setup.params.omega_rf_strong, seq.rotation->azimuth, seq.zeno_on, setup.params.omega_mw},
               seq.effective_t2());
    }
    if (seq.switch_off && seq.zeno_on) {
        auto r = adiabatic_switch_off(out.state, *seq.switch_off, setup, field);
        if (!r.adiabatic) {
            out.warnings.push_back("switch-off mapping below 0.99 (|+>: " + std::to_string(r.plus_mapping) +
                                   ", bare: " + std::to_string(r.worst_bare_mapping) + ")");
        }
        out.state = std::move(r.state);
    }
    const double n = out.state.norm();
    if (std::abs(n - 1.0) > 1e-9) throw InvariantViolation("norm conservation", std::to_string(n));
    out.state = out.state.normalized();
    return out;
}

// --- Field inhomogeneity --------------------------------------------------------

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Gauss-Hermite rule for a standard normal variable (weights sum to one),
/// from the eigenproblem of the Hermite Jacobi matrix.
inline QuadratureRule gauss_hermite(int n) {
    if (n < 1) throw Error("quadrature needs at least one node");
    RMatrix jacobi = RMatrix::Zero(n, n);
    for (int i = 1; i < n; ++i) jacobi(i, i - 1) = jacobi(i - 1, i) = std::sqrt(static_cast<double>(i));
    Eigen::SelfAdjointEigenSolver<RMatrix> es(jacobi);
    QuadratureRule rule;
    for (int i = 0; i < n; ++i) {
        rule.nodes.push_back(es.eigenvalues()(i));
        const double v = es.eigenvectors()(0, i);
        rule.weights.push_back(v * v);
    }
    if (n % 2 == 1) rule.nodes[static_cast<std::size_t>(n / 2)] = 0.0;
    return rule;
}

struct InhomogeneityModel {
    double relative_sigma = 0.0;  ///< rms of F'/F - 1
    int samples = 7;

    void validate() const {
        if (relative_sigma < 0) throw Error("inhomogeneity width must be non-negative");
        if (samples < 1 || samples % 2 == 0) throw Error("inhomogeneity sample count must be odd and >= 1");
    }

    /// Width matching the Stark-frequency spread of the drive parameters.
    static InhomogeneityModel from_drive(const DriveParameters& p, const FieldModel& nominal, int samples = 7) {
        return {p.sigma_rms() / nominal.stark_frequency(), samples};
    }

    QuadratureRule rule() const {
        validate();
        if (relative_sigma == 0.0) return {{0.0}, {1.0}};
        return gauss_hermite(samples);
    }

    std::vector<FieldModel> fields(const FieldModel& nominal) const {
        std::vector<FieldModel> out;
        for (double x : rule().nodes) out.push_back(nominal.scaled(1.0 + relative_sigma * x));
        return out;
    }
};

/// rho = sum_i w_i |psi(F'_i)><psi(F'_i)|, summed in node order.
inline DensityMatrix inhomogeneous_average(const std::function<StateVector(const FieldModel&)>& scenario,
                                           const FieldModel& nominal, const InhomogeneityModel& model,
                                           unsigned threads = 1) {
    const QuadratureRule rule = model.rule();
    const auto fields = model.fields(nominal);
    std::vector<StateVector> states(fields.size());
    parallel_for(fields.size(), threads, [&](std::size_t i) { states[i] = scenario(fields[i]).normalized(); });
    CMatrix rho = CMatrix::Zero(static_cast<Eigen::Index>(states[0].size()), static_cast<Eigen::Index>(states[0].size()));
    for (std::size_t i = 0; i < states.size(); ++i) {
        rho += rule.weights[i] * states[i].amplitudes * states[i].amplitudes.adjoint();
    }
    return DensityMatrix::from_unnormalized(states[0].basis, rho);
}

// --- Ramsey calibration ----------------------------------------------------------

/// P(n_e,0) after two short RF pulses of area `pulse_area` separated by a free
/// evolution of `delay` us, on the bare n_e ladder (no Zeno microwave).
inline double ramsey_circular_population(const ZenoSetup& setup, const FieldModel& atom, double delay,
                                         double pulse_area, double pulse_rabi) {
    const SpinBasis spin;
    const Basis basis = spin.basis();
    const DriveFrame frame = setup.frame();
    const double tp = pulse_area / pulse_rabi;
    const Propagator pulse(ladder_hamiltonian(basis, frame, atom, {pulse_rabi, kPi / 2, false, 0.0}));
    const Propagator free(ladder_hamiltonian(basis, frame, atom, {0.0, 0.0, false, 0.0}));
    CVector psi = circular_state(spin).amplitudes;
    psi = pulse.apply(psi, tp);
    psi = free.apply(psi, delay);
    psi = pulse.apply(psi, tp);
    return std::norm(psi(0));
}

/// Angular frequency of the dominant oscillation of `values(times)`, found by
/// least-squares fitting a + b cos(wt) + c sin(wt) over [w_min, w_max].
inline double fit_oscillation_frequency(std::span<const double> times, std::span<const double> values,
                                        double w_min, double w_max) {
    if (times.size() != values.size() || times.size() < 4) throw Error("need at least four samples to fit");
    const auto n = static_cast<Eigen::Index>(times.size());
    RVector y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = values[static_cast<std::size_t>(i)];
    auto residual = [&](double w) {
        RMatrix a(n, 3);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double t = times[static_cast<std::size_t>(i)];
            a(i, 0) = 1.0;
            a(i, 1) = std::cos(w * t);
            a(i, 2) = std::sin(w * t);
        }
        const RVector coef = a.colPivHouseholderQr().solve(y);
        return (a * coef - y).squaredNorm();
    };
    const int grid = 2000;
    double best_w = w_min;
    double best_r = residual(w_min);
    for (int i = 1; i <= grid; ++i) {
        const double w = w_min + (w_max - w_min) * i / grid;
        const double r = residual(w);
        if (r < best_r) {
            best_r = r;
            best_w = w;
        }
    }
    const double h = (w_max - w_min) / grid;
    double lo = std::max(w_min, best_w - h);
    double hi = std::min(w_max, best_w + h);
    const double golden = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = hi - golden * (hi - lo);
    double x2 = lo + golden * (hi - lo);
    double f1 = residual(x1);
    double f2 = residual(x2);
    for (int it = 0; it < 100; ++it) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - golden * (hi - lo);
            f1 = residual(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + golden * (hi - lo);
            f2 = residual(x2);
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace qzd
