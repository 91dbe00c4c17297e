#pragma once

// Hamiltonians and unitaries for the RF-driven spin ladder with Zeno dressing.
//
// Energies. Level |n, k> sits on the lower edge of the Stark triangle of
// manifold n, with parabolic quantum number difference q = -k and magnetic
// quantum number m = n - 1 - k. Its Stark shift (atomic units) is the
// hydrogenic expansion
//
//     E(n, k) = -(3/2) n k F  -  (1/16) n^4 (17 n^2 - 3 k^2 - 9 m^2 + 19) F^2,
//
// so each ladder step lowers the energy by (3/2) n F plus a small quadratic
// correction. The zero-field manifold energy -1/(2 n^2) is dropped: it is
// absorbed in the microwave frequencies, which are always derived from the
// same energies.
//
// Frame. A single interaction picture serves every simulation. Level
// |n_e, k> rotates at E_ref - k w_rf and |n_g, k> at E_ref - k w_rf - w_mw,
// where w_rf = w_a - delta is the RF carrier, w_mw the Zeno microwave carrier
// and E_ref = E(n_e, 0), all evaluated at the nominal field. In this frame
// the RF and MW couplings are static and an atom seeing a different field only
// changes the diagonal.

#include <cmath>
#include <optional>
#include <string>

#include <Eigen/Eigenvalues>

#include "qzd/common.hpp"
#include "qzd/ladder.hpp"

namespace qzd {

namespace units {
/// Hartree energy expressed as angular frequency in rad/us.
inline constexpr double kHartreeAngular = 4.134137333518e10;
/// Atomic unit of electric field in V/cm.
inline constexpr double kFieldAtomicVPerCm = 5.14220674763e9;
}  // namespace units

enum class OperatorKind { hermitian, unitary, general };

inline std::string to_string(OperatorKind k) {
    switch (k) {
        case OperatorKind::hermitian: return "hermitian";
        case OperatorKind::unitary: return "unitary";
        case OperatorKind::general: return "general";
    }
    return "general";
}

struct Operator {
    Basis basis;
    CMatrix matrix;
    OperatorKind kind = OperatorKind::general;

    Operator() = default;
    Operator(Basis b, CMatrix m, OperatorKind k) : basis(std::move(b)), matrix(std::move(m)), kind(k) {
        if (matrix.rows() != matrix.cols() || static_cast<std::size_t>(matrix.rows()) != basis.size()) {
            throw Error("operator shape does not match basis");
        }
        if (kind == OperatorKind::hermitian) {
            const double d = hermiticity_defect(matrix);
            if (d > kMatrixTolerance * std::max(1.0, max_abs(matrix))) {
                throw InvariantViolation("operator hermiticity", "defect " + std::to_string(d));
            }
            matrix = 0.5 * (matrix + matrix.adjoint()).eval();
        } else if (kind == OperatorKind::unitary) {
            const double d = unitarity_defect(matrix);
            if (d > kMatrixTolerance) throw InvariantViolation("operator unitarity", "defect " + std::to_string(d));
        }
    }

    std::size_t dimension() const { return basis.size(); }

    StateVector apply(const StateVector& psi) const {
        if (!(psi.basis == basis)) throw Error("operator and state live on different bases");
        return {basis, matrix * psi.amplitudes};
    }
};

inline nlohmann::json to_json(const Operator& op) {
    auto j = matrix_to_json(op.basis, op.matrix);
    j["kind"] = to_string(op.kind);
    return j;
}

// --- Angular momentum on the spin ladder (index k, m = J - k) -------------

/// J_- in the k ordering: <k+1| J_- |k> = sqrt((k+1)(2J-k)).
inline CMatrix spin_lowering(const SpinBasis& spin) {
    const int n = spin.two_j();
    CMatrix m = CMatrix::Zero(n + 1, n + 1);
    for (int k = 0; k < n; ++k) m(k + 1, k) = std::sqrt(static_cast<double>((k + 1) * (n - k)));
    return m;
}

inline CMatrix spin_jx(const SpinBasis& spin) {
    const CMatrix lo = spin_lowering(spin);
    return 0.5 * (lo + lo.adjoint());
}

inline CMatrix spin_jy(const SpinBasis& spin) {
    const CMatrix lo = spin_lowering(spin);
    return (lo.adjoint() - lo) / (2.0 * kI);
}

inline CMatrix spin_jz(const SpinBasis& spin) {
    const int n = spin.two_j();
    CMatrix m = CMatrix::Zero(n + 1, n + 1);
    for (int k = 0; k <= n; ++k) m(k, k) = spin.m(k);
    return m;
}

/// Ladder coupling factor sqrt((k+1)(n-k-1)) between |n,k> and |n,k+1>.
inline double ladder_factor(int manifold, int k) {
    return std::sqrt(static_cast<double>((k + 1) * (manifold - k - 1)));
}

// --- Drive and field parameters -------------------------------------------

/// Drive amplitudes and detunings, all in rad/us.
struct DriveParameters {
    double omega_rf = mhz_to_angular(0.152);         ///< Rabi frequency of the QZD RF
    double omega_rf_strong = mhz_to_angular(6.3 / std::sqrt(51.0));  ///< rotation RF
    double omega_mw = mhz_to_angular(3.4);           ///< Zeno microwave Rabi frequency
    double detuning = mhz_to_angular(0.150);         ///< w_a - w_rf
    double mw_detuning = 0.0;                        ///< w_mw - (E(n_e,k_z) - E(n_g,k_z))
    double sigma_omega_a = mhz_to_angular(0.174);    ///< spread of w_a over the sample
    bool sigma_is_fwhm = true;                       ///< sigma_omega_a is a FWHM rather than an rms

    double sigma_rms() const {
        return sigma_is_fwhm ? sigma_omega_a / (2.0 * std::sqrt(2.0 * std::log(2.0))) : sigma_omega_a;
    }

    void validate(bool zeno) const {
        if (omega_rf < 0 || omega_rf_strong < 0 || omega_mw < 0 || sigma_omega_a < 0) {
            throw Error("drive magnitudes must be non-negative");
        }
        if (zeno && !(omega_mw > 0)) throw Error("Zeno scenarios need omega_mw > 0");
    }
};

/// Static field and the Stark structure it produces.
class FieldModel {
public:
    explicit FieldModel(double field_v_per_cm = 2.35, bool second_order = true)
        : field_(field_v_per_cm), second_order_(second_order) {
        if (!(field_v_per_cm >= 0.0)) throw Error("field must be non-negative");
    }

    /// Field at which the first n_e ladder step equals `stark_angular`.
    static FieldModel from_stark_frequency(double stark_angular, bool second_order = true) {
        if (!(stark_angular > 0.0)) throw Error("Stark frequency must be positive");
        double lo = 0.0;
        double hi = 1.0;
        while (FieldModel(hi, second_order).stark_frequency() < stark_angular) hi *= 2.0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            (FieldModel(mid, second_order).stark_frequency() < stark_angular ? lo : hi) = mid;
        }
        return FieldModel(0.5 * (lo + hi), second_order);
    }

    double field() const { return field_; }
    bool second_order() const { return second_order_; }

    FieldModel scaled(double factor) const { return FieldModel(field_ * factor, second_order_); }

    double field_atomic() const { return field_ / units::kFieldAtomicVPerCm; }

    /// (3/2) n e a0 F / hbar for manifold n, rad/us.
    double linear_step(int manifold) const {
        return 1.5 * manifold * field_atomic() * units::kHartreeAngular;
    }

    /// Stark shift of |n, k>, rad/us.
    double energy(const LadderLevel& level) const {
        if (!level.valid()) throw Error("unknown manifold or step in " + level.label());
        const double n = level.manifold;
        const double k = level.step;
        const double m = n - 1.0 - k;
        const double f = field_atomic();
        double e = -1.5 * n * k * f;
        if (second_order_) e -= (n * n * n * n / 16.0) * (17.0 * n * n - 3.0 * k * k - 9.0 * m * m + 19.0) * f * f;
        return e * units::kHartreeAngular;
    }

    /// w_a: frequency of the first step of the n_e ladder.
    double stark_frequency() const { return energy({kManifoldE, 0}) - energy({kManifoldE, 1}); }

    /// Delta: shift between probe transitions |n_e,k> -> |n_f,k> of adjacent k.
    double manifold_step_difference() const {
        const double nu0 = energy({kManifoldF, 0}) - energy({kManifoldE, 0});
        const double nu1 = energy({kManifoldF, 1}) - energy({kManifoldE, 1});
        return nu0 - nu1;
    }

    /// Transition frequency |n_g,k> -> |n_e,k> addressed by the Zeno microwave.
    double zeno_transition(int k) const { return energy({kManifoldE, k}) - energy({kManifoldG, k}); }

private:
    double field_;
    bool second_order_;
};

inline RVector stark_energies(const FieldModel& model, const std::vector<LadderLevel>& levels) {
    RVector e(static_cast<Eigen::Index>(levels.size()));
    for (std::size_t i = 0; i < levels.size(); ++i) e(static_cast<Eigen::Index>(i)) = model.energy(levels[i]);
    return e;
}

/// Carrier frequencies defining the interaction picture (see file comment).
struct DriveFrame {
    double rf_frequency = 0.0;
    double mw_frequency = 0.0;
    double reference_energy = 0.0;
};

inline DriveFrame make_frame(const DriveParameters& params, const FieldModel& nominal, int k_z) {
    DriveFrame f;
    f.rf_frequency = nominal.stark_frequency() - params.detuning;
    f.mw_frequency = nominal.zeno_transition(k_z) + params.mw_detuning;
    f.reference_energy = nominal.energy({kManifoldE, 0});
    return f;
}

/// Diagonal entry of |level> in the interaction picture.
inline double frame_energy(const DriveFrame& frame, const FieldModel& atom, const LadderLevel& level) {
    double rotating = frame.reference_energy - level.step * frame.rf_frequency;
    if (level.manifold == kManifoldG) rotating -= frame.mw_frequency;
    else if (level.manifold != kManifoldE) throw Error("only n_e and n_g levels enter the dynamics");
    return atom.energy(level) - rotating;
}

// --- Operators --------------------------------------------------------------

/// (Omega/2)(i e^{-i phi} L + h.c.) with L the ladder lowering of every manifold in `basis`.
/// phi = pi/2 gives real positive matrix elements; on the spin ladder this is
/// Omega (J_x sin phi + J_y cos phi).
inline CMatrix rf_drive_matrix(const Basis& basis, double omega, double azimuth) {
    const auto d = static_cast<Eigen::Index>(basis.size());
    CMatrix h = CMatrix::Zero(d, d);
    const complex phase = kI * std::polar(1.0, -azimuth);
    for (std::size_t i = 0; i < basis.size(); ++i) {
        const auto& lv = basis[i];
        auto next = basis.find({lv.manifold, lv.step + 1});
        if (!next) continue;
        const double n_eff = lv.manifold;
        const complex el = 0.5 * omega * ladder_factor(static_cast<int>(n_eff), lv.step) * phase;
        const auto r = static_cast<Eigen::Index>(*next);
        const auto c = static_cast<Eigen::Index>(i);
        h(r, c) += el;
        h(c, r) += std::conj(el);
    }
    return h;
}

/// RF coupling on the spin ladder: (Omega/2) sqrt((k+1)(2J-k)) between k and k+1.
/// For J = 25 this is exactly the n_e = 51 ladder factor, i.e. Omega J_x.
inline Operator rf_coupling_operator(const SpinBasis& spin, double omega_rf) {
    if (omega_rf < 0) throw Error("omega_rf must be non-negative");
    return {spin.basis(), omega_rf * spin_jx(spin), OperatorKind::hermitian};
}

/// Zeno microwave coupling (Omega_mw/2)(|n_g,k><n_e,k| + h.c.) for every k present in `basis`.
inline Operator zeno_coupling_operator(const Basis& basis, int k_z, double omega_mw) {
    if (k_z < 0 || k_z >= kManifoldG) throw Error("k_z outside the ladder");
    if (omega_mw < 0) throw Error("omega_mw must be non-negative");
    const auto d = static_cast<Eigen::Index>(basis.size());
    CMatrix h = CMatrix::Zero(d, d);
    for (std::size_t i = 0; i < basis.size(); ++i) {
        if (basis[i].manifold != kManifoldE) continue;
        auto g = basis.find({kManifoldG, basis[i].step});
        if (!g) continue;
        h(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(*g)) = 0.5 * omega_mw;
        h(static_cast<Eigen::Index>(*g), static_cast<Eigen::Index>(i)) = 0.5 * omega_mw;
    }
    return {basis, h, OperatorKind::hermitian};
}

inline Operator zeno_coupling_operator(int k_z, double omega_mw) {
    return zeno_coupling_operator(zeno_basis(), k_z, omega_mw);
}

/// Which drives act during a segment.
struct DriveTerms {
    double rf_rabi = 0.0;
    double rf_azimuth = kPi / 2;
    bool include_zeno = true;
    double mw_rabi = 0.0;
};

/// Static interaction-picture Hamiltonian on an arbitrary subset of n_e / n_g levels.
inline Operator ladder_hamiltonian(const Basis& basis, const DriveFrame& frame, const FieldModel& atom,
                                   const DriveTerms& terms) {
    const auto d = static_cast<Eigen::Index>(basis.size());
    CMatrix h = CMatrix::Zero(d, d);
    for (std::size_t i = 0; i < basis.size(); ++i) {
        const auto idx = static_cast<Eigen::Index>(i);
        h(idx, idx) = frame_energy(frame, atom, basis[i]);
    }
    if (terms.rf_rabi != 0.0) h += rf_drive_matrix(basis, terms.rf_rabi, terms.rf_azimuth);
    if (terms.include_zeno && terms.mw_rabi != 0.0) {
        for (std::size_t i = 0; i < basis.size(); ++i) {
            if (basis[i].manifold != kManifoldE) continue;
            auto g = basis.find({kManifoldG, basis[i].step});
            if (!g) continue;
            h(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(*g)) += 0.5 * terms.mw_rabi;
            h(static_cast<Eigen::Index>(*g), static_cast<Eigen::Index>(i)) += 0.5 * terms.mw_rabi;
        }
    }
    return {basis, h, OperatorKind::hermitian};
}

/// QZD Hamiltonian on the n_e + n_g levels: Stark detunings in the drive frame,
/// the RF coupling of both ladders, and the Zeno coupling when requested.
/// `atom` is the field seen by the atom; the frame always uses `nominal`.
inline Operator total_hamiltonian(const DriveParameters& params, const FieldModel& nominal, const FieldModel& atom,
                                  int k_z, bool include_zeno) {
    params.validate(include_zeno);
    const DriveFrame frame = make_frame(params, nominal, k_z);
    return ladder_hamiltonian(zeno_basis(), frame, atom,
                              {params.omega_rf, kPi / 2, include_zeno, params.omega_mw});
}

inline Operator total_hamiltonian(const DriveParameters& params, const FieldModel& model, int k_z,
                                  bool include_zeno) {
    return total_hamiltonian(params, model, model, k_z, include_zeno);
}

/// Meridian rotation R(theta, phi) = exp(-i theta (J_x sin phi + J_y cos phi)).
/// R(theta, phi)|J,J> is the coherent state with amplitudes ~ exp(-i k phi).
inline Operator rotation_operator(const SpinBasis& spin, double theta, double phi) {
    if (!(theta >= 0.0 && theta <= kPi)) throw Error("rotation angle outside [0, pi]");
    const CMatrix gen = std::sin(phi) * spin_jx(spin) + std::cos(phi) * spin_jy(spin);
    Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (gen + gen.adjoint()));
    const CVector phases = (-kI * theta * es.eigenvalues().cast<complex>()).array().exp();
    CMatrix u = es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
    return {spin.basis(), std::move(u), OperatorKind::unitary};
}

struct DressedPair {
    StateVector plus;
    StateVector minus;
    double splitting = 0.0;
};

/// Eigenstates of the resonant (or detuned) two-level block {|n_e,k_z>, |n_g,k_z>}.
/// At resonance |+-> = (|n_e,k_z> +- |n_g,k_z>)/sqrt(2), split by Omega_mw.
inline DressedPair dressed_pair(int k_z, double omega_mw, double detuning = 0.0) {
    if (!(omega_mw > 0)) throw Error("dressed pair needs omega_mw > 0");
    const Basis basis = zeno_basis();
    const auto e = static_cast<Eigen::Index>(basis.index_of(make_level(kManifoldE, k_z)));
    const auto g = static_cast<Eigen::Index>(basis.index_of(make_level(kManifoldG, k_z)));
    // H = [[detuning/2, W/2], [W/2, -detuning/2]] on (e, g)
    Eigen::Matrix2d block;
    block << 0.5 * detuning, 0.5 * omega_mw, 0.5 * omega_mw, -0.5 * detuning;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(block);
    auto embed = [&](Eigen::Vector2d v) {
        if (v(0) < 0) v = -v;
        CVector a = CVector::Zero(static_cast<Eigen::Index>(basis.size()));
        a(e) = v(0);
        a(g) = v(1);
        return StateVector(basis, a);
    };
    return {embed(es.eigenvectors().col(1)), embed(es.eigenvectors().col(0)),
            es.eigenvalues()(1) - es.eigenvalues()(0)};
}

}  // namespace qzd
