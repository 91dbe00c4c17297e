#pragma once

// Level labels, state vectors and density matrices on the Rydberg spin ladder.
//
// The spin J = 25 lives on the 51 ladder levels |n_e, k>, k = 0..50, of the
// n_e = 51 Stark manifold, with |n_e, k> <-> |J, J - k>. Simulations of the
// Zeno dynamics additionally carry the 50 ladder levels of the n_g = 50
// manifold. Coherent states use the phase convention
//
//     c_k = sqrt(C(2J, k)) cos^(2J-k)(theta/2) sin^k(theta/2) exp(-i k phi),
//
// which every rotation and phase-space routine in this library follows.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "json.hpp"
#include "qzd/common.hpp"

namespace qzd {

inline constexpr int kManifoldG = 50;
inline constexpr int kManifoldE = 51;
inline constexpr int kManifoldF = 52;

struct LadderLevel {
    int manifold = kManifoldE;
    int step = 0;

    friend bool operator==(const LadderLevel&, const LadderLevel&) = default;

    bool valid() const {
        const bool known = manifold == kManifoldG || manifold == kManifoldE || manifold == kManifoldF;
        return known && step >= 0 && step <= manifold - 1;
    }

    std::string label() const { return std::to_string(manifold) + ":" + std::to_string(step); }
};

inline LadderLevel make_level(int manifold, int step) {
    LadderLevel level{manifold, step};
    if (!level.valid()) {
        throw Error("invalid ladder level n=" + std::to_string(manifold) + " k=" + std::to_string(step));
    }
    return level;
}

/// Ordered list of ladder levels spanning a state space.
class Basis {
public:
    Basis() = default;
    explicit Basis(std::vector<LadderLevel> levels) : levels_(std::move(levels)) {
        for (std::size_t i = 0; i < levels_.size(); ++i) {
            if (!levels_[i].valid()) throw Error("invalid ladder level " + levels_[i].label());
            for (std::size_t j = 0; j < i; ++j) {
                if (levels_[j] == levels_[i]) throw Error("duplicate ladder level " + levels_[i].label());
            }
        }
    }

    std::size_t size() const { return levels_.size(); }
    const LadderLevel& operator[](std::size_t i) const { return levels_[i]; }
    const std::vector<LadderLevel>& levels() const { return levels_; }

    std::optional<std::size_t> find(const LadderLevel& level) const {
        auto it = std::find(levels_.begin(), levels_.end(), level);
        if (it == levels_.end()) return std::nullopt;
        return static_cast<std::size_t>(it - levels_.begin());
    }

    std::size_t index_of(const LadderLevel& level) const {
        if (auto i = find(level)) return *i;
        throw Error("level " + level.label() + " not in basis");
    }

    friend bool operator==(const Basis&, const Basis&) = default;

private:
    std::vector<LadderLevel> levels_;
};

/// Angular momentum J realized on the first 2J+1 levels of the n_e ladder.
class SpinBasis {
public:
    explicit SpinBasis(int two_j = 50) : two_j_(two_j) {
        if (two_j < 0 || two_j > kManifoldE - 1) {
            throw Error("spin 2J=" + std::to_string(two_j) + " does not fit on the n_e ladder");
        }
    }

    int two_j() const { return two_j_; }
    double j() const { return 0.5 * two_j_; }
    std::size_t dimension() const { return static_cast<std::size_t>(two_j_) + 1; }

    /// |n_e, k> for k = 0..2J.
    LadderLevel level(int k) const {
        if (k < 0 || k > two_j_) throw Error("spin ladder step out of range: " + std::to_string(k));
        return LadderLevel{kManifoldE, k};
    }

    /// Inverse correspondence; returns the step k or nullopt if the level is not a spin state.
    std::optional<int> step_of(const LadderLevel& level) const {
        if (level.manifold != kManifoldE || level.step < 0 || level.step > two_j_) return std::nullopt;
        return level.step;
    }

    /// Magnetic quantum number m = J - k.
    double m(int k) const { return j() - k; }

    Basis basis() const {
        std::vector<LadderLevel> levels;
        levels.reserve(dimension());
        for (int k = 0; k <= two_j_; ++k) levels.push_back(level(k));
        return Basis(std::move(levels));
    }

    friend bool operator==(const SpinBasis&, const SpinBasis&) = default;

private:
    int two_j_;
};

/// n_e ladder (k = 0..50) followed by the n_g ladder (k = 0..49).
inline Basis zeno_basis() {
    std::vector<LadderLevel> levels;
    for (int k = 0; k < kManifoldE; ++k) levels.push_back({kManifoldE, k});
    for (int k = 0; k < kManifoldG; ++k) levels.push_back({kManifoldG, k});
    return Basis(std::move(levels));
}

struct StateVector {
    Basis basis;
    CVector amplitudes;

    StateVector() = default;
    StateVector(Basis b, CVector a) : basis(std::move(b)), amplitudes(std::move(a)) {
        if (static_cast<std::size_t>(amplitudes.size()) != basis.size()) {
            throw Error("amplitude count does not match basis size");
        }
    }

    static StateVector basis_state(const Basis& basis, const LadderLevel& level) {
        CVector a = CVector::Zero(static_cast<Eigen::Index>(basis.size()));
        a(static_cast<Eigen::Index>(basis.index_of(level))) = 1.0;
        return {basis, std::move(a)};
    }

    std::size_t size() const { return basis.size(); }
    double norm() const { return amplitudes.norm(); }
    RVector populations() const { return amplitudes.cwiseAbs2(); }

    double population(const LadderLevel& level) const {
        auto i = basis.find(level);
        return i ? std::norm(amplitudes(static_cast<Eigen::Index>(*i))) : 0.0;
    }

    StateVector normalized() const {
        const double n = norm();
        if (n == 0.0) throw Error("cannot normalize the zero vector");
        return {basis, amplitudes / n};
    }

    complex overlap(const StateVector& other) const {
        if (!(basis == other.basis)) throw Error("overlap between states on different bases");
        return amplitudes.dot(other.amplitudes);
    }
};

/// Hermitian, positive, unit-trace operator on a ladder basis.
class DensityMatrix {
public:
    DensityMatrix() = default;

    /// Validates the matrix. Hermiticity defects up to the matrix tolerance are
    /// symmetrized away; a trace off by up to the tolerance is renormalized.
    static DensityMatrix from_matrix(Basis basis, CMatrix m) {
        check_shape(basis, m);
        const double defect = hermiticity_defect(m);
        if (defect > kMatrixTolerance) {
            throw InvariantViolation("density matrix hermiticity", "defect " + std::to_string(defect));
        }
        const complex tr = m.trace();
        if (std::abs(tr - 1.0) > kMatrixTolerance) {
            throw InvariantViolation("density matrix trace", "trace " + std::to_string(tr.real()));
        }
        return finish(std::move(basis), std::move(m));
    }

    /// Normalizes by the trace, which must be positive.
    static DensityMatrix from_unnormalized(Basis basis, CMatrix m) {
        check_shape(basis, m);
        const double scale = std::max(1.0, max_abs(m));
        const double defect = hermiticity_defect(m);
        if (defect > kMatrixTolerance * scale) {
            throw InvariantViolation("density matrix hermiticity", "defect " + std::to_string(defect));
        }
        const double tr = m.trace().real();
        if (!(tr > 0.0)) throw Error("density matrix has non-positive trace");
        m /= tr;
        return finish(std::move(basis), std::move(m));
    }

    static DensityMatrix pure(const StateVector& psi) {
        const StateVector u = psi.normalized();
        return finish(u.basis, u.amplitudes * u.amplitudes.adjoint());
    }

    static DensityMatrix maximally_mixed(const Basis& basis) {
        const auto d = static_cast<Eigen::Index>(basis.size());
        if (d == 0) throw Error("empty basis");
        return finish(basis, CMatrix::Identity(d, d) / static_cast<double>(d));
    }

    const Basis& basis() const { return basis_; }
    const CMatrix& matrix() const { return matrix_; }
    std::size_t dimension() const { return basis_.size(); }

    double population(const LadderLevel& level) const {
        auto i = basis_.find(level);
        if (!i) return 0.0;
        const auto idx = static_cast<Eigen::Index>(*i);
        return matrix_(idx, idx).real();
    }

    RVector populations() const { return matrix_.diagonal().real(); }

    RVector eigenvalues() const {
        Eigen::SelfAdjointEigenSolver<CMatrix> es(matrix_, Eigen::EigenvaluesOnly);
        return es.eigenvalues();
    }

    /// Unitary conjugation U rho U^dagger. The result is re-symmetrized.
    DensityMatrix transformed(const CMatrix& u) const {
        if (u.rows() != matrix_.rows() || u.cols() != matrix_.cols()) throw Error("dimension mismatch");
        return finish(basis_, u * matrix_ * u.adjoint());
    }

private:
    DensityMatrix(Basis basis, CMatrix m) : basis_(std::move(basis)), matrix_(std::move(m)) {}

    static void check_shape(const Basis& basis, const CMatrix& m) {
        if (m.rows() != m.cols()) throw Error("density matrix must be square");
        if (static_cast<std::size_t>(m.rows()) != basis.size()) {
            throw Error("density matrix dimension does not match basis");
        }
    }

    static DensityMatrix finish(Basis basis, CMatrix m) {
        CMatrix h = 0.5 * (m + m.adjoint());
        h /= h.trace().real();
        Eigen::SelfAdjointEigenSolver<CMatrix> es(h, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().size() > 0 && es.eigenvalues().minCoeff() < -1e-9) {
            throw InvariantViolation("density matrix positivity",
                                     "eigenvalue " + std::to_string(es.eigenvalues().minCoeff()));
        }
        return DensityMatrix(std::move(basis), std::move(h));
    }

    Basis basis_;
    CMatrix matrix_;
};

/// |n_e, 0> = |J, J>.
inline StateVector circular_state(const SpinBasis& spin) {
    return StateVector::basis_state(spin.basis(), spin.level(0));
}

inline double log_binomial(int n, int k) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

inline StateVector spin_coherent_state(const SpinBasis& spin, double theta, double phi) {
    if (!(theta >= 0.0 && theta <= kPi)) throw Error("coherent state polar angle outside [0, pi]");
    const int n = spin.two_j();
    const double c = std::cos(0.5 * theta);
    const double s = std::sin(0.5 * theta);
    CVector a(n + 1);
    for (int k = 0; k <= n; ++k) {
        const double mag = std::sqrt(std::exp(log_binomial(n, k))) * std::pow(c, n - k) * std::pow(s, k);
        a(k) = mag * std::polar(1.0, -k * phi);
    }
    return {spin.basis(), a};
}

/// Tr(rho^2).
inline double purity(const DensityMatrix& rho) { return rho.matrix().squaredNorm(); }

inline double purity(const CMatrix& m) {
    if (m.rows() != m.cols()) throw Error("purity of a non-square matrix");
    if (hermiticity_defect(m) > kMatrixTolerance) throw Error("purity of a non-Hermitian matrix");
    return m.squaredNorm();
}

namespace detail {

// Eigenvalues at rounding level are zeroed before the square root, which would
// otherwise lift 1e-17 noise to 3e-9 and spoil rank-deficient results.
inline RVector clipped_sqrt(const RVector& eigenvalues) {
    const double cut = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, eigenvalues.cwiseAbs().maxCoeff());
    return eigenvalues.unaryExpr([cut](double v) { return v > cut ? std::sqrt(v) : 0.0; });
}

inline CMatrix psd_sqrt(const CMatrix& m) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(m);
    return es.eigenvectors() * clipped_sqrt(es.eigenvalues()).asDiagonal() * es.eigenvectors().adjoint();
}

}  // namespace detail

/// Uhlmann fidelity Tr^2 sqrt(sqrt(rho) sigma sqrt(rho)).
inline double fidelity(const DensityMatrix& rho, const DensityMatrix& sigma) {
    if (rho.dimension() != sigma.dimension()) throw Error("fidelity between matrices of different dimension");
    if (!(rho.basis() == sigma.basis())) throw Error("fidelity between matrices on different bases");
    const CMatrix root = detail::psd_sqrt(rho.matrix());
    CMatrix inner = root * sigma.matrix() * root;
    inner = 0.5 * (inner + inner.adjoint());
    Eigen::SelfAdjointEigenSolver<CMatrix> es(inner, Eigen::EigenvaluesOnly);
    const double tr = detail::clipped_sqrt(es.eigenvalues()).sum();
    return std::clamp(tr * tr, 0.0, 1.0);
}

struct ProjectionOptions {
    /// Fraction of the population expected to remain inside the spin ladder.
    double leak_coefficient = 0.91;
    /// When set, slot k_z of the ladder is the dressed state (|n_e,k_z> + |n_g,k_z>)/sqrt(2).
    std::optional<int> dressed_step;
    SpinBasis spin{};
};

struct SpinProjection {
    DensityMatrix rho;             ///< unit-trace spin-ladder state
    double retained_trace = 0.0;   ///< trace of the bare projection
    double scaled_trace = 0.0;     ///< retained_trace / leak_coefficient
};

/// Columns are the spin-ladder vectors expressed in `basis`.
inline CMatrix spin_ladder_embedding(const Basis& basis, const SpinBasis& spin, std::optional<int> dressed_step) {
    const auto d = static_cast<Eigen::Index>(basis.size());
    const auto n = static_cast<Eigen::Index>(spin.dimension());
    CMatrix p = CMatrix::Zero(d, n);
    for (int k = 0; k < static_cast<int>(n); ++k) {
        const auto e = basis.find(spin.level(k));
        if (dressed_step && *dressed_step == k) {
            const auto g = basis.find(LadderLevel{kManifoldG, k});
            const double r = 1.0 / std::sqrt(2.0);
            if (e) p(static_cast<Eigen::Index>(*e), k) = r;
            if (g) p(static_cast<Eigen::Index>(*g), k) = r;
        } else if (e) {
            p(static_cast<Eigen::Index>(*e), k) = 1.0;
        }
    }
    return p;
}

inline SpinProjection project_to_spin_ladder(const DensityMatrix& rho_t, const ProjectionOptions& opts = {}) {
    if (!(opts.leak_coefficient > 0.0 && opts.leak_coefficient <= 1.0)) {
        throw Error("leak coefficient must lie in (0, 1]");
    }
    const CMatrix p = spin_ladder_embedding(rho_t.basis(), opts.spin, opts.dressed_step);
    const CMatrix block = p.adjoint() * rho_t.matrix() * p;
    const double retained = block.trace().real();
    if (!(retained > 1e-12)) throw Error("zero population in the spin ladder");
    SpinProjection out{DensityMatrix::from_unnormalized(opts.spin.basis(), block), retained,
                       retained / opts.leak_coefficient};
    return out;
}

/// Population of |-> = (|n_e,k_z> - |n_g,k_z>)/sqrt(2).
inline double minus_state_population(const DensityMatrix& rho_t, int k_z) {
    const auto e = rho_t.basis().find(LadderLevel{kManifoldE, k_z});
    const auto g = rho_t.basis().find(LadderLevel{kManifoldG, k_z});
    if (!e || !g) throw Error("basis lacks the Zeno-addressed pair");
    CVector v = CVector::Zero(static_cast<Eigen::Index>(rho_t.dimension()));
    v(static_cast<Eigen::Index>(*e)) = 1.0 / std::sqrt(2.0);
    v(static_cast<Eigen::Index>(*g)) = -1.0 / std::sqrt(2.0);
    return (v.adjoint() * rho_t.matrix() * v)(0, 0).real();
}

// JSON: {"basis": [{"manifold": n, "step": k}, ...], "ordering": ..., "real": [[...]], "imag": [[...]]}
// Row i / column j refer to basis entry i / j.

inline nlohmann::json basis_to_json(const Basis& basis) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& l : basis.levels()) out.push_back({{"manifold", l.manifold}, {"step", l.step}});
    return out;
}

inline Basis basis_from_json(const nlohmann::json& j) {
    std::vector<LadderLevel> levels;
    for (const auto& e : j) levels.push_back({e.at("manifold").get<int>(), e.at("step").get<int>()});
    return Basis(std::move(levels));
}

inline nlohmann::json matrix_to_json(const Basis& basis, const CMatrix& m) {
    nlohmann::json re = nlohmann::json::array();
    nlohmann::json im = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json rr = nlohmann::json::array();
        nlohmann::json ri = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            rr.push_back(m(i, j).real());
            ri.push_back(m(i, j).imag());
        }
        re.push_back(std::move(rr));
        im.push_back(std::move(ri));
    }
    return {{"basis", basis_to_json(basis)},
            {"ordering", "row-major; row and column i follow basis[i]"},
            {"real", std::move(re)},
            {"imag", std::move(im)}};
}

inline std::pair<Basis, CMatrix> matrix_from_json(const nlohmann::json& j) {
    Basis basis = basis_from_json(j.at("basis"));
    const auto& re = j.at("real");
    const auto& im = j.at("imag");
    const auto d = static_cast<Eigen::Index>(basis.size());
    if (re.size() != basis.size() || im.size() != basis.size()) throw Error("matrix rows do not match basis");
    CMatrix m(d, d);
    for (Eigen::Index r = 0; r < d; ++r) {
        const auto& rr = re.at(static_cast<std::size_t>(r));
        const auto& ri = im.at(static_cast<std::size_t>(r));
        if (rr.size() != basis.size() || ri.size() != basis.size()) throw Error("matrix row has wrong length");
        for (Eigen::Index c = 0; c < d; ++c) {
            m(r, c) = complex(rr.at(static_cast<std::size_t>(c)).get<double>(),
                              ri.at(static_cast<std::size_t>(c)).get<double>());
        }
    }
    return {std::move(basis), std::move(m)};
}

inline nlohmann::json to_json(const DensityMatrix& rho) { return matrix_to_json(rho.basis(), rho.matrix()); }

inline DensityMatrix density_matrix_from_json(const nlohmann::json& j) {
    auto [basis, m] = matrix_from_json(j);
    return DensityMatrix::from_matrix(std::move(basis), std::move(m));
}

}  // namespace qzd
