#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "qzd/evolution.hpp"
#include "qzd/operators.hpp"

using namespace qzd;

namespace {

// J_x from <j, m+1| J_+ |j, m> = sqrt(j(j+1) - m(m+1)), rows ordered by k = j - m
CMatrix textbook_jx(double j) {
    const int d = static_cast<int>(2 * j + 1);
    CMatrix jp = CMatrix::Zero(d, d);
    for (int k = 1; k < d; ++k) {
        const double m = j - k;   // column state |j, m>, raised to row k - 1
        jp(k - 1, k) = std::sqrt(j * (j + 1) - m * (m + 1));
    }
    return 0.5 * (jp + jp.adjoint());
}

ZenoSetup experiment_setup(int k_z, double omega_mw_mhz) {
    ZenoSetup s;
    s.nominal = FieldModel::from_stark_frequency(mhz_to_angular(230.15));
    s.k_z = k_z;
    s.params.omega_mw = mhz_to_angular(omega_mw_mhz);
    return s;
}

}  // namespace

TEST(RfCoupling, MatrixElements) {
    const double omega = mhz_to_angular(0.152);
    const Operator v = rf_coupling_operator(SpinBasis(), omega);
    EXPECT_EQ(v.kind, OperatorKind::hermitian);
    EXPECT_NEAR(v.matrix(0, 1).real(), 0.5 * omega * std::sqrt(50.0), 1e-12);
    EXPECT_NEAR(v.matrix(49, 50).real(), 0.5 * omega * std::sqrt(50.0), 1e-12);
    EXPECT_NEAR(v.matrix(24, 25).real(), 0.5 * omega * std::sqrt(25.0 * 26.0), 1e-12);
    for (int k = 0; k < 50; ++k) EXPECT_NEAR(v.matrix(k, k + 1).real(), 0.5 * omega * ladder_factor(51, k), 1e-12);
    EXPECT_THROW(rf_coupling_operator(SpinBasis(), -1.0), Error);
}

TEST(RfCoupling, EqualsOmegaJx) {
    const double omega = 0.9;
    EXPECT_LT(max_abs(rf_coupling_operator(SpinBasis(), omega).matrix - omega * textbook_jx(25.0)), 1e-12);
    // the ladder drive at azimuth pi/2 is the same operator
    EXPECT_LT(max_abs(rf_drive_matrix(SpinBasis().basis(), omega, kPi / 2) - omega * textbook_jx(25.0)), 1e-12);
    // J_y companion: azimuth 0 gives Omega J_y
    const CMatrix lo = spin_lowering(SpinBasis());
    const CMatrix jy = (lo.adjoint() - lo) / (2.0 * kI);
    EXPECT_LT(max_abs(rf_drive_matrix(SpinBasis().basis(), omega, 0.0) - omega * jy), 1e-12);
}

TEST(AngularMomentum, Commutators) {
    const SpinBasis spin;
    const CMatrix jx = spin_jx(spin);
    const CMatrix jy = spin_jy(spin);
    const CMatrix jz = spin_jz(spin);
    EXPECT_LT(max_abs(jx * jy - jy * jx - kI * jz), 1e-10);
    const CMatrix casimir = jx * jx + jy * jy + jz * jz;
    EXPECT_LT(max_abs(casimir - 25.0 * 26.0 * CMatrix::Identity(51, 51)), 1e-9);
}

TEST(StarkEnergies, FirstOrderLadderIsUniform) {
    const FieldModel linear(2.35, false);
    const double wa = linear.stark_frequency();
    for (int k = 0; k < 50; ++k) {
        EXPECT_NEAR(linear.energy({kManifoldE, k}) - linear.energy({kManifoldE, k + 1}), wa, 1e-9 * wa);
    }
    // (3/2) n_e e a0 F / hbar at 2.35 V/cm against the quoted 230.15 MHz
    EXPECT_NEAR(angular_to_mhz(linear.linear_step(51)), 230.15, 230.15e-3);
    const RVector e = stark_energies(linear, {{kManifoldE, 0}, {kManifoldE, 3}});
    EXPECT_NEAR(e(0) - e(1), 3 * wa, 1e-9 * wa);
    EXPECT_THROW(linear.energy({53, 0}), Error);
}

TEST(StarkEnergies, ManifoldStepDifference) {
    const FieldModel f = FieldModel::from_stark_frequency(mhz_to_angular(230.15));
    EXPECT_NEAR(angular_to_mhz(f.manifold_step_difference()), 4.6, 0.05);
    // probe transitions are detuned by (k - k_p) Delta, up to the k^2 part of the
    // quadratic Stark shift, which differs between n_f and n_e
    auto probe = [&](int k) { return f.energy({kManifoldF, k}) - f.energy({kManifoldE, k}); };
    const double delta = f.manifold_step_difference();
    EXPECT_NEAR(probe(0) - probe(1), delta, 1e-9 * delta);
    const double curvature = probe(2) - 2 * probe(1) + probe(0);
    for (int k = 1; k < 5; ++k) EXPECT_NEAR(probe(k + 1) - 2 * probe(k) + probe(k - 1), curvature, 1e-9 * delta);
    for (int k = 0; k < 6; ++k) EXPECT_NEAR(probe(0) - probe(k), k * delta, 1e-3 * k * delta);
}

TEST(StarkEnergies, StarkFrequencyIncreasesWithField) {
    double last = 0.0;
    for (double f = 0.5; f <= 5.0; f += 0.5) {
        const double wa = FieldModel(f).stark_frequency();
        EXPECT_GT(wa, last);
        last = wa;
    }
    const FieldModel inverted = FieldModel::from_stark_frequency(mhz_to_angular(230.15));
    EXPECT_NEAR(angular_to_mhz(inverted.stark_frequency()), 230.15, 1e-9);
    EXPECT_NEAR(inverted.field(), 2.35, 0.01);
}

TEST(StarkEnergies, SwitchOffFieldFactors) {
    // The switch-off lowers F until the (fixed) microwave sits halfway between
    // the k_z and k_z + 1 Zeno transitions.
    const FieldModel f = FieldModel::from_stark_frequency(mhz_to_angular(230.15));
    for (auto [k_z, expected] : {std::pair{4, 0.90}, std::pair{5, 0.92}}) {
        const double mw = f.zeno_transition(k_z);
        auto mismatch = [&](double x) {
            const FieldModel g = f.scaled(x);
            return 0.5 * (g.zeno_transition(k_z) + g.zeno_transition(k_z + 1)) - mw;
        };
        double lo = 0.5;
        double hi = 1.0;
        const bool rising = mismatch(hi) > mismatch(lo);
        for (int i = 0; i < 100; ++i) {
            const double mid = 0.5 * (lo + hi);
            ((mismatch(mid) > 0) == rising ? hi : lo) = mid;
        }
        EXPECT_NEAR(0.5 * (lo + hi), expected, 0.01) << "k_z = " << k_z;
    }
}

TEST(ZenoCoupling, ElementsAndZeroAmplitude) {
    const double w = mhz_to_angular(3.4);
    const Operator z = zeno_coupling_operator(5, w);
    const Basis b = zeno_basis();
    for (int k = 0; k < 50; ++k) {
        EXPECT_DOUBLE_EQ(z.matrix(b.index_of({kManifoldG, k}), b.index_of({kManifoldE, k})).real(), 0.5 * w);
    }
    EXPECT_EQ(max_abs(zeno_coupling_operator(5, 0.0).matrix), 0.0);
    EXPECT_THROW(zeno_coupling_operator(50, w), Error);
}

TEST(TotalHamiltonian, ReducesToRfCouplingWithoutZeno) {
    ZenoSetup s;
    s.nominal = FieldModel(2.35, false);
    s.params.detuning = 0.0;
    const Operator h = total_hamiltonian(s.params, s.nominal, 4, false);
    EXPECT_LT(hermiticity_defect(h.matrix), 1e-12);
    const CMatrix block = h.matrix.topLeftCorner(51, 51);
    const double scale = max_abs(block);
    EXPECT_LT(max_abs(block - rf_coupling_operator(SpinBasis(), s.params.omega_rf).matrix), 1e-9 * std::max(1.0, scale));
    EXPECT_EQ(max_abs(h.matrix.topRightCorner(51, 50)), 0.0);
}

TEST(TotalHamiltonian, HermitianWithExperimentalParameters) {
    const ZenoSetup s = experiment_setup(5, 3.4);
    const Operator h = total_hamiltonian(s.params, s.nominal, 5, true);
    EXPECT_LT(hermiticity_defect(h.matrix), 1e-12);
    // Zeno gap much wider than the ladder coupling sqrt(n_e) Omega_rf = 2 pi 1.09 MHz
    EXPECT_NEAR(angular_to_mhz(std::sqrt(51.0) * s.params.omega_rf), 1.09, 0.01);
    EXPECT_GT(s.params.omega_mw, 3.0 * std::sqrt(51.0) * s.params.omega_rf);
    ZenoSetup off = s;
    off.params.omega_mw = 0.0;
    EXPECT_THROW(total_hamiltonian(off.params, off.nominal, 5, true), Error);
}

TEST(TotalHamiltonian, DetunedPairSplitting) {
    // RF off: the k_z block is a two-level system split by sqrt(W^2 + d^2)
    for (double d_mhz : {0.0, 0.4, -1.3}) {
        ZenoSetup s = experiment_setup(4, 3.08);
        s.params.mw_detuning = mhz_to_angular(d_mhz);
        const Basis b = zeno_basis();
        const CMatrix h = ladder_hamiltonian(b, s.frame(), s.nominal, {0.0, 0.0, true, s.params.omega_mw}).matrix;
        const auto e = static_cast<Eigen::Index>(b.index_of({kManifoldE, 4}));
        const auto g = static_cast<Eigen::Index>(b.index_of({kManifoldG, 4}));
        Eigen::Matrix2cd pair;
        pair << h(e, e), h(e, g), h(g, e), h(g, g);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> es(pair);
        const double w = s.params.omega_mw;
        const double d = s.params.mw_detuning;
        EXPECT_NEAR(es.eigenvalues()(1) - es.eigenvalues()(0), std::hypot(w, d), 1e-9 * w);
        EXPECT_NEAR(dressed_pair(4, w, d).splitting, std::hypot(w, d), 1e-9 * w);
    }
}

TEST(RotationOperator, ConventionsAndUnitarity) {
    const SpinBasis spin;
    EXPECT_LT(max_abs(rotation_operator(spin, 0.0, 0.7).matrix - CMatrix::Identity(51, 51)), 1e-12);
    const CMatrix flip = rotation_operator(spin, kPi, 0.0).matrix;
    EXPECT_NEAR(std::abs(flip(50, 0)), 1.0, 1e-12);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 10; ++i) {
        const double theta = kPi * u(rng);
        const double phi = kTwoPi * u(rng);
        const CMatrix r = rotation_operator(spin, theta, phi).matrix;
        EXPECT_LT(unitarity_defect(r), 1e-12);
        const CVector image = r.col(0);
        EXPECT_LT((image - spin_coherent_state(spin, theta, phi).amplitudes).norm(), 1e-12);
        EXPECT_LT(max_abs(rotation_operator(spin, theta, phi + kPi).matrix - r.adjoint()), 1e-12);
    }
    EXPECT_THROW(rotation_operator(spin, 4.0, 0.0), Error);
}

TEST(DressedPair, ResonantStates) {
    const double w = mhz_to_angular(3.08);
    const DressedPair p = dressed_pair(4, w);
    const Basis b = zeno_basis();
    const StateVector e4 = StateVector::basis_state(b, {kManifoldE, 4});
    EXPECT_NEAR(std::abs(p.plus.overlap(e4)), 1.0 / std::sqrt(2.0), 1e-12);
    EXPECT_NEAR(std::abs(p.plus.overlap(p.minus)), 0.0, 1e-12);
    EXPECT_NEAR(p.splitting, w, 1e-12 * w);
    EXPECT_NEAR(p.plus.amplitudes(b.index_of({kManifoldG, 4})).real(), 1.0 / std::sqrt(2.0), 1e-12);
    EXPECT_NEAR(p.minus.amplitudes(b.index_of({kManifoldG, 4})).real(), -1.0 / std::sqrt(2.0), 1e-12);
    EXPECT_THROW(dressed_pair(4, 0.0), Error);
}

TEST(Operator, InvariantsAndJson) {
    const Basis b = SpinBasis(1).basis();
    CMatrix m(2, 2);
    m << 0, 1, 0, 0;
    EXPECT_THROW(Operator(b, m, OperatorKind::hermitian), InvariantViolation);
    EXPECT_THROW(Operator(b, m, OperatorKind::unitary), InvariantViolation);
    EXPECT_NO_THROW(Operator(b, m, OperatorKind::general));
    const auto j = to_json(Operator(b, CMatrix::Identity(2, 2), OperatorKind::unitary));
    EXPECT_EQ(j.at("kind"), "unitary");
    const auto [basis, back] = matrix_from_json(j);
    EXPECT_TRUE(basis == b);
    EXPECT_EQ(back, CMatrix::Identity(2, 2));
}
