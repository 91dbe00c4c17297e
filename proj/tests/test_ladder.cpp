#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "qzd/ladder.hpp"

using namespace qzd;

namespace {

// C(n, k) p^k (1-p)^(n-k) by Pascal's rule in long double
long double binomial_law(int n, int k, long double p) {
    std::vector<long double> row{1.0L};
    for (int i = 1; i <= n; ++i) {
        std::vector<long double> next(static_cast<std::size_t>(i) + 1, 1.0L);
        for (int j = 1; j < i; ++j) next[j] = row[j - 1] + row[j];
        row = std::move(next);
    }
    return row[k] * std::pow(p, static_cast<long double>(k)) * std::pow(1.0L - p, static_cast<long double>(n - k));
}

CVector random_vector(std::mt19937_64& rng, Eigen::Index n) {
    std::normal_distribution<double> g;
    CVector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = complex(g(rng), g(rng));
    return v.normalized();
}

DensityMatrix random_density(std::mt19937_64& rng, const Basis& basis, Eigen::Index rank) {
    const auto d = static_cast<Eigen::Index>(basis.size());
    CMatrix g(d, rank);
    for (Eigen::Index j = 0; j < rank; ++j) g.col(j) = random_vector(rng, d);
    return DensityMatrix::from_unnormalized(basis, g * g.adjoint());
}

}  // namespace

TEST(LadderLevel, ValidityFollowsManifoldSize) {
    EXPECT_NO_THROW(make_level(51, 50));
    EXPECT_NO_THROW(make_level(50, 49));
    EXPECT_NO_THROW(make_level(52, 51));
    EXPECT_THROW(make_level(51, 51), Error);
    EXPECT_THROW(make_level(50, 50), Error);
    EXPECT_THROW(make_level(53, 0), Error);
    EXPECT_THROW(make_level(51, -1), Error);
}

TEST(Basis, RejectsDuplicatesAndFindsLevels) {
    EXPECT_THROW(Basis({{51, 0}, {51, 0}}), Error);
    const Basis b = zeno_basis();
    EXPECT_EQ(b.size(), 101u);
    EXPECT_EQ(b.index_of({51, 7}), 7u);
    EXPECT_EQ(b.index_of({50, 7}), 58u);
    EXPECT_FALSE(b.find({52, 0}));
}

TEST(SpinBasis, CorrespondenceIsABijection) {
    const SpinBasis spin;
    EXPECT_EQ(spin.dimension(), 51u);
    EXPECT_DOUBLE_EQ(spin.j(), 25.0);
    for (int k = 0; k <= 50; ++k) {
        EXPECT_EQ(spin.step_of(spin.level(k)), k);
        EXPECT_DOUBLE_EQ(spin.m(k), 25.0 - k);
    }
    EXPECT_FALSE(spin.step_of({kManifoldG, 3}));
    EXPECT_THROW(spin.level(51), Error);
}

TEST(CircularState, IsTheNorthPole) {
    const SpinBasis spin;
    const StateVector c = circular_state(spin);
    EXPECT_EQ(c.amplitudes(0), complex(1.0));
    EXPECT_DOUBLE_EQ(c.amplitudes.tail(50).norm(), 0.0);
    EXPECT_DOUBLE_EQ(c.norm(), 1.0);
    EXPECT_NEAR(std::abs(c.overlap(spin_coherent_state(spin, 0.0, 0.0))), 1.0, 1e-15);
    EXPECT_NEAR(std::abs(c.overlap(spin_coherent_state(spin, 0.0, 1.234))), 1.0, 1e-15);
}

TEST(SpinCoherentState, PopulationsAreBinomial) {
    const SpinBasis spin;
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const double theta = kPi * u(rng);
        const double phi = kTwoPi * u(rng);
        const StateVector s = spin_coherent_state(spin, theta, phi);
        EXPECT_NEAR(s.norm(), 1.0, 1e-10);
        const long double p = std::pow(std::sin(0.5L * theta), 2);
        for (int k = 0; k <= 50; ++k) {
            EXPECT_NEAR(std::norm(s.amplitudes(k)), static_cast<double>(binomial_law(50, k, p)), 1e-12);
        }
    }
}

TEST(SpinCoherentState, SpecialPoints) {
    const SpinBasis spin;
    const StateVector south = spin_coherent_state(spin, kPi, 0.0);
    EXPECT_NEAR(std::norm(south.amplitudes(50)), 1.0, 1e-12);
    const StateVector equator = spin_coherent_state(spin, kPi / 2, 0.3);
    // C(50, 25) / 2^50
    EXPECT_NEAR(std::norm(equator.amplitudes(25)), 126410606437752.0 / 1125899906842624.0, 1e-13);
    EXPECT_NEAR(std::norm(equator.amplitudes(25)), 0.1123, 1e-4);
    // phase convention: c_k ~ exp(-i k phi)
    EXPECT_NEAR(std::arg(equator.amplitudes(1) / equator.amplitudes(0)), -0.3, 1e-12);
    EXPECT_THROW(spin_coherent_state(spin, -0.1, 0.0), Error);
    EXPECT_THROW(spin_coherent_state(spin, 3.2, 0.0), Error);
}

TEST(DensityMatrix, ToleranceRules) {
    const Basis b = SpinBasis(2).basis();
    CMatrix m = CMatrix::Identity(3, 3) / 3.0;
    m(0, 1) = complex(0.0, 1e-12);   // tiny anti-Hermitian defect: symmetrized
    const DensityMatrix ok = DensityMatrix::from_matrix(b, m);
    EXPECT_LT(hermiticity_defect(ok.matrix()), 1e-15);
    CMatrix bad = CMatrix::Identity(3, 3) / 3.0;
    bad(0, 1) = 1e-6;
    EXPECT_THROW(DensityMatrix::from_matrix(b, bad), InvariantViolation);
    CMatrix trace = CMatrix::Identity(3, 3) * 0.4;
    EXPECT_THROW(DensityMatrix::from_matrix(b, trace), InvariantViolation);
    CMatrix close = CMatrix::Identity(3, 3) * (1.0 + 1e-11) / 3.0;
    EXPECT_NEAR(DensityMatrix::from_matrix(b, close).matrix().trace().real(), 1.0, 1e-15);
    CMatrix negative = CMatrix::Zero(3, 3);
    negative.diagonal() << 1.2, -0.2, 0.0;
    EXPECT_THROW(DensityMatrix::from_matrix(b, negative), InvariantViolation);
    EXPECT_THROW(DensityMatrix::from_matrix(b, CMatrix::Identity(2, 2) / 2.0), Error);
}

TEST(Purity, PureAndMaximallyMixed) {
    const SpinBasis spin;
    EXPECT_NEAR(purity(DensityMatrix::pure(spin_coherent_state(spin, 1.0, 2.0))), 1.0, 1e-12);
    EXPECT_NEAR(purity(DensityMatrix::maximally_mixed(spin.basis())), 1.0 / 51.0, 1e-15);
    CMatrix non_hermitian = CMatrix::Zero(2, 2);
    non_hermitian(0, 1) = 1.0;
    EXPECT_THROW(purity(non_hermitian), Error);
    EXPECT_THROW(purity(CMatrix::Zero(2, 3)), Error);
}

TEST(Fidelity, TrivialCases) {
    const SpinBasis spin;
    std::mt19937_64 rng(11);
    const DensityMatrix rho = random_density(rng, spin.basis(), 4);
    EXPECT_NEAR(fidelity(rho, rho), 1.0, 1e-9);
    const auto a = DensityMatrix::pure(StateVector::basis_state(spin.basis(), spin.level(0)));
    const auto b = DensityMatrix::pure(StateVector::basis_state(spin.basis(), spin.level(1)));
    EXPECT_NEAR(fidelity(a, b), 0.0, 1e-12);
    EXPECT_THROW(fidelity(a, DensityMatrix::maximally_mixed(SpinBasis(4).basis())), Error);
}

TEST(Fidelity, PureStatesMatchOverlapAndIsSymmetric) {
    const SpinBasis spin;
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 10; ++trial) {
        const StateVector psi(spin.basis(), random_vector(rng, 51));
        const StateVector chi(spin.basis(), random_vector(rng, 51));
        const double overlap = std::norm(psi.overlap(chi));
        EXPECT_NEAR(fidelity(DensityMatrix::pure(psi), DensityMatrix::pure(chi)), overlap, 1e-9);
        const DensityMatrix r = random_density(rng, spin.basis(), 3);
        const DensityMatrix s = random_density(rng, spin.basis(), 6);
        EXPECT_NEAR(fidelity(r, s), fidelity(s, r), 1e-9);
    }
}

TEST(ProjectToSpinLadder, StateInsideTheLadderIsUnchanged) {
    const SpinBasis spin;
    const Basis full = zeno_basis();
    std::mt19937_64 rng(13);
    const DensityMatrix r = random_density(rng, spin.basis(), 2);
    CMatrix embedded = CMatrix::Zero(101, 101);
    embedded.topLeftCorner(51, 51) = r.matrix();
    const SpinProjection p = project_to_spin_ladder(DensityMatrix::from_matrix(full, embedded), {1.0, std::nullopt, spin});
    EXPECT_LT(max_abs(p.rho.matrix() - r.matrix()), 1e-14);
    EXPECT_NEAR(p.retained_trace, 1.0, 1e-14);
    const StateVector psi(spin.basis(), random_vector(rng, 51));
    CMatrix pure = CMatrix::Zero(101, 101);
    pure.topLeftCorner(51, 51) = psi.amplitudes * psi.amplitudes.adjoint();
    EXPECT_NEAR(purity(project_to_spin_ladder(DensityMatrix::from_matrix(full, pure)).rho), 1.0, 1e-9);
}

TEST(ProjectToSpinLadder, NgOnlyStateHasNothingToProject) {
    const Basis full = zeno_basis();
    const DensityMatrix g = DensityMatrix::pure(StateVector::basis_state(full, {kManifoldG, 3}));
    EXPECT_THROW(project_to_spin_ladder(g), Error);
}

TEST(ProjectToSpinLadder, LeakNormalization) {
    // 9.3 % of the population outside the spin ladder, the rest uniform
    const Basis full = zeno_basis();
    CMatrix m = CMatrix::Zero(101, 101);
    for (int i = 0; i < 51; ++i) m(i, i) = 0.907 / 51.0;
    for (int i = 51; i < 101; ++i) m(i, i) = 0.093 / 50.0;
    const SpinProjection p = project_to_spin_ladder(DensityMatrix::from_matrix(full, m));
    EXPECT_NEAR(p.retained_trace, 0.907, 1e-12);
    EXPECT_NEAR(p.scaled_trace, 0.907 / 0.91, 1e-12);
    EXPECT_NEAR(p.scaled_trace, 0.997, 1e-3);
    EXPECT_NEAR(p.rho.matrix().trace().real(), 1.0, 1e-12);
    EXPECT_THROW(project_to_spin_ladder(DensityMatrix::from_matrix(full, m), ProjectionOptions{0.0, std::nullopt, SpinBasis()}), Error);
}

TEST(ProjectToSpinLadder, DressedSlotAndMinusPopulation) {
    const Basis full = zeno_basis();
    CVector plus = CVector::Zero(101);
    plus(full.index_of({kManifoldE, 4})) = 1.0 / std::sqrt(2.0);
    plus(full.index_of({kManifoldG, 4})) = 1.0 / std::sqrt(2.0);
    const DensityMatrix rho_plus = DensityMatrix::pure(StateVector(full, plus));
    ProjectionOptions opts;
    opts.dressed_step = 4;
    EXPECT_NEAR(project_to_spin_ladder(rho_plus, opts).rho.population({kManifoldE, 4}), 1.0, 1e-12);
    EXPECT_NEAR(minus_state_population(rho_plus, 4), 0.0, 1e-15);
    CVector minus = plus;
    minus(full.index_of({kManifoldG, 4})) *= -1.0;
    EXPECT_NEAR(minus_state_population(DensityMatrix::pure(StateVector(full, minus)), 4), 1.0, 1e-12);
}

TEST(DensityMatrixJson, RoundTripAndShapeChecks) {
    std::mt19937_64 rng(14);
    const DensityMatrix r = random_density(rng, zeno_basis(), 3);
    const nlohmann::json j = to_json(r);
    EXPECT_EQ(j.at("basis").size(), 101u);
    EXPECT_EQ(j.at("basis")[51].at("manifold"), 50);
    const DensityMatrix back = density_matrix_from_json(nlohmann::json::parse(j.dump()));
    EXPECT_TRUE(back.basis() == r.basis());
    EXPECT_LT(max_abs(back.matrix() - r.matrix()), 1e-15);
    nlohmann::json broken = j;
    broken["real"].erase(0);
    EXPECT_THROW(density_matrix_from_json(broken), Error);
}
