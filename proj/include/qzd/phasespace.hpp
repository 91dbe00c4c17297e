#pragma once

// Husimi Q and spherical Wigner W functions of a spin-J density matrix.
//
// Conventions (k = J - m indexes the spin ladder):
//   T_KQ        = sum_{m,m'} (-1)^(J-m') <J m; J -m' | K Q> |J m><J m'|,  Tr(T_KQ^+ T_K'Q') = delta
//   rho_KQ      = Tr(rho T_KQ^+)
//   W(theta,phi)= sqrt((2J+1)/(4 pi)) sum_KQ rho_KQ Y_KQ(theta, -phi)
//   Q(theta,phi)= (2J+1)/(4 pi) <theta,phi| rho |theta,phi>
// Y_KQ are the Condon-Shortley spherical harmonics. The azimuth enters with a
// minus sign because the coherent state |theta,phi> (amplitudes ~ e^{-ik phi})
// points along the physical azimuth -phi. With these choices both functions
// integrate to one over the sphere and peak at (theta, phi) for |theta,phi>.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "json.hpp"
#include "qzd/common.hpp"
#include "qzd/evolution.hpp"
#include "qzd/ladder.hpp"

namespace qzd {

struct SphericalPoint {
    double theta = 0.0;
    double phi = 0.0;

    static SphericalPoint make(double theta, double phi) {
        if (!(theta >= 0.0 && theta <= kPi)) throw Error("polar angle outside [0, pi]");
        double p = std::fmod(phi, kTwoPi);
        if (p < 0) p += kTwoPi;
        return {theta, p};
    }
};

namespace detail {

inline constexpr int kMaxBinomial = 66;  // C(66, 33) still fits in 64 bits

inline const std::vector<std::vector<std::uint64_t>>& binomial_table() {
    static const auto table = [] {
        std::vector<std::vector<std::uint64_t>> b(kMaxBinomial + 1);
        for (int n = 0; n <= kMaxBinomial; ++n) {
            b[n].assign(static_cast<std::size_t>(n) + 1, 1);
            for (int k = 1; k < n; ++k) b[n][k] = b[n - 1][k - 1] + b[n - 1][k];
        }
        return b;
    }();
    return table;
}

/// sum_z (-1)^z C(a,z) C(b,p-z) C(c,q-z), exact.
inline boost::multiprecision::int256_t binomial_triple_sum(int a, int b, int c, int p, int q,
                                                           const std::vector<std::vector<std::uint64_t>>& binom) {
    using boost::multiprecision::int256_t;
    int256_t s = 0;
    for (int z = 0; z <= a; ++z) {
        if (p - z < 0 || q - z < 0) break;
        if (p - z > b || q - z > c) continue;
        int256_t term = int256_t(binom[a][z]) * binom[b][p - z];
        term *= binom[c][q - z];
        if (z % 2 == 0) s += term;
        else s -= term;
    }
    return s;
}

}  // namespace detail

/// <j1 m1; j2 m2 | K Q> from doubled quantum numbers. The alternating Racah
/// sum is evaluated exactly in integers; the factorial prefactor in logs.
inline double clebsch_gordan(int two_j1, int two_m1, int two_j2, int two_m2, int two_k, int two_q) {
    if (two_m1 + two_m2 != two_q) return 0.0;
    if (std::abs(two_m1) > two_j1 || std::abs(two_m2) > two_j2 || std::abs(two_q) > two_k) return 0.0;
    if (two_k < std::abs(two_j1 - two_j2) || two_k > two_j1 + two_j2) return 0.0;
    if ((two_j1 + two_j2 + two_k) % 2 != 0 || (two_j1 + two_m1) % 2 != 0 || (two_j2 + two_m2) % 2 != 0) return 0.0;

    const int a = (two_j1 + two_j2 - two_k) / 2;
    const int b = (two_j1 - two_j2 + two_k) / 2;
    const int c = (-two_j1 + two_j2 + two_k) / 2;
    const int j1pm = (two_j1 + two_m1) / 2;
    const int j1mm = (two_j1 - two_m1) / 2;
    const int j2pm = (two_j2 + two_m2) / 2;
    const int j2mm = (two_j2 - two_m2) / 2;
    const int kpq = (two_k + two_q) / 2;
    const int kmq = (two_k - two_q) / 2;
    const int total = (two_j1 + two_j2 + two_k) / 2 + 1;

    if (std::max({a, b, c}) > detail::kMaxBinomial) throw Error("angular momentum too large for the coupling table");
    const auto s = detail::binomial_triple_sum(a, b, c, j1mm, j2pm, detail::binomial_table());
    if (s == 0) return 0.0;

    auto lf = [](int n) { return std::lgamma(n + 1.0); };
    const double log_pref = std::log(two_k + 1.0) + lf(j1pm) + lf(j1mm) + lf(j2pm) + lf(j2mm) + lf(kpq) + lf(kmq) -
                            lf(total) - lf(a) - lf(b) - lf(c);
    const double mag = s < 0 ? static_cast<double>(-s) : static_cast<double>(s);
    const double value = std::exp(0.5 * log_pref + std::log(mag));
    return s < 0 ? -value : value;
}

/// Matrix elements of the multipole operators T_KQ on the spin ladder.
class MultipoleBasis {
public:
    explicit MultipoleBasis(int two_j) : two_j_(two_j), dim_(two_j + 1) {
        coeff_.assign(static_cast<std::size_t>(dim_ * dim_ * dim_), 0.0);
        for (int k_rank = 0; k_rank < dim_; ++k_rank) {
            for (int k = 0; k < dim_; ++k) {
                for (int kp = 0; kp < dim_; ++kp) {
                    if (std::abs(kp - k) > k_rank) continue;
                    const int two_m = two_j - 2 * k;
                    const int two_mp = two_j - 2 * kp;
                    const double sign = ((two_j - two_mp) / 2) % 2 == 0 ? 1.0 : -1.0;
                    coeff_[index(k_rank, k, kp)] =
                        sign * clebsch_gordan(two_j, two_m, two_j, -two_mp, 2 * k_rank, two_m - two_mp);
                }
            }
        }
    }

    static const MultipoleBasis& get(int two_j) {
        static std::mutex mutex;
        static std::map<int, std::unique_ptr<MultipoleBasis>> cache;
        std::lock_guard lock(mutex);
        auto& slot = cache[two_j];
        if (!slot) slot = std::make_unique<MultipoleBasis>(two_j);
        return *slot;
    }

    int two_j() const { return two_j_; }
    int dimension() const { return dim_; }

    /// <k| T_{K, k'-k} |k'>.
    double element(int rank, int k, int kp) const { return coeff_[index(rank, k, kp)]; }

    CMatrix tensor(int rank, int q) const {
        CMatrix t = CMatrix::Zero(dim_, dim_);
        for (int k = 0; k < dim_; ++k) {
            const int kp = k + q;
            if (kp >= 0 && kp < dim_) t(k, kp) = element(rank, k, kp);
        }
        return t;
    }

private:
    std::size_t index(int rank, int k, int kp) const {
        return static_cast<std::size_t>((rank * dim_ + k) * dim_ + kp);
    }

    int two_j_;
    int dim_;
    std::vector<double> coeff_;
};

/// rho_KQ for K = 0..2J, Q = -K..K.
class MultipoleTable {
public:
    MultipoleTable(int two_j, std::vector<complex> values) : two_j_(two_j), values_(std::move(values)) {}

    int two_j() const { return two_j_; }
    int max_rank() const { return two_j_; }

    complex operator()(int rank, int q) const {
        if (rank < 0 || rank > two_j_ || std::abs(q) > rank) throw Error("multipole index out of range");
        return values_[static_cast<std::size_t>(rank * rank + rank + q)];
    }

private:
    int two_j_;
    std::vector<complex> values_;
};

inline int spin_two_j(const DensityMatrix& rho) {
    const auto d = static_cast<int>(rho.dimension());
    const SpinBasis spin(d - 1);
    if (!(rho.basis() == spin.basis())) throw Error("phase-space functions need a spin-ladder density matrix");
    return d - 1;
}

inline MultipoleTable multipole_components(const DensityMatrix& rho) {
    const int two_j = spin_two_j(rho);
    const auto& basis = MultipoleBasis::get(two_j);
    const int d = two_j + 1;
    const CMatrix& m = rho.matrix();
    std::vector<complex> values(static_cast<std::size_t>(d * d));
    for (int rank = 0; rank < d; ++rank) {
        for (int q = -rank; q <= rank; ++q) {
            complex acc = 0.0;
            for (int k = std::max(0, -q); k < d && k + q < d; ++k) acc += m(k, k + q) * basis.element(rank, k, k + q);
            values[static_cast<std::size_t>(rank * rank + rank + q)] = acc;
        }
    }
    return {two_j, std::move(values)};
}

/// Condon-Shortley Y_KQ(theta, phi) for K <= max_rank, stored at K*K+K+Q.
inline std::vector<complex> spherical_harmonics(int max_rank, double theta, double phi) {
    std::vector<complex> y(static_cast<std::size_t>((max_rank + 1) * (max_rank + 1)));
    for (int rank = 0; rank <= max_rank; ++rank) {
        for (int q = 0; q <= rank; ++q) {
            const double legendre = std::sph_legendre(static_cast<unsigned>(rank), static_cast<unsigned>(q), theta);
            const complex v = legendre * std::polar(1.0, q * phi);
            y[static_cast<std::size_t>(rank * rank + rank + q)] = v;
            if (q > 0) y[static_cast<std::size_t>(rank * rank + rank - q)] = (q % 2 == 0 ? 1.0 : -1.0) * std::conj(v);
        }
    }
    return y;
}

/// Coefficients A_q(theta), q = -2J..2J stored at q + 2J, such that
/// W(theta, phi) = sqrt((2J+1)/(4 pi)) Re sum_q A_q e^{-i q phi}.
inline std::vector<complex> wigner_ring_coefficients(const MultipoleTable& table, double theta) {
    const int n = table.max_rank();
    std::vector<complex> a(static_cast<std::size_t>(2 * n + 1), 0.0);
    for (int rank = 0; rank <= n; ++rank) {
        for (int q = 0; q <= rank; ++q) {
            const double legendre = std::sph_legendre(static_cast<unsigned>(rank), static_cast<unsigned>(q), theta);
            a[static_cast<std::size_t>(n + q)] += table(rank, q) * legendre;
            if (q > 0) a[static_cast<std::size_t>(n - q)] += table(rank, -q) * ((q % 2 == 0 ? 1.0 : -1.0) * legendre);
        }
    }
    return a;
}

inline double wigner_from_ring(const std::vector<complex>& a, double phi) {
    const int n = static_cast<int>(a.size() / 2);
    complex acc = a[static_cast<std::size_t>(n)];
    const complex step = std::polar(1.0, -phi);
    complex up = 1.0;
    for (int q = 1; q <= n; ++q) {
        up *= step;
        acc += a[static_cast<std::size_t>(n + q)] * up + a[static_cast<std::size_t>(n - q)] * std::conj(up);
    }
    if (std::abs(acc.imag()) > 1e-9 * std::max(1.0, std::abs(acc))) {
        throw InvariantViolation("Wigner function reality", "imaginary residue " + std::to_string(acc.imag()));
    }
    return std::sqrt((n + 1.0) / (4.0 * kPi)) * acc.real();
}

inline double wigner_from_multipoles(const MultipoleTable& table, const SphericalPoint& pt) {
    return wigner_from_ring(wigner_ring_coefficients(table, pt.theta), pt.phi);
}

struct WignerOptions {
    /// Keep spin steps k < truncation (renormalized); 0 keeps everything.
    int truncation = 16;
};

/// Restriction to the first `keep` ladder steps, embedded back in the full
/// spin space and renormalized.
inline DensityMatrix truncate_spin_state(const DensityMatrix& rho, int keep) {
    const auto d = static_cast<Eigen::Index>(rho.dimension());
    if (keep <= 0 || keep >= d) return rho;
    CMatrix m = CMatrix::Zero(d, d);
    m.topLeftCorner(keep, keep) = rho.matrix().topLeftCorner(keep, keep);
    return DensityMatrix::from_unnormalized(rho.basis(), m);
}

inline double q_function(const DensityMatrix& rho, const SphericalPoint& pt) {
    const SpinBasis spin(spin_two_j(rho));
    const CVector c = spin_coherent_state(spin, pt.theta, pt.phi).amplitudes;
    const double v = (c.adjoint() * rho.matrix() * c)(0, 0).real();
    return (spin.dimension() / (4.0 * kPi)) * v;
}

inline double wigner_function(const DensityMatrix& rho, const SphericalPoint& pt, const WignerOptions& opts = {}) {
    spin_two_j(rho);
    return wigner_from_multipoles(multipole_components(truncate_spin_state(rho, opts.truncation)), pt);
}

// --- Grids and maps --------------------------------------------------------------

enum class MapKind { Q, W };

inline std::string to_string(MapKind k) { return k == MapKind::Q ? "Q" : "W"; }

/// Gauss-Legendre in cos(theta) times a uniform azimuth grid.
struct SphereGrid {
    int n_theta = 0;
    int n_phi = 0;
    std::vector<SphericalPoint> points;   ///< theta-major
    std::vector<double> weights;
};

inline SphereGrid sphere_grid(int n_theta = 64, int n_phi = 128) {
    if (n_theta < 1 || n_phi < 1) throw Error("sphere grid needs positive dimensions");
    RMatrix jacobi = RMatrix::Zero(n_theta, n_theta);
    for (int i = 1; i < n_theta; ++i) {
        const double b = i / std::sqrt(4.0 * i * i - 1.0);
        jacobi(i, i - 1) = jacobi(i - 1, i) = b;
    }
    Eigen::SelfAdjointEigenSolver<RMatrix> es(jacobi);
    SphereGrid g{n_theta, n_phi, {}, {}};
    for (int i = n_theta - 1; i >= 0; --i) {   // north pole first
        const double x = es.eigenvalues()(i);
        const double v = es.eigenvectors()(0, i);
        const double w_theta = 2.0 * v * v;
        const double theta = std::acos(std::clamp(x, -1.0, 1.0));
        for (int j = 0; j < n_phi; ++j) {
            g.points.push_back({theta, kTwoPi * j / n_phi});
            g.weights.push_back(w_theta * kTwoPi / n_phi);
        }
    }
    return g;
}

struct PhaseSpaceMap {
    MapKind kind = MapKind::Q;
    SphereGrid grid;
    std::vector<double> values;
};

inline double sphere_integrate(const PhaseSpaceMap& map) {
    if (map.grid.weights.empty() || map.grid.weights.size() != map.values.size()) {
        throw Error("phase-space map lacks quadrature weights");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < map.values.size(); ++i) acc += map.grid.weights[i] * map.values[i];
    return acc;
}

inline PhaseSpaceMap q_map(const DensityMatrix& rho, const SphereGrid& grid, unsigned threads = 1) {
    PhaseSpaceMap map{MapKind::Q, grid, std::vector<double>(grid.points.size())};
    parallel_for(grid.points.size(), threads, [&](std::size_t i) { map.values[i] = q_function(rho, grid.points[i]); });
    return map;
}

/// Points sharing a polar angle reuse one set of ring coefficients.
inline PhaseSpaceMap w_map(const DensityMatrix& rho, const SphereGrid& grid, const WignerOptions& opts = {},
                           unsigned threads = 1) {
    const MultipoleTable table = multipole_components(truncate_spin_state(rho, opts.truncation));
    PhaseSpaceMap map{MapKind::W, grid, std::vector<double>(grid.points.size())};
    std::vector<std::size_t> ring_start;
    for (std::size_t i = 0; i < grid.points.size(); ++i) {
        if (i == 0 || grid.points[i].theta != grid.points[i - 1].theta) ring_start.push_back(i);
    }
    ring_start.push_back(grid.points.size());
    parallel_for(ring_start.size() - 1, threads, [&](std::size_t r) {
        const auto a = wigner_ring_coefficients(table, grid.points[ring_start[r]].theta);
        for (std::size_t i = ring_start[r]; i < ring_start[r + 1]; ++i) map.values[i] = wigner_from_ring(a, grid.points[i].phi);
    });
    return map;
}

inline nlohmann::json map_header(const PhaseSpaceMap& map) {
    return {{"kind", to_string(map.kind)},
            {"grid", {{"n_theta", map.grid.n_theta}, {"n_phi", map.grid.n_phi},
                      {"theta", "Gauss-Legendre nodes in cos(theta), north pole first"},
                      {"phi", "uniform, phi_j = 2 pi j / n_phi"}}},
            {"columns", {"theta", "phi", "weight", "value"}},
            {"conventions",
             {{"coherent_state", "c_k = sqrt(C(2J,k)) cos^(2J-k)(theta/2) sin^k(theta/2) exp(-i k phi)"},
              {"Q", "(2J+1)/(4 pi) <theta,phi|rho|theta,phi>"},
              {"W", "sqrt((2J+1)/(4 pi)) sum_KQ Tr(rho T_KQ^+) Y_KQ(theta,-phi)"},
              {"normalization", "integral over the sphere equals 1"}}}};
}

/// CSV with columns theta, phi, weight, value; `header`, when given, is
/// written first as a single "# {json}" line.
inline void write_map_csv(std::ostream& out, const PhaseSpaceMap& map, const nlohmann::json* header = nullptr) {
    if (header) out << "# " << header->dump() << "\n";
    out << "theta,phi,weight,value\n";
    char line[160];
    for (std::size_t i = 0; i < map.values.size(); ++i) {
        std::snprintf(line, sizeof line, "%.12g,%.12g,%.12g,%.12g\n", map.grid.points[i].theta, map.grid.points[i].phi,
                      map.grid.weights[i], map.values[i]);
        out << line;
    }
}

}  // namespace qzd
