#pragma once

#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace qzd {

using complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;
using RMatrix = Eigen::MatrixXd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr complex kI{0.0, 1.0};

/// Tolerance for Hermiticity, trace and unitarity checks on stored matrices.
inline constexpr double kMatrixTolerance = 1e-10;

/// Thrown when an input violates a documented precondition.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Thrown when a computed object fails one of its numerical invariants.
class InvariantViolation : public Error {
public:
    InvariantViolation(std::string invariant, const std::string& detail)
        : Error(invariant + ": " + detail), invariant_(std::move(invariant)) {}

    const std::string& invariant() const noexcept { return invariant_; }

private:
    std::string invariant_;
};

// User-facing configuration is in MHz (ordinary frequency) and microseconds;
// everything internal is angular frequency in rad/us.
inline constexpr double mhz_to_angular(double mhz) { return kTwoPi * mhz; }
inline constexpr double angular_to_mhz(double w) { return w / kTwoPi; }
inline constexpr double ns_to_us(double ns) { return ns * 1e-3; }

inline double max_abs(const CMatrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

inline double hermiticity_defect(const CMatrix& m) { return max_abs(m - m.adjoint()); }

inline double unitarity_defect(const CMatrix& m) {
    return max_abs(m.adjoint() * m - CMatrix::Identity(m.rows(), m.cols()));
}

}  // namespace qzd
