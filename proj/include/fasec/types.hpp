#pragma once
#include <cmath>
#include <complex>
#include <Eigen/Core>

namespace fasec {

using complex_t = std::complex<double>;
using rvec = Eigen::VectorXd;
using cvec = Eigen::VectorXcd;
using rmat = Eigen::MatrixXd;
using cmat = Eigen::MatrixXcd;

inline constexpr double pi = 3.141592653589793238462643383279502884;
inline constexpr complex_t imag_unit{0.0, 1.0};

inline double deg_to_rad(double deg) noexcept { return deg * pi / 180.0; }
inline double rad_to_deg(double rad) noexcept { return rad * 180.0 / pi; }

/// dBm -> watts.
inline double dbm_to_watts(double dbm) noexcept { return 1e-3 * std::pow(10.0, dbm / 10.0); }
/// dB -> linear power ratio.
inline double db_to_linear(double db) noexcept { return std::pow(10.0, db / 10.0); }

} // namespace fasec
