// SPDX-License-Identifier: Apache-2.0
//
// cfmimo: uplink simulator for cell-free massive MIMO-OFDM with impaired access points
// Copyright (C) 2026 The cfmimo authors
// ------------------------------------------------------------------------

#pragma once

#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace cfmimo {

using cd = std::complex<double>;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using RVec = Eigen::VectorXd;
using RMat = Eigen::MatrixXd;

inline constexpr double kPi = std::numbers::pi;

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double dbm_to_watt(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

// Raised when a linear system built from Monte-Carlo statistics cannot be solved,
// even through the pseudo-inverse fallback.
class SolveError : public std::runtime_error {
public:
    SolveError(const std::string& what, int subcarrier)
        : std::runtime_error(what + " (subcarrier " + std::to_string(subcarrier) + ")"), subcarrier_(subcarrier) {}

    int subcarrier() const noexcept { return subcarrier_; }

private:
    int subcarrier_;
};

} // namespace cfmimo
