#pragma once

#include "netid/core.hpp"

#include <cmath>
#include <string>

namespace netid {

/// Hyperparameters of one first-order stable spline prior lambda * K_beta.
struct KernelHyper {
    double lambda = 1.0;
    double beta = 0.5;
    bool fixed_lambda = false;  // lambda pinned to 1 (impulse responses driven by the missing node)
};

/// lambda * beta^max(x, y) with 1-based x, y; stored 0-based.
template <typename Scalar = double>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> stable_spline(Scalar lambda, Scalar beta, Index l) {
    if (l < 1) throw InvalidInput("stable_spline: size must be >= 1");
    if (!(beta >= Scalar(0) && beta <= Scalar(1))) throw InvalidInput("stable_spline: beta outside [0, 1]");
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> k(l, l);
    for (Index x = 0; x < l; ++x) {
        for (Index y = 0; y < l; ++y) k(x, y) = lambda * std::pow(beta, Scalar(std::max(x, y) + 1));
    }
    return k;
}

inline Matrix stable_spline(const KernelHyper& h, Index l) { return stable_spline<double>(h.lambda, h.beta, l); }

/// K = lambda * L D L^T with L(x, y) = beta^(x - y) for x >= y,
/// D(1) = beta and D(k) = beta^k (1 - beta) for k >= 2.
///
/// L^{-1} = I - beta * (subdiagonal shift), so K^{-1} is tridiagonal and
/// quadratic forms, traces and log-determinants cost O(l).
template <typename Scalar = double>
struct SplineFactor {
    using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

    Scalar lambda{1};
    Scalar beta{0};
    Vec d;  // diagonal of D, lambda folded in

    Index size() const { return d.size(); }

    Mat unit_lower() const {
        const Index l = size();
        Mat out = Mat::Zero(l, l);
        for (Index x = 0; x < l; ++x) {
            for (Index y = 0; y <= x; ++y) out(x, y) = std::pow(beta, Scalar(x - y));
        }
        return out;
    }

    Mat reconstruct() const {
        Mat lo = unit_lower();
        return lo * d.asDiagonal() * lo.transpose();
    }

    Scalar log_det() const { return d.array().log().sum(); }

    /// tr(K^{-1} E) for a symmetric second-moment matrix E.
    template <typename Derived>
    Scalar trace_inverse(const Eigen::MatrixBase<Derived>& e) const {
        const Index l = size();
        Scalar acc = e(0, 0) / d(0);
        for (Index k = 1; k < l; ++k) {
            const Scalar v = e(k, k) - Scalar(2) * beta * e(k, k - 1) + beta * beta * e(k - 1, k - 1);
            acc += v / d(k);
        }
        return acc;
    }

    /// x^T K^{-1} x
    template <typename Derived>
    Scalar quadratic(const Eigen::MatrixBase<Derived>& x) const {
        Scalar acc = x(0) * x(0) / d(0);
        for (Index k = 1; k < size(); ++k) {
            const Scalar v = x(k) - beta * x(k - 1);
            acc += v * v / d(k);
        }
        return acc;
    }

    /// Dense tridiagonal K^{-1}.
    Mat inverse() const {
        const Index l = size();
        Mat out = Mat::Zero(l, l);
        for (Index k = 0; k < l; ++k) {
            out(k, k) += Scalar(1) / d(k);
            if (k + 1 < l) {
                const Scalar w = Scalar(1) / d(k + 1);
                out(k, k) += beta * beta * w;
                out(k, k + 1) -= beta * w;
                out(k + 1, k) -= beta * w;
            }
        }
        return out;
    }
};

/// Small-beta jitter threshold and relative size.
inline constexpr double kSmallBeta = 1e-6;
inline constexpr double kBetaJitter = 1e-10;

template <typename Scalar = double>
SplineFactor<Scalar> factorize(Scalar lambda, Scalar beta, Index l) {
    if (l < 1) throw InvalidInput("factorize: size must be >= 1");
    if (!(beta >= Scalar(0) && beta <= Scalar(1))) throw InvalidInput("factorize: beta outside [0, 1]");
    if (beta == Scalar(0)) throw SingularKernelError("stable spline kernel with beta = 0 is singular");
    if (!(lambda > Scalar(0))) throw SingularKernelError("stable spline kernel with lambda = 0 is singular");
    SplineFactor<Scalar> f;
    f.lambda = lambda;
    f.beta = beta;
    f.d.resize(l);
    f.d(0) = lambda * beta;
    for (Index k = 1; k < l; ++k) f.d(k) = lambda * std::pow(beta, Scalar(k + 1)) * (Scalar(1) - beta);
    if (beta < Scalar(kSmallBeta)) f.d.array() += Scalar(kBetaJitter) * lambda * beta;
    return f;
}

inline SplineFactor<double> factorize(const KernelHyper& h, Index l) { return factorize<double>(h.lambda, h.beta, l); }

} // namespace netid
