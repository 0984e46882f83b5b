#pragma once

#include "netid/core.hpp"

#include <Eigen/Eigenvalues>

#include <complex>

namespace netid {

/// Rational transfer function in the delay operator q^{-1}.
///
/// Both polynomials are stored low-order first: num(k) multiplies q^{-k}.
/// A module G_jl is strictly proper (num(0) == 0); noise models may be
/// biproper. The denominator is expected to be monic; non-monic
/// denominators are representable so that parsers can report them.
template <typename Scalar>
struct BasicTransferFunction {
    using Coeffs = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    Coeffs num = Coeffs::Zero(1);
    Coeffs den = Coeffs::Ones(1);

    BasicTransferFunction() = default;
    BasicTransferFunction(Coeffs n, Coeffs d) : num(std::move(n)), den(std::move(d)) {}

    static BasicTransferFunction unit() { return {Coeffs::Ones(1), Coeffs::Ones(1)}; }

    bool is_monic() const { return den.size() > 0 && den(0) == Scalar(1); }
    bool is_strictly_proper() const { return num.size() == 0 || num(0) == Scalar(0); }
    bool is_zero() const { return num.size() == 0 || num.isZero(0); }

    friend bool operator==(const BasicTransferFunction& a, const BasicTransferFunction& b) {
        return a.num.size() == b.num.size() && a.den.size() == b.den.size() && a.num == b.num &&
               a.den == b.den;
    }
};

using TransferFunction = BasicTransferFunction<double>;

/// Zero-initial-condition difference equation y = (num/den) x.
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> filter(const BasicTransferFunction<Scalar>& tf,
                                                const Eigen::MatrixBase<Derived>& x) {
    if (tf.den.size() == 0 || tf.den(0) == Scalar(0)) {
        throw InvalidInput("transfer function denominator has zero leading coefficient");
    }
    const Index n = x.size();
    const Index nb = tf.num.size();
    const Index na = tf.den.size();
    const Scalar a0 = tf.den(0);
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> y(n);
    for (Index t = 0; t < n; ++t) {
        Scalar acc(0);
        for (Index k = 0; k < nb && k <= t; ++k) acc += tf.num(k) * x(t - k);
        for (Index k = 1; k < na && k <= t; ++k) acc -= tf.den(k) * y(t - k);
        y(t) = acc / a0;
    }
    return y;
}

/// Power-series coefficients of num/den.
///
/// With include_constant == false returns g(1..n), the convention used for
/// strictly proper modules; with include_constant == true returns g(0..n-1).
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> impulse_response(const BasicTransferFunction<Scalar>& tf,
                                                          Index n, bool include_constant = false) {
    if (n < 1) throw InvalidInput("impulse_response: length must be >= 1");
    const Index total = include_constant ? n : n + 1;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> delta = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(total);
    delta(0) = Scalar(1);
    auto g = filter(tf, delta);
    if (include_constant) return g;
    return g.tail(n);
}

/// Roots of the denominator in z (poles), from the companion matrix.
inline std::vector<std::complex<double>> poles(const TransferFunction& tf) {
    Index n = tf.den.size() - 1;
    while (n > 0 && tf.den(n) == 0.0) --n;
    if (n <= 0) return {};
    Matrix companion = Matrix::Zero(n, n);
    for (Index k = 0; k < n; ++k) companion(0, k) = -tf.den(k + 1) / tf.den(0);
    for (Index k = 1; k < n; ++k) companion(k, k - 1) = 1.0;
    Eigen::EigenSolver<Matrix> solver(companion, false);
    std::vector<std::complex<double>> out;
    for (Index k = 0; k < n; ++k) out.push_back(solver.eigenvalues()(k));
    return out;
}

inline bool is_stable(const TransferFunction& tf) {
    for (const auto& p : poles(tf)) {
        if (!(std::abs(p) < 1.0)) return false;
    }
    return true;
}

} // namespace netid
