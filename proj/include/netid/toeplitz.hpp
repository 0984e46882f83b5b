#pragma once

#include "netid/core.hpp"

namespace netid {

/// x delayed by `delay` samples with zeros shifted in: out(t) = x(t - delay).
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> delayed(const Eigen::MatrixBase<Derived>& x, Index delay) {
    using Vec = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1>;
    const Index n = x.size();
    Vec out = Vec::Zero(n);
    if (delay < n) out.tail(n - delay) = x.head(n - delay);
    return out;
}

/// N x cols lower-triangular Toeplitz matrix whose first column is `base`.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> toeplitz(const Eigen::MatrixBase<Derived>& base,
                                                                                  Index cols) {
    using Mat = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    const Index n = base.size();
    Mat out = Mat::Zero(n, cols);
    for (Index c = 0; c < cols && c < n; ++c) out.col(c).tail(n - c) = base.head(n - c);
    return out;
}

/// Column c holds `signal` delayed by delay + c samples, optionally negated.
/// delay = 1 gives the regressor of [0 w(1) ... w(N-1)]; delay = 2 with
/// negate gives the one of [0 0 -w(1) ... -w(N-2)].
inline Matrix toeplitz_delayed(const Vector& signal, Index cols, Index delay, bool negate = false) {
    if (delay < 1 || delay > 2) throw InvalidInput("toeplitz_delayed: delay must be 1 or 2");
    if (cols < 1) throw InvalidInput("toeplitz_delayed: cols must be >= 1");
    Vector base = delayed(signal, delay);
    if (negate) base = -base;
    return toeplitz(base, cols);
}

/// toeplitz(base, h.size()) * h without forming the matrix.
template <typename D1, typename D2>
Vector toeplitz_apply(const Eigen::MatrixBase<D1>& base, const Eigen::MatrixBase<D2>& h) {
    const Index n = base.size();
    const Index l = std::min<Index>(h.size(), n);
    Vector out = Vector::Zero(n);
    for (Index c = 0; c < l; ++c) {
        if (h(c) != 0.0) out.tail(n - c).noalias() += h(c) * base.head(n - c);
    }
    return out;
}

/// toeplitz(base, cols)^T * y without forming the matrix.
template <typename D1, typename D2>
Vector toeplitz_transpose_apply(const Eigen::MatrixBase<D1>& base, const Eigen::MatrixBase<D2>& y, Index cols) {
    const Index n = base.size();
    Vector out = Vector::Zero(cols);
    for (Index c = 0; c < cols && c < n; ++c) out(c) = base.head(n - c).dot(y.tail(n - c));
    return out;
}

/// toeplitz(x, rows)^T * toeplitz(y, cols) in O(N (rows + cols) + rows * cols).
template <typename D1, typename D2>
Matrix toeplitz_cross_gram(const Eigen::MatrixBase<D1>& x, const Eigen::MatrixBase<D2>& y, Index rows, Index cols) {
    const Index n = x.size();
    Matrix g = Matrix::Zero(rows, cols);
    for (Index q = 0; q < cols && q < n; ++q) g(0, q) = x.tail(n - q).dot(y.head(n - q));
    for (Index p = 1; p < rows && p < n; ++p) g(p, 0) = x.head(n - p).dot(y.tail(n - p));
    for (Index p = 0; p + 1 < rows; ++p) {
        for (Index q = 0; q + 1 < cols; ++q) {
            const double tail = (p < n && q < n) ? x(n - 1 - p) * y(n - 1 - q) : 0.0;
            g(p + 1, q + 1) = g(p, q) - tail;
        }
    }
    return g;
}

} // namespace netid
