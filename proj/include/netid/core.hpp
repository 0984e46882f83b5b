#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace netid {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Node indices are 1-based throughout the public API, matching w_1..w_L.
using NodeId = int;
using NodeSet = std::set<NodeId>;

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input (documents, dimensions, indices).
class InvalidInput : public Error {
public:
    using Error::Error;
};

/// A numerical failure: singular precision, non-finite objective, unstable dynamics.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Stable spline kernel with beta == 0 or lambda == 0 has no inverse.
class SingularKernelError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed splitting: every (master, path...) tuple names an independent stream.
/// Used for per-node noise streams, per-replicate streams and per-block
/// Gibbs streams, so that adding or removing a consumer never shifts the
/// numbers another consumer sees.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
    std::uint64_t h = splitmix64(master);
    for (std::uint64_t p : path) {
        h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ULL));
    }
    return h;
}

inline Vector standard_normal(Rng& rng, Index n) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Vector z(n);
    for (Index k = 0; k < n; ++k) z(k) = dist(rng);
    return z;
}

/// 64-bit FNV-1a over the raw bytes of a dense matrix; used as a data checksum.
inline std::uint64_t checksum(const Matrix& m, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(m.data());
    const auto len = static_cast<std::size_t>(m.size()) * sizeof(double);
    for (std::size_t k = 0; k < len; ++k) {
        h ^= bytes[k];
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace netid
