#pragma once

#include "netid/harness.hpp"

#include <random>
#include <string>

namespace netid::testing {

inline std::string data_path(const std::string& name) { return std::string(NETID_DATA_DIR) + "/" + name; }

inline NetworkSpec four_node() { return load_network_spec(data_path("four_node.json")); }

/// Signals of the example network with unit-variance white excitations.
inline SignalBundle four_node_signals(Index n, std::uint64_t seed) {
    const NetworkSpec spec = four_node();
    return simulate_network(spec, white_excitation(spec.external_count, n, seed + 1000), seed, n);
}

/// x delayed by d samples with zeros shifted in, written out element by element.
inline Vector shift(const Vector& x, Index d) {
    Vector y = Vector::Zero(x.size());
    for (Index t = d; t < x.size(); ++t) y(t) = x(t - d);
    return y;
}

/// Dense lower Toeplitz matrix with (t, c) = base(t - c).
inline Matrix conv_matrix(const Vector& base, Index cols) {
    Matrix m = Matrix::Zero(base.size(), cols);
    for (Index t = 0; t < base.size(); ++t) {
        for (Index c = 0; c <= t && c < cols; ++c) m(t, c) = base(t - c);
    }
    return m;
}

/// Dense N x N convolution operator of the causal sequence [0, h(1), ..., h(l)].
inline Matrix delayed_conv_operator(const Vector& h, Index n) {
    Vector seq = Vector::Zero(n);
    for (Index k = 0; k < h.size() && k + 1 < n; ++k) seq(k + 1) = h(k);
    return conv_matrix(seq, n);
}

inline Vector random_vector(std::mt19937_64& rng, Index n, double scale = 1.0) {
    std::normal_distribution<double> d(0.0, scale);
    Vector v(n);
    for (Index k = 0; k < n; ++k) v(k) = d(rng);
    return v;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double rel_err(const Matrix& a, const Matrix& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

/// Random hyperparameters for every block of a layout.
inline HyperState random_hyper(const LatentLayout& layout, const ThetaParam& param, std::mt19937_64& rng,
                               bool fixed_missing = true) {
    HyperState eta;
    eta.theta = Vector::Zero(param.size());
    if (param.kind == ThetaParam::Kind::rational) {
        eta.theta.head(param.nb) = random_vector(rng, param.nb, 0.5);
        if (param.na >= 1) eta.theta(param.nb) = 0.3;
        if (param.na >= 2) eta.theta(param.nb + 1) = 0.1;
    } else {
        eta.theta = random_vector(rng, param.size(), 0.5);
    }
    for (Group g : {Group::s, Group::b, Group::f}) {
        for (const auto& blk : layout.group(g)) {
            KernelHyper h;
            h.fixed_lambda = fixed_missing && blk.from_missing;
            h.lambda = h.fixed_lambda ? 1.0 : uniform(rng, 0.2, 2.0);
            h.beta = uniform(rng, 0.3, 0.8);
            eta.group(g).push_back(h);
        }
    }
    eta.sigma_j2 = uniform(rng, 0.2, 1.0);
    eta.sigma_m2 = uniform(rng, 0.2, 1.0);
    eta.sigma_a2 = uniform(rng, 0.2, 1.0);
    eta.sigma_am = 0.5 * std::sqrt(eta.sigma_a2 * eta.sigma_m2);
    return eta;
}

/// A predictor model on the example network with missing node 2.
inline PredictorModel four_node_model(bool use_additional) {
    return build_predictor_model(four_node(), {3, 1}, {1, 3, 4}, NodeId{2}, PredictorOptions{use_additional, true});
}

} // namespace netid::testing
