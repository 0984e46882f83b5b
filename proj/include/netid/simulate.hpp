#pragma once

#include "netid/network.hpp"

#include <cstdint>
#include <string>

namespace netid {

/// N-sample record of a network realization. Row k - 1 holds node/signal k.
struct SignalBundle {
    Matrix w;  // L x N node signals
    Matrix u;  // L x N processed excitations u_j = sum_k R_jk r_k
    Matrix r;  // K x N external signals
    Matrix e;  // L x N white noises (kept for oracle tests)
    std::uint64_t seed = 0;

    Index samples() const { return w.cols(); }
    Vector node(NodeId k) const { return w.row(k - 1).transpose(); }
    Vector excitation(NodeId k) const { return u.row(k - 1).transpose(); }
};

struct SimulationOptions {
    Index warmup = 0;  // samples simulated and discarded before the record starts
};

/// u = R r for every node (zero rows for nodes without excitation).
Matrix process_excitations(const NetworkSpec& spec, const Matrix& r);

/// Unit-variance white external signals, one derived stream per signal.
Matrix white_excitation(int signals, Index n, std::uint64_t seed);

/// w(t) = G w(t) + u(t) + H e(t) from zero initial conditions. Noise e_j has
/// variance Lambda_jj and its own stream derive_seed(seed, {j}).
SignalBundle simulate_network(const NetworkSpec& spec, const Matrix& r, std::uint64_t seed, Index n,
                              SimulationOptions options = {});

/// Closed-loop poles of the interconnection, from a state-space realization
/// of all modules with the algebraic loop w = C x eliminated.
std::vector<std::complex<double>> closed_loop_poles(const NetworkSpec& spec);

/// True iff (I - G)^{-1} is stable. Returns false on numerical failure and
/// writes the reason to `diagnostic` when given.
bool check_wellposed_stable(const NetworkSpec& spec, std::string* diagnostic = nullptr);

/// Signals CSV: header t,w_1..w_L,r_1..r_K; t counts from 1.
void write_signals_csv(const std::string& path, const SignalBundle& signals);
/// Reads w and r back; u is recomputed from the spec's excitation map.
SignalBundle read_signals_csv(const std::string& path, const NetworkSpec& spec);

} // namespace netid
