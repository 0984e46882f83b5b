#pragma once

#include "netid/kernel.hpp"
#include "netid/network.hpp"
#include "netid/simulate.hpp"
#include "netid/toeplitz.hpp"

#include <string>
#include <vector>

namespace netid {

/// Latent groups: s drives the target output, b the missing node, f the additional node.
enum class Group { s, b, f };

enum class SourceKind {
    self,        // the output's own predictor filter, input w_k - u_k
    node,        // a node signal w_k
    excitation,  // a processed excitation u_k
};

struct LatentBlock {
    std::string name;  // "s:self", "s:w4", "b:u2", ...
    Group group = Group::s;
    SourceKind kind = SourceKind::node;
    NodeId node = 0;         // the source node (the output itself for self blocks)
    Index offset = 0;        // start within the group vector
    bool from_missing = false;  // regressor built from the missing signal
};

/// Block order: self, then D_k^w entries, then D_k^u entries, each ascending.
struct LatentLayout {
    Index l = 0;
    NodeId output = 0;       // j
    NodeId input = 0;        // i
    NodeId missing = 0;      // m, 0 when absent
    NodeId additional = 0;   // a, 0 when absent
    std::vector<LatentBlock> s, b, f;

    const std::vector<LatentBlock>& group(Group g) const;
    Index size(Group g) const { return static_cast<Index>(group(g).size()) * l; }
    bool has_missing() const { return missing != 0; }
    bool has_additional() const { return additional != 0; }
};

/// Raises InvalidInput for more than one additional node.
LatentLayout make_layout(const PredictorModel& model, Index l);

/// Parameterization of the target module G_ji(q, theta).
///
/// rational: theta = [b_1..b_nb, a_1..a_na], G = (b_1 q^-1 + ...)/(1 + a_1 q^-1 + ...).
/// fir:      theta = [g_1..g_nb], G = g_1 q^-1 + ... + g_nb q^-nb.
struct ThetaParam {
    enum class Kind { fir, rational };
    Kind kind = Kind::rational;
    int nb = 2;
    int na = 2;

    static ThetaParam fir(int length) { return {Kind::fir, length, 0}; }
    static ThetaParam rational(int nb, int na) { return {Kind::rational, nb, na}; }

    Index size() const { return nb + (kind == Kind::rational ? na : 0); }
    bool is_linear() const { return kind == Kind::fir || na == 0; }
    TransferFunction transfer_function(const Vector& theta) const;
    Vector from_transfer_function(const TransferFunction& tf) const;
    /// First n impulse coefficients g(1..n).
    Vector impulse(const Vector& theta, Index n) const;
    /// d impulse / d theta, n x size().
    Matrix jacobian(const Vector& theta, Index n) const;
    /// Linear parameterizations only: g = basis(n) * theta.
    Matrix basis(Index n) const;
    bool admissible(const Vector& theta) const;
};

/// Model parameters eta.
struct HyperState {
    Vector theta;
    std::vector<KernelHyper> s, b, f;
    double sigma_j2 = 1.0;
    double sigma_m2 = 1.0;
    double sigma_a2 = 1.0;
    double sigma_am = 0.0;  // signed covariance of (xi_a, xi_m)

    std::vector<KernelHyper>& group(Group g);
    const std::vector<KernelHyper>& group(Group g) const;
};

/// Canonical flattening [theta, log lambda (free blocks), beta, log sigma^2, sigma_am].
Vector flatten(const HyperState& eta, const LatentLayout& layout);

/// Noise covariance of the stacked outputs, ordered (j, a, m) or (j, m).
Matrix sigma_bar(const HyperState& eta, const LatentLayout& layout);

struct Priors {
    Matrix k1, k2, k3;
};

/// Block-diagonal prior covariances in latent-vector order.
Priors assemble_priors(const LatentLayout& layout, const HyperState& eta);

/// The stacked linear-Gaussian model. Each latent block's regressor is the
/// l-column lower Toeplitz matrix of a base vector; the bases are kept
/// instead of dense matrices and materialized on demand.
struct StackedModel {
    LatentLayout layout;
    ThetaParam param;
    Vector theta;
    Vector g;  // first N impulse coefficients of G_ji(q, theta)
    Index n = 0;

    Vector w_j, u_j, w_a, u_a, w_m, u_m;
    Vector input_delayed;     // [0 w_i(1) .. w_i(N-1)], base of W_ji
    Vector input_correction;  // [0 0 -w_i(1) .. -w_i(N-2)]
    std::vector<Vector> s_base, b_base, f_base;

    const std::vector<Vector>& bases(Group g) const;
    std::vector<Vector>& bases(Group g);

    /// W (N x |s|), R (N x |b|) and Q (N x |f|).
    Matrix regressor(Group g) const;
    /// W_ji, N x N.
    Matrix target_regressor() const;
    /// w_j - u_j - W_ji g.
    Vector target_residual_base() const;
    /// Stacked outputs [w_j; w_a; w_m] (w_a omitted without additional node).
    Vector stacked_output() const;
    /// Block-diagonal W_D matching stacked_output(), columns ordered (s, f, b).
    Matrix stacked_regressor() const;
    Vector stacked_known_input() const;
    /// W_D [s; f; b] + [W_ji g; 0; 0] + u_Y.
    Vector stacked_mean(const Vector& s, const Vector& b, const Vector& f) const;
};

/// Assembles the stacked model. The missing node's row of `signals.w` is
/// never read; its slot is zero until swap_missing_signal fills it.
StackedModel build_stacked_model(const PredictorModel& model, const SignalBundle& signals, const LatentLayout& layout,
                                 const ThetaParam& param, const Vector& theta);

/// Rebuilds every block whose source is the missing signal.
StackedModel swap_missing_signal(const StackedModel& stacked, const Vector& w_m);
void swap_missing_signal_inplace(StackedModel& stacked, const Vector& w_m);

/// Recomputes g and the target self block for a new theta.
void set_theta(StackedModel& stacked, const Vector& theta);

} // namespace netid
