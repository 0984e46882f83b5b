#pragma once

#include "netid/mcem.hpp"
#include "netid/network.hpp"
#include "netid/simulate.hpp"

#include <vector>

namespace netid {

struct MisoInput {
    NodeId node = 0;
    int nb = 1;  // numerator coefficients at lags 1..nb
    int nf = 0;  // monic denominator order
};

/// Multi-input single-output Box-Jenkins structure
/// w_j = u_j + sum_k (B_k / F_k) w_k + (C / D) e.
struct MisoSpec {
    NodeId output = 0;
    std::vector<MisoInput> inputs;
    int nc = 0;
    int nd = 0;

    Index parameter_count() const;
    void validate() const;
};

/// Orders of the true modules G_jk and noise model H_j, for k in `inputs`.
MisoSpec true_order_miso(const NetworkSpec& spec, NodeId output, const std::vector<NodeId>& inputs);

struct PemOptions {
    int restarts = 4;  // seeded perturbations of the least-squares start
    std::uint64_t seed = 1;
    LmOptions lm{};
};

struct PemResult {
    Vector params;  // per input [b, f], then c, then d
    double objective = 0.0;
    bool converged = false;
    int starts = 0;
    std::vector<double> trace;  // objective per accepted step of the best start
    std::vector<TransferFunction> modules;  // one per input, in MisoSpec order
    TransferFunction noise;                 // C / D

    /// Parameters [b, f] of the module from `node`.
    Vector module_params(const MisoSpec& miso, NodeId node) const;
};

/// One-step-ahead prediction errors of the MISO model at `params`.
Vector pem_residual(const MisoSpec& miso, const SignalBundle& signals, const Vector& params);

/// Common-denominator ARX least-squares start.
Vector pem_initial_guess(const MisoSpec& miso, const SignalBundle& signals);

/// Direct prediction-error method: minimizes the sum of squared prediction
/// errors over all module and noise parameters from the least-squares start
/// and its seeded perturbations, keeping the best local minimum.
PemResult direct_pem(const SignalBundle& signals, const MisoSpec& miso, const PemOptions& options = {});

/// Kernel-based direct method without a missing node: the EM machinery with
/// every predictor input measured.
EstimateResult ebdm(const SignalBundle& signals, const PredictorModel& model, const McemConfig& config);

} // namespace netid
