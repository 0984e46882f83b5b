#pragma once

#include "netid/regression.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace netid {

/// Gaussian N(mean, P) held through its precision P^{-1} = U U^T, U upper
/// triangular and banded. The covariance factor F = U^{-T} is lower
/// triangular with P = F F^T, and draws are mean + F z.
class GaussianBlock {
public:
    GaussianBlock() = default;

    /// band(t, d) = Lambda(t, t + d) for d = 0..p; h = Lambda * mean.
    static GaussianBlock from_precision_band(const Matrix& band, const Vector& h, const std::string& name = "block",
                                             int* jitter_events = nullptr);
    static GaussianBlock from_precision(const Matrix& precision, const Vector& h, const std::string& name = "block",
                                        int* jitter_events = nullptr);

    Index size() const { return mean_.size(); }
    Index bandwidth() const { return p_; }
    const Vector& mean() const { return mean_; }

    Vector draw(const Vector& z) const;
    Matrix covariance_factor() const;
    Matrix covariance() const;
    Matrix precision() const;
    double log_density(const Vector& x) const;

private:
    Vector solve_lower(Vector y) const;        // L' x = y
    Vector solve_lower_adjoint(Vector y) const;  // L'^T x = y

    Index n_ = 0;
    Index p_ = 0;
    Matrix factor_;  // factor_(i, k) = L'(i, i - p + k), L' L'^T = J Lambda J
    Vector mean_;
};

enum class BlockId { w_m = 0, s = 1, b = 2, f = 3 };

struct GibbsConfig {
    Index samples = 100;   // M
    Index burn_in = 2000;  // B
    Index thinning = 1;    // kappa
    std::uint64_t seed = 1;
    bool keep_draws = false;
    // Frozen blocks keep their starting value; used to sample one conditional in isolation.
    bool freeze_s = false;
    bool freeze_b = false;
    bool freeze_f = false;
};

struct GibbsState {
    Vector w_m, s, b, f;
};

/// Zero initial state sized for the layout.
GibbsState initial_state(const StackedModel& stacked);

/// Exact Gaussian full conditional of one block given the others. The
/// stacked model must carry state.w_m as its missing signal.
GaussianBlock conditional(BlockId block, const StackedModel& stacked, const GibbsState& state, const HyperState& eta);

struct GroupMoments {
    Vector mean;     // (1/M) sum x_i
    Matrix scatter;  // (1/M) sum (x_i - mean)(x_i - mean)^T
};

/// Sufficient statistics of the retained draws for the M-step.
struct SampleSet {
    Index retained = 0;
    GroupMoments s, b, f;
    Vector w_m_mean;

    // Target-parameter statistics: the Monte Carlo objective is
    // g^T a_hat g - 2 b_hat^T g + c_hat.
    Matrix a_hat;
    Vector b_hat;
    double c_hat = 0.0;

    // Per-time mean and scatter of the (xi_a, xi_m) residuals; columns (a, m)
    // for the mean and (aa, am, mm) for the scatter. Without an additional node
    // the a entries are zero.
    Matrix residual_mean;
    Matrix residual_scatter;

    int jitter_events = 0;
    std::vector<GibbsState> draws;  // retained states when keep_draws
};

/// Blocked Gibbs sweeps in the order w_m, s, b, f; burn-in, thinning and
/// single-pass statistics. A clamped missing signal is held fixed and not
/// sampled. Burn-in is skipped when the model has no missing node, since
/// the chain then draws exactly from the posterior. The chain starts from
/// `start` when given, else from zeros.
SampleSet gibbs_run(const StackedModel& stacked, const HyperState& eta, const GibbsConfig& config,
                    const std::optional<Vector>& clamp_missing = std::nullopt,
                    const std::optional<GibbsState>& start = std::nullopt);

/// Stream identifier of each block's normal draws: derive_seed(seed, {id}).
std::uint64_t block_stream_seed(std::uint64_t seed, BlockId block);

} // namespace netid
