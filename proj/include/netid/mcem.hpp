#pragma once

#include "netid/gibbs.hpp"
#include "netid/optim.hpp"

#include <optional>
#include <vector>

namespace netid {

constexpr double kLambdaFloor = 1e-8;
constexpr double kBetaFloor = 1e-4;
constexpr double kSigmaFloor = 1e-10;

/// Second moment E = mean mean^T + scatter of one impulse-response block.
Matrix second_moment(const GroupMoments& moments, Index offset, Index l);

/// log det K + tr(K^{-1} E) for K = lambda K_beta.
double kernel_objective(const Matrix& second, const KernelHyper& hyper);

/// Profile of the kernel objective over lambda: log det K_beta + l log tr(K_beta^{-1} E).
double kernel_profile_objective(const Matrix& second, double beta);

/// tr(K_beta^{-1} E) / l, the scale minimizing the kernel objective at beta.
double lambda_hat(const Matrix& second, double beta);

/// Free-lambda update: beta minimizes the profile objective and
/// lambda = tr(K_beta^{-1} E) / l. Fixed-lambda update: beta minimizes
/// log det K_beta + tr(K_beta^{-1} E) with lambda = 1. The previous beta is
/// kept when the search does not improve on it.
KernelHyper update_kernel_hyper(const Matrix& second, const KernelHyper& prev);

/// Monte Carlo target objective g^T A g - 2 b^T g + c at theta.
double theta_objective(const SampleSet& stats, const ThetaParam& param, const Vector& theta);

struct ThetaUpdate {
    Vector theta;
    double objective = 0.0;
    bool regularized = false;  // the linear normal equations needed a ridge
};

/// Closed form for linear parameterizations, Levenberg-Marquardt from
/// theta_prev otherwise.
ThetaUpdate update_theta(const SampleSet& stats, const ThetaParam& param, const Vector& theta_prev);

struct NoiseUpdate {
    double sigma_j2 = 0.0;
    double sigma_m2 = 0.0;
    double sigma_a2 = 0.0;
    double sigma_am = 0.0;
};

/// sigma_j^2 = objective / N and the per-time averaged (a, m) residual
/// second moments. No floors are applied.
NoiseUpdate update_noise(const SampleSet& stats, const LatentLayout& layout, double theta_objective_value);

/// One full M-step with floors and a positive definite (a, m) covariance.
HyperState m_step(const SampleSet& stats, const StackedModel& stacked, const HyperState& prev, bool* regularized = nullptr);

struct McemConfig {
    Index l = 15;
    GibbsConfig gibbs;
    Index max_iters = 50;
    double tol = 1e-2;
    ThetaParam param = ThetaParam::rational(2, 2);
    std::uint64_t seed = 1;
    bool common_random_numbers = false;
    std::optional<Vector> theta_init;
};

/// Seeded initial hyperparameters: theta ~ U[-0.1, 0.1], beta ~ U[0.5, 0.9],
/// lambda ~ U[0.1, 1] (1 for fixed blocks), noise variances a uniform
/// fraction in [0.5, 1.5] of the output sample variances. Each entry has its
/// own stream keyed by name so shared blocks start identically across layouts.
HyperState initial_hyper(const StackedModel& stacked, const McemConfig& config, bool clamped = false);

struct EstimateResult {
    HyperState eta;
    Vector g;        // first N impulse coefficients of the estimated target
    Vector w_m_hat;  // posterior-mean reconstruction at the final iteration
    Index iterations = 0;
    bool converged = false;
    std::vector<double> convergence_trace;
    int jitter_events = 0;
    int regularized_steps = 0;
};

/// Monte Carlo EM. A clamped missing signal is used as if measured: it is
/// never resampled and its blocks get free scale hyperparameters.
EstimateResult run_mcem(const SignalBundle& signals, const PredictorModel& model, const McemConfig& config,
                        const std::optional<Vector>& clamp_missing = std::nullopt);

} // namespace netid
