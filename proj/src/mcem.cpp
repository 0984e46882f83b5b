#include "netid/mcem.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <string_view>

namespace netid {

Matrix second_moment(const GroupMoments& moments, Index offset, Index l) {
    const Vector mean = moments.mean.segment(offset, l);
    return mean * mean.transpose() + moments.scatter.block(offset, offset, l, l);
}

double kernel_objective(const Matrix& second, const KernelHyper& hyper) {
    const auto fac = factorize(hyper.lambda, hyper.beta, second.rows());
    return fac.log_det() + fac.trace_inverse(second);
}

double kernel_profile_objective(const Matrix& second, double beta) {
    const Index l = second.rows();
    const auto fac = factorize(1.0, beta, l);
    return fac.log_det() + static_cast<double>(l) * std::log(fac.trace_inverse(second));
}

double lambda_hat(const Matrix& second, double beta) {
    const Index l = second.rows();
    return std::max(factorize(1.0, beta, l).trace_inverse(second) / static_cast<double>(l), kLambdaFloor);
}

KernelHyper update_kernel_hyper(const Matrix& second, const KernelHyper& prev) {
    KernelHyper out = prev;
    if (!(second.trace() > 0.0)) {
        if (!prev.fixed_lambda) out.lambda = kLambdaFloor;
        return out;
    }
    const double lo = kBetaFloor;
    const double hi = 1.0 - kBetaFloor;
    const double prev_beta = std::clamp(prev.beta, lo, hi);
    if (prev.fixed_lambda) {
        auto objective = [&](double beta) { return kernel_objective(second, KernelHyper{1.0, beta, true}); };
        const ScalarMinimum best = minimize_scalar(objective, lo, hi);
        out.lambda = 1.0;
        out.beta = best.value <= objective(prev_beta) ? best.x : prev_beta;
        return out;
    }
    auto objective = [&](double beta) { return kernel_profile_objective(second, beta); };
    const ScalarMinimum best = minimize_scalar(objective, lo, hi);
    out.beta = best.value <= objective(prev_beta) ? best.x : prev_beta;
    out.lambda = lambda_hat(second, out.beta);
    return out;
}

double theta_objective(const SampleSet& stats, const ThetaParam& param, const Vector& theta) {
    const Vector g = param.impulse(theta, stats.b_hat.size());
    return g.dot(stats.a_hat * g) - 2.0 * stats.b_hat.dot(g) + stats.c_hat;
}

ThetaUpdate update_theta(const SampleSet& stats, const ThetaParam& param, const Vector& theta_prev) {
    const Index n = stats.b_hat.size();
    ThetaUpdate out;
    if (param.is_linear()) {
        const Matrix basis = param.basis(n);
        Matrix normal = basis.transpose() * stats.a_hat * basis;
        const Vector rhs = basis.transpose() * stats.b_hat;
        Eigen::LDLT<Matrix> ldlt(normal);
        const double scale = std::max(normal.diagonal().cwiseAbs().maxCoeff(), 1.0);
        const bool singular = ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
                              ldlt.vectorD().cwiseAbs().minCoeff() <= 1e-14 * scale;
        if (singular) {
            normal.diagonal().array() += 1e-8;
            ldlt.compute(normal);
            out.regularized = true;
        }
        out.theta = ldlt.solve(rhs);
        out.objective = theta_objective(stats, param, out.theta);
        return out;
    }
    auto model = [&](const Vector& theta) {
        const Vector g = param.impulse(theta, n);
        const Matrix jac = param.jacobian(theta, n);
        const Vector ag = stats.a_hat * g;
        LocalModel m;
        m.value = g.dot(ag) - 2.0 * stats.b_hat.dot(g) + stats.c_hat;
        m.gradient = 2.0 * jac.transpose() * (ag - stats.b_hat);
        m.hessian = 2.0 * jac.transpose() * stats.a_hat * jac;
        return m;
    };
    auto value = [&](const Vector& theta) { return theta_objective(stats, param, theta); };
    auto admissible = [&](const Vector& theta) { return param.admissible(theta); };
    const LmResult lm = levenberg_marquardt(model, value, admissible, theta_prev);
    out.theta = lm.x;
    out.objective = lm.value;
    return out;
}

NoiseUpdate update_noise(const SampleSet& stats, const LatentLayout& layout, double theta_objective_value) {
    const double n = static_cast<double>(stats.b_hat.size());
    NoiseUpdate out;
    out.sigma_j2 = theta_objective_value / n;
    if (layout.has_missing()) {
        const auto& mean = stats.residual_mean;
        const auto& scatter = stats.residual_scatter;
        out.sigma_m2 = (mean.col(1).squaredNorm() + scatter.col(2).sum()) / n;
        if (layout.has_additional()) {
            out.sigma_a2 = (mean.col(0).squaredNorm() + scatter.col(0).sum()) / n;
            out.sigma_am = (mean.col(0).dot(mean.col(1)) + scatter.col(1).sum()) / n;
        }
    }
    return out;
}

HyperState m_step(const SampleSet& stats, const StackedModel& stacked, const HyperState& prev, bool* regularized) {
    const LatentLayout& lay = stacked.layout;
    HyperState next = prev;
    for (Group g : {Group::s, Group::b, Group::f}) {
        const auto& blocks = lay.group(g);
        const GroupMoments& moments = g == Group::s ? stats.s : g == Group::b ? stats.b : stats.f;
        for (std::size_t q = 0; q < blocks.size(); ++q) {
            next.group(g)[q] = update_kernel_hyper(second_moment(moments, blocks[q].offset, lay.l), prev.group(g)[q]);
        }
    }
    const ThetaUpdate th = update_theta(stats, stacked.param, prev.theta);
    if (regularized) *regularized = th.regularized;
    next.theta = th.theta;
    const NoiseUpdate noise = update_noise(stats, lay, th.objective);
    next.sigma_j2 = std::max(noise.sigma_j2, kSigmaFloor);
    if (lay.has_missing()) next.sigma_m2 = std::max(noise.sigma_m2, kSigmaFloor);
    if (lay.has_additional()) {
        next.sigma_a2 = std::max(noise.sigma_a2, kSigmaFloor);
        const double bound = (1.0 - 1e-6) * std::sqrt(next.sigma_a2 * next.sigma_m2);
        next.sigma_am = std::clamp(noise.sigma_am, -bound, bound);
    }
    return next;
}

namespace {

std::uint64_t name_key(std::string_view name) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : name) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

double uniform(std::uint64_t seed, std::string_view name, double lo, double hi) {
    Rng rng(derive_seed(seed, {2000, name_key(name)}));
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double sample_variance(const Vector& x) {
    if (x.size() < 2) return 1.0;
    const double v = (x.array() - x.mean()).square().sum() / static_cast<double>(x.size() - 1);
    return v > 0.0 ? v : 1.0;
}

} // namespace

HyperState initial_hyper(const StackedModel& stacked, const McemConfig& config, bool clamped) {
    const LatentLayout& lay = stacked.layout;
    HyperState eta;
    if (config.theta_init) {
        if (config.theta_init->size() != config.param.size()) throw InvalidInput("initial theta has wrong length");
        eta.theta = *config.theta_init;
    } else {
        eta.theta.resize(config.param.size());
        for (Index k = 0; k < eta.theta.size(); ++k) {
            eta.theta(k) = uniform(config.seed, "theta" + std::to_string(k), -0.1, 0.1);
        }
    }
    for (Group g : {Group::s, Group::b, Group::f}) {
        for (const auto& blk : lay.group(g)) {
            KernelHyper h;
            h.fixed_lambda = blk.from_missing && !clamped;
            h.beta = uniform(config.seed, blk.name + ":beta", 0.5, 0.9);
            h.lambda = h.fixed_lambda ? 1.0 : uniform(config.seed, blk.name + ":lambda", 0.1, 1.0);
            eta.group(g).push_back(h);
        }
    }
    const double var_j = sample_variance(stacked.w_j);
    eta.sigma_j2 = uniform(config.seed, "sigma_j2", 0.5, 1.5) * var_j;
    if (lay.has_missing()) eta.sigma_m2 = uniform(config.seed, "sigma_m2", 0.5, 1.5) * var_j;
    if (lay.has_additional()) {
        eta.sigma_a2 = uniform(config.seed, "sigma_a2", 0.5, 1.5) * sample_variance(stacked.w_a);
        eta.sigma_am = 0.0;
    }
    return eta;
}

EstimateResult run_mcem(const SignalBundle& signals, const PredictorModel& model, const McemConfig& config,
                        const std::optional<Vector>& clamp_missing) {
    if (config.max_iters < 1) throw InvalidInput("max_iters must be >= 1");
    if (!(config.tol >= 0.0)) throw InvalidInput("tol must be >= 0");
    const LatentLayout layout = make_layout(model, config.l);
    const Vector zero_theta = Vector::Zero(config.param.size());
    StackedModel stacked = build_stacked_model(model, signals, layout, config.param, zero_theta);
    if (clamp_missing) {
        if (!layout.has_missing()) throw InvalidInput("clamped missing signal given but model has no missing node");
        swap_missing_signal_inplace(stacked, *clamp_missing);
    }
    HyperState eta = initial_hyper(stacked, config, clamp_missing.has_value());
    if (!config.param.admissible(eta.theta)) throw InvalidInput("initial theta is not admissible");

    EstimateResult result;
    for (Index it = 0; it < config.max_iters; ++it) {
        set_theta(stacked, eta.theta);
        GibbsConfig gcfg = config.gibbs;
        gcfg.seed = derive_seed(config.seed, {1000, static_cast<std::uint64_t>(config.common_random_numbers ? 0 : it)});
        const SampleSet stats = gibbs_run(stacked, eta, gcfg, clamp_missing);
        bool regularized = false;
        const HyperState next = m_step(stats, stacked, eta, &regularized);
        result.jitter_events += stats.jitter_events;
        result.regularized_steps += regularized ? 1 : 0;

        const Vector prev_flat = flatten(eta, layout);
        const Vector next_flat = flatten(next, layout);
        if (!next_flat.allFinite()) {
            std::ostringstream msg;
            msg << "non-finite parameters at EM iteration " << it + 1 << ": [" << next_flat.transpose() << "]";
            throw NumericalError(msg.str());
        }
        const double change = (next_flat - prev_flat).norm() / std::max(prev_flat.norm(), 1e-300);
        result.convergence_trace.push_back(change);
        result.iterations = it + 1;
        result.w_m_hat = stats.w_m_mean;
        eta = next;
        if (change < config.tol) {
            result.converged = true;
            break;
        }
    }
    result.eta = eta;
    result.g = config.param.impulse(eta.theta, stacked.n);
    return result;
}

} // namespace netid
