#include "support.hpp"

#include <doctest.h>

using namespace netid;
using namespace netid::testing;

namespace {

Matrix decaying_second_moment(Index l, double scale, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Matrix e = Matrix::Zero(l, l);
    for (int draw = 0; draw < 20; ++draw) {
        Vector g(l);
        for (Index k = 0; k < l; ++k) g(k) = std::pow(0.7, static_cast<double>(k + 1)) * (1.0 + 0.3 * random_vector(rng, 1)(0));
        e += g * g.transpose() / 20.0;
    }
    return scale * e;
}

double grid_argmin(const std::function<double(double)>& f) {
    double best = kBetaFloor, value = f(best);
    for (int k = 0; k < 10000; ++k) {
        const double beta = kBetaFloor + (1.0 - 2.0 * kBetaFloor) * k / 9999.0;
        const double v = f(beta);
        if (v < value) {
            value = v;
            best = beta;
        }
    }
    return best;
}

struct Frozen {
    StackedModel stacked;
    HyperState eta;
    SampleSet stats;
};

Frozen frozen_sample_set(bool use_additional, const ThetaParam& param, std::uint64_t seed) {
    const PredictorModel model = four_node_model(use_additional);
    const LatentLayout layout = make_layout(model, 4);
    std::mt19937_64 rng(seed);
    Frozen fz;
    fz.eta = random_hyper(layout, param, rng);
    fz.stacked = build_stacked_model(model, four_node_signals(40, seed), layout, param, fz.eta.theta);
    GibbsConfig cfg;
    cfg.samples = 30;
    cfg.burn_in = 20;
    cfg.seed = seed;
    fz.stats = gibbs_run(fz.stacked, fz.eta, cfg);
    return fz;
}

/// Sum over time of log det S + tr(S^{-1} E_t) for the (a, m) residual pair.
double pair_noise_objective(const SampleSet& st, double sa, double sam, double sm) {
    Eigen::Matrix2d s;
    s << sa, sam, sam, sm;
    const Eigen::Matrix2d inv = s.inverse();
    double acc = 0.0;
    for (Index t = 0; t < st.residual_mean.rows(); ++t) {
        Eigen::Matrix2d e;
        const double ma = st.residual_mean(t, 0), mm = st.residual_mean(t, 1);
        e << ma * ma + st.residual_scatter(t, 0), ma * mm + st.residual_scatter(t, 1), ma * mm + st.residual_scatter(t, 1),
            mm * mm + st.residual_scatter(t, 2);
        acc += std::log(s.determinant()) + (inv * e).trace();
    }
    return acc;
}

} // namespace

TEST_CASE("scale estimate hand example") {
    const Vector s_hat{{0.5, 0.25}};
    CHECK(lambda_hat(s_hat * s_hat.transpose(), 0.5) == 0.25);
}

TEST_CASE("beta updates match a dense grid search") {
    for (double scale : {0.1, 1.0, 10.0}) {
        for (Index l : {5, 15}) {
            CAPTURE(scale);
            CAPTURE(l);
            const Matrix e = decaying_second_moment(l, scale, 3 + l);
            const KernelHyper free_prev{1.0, 0.5, false};
            const KernelHyper free_next = update_kernel_hyper(e, free_prev);
            const double free_grid = grid_argmin([&](double b) { return kernel_profile_objective(e, b); });
            CHECK(std::abs(free_next.beta - free_grid) < 1e-3);
            CHECK(free_next.lambda == doctest::Approx(lambda_hat(e, free_next.beta)));

            const KernelHyper fixed_prev{1.0, 0.5, true};
            const KernelHyper fixed_next = update_kernel_hyper(e, fixed_prev);
            const double fixed_grid =
                grid_argmin([&](double b) { return kernel_objective(e, KernelHyper{1.0, b, true}); });
            CHECK(std::abs(fixed_next.beta - fixed_grid) < 1e-3);
            CHECK(fixed_next.lambda == 1.0);
        }
    }
}

TEST_CASE("single-coefficient fixed-scale update is the clamped second moment") {
    for (double m2 : {1e-6, 0.05, 0.3, 0.9, 2.0}) {
        const Matrix e = Matrix::Constant(1, 1, m2);
        const KernelHyper next = update_kernel_hyper(e, KernelHyper{1.0, 0.5, true});
        CHECK(next.beta == doctest::Approx(std::clamp(m2, kBetaFloor, 1.0 - kBetaFloor)).epsilon(1e-6));
    }
}

TEST_CASE("zero statistics floor the scale") {
    const KernelHyper next = update_kernel_hyper(Matrix::Zero(4, 4), KernelHyper{0.7, 0.6, false});
    CHECK(next.lambda == kLambdaFloor);
    CHECK(next.beta == 0.6);
    const KernelHyper fixed = update_kernel_hyper(Matrix::Zero(4, 4), KernelHyper{1.0, 0.6, true});
    CHECK(fixed.lambda == 1.0);
}

TEST_CASE("linear target update equals a generic minimizer") {
    const ThetaParam fir = ThetaParam::fir(5);
    const Frozen fz = frozen_sample_set(false, fir, 7);
    const ThetaUpdate closed = update_theta(fz.stats, fir, Vector::Zero(5));
    CHECK_FALSE(closed.regularized);
    const Index n = fz.stats.b_hat.size();
    auto model = [&](const Vector& theta) {
        const Matrix basis = fir.basis(n);
        const Vector g = basis * theta;
        LocalModel m;
        m.value = theta_objective(fz.stats, fir, theta);
        m.gradient = 2.0 * basis.transpose() * (fz.stats.a_hat * g - fz.stats.b_hat);
        m.hessian = 2.0 * basis.transpose() * fz.stats.a_hat * basis;
        return m;
    };
    auto value = [&](const Vector& theta) { return theta_objective(fz.stats, fir, theta); };
    const LmResult lm = levenberg_marquardt(model, value, [](const Vector&) { return true; }, Vector::Zero(5));
    CHECK(rel_err(closed.theta, lm.x) < 1e-6);
    CHECK(closed.objective <= lm.value + 1e-10);
}

TEST_CASE("singular normal equations are regularized") {
    SampleSet st;
    st.a_hat = Matrix::Zero(6, 6);
    st.a_hat(0, 0) = 1.0;
    st.b_hat = Vector::Zero(6);
    st.b_hat(0) = 0.5;
    const ThetaUpdate up = update_theta(st, ThetaParam::fir(3), Vector::Zero(3));
    CHECK(up.regularized);
    CHECK(up.theta(0) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(up.theta.allFinite());
}

TEST_CASE("each M-step sub-update does not increase its objective") {
    for (bool add : {false, true}) {
        for (const ThetaParam& param : {ThetaParam::rational(2, 2), ThetaParam::fir(6)}) {
            const Frozen fz = frozen_sample_set(add, param, add ? 21 : 22);
            const SampleSet& st = fz.stats;
            const LatentLayout& lay = fz.stacked.layout;
            const HyperState next = m_step(st, fz.stacked, fz.eta);
            for (Group g : {Group::s, Group::b, Group::f}) {
                const GroupMoments& mom = g == Group::s ? st.s : g == Group::b ? st.b : st.f;
                for (std::size_t q = 0; q < lay.group(g).size(); ++q) {
                    const Matrix e = second_moment(mom, lay.group(g)[q].offset, lay.l);
                    CHECK(kernel_objective(e, next.group(g)[q]) <= kernel_objective(e, fz.eta.group(g)[q]) + 1e-10);
                }
            }
            const double j_next = theta_objective(st, param, next.theta);
            CHECK(j_next <= theta_objective(st, param, fz.eta.theta) + 1e-10);

            const double n = static_cast<double>(fz.stacked.n);
            auto q_j = [&](double s2) { return n * std::log(s2) + j_next / s2; };
            CHECK(q_j(next.sigma_j2) <= q_j(fz.eta.sigma_j2) + 1e-10);
            if (add) {
                CHECK(pair_noise_objective(st, next.sigma_a2, next.sigma_am, next.sigma_m2) <=
                      pair_noise_objective(st, fz.eta.sigma_a2, fz.eta.sigma_am, fz.eta.sigma_m2) + 1e-10);
            } else {
                auto q_m = [&](double s2) { return pair_noise_objective(st, 1.0, 0.0, s2); };
                CHECK(q_m(next.sigma_m2) <= q_m(fz.eta.sigma_m2) + 1e-10);
            }
        }
    }
}

TEST_CASE("zero residuals give zero raw noise and floored M-step noise") {
    const Frozen fz = frozen_sample_set(true, ThetaParam::fir(3), 5);
    SampleSet st = fz.stats;
    st.a_hat.setZero();
    st.b_hat.setZero();
    st.c_hat = 0.0;
    st.residual_mean.setZero();
    st.residual_scatter.setZero();
    const NoiseUpdate raw = update_noise(st, fz.stacked.layout, 0.0);
    CHECK(raw.sigma_j2 == 0.0);
    CHECK(raw.sigma_m2 == 0.0);
    CHECK(raw.sigma_a2 == 0.0);
    CHECK(raw.sigma_am == 0.0);
    const HyperState next = m_step(st, fz.stacked, fz.eta);
    CHECK(next.sigma_j2 == kSigmaFloor);
    CHECK(next.sigma_m2 == kSigmaFloor);
    CHECK(next.sigma_a2 == kSigmaFloor);
}

TEST_CASE("clamping the true missing signal reproduces the fully measured estimator") {
    const SignalBundle signals = four_node_signals(60, 13);
    McemConfig cfg;
    cfg.l = 6;
    cfg.gibbs.samples = 10;
    cfg.gibbs.burn_in = 0;
    cfg.max_iters = 4;
    cfg.tol = 0.0;
    cfg.seed = 3;
    const PredictorModel measured = build_predictor_model(four_node(), {3, 1}, {1, 2, 3, 4}, std::nullopt);
    const EstimateResult full = run_mcem(signals, measured, cfg);
    const EstimateResult clamped = run_mcem(signals, four_node_model(false), cfg, signals.node(2));
    CHECK(full.iterations == 4);
    CHECK(clamped.iterations == 4);
    CHECK(rel_err(clamped.eta.theta, full.eta.theta) < 1e-6);
    CHECK(clamped.eta.sigma_j2 == doctest::Approx(full.eta.sigma_j2).epsilon(1e-6));
    for (std::size_t q = 0; q < full.eta.s.size(); ++q) {
        CHECK(clamped.eta.s[q].beta == doctest::Approx(full.eta.s[q].beta).epsilon(1e-6));
        CHECK_FALSE(clamped.eta.s[q].fixed_lambda);
    }
}

TEST_CASE("fully measured estimation recovers the target module") {
    const SignalBundle signals = four_node_signals(400, 31);
    McemConfig cfg;
    cfg.gibbs.samples = 50;
    cfg.seed = 2;
    const PredictorModel measured = build_predictor_model(four_node(), {3, 1}, {1, 2, 3, 4}, std::nullopt);
    const EstimateResult est = run_mcem(signals, measured, cfg);
    const Vector truth = impulse_response(four_node().module(3, 1), 400);
    CHECK(fit_score(truth, est.g) > 0.8);
    CHECK(est.eta.sigma_j2 == doctest::Approx(0.5).epsilon(0.3));
    CHECK(est.convergence_trace.size() == static_cast<std::size_t>(est.iterations));
}

TEST_CASE("estimation is deterministic and validates its settings") {
    const SignalBundle signals = four_node_signals(50, 17);
    McemConfig cfg;
    cfg.l = 5;
    cfg.gibbs.samples = 5;
    cfg.gibbs.burn_in = 5;
    cfg.max_iters = 2;
    const EstimateResult a = run_mcem(signals, four_node_model(true), cfg);
    const EstimateResult b = run_mcem(signals, four_node_model(true), cfg);
    CHECK(a.eta.theta == b.eta.theta);
    CHECK(a.w_m_hat == b.w_m_hat);
    CHECK(a.convergence_trace == b.convergence_trace);

    McemConfig bad = cfg;
    bad.max_iters = 0;
    CHECK_THROWS_AS(run_mcem(signals, four_node_model(true), bad), InvalidInput);
    bad = cfg;
    bad.theta_init = Vector::Zero(3);
    CHECK_THROWS_AS(run_mcem(signals, four_node_model(true), bad), InvalidInput);
    bad.theta_init = Vector{{0.0, 0.0, 0.0, 2.0}};
    CHECK_THROWS_AS(run_mcem(signals, four_node_model(true), bad), InvalidInput);
    const PredictorModel measured = build_predictor_model(four_node(), {3, 1}, {1, 2, 3, 4}, std::nullopt);
    CHECK_THROWS_AS(run_mcem(signals, measured, cfg, signals.node(2)), InvalidInput);
}

TEST_CASE("initial hyperparameters are shared by name across layouts") {
    const SignalBundle signals = four_node_signals(50, 1);
    McemConfig cfg;
    cfg.l = 5;
    const LatentLayout plain = make_layout(four_node_model(false), 5);
    const LatentLayout extended = make_layout(four_node_model(true), 5);
    const auto a = initial_hyper(build_stacked_model(four_node_model(false), signals, plain, cfg.param, Vector::Zero(4)), cfg);
    const auto b = initial_hyper(build_stacked_model(four_node_model(true), signals, extended, cfg.param, Vector::Zero(4)), cfg);
    CHECK(a.theta == b.theta);
    for (std::size_t q = 0; q < a.s.size(); ++q) CHECK(a.s[q].beta == b.s[q].beta);
    CHECK(a.s[1].fixed_lambda);
    CHECK(a.s[1].lambda == 1.0);
    CHECK((a.theta.array().abs() <= 0.1).all());
}
