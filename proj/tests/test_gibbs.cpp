#include "oracles.hpp"

#include <doctest.h>

#include <numbers>

using namespace netid;
using namespace netid::testing;

namespace {

void check_block(const GaussianBlock& blk, const DenseGaussian& ref, double tol = 1e-8) {
    CHECK(rel_err(blk.mean(), ref.mean) < tol);
    CHECK(rel_err(blk.covariance(), ref.cov) < tol);
}

} // namespace

TEST_CASE("GaussianBlock matches a dense Gaussian") {
    std::mt19937_64 rng(3);
    const Index n = 9;
    const Matrix a = Matrix::Random(n, n);
    const Matrix precision = a * a.transpose() + n * Matrix::Identity(n, n);
    const Vector h = random_vector(rng, n);
    const GaussianBlock blk = GaussianBlock::from_precision(precision, h);
    const Matrix cov = precision.inverse();
    CHECK(rel_err(blk.mean(), cov * h) < 1e-12);
    CHECK(rel_err(blk.covariance(), cov) < 1e-12);
    CHECK(rel_err(blk.precision(), precision) < 1e-12);
    const Matrix f = blk.covariance_factor();
    CHECK(rel_err(f * f.transpose(), cov) < 1e-12);
    CHECK((f.triangularView<Eigen::StrictlyUpper>().toDenseMatrix()).norm() == 0.0);
    const Vector z = random_vector(rng, n);
    CHECK(rel_err(blk.draw(z), cov * h + f * z) < 1e-12);

    const Vector x = random_vector(rng, n);
    const Vector r = x - cov * h;
    const double log_density = -0.5 * (n * std::log(2.0 * std::numbers::pi) - std::log(precision.determinant()) + r.dot(precision * r));
    CHECK(blk.log_density(x) == doctest::Approx(log_density).epsilon(1e-12));
}

TEST_CASE("banded precision input equals the dense one") {
    const Index n = 12, p = 3;
    Matrix dense = Matrix::Zero(n, n);
    Matrix band = Matrix::Zero(n, p + 1);
    for (Index t = 0; t < n; ++t) {
        for (Index d = 0; d <= p && t + d < n; ++d) {
            const double v = d == 0 ? 4.0 + 0.1 * t : 0.5 / (1.0 + d + 0.2 * t);
            band(t, d) = v;
            dense(t, t + d) = dense(t + d, t) = v;
        }
    }
    const Vector h = Vector::LinSpaced(n, -1.0, 2.0);
    const auto banded = GaussianBlock::from_precision_band(band, h);
    const auto full = GaussianBlock::from_precision(dense, h);
    CHECK(banded.bandwidth() == p);
    CHECK(rel_err(banded.mean(), dense.ldlt().solve(h)) < 1e-12);
    CHECK(rel_err(banded.covariance(), full.covariance()) < 1e-12);
}

TEST_CASE("a singular precision is jittered and counted") {
    const Matrix precision = Matrix::Ones(4, 4);
    int jitter = 0;
    const auto blk = GaussianBlock::from_precision(precision, Vector::Ones(4), "flat", &jitter);
    CHECK(jitter >= 1);
    CHECK(blk.mean().allFinite());
}

TEST_CASE("regressors match element-wise Toeplitz construction") {
    for (bool add : {false, true}) {
        const DenseSetup d = make_setup(add, 10, 3, 11);
        for (Group grp : {Group::s, Group::b, Group::f}) {
            if (d.layout.group(grp).empty()) continue;
            CHECK(rel_err(d.stacked.regressor(grp), d.regressor(grp)) < 1e-14);
        }
        CHECK(rel_err(d.stacked.target_regressor(), d.w_ji()) < 1e-14);
        CHECK(rel_err(d.stacked.target_residual_base(), d.target_residual()) < 1e-12);
    }
}

TEST_CASE("full conditionals match dense joint-Gaussian oracles") {
    for (bool add : {false, true}) {
        for (Index n : {4, 6, 8}) {
            const DenseSetup d = make_setup(add, n, 2, 100 + n + (add ? 1 : 0));
            CAPTURE(add);
            CAPTURE(n);
            check_block(conditional(BlockId::s, d.stacked, d.state, d.eta), oracle_s(d));
            check_block(conditional(BlockId::b, d.stacked, d.state, d.eta), oracle_bf(d, Group::b));
            if (add) check_block(conditional(BlockId::f, d.stacked, d.state, d.eta), oracle_bf(d, Group::f));
            check_block(conditional(BlockId::w_m, d.stacked, d.state, d.eta), oracle_wm(d));
        }
    }
}

TEST_CASE("conditionals at l = 3 with a longer record") {
    const DenseSetup d = make_setup(true, 20, 3, 7);
    check_block(conditional(BlockId::s, d.stacked, d.state, d.eta), oracle_s(d));
    check_block(conditional(BlockId::b, d.stacked, d.state, d.eta), oracle_bf(d, Group::b));
    check_block(conditional(BlockId::f, d.stacked, d.state, d.eta), oracle_bf(d, Group::f));
    check_block(conditional(BlockId::w_m, d.stacked, d.state, d.eta), oracle_wm(d));
}

TEST_CASE("conditional requires the state's missing signal in the stacked model") {
    DenseSetup d = make_setup(false, 6, 2, 5);
    d.state.w_m(0) += 1.0;
    CHECK_THROWS_AS(conditional(BlockId::s, d.stacked, d.state, d.eta), InvalidInput);
}

TEST_CASE("a flat prior gives least squares and a vague likelihood gives the prior") {
    DenseSetup d = make_setup(false, 30, 3, 21);
    HyperState flat = d.eta;
    for (auto& h : flat.s) {
        h.fixed_lambda = false;
        h.lambda = 1e8;
    }
    const Matrix t = d.regressor(Group::s);
    const Vector ols = (t.transpose() * t).ldlt().solve(t.transpose() * d.target_residual());
    CHECK(rel_err(conditional(BlockId::s, d.stacked, d.state, flat).mean(), ols) < 1e-5);

    HyperState vague = d.eta;
    vague.sigma_j2 = 1e12;
    const auto blk = conditional(BlockId::s, d.stacked, d.state, vague);
    CHECK(blk.mean().norm() < 1e-6);
    CHECK(rel_err(blk.covariance(), d.prior(Group::s)) < 1e-6);
}

TEST_CASE("isolated Gibbs blocks sample their conditional") {
    const DenseSetup d = make_setup(true, 8, 2, 31);
    const Index m = 5000;
    auto check_moments = [&](const Vector& mean, const Matrix& scatter, const DenseGaussian& ref) {
        for (Index k = 0; k < mean.size(); ++k) {
            const double se = std::sqrt(ref.cov(k, k) / static_cast<double>(m));
            CHECK(std::abs(mean(k) - ref.mean(k)) < 5.0 * se);
            CHECK(scatter(k, k) == doctest::Approx(ref.cov(k, k)).epsilon(0.1));
        }
    };
    GibbsConfig cfg;
    cfg.samples = m;
    cfg.burn_in = 0;
    cfg.seed = 9;

    SUBCASE("s") {
        cfg.freeze_b = cfg.freeze_f = true;
        const SampleSet st = gibbs_run(d.stacked, d.eta, cfg, d.state.w_m, d.state);
        check_moments(st.s.mean, st.s.scatter, oracle_s(d));
    }
    SUBCASE("b") {
        cfg.freeze_s = cfg.freeze_f = true;
        const SampleSet st = gibbs_run(d.stacked, d.eta, cfg, d.state.w_m, d.state);
        check_moments(st.b.mean, st.b.scatter, oracle_bf(d, Group::b));
    }
    SUBCASE("f") {
        cfg.freeze_s = cfg.freeze_b = true;
        const SampleSet st = gibbs_run(d.stacked, d.eta, cfg, d.state.w_m, d.state);
        check_moments(st.f.mean, st.f.scatter, oracle_bf(d, Group::f));
    }
    SUBCASE("w_m") {
        cfg.freeze_s = cfg.freeze_b = cfg.freeze_f = true;
        cfg.keep_draws = true;
        const SampleSet st = gibbs_run(d.stacked, d.eta, cfg, std::nullopt, d.state);
        const DenseGaussian ref = oracle_wm(d);
        Matrix scatter = Matrix::Zero(d.n, d.n);
        for (const auto& dr : st.draws) scatter += (dr.w_m - st.w_m_mean) * (dr.w_m - st.w_m_mean).transpose();
        check_moments(st.w_m_mean, scatter / static_cast<double>(m), ref);
    }
}

TEST_CASE("single-pass statistics equal a two-pass recomputation") {
    const DenseSetup d = make_setup(true, 12, 3, 41);
    GibbsConfig cfg;
    cfg.samples = 40;
    cfg.burn_in = 5;
    cfg.thinning = 2;
    cfg.seed = 3;
    cfg.keep_draws = true;
    const SampleSet st = gibbs_run(d.stacked, d.eta, cfg);
    REQUIRE(st.retained == 40);
    REQUIRE(st.draws.size() == 40);

    const Index n = d.n, l = d.l;
    const double m = 40.0;
    Vector mean_s = Vector::Zero(d.state.s.size()), mean_wm = Vector::Zero(n);
    for (const auto& dr : st.draws) {
        mean_s += dr.s / m;
        mean_wm += dr.w_m / m;
    }
    Matrix scatter_s = Matrix::Zero(mean_s.size(), mean_s.size());
    Matrix a_hat = Matrix::Zero(n, n);
    Vector b_hat = Vector::Zero(n);
    double c_hat = 0.0;
    Matrix res_mean = Matrix::Zero(n, 2);
    std::vector<Matrix> residuals;
    for (const auto& dr : st.draws) {
        scatter_s += (dr.s - mean_s) * (dr.s - mean_s).transpose() / m;
        DenseSetup at = d;
        at.state = dr;
        const Matrix i = Matrix::Identity(n, n);
        const Matrix s_self = delayed_conv_operator(dr.s.head(l), n);
        const Matrix a = (i - s_self) * d.w_ji();
        const Matrix others = at.regressor(Group::s).rightCols(dr.s.size() - l);
        const Vector z = (i - s_self) * at.own(d.layout.output) - others * dr.s.tail(dr.s.size() - l);
        a_hat += a.transpose() * a / m;
        b_hat += a.transpose() * z / m;
        c_hat += z.squaredNorm() / m;
        Matrix r(n, 2);
        r.col(0) = at.own(d.layout.additional) - at.regressor(Group::f) * dr.f;
        r.col(1) = at.own(d.layout.missing) - at.regressor(Group::b) * dr.b;
        res_mean += r / m;
        residuals.push_back(r);
    }
    Matrix res_scatter = Matrix::Zero(n, 3);
    for (const auto& r : residuals) {
        const Matrix c = r - res_mean;
        res_scatter.col(0) += c.col(0).cwiseProduct(c.col(0)) / m;
        res_scatter.col(1) += c.col(0).cwiseProduct(c.col(1)) / m;
        res_scatter.col(2) += c.col(1).cwiseProduct(c.col(1)) / m;
    }
    CHECK(rel_err(st.s.mean, mean_s) < 1e-12);
    CHECK(rel_err(st.s.scatter, scatter_s) < 1e-12);
    CHECK(rel_err(st.w_m_mean, mean_wm) < 1e-12);
    CHECK(rel_err(st.a_hat, a_hat) < 1e-12);
    CHECK(rel_err(st.b_hat, b_hat) < 1e-12);
    CHECK(st.c_hat == doctest::Approx(c_hat).epsilon(1e-12));
    CHECK(rel_err(st.residual_mean, res_mean) < 1e-12);
    CHECK(rel_err(st.residual_scatter, res_scatter) < 1e-12);
}

TEST_CASE("Gibbs runs are deterministic and draws are replayable") {
    const DenseSetup d = make_setup(true, 10, 2, 51);
    GibbsConfig cfg;
    cfg.samples = 5;
    cfg.burn_in = 3;
    cfg.seed = 77;
    cfg.keep_draws = true;
    const SampleSet a = gibbs_run(d.stacked, d.eta, cfg);
    const SampleSet b = gibbs_run(d.stacked, d.eta, cfg);
    CHECK(a.a_hat == b.a_hat);
    CHECK(a.s.mean == b.s.mean);
    CHECK(a.w_m_mean == b.w_m_mean);
    cfg.seed = 78;
    CHECK(gibbs_run(d.stacked, d.eta, cfg).s.mean != a.s.mean);

    // One sweep from a known state reproduces each block from its own stream.
    cfg.seed = 5;
    cfg.samples = 1;
    cfg.burn_in = 0;
    const SampleSet one = gibbs_run(d.stacked, d.eta, cfg, std::nullopt, d.state);
    Rng rng_m(block_stream_seed(cfg.seed, BlockId::w_m));
    Rng rng_s(block_stream_seed(cfg.seed, BlockId::s));
    GibbsState st = d.state;
    st.w_m = conditional(BlockId::w_m, d.stacked, d.state, d.eta).draw(standard_normal(rng_m, d.n));
    const StackedModel swapped = swap_missing_signal(d.stacked, st.w_m);
    st.s = conditional(BlockId::s, swapped, st, d.eta).draw(standard_normal(rng_s, st.s.size()));
    CHECK(rel_err(one.draws[0].w_m, st.w_m) < 1e-12);
    CHECK(rel_err(one.draws[0].s, st.s) < 1e-12);
}

TEST_CASE("a model without a missing node skips burn-in") {
    const PredictorModel model =
        build_predictor_model(four_node(), {3, 1}, {1, 2, 3, 4}, std::nullopt, PredictorOptions{false, true});
    const LatentLayout layout = make_layout(model, 3);
    const ThetaParam param = ThetaParam::rational(2, 2);
    std::mt19937_64 rng(2);
    const HyperState eta = random_hyper(layout, param, rng);
    const StackedModel stacked = build_stacked_model(model, four_node_signals(30, 2), layout, param, eta.theta);
    GibbsConfig cfg;
    cfg.samples = 4;
    cfg.burn_in = 1000;
    cfg.keep_draws = true;
    const SampleSet st = gibbs_run(stacked, eta, cfg);
    CHECK(st.retained == 4);
    CHECK(st.b.mean.size() == 0);
    CHECK(st.w_m_mean.size() == 0);
    CHECK(st.residual_mean.isZero());
}

TEST_CASE("invalid Gibbs settings are rejected") {
    const DenseSetup d = make_setup(false, 6, 2, 1);
    GibbsConfig cfg;
    cfg.samples = 0;
    CHECK_THROWS_AS(gibbs_run(d.stacked, d.eta, cfg), InvalidInput);
    cfg.samples = 1;
    cfg.thinning = 0;
    CHECK_THROWS_AS(gibbs_run(d.stacked, d.eta, cfg), InvalidInput);
}
