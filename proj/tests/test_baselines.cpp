#include "support.hpp"

#include <doctest.h>

using namespace netid;
using namespace netid::testing;

namespace {

NetworkSpec two_input_network(const std::string& module_1, const std::string& module_2, double noise_variance) {
    return parse_network_spec(R"({"nodes": 3, "signals": 2,
        "modules": [{"to": 3, "from": 1, )" + module_1 + R"(},
                    {"to": 3, "from": 2, )" + module_2 + R"(}],
        "noise": [{"node": 3, "num": [1], "den": [1], "variance": )" + std::to_string(noise_variance) + R"(}],
        "excitations": [{"node": 1, "signal": 1, "num": [1], "den": [1]},
                        {"node": 2, "signal": 2, "num": [1], "den": [1]}]})");
}

/// True parameters of a Box-Jenkins structure with the true orders.
Vector true_params(const NetworkSpec& spec, const MisoSpec& miso) {
    std::vector<double> out;
    for (const auto& in : miso.inputs) {
        const auto& g = spec.module(miso.output, in.node);
        for (int k = 1; k <= in.nb; ++k) out.push_back(k < g.num.size() ? g.num(k) : 0.0);
        for (int k = 1; k <= in.nf; ++k) out.push_back(k < g.den.size() ? g.den(k) : 0.0);
    }
    const auto& h = spec.noise.at(miso.output).tf;
    for (int k = 1; k <= miso.nc; ++k) out.push_back(h.num(k));
    for (int k = 1; k <= miso.nd; ++k) out.push_back(h.den(k));
    return Eigen::Map<Vector>(out.data(), static_cast<Index>(out.size()));
}

} // namespace

TEST_CASE("noiseless FIR modules are recovered exactly") {
    const NetworkSpec spec = two_input_network(R"("num": [0, 0.5, -0.3, 0.1], "den": [1])",
                                               R"("num": [0, 0.2, 0.4], "den": [1])", 0.0);
    const SignalBundle sig = simulate_network(spec, white_excitation(2, 200, 1), 1, 200);
    const MisoSpec miso{3, {{1, 3, 0}, {2, 2, 0}}, 0, 0};
    const PemResult res = direct_pem(sig, miso);
    CHECK(rel_err(res.params, Vector{{0.5, -0.3, 0.1, 0.2, 0.4}}) < 1e-8);
    CHECK(res.objective < 1e-16);
    CHECK(res.module_params(miso, 2) == res.params.tail(2));
}

TEST_CASE("noiseless rational modules are recovered") {
    const NetworkSpec spec = two_input_network(R"("num": [0, 0.5], "den": [1, -0.6])",
                                               R"("num": [0, 0.3, 0.2], "den": [1, 0.4, 0.1])", 0.0);
    const SignalBundle sig = simulate_network(spec, white_excitation(2, 300, 2), 1, 300);
    const MisoSpec miso = true_order_miso(spec, 3, {1, 2});
    CHECK(miso.inputs[0].nb == 1);
    CHECK(miso.inputs[0].nf == 1);
    CHECK(miso.inputs[1].nf == 2);
    const PemResult res = direct_pem(sig, miso);
    CHECK(rel_err(res.params, true_params(spec, miso)) < 1e-6);
    CHECK(res.modules[0].den(1) == doctest::Approx(-0.6).epsilon(1e-6));
}

TEST_CASE("prediction errors at the true parameters are the innovations") {
    const NetworkSpec spec = four_node();
    const SignalBundle sig = simulate_network(spec, white_excitation(2, 150, 5), 5, 150);
    const MisoSpec miso = true_order_miso(spec, 3, {1, 2, 4});
    CHECK(miso.nc == 3);
    CHECK(miso.nd == 3);
    CHECK(miso.parameter_count() == true_params(spec, miso).size());
    const Vector eps = pem_residual(miso, sig, true_params(spec, miso));
    CHECK(rel_err(eps, Vector(sig.e.row(2).transpose())) < 1e-9);
}

TEST_CASE("the prediction-error objective decreases along the accepted steps") {
    const NetworkSpec spec = four_node();
    const SignalBundle sig = simulate_network(spec, white_excitation(2, 300, 8), 8, 300);
    const MisoSpec miso = true_order_miso(spec, 3, {1, 2, 4});
    PemOptions opt;
    opt.restarts = 2;
    opt.seed = 4;
    const PemResult res = direct_pem(sig, miso, opt);
    REQUIRE_FALSE(res.trace.empty());
    for (std::size_t k = 1; k < res.trace.size(); ++k) CHECK(res.trace[k] <= res.trace[k - 1]);
    CHECK(res.objective == doctest::Approx(res.trace.back()));
    CHECK(res.starts == 3);
    CHECK(pem_residual(miso, sig, res.params).squaredNorm() == doctest::Approx(res.objective).epsilon(1e-9));
    const Vector g31 = impulse_response(spec.module(3, 1), 300);
    CHECK(fit_score(g31, impulse_response(res.modules[0], 300)) > 0.7);

    const PemResult again = direct_pem(sig, miso, opt);
    CHECK(again.params == res.params);
}

TEST_CASE("least-squares start and structure validation") {
    const NetworkSpec spec = two_input_network(R"("num": [0, 0.5], "den": [1])", R"("num": [0, 0.3], "den": [1])", 0.0);
    const SignalBundle sig = simulate_network(spec, white_excitation(2, 100, 3), 1, 100);
    const MisoSpec miso{3, {{1, 1, 0}, {2, 1, 0}}, 0, 0};
    CHECK(rel_err(pem_initial_guess(miso, sig), Vector{{0.5, 0.3}}) < 1e-10);

    CHECK_THROWS_AS((MisoSpec{3, {}, 0, 0}.validate()), InvalidInput);
    CHECK_THROWS_AS((MisoSpec{3, {{1, 0, 0}}, 0, 0}.validate()), InvalidInput);
    CHECK_THROWS_AS((MisoSpec{3, {{1, 1, -1}}, 0, 0}.validate()), InvalidInput);
    CHECK_THROWS_AS((MisoSpec{3, {{3, 1, 0}}, 0, 0}.validate()), InvalidInput);
    CHECK_THROWS_AS(pem_residual(miso, sig, Vector::Zero(3)), InvalidInput);
}

TEST_CASE("the kernel direct method needs every predictor input measured") {
    const SignalBundle sig = four_node_signals(40, 1);
    McemConfig cfg;
    cfg.l = 4;
    cfg.max_iters = 1;
    CHECK_THROWS_AS(ebdm(sig, four_node_model(false), cfg), InvalidInput);
    const PredictorModel measured = build_predictor_model(four_node(), {3, 1}, {1, 2, 3, 4}, std::nullopt);
    CHECK(ebdm(sig, measured, cfg).iterations == 1);
}
