#include "netid/harness.hpp"
#include "netid/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <sstream>
#include <thread>

namespace netid {

using json = nlohmann::json;

namespace {

struct VariantInfo {
    Variant variant;
    const char* name;
};

constexpr VariantInfo kVariants[] = {
    {Variant::mc_ebdm, "MC-EBDM"}, {Variant::mc_ebdma, "MC-EBDMA"}, {Variant::ebdm, "EBDM"},
    {Variant::ebdm_m, "EBDM+M"},   {Variant::dm_to, "DM+TO"},       {Variant::dm_to_m, "DM+TO+M"},
};

} // namespace

std::string variant_name(Variant v) {
    for (const auto& info : kVariants) {
        if (info.variant == v) return info.name;
    }
    throw InvalidInput("unknown variant");
}

Variant parse_variant(std::string_view name) {
    for (const auto& info : kVariants) {
        if (name == info.name) return info.variant;
    }
    throw InvalidInput("unknown estimator variant '" + std::string(name) +
                       "' (expected MC-EBDM, MC-EBDMA, EBDM, EBDM+M, DM+TO or DM+TO+M)");
}

const std::vector<Variant>& all_variants() {
    static const std::vector<Variant> all{Variant::mc_ebdm, Variant::mc_ebdma, Variant::ebdm,
                                          Variant::ebdm_m,  Variant::dm_to,    Variant::dm_to_m};
    return all;
}

bool uses_missing_node(Variant v) { return v == Variant::mc_ebdm || v == Variant::mc_ebdma; }

double fit_score(const Vector& truth, const Vector& estimate) {
    if (truth.size() != estimate.size()) throw InvalidInput("fit: vectors differ in length");
    const double denom = (truth.array() - truth.mean()).matrix().norm();
    if (!(denom > 0.0)) return std::nan("");
    return 1.0 - (truth - estimate).norm() / denom;
}

FitMetrics fit_metrics(const Vector& g0, const Vector& g_hat, const Vector& theta0, const Vector& theta_hat) {
    FitMetrics m;
    m.fit_imp = fit_score(g0, g_hat);
    m.fit_theta = theta0.size() > 0 && theta0.size() == theta_hat.size() ? fit_score(theta0, theta_hat) : std::nan("");
    return m;
}

double pearson(const Vector& x, const Vector& y) {
    if (x.size() != y.size() || x.size() < 2) return std::nan("");
    const Vector xc = x.array() - x.mean();
    const Vector yc = y.array() - y.mean();
    const double denom = xc.norm() * yc.norm();
    return denom > 0.0 ? xc.dot(yc) / denom : std::nan("");
}

double quantile(std::vector<double> values, double p) {
    if (values.empty()) return std::nan("");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end()) {
            throw InvalidInput("unknown key '" + key + "' in " + where);
        }
    }
}

ThetaParam parse_theta(const json& j) {
    check_keys(j, {"kind", "nb", "na", "length"}, "estimator.theta");
    const std::string kind = get_or<std::string>(j, "kind", "rational");
    if (kind == "rational") {
        const int nb = get_or(j, "nb", 2);
        const int na = get_or(j, "na", 2);
        if (nb < 1 || na < 0) throw InvalidInput("rational theta requires nb >= 1 and na >= 0");
        return ThetaParam::rational(nb, na);
    }
    if (kind == "fir") {
        const int length = get_or(j, "length", 10);
        if (length < 1) throw InvalidInput("FIR theta length must be >= 1");
        return ThetaParam::fir(length);
    }
    throw InvalidInput("theta kind must be 'rational' or 'fir'");
}

McemConfig estimator_from_json(const json& j) {
    check_keys(j, {"l", "M", "B", "kappa", "max_iters", "tol", "theta", "theta_init", "common_random_numbers",
                   "pem_restarts"},
               "estimator");
    McemConfig c;
    c.l = get_or<Index>(j, "l", c.l);
    c.gibbs.samples = get_or<Index>(j, "M", c.gibbs.samples);
    c.gibbs.burn_in = get_or<Index>(j, "B", c.gibbs.burn_in);
    c.gibbs.thinning = get_or<Index>(j, "kappa", c.gibbs.thinning);
    c.max_iters = get_or<Index>(j, "max_iters", c.max_iters);
    c.tol = get_or<double>(j, "tol", c.tol);
    c.common_random_numbers = get_or<bool>(j, "common_random_numbers", false);
    if (j.contains("theta")) c.param = parse_theta(j.at("theta"));
    if (j.contains("theta_init")) {
        const auto v = j.at("theta_init").get<std::vector<double>>();
        c.theta_init = Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
    }
    if (c.l < 1) throw InvalidInput("estimator.l must be >= 1");
    if (c.gibbs.samples < 1) throw InvalidInput("estimator.M must be >= 1");
    if (c.gibbs.burn_in < 0) throw InvalidInput("estimator.B must be >= 0");
    if (c.gibbs.thinning < 1) throw InvalidInput("estimator.kappa must be >= 1");
    if (c.max_iters < 1) throw InvalidInput("estimator.max_iters must be >= 1");
    if (!(c.tol >= 0.0)) throw InvalidInput("estimator.tol must be >= 0");
    return c;
}

json parse_json(std::string_view text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& ex) {
        throw InvalidInput(std::string(what) + ": " + ex.what());
    }
}

} // namespace

McemConfig parse_estimator_config(std::string_view text) {
    try {
        return estimator_from_json(parse_json(text, "estimator config"));
    } catch (const json::exception& ex) {
        throw InvalidInput(std::string("estimator config: ") + ex.what());
    }
}

ExperimentConfig parse_experiment_config(std::string_view text, const std::string& base_dir) {
    const json j = parse_json(text, "experiment config");
    ExperimentConfig c;
    try {
        check_keys(j, {"network", "target", "measured", "missing", "variants", "replicates", "samples", "seed",
                       "noise_variances", "estimator", "reconstruction_replicate", "threads"},
                   "experiment config");
        if (!j.contains("network") || !j.contains("target") || !j.contains("measured")) {
            throw InvalidInput("experiment config requires 'network', 'target' and 'measured'");
        }
        std::filesystem::path net = j.at("network").get<std::string>();
        if (net.is_relative()) net = std::filesystem::path(base_dir) / net;
        c.network_path = net.string();
        c.spec = load_network_spec(c.network_path);

        const auto target = j.at("target").get<std::vector<NodeId>>();
        if (target.size() != 2) throw InvalidInput("target must be [output, input]");
        c.target = {target[0], target[1]};
        if (!c.spec.has_module(c.target.to, c.target.from)) throw InvalidInput("target module not in network");
        for (NodeId k : j.at("measured").get<std::vector<NodeId>>()) {
            if (!c.spec.valid_node(k)) throw InvalidInput("measured node " + std::to_string(k) + " not in network");
            c.measured.insert(k);
        }
        if (j.contains("missing") && !j.at("missing").is_null()) {
            c.missing = j.at("missing").get<NodeId>();
            if (!c.spec.valid_node(*c.missing)) throw InvalidInput("missing node not in network");
            if (c.measured.count(*c.missing)) throw InvalidInput("missing node is listed as measured");
        }
        if (j.contains("variants")) {
            for (const auto& name : j.at("variants").get<std::vector<std::string>>()) c.variants.push_back(parse_variant(name));
        } else {
            c.variants = all_variants();
        }
        if (c.variants.empty()) throw InvalidInput("variant list is empty");
        c.replicates = get_or<Index>(j, "replicates", c.replicates);
        c.samples = get_or<Index>(j, "samples", c.samples);
        c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
        c.reconstruction_replicate = get_or<Index>(j, "reconstruction_replicate", 0);
        c.threads = get_or<int>(j, "threads", 0);
        if (c.replicates < 1) throw InvalidInput("replicates must be >= 1");
        if (c.samples < 2) throw InvalidInput("samples must be >= 2");
        if (c.threads < 0) throw InvalidInput("threads must be >= 0");
        if (j.contains("noise_variances")) {
            const auto v = j.at("noise_variances").get<std::vector<double>>();
            if (static_cast<int>(v.size()) != c.spec.node_count) {
                throw InvalidInput("noise_variances needs one entry per node");
            }
            for (int k = 0; k < c.spec.node_count; ++k) {
                if (!(v[k] >= 0.0)) throw InvalidInput("noise variances must be >= 0");
                auto it = c.spec.noise.find(k + 1);
                if (it != c.spec.noise.end()) {
                    it->second.variance = v[k];
                } else if (v[k] > 0.0) {
                    c.spec.noise[k + 1] = NoiseModel{TransferFunction::unit(), v[k]};
                }
            }
        }
        if (j.contains("estimator")) {
            c.estimator = estimator_from_json(j.at("estimator"));
            c.pem_restarts = get_or<int>(j.at("estimator"), "pem_restarts", c.pem_restarts);
            if (c.pem_restarts < 0) throw InvalidInput("pem_restarts must be >= 0");
        }
    } catch (const json::exception& ex) {
        throw InvalidInput(std::string("experiment config: ") + ex.what());
    }
    std::string diag;
    if (!check_wellposed_stable(c.spec, &diag)) throw InvalidInput("network is not well-posed and stable: " + diag);
    return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    const auto dir = std::filesystem::path(path).parent_path();
    return parse_experiment_config(read_text_file(path), dir.empty() ? "." : dir.string());
}

TargetTruth target_truth(const ExperimentConfig& config, Index n) {
    const TransferFunction& g = config.spec.module(config.target.to, config.target.from);
    TargetTruth t;
    t.g0 = impulse_response(g, n);
    const ThetaParam& param = config.estimator.param;
    if (param.kind == ThetaParam::Kind::fir) {
        t.theta0 = impulse_response(g, param.nb);
    } else {
        Index nb = 0;
        for (Index k = g.num.size() - 1; k >= 1 && nb == 0; --k) {
            if (g.num(k) != 0.0) nb = k;
        }
        Index na = 0;
        for (Index k = g.den.size() - 1; k >= 1 && na == 0; --k) {
            if (g.den(k) != 0.0) na = k;
        }
        if (nb <= param.nb && na <= param.na) t.theta0 = param.from_transfer_function(g);
    }
    return t;
}

SignalBundle simulate_replicate(const ExperimentConfig& config, Index replicate) {
    const std::uint64_t seed = derive_seed(config.seed, {static_cast<std::uint64_t>(replicate) + 1});
    const Matrix r = white_excitation(config.spec.external_count, config.samples, derive_seed(seed, {0}));
    return simulate_network(config.spec, r, seed, config.samples);
}

// ---------------------------------------------------------------------------
// Estimation

namespace {

PredictorModel variant_model(Variant v, const ExperimentConfig& c) {
    switch (v) {
    case Variant::mc_ebdm:
    case Variant::mc_ebdma:
        if (!c.missing) throw InvalidInput(variant_name(v) + " requires a missing node in the config");
        return build_predictor_model(c.spec, c.target, c.measured, c.missing,
                                     PredictorOptions{v == Variant::mc_ebdma, true});
    case Variant::ebdm:
    case Variant::dm_to: {
        NodeSet all = c.measured;
        if (c.missing) all.insert(*c.missing);
        return build_predictor_model(c.spec, c.target, all, std::nullopt, PredictorOptions{false, true});
    }
    case Variant::ebdm_m:
    case Variant::dm_to_m:
        return build_predictor_model(c.spec, c.target, c.measured, std::nullopt, PredictorOptions{false, false});
    }
    throw InvalidInput("unknown variant");
}

std::string sanitize(std::string s) {
    std::replace_if(s.begin(), s.end(), [](char ch) { return ch == ',' || ch == '\n' || ch == '\r'; }, ';');
    return s;
}

} // namespace

VariantOutcome run_variant(Variant variant, const ExperimentConfig& config, const SignalBundle& signals,
                           std::uint64_t seed) {
    VariantOutcome out;
    out.variant = variant;
    const auto start = std::chrono::steady_clock::now();
    const Index n = signals.samples();
    const TargetTruth truth = target_truth(config, n);
    try {
        const PredictorModel model = variant_model(variant, config);
        if (variant == Variant::dm_to || variant == Variant::dm_to_m) {
            std::vector<NodeId> inputs;
            for (NodeId k : model.D) {
                if (config.spec.has_module(config.target.to, k)) inputs.push_back(k);
            }
            const MisoSpec miso = true_order_miso(config.spec, config.target.to, inputs);
            PemOptions opt;
            opt.seed = seed;
            opt.restarts = config.pem_restarts;
            const PemResult pem = direct_pem(signals, miso, opt);
            out.theta = pem.module_params(miso, config.target.from);
            const auto pos = std::find(inputs.begin(), inputs.end(), config.target.from) - inputs.begin();
            out.g = impulse_response(pem.modules[pos], n);
            out.sigma_j2 = pem.objective / static_cast<double>(n);
            out.converged = pem.converged;
            out.iterations = static_cast<Index>(pem.trace.size()) - 1;
        } else {
            McemConfig mc = config.estimator;
            mc.seed = seed;
            const EstimateResult est = run_mcem(signals, model, mc);
            out.theta = est.eta.theta;
            out.g = est.g;
            out.sigma_j2 = est.eta.sigma_j2;
            out.converged = est.converged;
            out.iterations = est.iterations;
            out.w_m_hat = est.w_m_hat;
            if (model.missing) out.wm_corr = pearson(est.w_m_hat, signals.node(*model.missing));
        }
        out.fit = fit_metrics(truth.g0, out.g, truth.theta0, out.theta);
        out.ok = true;
        out.status = "ok";
    } catch (const Error& ex) {
        out.ok = false;
        out.status = sanitize(std::string("failed: ") + ex.what());
        out.fit = {std::nan(""), std::nan("")};
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

const SummaryRow* ExperimentResult::find(std::string_view variant, std::string_view metric) const {
    for (const auto& row : summary) {
        if (row.variant == variant && row.metric == metric) return &row;
    }
    return nullptr;
}

std::vector<SummaryRow> summarize(const std::vector<ReplicateRecord>& replicates, const std::vector<Variant>& variants) {
    std::vector<SummaryRow> rows;
    for (std::size_t v = 0; v < variants.size(); ++v) {
        std::vector<std::pair<std::string, std::vector<double>>> metrics{{"fit_imp", {}}, {"fit_theta", {}}};
        const bool with_wm = uses_missing_node(variants[v]);
        if (with_wm) metrics.emplace_back("wm_corr", std::vector<double>{});
        Index theta_size = 0;
        for (const auto& rep : replicates) {
            const auto& o = rep.outcomes[v];
            if (o.ok) theta_size = std::max(theta_size, o.theta.size());
        }
        for (Index k = 0; k < theta_size; ++k) metrics.emplace_back("theta_" + std::to_string(k + 1), std::vector<double>{});
        for (const auto& rep : replicates) {
            const auto& o = rep.outcomes[v];
            if (!o.ok) continue;
            auto push = [](std::vector<double>& dst, double x) {
                if (std::isfinite(x)) dst.push_back(x);
            };
            push(metrics[0].second, o.fit.fit_imp);
            push(metrics[1].second, o.fit.fit_theta);
            std::size_t next = 2;
            if (with_wm) push(metrics[next++].second, o.wm_corr);
            for (Index k = 0; k < o.theta.size(); ++k) push(metrics[next + k].second, o.theta(k));
        }
        for (auto& [name, values] : metrics) {
            SummaryRow row;
            row.variant = variant_name(variants[v]);
            row.metric = name;
            row.count = static_cast<Index>(values.size());
            row.median = quantile(values, 0.5);
            row.q1 = quantile(values, 0.25);
            row.q3 = quantile(values, 0.75);
            rows.push_back(row);
        }
    }
    return rows;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
    ExperimentResult result;
    result.replicates.resize(config.replicates);
    std::atomic<Index> next{0};
    auto worker = [&] {
        for (Index rep = next++; rep < config.replicates; rep = next++) {
            ReplicateRecord& record = result.replicates[rep];
            record.replicate = rep;
            const SignalBundle signals = simulate_replicate(config, rep);
            record.data_checksum = checksum(signals.w, checksum(signals.r));
            if (config.missing) record.w_true = signals.node(*config.missing);
            for (std::size_t v = 0; v < config.variants.size(); ++v) {
                const std::uint64_t seed = derive_seed(config.seed, {static_cast<std::uint64_t>(rep) + 1, 7, v + 1});
                record.outcomes.push_back(run_variant(config.variants[v], config, signals, seed));
            }
        }
    };
    unsigned threads = config.threads > 0 ? static_cast<unsigned>(config.threads) : std::thread::hardware_concurrency();
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(config.replicates)));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (const auto& rep : result.replicates) {
        for (const auto& o : rep.outcomes) result.failures += o.ok ? 0 : 1;
    }
    result.summary = summarize(result.replicates, config.variants);
    return result;
}

namespace {

std::string hex(std::uint64_t x) {
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << x;
    return s.str();
}

} // namespace

void write_experiment(const ExperimentResult& result, const ExperimentConfig& config, const std::string& dir) {
    std::filesystem::create_directories(dir);
    const auto path = [&](const char* name) { return (std::filesystem::path(dir) / name).string(); };

    CsvWriter fits(path("fits.csv"));
    fits.header({"variant", "replicate", "fit_imp", "fit_theta", "converged", "iterations", "wm_corr", "status",
                 "data_checksum"});
    CsvWriter params(path("params.csv"));
    params.header({"variant", "replicate", "param", "value"});
    CsvWriter timings(path("timings.csv"));
    timings.header({"variant", "replicate", "seconds"});
    for (const auto& rep : result.replicates) {
        for (const auto& o : rep.outcomes) {
            const std::string name = variant_name(o.variant);
            fits.cell(name);
            fits.cell(rep.replicate);
            fits.cell(o.fit.fit_imp);
            fits.cell(o.fit.fit_theta);
            fits.cell(o.converged ? 1 : 0);
            fits.cell(o.iterations);
            fits.cell(o.wm_corr);
            fits.cell(o.status);
            fits.cell(hex(rep.data_checksum));
            fits.end_row();
            if (o.ok) {
                for (Index k = 0; k < o.theta.size(); ++k) {
                    params.cell(name);
                    params.cell(rep.replicate);
                    params.cell("theta_" + std::to_string(k + 1));
                    params.cell(o.theta(k));
                    params.end_row();
                }
                params.cell(name);
                params.cell(rep.replicate);
                params.cell("sigma_j2");
                params.cell(o.sigma_j2);
                params.end_row();
            }
            timings.cell(name);
            timings.cell(rep.replicate);
            timings.cell(o.seconds);
            timings.end_row();
        }
    }

    CsvWriter summary(path("summary.csv"));
    summary.header({"variant", "metric", "count", "median", "q1", "q3"});
    for (const auto& row : result.summary) {
        summary.cell(row.variant);
        summary.cell(row.metric);
        summary.cell(row.count);
        summary.cell(row.median);
        summary.cell(row.q1);
        summary.cell(row.q3);
        summary.end_row();
    }

    CsvWriter recon(path("reconstruction.csv"));
    recon.header({"replicate", "variant", "t", "w_true", "w_hat"});
    const Index pick = config.reconstruction_replicate;
    if (pick >= 0 && pick < static_cast<Index>(result.replicates.size())) {
        const auto& rep = result.replicates[pick];
        for (const auto& o : rep.outcomes) {
            if (!o.ok || o.w_m_hat.size() != rep.w_true.size()) continue;
            for (Index t = 0; t < o.w_m_hat.size(); ++t) {
                recon.cell(rep.replicate);
                recon.cell(variant_name(o.variant));
                recon.cell(t + 1);
                recon.cell(rep.w_true(t));
                recon.cell(o.w_m_hat(t));
                recon.end_row();
            }
        }
    }
}

} // namespace netid
