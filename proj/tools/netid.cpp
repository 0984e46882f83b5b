#include "netid/harness.hpp"
#include "netid/io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstring>
#include <filesystem>
#include <iostream>
#include <sstream>

using namespace netid;
using json = nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitEstimation = 1;
constexpr int kExitUsage = 2;

struct CommonOptions {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
};

/// Network, target and node sets from a config document, overridable by flags.
struct Setup {
    std::string config;
    std::string network;
    std::string target;
    std::string measured;
    std::optional<NodeId> missing;
};

std::vector<NodeId> parse_nodes(const std::string& text, const char* what) {
    std::vector<NodeId> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const int v = std::stoi(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            out.push_back(v);
        } catch (const std::exception&) {
            throw InvalidInput(std::string("bad node list for ") + what + ": '" + text + "'");
        }
    }
    return out;
}

ExperimentConfig resolve(const Setup& s) {
    ExperimentConfig c;
    if (!s.config.empty()) {
        c = load_experiment_config(s.config);
    } else {
        if (s.network.empty() || s.target.empty() || s.measured.empty()) {
            throw InvalidInput("give --config, or --network with --target and --measured");
        }
    }
    if (!s.network.empty()) {
        c.network_path = s.network;
        c.spec = load_network_spec(s.network);
    }
    if (!s.target.empty()) {
        const auto t = parse_nodes(s.target, "--target");
        if (t.size() != 2) throw InvalidInput("--target takes output,input");
        c.target = {t[0], t[1]};
    }
    if (!s.measured.empty()) {
        const auto m = parse_nodes(s.measured, "--measured");
        c.measured = NodeSet(m.begin(), m.end());
    }
    if (s.missing) c.missing = s.missing;
    if (!c.spec.valid_node(c.target.to) || !c.spec.valid_node(c.target.from) ||
        !c.spec.has_module(c.target.to, c.target.from)) {
        throw InvalidInput("target module not in network");
    }
    for (NodeId k : c.measured) {
        if (!c.spec.valid_node(k)) throw InvalidInput("measured node " + std::to_string(k) + " not in network");
    }
    return c;
}

json paths_json(const std::vector<Path>& paths) {
    json arr = json::array();
    for (const auto& p : paths) arr.push_back(format_path(p));
    return arr;
}

int run_check(const Setup& setup, const CommonOptions& common) {
    const ExperimentConfig c = resolve(setup);
    const NodeId j = c.target.to;
    json report;
    report["target"] = {j, c.target.from};
    report["measured"] = std::vector<NodeId>(c.measured.begin(), c.measured.end());

    std::cout << "target G_" << j << "," << c.target.from << ", measured " << format_set(c.measured) << "\n";
    NodeSet inputs = c.measured;
    inputs.erase(j);
    std::cout << "direct method with predictor inputs " << format_set(inputs) << ":\n";
    const PathReport paths = check_parallel_path_loop(c.spec, c.target, c.measured);
    std::cout << "  parallel paths and loops around the target pass through measured nodes: "
              << (paths.satisfied ? "satisfied" : "violated") << "\n";
    for (const auto& p : paths.witnesses) std::cout << "    witness " << format_path(p) << "\n";
    const auto conf = inputs.empty() ? std::vector<NodeId>{} : find_confounders(c.spec, {j}, inputs, c.measured);
    std::cout << "  confounding noise sources between w_" << j << " and the inputs: ";
    if (conf.empty()) std::cout << "none\n";
    for (std::size_t k = 0; k < conf.size(); ++k) std::cout << "e_" << conf[k] << (k + 1 < conf.size() ? ", " : "\n");
    report["direct"] = {{"parallel_path_satisfied", paths.satisfied},
                        {"witnesses", paths_json(paths.witnesses)},
                        {"confounders", conf}};

    if (c.missing) {
        for (bool use_additional : {false, true}) {
            const char* label = use_additional ? "with_additional" : "missing_only";
            json entry;
            try {
                const PredictorModel model = build_predictor_model(c.spec, c.target, c.measured, c.missing,
                                                                   PredictorOptions{use_additional, true});
                std::cout << "predictor model, missing node " << *c.missing
                          << (use_additional ? ", additional nodes allowed" : "") << ":\n"
                          << "  Y=" << format_set(model.Y) << " D=" << format_set(model.D) << " O=" << format_set(model.O)
                          << " Q=" << format_set(model.Q) << " W=" << format_set(model.W) << "\n";
                json checks = json::array();
                for (const auto& chk : check_conditions(c.spec, model)) {
                    std::cout << "  " << chk.name << ": " << (chk.satisfied ? "satisfied" : "violated") << "\n";
                    checks.push_back({{"name", chk.name}, {"satisfied", chk.satisfied},
                                      {"witnesses", paths_json(chk.witnesses)}, {"confounders", chk.confounders}});
                }
                entry = {{"Y", model.Y}, {"D", model.D}, {"O", model.O}, {"Q", model.Q}, {"W", model.W},
                         {"additional", model.additional}, {"conditions", checks}};
            } catch (const ConditionViolation& ex) {
                std::cout << "predictor model, missing node " << *c.missing << ": " << ex.what() << "\n";
                entry = {{"error", ex.what()}};
            }
            report[label] = entry;
        }
    }
    if (!common.out.empty()) {
        std::ofstream out(common.out);
        if (!out) throw InvalidInput("cannot open for writing: " + common.out);
        out << report.dump(2) << "\n";
    }
    return kExitOk;
}

int run_simulate(const Setup& setup, const CommonOptions& common, std::optional<Index> samples) {
    ExperimentConfig c;
    if (!setup.config.empty()) {
        c = load_experiment_config(setup.config);
    } else if (!setup.network.empty()) {
        c.spec = load_network_spec(setup.network);
    } else {
        throw InvalidInput("simulate needs --config or --network");
    }
    if (!setup.network.empty()) c.spec = load_network_spec(setup.network);
    if (samples) c.samples = *samples;
    if (c.samples < 1) throw InvalidInput("--samples must be >= 1");
    if (common.seed) c.seed = *common.seed;
    if (common.out.empty()) throw InvalidInput("simulate needs --out");
    std::string diag;
    if (!check_wellposed_stable(c.spec, &diag)) throw InvalidInput("network is not well-posed and stable: " + diag);
    write_signals_csv(common.out, simulate_replicate(c, 0));
    return kExitOk;
}

int run_identify(const Setup& setup, const CommonOptions& common, const std::string& variant_text,
                 const std::string& signals_path) {
    ExperimentConfig c = resolve(setup);
    if (common.seed) c.seed = *common.seed;
    const Variant variant = parse_variant(variant_text);
    if (common.out.empty()) throw InvalidInput("identify needs --out");
    SignalBundle signals = signals_path.empty() ? simulate_replicate(c, 0) : read_signals_csv(signals_path, c.spec);
    if (signals.w.rows() != c.spec.node_count) throw InvalidInput("signals do not match the network's node count");

    const VariantOutcome o = run_variant(variant, c, signals, derive_seed(c.seed, {1, 7}));
    std::filesystem::create_directories(common.out);
    CsvWriter est((std::filesystem::path(common.out) / "estimate.csv").string());
    est.header({"key", "value"});
    auto row = [&](const std::string& k, auto v) {
        est.cell(k);
        est.cell(v);
        est.end_row();
    };
    row("variant", variant_name(variant));
    row("status", o.status);
    for (Index k = 0; k < o.theta.size(); ++k) row("theta_" + std::to_string(k + 1), o.theta(k));
    row("sigma_j2", o.sigma_j2);
    row("fit_imp", o.fit.fit_imp);
    row("fit_theta", o.fit.fit_theta);
    row("converged", static_cast<Index>(o.converged));
    row("iterations", o.iterations);
    row("wm_corr", o.wm_corr);
    if (o.ok && o.w_m_hat.size() > 0) {
        CsvWriter rec((std::filesystem::path(common.out) / "reconstruction.csv").string());
        rec.header({"t", "w_hat"});
        for (Index t = 0; t < o.w_m_hat.size(); ++t) {
            rec.cell(t + 1);
            rec.cell(o.w_m_hat(t));
            rec.end_row();
        }
    }
    std::cout << variant_name(variant) << ": " << o.status << ", fit_imp " << format_double(o.fit.fit_imp)
              << ", fit_theta " << format_double(o.fit.fit_theta) << "\n";
    return o.ok ? kExitOk : kExitEstimation;
}

int run_experiment_cmd(const CommonOptions& common, std::optional<Index> replicates, std::optional<int> threads) {
    if (common.config.empty()) throw InvalidInput("experiment needs --config");
    if (common.out.empty()) throw InvalidInput("experiment needs --out");
    ExperimentConfig c = load_experiment_config(common.config);
    if (common.seed) c.seed = *common.seed;
    if (replicates) {
        if (*replicates < 1) throw InvalidInput("--replicates must be >= 1");
        c.replicates = *replicates;
    }
    if (threads) c.threads = *threads;
    const ExperimentResult result = run_experiment(c);
    write_experiment(result, c, common.out);
    for (const auto& row : result.summary) {
        if (row.metric == "fit_imp") {
            std::cout << row.variant << ": median fit_imp " << format_double(row.median) << " (" << row.count
                      << " replicates)\n";
        }
    }
    if (result.failures > 0) std::cerr << result.failures << " estimation(s) failed; see fits.csv\n";
    return result.failures > 0 ? kExitEstimation : kExitOk;
}

void report_error(bool as_json, const char* kind, const std::string& message, int code) {
    if (as_json) {
        std::cerr << json{{"error", {{"kind", kind}, {"message", message}, {"exit_code", code}}}}.dump() << "\n";
    } else {
        std::cerr << "error: " << message << "\n";
    }
}

} // namespace

int main(int argc, char** argv) {
    bool json_errors = false;
    for (int k = 1; k < argc; ++k) json_errors = json_errors || std::strcmp(argv[k], "--json-errors") == 0;

    CLI::App app{"Target-module identification in dynamic networks with missing node observations"};
    app.require_subcommand(1);
    app.add_flag("--json-errors", json_errors, "Report failures as a JSON object on stderr");

    CommonOptions common;
    Setup setup;
    std::string variant = "MC-EBDMA";
    std::string signals_path;
    std::optional<Index> samples;
    std::optional<Index> replicates;
    std::optional<int> threads;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config, "JSON experiment config");
        sub->add_option("--out", common.out, "Output path");
        sub->add_option("--seed", common.seed, "Master seed (overrides the config)");
    };
    auto add_setup = [&](CLI::App* sub) {
        sub->add_option("--network", setup.network, "JSON network spec (overrides the config)");
        sub->add_option("--target", setup.target, "Target module as output,input");
        sub->add_option("--measured", setup.measured, "Measured nodes, comma separated");
        sub->add_option("--missing", setup.missing, "Missing node");
    };

    auto* check = app.add_subcommand("check", "Report predictor conditions and confounders");
    add_common(check);
    add_setup(check);
    auto* simulate = app.add_subcommand("simulate", "Simulate the network and write a signals CSV");
    add_common(simulate);
    simulate->add_option("--network", setup.network, "JSON network spec");
    simulate->add_option("--samples", samples, "Number of samples");
    auto* identify = app.add_subcommand("identify", "Run one estimator");
    add_common(identify);
    add_setup(identify);
    identify->add_option("--variant", variant, "MC-EBDM, MC-EBDMA, EBDM, EBDM+M, DM+TO or DM+TO+M");
    identify->add_option("--signals", signals_path, "Signals CSV (simulated from the config when absent)");
    auto* experiment = app.add_subcommand("experiment", "Run a Monte Carlo experiment");
    add_common(experiment);
    experiment->add_option("--replicates", replicates, "Replicate count (overrides the config)");
    experiment->add_option("--threads", threads, "Worker threads, 0 for all cores");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        if (json_errors) {
            report_error(true, "usage", e.what(), kExitUsage);
        } else {
            app.exit(e);
        }
        return kExitUsage;
    }

    try {
        setup.config = common.config;
        if (*check) return run_check(setup, common);
        if (*simulate) return run_simulate(setup, common, samples);
        if (*identify) return run_identify(setup, common, variant, signals_path);
        if (*experiment) return run_experiment_cmd(common, replicates, threads);
    } catch (const InvalidInput& e) {
        report_error(json_errors, "invalid_input", e.what(), kExitUsage);
        return kExitUsage;
    } catch (const ConditionViolation& e) {
        report_error(json_errors, "condition_violation", e.what(), kExitUsage);
        return kExitUsage;
    } catch (const NumericalError& e) {
        report_error(json_errors, "numerical", e.what(), kExitEstimation);
        return kExitEstimation;
    } catch (const std::exception& e) {
        report_error(json_errors, "internal", e.what(), kExitEstimation);
        return kExitEstimation;
    }
    return kExitUsage;
}
