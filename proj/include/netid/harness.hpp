#pragma once

#include "netid/baselines.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace netid {

enum class Variant { mc_ebdm, mc_ebdma, ebdm, ebdm_m, dm_to, dm_to_m };

std::string variant_name(Variant v);
/// Accepts MC-EBDM, MC-EBDMA, EBDM, EBDM+M, DM+TO, DM+TO+M.
Variant parse_variant(std::string_view name);
const std::vector<Variant>& all_variants();
bool uses_missing_node(Variant v);

/// 1 - |truth - estimate| / |truth - mean(truth)|; NaN for a constant truth.
double fit_score(const Vector& truth, const Vector& estimate);

struct FitMetrics {
    double fit_imp = 0.0;
    double fit_theta = 0.0;
};

FitMetrics fit_metrics(const Vector& g0, const Vector& g_hat, const Vector& theta0, const Vector& theta_hat);

/// Pearson correlation; NaN when either series is constant.
double pearson(const Vector& x, const Vector& y);

/// Type-7 (linear interpolation) sample quantile.
double quantile(std::vector<double> values, double p);

struct ExperimentConfig {
    std::string network_path;
    NetworkSpec spec;
    ModuleKey target{0, 0};
    NodeSet measured;
    std::optional<NodeId> missing;
    std::vector<Variant> variants;
    Index replicates = 50;
    Index samples = 150;
    std::uint64_t seed = 1;
    McemConfig estimator;
    int pem_restarts = 4;
    Index reconstruction_replicate = 0;
    int threads = 0;  // 0 selects the hardware concurrency
};

/// Parses the JSON experiment document. Relative network paths resolve
/// against `base_dir`.
ExperimentConfig parse_experiment_config(std::string_view text, const std::string& base_dir = ".");
ExperimentConfig load_experiment_config(const std::string& path);

/// Estimator section of the config document (l, M, B, kappa, max_iters, tol, theta, ...).
McemConfig parse_estimator_config(std::string_view text);

struct TargetTruth {
    Vector g0;      // first N impulse coefficients of the true target module
    Vector theta0;  // true parameters in the estimator's parameterization, empty when not representable
};

TargetTruth target_truth(const ExperimentConfig& config, Index n);

/// Signals of one replicate, with excitations and noises from
/// derive_seed(seed, {replicate + 1}).
SignalBundle simulate_replicate(const ExperimentConfig& config, Index replicate);

struct VariantOutcome {
    Variant variant = Variant::mc_ebdma;
    bool ok = false;
    std::string status;
    Vector theta;
    Vector g;
    double sigma_j2 = 0.0;
    FitMetrics fit;
    bool converged = false;
    Index iterations = 0;
    double wm_corr = std::nan("");
    Vector w_m_hat;
    double seconds = 0.0;
};

/// Runs one estimator on a data record. Failures are captured in the
/// outcome rather than thrown.
VariantOutcome run_variant(Variant variant, const ExperimentConfig& config, const SignalBundle& signals,
                           std::uint64_t seed);

struct ReplicateRecord {
    Index replicate = 0;
    std::uint64_t data_checksum = 0;
    Vector w_true;  // true missing-node signal, empty without a missing node
    std::vector<VariantOutcome> outcomes;  // in config variant order
};

struct SummaryRow {
    std::string variant;
    std::string metric;
    Index count = 0;
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
};

struct ExperimentResult {
    std::vector<ReplicateRecord> replicates;
    std::vector<SummaryRow> summary;
    int failures = 0;

    const SummaryRow* find(std::string_view variant, std::string_view metric) const;
};

/// Median and quartiles per variant of fit_imp, fit_theta, wm_corr and each
/// theta component over successful replicates.
std::vector<SummaryRow> summarize(const std::vector<ReplicateRecord>& replicates, const std::vector<Variant>& variants);

/// Simulates each replicate and runs every variant on the same record.
/// Replicates run concurrently; results are ordered by replicate.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// fits.csv, params.csv, summary.csv, reconstruction.csv and timings.csv.
void write_experiment(const ExperimentResult& result, const ExperimentConfig& config, const std::string& dir);

} // namespace netid
