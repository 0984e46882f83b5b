#pragma once

#include "netid/core.hpp"
#include "netid/transfer_function.hpp"

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace netid {

/// (j, l): the module G_jl carrying w_l into w_j.
struct ModuleKey {
    NodeId to = 0;
    NodeId from = 0;
    friend auto operator<=>(const ModuleKey&, const ModuleKey&) = default;
};

struct NoiseModel {
    TransferFunction tf = TransferFunction::unit();
    double variance = 0.0;
};

/// u_node += R(q) r_signal
struct Excitation {
    NodeId node = 0;
    int signal = 0;  // 1-based external signal index
    TransferFunction tf = TransferFunction::unit();
};

/// Ground-truth dynamic network: w = G w + R r + H e, with diagonal H and Lambda.
struct NetworkSpec {
    int node_count = 0;
    int external_count = 0;
    std::map<ModuleKey, TransferFunction> modules;
    std::map<NodeId, NoiseModel> noise;
    std::vector<Excitation> excitations;

    bool valid_node(NodeId k) const { return k >= 1 && k <= node_count; }
    bool has_module(NodeId to, NodeId from) const { return modules.count({to, from}) > 0; }
    const TransferFunction& module(NodeId to, NodeId from) const;

    std::vector<NodeId> successors(NodeId k) const;
    std::vector<NodeId> predecessors(NodeId k) const;
    bool has_excitation(NodeId k) const;
    /// Nodes whose noise source has positive variance.
    NodeSet noise_sources() const;
};

/// Parses the JSON network document (keys `nodes`, `modules`, `noise`,
/// `excitations`) and validates every transfer function.
NetworkSpec parse_network_spec(std::string_view text);
NetworkSpec load_network_spec(const std::string& path);
/// Canonical serialization; parse(to_json(x)) reproduces x bit-exactly.
std::string to_json(const NetworkSpec& spec);

/// True iff a directed path from -> to exists whose intermediate nodes all
/// avoid `blockers`. A direct edge has no intermediates. `excluded_edge`
/// removes one edge (from its `from` to its `to`) from the graph.
bool has_unmeasured_path(const NetworkSpec& spec, NodeId from, NodeId to, const NodeSet& blockers,
                         std::optional<ModuleKey> excluded_edge = std::nullopt);

using Path = std::vector<NodeId>;

struct PathReport {
    bool satisfied = true;
    std::vector<Path> witnesses;  // offending paths i..j and loops j..j
};

/// Parallel path / loop condition for target G_ji with respect to a blocking set.
PathReport check_parallel_path_loop(const NetworkSpec& spec, ModuleKey target, const NodeSet& blocking);

/// Noise sources e_l with simultaneous unblocked paths to set_x and set_xp.
/// The noise enters at node l; conditioning on l stops propagation beyond l.
std::vector<NodeId> find_confounders(const NetworkSpec& spec, const NodeSet& set_x, const NodeSet& set_xp,
                                     const NodeSet& conditioning);

/// Identification setup derived from a network and a target module.
struct PredictorModel {
    ModuleKey target;  // (j, i)
    NodeSet Y, D, Q, O, U, Z, W;
    std::optional<NodeId> missing;
    std::vector<NodeId> additional;
    std::map<NodeId, NodeSet> inputs_w;  // D_k^w for k in Y
    std::map<NodeId, NodeSet> inputs_u;  // D_k^u for k in Y (nodes whose u_k enters)
    bool use_additional = false;

    NodeId output() const { return target.to; }
    NodeId input() const { return target.from; }
};

struct PredictorOptions {
    bool use_additional = false;
    /// When false, the predictor conditions are evaluated but not enforced. Used for
    /// estimators that knowingly drop a required predictor input.
    bool enforce_conditions = true;
};

struct ConditionCheck {
    std::string name;
    bool satisfied = true;
    std::vector<Path> witnesses;
    std::vector<NodeId> confounders;
};

/// Re-evaluates the no-confounding, output-path and parallel-path conditions.
std::vector<ConditionCheck> check_conditions(const NetworkSpec& spec, const PredictorModel& model);

/// Raised when the predictor conditions cannot be met; carries the failing check.
class ConditionViolation : public Error {
public:
    ConditionViolation(const std::string& what, ConditionCheck check)
        : Error(what), check_(std::move(check)) {}
    const ConditionCheck& check() const { return check_; }

private:
    ConditionCheck check_;
};

/// Five-step predictor construction for one (optional) missing node.
PredictorModel build_predictor_model(const NetworkSpec& spec, ModuleKey target, const NodeSet& measured,
                                     std::optional<NodeId> missing, PredictorOptions options = {});

std::string format_path(const Path& p);
std::string format_set(const NodeSet& s);

} // namespace netid
