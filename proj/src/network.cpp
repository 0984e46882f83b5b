#include "netid/network.hpp"

#include <json.hpp>

#include <algorithm>
#include <deque>
#include <fstream>
#include <sstream>

namespace netid {

using json = nlohmann::json;

const TransferFunction& NetworkSpec::module(NodeId to, NodeId from) const {
    auto it = modules.find({to, from});
    if (it == modules.end()) {
        throw InvalidInput("module G_" + std::to_string(to) + std::to_string(from) + " not in network");
    }
    return it->second;
}

std::vector<NodeId> NetworkSpec::successors(NodeId k) const {
    std::vector<NodeId> out;
    for (const auto& [key, tf] : modules) {
        if (key.from == k) out.push_back(key.to);
    }
    return out;
}

std::vector<NodeId> NetworkSpec::predecessors(NodeId k) const {
    std::vector<NodeId> out;
    for (const auto& [key, tf] : modules) {
        if (key.to == k) out.push_back(key.from);
    }
    return out;
}

bool NetworkSpec::has_excitation(NodeId k) const {
    return std::any_of(excitations.begin(), excitations.end(),
                       [&](const Excitation& e) { return e.node == k && !e.tf.is_zero(); });
}

NodeSet NetworkSpec::noise_sources() const {
    NodeSet out;
    for (const auto& [k, nm] : noise) {
        if (nm.variance > 0.0 && !nm.tf.is_zero()) out.insert(k);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Document parsing

namespace {

TransferFunction::Coeffs read_coeffs(const json& j, const std::string& what) {
    if (!j.is_array() || j.empty()) throw InvalidInput(what + ": expected a nonempty coefficient array");
    TransferFunction::Coeffs c(static_cast<Index>(j.size()));
    for (std::size_t k = 0; k < j.size(); ++k) {
        if (!j[k].is_number()) throw InvalidInput(what + ": coefficients must be numbers");
        c(static_cast<Index>(k)) = j[k].get<double>();
    }
    return c;
}

TransferFunction read_tf(const json& entry, const std::string& what) {
    if (!entry.contains("num") || !entry.contains("den")) {
        throw InvalidInput(what + ": missing num/den");
    }
    TransferFunction tf{read_coeffs(entry.at("num"), what + ".num"), read_coeffs(entry.at("den"), what + ".den")};
    if (!tf.is_monic()) throw InvalidInput(what + ": denominator is not monic (leading coefficient must be 1)");
    if (!is_stable(tf)) throw InvalidInput(what + ": unstable denominator (root on or outside the unit circle)");
    return tf;
}

json write_coeffs(const TransferFunction::Coeffs& c) {
    json arr = json::array();
    for (Index k = 0; k < c.size(); ++k) arr.push_back(c(k));
    return arr;
}

int read_int(const json& entry, const char* key, const std::string& what) {
    if (!entry.contains(key) || !entry.at(key).is_number_integer()) {
        throw InvalidInput(what + ": missing integer key '" + key + "'");
    }
    return entry.at(key).get<int>();
}

} // namespace

NetworkSpec parse_network_spec(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw InvalidInput(std::string("malformed network document: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("nodes")) throw InvalidInput("network document needs key 'nodes'");

    NetworkSpec spec;
    spec.node_count = read_int(doc, "nodes", "network");
    if (spec.node_count < 1) throw InvalidInput("network: 'nodes' must be positive");

    for (const auto& m : doc.value("modules", json::array())) {
        const int from = read_int(m, "from", "module");
        const int to = read_int(m, "to", "module");
        const std::string what = "module G_" + std::to_string(to) + "," + std::to_string(from);
        if (!spec.valid_node(from) || !spec.valid_node(to)) throw InvalidInput(what + ": invalid node index");
        if (from == to) throw InvalidInput(what + ": self-loop not allowed");
        auto tf = read_tf(m, what);
        if (!tf.is_strictly_proper()) throw InvalidInput(what + ": module must be strictly proper (num[0] == 0)");
        if (!spec.modules.emplace(ModuleKey{to, from}, std::move(tf)).second) {
            throw InvalidInput(what + ": duplicate module");
        }
    }

    for (const auto& n : doc.value("noise", json::array())) {
        const int node = read_int(n, "node", "noise");
        const std::string what = "noise H_" + std::to_string(node);
        if (!spec.valid_node(node)) throw InvalidInput(what + ": invalid node index");
        NoiseModel nm;
        nm.tf = read_tf(n, what);
        if (nm.tf.num.size() == 0 || nm.tf.num(0) != 1.0) throw InvalidInput(what + ": numerator is not monic");
        if (!is_stable(TransferFunction{Vector::Ones(1), nm.tf.num})) {
            throw InvalidInput(what + ": not stably invertible (numerator root on or outside the unit circle)");
        }
        nm.variance = n.value("variance", 0.0);
        if (!(nm.variance >= 0.0)) throw InvalidInput(what + ": variance must be >= 0");
        if (!spec.noise.emplace(node, nm).second) throw InvalidInput(what + ": duplicate entry");
    }

    int max_signal = 0;
    for (const auto& e : doc.value("excitations", json::array())) {
        Excitation ex;
        ex.node = read_int(e, "node", "excitation");
        ex.signal = read_int(e, "signal", "excitation");
        const std::string what = "excitation R_" + std::to_string(ex.node) + "," + std::to_string(ex.signal);
        if (!spec.valid_node(ex.node)) throw InvalidInput(what + ": invalid node index");
        if (ex.signal < 1) throw InvalidInput(what + ": signal index must be >= 1");
        ex.tf = read_tf(e, what);
        max_signal = std::max(max_signal, ex.signal);
        spec.excitations.push_back(std::move(ex));
    }
    std::sort(spec.excitations.begin(), spec.excitations.end(), [](const Excitation& a, const Excitation& b) {
        return std::pair(a.node, a.signal) < std::pair(b.node, b.signal);
    });
    spec.external_count = doc.contains("signals") ? read_int(doc, "signals", "network") : max_signal;
    if (spec.external_count < max_signal) throw InvalidInput("network: 'signals' smaller than a referenced signal");
    return spec;
}

NetworkSpec load_network_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open network file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_network_spec(ss.str());
}

std::string to_json(const NetworkSpec& spec) {
    json doc;
    doc["nodes"] = spec.node_count;
    doc["signals"] = spec.external_count;
    json modules = json::array();
    for (const auto& [key, tf] : spec.modules) {
        modules.push_back({{"from", key.from}, {"to", key.to}, {"num", write_coeffs(tf.num)}, {"den", write_coeffs(tf.den)}});
    }
    doc["modules"] = modules;
    json noise = json::array();
    for (const auto& [node, nm] : spec.noise) {
        noise.push_back({{"node", node}, {"num", write_coeffs(nm.tf.num)}, {"den", write_coeffs(nm.tf.den)},
                         {"variance", nm.variance}});
    }
    doc["noise"] = noise;
    json ex = json::array();
    for (const auto& e : spec.excitations) {
        ex.push_back({{"node", e.node}, {"signal", e.signal}, {"num", write_coeffs(e.tf.num)}, {"den", write_coeffs(e.tf.den)}});
    }
    doc["excitations"] = ex;
    return doc.dump(2);
}

// ---------------------------------------------------------------------------
// Graph analysis

namespace {

void require_node(const NetworkSpec& spec, NodeId k) {
    if (!spec.valid_node(k)) throw InvalidInput("invalid node index " + std::to_string(k));
}

bool contains(const NodeSet& s, NodeId k) { return s.count(k) > 0; }

// Depth-first enumeration of simple paths start -> goal through non-blocked
// intermediates; stops after `limit` paths.
void enumerate_paths(const NetworkSpec& spec, NodeId current, NodeId goal, const NodeSet& blocking,
                     std::optional<ModuleKey> excluded, Path& stack, std::vector<bool>& on_stack,
                     std::vector<Path>& out, std::size_t limit) {
    for (NodeId next : spec.successors(current)) {
        if (out.size() >= limit) return;
        if (excluded && excluded->from == current && excluded->to == next) continue;
        if (next == goal) {
            Path p = stack;
            p.push_back(goal);
            out.push_back(std::move(p));
            continue;
        }
        if (on_stack[next] || contains(blocking, next)) continue;
        on_stack[next] = true;
        stack.push_back(next);
        enumerate_paths(spec, next, goal, blocking, excluded, stack, on_stack, out, limit);
        stack.pop_back();
        on_stack[next] = false;
    }
}

std::vector<Path> unblocked_paths(const NetworkSpec& spec, NodeId start, NodeId goal, const NodeSet& blocking,
                                  std::optional<ModuleKey> excluded, std::size_t limit) {
    std::vector<Path> out;
    Path stack{start};
    std::vector<bool> on_stack(static_cast<std::size_t>(spec.node_count) + 1, false);
    on_stack[start] = true;
    enumerate_paths(spec, start, goal, blocking, excluded, stack, on_stack, out, limit);
    return out;
}

constexpr std::size_t kWitnessLimit = 16;

} // namespace

bool has_unmeasured_path(const NetworkSpec& spec, NodeId from, NodeId to, const NodeSet& blockers,
                         std::optional<ModuleKey> excluded_edge) {
    require_node(spec, from);
    require_node(spec, to);
    std::vector<bool> seen(static_cast<std::size_t>(spec.node_count) + 1, false);
    std::deque<NodeId> queue{from};
    seen[from] = true;
    while (!queue.empty()) {
        const NodeId v = queue.front();
        queue.pop_front();
        for (NodeId next : spec.successors(v)) {
            if (excluded_edge && excluded_edge->from == v && excluded_edge->to == next) continue;
            if (next == to) return true;
            if (seen[next] || contains(blockers, next)) continue;
            seen[next] = true;
            queue.push_back(next);
        }
    }
    return false;
}

PathReport check_parallel_path_loop(const NetworkSpec& spec, ModuleKey target, const NodeSet& blocking) {
    if (!spec.has_module(target.to, target.from)) {
        throw InvalidInput("target module G_" + std::to_string(target.to) + "," + std::to_string(target.from) +
                           " not in network");
    }
    const NodeId j = target.to;
    const NodeId i = target.from;
    PathReport report;
    // Endpoints i and j never block; the loop check ignores j itself.
    NodeSet inner = blocking;
    inner.erase(i);
    inner.erase(j);
    report.witnesses = unblocked_paths(spec, i, j, inner, ModuleKey{j, i}, kWitnessLimit);
    auto loops = unblocked_paths(spec, j, j, inner, std::nullopt, kWitnessLimit);
    report.witnesses.insert(report.witnesses.end(), loops.begin(), loops.end());
    report.satisfied = report.witnesses.empty();
    return report;
}

std::vector<NodeId> find_confounders(const NetworkSpec& spec, const NodeSet& set_x, const NodeSet& set_xp,
                                     const NodeSet& conditioning) {
    for (const auto* s : {&set_x, &set_xp, &conditioning}) {
        for (NodeId k : *s) require_node(spec, k);
    }
    std::vector<NodeId> out;
    for (NodeId source : spec.noise_sources()) {
        // Nodes reachable from e_source; a conditioned node is reached but not expanded.
        std::vector<bool> reached(static_cast<std::size_t>(spec.node_count) + 1, false);
        std::deque<NodeId> queue{source};
        reached[source] = true;
        while (!queue.empty()) {
            const NodeId v = queue.front();
            queue.pop_front();
            if (contains(conditioning, v)) continue;
            for (NodeId next : spec.successors(v)) {
                if (!reached[next]) {
                    reached[next] = true;
                    queue.push_back(next);
                }
            }
        }
        auto hits = [&](const NodeSet& s) {
            return std::any_of(s.begin(), s.end(), [&](NodeId k) { return reached[k]; });
        };
        if (hits(set_x) && hits(set_xp)) out.push_back(source);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Predictor model

std::string format_path(const Path& p) {
    std::string s;
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (k) s += "->";
        s += std::to_string(p[k]);
    }
    return s;
}

std::string format_set(const NodeSet& s) {
    std::string out = "{";
    bool first = true;
    for (NodeId k : s) {
        if (!first) out += ",";
        out += std::to_string(k);
        first = false;
    }
    return out + "}";
}

namespace {

NodeSet set_union(const NodeSet& a, const NodeSet& b) {
    NodeSet out = a;
    out.insert(b.begin(), b.end());
    return out;
}

void fill_derived_sets(const NetworkSpec& spec, PredictorModel& m) {
    m.W = set_union(m.D, m.Y);
    m.Q.clear();
    m.O.clear();
    m.U.clear();
    m.Z.clear();
    for (NodeId k : m.Y) (contains(m.D, k) ? m.Q : m.O).insert(k);
    for (NodeId k : m.D) {
        if (!contains(m.Y, k)) m.U.insert(k);
    }
    for (NodeId k = 1; k <= spec.node_count; ++k) {
        if (!contains(m.W, k)) m.Z.insert(k);
    }
    m.inputs_w.clear();
    m.inputs_u.clear();
    for (NodeId k : m.Y) {
        NodeSet dw;
        for (NodeId l : m.W) {
            if (l != k && has_unmeasured_path(spec, l, k, m.W)) dw.insert(l);
        }
        NodeSet du;
        for (NodeId l = 1; l <= spec.node_count; ++l) {
            if (l == k || contains(m.W, l) || !spec.has_excitation(l)) continue;
            if (has_unmeasured_path(spec, l, k, m.W)) du.insert(l);
        }
        m.inputs_w[k] = std::move(dw);
        m.inputs_u[k] = std::move(du);
    }
}

} // namespace

std::vector<ConditionCheck> check_conditions(const NetworkSpec& spec, const PredictorModel& model) {
    const NodeId j = model.output();
    std::vector<ConditionCheck> out;

    ConditionCheck c2;
    c2.name = "no confounding between w_j and w_W\\{j} given w_W";
    NodeSet rest = model.W;
    rest.erase(j);
    if (!rest.empty()) c2.confounders = find_confounders(spec, {j}, rest, model.W);
    c2.satisfied = c2.confounders.empty();
    out.push_back(c2);

    ConditionCheck c3;
    c3.name = "paths from O\\{j} to w_j pass through w_W";
    for (NodeId h : model.O) {
        if (h == j) continue;
        auto paths = unblocked_paths(spec, h, j, model.W, std::nullopt, kWitnessLimit);
        c3.witnesses.insert(c3.witnesses.end(), paths.begin(), paths.end());
    }
    c3.satisfied = c3.witnesses.empty();
    out.push_back(c3);

    ConditionCheck c4;
    c4.name = "parallel paths and loops around the target pass through w_W";
    auto pr = check_parallel_path_loop(spec, model.target, model.W);
    c4.satisfied = pr.satisfied;
    c4.witnesses = pr.witnesses;
    out.push_back(c4);
    return out;
}

PredictorModel build_predictor_model(const NetworkSpec& spec, ModuleKey target, const NodeSet& measured,
                                     std::optional<NodeId> missing, PredictorOptions options) {
    const NodeId j = target.to;
    const NodeId i = target.from;
    require_node(spec, j);
    require_node(spec, i);
    for (NodeId k : measured) require_node(spec, k);
    if (!spec.has_module(j, i)) throw InvalidInput("target module not in network");
    if (missing) {
        require_node(spec, *missing);
        if (*missing == i) {
            throw InvalidInput("missing node equals the target-module input; the target is then only identifiable "
                               "up to a scaling factor (blind identification is not supported)");
        }
        if (*missing == j) throw InvalidInput("missing node equals the target-module output");
        if (contains(measured, *missing)) throw InvalidInput("missing node is listed as measured");
    }
    if (!contains(measured, i)) throw InvalidInput("target input w_" + std::to_string(i) + " must be measured");
    if (!contains(measured, j)) throw InvalidInput("target output w_" + std::to_string(j) + " must be measured");

    // The missing node takes part in every path and confounder analysis as if measured.
    NodeSet known = measured;
    if (missing) known.insert(*missing);

    PredictorModel model;
    model.target = target;
    model.missing = missing;
    model.use_additional = options.use_additional && missing.has_value();
    model.Y = {j};
    model.D = {i};
    if (missing) {
        model.Y.insert(*missing);
        model.D.insert(*missing);
    }

    for (bool changed = true; changed;) {
        changed = false;
        auto add = [&](NodeSet& s, NodeId k) {
            if (s.insert(k).second) changed = true;
        };
        const NodeSet W = set_union(model.D, model.Y);

        // Step 1: block parallel paths and loops with known nodes in w_D.
        auto pr = check_parallel_path_loop(spec, target, W);
        for (const auto& path : pr.witnesses) {
            auto it = std::find_if(path.begin() + 1, path.end() - 1, [&](NodeId k) { return contains(known, k); });
            if (it != path.end() - 1) {
                add(model.D, *it);
            } else if (options.enforce_conditions) {
                throw ConditionViolation("parallel-path condition cannot be met with the measured nodes: path " + format_path(path) +
                                             " has no measured intermediate node",
                                         ConditionCheck{"parallel paths and loops around the target pass through w_W", false, {path}, {}});
            }
        }

        // Step 3: measured descendants of the missing node as additional outputs.
        if (model.use_additional) {
            for (NodeId k : measured) {
                if (k == j || contains(model.Y, k)) continue;
                if (has_unmeasured_path(spec, *missing, k, W)) {
                    add(model.Y, k);
                    model.additional.push_back(k);
                }
            }
        }

        // Steps 2, 4, 5: known ascendants with unmeasured paths to any output.
        for (NodeId y : NodeSet(model.Y)) {
            for (NodeId k : known) {
                if (k == y || (k == j && y == j)) continue;
                if (has_unmeasured_path(spec, k, y, W)) add(model.D, k);
            }
        }
    }
    std::sort(model.additional.begin(), model.additional.end());
    fill_derived_sets(spec, model);

    if (options.enforce_conditions) {
        for (const auto& check : check_conditions(spec, model)) {
            if (check.satisfied) continue;
            std::string detail;
            for (const auto& p : check.witnesses) detail += " " + format_path(p);
            for (NodeId e : check.confounders) detail += " e_" + std::to_string(e);
            throw ConditionViolation(check.name + " violated; witnesses:" + detail, check);
        }
    }
    return model;
}

} // namespace netid
