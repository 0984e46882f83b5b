#include "netid/regression.hpp"

#include <cmath>

namespace netid {

const std::vector<LatentBlock>& LatentLayout::group(Group g) const {
    switch (g) {
    case Group::s: return s;
    case Group::b: return b;
    case Group::f: return f;
    }
    throw InvalidInput("unknown latent group");
}

namespace {

const char* group_prefix(Group g) {
    switch (g) {
    case Group::s: return "s";
    case Group::b: return "b";
    case Group::f: return "f";
    }
    return "?";
}

std::vector<LatentBlock> group_blocks(const PredictorModel& model, Group g, NodeId output, NodeId skip_input,
                                      NodeId missing, Index l) {
    std::vector<LatentBlock> out;
    const std::string prefix = group_prefix(g);
    Index offset = 0;
    auto push = [&](std::string name, SourceKind kind, NodeId node, bool from_missing) {
        out.push_back({prefix + ":" + name, g, kind, node, offset, from_missing});
        offset += l;
    };
    push("self", SourceKind::self, output, output == missing);
    for (NodeId k : model.inputs_w.at(output)) {
        if (k == skip_input) continue;
        push("w" + std::to_string(k), SourceKind::node, k, k == missing);
    }
    for (NodeId k : model.inputs_u.at(output)) {
        if (k == output) continue;
        push("u" + std::to_string(k), SourceKind::excitation, k, false);
    }
    return out;
}

} // namespace

LatentLayout make_layout(const PredictorModel& model, Index l) {
    if (l < 1) throw InvalidInput("impulse response length l must be >= 1");
    if (model.additional.size() > 1) {
        throw InvalidInput("estimation supports at most one additional node; got " +
                           std::to_string(model.additional.size()));
    }
    LatentLayout layout;
    layout.l = l;
    layout.output = model.output();
    layout.input = model.input();
    layout.missing = model.missing.value_or(0);
    layout.additional = model.additional.empty() ? 0 : model.additional.front();
    layout.s = group_blocks(model, Group::s, layout.output, layout.input, layout.missing, l);
    if (layout.has_missing()) layout.b = group_blocks(model, Group::b, layout.missing, 0, layout.missing, l);
    if (layout.has_additional()) layout.f = group_blocks(model, Group::f, layout.additional, 0, layout.missing, l);
    return layout;
}

// ---------------------------------------------------------------------------
// Target parameterization

TransferFunction ThetaParam::transfer_function(const Vector& theta) const {
    if (theta.size() != size()) throw InvalidInput("theta has wrong length for its parameterization");
    TransferFunction tf;
    tf.num = Vector::Zero(nb + 1);
    tf.num.tail(nb) = theta.head(nb);
    if (kind == Kind::rational) {
        tf.den = Vector::Ones(na + 1);
        tf.den.tail(na) = theta.tail(na);
    } else {
        tf.den = Vector::Ones(1);
    }
    return tf;
}

Vector ThetaParam::from_transfer_function(const TransferFunction& tf) const {
    Vector theta = Vector::Zero(size());
    for (int k = 0; k < nb && k + 1 < tf.num.size(); ++k) theta(k) = tf.num(k + 1) / tf.den(0);
    if (kind == Kind::rational) {
        for (int k = 0; k < na && k + 1 < tf.den.size(); ++k) theta(nb + k) = tf.den(k + 1) / tf.den(0);
    }
    return theta;
}

Vector ThetaParam::impulse(const Vector& theta, Index n) const {
    if (theta.size() != size()) throw InvalidInput("theta has wrong length for its parameterization");
    if (kind == Kind::fir) {
        Vector g = Vector::Zero(n);
        const Index m = std::min<Index>(n, nb);
        g.head(m) = theta.head(m);
        return g;
    }
    return impulse_response(transfer_function(theta), n);
}

Matrix ThetaParam::jacobian(const Vector& theta, Index n) const {
    Matrix jac = Matrix::Zero(n, size());
    if (kind == Kind::fir) {
        for (Index k = 0; k < std::min<Index>(n, nb); ++k) jac(k, k) = 1.0;
        return jac;
    }
    const TransferFunction tf = transfer_function(theta);
    const TransferFunction inv_den{Vector::Ones(1), tf.den};
    Vector delta = Vector::Zero(n + 1);
    delta(0) = 1.0;
    const Vector base = filter(inv_den, delta);  // impulse of 1/A, lags 0..n
    for (int k = 1; k <= nb; ++k) {
        // d g / d b_k: impulse of q^-k / A
        jac.col(k - 1) = delayed(base, k).tail(n);
    }
    if (na > 0) {
        Vector h = filter(tf, delta);  // lags 0..n
        for (int k = 1; k <= na; ++k) {
            const Vector y = filter(inv_den, delayed(h, k));
            jac.col(nb + k - 1) = -y.tail(n);
        }
    }
    return jac;
}

Matrix ThetaParam::basis(Index n) const {
    if (!is_linear()) throw InvalidInput("basis: parameterization is not linear in theta");
    Matrix m = Matrix::Zero(n, size());
    for (Index k = 0; k < std::min<Index>(n, nb); ++k) m(k, k) = 1.0;
    return m;
}

bool ThetaParam::admissible(const Vector& theta) const {
    if (theta.size() != size() || !theta.allFinite()) return false;
    if (kind == Kind::fir || na == 0) return true;
    return is_stable(transfer_function(theta));
}

// ---------------------------------------------------------------------------
// Hyperparameters

std::vector<KernelHyper>& HyperState::group(Group g) {
    return const_cast<std::vector<KernelHyper>&>(static_cast<const HyperState&>(*this).group(g));
}

const std::vector<KernelHyper>& HyperState::group(Group g) const {
    switch (g) {
    case Group::s: return s;
    case Group::b: return b;
    case Group::f: return f;
    }
    throw InvalidInput("unknown latent group");
}

Vector flatten(const HyperState& eta, const LatentLayout& layout) {
    std::vector<double> v(eta.theta.data(), eta.theta.data() + eta.theta.size());
    for (Group g : {Group::s, Group::b, Group::f}) {
        for (const auto& h : eta.group(g)) {
            if (!h.fixed_lambda) v.push_back(std::log(h.lambda));
        }
    }
    for (Group g : {Group::s, Group::b, Group::f}) {
        for (const auto& h : eta.group(g)) v.push_back(h.beta);
    }
    v.push_back(std::log(eta.sigma_j2));
    if (layout.has_missing()) v.push_back(std::log(eta.sigma_m2));
    if (layout.has_additional()) {
        v.push_back(std::log(eta.sigma_a2));
        v.push_back(eta.sigma_am);
    }
    return Eigen::Map<Vector>(v.data(), static_cast<Index>(v.size()));
}

Matrix sigma_bar(const HyperState& eta, const LatentLayout& layout) {
    if (!layout.has_missing()) return Matrix::Constant(1, 1, eta.sigma_j2);
    if (!layout.has_additional()) {
        Matrix s = Matrix::Zero(2, 2);
        s(0, 0) = eta.sigma_j2;
        s(1, 1) = eta.sigma_m2;
        return s;
    }
    Matrix s = Matrix::Zero(3, 3);
    s(0, 0) = eta.sigma_j2;
    s(1, 1) = eta.sigma_a2;
    s(2, 2) = eta.sigma_m2;
    s(1, 2) = s(2, 1) = eta.sigma_am;
    return s;
}

Priors assemble_priors(const LatentLayout& layout, const HyperState& eta) {
    auto build = [&](Group g) {
        const auto& blocks = layout.group(g);
        const auto& hypers = eta.group(g);
        if (blocks.size() != hypers.size()) {
            throw InvalidInput(std::string("prior for group ") + group_prefix(g) + ": " + std::to_string(hypers.size()) +
                               " hyperparameter entries for " + std::to_string(blocks.size()) + " blocks");
        }
        const Index l = layout.l;
        Matrix k = Matrix::Zero(layout.size(g), layout.size(g));
        for (std::size_t q = 0; q < blocks.size(); ++q) {
            if (hypers[q].fixed_lambda && hypers[q].lambda != 1.0) {
                throw InvalidInput("block " + blocks[q].name + " has a fixed scale but lambda != 1");
            }
            k.block(blocks[q].offset, blocks[q].offset, l, l) = stable_spline(hypers[q], l);
        }
        return k;
    };
    return {build(Group::s), build(Group::b), build(Group::f)};
}

// ---------------------------------------------------------------------------
// Stacked model

const std::vector<Vector>& StackedModel::bases(Group g) const {
    switch (g) {
    case Group::s: return s_base;
    case Group::b: return b_base;
    case Group::f: return f_base;
    }
    throw InvalidInput("unknown latent group");
}

std::vector<Vector>& StackedModel::bases(Group g) {
    return const_cast<std::vector<Vector>&>(static_cast<const StackedModel&>(*this).bases(g));
}

Matrix StackedModel::regressor(Group g) const {
    const auto& blocks = layout.group(g);
    const auto& base = bases(g);
    Matrix out(n, layout.size(g));
    for (std::size_t q = 0; q < blocks.size(); ++q) out.middleCols(blocks[q].offset, layout.l) = toeplitz(base[q], layout.l);
    return out;
}

Matrix StackedModel::target_regressor() const { return toeplitz(input_delayed, n); }

Vector StackedModel::target_residual_base() const { return w_j - u_j - toeplitz_apply(input_delayed, g); }

Vector StackedModel::stacked_output() const {
    std::vector<const Vector*> parts{&w_j};
    if (layout.has_additional()) parts.push_back(&w_a);
    if (layout.has_missing()) parts.push_back(&w_m);
    Vector out(n * static_cast<Index>(parts.size()));
    for (std::size_t k = 0; k < parts.size(); ++k) out.segment(static_cast<Index>(k) * n, n) = *parts[k];
    return out;
}

Matrix StackedModel::stacked_regressor() const {
    const Index ns = layout.size(Group::s), nf = layout.size(Group::f), nbb = layout.size(Group::b);
    const Index rows = n * (1 + (layout.has_additional() ? 1 : 0) + (layout.has_missing() ? 1 : 0));
    Matrix out = Matrix::Zero(rows, ns + nf + nbb);
    Index row = 0;
    out.block(row, 0, n, ns) = regressor(Group::s);
    row += n;
    if (layout.has_additional()) {
        out.block(row, ns, n, nf) = regressor(Group::f);
        row += n;
    }
    if (layout.has_missing()) out.block(row, ns + nf, n, nbb) = regressor(Group::b);
    return out;
}

Vector StackedModel::stacked_known_input() const {
    std::vector<const Vector*> parts{&u_j};
    if (layout.has_additional()) parts.push_back(&u_a);
    if (layout.has_missing()) parts.push_back(&u_m);
    Vector out(n * static_cast<Index>(parts.size()));
    for (std::size_t k = 0; k < parts.size(); ++k) out.segment(static_cast<Index>(k) * n, n) = *parts[k];
    return out;
}

Vector StackedModel::stacked_mean(const Vector& s, const Vector& b, const Vector& f) const {
    Vector latent(s.size() + f.size() + b.size());
    latent << s, f, b;
    Vector out = stacked_regressor() * latent + stacked_known_input();
    out.head(n) += toeplitz_apply(input_delayed, g);
    return out;
}

namespace {

Vector block_base(const LatentBlock& blk, const SignalBundle& signals, const Vector& w_m, NodeId missing) {
    auto node_signal = [&](NodeId k) -> Vector { return k == missing ? w_m : signals.node(k); };
    switch (blk.kind) {
    case SourceKind::self: return delayed(Vector(node_signal(blk.node) - signals.excitation(blk.node)), 1);
    case SourceKind::node: return delayed(node_signal(blk.node), 1);
    case SourceKind::excitation: return delayed(signals.excitation(blk.node), 1);
    }
    return {};
}

void rebuild_target_self(StackedModel& sm) {
    sm.s_base[0] = delayed(Vector(sm.w_j - sm.u_j), 1) + toeplitz_apply(sm.input_correction, sm.g);
}

} // namespace

StackedModel build_stacked_model(const PredictorModel& model, const SignalBundle& signals, const LatentLayout& layout,
                                 const ThetaParam& param, const Vector& theta) {
    const Index n = signals.samples();
    if (n < 2) throw InvalidInput("build_stacked_model: need at least 2 samples");
    if (signals.w.rows() < static_cast<Index>(model.W.size()) || signals.u.rows() != signals.w.rows() || signals.u.cols() != n) {
        throw InvalidInput("build_stacked_model: signal dimensions do not match the network");
    }
    for (NodeId k : model.W) {
        if (k > signals.w.rows()) throw InvalidInput("build_stacked_model: missing signal for node " + std::to_string(k));
    }
    if (layout.output != model.output() || layout.missing != model.missing.value_or(0)) {
        throw InvalidInput("build_stacked_model: layout does not belong to this predictor model");
    }
    if (!param.admissible(theta)) throw InvalidInput("build_stacked_model: theta is not admissible");

    StackedModel sm;
    sm.layout = layout;
    sm.param = param;
    sm.theta = theta;
    sm.n = n;
    sm.g = param.impulse(theta, n);
    sm.w_j = signals.node(layout.output);
    sm.u_j = signals.excitation(layout.output);
    const Vector w_i = signals.node(layout.input);
    sm.input_delayed = delayed(w_i, 1);
    sm.input_correction = -delayed(w_i, 2);
    const Vector placeholder = Vector::Zero(n);
    if (layout.has_missing()) {
        sm.w_m = placeholder;
        sm.u_m = signals.excitation(layout.missing);
    }
    if (layout.has_additional()) {
        sm.w_a = signals.node(layout.additional);
        sm.u_a = signals.excitation(layout.additional);
    }
    for (Group g : {Group::s, Group::b, Group::f}) {
        for (const auto& blk : layout.group(g)) sm.bases(g).push_back(block_base(blk, signals, placeholder, layout.missing));
    }
    rebuild_target_self(sm);
    return sm;
}

void swap_missing_signal_inplace(StackedModel& sm, const Vector& w_m) {
    if (!sm.layout.has_missing()) throw InvalidInput("swap_missing_signal: model has no missing node");
    if (w_m.size() != sm.n) throw InvalidInput("swap_missing_signal: draw length differs from N");
    sm.w_m = w_m;
    for (Group g : {Group::s, Group::b, Group::f}) {
        const auto& blocks = sm.layout.group(g);
        for (std::size_t q = 0; q < blocks.size(); ++q) {
            if (!blocks[q].from_missing) continue;
            sm.bases(g)[q] = blocks[q].kind == SourceKind::self ? delayed(Vector(w_m - sm.u_m), 1) : delayed(w_m, 1);
        }
    }
}

StackedModel swap_missing_signal(const StackedModel& stacked, const Vector& w_m) {
    StackedModel out = stacked;
    swap_missing_signal_inplace(out, w_m);
    return out;
}

void set_theta(StackedModel& sm, const Vector& theta) {
    if (!sm.param.admissible(theta)) throw InvalidInput("set_theta: theta is not admissible");
    sm.theta = theta;
    sm.g = sm.param.impulse(theta, sm.n);
    rebuild_target_self(sm);
}

} // namespace netid
