#include "netid/baselines.hpp"

#include <cmath>

namespace netid {

namespace {

int numerator_order(const TransferFunction& tf) {
    for (Index k = tf.num.size() - 1; k >= 1; --k) {
        if (tf.num(k) != 0.0) return static_cast<int>(k);
    }
    return 0;
}

int denominator_order(const Vector& den) {
    for (Index k = den.size() - 1; k >= 1; --k) {
        if (den(k) != 0.0) return static_cast<int>(k);
    }
    return 0;
}

Vector monic(const Vector& tail) {
    Vector p(tail.size() + 1);
    p(0) = 1.0;
    p.tail(tail.size()) = tail;
    return p;
}

struct Unpacked {
    std::vector<TransferFunction> modules;
    TransferFunction noise;  // C / D
};

Unpacked unpack(const MisoSpec& miso, const Vector& params) {
    Unpacked out;
    Index pos = 0;
    for (const auto& in : miso.inputs) {
        TransferFunction tf;
        tf.num = Vector::Zero(in.nb + 1);
        tf.num.tail(in.nb) = params.segment(pos, in.nb);
        pos += in.nb;
        tf.den = monic(params.segment(pos, in.nf));
        pos += in.nf;
        out.modules.push_back(tf);
    }
    out.noise.num = monic(params.segment(pos, miso.nc));
    pos += miso.nc;
    out.noise.den = monic(params.segment(pos, miso.nd));
    return out;
}

bool admissible(const MisoSpec& miso, const Vector& params) {
    if (!params.allFinite()) return false;
    const Unpacked u = unpack(miso, params);
    for (const auto& tf : u.modules) {
        if (!is_stable(tf)) return false;
    }
    // The predictor filters through D / C, so C must be stable.
    return is_stable(TransferFunction{Vector::Ones(1), u.noise.num});
}

} // namespace

Index MisoSpec::parameter_count() const {
    Index n = nc + nd;
    for (const auto& in : inputs) n += in.nb + in.nf;
    return n;
}

void MisoSpec::validate() const {
    if (inputs.empty()) throw InvalidInput("MISO structure needs at least one input");
    if (nc < 0 || nd < 0) throw InvalidInput("MISO noise orders must be >= 0");
    for (const auto& in : inputs) {
        if (in.nb < 1 || in.nf < 0) throw InvalidInput("MISO module orders must satisfy nb >= 1, nf >= 0");
        if (in.node == output) throw InvalidInput("MISO input equals the output");
    }
}

MisoSpec true_order_miso(const NetworkSpec& spec, NodeId output, const std::vector<NodeId>& inputs) {
    MisoSpec miso;
    miso.output = output;
    for (NodeId k : inputs) {
        if (!spec.has_module(output, k)) throw InvalidInput("no module from node " + std::to_string(k));
        const TransferFunction& tf = spec.module(output, k);
        miso.inputs.push_back({k, std::max(numerator_order(tf), 1), denominator_order(tf.den)});
    }
    auto it = spec.noise.find(output);
    if (it != spec.noise.end()) {
        miso.nc = denominator_order(it->second.tf.num);
        miso.nd = denominator_order(it->second.tf.den);
    }
    return miso;
}

Vector PemResult::module_params(const MisoSpec& miso, NodeId node) const {
    Index pos = 0;
    for (const auto& in : miso.inputs) {
        if (in.node == node) return params.segment(pos, in.nb + in.nf);
        pos += in.nb + in.nf;
    }
    throw InvalidInput("node " + std::to_string(node) + " is not a MISO input");
}

Vector pem_residual(const MisoSpec& miso, const SignalBundle& signals, const Vector& params) {
    miso.validate();
    if (params.size() != miso.parameter_count()) throw InvalidInput("pem_residual: parameter vector has wrong length");
    const Unpacked u = unpack(miso, params);
    Vector v = signals.node(miso.output) - signals.excitation(miso.output);
    for (std::size_t k = 0; k < miso.inputs.size(); ++k) v -= filter(u.modules[k], signals.node(miso.inputs[k].node));
    return filter(TransferFunction{u.noise.den, u.noise.num}, v);
}

Vector pem_initial_guess(const MisoSpec& miso, const SignalBundle& signals) {
    const Index n = signals.samples();
    int na = 0;
    for (const auto& in : miso.inputs) na = std::max(na, in.nf);
    Index cols = na;
    for (const auto& in : miso.inputs) cols += in.nb;
    const Vector y = signals.node(miso.output) - signals.excitation(miso.output);
    Matrix phi = Matrix::Zero(n, cols);
    for (int k = 1; k <= na; ++k) phi.col(k - 1) = -delayed(y, k);
    Index col = na;
    for (const auto& in : miso.inputs) {
        const Vector w = signals.node(in.node);
        for (int k = 1; k <= in.nb; ++k) phi.col(col++) = delayed(w, k);
    }
    const Vector coef = phi.colPivHouseholderQr().solve(y);

    Vector params = Vector::Zero(miso.parameter_count());
    Index pos = 0;
    col = na;
    for (const auto& in : miso.inputs) {
        params.segment(pos, in.nb) = coef.segment(col, in.nb);
        col += in.nb;
        pos += in.nb;
        params.segment(pos, in.nf) = coef.head(in.nf);
        if (!is_stable(TransferFunction{Vector::Ones(1), monic(params.segment(pos, in.nf))})) {
            params.segment(pos, in.nf).setZero();
        }
        pos += in.nf;
    }
    return params;
}

namespace {

LmResult pem_search(const MisoSpec& miso, const SignalBundle& signals, const Vector& start, const LmOptions& opt) {
    auto value = [&](const Vector& p) { return pem_residual(miso, signals, p).squaredNorm(); };
    auto model = [&](const Vector& p) {
        const Vector r0 = pem_residual(miso, signals, p);
        Matrix jac(r0.size(), p.size());
        for (Index k = 0; k < p.size(); ++k) {
            const double h = 1e-7 * std::max(1.0, std::abs(p(k)));
            Vector q = p;
            q(k) += h;
            if (admissible(miso, q)) {
                jac.col(k) = (pem_residual(miso, signals, q) - r0) / h;
            } else {
                q(k) = p(k) - h;
                jac.col(k) = (r0 - pem_residual(miso, signals, q)) / h;
            }
        }
        LocalModel m;
        m.value = r0.squaredNorm();
        m.gradient = 2.0 * jac.transpose() * r0;
        m.hessian = 2.0 * jac.transpose() * jac;
        return m;
    };
    auto ok = [&](const Vector& p) { return admissible(miso, p); };
    return levenberg_marquardt(model, value, ok, start, opt);
}

} // namespace

PemResult direct_pem(const SignalBundle& signals, const MisoSpec& miso, const PemOptions& options) {
    miso.validate();
    if (miso.output < 1 || miso.output > signals.w.rows()) throw InvalidInput("MISO output node not in signals");
    for (const auto& in : miso.inputs) {
        if (in.node < 1 || in.node > signals.w.rows()) throw InvalidInput("MISO input node not in signals");
    }
    const Vector base = pem_initial_guess(miso, signals);
    std::vector<Vector> starts{base};
    Rng rng(derive_seed(options.seed, {3000}));
    for (int r = 0; r < options.restarts; ++r) {
        Vector cand = base;
        double scale = 0.1;
        for (int attempt = 0; attempt < 32; ++attempt, scale *= 0.5) {
            cand = base + scale * standard_normal(rng, base.size());
            if (admissible(miso, cand)) break;
            cand = base;
        }
        starts.push_back(cand);
    }

    PemResult out;
    bool have = false;
    for (const auto& start : starts) {
        const LmResult lm = pem_search(miso, signals, start, options.lm);
        ++out.starts;
        if (!have || lm.value < out.objective) {
            have = true;
            out.params = lm.x;
            out.objective = lm.value;
            out.converged = lm.converged;
            out.trace = lm.trace;
        }
    }
    if (!std::isfinite(out.objective)) throw NumericalError("prediction-error search produced a non-finite objective");
    const Unpacked u = unpack(miso, out.params);
    out.modules = u.modules;
    out.noise = u.noise;
    return out;
}

EstimateResult ebdm(const SignalBundle& signals, const PredictorModel& model, const McemConfig& config) {
    if (model.missing) throw InvalidInput("ebdm requires a predictor model without a missing node");
    return run_mcem(signals, model, config);
}

} // namespace netid
