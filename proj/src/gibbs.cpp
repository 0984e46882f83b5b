#include "netid/gibbs.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <sstream>

namespace netid {

// ---------------------------------------------------------------------------
// GaussianBlock

namespace {

constexpr double kJitter = 1e-10;
constexpr int kJitterAttempts = 8;

Vector reversed(const Vector& x) { return x.reverse(); }

Matrix band_to_dense(const Matrix& band) {
    const Index n = band.rows();
    const Index p = band.cols() - 1;
    Matrix a = Matrix::Zero(n, n);
    for (Index t = 0; t < n; ++t) {
        for (Index d = 0; d <= p && t + d < n; ++d) a(t, t + d) = a(t + d, t) = band(t, d);
    }
    return a;
}

} // namespace

GaussianBlock GaussianBlock::from_precision_band(const Matrix& band, const Vector& h, const std::string& name,
                                                 int* jitter_events) {
    const Index n = band.rows();
    if (h.size() != n) throw InvalidInput("precision and information vector sizes differ for " + name);
    if (n == 0) return {};
    GaussianBlock out;
    out.n_ = n;
    out.p_ = std::min<Index>(band.cols() - 1, n - 1);
    const Index p = out.p_;

    auto factor = [&](double jitter) {
        out.factor_ = Matrix::Zero(n, p + 1);
        for (Index i = 0; i < n; ++i) {
            const Index k0 = std::max<Index>(0, i - p);
            for (Index j = k0; j <= i; ++j) {
                // Flipped matrix entry A'(i, j) = Lambda(n-1-i, n-1-j).
                double sum = band(n - 1 - i, i - j) + (i == j ? jitter : 0.0);
                for (Index k = k0; k < j; ++k) sum -= out.factor_(i, k - i + p) * out.factor_(j, k - j + p);
                if (i == j) {
                    if (!(sum > 0.0) || !std::isfinite(sum)) return false;
                    out.factor_(i, p) = std::sqrt(sum);
                } else {
                    out.factor_(i, j - i + p) = sum / out.factor_(j, p);
                }
            }
        }
        return true;
    };

    const double scale = std::abs(band.col(0).sum()) / static_cast<double>(n);
    double jitter = 0.0;
    bool ok = factor(jitter);
    for (int attempt = 0; !ok && attempt < kJitterAttempts; ++attempt) {
        jitter = jitter == 0.0 ? kJitter * scale : jitter * 10.0;
        if (jitter_events) ++*jitter_events;
        ok = factor(jitter);
    }
    if (!ok) {
        Eigen::SelfAdjointEigenSolver<Matrix> eig(band_to_dense(band), Eigen::EigenvaluesOnly);
        std::ostringstream msg;
        msg << "singular conditional precision for block " << name << " (smallest eigenvalue "
            << (eig.info() == Eigen::Success ? eig.eigenvalues()(0) : std::nan("")) << ")";
        throw NumericalError(msg.str());
    }
    out.mean_ = reversed(out.solve_lower_adjoint(out.solve_lower(reversed(h))));
    return out;
}

GaussianBlock GaussianBlock::from_precision(const Matrix& precision, const Vector& h, const std::string& name,
                                            int* jitter_events) {
    const Index n = precision.rows();
    if (precision.cols() != n) throw InvalidInput("precision must be square for " + name);
    Matrix band = Matrix::Zero(n, std::max<Index>(n, 1));
    for (Index t = 0; t < n; ++t) {
        for (Index d = 0; t + d < n; ++d) band(t, d) = 0.5 * (precision(t, t + d) + precision(t + d, t));
    }
    return from_precision_band(band, h, name, jitter_events);
}

Vector GaussianBlock::solve_lower(Vector y) const {
    for (Index i = 0; i < n_; ++i) {
        double acc = y(i);
        for (Index k = std::max<Index>(0, i - p_); k < i; ++k) acc -= factor_(i, k - i + p_) * y(k);
        y(i) = acc / factor_(i, p_);
    }
    return y;
}

Vector GaussianBlock::solve_lower_adjoint(Vector y) const {
    for (Index i = n_ - 1; i >= 0; --i) {
        double acc = y(i);
        for (Index k = i + 1; k <= std::min<Index>(n_ - 1, i + p_); ++k) acc -= factor_(k, i - k + p_) * y(k);
        y(i) = acc / factor_(i, p_);
    }
    return y;
}

Vector GaussianBlock::draw(const Vector& z) const {
    if (z.size() != n_) throw InvalidInput("GaussianBlock::draw: normal vector has wrong length");
    return mean_ + reversed(solve_lower_adjoint(reversed(z)));
}

Matrix GaussianBlock::covariance_factor() const {
    Matrix f(n_, n_);
    for (Index c = 0; c < n_; ++c) f.col(c) = reversed(solve_lower_adjoint(reversed(Vector::Unit(n_, c))));
    return f;
}

Matrix GaussianBlock::covariance() const {
    const Matrix f = covariance_factor();
    return f * f.transpose();
}

Matrix GaussianBlock::precision() const {
    Matrix lo = Matrix::Zero(n_, n_);
    for (Index i = 0; i < n_; ++i) {
        for (Index k = std::max<Index>(0, i - p_); k <= i; ++k) lo(i, k) = factor_(i, k - i + p_);
    }
    const Matrix flipped = lo * lo.transpose();
    return flipped.reverse();
}

double GaussianBlock::log_density(const Vector& x) const {
    const Vector y = reversed(x - mean_);
    double quad = 0.0;
    double log_det = 0.0;
    for (Index i = 0; i < n_; ++i) {
        double v = 0.0;
        for (Index k = i; k <= std::min<Index>(n_ - 1, i + p_); ++k) v += factor_(k, i - k + p_) * y(k);
        quad += v * v;
        log_det += std::log(factor_(i, p_));
    }
    return -0.5 * static_cast<double>(n_) * std::log(2.0 * M_PI) + log_det - 0.5 * quad;
}

// ---------------------------------------------------------------------------
// Conditionals

namespace {

/// Cached per-iteration quantities of one latent group.
struct GroupData {
    Group group;
    const std::vector<LatentBlock>* blocks = nullptr;
    Matrix prior_precision;
    Matrix gram;  // T^T T over the whole group
};

class Engine {
public:
    Engine(const StackedModel& stacked, const HyperState& eta) : sm_(stacked), eta_(eta) {
        const LatentLayout& lay = sm_.layout;
        target_j_ = sm_.target_residual_base();
        if (lay.has_missing()) own_m_ = sm_.w_m - sm_.u_m;
        if (lay.has_additional()) own_a_ = sm_.w_a - sm_.u_a;
        for (Group g : {Group::s, Group::b, Group::f}) {
            GroupData& gd = data(g);
            gd.group = g;
            gd.blocks = &lay.group(g);
            const auto& hypers = eta_.group(g);
            if (hypers.size() != gd.blocks->size()) {
                throw InvalidInput("hyperparameter count does not match the latent layout");
            }
            const Index size = lay.size(g);
            gd.prior_precision = Matrix::Zero(size, size);
            for (std::size_t q = 0; q < gd.blocks->size(); ++q) {
                const auto& blk = (*gd.blocks)[q];
                gd.prior_precision.block(blk.offset, blk.offset, lay.l, lay.l) = factorize(hypers[q], lay.l).inverse();
            }
            gd.gram = Matrix::Zero(size, size);
            for (std::size_t q = 0; q < gd.blocks->size(); ++q) update_gram_row(gd, q);
        }
    }

    const StackedModel& stacked() const { return sm_; }

    void set_missing(const Vector& w_m) {
        swap_missing_signal_inplace(sm_, w_m);
        own_m_ = sm_.w_m - sm_.u_m;
        for (Group g : {Group::s, Group::b, Group::f}) {
            GroupData& gd = data(g);
            for (std::size_t q = 0; q < gd.blocks->size(); ++q) {
                if ((*gd.blocks)[q].from_missing) update_gram_row(gd, q);
            }
        }
    }

    /// T x for a group, optionally leaving out blocks sourced from the missing signal.
    Vector apply(Group g, const Vector& x, bool skip_missing = false) const {
        const auto& blocks = sm_.layout.group(g);
        const auto& bases = sm_.bases(g);
        Vector out = Vector::Zero(sm_.n);
        for (std::size_t q = 0; q < blocks.size(); ++q) {
            if (skip_missing && blocks[q].from_missing) continue;
            out += toeplitz_apply(bases[q], x.segment(blocks[q].offset, sm_.layout.l));
        }
        return out;
    }

    GaussianBlock group_conditional(Group g, const GibbsState& st, int* jitter_events) const {
        const GroupData& gd = data(g);
        Vector target;
        double var = 0.0;
        const double sa = eta_.sigma_a2, sm = eta_.sigma_m2, sam = eta_.sigma_am;
        switch (g) {
        case Group::s:
            target = target_j_;
            var = eta_.sigma_j2;
            break;
        case Group::b:
            if (sm_.layout.has_additional()) {
                const Vector e_a = own_a_ - apply(Group::f, st.f);
                target = own_m_ - (sam / sa) * e_a;
                var = sm - sam * sam / sa;
            } else {
                target = own_m_;
                var = sm;
            }
            break;
        case Group::f: {
            const Vector e_m = own_m_ - apply(Group::b, st.b);
            target = own_a_ - (sam / sm) * e_m;
            var = sa - sam * sam / sm;
            break;
        }
        }
        if (!(var > 0.0)) throw NumericalError("non-positive conditional noise variance for latent group");
        const Index l = sm_.layout.l;
        Vector h(gd.gram.rows());
        const auto& bases = sm_.bases(g);
        for (std::size_t q = 0; q < gd.blocks->size(); ++q) {
            h.segment((*gd.blocks)[q].offset, l) = toeplitz_transpose_apply(bases[q], target, l) / var;
        }
        const Matrix precision = gd.prior_precision + gd.gram / var;
        return GaussianBlock::from_precision(precision, h, group_name(g), jitter_events);
    }

    GaussianBlock missing_conditional(const GibbsState& st, int* jitter_events) const {
        const LatentLayout& lay = sm_.layout;
        if (!lay.has_missing()) throw InvalidInput("model has no missing node");
        const Index n = sm_.n;
        const Index l = lay.l;
        const bool with_a = lay.has_additional();
        const Index comps = with_a ? 3 : 2;
        const Index row_j = 0, row_a = 1, row_m = comps - 1;

        // Residual r(t) = y(t) + sum_e C(:, e) w_m(t - e).
        Matrix c = Matrix::Zero(comps, l + 1);
        Matrix y(comps, n);
        y.row(row_j) = (target_j_ - apply(Group::s, st.s, true)).transpose();
        for (const auto& blk : lay.s) {
            if (blk.from_missing) c.row(row_j).tail(l) = -st.s.segment(blk.offset, l).transpose();
        }
        if (with_a) {
            y.row(row_a) = (own_a_ - apply(Group::f, st.f, true)).transpose();
            for (const auto& blk : lay.f) {
                if (blk.from_missing) c.row(row_a).tail(l) = -st.f.segment(blk.offset, l).transpose();
            }
        }
        const Vector b_self = st.b.head(l);
        c(row_m, 0) = 1.0;
        c.row(row_m).tail(l) = -b_self.transpose();
        y.row(row_m) = (-sm_.u_m + toeplitz_apply(delayed(sm_.u_m, 1), b_self) - apply(Group::b, st.b, true)).transpose();

        const Matrix sigma = sigma_bar(eta_, lay);
        const Matrix weight = sigma.inverse();
        const Matrix k = c.transpose() * weight * c;

        // prefix(d, e) = sum_{e' <= e} k(e' + d, e')
        Matrix prefix = Matrix::Zero(l + 1, l + 1);
        for (Index d = 0; d <= l; ++d) {
            double acc = 0.0;
            for (Index e = 0; e + d <= l; ++e) {
                acc += k(e + d, e);
                prefix(d, e) = acc;
            }
        }
        Matrix band = Matrix::Zero(n, l + 1);
        for (Index t = 0; t < n; ++t) {
            for (Index d = 0; d <= l && t + d < n; ++d) {
                const Index last = std::min<Index>(l - d, n - 1 - t - d);
                band(t, d) = prefix(d, last);
            }
        }
        const Matrix z = weight * y;
        Vector h(n);
        for (Index t = 0; t < n; ++t) {
            double acc = 0.0;
            for (Index e = 0; e <= l && t + e < n; ++e) acc += c.col(e).dot(z.col(t + e));
            h(t) = -acc;
        }
        return GaussianBlock::from_precision_band(band, h, "w_m", jitter_events);
    }

    const Vector& target_j() const { return target_j_; }
    const Vector& own_m() const { return own_m_; }
    const Vector& own_a() const { return own_a_; }

private:
    static const char* group_name(Group g) { return g == Group::s ? "s" : g == Group::b ? "b" : "f"; }

    GroupData& data(Group g) { return g == Group::s ? s_ : g == Group::b ? b_ : f_; }
    const GroupData& data(Group g) const { return g == Group::s ? s_ : g == Group::b ? b_ : f_; }

    void update_gram_row(GroupData& gd, std::size_t q) {
        const Index l = sm_.layout.l;
        const auto& bases = sm_.bases(gd.group);
        const Index oq = (*gd.blocks)[q].offset;
        for (std::size_t r = 0; r < gd.blocks->size(); ++r) {
            const Index orr = (*gd.blocks)[r].offset;
            const Matrix cross = toeplitz_cross_gram(bases[q], bases[r], l, l);
            gd.gram.block(oq, orr, l, l) = cross;
            gd.gram.block(orr, oq, l, l) = cross.transpose();
        }
    }

    StackedModel sm_;
    HyperState eta_;
    Vector target_j_, own_m_, own_a_;
    GroupData s_, b_, f_;
};

} // namespace

GibbsState initial_state(const StackedModel& stacked) {
    GibbsState st;
    st.w_m = Vector::Zero(stacked.layout.has_missing() ? stacked.n : 0);
    st.s = Vector::Zero(stacked.layout.size(Group::s));
    st.b = Vector::Zero(stacked.layout.size(Group::b));
    st.f = Vector::Zero(stacked.layout.size(Group::f));
    return st;
}

GaussianBlock conditional(BlockId block, const StackedModel& stacked, const GibbsState& state, const HyperState& eta) {
    if (stacked.layout.has_missing() && state.w_m.size() == stacked.n && stacked.w_m != state.w_m) {
        throw InvalidInput("conditional: stacked model does not carry the state's missing signal");
    }
    Engine engine(stacked, eta);
    switch (block) {
    case BlockId::w_m: return engine.missing_conditional(state, nullptr);
    case BlockId::s: return engine.group_conditional(Group::s, state, nullptr);
    case BlockId::b:
        if (!stacked.layout.has_missing()) throw InvalidInput("conditional: model has no b block");
        return engine.group_conditional(Group::b, state, nullptr);
    case BlockId::f:
        if (!stacked.layout.has_additional()) throw InvalidInput("conditional: model has no f block");
        return engine.group_conditional(Group::f, state, nullptr);
    }
    throw InvalidInput("conditional: unknown block");
}

std::uint64_t block_stream_seed(std::uint64_t seed, BlockId block) {
    return derive_seed(seed, {static_cast<std::uint64_t>(block) + 101});
}

namespace {

struct Welford {
    Index count = 0;
    Vector mean;
    Matrix m2;

    explicit Welford(Index dim) : mean(Vector::Zero(dim)), m2(Matrix::Zero(dim, dim)) {}

    void push(const Vector& x) {
        ++count;
        const Vector delta = x - mean;
        mean += delta / static_cast<double>(count);
        m2.noalias() += (static_cast<double>(count - 1) / static_cast<double>(count)) * delta * delta.transpose();
    }

    GroupMoments moments() const {
        GroupMoments g;
        g.mean = mean;
        g.scatter = count > 0 ? Matrix(m2 / static_cast<double>(count)) : m2;
        return g;
    }
};

} // namespace

SampleSet gibbs_run(const StackedModel& stacked, const HyperState& eta, const GibbsConfig& config,
                    const std::optional<Vector>& clamp_missing, const std::optional<GibbsState>& start) {
    if (config.samples < 1 || config.burn_in < 0 || config.thinning < 1) {
        throw InvalidInput("Gibbs configuration requires M >= 1, B >= 0, kappa >= 1");
    }
    const LatentLayout& lay = stacked.layout;
    const Index n = stacked.n;
    const Index l = lay.l;
    const bool has_m = lay.has_missing();
    const bool has_a = lay.has_additional();
    const bool sample_m = has_m && !clamp_missing;
    if (clamp_missing && !has_m) throw InvalidInput("gibbs_run: clamped signal given but model has no missing node");
    if (clamp_missing && clamp_missing->size() != n) throw InvalidInput("gibbs_run: clamped signal has wrong length");

    GibbsState st = initial_state(stacked);
    if (start) {
        const GibbsState& s0 = *start;
        if (s0.s.size() != st.s.size() || s0.b.size() != st.b.size() || s0.f.size() != st.f.size() ||
            s0.w_m.size() != st.w_m.size()) {
            throw InvalidInput("gibbs_run: starting state does not match the layout");
        }
        st = s0;
    }
    if (clamp_missing) st.w_m = *clamp_missing;
    StackedModel current = stacked;
    if (has_m) swap_missing_signal_inplace(current, st.w_m);
    Engine engine(current, eta);

    Rng rng_m(block_stream_seed(config.seed, BlockId::w_m));
    Rng rng_s(block_stream_seed(config.seed, BlockId::s));
    Rng rng_b(block_stream_seed(config.seed, BlockId::b));
    Rng rng_f(block_stream_seed(config.seed, BlockId::f));

    SampleSet out;
    Welford ws(st.s.size()), wb(st.b.size()), wf(st.f.size());
    Vector wm_sum = Vector::Zero(has_m ? n : 0);
    out.a_hat = Matrix::Zero(n, n);
    out.b_hat = Vector::Zero(n);
    out.residual_mean = Matrix::Zero(n, 2);
    out.residual_scatter = Matrix::Zero(n, 3);

    const Index burn_in = has_m ? config.burn_in : 0;
    const Index total = burn_in + config.samples * config.thinning;
    const Vector own_j = stacked.w_j - stacked.u_j;
    const Vector own_j_delayed = delayed(own_j, 1);

    for (Index sweep = 0; sweep < total; ++sweep) {
        try {
            if (sample_m) {
                const GaussianBlock blk = engine.missing_conditional(st, &out.jitter_events);
                st.w_m = blk.draw(standard_normal(rng_m, n));
                engine.set_missing(st.w_m);
            }
            if (!config.freeze_s) {
                st.s = engine.group_conditional(Group::s, st, &out.jitter_events).draw(standard_normal(rng_s, st.s.size()));
            }
            if (has_m && !config.freeze_b) {
                st.b = engine.group_conditional(Group::b, st, &out.jitter_events).draw(standard_normal(rng_b, st.b.size()));
            }
            if (has_a && !config.freeze_f) {
                st.f = engine.group_conditional(Group::f, st, &out.jitter_events).draw(standard_normal(rng_f, st.f.size()));
            }
        } catch (const NumericalError& ex) {
            throw NumericalError(std::string(ex.what()) + " at Gibbs sweep " + std::to_string(sweep));
        }

        if (sweep < burn_in || (sweep - burn_in + 1) % config.thinning != 0) continue;

        ++out.retained;
        ws.push(st.s);
        if (has_m) {
            wb.push(st.b);
            wm_sum += st.w_m;
        }
        if (has_a) wf.push(st.f);

        // Target-parameter statistics.
        const Vector s_self = st.s.head(l);
        const Vector a = stacked.input_delayed + toeplitz_apply(stacked.input_correction, s_self);
        const Vector z = own_j - toeplitz_apply(own_j_delayed, s_self) - engine.apply(Group::s, st.s) +
                         toeplitz_apply(engine.stacked().s_base[0], s_self);
        out.a_hat += toeplitz_cross_gram(a, a, n, n);
        out.b_hat += toeplitz_transpose_apply(a, z, n);
        out.c_hat += z.squaredNorm();

        // (xi_a, xi_m) residual statistics, per time step.
        if (has_m) {
            const Vector e_m = engine.own_m() - engine.apply(Group::b, st.b);
            const Vector e_a = has_a ? Vector(engine.own_a() - engine.apply(Group::f, st.f)) : Vector::Zero(n);
            const double k = static_cast<double>(out.retained);
            for (Index t = 0; t < n; ++t) {
                const double da = e_a(t) - out.residual_mean(t, 0);
                const double dm = e_m(t) - out.residual_mean(t, 1);
                out.residual_mean(t, 0) += da / k;
                out.residual_mean(t, 1) += dm / k;
                const double w = (k - 1.0) / k;
                out.residual_scatter(t, 0) += w * da * da;
                out.residual_scatter(t, 1) += w * da * dm;
                out.residual_scatter(t, 2) += w * dm * dm;
            }
        }
        if (config.keep_draws) out.draws.push_back(st);
    }

    const double m = static_cast<double>(out.retained);
    out.s = ws.moments();
    out.b = wb.moments();
    out.f = wf.moments();
    out.w_m_mean = has_m ? Vector(wm_sum / m) : Vector();
    out.a_hat /= m;
    out.b_hat /= m;
    out.c_hat /= m;
    out.residual_scatter /= m;
    return out;
}

} // namespace netid
