#pragma once

#include "netid/core.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace netid {

struct ScalarMinimum {
    double x = 0.0;
    double value = 0.0;
};

/// Global grid search on [lo, hi] followed by golden-section refinement of
/// the best grid bracket.
template <class F>
ScalarMinimum minimize_scalar(F&& f, double lo, double hi, int grid = 64, double tol = 1e-10) {
    std::vector<double> xs(grid), fs(grid);
    int best = 0;
    for (int k = 0; k < grid; ++k) {
        xs[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(grid - 1);
        fs[k] = f(xs[k]);
        if (fs[k] < fs[best] || !std::isfinite(fs[best])) best = k;
    }
    double a = xs[std::max(best - 1, 0)];
    double b = xs[std::min(best + 1, grid - 1)];
    const double ratio = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - ratio * (b - a);
    double d = a + ratio * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    ScalarMinimum out{xs[best], fs[best]};
    for (auto [x, v] : {std::pair{c, fc}, std::pair{d, fd}}) {
        if (v < out.value) out = {x, v};
    }
    return out;
}

/// Second-order model of an objective at a point.
struct LocalModel {
    double value = 0.0;
    Vector gradient;
    Matrix hessian;  // positive semidefinite approximation
};

struct LmOptions {
    int max_iters = 200;
    double tol = 1e-12;  // relative objective decrease that stops the search
    double damping = 1e-3;
};

struct LmResult {
    Vector x;
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> trace;  // accepted objective values, nonincreasing
};

/// Levenberg-Marquardt descent. `model(x)` returns the local model and
/// `value(x)` the objective alone; steps leaving the admissible set or not
/// decreasing the objective are rejected.
template <class Model, class Value, class Admissible>
LmResult levenberg_marquardt(Model&& model, Value&& value, Admissible&& admissible, const Vector& x0,
                             const LmOptions& opt = {}) {
    LmResult out;
    out.x = x0;
    LocalModel m = model(out.x);
    out.value = m.value;
    out.trace.push_back(out.value);
    double mu = opt.damping;
    for (int it = 0; it < opt.max_iters; ++it) {
        out.iterations = it + 1;
        bool accepted = false;
        while (mu < 1e12) {
            Matrix a = m.hessian;
            for (Index k = 0; k < a.rows(); ++k) a(k, k) += mu * std::max(m.hessian(k, k), 1e-12);
            const Vector step = a.ldlt().solve(-m.gradient);
            const Vector cand = out.x + step;
            if (step.allFinite() && admissible(cand)) {
                const double v = value(cand);
                if (std::isfinite(v) && v <= out.value) {
                    const double decrease = out.value - v;
                    out.x = cand;
                    out.value = v;
                    out.trace.push_back(v);
                    mu = std::max(mu / 3.0, 1e-12);
                    accepted = true;
                    if (decrease <= opt.tol * std::max(1.0, std::abs(v)) || step.norm() <= 1e-14 * (1.0 + out.x.norm())) {
                        out.converged = true;
                        return out;
                    }
                    break;
                }
            }
            mu *= 4.0;
        }
        if (!accepted) {
            out.converged = true;
            return out;
        }
        m = model(out.x);
    }
    return out;
}

} // namespace netid
