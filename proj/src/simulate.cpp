#include "netid/simulate.hpp"

#include "netid/io.hpp"

#include <Eigen/Eigenvalues>

#include <fstream>

namespace netid {

Matrix process_excitations(const NetworkSpec& spec, const Matrix& r) {
    if (r.rows() != spec.external_count) {
        throw InvalidInput("excitation matrix has " + std::to_string(r.rows()) + " rows, network declares " +
                           std::to_string(spec.external_count) + " signals");
    }
    Matrix u = Matrix::Zero(spec.node_count, r.cols());
    for (const auto& ex : spec.excitations) {
        const Vector signal = r.row(ex.signal - 1).transpose();
        u.row(ex.node - 1) += filter(ex.tf, signal).transpose();
    }
    return u;
}

Matrix white_excitation(int signals, Index n, std::uint64_t seed) {
    Matrix r(signals, n);
    for (int k = 0; k < signals; ++k) {
        Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(k + 1)}));
        r.row(k) = standard_normal(rng, n).transpose();
    }
    return r;
}

SignalBundle simulate_network(const NetworkSpec& spec, const Matrix& r, std::uint64_t seed, Index n,
                              SimulationOptions options) {
    if (n < 1) throw InvalidInput("simulate_network: N must be >= 1");
    if (r.cols() != n) throw InvalidInput("simulate_network: excitation length differs from N");
    std::string why;
    if (!check_wellposed_stable(spec, &why)) throw InvalidInput("simulate_network: network is unstable (" + why + ")");

    const Index total = n + options.warmup;
    const int nodes = spec.node_count;

    Matrix r_full = Matrix::Zero(r.rows(), total);
    r_full.rightCols(n) = r;
    if (options.warmup > 0) {
        r_full.leftCols(options.warmup) = white_excitation(static_cast<int>(r.rows()), options.warmup, seed ^ 0x5eedULL);
    }
    const Matrix u = process_excitations(spec, r_full);

    Matrix e = Matrix::Zero(nodes, total);
    Matrix v = Matrix::Zero(nodes, total);
    for (const auto& [k, nm] : spec.noise) {
        if (nm.variance <= 0.0) continue;
        Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(k)}));
        e.row(k - 1) = std::sqrt(nm.variance) * standard_normal(rng, total).transpose();
        const Vector ek = e.row(k - 1).transpose();
        v.row(k - 1) = filter(nm.tf, ek).transpose();
    }

    // Module outputs y_jl(t) = G_jl w_l(t); strict properness makes each
    // depend only on w_l(t - 1), w_l(t - 2), ...
    struct Channel {
        NodeId to, from;
        const TransferFunction* tf;
        Vector y;
    };
    std::vector<Channel> channels;
    for (const auto& [key, tf] : spec.modules) channels.push_back({key.to, key.from, &tf, Vector::Zero(total)});

    Matrix w = Matrix::Zero(nodes, total);
    for (Index t = 0; t < total; ++t) {
        w.col(t) = u.col(t) + v.col(t);
        for (auto& ch : channels) {
            const auto& num = ch.tf->num;
            const auto& den = ch.tf->den;
            double acc = 0.0;
            for (Index k = 1; k < num.size() && k <= t; ++k) acc += num(k) * w(ch.from - 1, t - k);
            for (Index k = 1; k < den.size() && k <= t; ++k) acc -= den(k) * ch.y(t - k);
            ch.y(t) = acc;
            w(ch.to - 1, t) += acc;
        }
    }

    SignalBundle out;
    out.w = w.rightCols(n);
    out.u = u.rightCols(n);
    out.r = r;
    out.e = e.rightCols(n);
    out.seed = seed;
    return out;
}

std::vector<std::complex<double>> closed_loop_poles(const NetworkSpec& spec) {
    // Observable canonical realization per module: x(t+1) = A x(t) + B w_from(t), y = C x(t).
    struct Block {
        Index offset, order;
        NodeId to, from;
        Vector a, b;
    };
    std::vector<Block> blocks;
    Index states = 0;
    for (const auto& [key, tf] : spec.modules) {
        const Index order = std::max(tf.num.size(), tf.den.size()) - 1;
        if (order <= 0) continue;
        Vector a = Vector::Zero(order + 1), b = Vector::Zero(order + 1);
        a.head(tf.den.size()) = tf.den / tf.den(0);
        b.head(tf.num.size()) = tf.num / tf.den(0);
        blocks.push_back({states, order, key.to, key.from, a, b});
        states += order;
    }
    if (states == 0) return {};

    Matrix a_ol = Matrix::Zero(states, states);
    Matrix b_ol = Matrix::Zero(states, spec.node_count);   // input: node signals
    Matrix c_ol = Matrix::Zero(spec.node_count, states);   // node signal contribution
    for (const auto& blk : blocks) {
        // y(t) = x_1(t); x_k(t+1) = x_{k+1}(t) - a_k y(t) + b_k w(t)
        for (Index k = 0; k < blk.order; ++k) {
            a_ol(blk.offset + k, blk.offset) = -blk.a(k + 1);
            if (k + 1 < blk.order) a_ol(blk.offset + k, blk.offset + k + 1) = 1.0;
            b_ol(blk.offset + k, blk.from - 1) = blk.b(k + 1);
        }
        c_ol(blk.to - 1, blk.offset) += 1.0;
    }
    const Matrix a_cl = a_ol + b_ol * c_ol;
    Eigen::EigenSolver<Matrix> solver(a_cl, false);
    if (solver.info() != Eigen::Success) throw NumericalError("closed-loop eigenvalue computation failed");
    std::vector<std::complex<double>> out;
    for (Index k = 0; k < states; ++k) out.push_back(solver.eigenvalues()(k));
    return out;
}

bool check_wellposed_stable(const NetworkSpec& spec, std::string* diagnostic) {
    try {
        double worst = 0.0;
        for (const auto& p : closed_loop_poles(spec)) worst = std::max(worst, std::abs(p));
        if (!(worst < 1.0)) {
            if (diagnostic) *diagnostic = "closed-loop pole magnitude " + std::to_string(worst);
            return false;
        }
        return true;
    } catch (const std::exception& ex) {
        if (diagnostic) *diagnostic = ex.what();
        return false;
    }
}

void write_signals_csv(const std::string& path, const SignalBundle& signals) {
    CsvWriter csv(path);
    std::vector<std::string> header{"t"};
    for (Index k = 0; k < signals.w.rows(); ++k) header.push_back("w_" + std::to_string(k + 1));
    for (Index k = 0; k < signals.r.rows(); ++k) header.push_back("r_" + std::to_string(k + 1));
    csv.header(header);
    for (Index t = 0; t < signals.samples(); ++t) {
        csv.cell(t + 1);
        for (Index k = 0; k < signals.w.rows(); ++k) csv.cell(signals.w(k, t));
        for (Index k = 0; k < signals.r.rows(); ++k) csv.cell(signals.r(k, t));
        csv.end_row();
    }
}

SignalBundle read_signals_csv(const std::string& path, const NetworkSpec& spec) {
    const CsvTable table = read_csv(path);
    const int nodes = spec.node_count;
    const int ext = spec.external_count;
    if (table.header.size() != static_cast<std::size_t>(1 + nodes + ext)) {
        throw InvalidInput(path + ": expected columns t, w_1..w_" + std::to_string(nodes) + ", r_1..r_" +
                           std::to_string(ext));
    }
    for (int k = 0; k < nodes; ++k) {
        if (table.header[1 + k] != "w_" + std::to_string(k + 1)) throw InvalidInput(path + ": unexpected column " + table.header[1 + k]);
    }
    for (int k = 0; k < ext; ++k) {
        if (table.header[1 + nodes + k] != "r_" + std::to_string(k + 1)) {
            throw InvalidInput(path + ": unexpected column " + table.header[1 + nodes + k]);
        }
    }
    const Index n = static_cast<Index>(table.rows.size());
    if (n < 1) throw InvalidInput(path + ": no samples");
    SignalBundle out;
    out.w.resize(nodes, n);
    out.r.resize(ext, n);
    for (Index t = 0; t < n; ++t) {
        for (int k = 0; k < nodes; ++k) out.w(k, t) = table.rows[t][1 + k];
        for (int k = 0; k < ext; ++k) out.r(k, t) = table.rows[t][1 + nodes + k];
    }
    out.u = process_excitations(spec, out.r);
    out.e = Matrix::Zero(nodes, n);
    return out;
}

} // namespace netid
