#pragma once

#include <cmath>
#include <vector>

#include "igc/igc_block.hpp"
#include "igc/kernels.hpp"

// Materialized sparse-factor view of the block: W^p and W^d as explicit
// block-diagonal matrices, P as an explicit permutation, and the composite
// W = P W^d P^T W^p. Double precision only; this module exists to be checked
// against the gather-based compute path, not to be fast.

namespace igc {

struct SparseFactorSet {
    Matrix<double> wp; // (L*M) x (L*M_in*S), block-diagonal, L blocks of M x (M_in*S)
    Matrix<double> wd; // (M*L) x (M*L), block-diagonal, M blocks of L x L
    Matrix<double> p;  // (L*M) x (L*M) permutation
    int l = 0, m = 0, m_in = 0, k = 0;
};

inline size_t l0_norm(const Matrix<double>& m) {
    size_t nz = 0;
    for (double v : m.vec())
        if (v != 0.0) ++nz;
    return nz;
}

inline Matrix<double> transpose(const Matrix<double>& a) {
    Matrix<double> t(a.cols(), a.rows());
    for (int r = 0; r < a.rows(); ++r)
        for (int c = 0; c < a.cols(); ++c) t(c, r) = a(r, c);
    return t;
}

// P[l*M+m][m*L+l] = 1, so that P^T maps primary order to secondary order.
inline Matrix<double> permutation_matrix(int l, int m) {
    const PermutationSpec spec = permutation_indices(l, m);
    Matrix<double> p(l * m, l * m);
    for (int q = 0; q < l * m; ++q) p(spec.forward_index[q], q) = 1.0;
    return p;
}

inline SparseFactorSet assemble_factors(const IgcConfig& cfg, const IgcBlockParams<double>& params) {
    check_igc_params(cfg, params);
    const int s = cfg.s();
    const int m_in = cfg.input_m();
    SparseFactorSet f;
    f.l = cfg.l;
    f.m = cfg.m;
    f.m_in = m_in;
    f.k = cfg.k;
    f.wp = Matrix<double>(cfg.l * cfg.m, cfg.l * m_in * s);
    for (int l = 0; l < cfg.l; ++l)
        for (int mo = 0; mo < cfg.m; ++mo)
            for (int mi = 0; mi < m_in; ++mi)
                for (int dy = 0; dy < cfg.k; ++dy)
                    for (int dx = 0; dx < cfg.k; ++dx)
                        f.wp(l * cfg.m + mo, (l * m_in + mi) * s + dy * cfg.k + dx) =
                            params.primary[l].at(mo, mi, dy, dx);
    f.wd = Matrix<double>(cfg.m * cfg.l, cfg.m * cfg.l);
    for (int m = 0; m < cfg.m; ++m)
        for (int r = 0; r < cfg.l; ++r)
            for (int c = 0; c < cfg.l; ++c) f.wd(m * cfg.l + r, m * cfg.l + c) = params.secondary[m](r, c);
    f.p = permutation_matrix(cfg.l, cfg.m);
    return f;
}

// W = P W^d P^T W^p, a dense (L*M) x (L*M_in*S) matrix.
inline Matrix<double> compose_kernel(const SparseFactorSet& f) {
    return matmul(f.p, matmul(f.wd, matmul(transpose(f.p), f.wp)));
}

// Reshape a composed (C_out) x (C_in*S) matrix into a conv kernel
// (C_out, C_in, k, k); row ordering matches im2col's (c, dy, dx).
inline Tensor<double> kernel_matrix_to_conv(const Matrix<double>& w, int k) {
    const int s = k * k;
    if (w.cols() % s != 0) throw ShapeError("kernel matrix " + w.shape_str() + " vs S=" + std::to_string(s));
    const int c_in = w.cols() / s;
    Tensor<double> kern(w.rows(), c_in, k, k);
    for (int co = 0; co < w.rows(); ++co)
        for (int ci = 0; ci < c_in; ++ci)
            for (int dy = 0; dy < k; ++dy)
                for (int dx = 0; dx < k; ++dx)
                    kern.at(co, ci, dy, dx) = w(co, ci * s + dy * k + dx);
    return kern;
}

inline Matrix<double> conv_kernel_to_matrix(const Tensor<double>& kern) {
    const int s = kern.h() * kern.w();
    Matrix<double> w(kern.n(), kern.c() * s);
    for (int co = 0; co < kern.n(); ++co)
        for (int ci = 0; ci < kern.c(); ++ci)
            for (int dy = 0; dy < kern.h(); ++dy)
                for (int dx = 0; dx < kern.w(); ++dx)
                    w(co, ci * s + dy * kern.h() + dx) = kern.at(co, ci, dy, dx);
    return w;
}

// A special-case construction: ordinary block parameters plus how many
// channel-wise copies of the original input the block expects.
struct IgcConstruction {
    IgcConfig config;
    IgcBlockParams<double> params;
    int input_replication = 1;
};

namespace detail {

inline int exact_isqrt(int v, const char* what) {
    const int r = static_cast<int>(std::lround(std::sqrt(static_cast<double>(v))));
    if (r * r != v) throw ConfigError(std::string(what) + " " + std::to_string(v) + " is not a perfect square");
    return r;
}

inline int kernel_side_of(const Matrix<double>& w) {
    if (w.rows() <= 0 || w.cols() % w.rows() != 0)
        throw ConfigError("kernel matrix " + w.shape_str() + " is not (C) x (C*S)");
    return exact_isqrt(w.cols() / w.rows(), "kernel taps S");
}

} // namespace detail

// Regular convolution with kernel W over C channels as an IGC block with
// L = r^2 partitions acting on the input replicated r times. The paper spells
// out L = 4; other perfect-square L follow the same block grid (inferred).
inline IgcConstruction regular_conv_as_igc(const Matrix<double>& w, int l) {
    const int r = detail::exact_isqrt(l, "partition count L");
    const int c = w.rows();
    const int k = detail::kernel_side_of(w);
    const int s = k * k;
    if (c % r != 0)
        throw ConfigError("kernel with " + std::to_string(c) + " channels not partitionable into a " +
                          std::to_string(r) + "x" + std::to_string(r) + " block grid");
    const int m = c / r;
    IgcConstruction out;
    out.config = IgcConfig{l, m, k, 1, false, 0};
    out.input_replication = r;
    for (int a = 0; a < r; ++a)
        for (int b = 0; b < r; ++b) {
            Tensor<double> kern(m, m, k, k);
            for (int mo = 0; mo < m; ++mo)
                for (int mi = 0; mi < m; ++mi)
                    for (int dy = 0; dy < k; ++dy)
                        for (int dx = 0; dx < k; ++dx)
                            kern.at(mo, mi, dy, dx) = w(a * m + mo, (b * m + mi) * s + dy * k + dx);
            out.params.primary.push_back(std::move(kern));
        }
    // every W^d block is the same: row (c_,d) sums primary partitions (d, *)
    Matrix<double> wd_block(l, l);
    for (int c_ = 0; c_ < r; ++c_)
        for (int d = 0; d < r; ++d)
            for (int b = 0; b < r; ++b) wd_block(c_ * r + d, d * r + b) = 1.0;
    out.params.secondary.assign(m, wd_block);
    return out;
}

// L parallel convolutions over the same input summed: all-ones secondary
// kernels, input replicated across the L partitions.
inline IgcConstruction summation_fusion_as_igc(const std::vector<Tensor<double>>& branch_kernels) {
    if (branch_kernels.empty()) throw ConfigError("summation fusion needs at least one branch");
    const int m = branch_kernels.front().n();
    const int k = branch_kernels.front().h();
    for (const auto& b : branch_kernels)
        if (b.n() != m || b.c() != m || b.h() != k || b.w() != k)
            throw ConfigError("branch kernel " + b.shape_str() + " does not match (" +
                              std::to_string(m) + "," + std::to_string(m) + "," + std::to_string(k) +
                              "," + std::to_string(k) + ")");
    const int l = static_cast<int>(branch_kernels.size());
    IgcConstruction out;
    out.config = IgcConfig{l, m, k, 1, false, 0};
    out.input_replication = l;
    out.params.primary = branch_kernels;
    Matrix<double> ones(l, l);
    for (auto& v : ones.vec()) v = 1.0;
    out.params.secondary.assign(m, ones);
    return out;
}

// Appendix extreme: the primary group convolution is channel-wise. C^2
// partitions of one channel over the input replicated C times; W^d rows are
// C-length all-ones segments.
inline IgcConstruction channelwise_extreme_as_igc(const Matrix<double>& w) {
    const int c = w.rows();
    const int k = detail::kernel_side_of(w);
    const int s = k * k;
    IgcConstruction out;
    out.config = IgcConfig{c * c, 1, k, 1, false, 0};
    out.input_replication = c;
    for (int i = 0; i < c; ++i)
        for (int j = 0; j < c; ++j) {
            Tensor<double> kern(1, 1, k, k);
            for (int dy = 0; dy < k; ++dy)
                for (int dx = 0; dx < k; ++dx) kern.at(0, 0, dy, dx) = w(i, j * s + dy * k + dx);
            out.params.primary.push_back(std::move(kern));
        }
    Matrix<double> wd(c * c, c * c);
    for (int row = 0; row < c * c; ++row) {
        const int i = row % c;
        for (int b = 0; b < c; ++b) wd(row, i * c + b) = 1.0;
    }
    out.params.secondary.assign(1, wd);
    return out;
}

// Worst absolute discrepancy between the gather path and the composed dense
// kernel over `trials` random inputs.
inline double verify_equivalence(const IgcConfig& cfg, IgcBlockParams<double>& params, int trials,
                                 uint64_t seed) {
    if (trials < 1) throw InputError("trials must be >= 1");
    const Tensor<double> dense =
        kernel_matrix_to_conv(compose_kernel(assemble_factors(cfg, params)), cfg.k);
    const int hw = std::max(cfg.k + 2, 4);
    CounterRng rng(seed, 0x76657269); // "veri"
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) {
        Tensor<double> x(1, cfg.input_width(), hw, hw);
        for (auto& v : x.vec()) v = rng.next_gaussian();
        const Tensor<double> via_path = igc_block_forward(x, cfg, params, BnMode::eval);
        const Tensor<double> via_dense = conv2d_forward(x, dense, cfg.stride, same_pad(cfg.k));
        for (size_t i = 0; i < via_path.size(); ++i)
            worst = std::max(worst, std::abs(via_path.vec()[i] - via_dense.vec()[i]));
    }
    return worst;
}

} // namespace igc
