#pragma once

#include <optional>
#include <string>
#include <vector>

#include "igc/kernels.hpp"
#include "igc/rng.hpp"
#include "igc/tensor.hpp"

// The interleaved group convolution block: primary spatial group convolution
// over L partitions of M channels, channel interleave, secondary point-wise
// group convolution over M partitions of L channels, interleave back.
// Interleaving is an index gather; the matrix form lives in kernel_algebra.

namespace igc {

struct IgcConfig {
    int l = 1;      // primary partition count
    int m = 1;      // channels per primary partition (output side)
    int k = 3;      // spatial kernel side, S = k*k
    int stride = 1; // applies in the primary convolution only
    bool with_bn_relu = false;
    int m_in = 0;   // input channels per partition; 0 means m (transition blocks differ)

    int input_m() const { return m_in > 0 ? m_in : m; }
    int width() const { return l * m; }
    int input_width() const { return l * input_m(); }
    int s() const { return k * k; }

    void validate() const {
        if (l < 1 || m < 1 || k < 1 || stride < 1 || (m_in < 0))
            throw ConfigError("bad IgcConfig l=" + std::to_string(l) + " m=" + std::to_string(m) +
                              " k=" + std::to_string(k) + " stride=" + std::to_string(stride));
        if (k % 2 == 0) throw ConfigError("spatial kernel side must be odd, got " + std::to_string(k));
    }
};

struct PermutationSpec {
    std::vector<int> forward_index; // secondary position -> primary position
    std::vector<int> inverse_index;
};

// The m-th secondary partition gathers the m-th output channel of every
// primary partition: forward_index[m*L + l] = l*M + m.
inline PermutationSpec permutation_indices(int l, int m) {
    if (l < 1 || m < 1) throw ConfigError("permutation needs L, M >= 1");
    PermutationSpec p;
    p.forward_index.resize(static_cast<size_t>(l) * m);
    p.inverse_index.resize(static_cast<size_t>(l) * m);
    for (int mm = 0; mm < m; ++mm)
        for (int ll = 0; ll < l; ++ll) {
            p.forward_index[static_cast<size_t>(mm) * l + ll] = ll * m + mm;
            p.inverse_index[static_cast<size_t>(ll) * m + mm] = mm * l + ll;
        }
    return p;
}

// y[i] = x[index[i]] over channels.
template <typename T>
Tensor<T> gather_channels(const Tensor<T>& x, const std::vector<int>& index) {
    if (static_cast<int>(index.size()) != x.c())
        throw ShapeError("gather index size " + std::to_string(index.size()) + " vs channels " +
                         std::to_string(x.c()));
    Tensor<T> out(x.n(), x.c(), x.h(), x.w());
    const size_t plane = static_cast<size_t>(x.h()) * x.w();
    for (int n = 0; n < x.n(); ++n)
        for (int c = 0; c < x.c(); ++c) {
            const T* src = x.data() + x.index(n, index[c], 0, 0);
            T* dst = out.data() + out.index(n, c, 0, 0);
            for (size_t i = 0; i < plane; ++i) dst[i] = src[i];
        }
    return out;
}

template <typename T>
struct BnParams {
    std::vector<T> gamma;
    std::vector<T> beta;
    BnState<T> state;

    explicit BnParams(int channels = 0)
        : gamma(channels, T(1)), beta(channels, T(0)), state(channels) {}
};

template <typename T>
struct IgcBlockParams {
    std::vector<Tensor<T>> primary;   // L kernels, each (M, M_in, k, k)
    std::vector<Matrix<T>> secondary; // M matrices, each L x L
    std::optional<BnParams<T>> bn;    // for L*M channels when the block owns BN+ReLU
};

inline long long igc_block_param_count(const IgcConfig& cfg) {
    return static_cast<long long>(cfg.l) * cfg.m * cfg.input_m() * cfg.s() +
           static_cast<long long>(cfg.m) * cfg.l * cfg.l;
}

// He init: zero-mean Gaussian, std = sqrt(2 / fan_in) per kernel block.
template <typename T>
IgcBlockParams<T> make_igc_params(const IgcConfig& cfg, CounterRng& rng) {
    cfg.validate();
    IgcBlockParams<T> p;
    const double std_primary = std::sqrt(2.0 / (cfg.input_m() * cfg.s()));
    for (int l = 0; l < cfg.l; ++l) {
        Tensor<T> kern(cfg.m, cfg.input_m(), cfg.k, cfg.k);
        for (auto& v : kern.vec()) v = static_cast<T>(rng.next_gaussian() * std_primary);
        p.primary.push_back(std::move(kern));
    }
    const double std_secondary = std::sqrt(2.0 / cfg.l);
    for (int m = 0; m < cfg.m; ++m) {
        Matrix<T> w(cfg.l, cfg.l);
        for (auto& v : w.vec()) v = static_cast<T>(rng.next_gaussian() * std_secondary);
        p.secondary.push_back(std::move(w));
    }
    if (cfg.with_bn_relu) p.bn.emplace(cfg.width());
    return p;
}

template <typename T>
void check_igc_params(const IgcConfig& cfg, const IgcBlockParams<T>& params) {
    cfg.validate();
    if (static_cast<int>(params.primary.size()) != cfg.l ||
        static_cast<int>(params.secondary.size()) != cfg.m)
        throw ConfigError("params hold " + std::to_string(params.primary.size()) + "/" +
                          std::to_string(params.secondary.size()) + " kernels, config wants L=" +
                          std::to_string(cfg.l) + " M=" + std::to_string(cfg.m));
    for (const auto& kern : params.primary)
        if (kern.n() != cfg.m || kern.c() != cfg.input_m() || kern.h() != cfg.k || kern.w() != cfg.k)
            throw ConfigError("primary kernel " + kern.shape_str() + " does not match config");
    for (const auto& w : params.secondary)
        if (w.rows() != cfg.l || w.cols() != cfg.l)
            throw ConfigError("secondary kernel " + w.shape_str() + " does not match L=" +
                              std::to_string(cfg.l));
}

// Channels [l*M, (l+1)*M) of the output depend only on channels
// [l*M_in, (l+1)*M_in) of the input.
template <typename T>
Tensor<T> primary_group_conv(const Tensor<T>& x, const IgcConfig& cfg,
                             const IgcBlockParams<T>& params, int stride, int pad) {
    check_igc_params(cfg, params);
    if (x.c() != cfg.input_width())
        throw ConfigError("input has " + std::to_string(x.c()) + " channels, not divisible into L=" +
                          std::to_string(cfg.l) + " partitions of " + std::to_string(cfg.input_m()));
    const ConvGeom g = conv_output_geom(x.h(), x.w(), cfg.k, stride, pad);
    Tensor<T> out(x.n(), cfg.width(), g.h_out, g.w_out);
    for (int l = 0; l < cfg.l; ++l) {
        const Tensor<T> part = slice_channels(x, l * cfg.input_m(), (l + 1) * cfg.input_m());
        paste_channels(out, conv2d_forward(part, params.primary[l], stride, pad), l * cfg.m);
    }
    return out;
}

// 1x1 convolution per secondary partition, input already in secondary layout
// (M partitions of L channels).
template <typename T>
Tensor<T> secondary_group_conv(const Tensor<T>& x, const IgcConfig& cfg,
                               const IgcBlockParams<T>& params) {
    check_igc_params(cfg, params);
    if (x.c() != cfg.width())
        throw ConfigError("secondary input has " + std::to_string(x.c()) + " channels, want M*L=" +
                          std::to_string(cfg.width()));
    Tensor<T> out(x.n(), cfg.width(), x.h(), x.w());
    for (int m = 0; m < cfg.m; ++m) {
        const Tensor<T> part = slice_channels(x, m * cfg.l, (m + 1) * cfg.l);
        Tensor<T> kern(cfg.l, cfg.l, 1, 1);
        for (int r = 0; r < cfg.l; ++r)
            for (int c = 0; c < cfg.l; ++c) kern.at(r, c, 0, 0) = params.secondary[m](r, c);
        paste_channels(out, conv2d_forward(part, kern, 1, 0), m * cfg.l);
    }
    return out;
}

template <typename T>
struct IgcBlockCache {
    Tensor<T> input;
    Tensor<T> secondary_input; // interleaved primary output
    Tensor<T> pre_bn;          // block output before BN (kept when BN is on)
    Tensor<T> pre_relu;
    BnCache<T> bn;
};

// x' = P W^d P^T W^p x per spatial position, realised as
// primary conv -> interleave -> secondary conv -> interleave back.
// BN+ReLU, when enabled, follow the whole block; never between the two
// group convolutions.
template <typename T>
Tensor<T> igc_block_forward(const Tensor<T>& x, const IgcConfig& cfg, IgcBlockParams<T>& params,
                            BnMode mode = BnMode::train, IgcBlockCache<T>* cache = nullptr) {
    const int pad = same_pad(cfg.k);
    const PermutationSpec perm = permutation_indices(cfg.l, cfg.m);
    Tensor<T> y = primary_group_conv(x, cfg, params, cfg.stride, pad);
    Tensor<T> ybar = gather_channels(y, perm.forward_index);
    Tensor<T> zbar = secondary_group_conv(ybar, cfg, params);
    Tensor<T> z = gather_channels(zbar, perm.inverse_index);
    if (cache) {
        cache->input = x;
        cache->secondary_input = std::move(ybar);
    }
    if (!cfg.with_bn_relu) return z;
    if (!params.bn) throw ConfigError("config has with_bn_relu but params carry no BN state");
    Tensor<T> bn_out = batchnorm_forward(z, params.bn->gamma, params.bn->beta, params.bn->state,
                                         mode, cache ? &cache->bn : nullptr);
    if (cache) {
        cache->pre_bn = std::move(z);
        cache->pre_relu = bn_out;
    }
    return relu_forward(bn_out);
}

template <typename T>
struct IgcBlockGrads {
    Tensor<T> grad_input;
    std::vector<Tensor<T>> grad_primary;
    std::vector<Matrix<T>> grad_secondary;
    std::vector<T> grad_gamma;
    std::vector<T> grad_beta;
};

// Backward given a cache produced by igc_block_forward. The permutation
// backward is the inverse permutation.
template <typename T>
IgcBlockGrads<T> igc_block_backward_cached(const IgcConfig& cfg, const IgcBlockParams<T>& params,
                                           const IgcBlockCache<T>& cache, const Tensor<T>& grad_out) {
    const int pad = same_pad(cfg.k);
    const PermutationSpec perm = permutation_indices(cfg.l, cfg.m);
    IgcBlockGrads<T> grads;

    Tensor<T> g = grad_out;
    if (cfg.with_bn_relu) {
        g = relu_backward(g, cache.pre_relu);
        BnGrads<T> bg = batchnorm_backward(g, cache.bn, params.bn->gamma);
        grads.grad_gamma = std::move(bg.grad_gamma);
        grads.grad_beta = std::move(bg.grad_beta);
        g = std::move(bg.grad_input);
    }
    // undo the inverse interleave
    Tensor<T> g_zbar = gather_channels(g, perm.forward_index);

    // secondary 1x1 group conv backward
    Tensor<T> g_ybar(g_zbar.n(), cfg.width(), g_zbar.h(), g_zbar.w());
    grads.grad_secondary.assign(cfg.m, Matrix<T>(cfg.l, cfg.l));
    for (int m = 0; m < cfg.m; ++m) {
        const Tensor<T> part_in = slice_channels(cache.secondary_input, m * cfg.l, (m + 1) * cfg.l);
        const Tensor<T> part_g = slice_channels(g_zbar, m * cfg.l, (m + 1) * cfg.l);
        Tensor<T> kern(cfg.l, cfg.l, 1, 1);
        for (int r = 0; r < cfg.l; ++r)
            for (int c = 0; c < cfg.l; ++c) kern.at(r, c, 0, 0) = params.secondary[m](r, c);
        ConvGrads<T> cg = conv2d_backward(part_in, kern, part_g, 1, 0);
        paste_channels(g_ybar, cg.grad_input, m * cfg.l);
        for (int r = 0; r < cfg.l; ++r)
            for (int c = 0; c < cfg.l; ++c) grads.grad_secondary[m](r, c) = cg.grad_kernel.at(r, c, 0, 0);
    }

    // undo the forward interleave
    Tensor<T> g_y = gather_channels(g_ybar, perm.inverse_index);

    // primary group conv backward
    grads.grad_input = Tensor<T>(cache.input.n(), cache.input.c(), cache.input.h(), cache.input.w());
    grads.grad_primary.reserve(cfg.l);
    for (int l = 0; l < cfg.l; ++l) {
        const Tensor<T> part_in =
            slice_channels(cache.input, l * cfg.input_m(), (l + 1) * cfg.input_m());
        const Tensor<T> part_g = slice_channels(g_y, l * cfg.m, (l + 1) * cfg.m);
        ConvGrads<T> cg = conv2d_backward(part_in, params.primary[l], part_g, cfg.stride, pad);
        paste_channels(grads.grad_input, cg.grad_input, l * cfg.input_m());
        grads.grad_primary.push_back(std::move(cg.grad_kernel));
    }
    return grads;
}

// Op form: recomputes the forward pass to obtain the intermediates.
template <typename T>
IgcBlockGrads<T> igc_block_backward(const Tensor<T>& x, const IgcConfig& cfg,
                                    IgcBlockParams<T>& params, const Tensor<T>& grad_out) {
    IgcBlockCache<T> cache;
    igc_block_forward(x, cfg, params, BnMode::train, &cache);
    return igc_block_backward_cached(cfg, params, cache, grad_out);
}

// ---------------------------------------------------------------------------
// GPC: group convolution followed by a full (ungrouped) 1x1 convolution, the
// appendix's costlier alternative. Parameter count L*M*M*S + (L*M)^2.
// ---------------------------------------------------------------------------

template <typename T>
struct GpcParams {
    std::vector<Tensor<T>> primary; // L kernels (M, M_in, k, k)
    Tensor<T> pointwise;            // (L*M, L*M, 1, 1)
};

template <typename T>
GpcParams<T> make_gpc_params(const IgcConfig& cfg, CounterRng& rng) {
    GpcParams<T> p;
    const double std_primary = std::sqrt(2.0 / (cfg.input_m() * cfg.s()));
    for (int l = 0; l < cfg.l; ++l) {
        Tensor<T> kern(cfg.m, cfg.input_m(), cfg.k, cfg.k);
        for (auto& v : kern.vec()) v = static_cast<T>(rng.next_gaussian() * std_primary);
        p.primary.push_back(std::move(kern));
    }
    p.pointwise = Tensor<T>(cfg.width(), cfg.width(), 1, 1);
    const double std_point = std::sqrt(2.0 / cfg.width());
    for (auto& v : p.pointwise.vec()) v = static_cast<T>(rng.next_gaussian() * std_point);
    return p;
}

template <typename T>
Tensor<T> gpc_block_forward(const Tensor<T>& x, const IgcConfig& cfg, const GpcParams<T>& params) {
    cfg.validate();
    if (x.c() != cfg.input_width())
        throw ConfigError("gpc input has " + std::to_string(x.c()) + " channels, want " +
                          std::to_string(cfg.input_width()));
    const int pad = same_pad(cfg.k);
    const ConvGeom g = conv_output_geom(x.h(), x.w(), cfg.k, cfg.stride, pad);
    Tensor<T> y(x.n(), cfg.width(), g.h_out, g.w_out);
    for (int l = 0; l < cfg.l; ++l) {
        const Tensor<T> part = slice_channels(x, l * cfg.input_m(), (l + 1) * cfg.input_m());
        paste_channels(y, conv2d_forward(part, params.primary[l], cfg.stride, pad), l * cfg.m);
    }
    return conv2d_forward(y, params.pointwise, 1, 0);
}

} // namespace igc
