#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "igc/errors.hpp"
#include "igc/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

// Forward/backward operations every other module builds on.
//
// Determinism contract: every accumulation runs in a fixed left-to-right
// order over its reduction dimension, one output element per thread, so the
// OpenMP kernels are bit-identical to the serial references in igc::ref for
// any thread count. Convolutions are bias-free; batch norm follows every
// conv. Build without fp-contraction or fast-math on verification paths.

namespace igc {

struct ConvGeom {
    int h_out = 0;
    int w_out = 0;
};

// Floor semantics: out = (in + 2*pad - k) / stride + 1. Rejects geometries the
// kernel cannot cover.
inline ConvGeom conv_output_geom(int h, int w, int k, int stride, int pad) {
    if (k < 1 || stride < 1 || pad < 0)
        throw GeometryError("k=" + std::to_string(k) + " stride=" + std::to_string(stride) +
                            " pad=" + std::to_string(pad));
    if (h + 2 * pad < k || w + 2 * pad < k)
        throw GeometryError("input " + std::to_string(h) + "x" + std::to_string(w) +
                            " too small for k=" + std::to_string(k) +
                            " pad=" + std::to_string(pad));
    ConvGeom g;
    g.h_out = (h + 2 * pad - k) / stride + 1;
    g.w_out = (w + 2 * pad - k) / stride + 1;
    return g;
}

inline int same_pad(int k) { return k / 2; }

namespace detail {

template <typename T>
inline T padded_at(const Tensor<T>& x, int n, int c, int y, int xw) {
    if (y < 0 || y >= x.h() || xw < 0 || xw >= x.w()) return T(0);
    return x.at(n, c, y, xw);
}

} // namespace detail

// ---------------------------------------------------------------------------
// Serial reference kernels. Kept for testing and benchmarking; the direct
// convolution loop doubles as the independent route the im2col path is
// checked against.
// ---------------------------------------------------------------------------
namespace ref {

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul " + a.shape_str() + " x " + b.shape_str());
    Matrix<T> out(a.rows(), b.cols());
    for (int i = 0; i < a.rows(); ++i)
        for (int p = 0; p < a.cols(); ++p) {
            const T aip = a(i, p);
            for (int j = 0; j < b.cols(); ++j) out(i, j) += aip * b(p, j);
        }
    return out;
}

template <typename T>
Matrix<T> im2col(const Tensor<T>& x, int k, int stride, int pad) {
    const ConvGeom g = conv_output_geom(x.h(), x.w(), k, stride, pad);
    Matrix<T> out(x.c() * k * k, x.n() * g.h_out * g.w_out);
    for (int col = 0; col < out.cols(); ++col) {
        const int n = col / (g.h_out * g.w_out);
        const int oy = (col / g.w_out) % g.h_out;
        const int ox = col % g.w_out;
        int row = 0;
        for (int c = 0; c < x.c(); ++c)
            for (int dy = 0; dy < k; ++dy)
                for (int dx = 0; dx < k; ++dx, ++row)
                    out(row, col) = detail::padded_at(x, n, c, oy * stride - pad + dy,
                                                      ox * stride - pad + dx);
    }
    return out;
}

// Direct nested-loop convolution. Padded taps contribute explicit zeros so the
// per-element accumulation sequence matches the im2col+matmul path exactly.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& kernel, int stride, int pad) {
    if (kernel.c() != x.c())
        throw ShapeError("conv kernel expects " + std::to_string(kernel.c()) +
                         " input channels, tensor has " + std::to_string(x.c()));
    if (kernel.h() != kernel.w()) throw ShapeError("non-square kernel " + kernel.shape_str());
    const int k = kernel.h();
    const ConvGeom g = conv_output_geom(x.h(), x.w(), k, stride, pad);
    Tensor<T> out(x.n(), kernel.n(), g.h_out, g.w_out);
    for (int n = 0; n < x.n(); ++n)
        for (int co = 0; co < kernel.n(); ++co)
            for (int oy = 0; oy < g.h_out; ++oy)
                for (int ox = 0; ox < g.w_out; ++ox) {
                    T acc = 0;
                    for (int ci = 0; ci < x.c(); ++ci)
                        for (int dy = 0; dy < k; ++dy)
                            for (int dx = 0; dx < k; ++dx)
                                acc += kernel.at(co, ci, dy, dx) *
                                       detail::padded_at(x, n, ci, oy * stride - pad + dy,
                                                         ox * stride - pad + dx);
                    out.at(n, co, oy, ox) = acc;
                }
    return out;
}

template <typename T>
struct ConvGrads {
    Tensor<T> grad_input;
    Tensor<T> grad_kernel;
};

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& kernel,
                             const Tensor<T>& grad_out, int stride, int pad) {
    const int k = kernel.h();
    const ConvGeom g = conv_output_geom(x.h(), x.w(), k, stride, pad);
    if (grad_out.n() != x.n() || grad_out.c() != kernel.n() || grad_out.h() != g.h_out ||
        grad_out.w() != g.w_out)
        throw ShapeError("conv grad_out " + grad_out.shape_str() + ", expected (" +
                         std::to_string(x.n()) + "," + std::to_string(kernel.n()) + "," +
                         std::to_string(g.h_out) + "," + std::to_string(g.w_out) + ")");
    ConvGrads<T> grads{Tensor<T>(x.n(), x.c(), x.h(), x.w()),
                       Tensor<T>(kernel.n(), kernel.c(), kernel.h(), kernel.w())};
    for (int co = 0; co < kernel.n(); ++co)
        for (int ci = 0; ci < kernel.c(); ++ci)
            for (int dy = 0; dy < k; ++dy)
                for (int dx = 0; dx < k; ++dx) {
                    T acc = 0;
                    for (int n = 0; n < x.n(); ++n)
                        for (int oy = 0; oy < g.h_out; ++oy)
                            for (int ox = 0; ox < g.w_out; ++ox)
                                acc += grad_out.at(n, co, oy, ox) *
                                       detail::padded_at(x, n, ci, oy * stride - pad + dy,
                                                         ox * stride - pad + dx);
                    grads.grad_kernel.at(co, ci, dy, dx) = acc;
                }
    for (int n = 0; n < x.n(); ++n)
        for (int ci = 0; ci < x.c(); ++ci)
            for (int iy = 0; iy < x.h(); ++iy)
                for (int ix = 0; ix < x.w(); ++ix) {
                    T acc = 0;
                    for (int co = 0; co < kernel.n(); ++co)
                        for (int dy = 0; dy < k; ++dy)
                            for (int dx = 0; dx < k; ++dx) {
                                const int ty = iy + pad - dy;
                                const int tx = ix + pad - dx;
                                if (ty < 0 || tx < 0 || ty % stride || tx % stride) continue;
                                const int oy = ty / stride;
                                const int ox = tx / stride;
                                if (oy >= g.h_out || ox >= g.w_out) continue;
                                acc += kernel.at(co, ci, dy, dx) * grad_out.at(n, co, oy, ox);
                            }
                    grads.grad_input.at(n, ci, iy, ix) = acc;
                }
    return grads;
}

} // namespace ref

// ---------------------------------------------------------------------------
// OpenMP kernels (primary path).
// ---------------------------------------------------------------------------

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul " + a.shape_str() + " x " + b.shape_str());
    Matrix<T> out(a.rows(), b.cols());
    const int m = a.rows(), kk = a.cols(), n = b.cols();
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        T* orow = out.data() + static_cast<size_t>(i) * n;
        for (int p = 0; p < kk; ++p) {
            const T aip = a(i, p);
            const T* brow = b.data() + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    }
    return out;
}

// Column order (n, h_out, w_out); row order (c, dy, dx). Out-of-bounds taps
// read as zero.
template <typename T>
Matrix<T> im2col(const Tensor<T>& x, int k, int stride, int pad) {
    const ConvGeom g = conv_output_geom(x.h(), x.w(), k, stride, pad);
    Matrix<T> out(x.c() * k * k, x.n() * g.h_out * g.w_out);
    const int cols = out.cols();
#pragma omp parallel for schedule(static)
    for (int col = 0; col < cols; ++col) {
        const int n = col / (g.h_out * g.w_out);
        const int oy = (col / g.w_out) % g.h_out;
        const int ox = col % g.w_out;
        int row = 0;
        for (int c = 0; c < x.c(); ++c)
            for (int dy = 0; dy < k; ++dy)
                for (int dx = 0; dx < k; ++dx, ++row)
                    out(row, col) =
                        detail::padded_at(x, n, c, oy * stride - pad + dy, ox * stride - pad + dx);
    }
    return out;
}

template <typename T>
Matrix<T> kernel_as_matrix(const Tensor<T>& kernel) {
    Matrix<T> m(kernel.n(), kernel.c() * kernel.h() * kernel.w());
    for (size_t i = 0; i < kernel.size(); ++i) m.vec()[i] = kernel.vec()[i];
    return m;
}

// im2col + matmul convolution; equals ref::conv2d_forward bit-for-bit.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& kernel, int stride, int pad) {
    if (kernel.c() != x.c())
        throw ShapeError("conv kernel expects " + std::to_string(kernel.c()) +
                         " input channels, tensor has " + std::to_string(x.c()));
    if (kernel.h() != kernel.w()) throw ShapeError("non-square kernel " + kernel.shape_str());
    const int k = kernel.h();
    const ConvGeom g = conv_output_geom(x.h(), x.w(), k, stride, pad);
    const Matrix<T> cols = im2col(x, k, stride, pad);
    const Matrix<T> prod = matmul(kernel_as_matrix(kernel), cols);
    Tensor<T> out(x.n(), kernel.n(), g.h_out, g.w_out);
    const int plane = g.h_out * g.w_out;
#pragma omp parallel for schedule(static)
    for (int n = 0; n < x.n(); ++n)
        for (int co = 0; co < kernel.n(); ++co) {
            T* dst = out.data() + out.index(n, co, 0, 0);
            const T* src = prod.data() + static_cast<size_t>(co) * prod.cols() +
                           static_cast<size_t>(n) * plane;
            for (int i = 0; i < plane; ++i) dst[i] = src[i];
        }
    return out;
}

template <typename T>
using ConvGrads = ref::ConvGrads<T>;

// Gradients of the scalar sum-weighted output; linear in grad_out.
template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& kernel,
                             const Tensor<T>& grad_out, int stride, int pad) {
    const int k = kernel.h();
    const ConvGeom g = conv_output_geom(x.h(), x.w(), k, stride, pad);
    if (grad_out.n() != x.n() || grad_out.c() != kernel.n() || grad_out.h() != g.h_out ||
        grad_out.w() != g.w_out)
        throw ShapeError("conv grad_out " + grad_out.shape_str() + ", expected (" +
                         std::to_string(x.n()) + "," + std::to_string(kernel.n()) + "," +
                         std::to_string(g.h_out) + "," + std::to_string(g.w_out) + ")");
    ConvGrads<T> grads{Tensor<T>(x.n(), x.c(), x.h(), x.w()),
                       Tensor<T>(kernel.n(), kernel.c(), kernel.h(), kernel.w())};
    const int co_n = kernel.n(), ci_n = kernel.c();
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < co_n * ci_n; ++oc) {
        const int co = oc / ci_n;
        const int ci = oc % ci_n;
        for (int dy = 0; dy < k; ++dy)
            for (int dx = 0; dx < k; ++dx) {
                T acc = 0;
                for (int n = 0; n < x.n(); ++n)
                    for (int oy = 0; oy < g.h_out; ++oy)
                        for (int ox = 0; ox < g.w_out; ++ox)
                            acc += grad_out.at(n, co, oy, ox) *
                                   detail::padded_at(x, n, ci, oy * stride - pad + dy,
                                                     ox * stride - pad + dx);
                grads.grad_kernel.at(co, ci, dy, dx) = acc;
            }
    }
    const int nn = x.n(), cc = x.c();
#pragma omp parallel for schedule(static)
    for (int nc = 0; nc < nn * cc; ++nc) {
        const int n = nc / cc;
        const int ci = nc % cc;
        for (int iy = 0; iy < x.h(); ++iy)
            for (int ix = 0; ix < x.w(); ++ix) {
                T acc = 0;
                for (int co = 0; co < co_n; ++co)
                    for (int dy = 0; dy < k; ++dy)
                        for (int dx = 0; dx < k; ++dx) {
                            const int ty = iy + pad - dy;
                            const int tx = ix + pad - dx;
                            if (ty < 0 || tx < 0 || ty % stride || tx % stride) continue;
                            const int oy = ty / stride;
                            const int ox = tx / stride;
                            if (oy >= g.h_out || ox >= g.w_out) continue;
                            acc += kernel.at(co, ci, dy, dx) * grad_out.at(n, co, oy, ox);
                        }
                grads.grad_input.at(n, ci, iy, ix) = acc;
            }
    }
    return grads;
}

// ---------------------------------------------------------------------------
// Batch normalization. Train mode normalizes by batch statistics over
// (N, H, W) per channel and updates running stats with momentum 0.9; eval
// mode uses running stats. Biased variance throughout.
// ---------------------------------------------------------------------------

enum class BnMode { train, eval };

inline constexpr double kBnEpsilon = 1e-5;
inline constexpr double kBnMomentum = 0.9;

template <typename T>
struct BnState {
    std::vector<T> running_mean;
    std::vector<T> running_var; // initialised to 1

    explicit BnState(int channels = 0)
        : running_mean(channels, T(0)), running_var(channels, T(1)) {}
};

template <typename T>
struct BnCache {
    Tensor<T> xhat;
    std::vector<T> inv_std;
    std::vector<T> mean;
};

template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, const std::vector<T>& gamma,
                            const std::vector<T>& beta, BnState<T>& state, BnMode mode,
                            BnCache<T>* cache = nullptr) {
    const int C = x.c();
    if (static_cast<int>(gamma.size()) != C || static_cast<int>(beta.size()) != C ||
        static_cast<int>(state.running_mean.size()) != C)
        throw ShapeError("batchnorm affine size vs " + std::to_string(C) + " channels");
    Tensor<T> out(x.n(), C, x.h(), x.w());
    if (cache) {
        cache->xhat = Tensor<T>(x.n(), C, x.h(), x.w());
        cache->inv_std.assign(C, T(0));
        cache->mean.assign(C, T(0));
    }
    const long long m = static_cast<long long>(x.n()) * x.h() * x.w();
#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
        T mean, inv_std;
        if (mode == BnMode::train) {
            T sum = 0;
            for (int n = 0; n < x.n(); ++n)
                for (int y = 0; y < x.h(); ++y)
                    for (int xx = 0; xx < x.w(); ++xx) sum += x.at(n, c, y, xx);
            mean = sum / static_cast<T>(m);
            T sq = 0;
            for (int n = 0; n < x.n(); ++n)
                for (int y = 0; y < x.h(); ++y)
                    for (int xx = 0; xx < x.w(); ++xx) {
                        const T d = x.at(n, c, y, xx) - mean;
                        sq += d * d;
                    }
            const T var = sq / static_cast<T>(m);
            state.running_mean[c] = static_cast<T>(kBnMomentum) * state.running_mean[c] +
                                    static_cast<T>(1.0 - kBnMomentum) * mean;
            state.running_var[c] = static_cast<T>(kBnMomentum) * state.running_var[c] +
                                   static_cast<T>(1.0 - kBnMomentum) * var;
            inv_std = T(1) / std::sqrt(var + static_cast<T>(kBnEpsilon));
        } else {
            mean = state.running_mean[c];
            inv_std = T(1) / std::sqrt(state.running_var[c] + static_cast<T>(kBnEpsilon));
        }
        if (cache) {
            cache->mean[c] = mean;
            cache->inv_std[c] = inv_std;
        }
        for (int n = 0; n < x.n(); ++n)
            for (int y = 0; y < x.h(); ++y)
                for (int xx = 0; xx < x.w(); ++xx) {
                    const T xh = (x.at(n, c, y, xx) - mean) * inv_std;
                    if (cache) cache->xhat.at(n, c, y, xx) = xh;
                    out.at(n, c, y, xx) = gamma[c] * xh + beta[c];
                }
    }
    return out;
}

template <typename T>
struct BnGrads {
    Tensor<T> grad_input;
    std::vector<T> grad_gamma;
    std::vector<T> grad_beta;
};

// Train-mode backward through the batch statistics.
template <typename T>
BnGrads<T> batchnorm_backward(const Tensor<T>& grad_out, const BnCache<T>& cache,
                              const std::vector<T>& gamma) {
    const Tensor<T>& xhat = cache.xhat;
    const int C = xhat.c();
    BnGrads<T> g{Tensor<T>(xhat.n(), C, xhat.h(), xhat.w()), std::vector<T>(C, T(0)),
                 std::vector<T>(C, T(0))};
    const T m = static_cast<T>(static_cast<long long>(xhat.n()) * xhat.h() * xhat.w());
#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
        T sum_dy = 0, sum_dy_xhat = 0;
        for (int n = 0; n < xhat.n(); ++n)
            for (int y = 0; y < xhat.h(); ++y)
                for (int xx = 0; xx < xhat.w(); ++xx) {
                    const T dy = grad_out.at(n, c, y, xx);
                    sum_dy += dy;
                    sum_dy_xhat += dy * xhat.at(n, c, y, xx);
                }
        g.grad_beta[c] = sum_dy;
        g.grad_gamma[c] = sum_dy_xhat;
        const T scale = gamma[c] * cache.inv_std[c];
        for (int n = 0; n < xhat.n(); ++n)
            for (int y = 0; y < xhat.h(); ++y)
                for (int xx = 0; xx < xhat.w(); ++xx) {
                    const T dy = grad_out.at(n, c, y, xx);
                    const T xh = xhat.at(n, c, y, xx);
                    g.grad_input.at(n, c, y, xx) =
                        scale * (dy - sum_dy / m - xh * sum_dy_xhat / m);
                }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Pointwise / head operations.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
    Tensor<T> out(x.n(), x.c(), x.h(), x.w());
    const long long total = static_cast<long long>(x.size());
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < total; ++i) out.vec()[i] = x.vec()[i] > T(0) ? x.vec()[i] : T(0);
    return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad_out, const Tensor<T>& x) {
    if (!grad_out.same_shape(x))
        throw ShapeError("relu grad " + grad_out.shape_str() + " vs input " + x.shape_str());
    Tensor<T> out(x.n(), x.c(), x.h(), x.w());
    const long long total = static_cast<long long>(x.size());
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < total; ++i)
        out.vec()[i] = x.vec()[i] > T(0) ? grad_out.vec()[i] : T(0);
    return out;
}

template <typename T>
Tensor<T> global_avg_pool_forward(const Tensor<T>& x) {
    Tensor<T> out(x.n(), x.c(), 1, 1);
    const T denom = static_cast<T>(x.h()) * static_cast<T>(x.w());
    for (int n = 0; n < x.n(); ++n)
        for (int c = 0; c < x.c(); ++c) {
            T acc = 0;
            for (int y = 0; y < x.h(); ++y)
                for (int xx = 0; xx < x.w(); ++xx) acc += x.at(n, c, y, xx);
            out.at(n, c, 0, 0) = acc / denom;
        }
    return out;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Tensor<T>& grad_out, int h, int w) {
    Tensor<T> out(grad_out.n(), grad_out.c(), h, w);
    const T denom = static_cast<T>(h) * static_cast<T>(w);
    for (int n = 0; n < grad_out.n(); ++n)
        for (int c = 0; c < grad_out.c(); ++c) {
            const T v = grad_out.at(n, c, 0, 0) / denom;
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx) out.at(n, c, y, xx) = v;
        }
    return out;
}

// Input is flattened to (N, C*H*W); weights are (out, in) with a bias vector.
template <typename T>
Tensor<T> fully_connected_forward(const Tensor<T>& x, const Matrix<T>& weights,
                                  const std::vector<T>& bias) {
    const int in_dim = x.c() * x.h() * x.w();
    if (weights.cols() != in_dim)
        throw ShapeError("fc weights " + weights.shape_str() + " vs input dim " +
                         std::to_string(in_dim));
    if (static_cast<int>(bias.size()) != weights.rows())
        throw ShapeError("fc bias size " + std::to_string(bias.size()));
    Tensor<T> out(x.n(), weights.rows(), 1, 1);
#pragma omp parallel for schedule(static)
    for (int n = 0; n < x.n(); ++n) {
        const T* xi = x.data() + static_cast<size_t>(n) * in_dim;
        for (int o = 0; o < weights.rows(); ++o) {
            T acc = bias[o];
            const T* wr = weights.data() + static_cast<size_t>(o) * in_dim;
            for (int d = 0; d < in_dim; ++d) acc += wr[d] * xi[d];
            out.at(n, o, 0, 0) = acc;
        }
    }
    return out;
}

template <typename T>
struct FcGrads {
    Tensor<T> grad_input;
    Matrix<T> grad_weights;
    std::vector<T> grad_bias;
};

template <typename T>
FcGrads<T> fully_connected_backward(const Tensor<T>& x, const Matrix<T>& weights,
                                    const Tensor<T>& grad_out) {
    const int in_dim = x.c() * x.h() * x.w();
    const int out_dim = weights.rows();
    FcGrads<T> g{Tensor<T>(x.n(), x.c(), x.h(), x.w()), Matrix<T>(out_dim, in_dim),
                 std::vector<T>(out_dim, T(0))};
    for (int o = 0; o < out_dim; ++o) {
        T acc = 0;
        for (int n = 0; n < x.n(); ++n) acc += grad_out.at(n, o, 0, 0);
        g.grad_bias[o] = acc;
    }
#pragma omp parallel for schedule(static)
    for (int o = 0; o < out_dim; ++o)
        for (int d = 0; d < in_dim; ++d) {
            T acc = 0;
            for (int n = 0; n < x.n(); ++n)
                acc += grad_out.at(n, o, 0, 0) * x.data()[static_cast<size_t>(n) * in_dim + d];
            g.grad_weights(o, d) = acc;
        }
#pragma omp parallel for schedule(static)
    for (int n = 0; n < x.n(); ++n)
        for (int d = 0; d < in_dim; ++d) {
            T acc = 0;
            for (int o = 0; o < out_dim; ++o) acc += weights(o, d) * grad_out.at(n, o, 0, 0);
            g.grad_input.data()[static_cast<size_t>(n) * in_dim + d] = acc;
        }
    return g;
}

template <typename T>
struct SoftmaxCeResult {
    double loss = 0;            // averaged over the batch
    Tensor<T> grad_logits;      // d loss / d logits
    Matrix<T> probs;            // (N, K)
};

template <typename T>
SoftmaxCeResult<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
    const int N = logits.n();
    const int K = logits.c() * logits.h() * logits.w();
    if (static_cast<int>(labels.size()) != N)
        throw ShapeError("labels size " + std::to_string(labels.size()) + " vs batch " +
                         std::to_string(N));
    SoftmaxCeResult<T> r;
    r.grad_logits = Tensor<T>(logits.n(), logits.c(), logits.h(), logits.w());
    r.probs = Matrix<T>(N, K);
    double loss_sum = 0;
    for (int n = 0; n < N; ++n) {
        if (labels[n] < 0 || labels[n] >= K)
            throw InputError("label " + std::to_string(labels[n]) + " out of range [0," +
                             std::to_string(K) + ")");
        const T* row = logits.data() + static_cast<size_t>(n) * K;
        T mx = row[0];
        for (int k = 1; k < K; ++k) mx = std::max(mx, row[k]);
        T denom = 0;
        for (int k = 0; k < K; ++k) denom += std::exp(row[k] - mx);
        for (int k = 0; k < K; ++k) r.probs(n, k) = std::exp(row[k] - mx) / denom;
        loss_sum += -(static_cast<double>(row[labels[n]] - mx) - std::log(static_cast<double>(denom)));
        for (int k = 0; k < K; ++k) {
            const T y = (k == labels[n]) ? T(1) : T(0);
            r.grad_logits.data()[static_cast<size_t>(n) * K + k] =
                (r.probs(n, k) - y) / static_cast<T>(N);
        }
    }
    r.loss = loss_sum / N;
    return r;
}

} // namespace igc
