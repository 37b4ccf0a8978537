#pragma once

// Stateless forward/backward kernels for the network layers. Everything is
// templated on the scalar type: production runs float, gradient checks run
// double (finite differences in float cannot resolve the tolerances used by
// the tests). Layer objects with parameters live in network.hpp; this header
// is pure math on TensorT<T>.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "signet/errors.hpp"
#include "signet/tensor.hpp"

namespace signet::nn {

inline std::size_t conv_out_dim(std::size_t in, std::size_t kernel, std::size_t stride,
                                std::size_t pad) {
    if (kernel == 0 || stride == 0) throw InvalidDimensions("kernel and stride must be positive");
    if (in + 2 * pad < kernel) throw InvalidDimensions("kernel larger than padded input");
    return (in + 2 * pad - kernel) / stride + 1;
}

// ---------------------------------------------------------------------------
// GEMM (row-major). C is m x n; A is m x k (or k x m when transposed), B is
// k x n (or n x k). Plain loop nests, ordered for contiguous inner traversal.
// ---------------------------------------------------------------------------

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha,
          const T* a, const T* b, T beta, T* c) {
    for (std::size_t i = 0; i < m * n; ++i) c[i] = beta == T(0) ? T(0) : c[i] * beta;
    if (!trans_a && !trans_b) {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
                const T av = alpha * a[i * k + p];
                if (av == T(0)) continue;
                const T* brow = b + p * n;
                T* crow = c + i * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
    } else if (!trans_a && trans_b) {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                T acc = T(0);
                const T* arow = a + i * k;
                const T* brow = b + j * k;
                for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
                c[i * n + j] += alpha * acc;
            }
    } else if (trans_a && !trans_b) {
        for (std::size_t p = 0; p < k; ++p)
            for (std::size_t i = 0; i < m; ++i) {
                const T av = alpha * a[p * m + i];
                if (av == T(0)) continue;
                const T* brow = b + p * n;
                T* crow = c + i * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
    } else {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                T acc = T(0);
                for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[j * k + p];
                c[i * n + j] += alpha * acc;
            }
    }
}

// ---------------------------------------------------------------------------
// im2col / col2im for one sample. Columns matrix is (C*KH*KW) x (OH*OW) with
// row index (c*KH + kh)*KW + kw, so a row-major weight view (OC x C*KH*KW)
// multiplies it directly.
// ---------------------------------------------------------------------------

template <typename T>
void im2col(const T* x, std::size_t channels, std::size_t h, std::size_t w, std::size_t kernel,
            std::size_t stride, std::size_t pad, T* cols) {
    const std::size_t oh = conv_out_dim(h, kernel, stride, pad);
    const std::size_t ow = conv_out_dim(w, kernel, stride, pad);
    std::size_t row = 0;
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t kh = 0; kh < kernel; ++kh)
            for (std::size_t kw = 0; kw < kernel; ++kw, ++row) {
                T* out = cols + row * oh * ow;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const std::ptrdiff_t iy =
                        static_cast<std::ptrdiff_t>(oy * stride + kh) - static_cast<std::ptrdiff_t>(pad);
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kw) -
                                                  static_cast<std::ptrdiff_t>(pad);
                        const bool inside = iy >= 0 && iy < static_cast<std::ptrdiff_t>(h) &&
                                            ix >= 0 && ix < static_cast<std::ptrdiff_t>(w);
                        out[oy * ow + ox] = inside ? x[(c * h + iy) * w + ix] : T(0);
                    }
                }
            }
}

template <typename T>
void col2im(const T* cols, std::size_t channels, std::size_t h, std::size_t w, std::size_t kernel,
            std::size_t stride, std::size_t pad, T* x) {
    const std::size_t oh = conv_out_dim(h, kernel, stride, pad);
    const std::size_t ow = conv_out_dim(w, kernel, stride, pad);
    std::fill(x, x + channels * h * w, T(0));
    std::size_t row = 0;
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t kh = 0; kh < kernel; ++kh)
            for (std::size_t kw = 0; kw < kernel; ++kw, ++row) {
                const T* in = cols + row * oh * ow;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const std::ptrdiff_t iy =
                        static_cast<std::ptrdiff_t>(oy * stride + kh) - static_cast<std::ptrdiff_t>(pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kw) -
                                                  static_cast<std::ptrdiff_t>(pad);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                        x[(c * h + iy) * w + ix] += in[oy * ow + ox];
                    }
                }
            }
}

// ---------------------------------------------------------------------------
// Convolution. x: (N,C,H,W); w: (OC,C,KH,KW); optional bias (OC). Forward
// lowers each sample with im2col and multiplies by the flattened weights.
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>* bias,
                          std::size_t stride, std::size_t pad) {
    if (x.rank() != 4 || w.rank() != 4) throw ShapeError("conv2d: x and w must be rank 4");
    if (x.dim(1) != w.dim(1)) throw ShapeError("conv2d: channel mismatch");
    if (w.dim(2) != w.dim(3)) throw ShapeError("conv2d: only square kernels supported");
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const std::size_t oc = w.dim(0), k = w.dim(2);
    const std::size_t oh = conv_out_dim(h, k, stride, pad), ow = conv_out_dim(wd, k, stride, pad);
    if (bias && (bias->rank() != 1 || bias->dim(0) != oc))
        throw ShapeError("conv2d: bias must have out_channels entries");

    TensorT<T> y({n, oc, oh, ow});
    std::vector<T> cols(c * k * k * oh * ow);
    for (std::size_t i = 0; i < n; ++i) {
        im2col(x.ptr() + i * c * h * wd, c, h, wd, k, stride, pad, cols.data());
        gemm<T>(false, false, oc, oh * ow, c * k * k, T(1), w.ptr(), cols.data(), T(0),
                y.ptr() + i * oc * oh * ow);
    }
    if (bias)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t o = 0; o < oc; ++o) {
                T* dst = y.ptr() + (i * oc + o) * oh * ow;
                const T bv = bias->data[o];
                for (std::size_t s = 0; s < oh * ow; ++s) dst[s] += bv;
            }
    return y;
}

template <typename T>
void conv2d_backward(const TensorT<T>& x, const TensorT<T>& w, std::size_t stride, std::size_t pad,
                     const TensorT<T>& gy, TensorT<T>& gx, TensorT<T>& gw, TensorT<T>* gb) {
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const std::size_t oc = w.dim(0), k = w.dim(2);
    const std::size_t oh = gy.dim(2), ow = gy.dim(3);

    gx = TensorT<T>(x.shape);
    gw = TensorT<T>(w.shape);
    std::vector<T> cols(c * k * k * oh * ow);
    std::vector<T> gcols(c * k * k * oh * ow);
    for (std::size_t i = 0; i < n; ++i) {
        const T* gyi = gy.ptr() + i * oc * oh * ow;
        im2col(x.ptr() + i * c * h * wd, c, h, wd, k, stride, pad, cols.data());
        // gW += gy_i . cols^T ; gcols = W^T . gy_i
        gemm<T>(false, true, oc, c * k * k, oh * ow, T(1), gyi, cols.data(), T(1), gw.ptr());
        gemm<T>(true, false, c * k * k, oh * ow, oc, T(1), w.ptr(), gyi, T(0), gcols.data());
        col2im(gcols.data(), c, h, wd, k, stride, pad, gx.ptr() + i * c * h * wd);
    }
    if (gb) {
        *gb = TensorT<T>({oc});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t o = 0; o < oc; ++o) {
                const T* src = gy.ptr() + (i * oc + o) * oh * ow;
                T acc = T(0);
                for (std::size_t s = 0; s < oh * ow; ++s) acc += src[s];
                gb->data[o] += acc;
            }
    }
}

// ---------------------------------------------------------------------------
// Max pooling, square window, no padding. Forward records the flat input
// index of every maximum for the backward routing.
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> maxpool_forward(const TensorT<T>& x, std::size_t kernel, std::size_t stride,
                           std::vector<std::size_t>& argmax) {
    if (x.rank() != 4) throw ShapeError("maxpool: input must be rank 4");
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t oh = conv_out_dim(h, kernel, stride, 0), ow = conv_out_dim(w, kernel, stride, 0);
    TensorT<T> y({n, c, oh, ow});
    argmax.assign(y.size(), 0);
    std::size_t out = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const T* plane = x.ptr() + (i * c + ch) * h * w;
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox, ++out) {
                    std::size_t best_idx = (oy * stride) * w + ox * stride;
                    T best = plane[best_idx];
                    for (std::size_t ky = 0; ky < kernel; ++ky)
                        for (std::size_t kx = 0; kx < kernel; ++kx) {
                            const std::size_t idx = (oy * stride + ky) * w + ox * stride + kx;
                            if (plane[idx] > best) {
                                best = plane[idx];
                                best_idx = idx;
                            }
                        }
                    y.data[out] = best;
                    argmax[out] = (i * c + ch) * h * w + best_idx;
                }
        }
    return y;
}

template <typename T>
TensorT<T> maxpool_backward(const std::vector<std::size_t>& shape_in,
                            const std::vector<std::size_t>& argmax, const TensorT<T>& gy) {
    TensorT<T> gx(shape_in);
    for (std::size_t i = 0; i < gy.size(); ++i) gx.data[argmax[i]] += gy.data[i];
    return gx;
}

// ---------------------------------------------------------------------------
// Fully connected: x (N,D), w (O,D), bias (O) optional. y = x . w^T + b.
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> fc_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>* bias) {
    if (x.rank() != 2 || w.rank() != 2) throw ShapeError("fc: x and w must be rank 2");
    if (x.dim(1) != w.dim(1)) throw ShapeError("fc: input width does not match weights");
    const std::size_t n = x.dim(0), d = x.dim(1), o = w.dim(0);
    TensorT<T> y({n, o});
    gemm<T>(false, true, n, o, d, T(1), x.ptr(), w.ptr(), T(0), y.ptr());
    if (bias) {
        if (bias->size() != o) throw ShapeError("fc: bias size mismatch");
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < o; ++j) y.data[i * o + j] += bias->data[j];
    }
    return y;
}

template <typename T>
void fc_backward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& gy, TensorT<T>& gx,
                 TensorT<T>& gw, TensorT<T>* gb) {
    const std::size_t n = x.dim(0), d = x.dim(1), o = w.dim(0);
    gx = TensorT<T>({n, d});
    gw = TensorT<T>({o, d});
    gemm<T>(false, false, n, d, o, T(1), gy.ptr(), w.ptr(), T(0), gx.ptr());  // gx = gy . w
    gemm<T>(true, false, o, d, n, T(1), gy.ptr(), x.ptr(), T(0), gw.ptr());   // gw = gy^T . x
    if (gb) {
        *gb = TensorT<T>({o});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < o; ++j) gb->data[j] += gy.data[i * o + j];
    }
}

// ---------------------------------------------------------------------------
// Batch normalization. Inputs are viewed as (N, C, S): conv activations have
// S = H*W, fully connected ones S = 1. Statistics are per channel over the
// N*S slice, variance biased (divide by N*S). Reductions accumulate in
// double regardless of T.
// ---------------------------------------------------------------------------

template <typename T>
struct BatchNormCache {
    std::vector<double> mean, inv_std;
    TensorT<T> xhat;
};

template <typename T>
TensorT<T> batchnorm_forward_train(const TensorT<T>& x, std::size_t channels, std::size_t spatial,
                                   const TensorT<T>& gamma, const TensorT<T>& beta, double eps,
                                   BatchNormCache<T>& cache) {
    const std::size_t n = x.size() / (channels * spatial);
    const std::size_t m = n * spatial;
    if (m < 2) throw InsufficientBatch("batchnorm: needs at least 2 values per channel");
    if (x.size() != n * channels * spatial) throw ShapeError("batchnorm: shape mismatch");

    cache.mean.assign(channels, 0.0);
    cache.inv_std.assign(channels, 0.0);
    cache.xhat = TensorT<T>(x.shape);
    TensorT<T> y(x.shape);
    for (std::size_t c = 0; c < channels; ++c) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const T* src = x.ptr() + (i * channels + c) * spatial;
            for (std::size_t s = 0; s < spatial; ++s) sum += static_cast<double>(src[s]);
        }
        const double mean = sum / static_cast<double>(m);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const T* src = x.ptr() + (i * channels + c) * spatial;
            for (std::size_t s = 0; s < spatial; ++s) {
                const double d = static_cast<double>(src[s]) - mean;
                var += d * d;
            }
        }
        var /= static_cast<double>(m);
        const double inv_std = 1.0 / std::sqrt(var + eps);
        cache.mean[c] = mean;
        cache.inv_std[c] = inv_std;
        const double g = static_cast<double>(gamma.data[c]), b = static_cast<double>(beta.data[c]);
        for (std::size_t i = 0; i < n; ++i) {
            const T* src = x.ptr() + (i * channels + c) * spatial;
            T* xh = cache.xhat.ptr() + (i * channels + c) * spatial;
            T* dst = y.ptr() + (i * channels + c) * spatial;
            for (std::size_t s = 0; s < spatial; ++s) {
                const double v = (static_cast<double>(src[s]) - mean) * inv_std;
                xh[s] = static_cast<T>(v);
                dst[s] = static_cast<T>(g * v + b);
            }
        }
    }
    return y;
}

template <typename T>
TensorT<T> batchnorm_forward_infer(const TensorT<T>& x, std::size_t channels, std::size_t spatial,
                                   const TensorT<T>& gamma, const TensorT<T>& beta,
                                   const TensorT<T>& pop_mean, const TensorT<T>& pop_var,
                                   double eps) {
    const std::size_t n = x.size() / (channels * spatial);
    TensorT<T> y(x.shape);
    for (std::size_t c = 0; c < channels; ++c) {
        const double inv_std = 1.0 / std::sqrt(static_cast<double>(pop_var.data[c]) + eps);
        const double mean = static_cast<double>(pop_mean.data[c]);
        const double g = static_cast<double>(gamma.data[c]), b = static_cast<double>(beta.data[c]);
        for (std::size_t i = 0; i < n; ++i) {
            const T* src = x.ptr() + (i * channels + c) * spatial;
            T* dst = y.ptr() + (i * channels + c) * spatial;
            for (std::size_t s = 0; s < spatial; ++s)
                dst[s] = static_cast<T>(g * ((static_cast<double>(src[s]) - mean) * inv_std) + b);
        }
    }
    return y;
}

template <typename T>
void batchnorm_backward(const TensorT<T>& gy, std::size_t channels, std::size_t spatial,
                        const TensorT<T>& gamma, const BatchNormCache<T>& cache, TensorT<T>& gx,
                        TensorT<T>& ggamma, TensorT<T>& gbeta) {
    const std::size_t n = gy.size() / (channels * spatial);
    const double m = static_cast<double>(n * spatial);
    gx = TensorT<T>(gy.shape);
    ggamma = TensorT<T>({channels});
    gbeta = TensorT<T>({channels});
    for (std::size_t c = 0; c < channels; ++c) {
        double sum_gy = 0.0, sum_gy_xhat = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const T* g = gy.ptr() + (i * channels + c) * spatial;
            const T* xh = cache.xhat.ptr() + (i * channels + c) * spatial;
            for (std::size_t s = 0; s < spatial; ++s) {
                sum_gy += static_cast<double>(g[s]);
                sum_gy_xhat += static_cast<double>(g[s]) * static_cast<double>(xh[s]);
            }
        }
        ggamma.data[c] = static_cast<T>(sum_gy_xhat);
        gbeta.data[c] = static_cast<T>(sum_gy);
        const double scale = static_cast<double>(gamma.data[c]) * cache.inv_std[c] / m;
        for (std::size_t i = 0; i < n; ++i) {
            const T* g = gy.ptr() + (i * channels + c) * spatial;
            const T* xh = cache.xhat.ptr() + (i * channels + c) * spatial;
            T* dst = gx.ptr() + (i * channels + c) * spatial;
            for (std::size_t s = 0; s < spatial; ++s)
                dst[s] = static_cast<T>(scale * (m * static_cast<double>(g[s]) - sum_gy -
                                                 static_cast<double>(xh[s]) * sum_gy_xhat));
        }
    }
}

// ---------------------------------------------------------------------------
// Activations and output nonlinearities.
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> relu_forward(const TensorT<T>& x) {
    TensorT<T> y(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
    return y;
}

template <typename T>
TensorT<T> relu_backward(const TensorT<T>& x, const TensorT<T>& gy) {
    TensorT<T> gx(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) gx.data[i] = x.data[i] > T(0) ? gy.data[i] : T(0);
    return gx;
}

// Row-wise softmax with max subtraction; x is (N, K).
template <typename T>
TensorT<T> softmax_rows(const TensorT<T>& x) {
    if (x.rank() != 2) throw ShapeError("softmax_rows: input must be rank 2");
    const std::size_t n = x.dim(0), k = x.dim(1);
    TensorT<T> y(x.shape);
    for (std::size_t i = 0; i < n; ++i) {
        const T* row = x.ptr() + i * k;
        T* out = y.ptr() + i * k;
        T mx = row[0];
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            const double e = std::exp(static_cast<double>(row[j] - mx));
            out[j] = static_cast<T>(e);
            denom += e;
        }
        for (std::size_t j = 0; j < k; ++j) out[j] = static_cast<T>(static_cast<double>(out[j]) / denom);
    }
    return y;
}

template <typename T>
T sigmoid(T v) {
    if (v >= T(0)) {
        const T e = static_cast<T>(std::exp(-static_cast<double>(v)));
        return T(1) / (T(1) + e);
    }
    const T e = static_cast<T>(std::exp(static_cast<double>(v)));
    return e / (T(1) + e);
}

template <typename T>
TensorT<T> sigmoid_forward(const TensorT<T>& x) {
    TensorT<T> y(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = sigmoid(x.data[i]);
    return y;
}

}  // namespace signet::nn
