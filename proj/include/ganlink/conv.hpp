#pragma once

#include <cstddef>
#include <vector>

#include "ganlink/tensor.hpp"

namespace ganlink {

namespace kernels {

// Geometry of one convolution: X[N,in_c,in_h,in_w] -> Y[N,out_c,out_h,out_w]
// with a square kernel, cross-correlation convention (no kernel flip).
struct ConvGeom {
    std::size_t in_c, in_h, in_w;
    std::size_t out_c, k, stride, pad;
    std::size_t out_h, out_w;
};

inline ConvGeom make_conv_geom(std::size_t in_c, std::size_t in_h, std::size_t in_w,
                               std::size_t out_c, std::size_t k, std::size_t stride,
                               std::size_t pad) {
    if (k == 0 || stride == 0) throw ConfigError("convolution: kernel and stride must be positive");
    const std::size_t eff_h = in_h + 2 * pad;
    const std::size_t eff_w = in_w + 2 * pad;
    if (eff_h < k || eff_w < k || (eff_h - k) % stride != 0 || (eff_w - k) % stride != 0)
        throw ConfigError("convolution: non-integral output extent for input " +
                          std::to_string(in_h) + "x" + std::to_string(in_w) + ", k=" +
                          std::to_string(k) + ", stride=" + std::to_string(stride) + ", pad=" +
                          std::to_string(pad));
    return ConvGeom{in_c, in_h, in_w, out_c, k, stride, pad,
                    (eff_h - k) / stride + 1, (eff_w - k) / stride + 1};
}

// C[M x N] (+)= A[M x K] * B[K x N], all row-major.
template <typename T>
void matmul_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t kk, std::size_t n,
               bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        T* cr = c + i * n;
        if (!accumulate)
            for (std::size_t j = 0; j < n; ++j) cr[j] = T(0);
        const T* ar = a + i * kk;
        for (std::size_t l = 0; l < kk; ++l) {
            const T av = ar[l];
            const T* br = b + l * n;
            for (std::size_t j = 0; j < n; ++j) cr[j] += av * br[j];
        }
    }
}

// C[M x N] (+)= A^T * B where A is stored [K x M].
template <typename T>
void matmul_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t kk, std::size_t n,
               bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        T* cr = c + i * n;
        if (!accumulate)
            for (std::size_t j = 0; j < n; ++j) cr[j] = T(0);
        for (std::size_t l = 0; l < kk; ++l) {
            const T av = a[l * m + i];
            const T* br = b + l * n;
            for (std::size_t j = 0; j < n; ++j) cr[j] += av * br[j];
        }
    }
}

// C[M x N] (+)= A * B^T where B is stored [N x K]; row-by-row dot products.
template <typename T>
void matmul_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t kk, std::size_t n,
               bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* ar = a + i * kk;
        T* cr = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const T* br = b + j * kk;
            T acc = 0;
            for (std::size_t l = 0; l < kk; ++l) acc += ar[l] * br[l];
            if (accumulate)
                cr[j] += acc;
            else
                cr[j] = acc;
        }
    }
}

// cols[(in_c*k*k) x (out_h*out_w)] for one sample; zero padding.
template <typename T>
void im2col(const T* x, const ConvGeom& g, T* cols) {
    const std::size_t ohw = g.out_h * g.out_w;
    for (std::size_t c = 0; c < g.in_c; ++c) {
        const T* xc = x + c * g.in_h * g.in_w;
        for (std::size_t i = 0; i < g.k; ++i)
            for (std::size_t j = 0; j < g.k; ++j) {
                T* row = cols + ((c * g.k + i) * g.k + j) * ohw;
                for (std::size_t p = 0; p < g.out_h; ++p) {
                    const std::ptrdiff_t u =
                        static_cast<std::ptrdiff_t>(p * g.stride + i) -
                        static_cast<std::ptrdiff_t>(g.pad);
                    if (u < 0 || u >= static_cast<std::ptrdiff_t>(g.in_h)) {
                        for (std::size_t q = 0; q < g.out_w; ++q) row[p * g.out_w + q] = T(0);
                        continue;
                    }
                    const T* xr = xc + static_cast<std::size_t>(u) * g.in_w;
                    for (std::size_t q = 0; q < g.out_w; ++q) {
                        const std::ptrdiff_t v =
                            static_cast<std::ptrdiff_t>(q * g.stride + j) -
                            static_cast<std::ptrdiff_t>(g.pad);
                        row[p * g.out_w + q] =
                            (v < 0 || v >= static_cast<std::ptrdiff_t>(g.in_w))
                                ? T(0)
                                : xr[static_cast<std::size_t>(v)];
                    }
                }
            }
    }
}

// Adjoint of im2col: scatter-adds cols back into the (pre-zeroed) image.
template <typename T>
void col2im(const T* cols, const ConvGeom& g, T* x) {
    const std::size_t ohw = g.out_h * g.out_w;
    for (std::size_t c = 0; c < g.in_c; ++c) {
        T* xc = x + c * g.in_h * g.in_w;
        for (std::size_t i = 0; i < g.k; ++i)
            for (std::size_t j = 0; j < g.k; ++j) {
                const T* row = cols + ((c * g.k + i) * g.k + j) * ohw;
                for (std::size_t p = 0; p < g.out_h; ++p) {
                    const std::ptrdiff_t u =
                        static_cast<std::ptrdiff_t>(p * g.stride + i) -
                        static_cast<std::ptrdiff_t>(g.pad);
                    if (u < 0 || u >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
                    T* xr = xc + static_cast<std::size_t>(u) * g.in_w;
                    for (std::size_t q = 0; q < g.out_w; ++q) {
                        const std::ptrdiff_t v =
                            static_cast<std::ptrdiff_t>(q * g.stride + j) -
                            static_cast<std::ptrdiff_t>(g.pad);
                        if (v < 0 || v >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
                        xr[static_cast<std::size_t>(v)] += row[p * g.out_w + q];
                    }
                }
            }
    }
}

// Y[N,out_c,oh,ow] = K[out_c, in_c*k*k] x im2col(X_n), per sample.
template <typename T>
void conv_forward(const T* x, std::size_t n, const ConvGeom& g, const T* kernel, T* y) {
    const std::size_t ckk = g.in_c * g.k * g.k;
    const std::size_t ohw = g.out_h * g.out_w;
    std::vector<T> cols(ckk * ohw);
    for (std::size_t s = 0; s < n; ++s) {
        im2col(x + s * g.in_c * g.in_h * g.in_w, g, cols.data());
        matmul_nn(kernel, cols.data(), y + s * g.out_c * ohw, g.out_c, ckk, ohw, false);
    }
}

// dX = K^T x dY gathered through col2im. Also the forward pass of the
// transposed convolution.
template <typename T>
void conv_backward_input(const T* dy, std::size_t n, const ConvGeom& g, const T* kernel, T* dx,
                         bool accumulate) {
    const std::size_t ckk = g.in_c * g.k * g.k;
    const std::size_t ohw = g.out_h * g.out_w;
    const std::size_t in_sz = g.in_c * g.in_h * g.in_w;
    std::vector<T> cols(ckk * ohw);
    if (!accumulate) std::fill(dx, dx + n * in_sz, T(0));
    for (std::size_t s = 0; s < n; ++s) {
        matmul_tn(kernel, dy + s * g.out_c * ohw, cols.data(), ckk, g.out_c, ohw, false);
        col2im(cols.data(), g, dx + s * in_sz);
    }
}

// dK[out_c, in_c*k*k] = sum_n dY_n x im2col(X_n)^T.
template <typename T>
void conv_backward_kernel(const T* x, const T* dy, std::size_t n, const ConvGeom& g, T* dk,
                          bool accumulate) {
    const std::size_t ckk = g.in_c * g.k * g.k;
    const std::size_t ohw = g.out_h * g.out_w;
    std::vector<T> cols(ckk * ohw);
    if (!accumulate) std::fill(dk, dk + g.out_c * ckk, T(0));
    for (std::size_t s = 0; s < n; ++s) {
        im2col(x + s * g.in_c * g.in_h * g.in_w, g, cols.data());
        matmul_nt(dy + s * g.out_c * ohw, cols.data(), dk, g.out_c, ohw, ckk, true);
    }
}

} // namespace kernels

// Standard cross-correlation. input [N,C,H,W], kernels [F,C,k,k].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernels_t, std::size_t stride,
                 std::size_t padding) {
    if (input.ndim() != 4 || kernels_t.ndim() != 4 || input.dim(1) != kernels_t.dim(1) ||
        kernels_t.dim(2) != kernels_t.dim(3))
        throw UsageError("conv2d: incompatible shapes input " + shape_str(input.shape()) +
                         ", kernels " + shape_str(kernels_t.shape()));
    const std::size_t n = input.dim(0);
    const auto g = kernels::make_conv_geom(input.dim(1), input.dim(2), input.dim(3),
                                           kernels_t.dim(0), kernels_t.dim(2), stride, padding);
    Tensor<T> out = Tensor<T>::zeros({n, g.out_c, g.out_h, g.out_w});
    kernels::conv_forward(input.values().data(), n, g, kernels_t.values().data(),
                          out.values().data());

    Tape<T>* tape = Tape<T>::current();
    if (tape && (input.tracked() || kernels_t.tracked())) {
        auto xs = input.handle();
        auto ks = kernels_t.handle();
        auto os = out.handle();
        tape->record(os, [xs, ks, os, n, g]() {
            const T* dy = os->grad.data();
            if (detail::tracked(xs.get())) {
                auto dx = detail::grad_buf(xs.get());
                kernels::conv_backward_input(dy, n, g, ks->values.data(), dx.data(), true);
            }
            if (detail::tracked(ks.get())) {
                auto dk = detail::grad_buf(ks.get());
                kernels::conv_backward_kernel(xs->values.data(), dy, n, g, dk.data(), true);
            }
        });
    }
    return out;
}

// Transposed convolution, the linear adjoint of conv2d with identical
// stride/padding/kernel geometry. input [N,C,H,W], kernels [C,F,k,k],
// output [N,F,(H-1)*stride-2*pad+k, ...].
template <typename T>
Tensor<T> deconv2d(const Tensor<T>& input, const Tensor<T>& kernels_t, std::size_t stride,
                   std::size_t padding) {
    if (input.ndim() != 4 || kernels_t.ndim() != 4 || input.dim(1) != kernels_t.dim(0) ||
        kernels_t.dim(2) != kernels_t.dim(3))
        throw UsageError("deconv2d: incompatible shapes input " + shape_str(input.shape()) +
                         ", kernels " + shape_str(kernels_t.shape()));
    const std::size_t n = input.dim(0);
    const std::size_t k = kernels_t.dim(2);
    const std::size_t h = input.dim(2), w = input.dim(3);
    const std::size_t oh_raw = (h - 1) * stride + k;
    const std::size_t ow_raw = (w - 1) * stride + k;
    if (oh_raw < 2 * padding + 1 || ow_raw < 2 * padding + 1)
        throw ConfigError("deconv2d: padding too large for input " + shape_str(input.shape()));
    const std::size_t oh = oh_raw - 2 * padding;
    const std::size_t ow = ow_raw - 2 * padding;
    // In conv terms the deconv output plays the input role.
    const auto g = kernels::make_conv_geom(kernels_t.dim(1), oh, ow, input.dim(1), k, stride,
                                           padding);
    if (g.out_h != h || g.out_w != w)
        throw ConfigError("deconv2d: geometry does not invert cleanly for input " +
                          shape_str(input.shape()));
    Tensor<T> out = Tensor<T>::zeros({n, kernels_t.dim(1), oh, ow});
    kernels::conv_backward_input(input.values().data(), n, g, kernels_t.values().data(),
                                 out.values().data(), false);

    Tape<T>* tape = Tape<T>::current();
    if (tape && (input.tracked() || kernels_t.tracked())) {
        auto xs = input.handle();
        auto ks = kernels_t.handle();
        auto os = out.handle();
        tape->record(os, [xs, ks, os, n, g]() {
            const T* dy = os->grad.data(); // gradient w.r.t. deconv output = conv input role
            if (detail::tracked(xs.get())) {
                auto dx = detail::grad_buf(xs.get());
                std::vector<T> tmp(xs->values.size());
                kernels::conv_forward(dy, n, g, ks->values.data(), tmp.data());
                for (std::size_t i = 0; i < tmp.size(); ++i) dx[i] += tmp[i];
            }
            if (detail::tracked(ks.get())) {
                auto dk = detail::grad_buf(ks.get());
                kernels::conv_backward_kernel(dy, xs->values.data(), n, g, dk.data(), true);
            }
        });
    }
    return out;
}

// Running statistics of one batch normalization layer.
template <typename T>
struct BatchNormState {
    std::vector<T> running_mean;
    std::vector<T> running_var;

    static BatchNormState init(std::size_t channels) {
        BatchNormState s;
        s.running_mean.assign(channels, T(0));
        s.running_var.assign(channels, T(1));
        return s;
    }
};

// Per-channel batch normalization over [N,C] or [N,C,H,W]. Train mode
// normalizes with batch statistics (biased variance) and folds them into the
// running state as running = (1-momentum)*running + momentum*batch; infer mode
// normalizes with the running state.
template <typename T>
Tensor<T> batchnorm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                    Mode mode, BatchNormState<T>& state, T momentum = T(0.9),
                    T eps = T(1e-5)) {
    if (input.ndim() != 2 && input.ndim() != 4)
        throw UsageError("batchnorm: expects rank 2 or 4, got " + shape_str(input.shape()));
    const std::size_t n = input.dim(0);
    const std::size_t c = input.dim(1);
    const std::size_t plane = input.ndim() == 4 ? input.dim(2) * input.dim(3) : 1;
    if (gamma.size() != c || beta.size() != c || state.running_mean.size() != c)
        throw UsageError("batchnorm: parameter size mismatch for " + shape_str(input.shape()));
    if (mode == Mode::train && n < 2)
        throw UsageError("batchnorm: train mode needs a batch of at least 2, got " +
                         std::to_string(n));

    const std::size_t group = n * plane; // reduction group per channel
    std::vector<T> mean(c), inv_std(c), var(c);
    if (mode == Mode::train) {
        const T* x = input.values().data();
        for (std::size_t ch = 0; ch < c; ++ch) {
            double acc = 0;
            for (std::size_t s = 0; s < n; ++s) {
                const T* p = x + (s * c + ch) * plane;
                for (std::size_t i = 0; i < plane; ++i) acc += static_cast<double>(p[i]);
            }
            const double mu = acc / static_cast<double>(group);
            double vacc = 0;
            for (std::size_t s = 0; s < n; ++s) {
                const T* p = x + (s * c + ch) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    const double d = static_cast<double>(p[i]) - mu;
                    vacc += d * d;
                }
            }
            const double v = vacc / static_cast<double>(group);
            mean[ch] = static_cast<T>(mu);
            var[ch] = static_cast<T>(v);
            inv_std[ch] = static_cast<T>(1.0 / std::sqrt(v + static_cast<double>(eps)));
            state.running_mean[ch] =
                (T(1) - momentum) * state.running_mean[ch] + momentum * mean[ch];
            state.running_var[ch] = (T(1) - momentum) * state.running_var[ch] + momentum * var[ch];
        }
    } else {
        for (std::size_t ch = 0; ch < c; ++ch) {
            mean[ch] = state.running_mean[ch];
            var[ch] = state.running_var[ch];
            inv_std[ch] = static_cast<T>(
                1.0 / std::sqrt(static_cast<double>(var[ch]) + static_cast<double>(eps)));
        }
    }

    Tensor<T> out = Tensor<T>::zeros(input.shape());
    {
        const T* x = input.values().data();
        const T* gm = gamma.values().data();
        const T* bt = beta.values().data();
        T* y = out.values().data();
        for (std::size_t s = 0; s < n; ++s)
            for (std::size_t ch = 0; ch < c; ++ch) {
                const T m = mean[ch], is = inv_std[ch], gv = gm[ch], bv = bt[ch];
                const T* p = x + (s * c + ch) * plane;
                T* q = y + (s * c + ch) * plane;
                for (std::size_t i = 0; i < plane; ++i) q[i] = gv * (p[i] - m) * is + bv;
            }
    }

    Tape<T>* tape = Tape<T>::current();
    if (tape && (input.tracked() || gamma.tracked() || beta.tracked())) {
        auto xs = input.handle();
        auto gs = gamma.handle();
        auto bs = beta.handle();
        auto os = out.handle();
        const bool train = mode == Mode::train;
        tape->record(os, [xs, gs, bs, os, mean, inv_std, train, n, c, plane]() {
            const T* dy = os->grad.data();
            const T* x = xs->values.data();
            const std::size_t group = n * plane;
            for (std::size_t ch = 0; ch < c; ++ch) {
                const T m = mean[ch], is = inv_std[ch], gv = gs->values[ch];
                // per-channel reductions
                double sum_dy = 0, sum_dy_xhat = 0;
                for (std::size_t s = 0; s < n; ++s) {
                    const T* dp = dy + (s * c + ch) * plane;
                    const T* xp = x + (s * c + ch) * plane;
                    for (std::size_t i = 0; i < plane; ++i) {
                        sum_dy += static_cast<double>(dp[i]);
                        sum_dy_xhat +=
                            static_cast<double>(dp[i]) * static_cast<double>((xp[i] - m) * is);
                    }
                }
                if (detail::tracked(gs.get())) detail::grad_buf(gs.get())[ch] += static_cast<T>(sum_dy_xhat);
                if (detail::tracked(bs.get())) detail::grad_buf(bs.get())[ch] += static_cast<T>(sum_dy);
                if (detail::tracked(xs.get())) {
                    auto dx = detail::grad_buf(xs.get());
                    const T mean_dy = static_cast<T>(sum_dy / static_cast<double>(group));
                    const T mean_dy_xhat =
                        static_cast<T>(sum_dy_xhat / static_cast<double>(group));
                    for (std::size_t s = 0; s < n; ++s) {
                        const T* dp = dy + (s * c + ch) * plane;
                        const T* xp = x + (s * c + ch) * plane;
                        T* dxp = dx.data() + (s * c + ch) * plane;
                        for (std::size_t i = 0; i < plane; ++i) {
                            const T xhat = (xp[i] - m) * is;
                            if (train)
                                dxp[i] += gv * is * (dp[i] - mean_dy - xhat * mean_dy_xhat);
                            else
                                dxp[i] += gv * is * dp[i];
                        }
                    }
                }
            }
        });
    }
    return out;
}

} // namespace ganlink
