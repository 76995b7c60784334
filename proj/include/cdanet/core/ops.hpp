#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdanet/core/autograd.hpp"
#include "cdanet/core/resample.hpp"
#include "cdanet/core/tensor.hpp"

namespace cdanet::ops {

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <class T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

// Upper bound on the number of im2col elements held at once.
inline constexpr std::size_t kMaxColumnElements = std::size_t(1) << 23;

struct ConvGeometry {
    int cin, cout, groups, k, pad;
    Grid3 g;
    int cin_g() const { return cin / groups; }
    int cout_g() const { return cout / groups; }
    int taps() const { return k * k * k; }
    int rows() const { return cin_g() * taps(); }
    int slab_depth() const {
        const std::size_t per_plane = std::size_t(rows()) * g.h * g.w;
        return std::max(1, std::min(g.d, int(kMaxColumnElements / std::max<std::size_t>(per_plane, 1))));
    }
};

// Valid output range [lo, hi) along an axis of length n for tap offset `off`.
inline void valid_range(int n, int off, int& lo, int& hi) {
    lo = std::max(0, -off);
    hi = std::min(n, n - off);
    if (hi < lo) hi = lo;
}

// cols(row, voxel) for input channels [c0, c0+cin_g) and depth slab [d0, d1).
template <class T>
void im2col(const T* x, const ConvGeometry& geo, int c0, int d0, int d1, T* cols) {
    const Grid3 g = geo.g;
    const std::size_t plane = std::size_t(g.h) * g.w;
    const std::size_t ncol = std::size_t(d1 - d0) * plane;
    int row = 0;
    for (int ci = 0; ci < geo.cin_g(); ++ci) {
        const T* xc = x + std::size_t(c0 + ci) * g.numel();
        for (int kd = 0; kd < geo.k; ++kd)
            for (int kh = 0; kh < geo.k; ++kh)
                for (int kw = 0; kw < geo.k; ++kw, ++row) {
                    T* dst = cols + std::size_t(row) * ncol;
                    const int od = kd - geo.pad, oh = kh - geo.pad, ow = kw - geo.pad;
                    int wlo, whi;
                    valid_range(g.w, ow, wlo, whi);
                    for (int d = d0; d < d1; ++d) {
                        const int sd = d + od;
                        for (int h = 0; h < g.h; ++h) {
                            T* out = dst + (std::size_t(d - d0) * g.h + h) * g.w;
                            const int sh = h + oh;
                            if (sd < 0 || sd >= g.d || sh < 0 || sh >= g.h) {
                                std::fill(out, out + g.w, T(0));
                                continue;
                            }
                            const T* in = xc + (std::size_t(sd) * g.h + sh) * g.w + ow;
                            std::fill(out, out + wlo, T(0));
                            for (int w = wlo; w < whi; ++w) out[w] = in[w];
                            std::fill(out + whi, out + g.w, T(0));
                        }
                    }
                }
    }
}

template <class T>
void col2im_add(const T* cols, const ConvGeometry& geo, int c0, int d0, int d1, T* dx) {
    const Grid3 g = geo.g;
    const std::size_t plane = std::size_t(g.h) * g.w;
    const std::size_t ncol = std::size_t(d1 - d0) * plane;
    int row = 0;
    for (int ci = 0; ci < geo.cin_g(); ++ci) {
        T* xc = dx + std::size_t(c0 + ci) * g.numel();
        for (int kd = 0; kd < geo.k; ++kd)
            for (int kh = 0; kh < geo.k; ++kh)
                for (int kw = 0; kw < geo.k; ++kw, ++row) {
                    const T* src = cols + std::size_t(row) * ncol;
                    const int od = kd - geo.pad, oh = kh - geo.pad, ow = kw - geo.pad;
                    int wlo, whi;
                    valid_range(g.w, ow, wlo, whi);
                    for (int d = d0; d < d1; ++d) {
                        const int sd = d + od;
                        if (sd < 0 || sd >= g.d) continue;
                        for (int h = 0; h < g.h; ++h) {
                            const int sh = h + oh;
                            if (sh < 0 || sh >= g.h) continue;
                            const T* in = src + (std::size_t(d - d0) * g.h + h) * g.w;
                            T* out = xc + (std::size_t(sd) * g.h + sh) * g.w + ow;
                            for (int w = wlo; w < whi; ++w) out[w] += in[w];
                        }
                    }
                }
    }
}

// Depthwise (one input and one output channel per group) forward, direct form.
template <class T>
void depthwise_forward(const T* x, const T* wt, const ConvGeometry& geo, T* y) {
    const Grid3 g = geo.g;
    for (int c = 0; c < geo.cin; ++c) {
        const T* xc = x + std::size_t(c) * g.numel();
        T* yc = y + std::size_t(c) * g.numel();
        const T* wc = wt + std::size_t(c) * geo.taps();
        int t = 0;
        for (int kd = 0; kd < geo.k; ++kd)
            for (int kh = 0; kh < geo.k; ++kh)
                for (int kw = 0; kw < geo.k; ++kw, ++t) {
                    const T wv = wc[t];
                    const int od = kd - geo.pad, oh = kh - geo.pad, ow = kw - geo.pad;
                    int dlo, dhi, hlo, hhi, wlo, whi;
                    valid_range(g.d, od, dlo, dhi);
                    valid_range(g.h, oh, hlo, hhi);
                    valid_range(g.w, ow, wlo, whi);
                    for (int d = dlo; d < dhi; ++d)
                        for (int h = hlo; h < hhi; ++h) {
                            const T* in = xc + (std::size_t(d + od) * g.h + (h + oh)) * g.w + ow;
                            T* out = yc + (std::size_t(d) * g.h + h) * g.w;
                            for (int w = wlo; w < whi; ++w) out[w] += wv * in[w];
                        }
                }
    }
}

template <class T>
void depthwise_backward(const T* x, const T* wt, const T* gy, const ConvGeometry& geo, T* gx, T* gw) {
    const Grid3 g = geo.g;
    for (int c = 0; c < geo.cin; ++c) {
        const T* xc = x + std::size_t(c) * g.numel();
        const T* gyc = gy + std::size_t(c) * g.numel();
        T* gxc = gx ? gx + std::size_t(c) * g.numel() : nullptr;
        const T* wc = wt + std::size_t(c) * geo.taps();
        T* gwc = gw ? gw + std::size_t(c) * geo.taps() : nullptr;
        int t = 0;
        for (int kd = 0; kd < geo.k; ++kd)
            for (int kh = 0; kh < geo.k; ++kh)
                for (int kw = 0; kw < geo.k; ++kw, ++t) {
                    const T wv = wc[t];
                    const int od = kd - geo.pad, oh = kh - geo.pad, ow = kw - geo.pad;
                    int dlo, dhi, hlo, hhi, wlo, whi;
                    valid_range(g.d, od, dlo, dhi);
                    valid_range(g.h, oh, hlo, hhi);
                    valid_range(g.w, ow, wlo, whi);
                    T acc = 0;
                    for (int d = dlo; d < dhi; ++d)
                        for (int h = hlo; h < hhi; ++h) {
                            const std::size_t so = (std::size_t(d + od) * g.h + (h + oh)) * g.w + ow;
                            const std::size_t oo = (std::size_t(d) * g.h + h) * g.w;
                            const T* in = xc + so;
                            const T* go = gyc + oo;
                            for (int w = wlo; w < whi; ++w) acc += go[w] * in[w];
                            if (gxc) {
                                T* gi = gxc + so;
                                for (int w = wlo; w < whi; ++w) gi[w] += wv * go[w];
                            }
                        }
                    if (gwc) gwc[t] += acc;
                }
    }
}

}  // namespace detail

/// 3D convolution, stride 1, zero "same" padding, optional bias, grouped.
/// Weight shape is (cout, cin/groups, k, k, k).
template <class T>
Var<T> conv3d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int groups = 1) {
    const auto& xs = x->value.shape();
    const auto& ws = weight->value.shape();
    if (xs.size() != 4) throw std::invalid_argument("conv3d expects a (C,D,H,W) input, got " + shape_str(xs));
    if (ws.size() != 5 || ws[2] != ws[3] || ws[3] != ws[4] || ws[2] % 2 == 0)
        throw std::invalid_argument("conv3d weight must be (cout, cin/groups, k, k, k) with odd k");
    detail::ConvGeometry geo{xs[0], ws[0], groups, ws[2], ws[2] / 2, x->value.grid()};
    if (groups <= 0 || geo.cin % groups != 0 || geo.cout % groups != 0)
        throw std::invalid_argument("conv3d: channels " + std::to_string(geo.cin) + "->" + std::to_string(geo.cout) +
                                    " not divisible by groups " + std::to_string(groups));
    if (ws[1] != geo.cin_g())
        throw std::invalid_argument("conv3d: weight expects " + std::to_string(ws[1] * groups) + " input channels, got " +
                                    std::to_string(geo.cin));
    if (bias && bias->value.size() != std::size_t(geo.cout)) throw std::invalid_argument("conv3d: bias size mismatch");

    const std::size_t n = geo.g.numel();
    Tensor<T> y = Tensor<T>::stack(geo.cout, geo.g);
    const bool depthwise = geo.cin_g() == 1 && geo.cout_g() == 1 && geo.k > 1;
    const std::size_t wstride = std::size_t(geo.cout_g()) * geo.rows();

    if (depthwise) {
        detail::depthwise_forward(x->value.data(), weight->value.data(), geo, y.data());
    } else if (geo.k == 1) {
        for (int gi = 0; gi < groups; ++gi) {
            detail::ConstStridedMap<T> W(weight->value.data() + gi * wstride, geo.cout_g(), geo.cin_g(),
                                         Eigen::OuterStride<>(geo.cin_g()));
            detail::ConstStridedMap<T> X(x->value.data() + std::size_t(gi) * geo.cin_g() * n, geo.cin_g(), n,
                                         Eigen::OuterStride<>(n));
            detail::StridedMap<T> Y(y.data() + std::size_t(gi) * geo.cout_g() * n, geo.cout_g(), n,
                                    Eigen::OuterStride<>(n));
            Y.noalias() = W * X;
        }
    } else {
        const int slab = geo.slab_depth();
        const std::size_t plane = std::size_t(geo.g.h) * geo.g.w;
        std::vector<T> cols;
        for (int gi = 0; gi < groups; ++gi) {
            detail::ConstStridedMap<T> W(weight->value.data() + gi * wstride, geo.cout_g(), geo.rows(),
                                         Eigen::OuterStride<>(geo.rows()));
            for (int d0 = 0; d0 < geo.g.d; d0 += slab) {
                const int d1 = std::min(geo.g.d, d0 + slab);
                const std::size_t ncol = std::size_t(d1 - d0) * plane;
                cols.resize(std::size_t(geo.rows()) * ncol);
                detail::im2col(x->value.data(), geo, gi * geo.cin_g(), d0, d1, cols.data());
                detail::ConstStridedMap<T> C(cols.data(), geo.rows(), ncol, Eigen::OuterStride<>(ncol));
                detail::StridedMap<T> Y(y.data() + std::size_t(gi) * geo.cout_g() * n + std::size_t(d0) * plane,
                                        geo.cout_g(), ncol, Eigen::OuterStride<>(n));
                Y.noalias() = W * C;
            }
        }
    }
    if (bias) {
        for (int c = 0; c < geo.cout; ++c) {
            const T b = bias->value[c];
            T* yc = y.data() + std::size_t(c) * n;
            for (std::size_t i = 0; i < n; ++i) yc[i] += b;
        }
    }

    return make_result<T>(std::move(y), {x, weight, bias}, [x, weight, bias, geo, depthwise, wstride](Node<T>& out) {
        const std::size_t n = geo.g.numel();
        const Tensor<T>& gy = out.grad;
        if (bias && bias->requires_grad) {
            Tensor<T>& gb = bias->grad_buffer();
            for (int c = 0; c < geo.cout; ++c) {
                const T* g = gy.data() + std::size_t(c) * n;
                T acc = 0;
                for (std::size_t i = 0; i < n; ++i) acc += g[i];
                gb[c] += acc;
            }
        }
        T* gx = x->requires_grad ? x->grad_buffer().data() : nullptr;
        T* gw = weight->requires_grad ? weight->grad_buffer().data() : nullptr;
        if (!gx && !gw) return;
        if (depthwise) {
            detail::depthwise_backward(x->value.data(), weight->value.data(), gy.data(), geo, gx, gw);
            return;
        }
        if (geo.k == 1) {
            for (int gi = 0; gi < geo.groups; ++gi) {
                detail::ConstStridedMap<T> GY(gy.data() + std::size_t(gi) * geo.cout_g() * n, geo.cout_g(), n,
                                              Eigen::OuterStride<>(n));
                if (gw) {
                    detail::ConstStridedMap<T> X(x->value.data() + std::size_t(gi) * geo.cin_g() * n, geo.cin_g(), n,
                                                 Eigen::OuterStride<>(n));
                    detail::StridedMap<T> GW(gw + gi * wstride, geo.cout_g(), geo.cin_g(),
                                             Eigen::OuterStride<>(geo.cin_g()));
                    GW.noalias() += GY * X.transpose();
                }
                if (gx) {
                    detail::ConstStridedMap<T> W(weight->value.data() + gi * wstride, geo.cout_g(), geo.cin_g(),
                                                 Eigen::OuterStride<>(geo.cin_g()));
                    detail::StridedMap<T> GX(gx + std::size_t(gi) * geo.cin_g() * n, geo.cin_g(), n,
                                             Eigen::OuterStride<>(n));
                    GX.noalias() += W.transpose() * GY;
                }
            }
            return;
        }
        const int slab = geo.slab_depth();
        const std::size_t plane = std::size_t(geo.g.h) * geo.g.w;
        std::vector<T> cols;
        for (int gi = 0; gi < geo.groups; ++gi) {
            detail::ConstStridedMap<T> W(weight->value.data() + gi * wstride, geo.cout_g(), geo.rows(),
                                         Eigen::OuterStride<>(geo.rows()));
            for (int d0 = 0; d0 < geo.g.d; d0 += slab) {
                const int d1 = std::min(geo.g.d, d0 + slab);
                const std::size_t ncol = std::size_t(d1 - d0) * plane;
                cols.resize(std::size_t(geo.rows()) * ncol);
                detail::ConstStridedMap<T> GY(gy.data() + std::size_t(gi) * geo.cout_g() * n + std::size_t(d0) * plane,
                                              geo.cout_g(), ncol, Eigen::OuterStride<>(n));
                if (gw) {
                    detail::im2col(x->value.data(), geo, gi * geo.cin_g(), d0, d1, cols.data());
                    detail::ConstStridedMap<T> C(cols.data(), geo.rows(), ncol, Eigen::OuterStride<>(ncol));
                    detail::StridedMap<T> GW(gw + gi * wstride, geo.cout_g(), geo.rows(),
                                             Eigen::OuterStride<>(geo.rows()));
                    GW.noalias() += GY * C.transpose();
                }
                if (gx) {
                    detail::StridedMap<T> C(cols.data(), geo.rows(), ncol, Eigen::OuterStride<>(ncol));
                    C.noalias() = W.transpose() * GY;
                    detail::col2im_add(cols.data(), geo, gi * geo.cin_g(), d0, d1, gx);
                }
            }
        }
    });
}

/// 2x2x2 max pooling with stride 2; spatial dims must be even.
template <class T>
Var<T> max_pool2(const Var<T>& x) {
    const Grid3 g = x->value.grid();
    if (g.d % 2 || g.h % 2 || g.w % 2)
        throw std::invalid_argument("max_pool2: odd spatial dimension " + grid_str(g));
    const int C = x->value.channels();
    const Grid3 o{g.d / 2, g.h / 2, g.w / 2};
    Tensor<T> y = Tensor<T>::stack(C, o);
    std::vector<std::uint32_t> arg(y.size());
    std::size_t k = 0;
    for (int c = 0; c < C; ++c)
        for (int d = 0; d < o.d; ++d)
            for (int h = 0; h < o.h; ++h)
                for (int w = 0; w < o.w; ++w, ++k) {
                    std::size_t best = x->value.index(c, 2 * d, 2 * h, 2 * w);
                    T bv = x->value[best];
                    for (int dd = 0; dd < 2; ++dd)
                        for (int hh = 0; hh < 2; ++hh)
                            for (int ww = 0; ww < 2; ++ww) {
                                const std::size_t i = x->value.index(c, 2 * d + dd, 2 * h + hh, 2 * w + ww);
                                if (x->value[i] > bv) {
                                    bv = x->value[i];
                                    best = i;
                                }
                            }
                    y[k] = bv;
                    arg[k] = static_cast<std::uint32_t>(best);
                }
    return make_result<T>(std::move(y), {x}, [x, arg = std::move(arg)](Node<T>& out) {
        Tensor<T>& gx = x->grad_buffer();
        for (std::size_t i = 0; i < arg.size(); ++i) gx[arg[i]] += out.grad[i];
    });
}

/// Trilinear resampling of a feature map to `target`.
template <class T>
Var<T> resize(const Var<T>& x, Grid3 target) {
    const Grid3 in = x->value.grid();
    if (in == target) return x;
    return make_result<T>(resize_trilinear(x->value, target), {x}, [x, in](Node<T>& out) {
        x->accumulate(resize_trilinear_adjoint(out.grad, in));
    });
}

/// Per-channel normalisation over the spatial extent followed by an affine map.
template <class T>
Var<T> instance_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5)) {
    const int C = x->value.channels();
    const std::size_t n = x->value.grid().numel();
    if (gamma->value.size() != std::size_t(C) || beta->value.size() != std::size_t(C))
        throw std::invalid_argument("instance_norm: affine parameter size mismatch");
    Tensor<T> y(x->value.shape());
    Tensor<T> xhat(x->value.shape());
    std::vector<T> inv_std(C);
    for (int c = 0; c < C; ++c) {
        const T* xc = x->value.data() + std::size_t(c) * n;
        double mean = 0;
        for (std::size_t i = 0; i < n; ++i) mean += xc[i];
        mean /= double(n);
        double var = 0;
        for (std::size_t i = 0; i < n; ++i) var += (xc[i] - mean) * (xc[i] - mean);
        var /= double(n);
        inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + double(eps)));
        T* hc = xhat.data() + std::size_t(c) * n;
        T* yc = y.data() + std::size_t(c) * n;
        const T m = static_cast<T>(mean), gm = gamma->value[c], bt = beta->value[c];
        for (std::size_t i = 0; i < n; ++i) {
            hc[i] = (xc[i] - m) * inv_std[c];
            yc[i] = gm * hc[i] + bt;
        }
    }
    return make_result<T>(std::move(y), {x, gamma, beta},
                          [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), C, n](Node<T>& out) {
                              T* gx = x->requires_grad ? x->grad_buffer().data() : nullptr;
                              for (int c = 0; c < C; ++c) {
                                  const T* g = out.grad.data() + std::size_t(c) * n;
                                  const T* hc = xhat.data() + std::size_t(c) * n;
                                  T sum_g = 0, sum_gh = 0;
                                  for (std::size_t i = 0; i < n; ++i) {
                                      sum_g += g[i];
                                      sum_gh += g[i] * hc[i];
                                  }
                                  if (gamma->requires_grad) gamma->grad_buffer()[c] += sum_gh;
                                  if (beta->requires_grad) beta->grad_buffer()[c] += sum_g;
                                  if (!gx) continue;
                                  const T gm = gamma->value[c];
                                  const T scale = gm * inv_std[c] / T(n);
                                  T* gxc = gx + std::size_t(c) * n;
                                  for (std::size_t i = 0; i < n; ++i)
                                      gxc[i] += scale * (T(n) * g[i] - sum_g - hc[i] * sum_gh);
                              }
                          });
}

template <class T>
Var<T> relu(const Var<T>& x) {
    Tensor<T> y = x->value;
    for (auto& v : y.values()) v = v > T(0) ? v : T(0);
    return make_result<T>(std::move(y), {x}, [x](Node<T>& out) {
        Tensor<T>& gx = x->grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i)
            if (x->value[i] > T(0)) gx[i] += out.grad[i];
    });
}

template <class T>
T sigmoid_scalar(T v) {
    return v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
}

template <class T>
Var<T> sigmoid(const Var<T>& x) {
    Tensor<T> y = x->value;
    for (auto& v : y.values()) v = sigmoid_scalar(v);
    return make_result<T>(y, {x}, [x, y](Node<T>& out) {
        Tensor<T>& gx = x->grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += out.grad[i] * y[i] * (T(1) - y[i]);
    });
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    require_same_shape(a->value, b->value, "add");
    Tensor<T> y = a->value;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += b->value[i];
    return make_result<T>(std::move(y), {a, b}, [a, b](Node<T>& out) {
        a->accumulate(out.grad);
        b->accumulate(out.grad);
    });
}

template <class T>
Var<T> scale(const Var<T>& x, T s) {
    Tensor<T> y = x->value;
    for (auto& v : y.values()) v *= s;
    return make_result<T>(std::move(y), {x}, [x, s](Node<T>& out) {
        Tensor<T>& gx = x->grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += s * out.grad[i];
    });
}

/// Channel concatenation of rank-4 maps with equal grids.
template <class T>
Var<T> concat(const std::vector<Var<T>>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat of nothing");
    const Grid3 g = xs.front()->value.grid();
    int C = 0;
    for (const auto& x : xs) {
        if (x->value.grid() != g)
            throw std::invalid_argument("concat: spatial mismatch " + grid_str(g) + " vs " + grid_str(x->value.grid()));
        C += x->value.channels();
    }
    Tensor<T> y = Tensor<T>::stack(C, g);
    std::size_t off = 0;
    for (const auto& x : xs) {
        std::copy(x->value.data(), x->value.data() + x->value.size(), y.data() + off);
        off += x->value.size();
    }
    return make_result<T>(std::move(y), xs, [xs](Node<T>& out) {
        std::size_t off = 0;
        for (const auto& x : xs) {
            if (x->requires_grad) {
                Tensor<T>& gx = x->grad_buffer();
                for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += out.grad[off + i];
            }
            off += x->value.size();
        }
    });
}

/// x (C,D,H,W) times a single-channel map a (1,D,H,W), broadcast over channels.
template <class T>
Var<T> mul_broadcast(const Var<T>& x, const Var<T>& a) {
    const Grid3 g = x->value.grid();
    if (a->value.channels() != 1 || a->value.grid() != g)
        throw std::invalid_argument("mul_broadcast: gate must be (1," + grid_str(g) + ")");
    const int C = x->value.channels();
    const std::size_t n = g.numel();
    Tensor<T> y(x->value.shape());
    for (int c = 0; c < C; ++c)
        for (std::size_t i = 0; i < n; ++i) y[c * n + i] = x->value[c * n + i] * a->value[i];
    return make_result<T>(std::move(y), {x, a}, [x, a, C, n](Node<T>& out) {
        if (x->requires_grad) {
            Tensor<T>& gx = x->grad_buffer();
            for (int c = 0; c < C; ++c)
                for (std::size_t i = 0; i < n; ++i) gx[c * n + i] += out.grad[c * n + i] * a->value[i];
        }
        if (a->requires_grad) {
            Tensor<T>& ga = a->grad_buffer();
            for (int c = 0; c < C; ++c)
                for (std::size_t i = 0; i < n; ++i) ga[i] += out.grad[c * n + i] * x->value[c * n + i];
        }
    });
}

/// x (C,D,H,W) times per-channel gates s (C,1,1,1).
template <class T>
Var<T> scale_channels(const Var<T>& x, const Var<T>& s) {
    const int C = x->value.channels();
    if (s->value.size() != std::size_t(C)) throw std::invalid_argument("scale_channels: gate count mismatch");
    const std::size_t n = x->value.grid().numel();
    Tensor<T> y(x->value.shape());
    for (int c = 0; c < C; ++c)
        for (std::size_t i = 0; i < n; ++i) y[c * n + i] = x->value[c * n + i] * s->value[c];
    return make_result<T>(std::move(y), {x, s}, [x, s, C, n](Node<T>& out) {
        if (x->requires_grad) {
            Tensor<T>& gx = x->grad_buffer();
            for (int c = 0; c < C; ++c)
                for (std::size_t i = 0; i < n; ++i) gx[c * n + i] += out.grad[c * n + i] * s->value[c];
        }
        if (s->requires_grad) {
            Tensor<T>& gs = s->grad_buffer();
            for (int c = 0; c < C; ++c) {
                T acc = 0;
                for (std::size_t i = 0; i < n; ++i) acc += out.grad[c * n + i] * x->value[c * n + i];
                gs[c] += acc;
            }
        }
    });
}

/// Spatial mean per channel -> (C,1,1,1).
template <class T>
Var<T> global_avg_pool(const Var<T>& x) {
    const int C = x->value.channels();
    const std::size_t n = x->value.grid().numel();
    Tensor<T> y({C, 1, 1, 1});
    for (int c = 0; c < C; ++c) {
        T acc = 0;
        for (std::size_t i = 0; i < n; ++i) acc += x->value[c * n + i];
        y[c] = acc / T(n);
    }
    return make_result<T>(std::move(y), {x}, [x, C, n](Node<T>& out) {
        Tensor<T>& gx = x->grad_buffer();
        for (int c = 0; c < C; ++c) {
            const T g = out.grad[c] / T(n);
            for (std::size_t i = 0; i < n; ++i) gx[c * n + i] += g;
        }
    });
}

/// Spatial max per channel -> (C,1,1,1).
template <class T>
Var<T> global_max_pool(const Var<T>& x) {
    const int C = x->value.channels();
    const std::size_t n = x->value.grid().numel();
    Tensor<T> y({C, 1, 1, 1});
    std::vector<std::size_t> arg(C);
    for (int c = 0; c < C; ++c) {
        std::size_t best = c * n;
        for (std::size_t i = 0; i < n; ++i)
            if (x->value[c * n + i] > x->value[best]) best = c * n + i;
        arg[c] = best;
        y[c] = x->value[best];
    }
    return make_result<T>(std::move(y), {x}, [x, arg = std::move(arg)](Node<T>& out) {
        Tensor<T>& gx = x->grad_buffer();
        for (std::size_t c = 0; c < arg.size(); ++c) gx[arg[c]] += out.grad[c];
    });
}

/// Mean over channels -> (1,D,H,W).
template <class T>
Var<T> channel_mean(const Var<T>& x) {
    const int C = x->value.channels();
    const Grid3 g = x->value.grid();
    const std::size_t n = g.numel();
    Tensor<T> y = Tensor<T>::stack(1, g);
    for (int c = 0; c < C; ++c)
        for (std::size_t i = 0; i < n; ++i) y[i] += x->value[c * n + i];
    for (auto& v : y.values()) v /= T(C);
    return make_result<T>(std::move(y), {x}, [x, C, n](Node<T>& out) {
        Tensor<T>& gx = x->grad_buffer();
        for (int c = 0; c < C; ++c)
            for (std::size_t i = 0; i < n; ++i) gx[c * n + i] += out.grad[i] / T(C);
    });
}

/// Max over channels -> (1,D,H,W).
template <class T>
Var<T> channel_max(const Var<T>& x) {
    const int C = x->value.channels();
    const Grid3 g = x->value.grid();
    const std::size_t n = g.numel();
    Tensor<T> y = Tensor<T>::stack(1, g);
    std::vector<int> arg(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        T best = x->value[i];
        for (int c = 1; c < C; ++c)
            if (x->value[c * n + i] > best) {
                best = x->value[c * n + i];
                arg[i] = c;
            }
        y[i] = best;
    }
    return make_result<T>(std::move(y), {x}, [x, n, arg = std::move(arg)](Node<T>& out) {
        Tensor<T>& gx = x->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) gx[std::size_t(arg[i]) * n + i] += out.grad[i];
    });
}

/// Softmax across channels at every voxel.
template <class T>
Var<T> softmax_channels(const Var<T>& x) {
    const int C = x->value.channels();
    const std::size_t n = x->value.grid().numel();
    Tensor<T> y(x->value.shape());
    for (std::size_t i = 0; i < n; ++i) {
        T m = x->value[i];
        for (int c = 1; c < C; ++c) m = std::max(m, x->value[c * n + i]);
        T s = 0;
        for (int c = 0; c < C; ++c) {
            const T e = std::exp(x->value[c * n + i] - m);
            y[c * n + i] = e;
            s += e;
        }
        for (int c = 0; c < C; ++c) y[c * n + i] /= s;
    }
    return make_result<T>(y, {x}, [x, y, C, n](Node<T>& out) {
        Tensor<T>& gx = x->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) {
            T dot = 0;
            for (int c = 0; c < C; ++c) dot += out.grad[c * n + i] * y[c * n + i];
            for (int c = 0; c < C; ++c) gx[c * n + i] += y[c * n + i] * (out.grad[c * n + i] - dot);
        }
    });
}

/// sum_i w_i * s_i over scalar nodes.
template <class T>
Var<T> weighted_sum(const std::vector<Var<T>>& terms, const std::vector<T>& weights) {
    if (terms.size() != weights.size() || terms.empty()) throw std::invalid_argument("weighted_sum: size mismatch");
    Tensor<T> y({1});
    for (std::size_t i = 0; i < terms.size(); ++i) {
        if (terms[i]->value.size() != 1) throw std::invalid_argument("weighted_sum: terms must be scalars");
        y[0] += weights[i] * terms[i]->value[0];
    }
    return make_result<T>(std::move(y), terms, [terms, weights](Node<T>& out) {
        for (std::size_t i = 0; i < terms.size(); ++i) {
            if (!terms[i]->requires_grad) continue;
            terms[i]->grad_buffer()[0] += weights[i] * out.grad[0];
        }
    });
}

}  // namespace cdanet::ops
