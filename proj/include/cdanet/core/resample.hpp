#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "cdanet/core/tensor.hpp"

namespace cdanet {

/// Linear interpolation weights along one axis, half-pixel-centre convention
/// (align_corners = false).
struct AxisInterp {
    std::vector<int> lo, hi;
    std::vector<double> frac;

    static AxisInterp make(int in, int out) {
        if (in <= 0 || out <= 0) throw std::invalid_argument("interpolation axis must be positive");
        AxisInterp a;
        a.lo.resize(out);
        a.hi.resize(out);
        a.frac.resize(out);
        const double scale = double(in) / double(out);
        for (int o = 0; o < out; ++o) {
            double src = (o + 0.5) * scale - 0.5;
            if (src < 0) src = 0;
            int i0 = static_cast<int>(std::floor(src));
            if (i0 >= in - 1) {
                a.lo[o] = a.hi[o] = in - 1;
                a.frac[o] = 0;
            } else {
                a.lo[o] = i0;
                a.hi[o] = i0 + 1;
                a.frac[o] = src - i0;
            }
        }
        return a;
    }
};

namespace detail {

// Views a tensor whose last three dims are (D,H,W) as (outer, n_axis, inner)
// for the chosen spatial axis (0 = D, 1 = H, 2 = W).
struct AxisLayout {
    std::size_t outer, n, inner;
};

inline AxisLayout axis_layout(const Shape& s, int axis) {
    const std::size_t r = s.size();
    const std::size_t ax = r - 3 + std::size_t(axis);
    AxisLayout l{1, std::size_t(s[ax]), 1};
    for (std::size_t i = 0; i < ax; ++i) l.outer *= std::size_t(s[i]);
    for (std::size_t i = ax + 1; i < r; ++i) l.inner *= std::size_t(s[i]);
    return l;
}

template <class T>
Tensor<T> interp_axis(const Tensor<T>& x, int axis, const AxisInterp& ip) {
    Shape os = x.shape();
    const int out_n = static_cast<int>(ip.lo.size());
    os[os.size() - 3 + axis] = out_n;
    const auto l = axis_layout(x.shape(), axis);
    Tensor<T> y(os);
    const T* src = x.data();
    T* dst = y.data();
    for (std::size_t o = 0; o < l.outer; ++o) {
        const T* s = src + o * l.n * l.inner;
        T* d = dst + o * std::size_t(out_n) * l.inner;
        for (int k = 0; k < out_n; ++k) {
            const T f = static_cast<T>(ip.frac[k]);
            const T* a = s + std::size_t(ip.lo[k]) * l.inner;
            const T* b = s + std::size_t(ip.hi[k]) * l.inner;
            T* dk = d + std::size_t(k) * l.inner;
            for (std::size_t i = 0; i < l.inner; ++i) dk[i] = a[i] + f * (b[i] - a[i]);
        }
    }
    return y;
}

// Adjoint of interp_axis: maps a gradient on the output axis back to the input axis.
template <class T>
Tensor<T> interp_axis_adjoint(const Tensor<T>& gy, int axis, const AxisInterp& ip, int in_n) {
    Shape is = gy.shape();
    is[is.size() - 3 + axis] = in_n;
    const auto l = axis_layout(gy.shape(), axis);
    const int out_n = static_cast<int>(l.n);
    Tensor<T> gx(is);
    const T* src = gy.data();
    T* dst = gx.data();
    for (std::size_t o = 0; o < l.outer; ++o) {
        const T* s = src + o * std::size_t(out_n) * l.inner;
        T* d = dst + o * std::size_t(in_n) * l.inner;
        for (int k = 0; k < out_n; ++k) {
            const T f = static_cast<T>(ip.frac[k]);
            const T* sk = s + std::size_t(k) * l.inner;
            T* a = d + std::size_t(ip.lo[k]) * l.inner;
            T* b = d + std::size_t(ip.hi[k]) * l.inner;
            for (std::size_t i = 0; i < l.inner; ++i) {
                a[i] += (T(1) - f) * sk[i];
                b[i] += f * sk[i];
            }
        }
    }
    return gx;
}

}  // namespace detail

/// Trilinear resampling of the trailing (D,H,W) dims to `out`.
template <class T>
Tensor<T> resize_trilinear(const Tensor<T>& x, Grid3 out) {
    const Grid3 in = x.grid();
    if (out.d <= 0 || out.h <= 0 || out.w <= 0) throw std::invalid_argument("resize target must be positive");
    if (in == out) return x;
    Tensor<T> y = detail::interp_axis(x, 2, AxisInterp::make(in.w, out.w));
    y = detail::interp_axis(y, 1, AxisInterp::make(in.h, out.h));
    return detail::interp_axis(y, 0, AxisInterp::make(in.d, out.d));
}

/// Adjoint of resize_trilinear (gradient w.r.t. its input).
template <class T>
Tensor<T> resize_trilinear_adjoint(const Tensor<T>& gy, Grid3 in) {
    const Grid3 out = gy.grid();
    if (in == out) return gy;
    Tensor<T> g = detail::interp_axis_adjoint(gy, 0, AxisInterp::make(in.d, out.d), in.d);
    g = detail::interp_axis_adjoint(g, 1, AxisInterp::make(in.h, out.h), in.h);
    return detail::interp_axis_adjoint(g, 2, AxisInterp::make(in.w, out.w), in.w);
}

/// Nearest-neighbour source index, half-pixel-centre convention.
inline int nearest_source(int o, int in, int out) {
    const int i = static_cast<int>(std::floor((o + 0.5) * double(in) / double(out)));
    return std::clamp(i, 0, in - 1);
}

/// Nearest-neighbour resampling of the trailing (D,H,W) dims; never invents values.
template <class T>
Tensor<T> resize_nearest(const Tensor<T>& x, Grid3 out) {
    const Grid3 in = x.grid();
    if (out.d <= 0 || out.h <= 0 || out.w <= 0) throw std::invalid_argument("resize target must be positive");
    if (in == out) return x;
    Shape os = x.shape();
    const std::size_t r = os.size();
    os[r - 3] = out.d;
    os[r - 2] = out.h;
    os[r - 1] = out.w;
    Tensor<T> y(os);
    std::vector<int> sd(out.d), sh(out.h), sw(out.w);
    for (int i = 0; i < out.d; ++i) sd[i] = nearest_source(i, in.d, out.d);
    for (int i = 0; i < out.h; ++i) sh[i] = nearest_source(i, in.h, out.h);
    for (int i = 0; i < out.w; ++i) sw[i] = nearest_source(i, in.w, out.w);
    const std::size_t outer = x.size() / in.numel();
    for (std::size_t c = 0; c < outer; ++c) {
        const T* s = x.data() + c * in.numel();
        T* d = y.data() + c * out.numel();
        for (int z = 0; z < out.d; ++z)
            for (int yy = 0; yy < out.h; ++yy) {
                const T* row = s + (std::size_t(sd[z]) * in.h + sh[yy]) * in.w;
                T* drow = d + (std::size_t(z) * out.h + yy) * out.w;
                for (int xx = 0; xx < out.w; ++xx) drow[xx] = row[sw[xx]];
            }
    }
    return y;
}

}  // namespace cdanet
