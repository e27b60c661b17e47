#pragma once

// Direct 2-D convolution (cross-correlation convention), stride 1, zero
// padding k/2, so spatial size is preserved. Weight layout (out_c, in_c, k, k)
// stored in a TensorT; bias layout (1, out_c, 1, 1). Inner loops run along
// rows of contiguous memory so the compiler can vectorize them.

#include "fusesr/tensor.hpp"

namespace fusesr {

template <typename T>
void require_conv_shapes(const TensorT<T>& x, const TensorT<T>& w) {
    if (w.h != w.w || w.h % 2 == 0)
        throw ShapeError("conv2d: kernel must be square and odd, got " +
                         w.shape_str());
    if (x.c != w.c)
        throw ShapeError("conv2d: input channels " + std::to_string(x.c) +
                         " != weight in_channels " + std::to_string(w.c));
}

template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& w,
                  const TensorT<T>* bias = nullptr) {
    require_conv_shapes(x, w);
    const int64_t oc = w.b, ic = w.c, k = w.h, pad = k / 2;
    if (bias && (bias->c != oc || bias->numel() != oc))
        throw ShapeError("conv2d: bias shape " + bias->shape_str() +
                         " != (1," + std::to_string(oc) + ",1,1)");
    TensorT<T> y(x.b, oc, x.h, x.w);
    for (int64_t bi = 0; bi < x.b; ++bi)
        for (int64_t o = 0; o < oc; ++o) {
            T* yp = y.plane(bi, o);
            if (bias) {
                const T bv = bias->data[static_cast<size_t>(o)];
                for (int64_t i = 0; i < x.h * x.w; ++i) yp[i] = bv;
            }
            for (int64_t i = 0; i < ic; ++i) {
                const T* xp = x.plane(bi, i);
                for (int64_t ky = 0; ky < k; ++ky)
                    for (int64_t kx = 0; kx < k; ++kx) {
                        const T wv = w.at(o, i, ky, kx);
                        const int64_t dy = ky - pad, dx = kx - pad;
                        const int64_t y_lo = std::max<int64_t>(0, -dy);
                        const int64_t y_hi = std::min(x.h, x.h - dy);
                        const int64_t x_lo = std::max<int64_t>(0, -dx);
                        const int64_t x_hi = std::min(x.w, x.w - dx);
                        for (int64_t yy = y_lo; yy < y_hi; ++yy) {
                            T* yr = yp + yy * x.w;
                            const T* xr = xp + (yy + dy) * x.w + dx;
                            for (int64_t xx = x_lo; xx < x_hi; ++xx)
                                yr[xx] += wv * xr[xx];
                        }
                    }
            }
        }
    return y;
}

template <typename T>
void conv2d_backward(const TensorT<T>& grad_y, const TensorT<T>& x,
                     const TensorT<T>& w, TensorT<T>& grad_x,
                     TensorT<T>& grad_w, TensorT<T>* grad_b = nullptr) {
    require_conv_shapes(x, w);
    const int64_t oc = w.b, ic = w.c, k = w.h, pad = k / 2;
    grad_x = TensorT<T>(x.b, x.c, x.h, x.w);
    grad_w = TensorT<T>(w.b, w.c, w.h, w.w);
    if (grad_b) *grad_b = TensorT<T>(1, oc, 1, 1);
    for (int64_t bi = 0; bi < x.b; ++bi)
        for (int64_t o = 0; o < oc; ++o) {
            const T* gp = grad_y.plane(bi, o);
            if (grad_b) {
                T acc = 0;
                for (int64_t i = 0; i < x.h * x.w; ++i) acc += gp[i];
                grad_b->data[static_cast<size_t>(o)] += acc;
            }
            for (int64_t i = 0; i < ic; ++i) {
                const T* xp = x.plane(bi, i);
                T* gxp = grad_x.plane(bi, i);
                for (int64_t ky = 0; ky < k; ++ky)
                    for (int64_t kx = 0; kx < k; ++kx) {
                        const T wv = w.at(o, i, ky, kx);
                        const int64_t dy = ky - pad, dx = kx - pad;
                        const int64_t y_lo = std::max<int64_t>(0, -dy);
                        const int64_t y_hi = std::min(x.h, x.h - dy);
                        const int64_t x_lo = std::max<int64_t>(0, -dx);
                        const int64_t x_hi = std::min(x.w, x.w - dx);
                        T wacc = 0;
                        for (int64_t yy = y_lo; yy < y_hi; ++yy) {
                            const T* gr = gp + yy * x.w;
                            const T* xr = xp + (yy + dy) * x.w + dx;
                            T* gxr = gxp + (yy + dy) * x.w + dx;
                            for (int64_t xx = x_lo; xx < x_hi; ++xx) {
                                wacc += gr[xx] * xr[xx];
                                gxr[xx] += wv * gr[xx];
                            }
                        }
                        grad_w.at(o, i, ky, kx) += wacc;
                    }
            }
        }
}

// Depthwise conv: weight (c, 1, k, k), each channel filtered independently.
template <typename T>
TensorT<T> depthwise_conv2d(const TensorT<T>& x, const TensorT<T>& w) {
    if (w.c != 1 || w.b != x.c || w.h != w.w || w.h % 2 == 0)
        throw ShapeError("depthwise_conv2d: weight must be (c,1,k,k) with odd "
                         "k, got " +
                         w.shape_str() + " for input " + x.shape_str());
    const int64_t k = w.h, pad = k / 2;
    TensorT<T> y(x.b, x.c, x.h, x.w);
    for (int64_t bi = 0; bi < x.b; ++bi)
        for (int64_t ci = 0; ci < x.c; ++ci) {
            const T* xp = x.plane(bi, ci);
            T* yp = y.plane(bi, ci);
            for (int64_t ky = 0; ky < k; ++ky)
                for (int64_t kx = 0; kx < k; ++kx) {
                    const T wv = w.at(ci, 0, ky, kx);
                    const int64_t dy = ky - pad, dx = kx - pad;
                    const int64_t y_lo = std::max<int64_t>(0, -dy);
                    const int64_t y_hi = std::min(x.h, x.h - dy);
                    const int64_t x_lo = std::max<int64_t>(0, -dx);
                    const int64_t x_hi = std::min(x.w, x.w - dx);
                    for (int64_t yy = y_lo; yy < y_hi; ++yy) {
                        T* yr = yp + yy * x.w;
                        const T* xr = xp + (yy + dy) * x.w + dx;
                        for (int64_t xx = x_lo; xx < x_hi; ++xx)
                            yr[xx] += wv * xr[xx];
                    }
                }
        }
    return y;
}

template <typename T>
void depthwise_conv2d_backward(const TensorT<T>& grad_y, const TensorT<T>& x,
                               const TensorT<T>& w, TensorT<T>& grad_x,
                               TensorT<T>& grad_w) {
    const int64_t k = w.h, pad = k / 2;
    grad_x = TensorT<T>(x.b, x.c, x.h, x.w);
    grad_w = TensorT<T>(w.b, w.c, w.h, w.w);
    for (int64_t bi = 0; bi < x.b; ++bi)
        for (int64_t ci = 0; ci < x.c; ++ci) {
            const T* gp = grad_y.plane(bi, ci);
            const T* xp = x.plane(bi, ci);
            T* gxp = grad_x.plane(bi, ci);
            for (int64_t ky = 0; ky < k; ++ky)
                for (int64_t kx = 0; kx < k; ++kx) {
                    const T wv = w.at(ci, 0, ky, kx);
                    const int64_t dy = ky - pad, dx = kx - pad;
                    const int64_t y_lo = std::max<int64_t>(0, -dy);
                    const int64_t y_hi = std::min(x.h, x.h - dy);
                    const int64_t x_lo = std::max<int64_t>(0, -dx);
                    const int64_t x_hi = std::min(x.w, x.w - dx);
                    T wacc = 0;
                    for (int64_t yy = y_lo; yy < y_hi; ++yy) {
                        const T* gr = gp + yy * x.w;
                        const T* xr = xp + (yy + dy) * x.w + dx;
                        T* gxr = gxp + (yy + dy) * x.w + dx;
                        for (int64_t xx = x_lo; xx < x_hi; ++xx) {
                            wacc += gr[xx] * xr[xx];
                            gxr[xx] += wv * gr[xx];
                        }
                    }
                    grad_w.at(ci, 0, ky, kx) += wacc;
                }
        }
}

// He-normal init: stddev sqrt(2 / fan_in), fan_in = in_c * k * k.
template <typename T>
void he_init(TensorT<T>& w, Rng& rng) {
    const double fan_in =
        static_cast<double>(w.c) * static_cast<double>(w.h * w.w);
    const double sd = std::sqrt(2.0 / fan_in);
    for (auto& v : w.data) v = static_cast<T>(sd * rng.normal());
}

}  // namespace fusesr
