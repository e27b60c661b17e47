#pragma once

// Structural and elementwise tensor ops with explicit backward passes.
// Forward functions return new tensors; backward functions map the upstream
// gradient to input gradients. Pure data-movement ops (shuffle, concat) are
// bitwise lossless.

#include <array>
#include <cmath>
#include <vector>

#include "fusesr/tensor.hpp"

namespace fusesr {

inline void require_scale(int r) {
    if (r != 1 && r != 2 && r != 4 && r != 8)
        throw ShapeError("scale factor must be one of {1,2,4,8}, got " +
                         std::to_string(r));
}

// Space-to-depth. Output channel ordering is (c, dy, dx):
//   out[b, c*r*r + dy*r + dx, y, x] = in[b, c, y*r + dy, x*r + dx]
template <typename T>
TensorT<T> pixel_unshuffle(const TensorT<T>& in, int r) {
    require_scale(r);
    if (in.h % r != 0 || in.w % r != 0)
        throw ShapeError("pixel_unshuffle: spatial dims " + in.shape_str() +
                         " not divisible by r=" + std::to_string(r));
    TensorT<T> out(in.b, in.c * r * r, in.h / r, in.w / r);
    for (int64_t bi = 0; bi < in.b; ++bi)
        for (int64_t ci = 0; ci < in.c; ++ci)
            for (int dy = 0; dy < r; ++dy)
                for (int dx = 0; dx < r; ++dx) {
                    const int64_t oc = (ci * r + dy) * r + dx;
                    for (int64_t y = 0; y < out.h; ++y) {
                        const T* src = in.plane(bi, ci) + (y * r + dy) * in.w;
                        T* dst = out.plane(bi, oc) + y * out.w;
                        for (int64_t x = 0; x < out.w; ++x)
                            dst[x] = src[x * r + dx];
                    }
                }
    return out;
}

// Depth-to-space, exact inverse of pixel_unshuffle with the same ordering.
template <typename T>
TensorT<T> pixel_shuffle(const TensorT<T>& in, int r) {
    require_scale(r);
    if (in.c % (r * r) != 0)
        throw ShapeError("pixel_shuffle: channels " + in.shape_str() +
                         " not divisible by r^2=" + std::to_string(r * r));
    TensorT<T> out(in.b, in.c / (r * r), in.h * r, in.w * r);
    for (int64_t bi = 0; bi < out.b; ++bi)
        for (int64_t ci = 0; ci < out.c; ++ci)
            for (int dy = 0; dy < r; ++dy)
                for (int dx = 0; dx < r; ++dx) {
                    const int64_t ic = (ci * r + dy) * r + dx;
                    for (int64_t y = 0; y < in.h; ++y) {
                        const T* src = in.plane(bi, ic) + y * in.w;
                        T* dst = out.plane(bi, ci) + (y * r + dy) * out.w;
                        for (int64_t x = 0; x < in.w; ++x)
                            dst[x * r + dx] = src[x];
                    }
                }
    return out;
}

// Gradients of pure permutations are the inverse permutation.
template <typename T>
TensorT<T> pixel_unshuffle_backward(const TensorT<T>& grad_out, int r) {
    return pixel_shuffle(grad_out, r);
}
template <typename T>
TensorT<T> pixel_shuffle_backward(const TensorT<T>& grad_out, int r) {
    return pixel_unshuffle(grad_out, r);
}

template <typename T>
TensorT<T> concat_channels(const std::vector<const TensorT<T>*>& parts) {
    if (parts.empty()) throw ShapeError("concat_channels: no inputs");
    int64_t total_c = 0;
    for (const auto* p : parts) {
        if (p->b != parts[0]->b || p->h != parts[0]->h || p->w != parts[0]->w)
            throw ShapeError("concat_channels: mismatched shapes " +
                             parts[0]->shape_str() + " vs " + p->shape_str());
        total_c += p->c;
    }
    TensorT<T> out(parts[0]->b, total_c, parts[0]->h, parts[0]->w);
    for (int64_t bi = 0; bi < out.b; ++bi) {
        int64_t oc = 0;
        for (const auto* p : parts)
            for (int64_t ci = 0; ci < p->c; ++ci, ++oc)
                std::copy(p->plane(bi, ci), p->plane(bi, ci) + p->h * p->w,
                          out.plane(bi, oc));
    }
    return out;
}

template <typename T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b) {
    return concat_channels<T>({&a, &b});
}

// Splits grad_out back into per-input gradients given each input's channel
// count, inverting concat_channels.
template <typename T>
std::vector<TensorT<T>> split_channels(const TensorT<T>& t,
                                       const std::vector<int64_t>& counts) {
    int64_t total = 0;
    for (int64_t c : counts) total += c;
    if (total != t.c)
        throw ShapeError("split_channels: counts sum " + std::to_string(total) +
                         " != channels " + std::to_string(t.c));
    std::vector<TensorT<T>> parts;
    parts.reserve(counts.size());
    int64_t base = 0;
    for (int64_t cc : counts) {
        TensorT<T> p(t.b, cc, t.h, t.w);
        for (int64_t bi = 0; bi < t.b; ++bi)
            for (int64_t ci = 0; ci < cc; ++ci)
                std::copy(t.plane(bi, base + ci),
                          t.plane(bi, base + ci) + t.h * t.w, p.plane(bi, ci));
        parts.push_back(std::move(p));
        base += cc;
    }
    return parts;
}

// ---- elementwise ----

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
    require_same_shape("add", a, b);
    TensorT<T> out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
    require_same_shape("sub", a, b);
    TensorT<T> out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

template <typename T>
TensorT<T> scale(const TensorT<T>& a, T s) {
    TensorT<T> out = a;
    for (auto& v : out.data) v *= s;
    return out;
}

template <typename T>
TensorT<T> elementwise_mul(const TensorT<T>& a, const TensorT<T>& b) {
    require_same_shape("elementwise_mul", a, b);
    TensorT<T> out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
    return out;
}

// d(a*b)/da = b, d(a*b)/db = a.
template <typename T>
void elementwise_mul_backward(const TensorT<T>& grad_out, const TensorT<T>& a,
                              const TensorT<T>& b, TensorT<T>& grad_a,
                              TensorT<T>& grad_b) {
    grad_a = elementwise_mul(grad_out, b);
    grad_b = elementwise_mul(grad_out, a);
}

// Divisor is clamped from below to eps, so demodulation by near-black (or
// degenerate negative) factors stays finite: effective divisor = max(d, eps).
template <typename T>
T clamp_divisor(T d, T eps) {
    return d > eps ? d : eps;
}

template <typename T>
TensorT<T> elementwise_div(const TensorT<T>& a, const TensorT<T>& b,
                           T eps = T(1e-4)) {
    require_same_shape("elementwise_div", a, b);
    TensorT<T> out = a;
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] /= clamp_divisor(b.data[i], eps);
    return out;
}

// Inside the clamp region the effective divisor is constant, so its gradient
// is zero there.
template <typename T>
void elementwise_div_backward(const TensorT<T>& grad_out, const TensorT<T>& a,
                              const TensorT<T>& b, TensorT<T>& grad_a,
                              TensorT<T>& grad_b, T eps = T(1e-4)) {
    require_same_shape("elementwise_div_backward", a, b);
    grad_a = TensorT<T>(a.b, a.c, a.h, a.w);
    grad_b = TensorT<T>(a.b, a.c, a.h, a.w);
    for (size_t i = 0; i < a.data.size(); ++i) {
        const T d = clamp_divisor(b.data[i], eps);
        grad_a.data[i] = grad_out.data[i] / d;
        grad_b.data[i] = b.data[i] > eps
                             ? -grad_out.data[i] * a.data[i] / (d * d)
                             : T(0);
    }
}

template <typename T>
TensorT<T> relu(const TensorT<T>& x) {
    TensorT<T> out = x;
    for (auto& v : out.data) v = v > T(0) ? v : T(0);
    return out;
}

// Subgradient at exactly zero is defined as zero.
template <typename T>
TensorT<T> relu_backward(const TensorT<T>& grad_out, const TensorT<T>& x) {
    require_same_shape("relu_backward", grad_out, x);
    TensorT<T> out = grad_out;
    for (size_t i = 0; i < out.data.size(); ++i)
        if (!(x.data[i] > T(0))) out.data[i] = T(0);
    return out;
}

// ---- warp ----

// Samples image at (x + motion_x, y + motion_y) per output pixel. Motion has
// 2 channels (x displacement, y displacement) in the image's own pixel units.
// Continuous sample coordinates clamp to the valid range (edge clamp).
template <typename T>
TensorT<T> warp_bilinear(const TensorT<T>& image, const TensorT<T>& motion) {
    if (motion.c != 2 || motion.b != image.b || motion.h != image.h ||
        motion.w != image.w)
        throw ShapeError("warp_bilinear: motion must be (b,2,h,w) matching "
                         "image, got " +
                         motion.shape_str() + " for image " + image.shape_str());
    TensorT<T> out(image.b, image.c, image.h, image.w);
    const int64_t hh = image.h, ww = image.w;
    for (int64_t bi = 0; bi < image.b; ++bi) {
        const T* mx = motion.plane(bi, 0);
        const T* my = motion.plane(bi, 1);
        for (int64_t y = 0; y < hh; ++y)
            for (int64_t x = 0; x < ww; ++x) {
                const int64_t pi = y * ww + x;
                double sx = static_cast<double>(x) + mx[pi];
                double sy = static_cast<double>(y) + my[pi];
                sx = std::min(std::max(sx, 0.0), static_cast<double>(ww - 1));
                sy = std::min(std::max(sy, 0.0), static_cast<double>(hh - 1));
                const int64_t x0 = static_cast<int64_t>(std::floor(sx));
                const int64_t y0 = static_cast<int64_t>(std::floor(sy));
                const int64_t x1 = std::min(x0 + 1, ww - 1);
                const int64_t y1 = std::min(y0 + 1, hh - 1);
                const T fx = static_cast<T>(sx - static_cast<double>(x0));
                const T fy = static_cast<T>(sy - static_cast<double>(y0));
                for (int64_t ci = 0; ci < image.c; ++ci) {
                    const T* p = image.plane(bi, ci);
                    const T v00 = p[y0 * ww + x0];
                    const T v01 = p[y0 * ww + x1];
                    const T v10 = p[y1 * ww + x0];
                    const T v11 = p[y1 * ww + x1];
                    out.plane(bi, ci)[pi] =
                        (T(1) - fy) * ((T(1) - fx) * v00 + fx * v01) +
                        fy * ((T(1) - fx) * v10 + fx * v11);
                }
            }
    }
    return out;
}

// Gradient w.r.t. the sampled image (motion is data, not a trained input):
// scatter each output pixel's bilinear weights back to its four taps.
template <typename T>
TensorT<T> warp_bilinear_backward(const TensorT<T>& grad_out,
                                  const TensorT<T>& image,
                                  const TensorT<T>& motion) {
    TensorT<T> grad(image.b, image.c, image.h, image.w);
    const int64_t hh = image.h, ww = image.w;
    for (int64_t bi = 0; bi < image.b; ++bi) {
        const T* mx = motion.plane(bi, 0);
        const T* my = motion.plane(bi, 1);
        for (int64_t y = 0; y < hh; ++y)
            for (int64_t x = 0; x < ww; ++x) {
                const int64_t pi = y * ww + x;
                double sx = static_cast<double>(x) + mx[pi];
                double sy = static_cast<double>(y) + my[pi];
                sx = std::min(std::max(sx, 0.0), static_cast<double>(ww - 1));
                sy = std::min(std::max(sy, 0.0), static_cast<double>(hh - 1));
                const int64_t x0 = static_cast<int64_t>(std::floor(sx));
                const int64_t y0 = static_cast<int64_t>(std::floor(sy));
                const int64_t x1 = std::min(x0 + 1, ww - 1);
                const int64_t y1 = std::min(y0 + 1, hh - 1);
                const T fx = static_cast<T>(sx - static_cast<double>(x0));
                const T fy = static_cast<T>(sy - static_cast<double>(y0));
                for (int64_t ci = 0; ci < image.c; ++ci) {
                    const T g = grad_out.plane(bi, ci)[pi];
                    T* gp = grad.plane(bi, ci);
                    gp[y0 * ww + x0] += (T(1) - fy) * (T(1) - fx) * g;
                    gp[y0 * ww + x1] += (T(1) - fy) * fx * g;
                    gp[y1 * ww + x0] += fy * (T(1) - fx) * g;
                    gp[y1 * ww + x1] += fy * fx * g;
                }
            }
    }
    return grad;
}

// ---- pooling downsamplers (alternate HR-to-LR alignments) ----

template <typename T>
TensorT<T> avgpool_down(const TensorT<T>& in, int r) {
    require_scale(r);
    if (in.h % r != 0 || in.w % r != 0)
        throw ShapeError("avgpool_down: dims not divisible by r");
    TensorT<T> out(in.b, in.c, in.h / r, in.w / r);
    const T inv = T(1) / static_cast<T>(r * r);
    for (int64_t bi = 0; bi < in.b; ++bi)
        for (int64_t ci = 0; ci < in.c; ++ci)
            for (int64_t y = 0; y < out.h; ++y)
                for (int64_t x = 0; x < out.w; ++x) {
                    T acc = 0;
                    for (int dy = 0; dy < r; ++dy)
                        for (int dx = 0; dx < r; ++dx)
                            acc += in.at(bi, ci, y * r + dy, x * r + dx);
                    out.at(bi, ci, y, x) = acc * inv;
                }
    return out;
}

template <typename T>
TensorT<T> avgpool_down_backward(const TensorT<T>& grad_out,
                                 const TensorT<T>& in, int r) {
    TensorT<T> grad(in.b, in.c, in.h, in.w);
    const T inv = T(1) / static_cast<T>(r * r);
    for (int64_t bi = 0; bi < in.b; ++bi)
        for (int64_t ci = 0; ci < in.c; ++ci)
            for (int64_t y = 0; y < grad_out.h; ++y)
                for (int64_t x = 0; x < grad_out.w; ++x) {
                    const T g = grad_out.at(bi, ci, y, x) * inv;
                    for (int dy = 0; dy < r; ++dy)
                        for (int dx = 0; dx < r; ++dx)
                            grad.at(bi, ci, y * r + dy, x * r + dx) = g;
                }
    return grad;
}

// Ties break toward the first element in row-major window order.
template <typename T>
TensorT<T> maxpool_down(const TensorT<T>& in, int r) {
    require_scale(r);
    if (in.h % r != 0 || in.w % r != 0)
        throw ShapeError("maxpool_down: dims not divisible by r");
    TensorT<T> out(in.b, in.c, in.h / r, in.w / r);
    for (int64_t bi = 0; bi < in.b; ++bi)
        for (int64_t ci = 0; ci < in.c; ++ci)
            for (int64_t y = 0; y < out.h; ++y)
                for (int64_t x = 0; x < out.w; ++x) {
                    T best = in.at(bi, ci, y * r, x * r);
                    for (int dy = 0; dy < r; ++dy)
                        for (int dx = 0; dx < r; ++dx) {
                            const T v = in.at(bi, ci, y * r + dy, x * r + dx);
                            if (v > best) best = v;
                        }
                    out.at(bi, ci, y, x) = best;
                }
    return out;
}

template <typename T>
TensorT<T> maxpool_down_backward(const TensorT<T>& grad_out,
                                 const TensorT<T>& in, int r) {
    TensorT<T> grad(in.b, in.c, in.h, in.w);
    for (int64_t bi = 0; bi < in.b; ++bi)
        for (int64_t ci = 0; ci < in.c; ++ci)
            for (int64_t y = 0; y < grad_out.h; ++y)
                for (int64_t x = 0; x < grad_out.w; ++x) {
                    int64_t by = y * r, bx = x * r;
                    T best = in.at(bi, ci, by, bx);
                    for (int dy = 0; dy < r; ++dy)
                        for (int dx = 0; dx < r; ++dx) {
                            const T v = in.at(bi, ci, y * r + dy, x * r + dx);
                            if (v > best) {
                                best = v;
                                by = y * r + dy;
                                bx = x * r + dx;
                            }
                        }
                    grad.at(bi, ci, by, bx) += grad_out.at(bi, ci, y, x);
                }
    return grad;
}

// ---- bicubic upsampling (reference baseline, forward only) ----

// Keys cubic, a = -0.5 (Catmull-Rom). Half-pixel centers; edge clamp.
inline double cubic_weight(double t) {
    const double a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) return (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0;
    if (t < 2.0) return a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a;
    return 0.0;
}

template <typename T>
TensorT<T> upsample_bicubic(const TensorT<T>& in, int r) {
    require_scale(r);
    TensorT<T> out(in.b, in.c, in.h * r, in.w * r);
    const int64_t hh = in.h, ww = in.w;
    for (int64_t oy = 0; oy < out.h; ++oy)
        for (int64_t ox = 0; ox < out.w; ++ox) {
            const double sy = (oy + 0.5) / r - 0.5;
            const double sx = (ox + 0.5) / r - 0.5;
            const int64_t y0 = static_cast<int64_t>(std::floor(sy));
            const int64_t x0 = static_cast<int64_t>(std::floor(sx));
            std::array<double, 4> wy, wx;
            for (int k = 0; k < 4; ++k) {
                wy[k] = cubic_weight(sy - (y0 - 1 + k));
                wx[k] = cubic_weight(sx - (x0 - 1 + k));
            }
            for (int64_t bi = 0; bi < in.b; ++bi)
                for (int64_t ci = 0; ci < in.c; ++ci) {
                    const T* p = in.plane(bi, ci);
                    double acc = 0.0;
                    for (int ky = 0; ky < 4; ++ky) {
                        const int64_t yy = std::min(
                            std::max<int64_t>(y0 - 1 + ky, 0), hh - 1);
                        double row = 0.0;
                        for (int kx = 0; kx < 4; ++kx) {
                            const int64_t xx = std::min(
                                std::max<int64_t>(x0 - 1 + kx, 0), ww - 1);
                            row += wx[kx] * p[yy * ww + xx];
                        }
                        acc += wy[ky] * row;
                    }
                    out.plane(bi, ci)[oy * out.w + ox] = static_cast<T>(acc);
                }
        }
    return out;
}

// Bilinear upsampling baseline, same half-pixel/edge-clamp conventions as the
// bicubic path. Forward only.
template <typename T>
TensorT<T> upsample_bilinear(const TensorT<T>& in, int r) {
    require_scale(r);
    TensorT<T> out(in.b, in.c, in.h * r, in.w * r);
    const int64_t hh = in.h, ww = in.w;
    for (int64_t oy = 0; oy < out.h; ++oy)
        for (int64_t ox = 0; ox < out.w; ++ox) {
            double sy = (oy + 0.5) / r - 0.5;
            double sx = (ox + 0.5) / r - 0.5;
            sy = std::min(std::max(sy, 0.0), static_cast<double>(hh - 1));
            sx = std::min(std::max(sx, 0.0), static_cast<double>(ww - 1));
            const int64_t y0 = static_cast<int64_t>(std::floor(sy));
            const int64_t x0 = static_cast<int64_t>(std::floor(sx));
            const int64_t y1 = std::min(y0 + 1, hh - 1);
            const int64_t x1 = std::min(x0 + 1, ww - 1);
            const double fy = sy - static_cast<double>(y0);
            const double fx = sx - static_cast<double>(x0);
            for (int64_t bi = 0; bi < in.b; ++bi)
                for (int64_t ci = 0; ci < in.c; ++ci) {
                    const T* p = in.plane(bi, ci);
                    const double v =
                        (1.0 - fy) * ((1.0 - fx) * p[y0 * ww + x0] +
                                      fx * p[y0 * ww + x1]) +
                        fy * ((1.0 - fx) * p[y1 * ww + x0] +
                              fx * p[y1 * ww + x1]);
                    out.plane(bi, ci)[oy * out.w + ox] = static_cast<T>(v);
                }
        }
    return out;
}

// ---- slicing / batching ----

template <typename T>
TensorT<T> crop(const TensorT<T>& t, int64_t y0, int64_t x0, int64_t ch,
                int64_t cw) {
    if (y0 < 0 || x0 < 0 || y0 + ch > t.h || x0 + cw > t.w)
        throw ShapeError("crop: window out of range for " + t.shape_str());
    TensorT<T> out(t.b, t.c, ch, cw);
    for (int64_t bi = 0; bi < t.b; ++bi)
        for (int64_t ci = 0; ci < t.c; ++ci)
            for (int64_t y = 0; y < ch; ++y)
                std::copy(t.plane(bi, ci) + (y0 + y) * t.w + x0,
                          t.plane(bi, ci) + (y0 + y) * t.w + x0 + cw,
                          out.plane(bi, ci) + y * cw);
    return out;
}

// Stacks single-item tensors (b=1) into one batch along the batch axis.
template <typename T>
TensorT<T> stack_batch(const std::vector<const TensorT<T>*>& items) {
    if (items.empty()) throw ShapeError("stack_batch: no inputs");
    for (const auto* t : items) {
        if (t->b != 1 || t->c != items[0]->c || t->h != items[0]->h ||
            t->w != items[0]->w)
            throw ShapeError("stack_batch: items must be (1,c,h,w) with "
                             "matching shapes");
    }
    TensorT<T> out(static_cast<int64_t>(items.size()), items[0]->c,
                   items[0]->h, items[0]->w);
    for (size_t i = 0; i < items.size(); ++i)
        std::copy(items[i]->data.begin(), items[i]->data.end(),
                  out.data.begin() +
                      static_cast<int64_t>(i) * items[0]->numel());
    return out;
}

// ---- reductions ----

template <typename T>
double sum_all(const TensorT<T>& t) {
    double acc = 0.0;
    for (const T v : t.data) acc += static_cast<double>(v);
    return acc;
}

template <typename T>
double mean_all(const TensorT<T>& t) {
    return t.numel() == 0 ? 0.0 : sum_all(t) / static_cast<double>(t.numel());
}

}  // namespace fusesr
