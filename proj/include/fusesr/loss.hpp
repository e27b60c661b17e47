#pragma once

// Training losses and image metrics. Losses run on linear radiance; PSNR and
// SSIM metrics are evaluated after Reinhard tone mapping to [0,1].
// Everything is templated so the gradient checker can instantiate in double.

#include <array>
#include <cmath>
#include <vector>

#include "fusesr/conv.hpp"
#include "fusesr/ops.hpp"
#include "fusesr/tensor.hpp"

namespace fusesr {

// ---- tone mapping (metrics only) ----

// Reinhard m/(1+m) on the non-negative part, result in [0,1].
template <typename T>
TensorT<T> tone_map(const TensorT<T>& x) {
    TensorT<T> out = x;
    for (auto& v : out.data) {
        const T m = v > T(0) ? v : T(0);
        v = m / (T(1) + m);
    }
    return out;
}

// ---- L1 ----

template <typename T>
double l1_loss(const TensorT<T>& pred, const TensorT<T>& target) {
    require_same_shape("l1_loss", pred, target);
    double acc = 0.0;
    for (size_t i = 0; i < pred.data.size(); ++i)
        acc += std::abs(static_cast<double>(pred.data[i]) -
                        static_cast<double>(target.data[i]));
    return acc / static_cast<double>(pred.numel());
}

// Subgradient at pred == target is zero.
template <typename T>
TensorT<T> l1_loss_backward(const TensorT<T>& pred, const TensorT<T>& target,
                            double upstream = 1.0) {
    TensorT<T> grad(pred.b, pred.c, pred.h, pred.w);
    const T s = static_cast<T>(upstream / static_cast<double>(pred.numel()));
    for (size_t i = 0; i < pred.data.size(); ++i) {
        const T d = pred.data[i] - target.data[i];
        grad.data[i] = d > T(0) ? s : (d < T(0) ? -s : T(0));
    }
    return grad;
}

// ---- MSE / PSNR ----

template <typename T>
double mse(const TensorT<T>& a, const TensorT<T>& b) {
    require_same_shape("mse", a, b);
    double acc = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) -
                         static_cast<double>(b.data[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.numel());
}

constexpr double kPsnrCapDb = 99.0;

// Peak signal 1.0 (inputs are tone-mapped to [0,1]). Capped at 99 dB so
// identical images compare equal across platforms.
inline double psnr_db(double mean_squared_error) {
    if (mean_squared_error <= 0.0) return kPsnrCapDb;
    const double v = -10.0 * std::log10(mean_squared_error);
    return v > kPsnrCapDb ? kPsnrCapDb : v;
}

template <typename T>
double psnr_db(const TensorT<T>& a, const TensorT<T>& b) {
    return psnr_db(mse(a, b));
}

// ---- SSIM ----
// 11x11 Gaussian window, sigma 1.5, C1 = 0.01^2, C2 = 0.03^2, dynamic range
// 1. Per-channel maps on zero-padded same-size convolutions, averaged over
// batch, channels, and pixels.

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

template <typename T>
std::array<T, kSsimWindow> ssim_kernel() {
    std::array<T, kSsimWindow> k{};
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double d = i - (kSsimWindow - 1) / 2;
        const double v = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
        k[static_cast<size_t>(i)] = static_cast<T>(v);
        sum += v;
    }
    for (auto& v : k) v = static_cast<T>(static_cast<double>(v) / sum);
    return k;
}

// Separable zero-padded Gaussian blur; the kernel is symmetric, so this
// operator is its own adjoint, which the SSIM backward pass relies on.
template <typename T>
TensorT<T> ssim_blur(const TensorT<T>& x) {
    const auto k = ssim_kernel<T>();
    const int half = kSsimWindow / 2;
    TensorT<T> tmp(x.b, x.c, x.h, x.w);
    for (int64_t bi = 0; bi < x.b; ++bi)
        for (int64_t ci = 0; ci < x.c; ++ci) {
            const T* xp = x.plane(bi, ci);
            T* tp = tmp.plane(bi, ci);
            for (int64_t y = 0; y < x.h; ++y)
                for (int64_t xx = 0; xx < x.w; ++xx) {
                    T acc = 0;
                    const int64_t lo = std::max<int64_t>(0, xx - half);
                    const int64_t hi = std::min(x.w - 1, xx + half);
                    for (int64_t s = lo; s <= hi; ++s)
                        acc += k[static_cast<size_t>(s - xx + half)] *
                               xp[y * x.w + s];
                    tp[y * x.w + xx] = acc;
                }
        }
    TensorT<T> out(x.b, x.c, x.h, x.w);
    for (int64_t bi = 0; bi < x.b; ++bi)
        for (int64_t ci = 0; ci < x.c; ++ci) {
            const T* tp = tmp.plane(bi, ci);
            T* op = out.plane(bi, ci);
            for (int64_t y = 0; y < x.h; ++y) {
                const int64_t lo = std::max<int64_t>(0, y - half);
                const int64_t hi = std::min(x.h - 1, y + half);
                for (int64_t xx = 0; xx < x.w; ++xx) {
                    T acc = 0;
                    for (int64_t s = lo; s <= hi; ++s)
                        acc += k[static_cast<size_t>(s - y + half)] *
                               tp[s * x.w + xx];
                    op[y * x.w + xx] = acc;
                }
            }
        }
    return out;
}

template <typename T>
struct SsimTrace {
    TensorT<T> mu_x, mu_y, m_xx, m_yy, m_xy;
};

template <typename T>
double ssim_mean(const TensorT<T>& x, const TensorT<T>& y,
                 SsimTrace<T>* trace = nullptr) {
    require_same_shape("ssim", x, y);
    TensorT<T> mu_x = ssim_blur(x);
    TensorT<T> mu_y = ssim_blur(y);
    TensorT<T> m_xx = ssim_blur(elementwise_mul(x, x));
    TensorT<T> m_yy = ssim_blur(elementwise_mul(y, y));
    TensorT<T> m_xy = ssim_blur(elementwise_mul(x, y));
    double acc = 0.0;
    for (size_t i = 0; i < x.data.size(); ++i) {
        const double ux = mu_x.data[i], uy = mu_y.data[i];
        const double sxx = m_xx.data[i] - ux * ux;
        const double syy = m_yy.data[i] - uy * uy;
        const double sxy = m_xy.data[i] - ux * uy;
        const double a1 = 2.0 * ux * uy + kSsimC1;
        const double a2 = 2.0 * sxy + kSsimC2;
        const double b1 = ux * ux + uy * uy + kSsimC1;
        const double b2 = sxx + syy + kSsimC2;
        acc += (a1 * a2) / (b1 * b2);
    }
    if (trace) {
        trace->mu_x = std::move(mu_x);
        trace->mu_y = std::move(mu_y);
        trace->m_xx = std::move(m_xx);
        trace->m_yy = std::move(m_yy);
        trace->m_xy = std::move(m_xy);
    }
    return acc / static_cast<double>(x.numel());
}

// Gradient of mean SSIM w.r.t. x (y is the reference). Derivatives flow
// through mu_x, m_xx, and m_xy; the blur adjoint is ssim_blur itself.
template <typename T>
TensorT<T> ssim_backward(const TensorT<T>& x, const TensorT<T>& y,
                         const SsimTrace<T>& tr, double upstream = 1.0) {
    const double gscale = upstream / static_cast<double>(x.numel());
    TensorT<T> w_mu(x.b, x.c, x.h, x.w);
    TensorT<T> w_xx(x.b, x.c, x.h, x.w);
    TensorT<T> w_xy(x.b, x.c, x.h, x.w);
    for (size_t i = 0; i < x.data.size(); ++i) {
        const double ux = tr.mu_x.data[i], uy = tr.mu_y.data[i];
        const double sxx = tr.m_xx.data[i] - ux * ux;
        const double syy = tr.m_yy.data[i] - uy * uy;
        const double sxy = tr.m_xy.data[i] - ux * uy;
        const double a1 = 2.0 * ux * uy + kSsimC1;
        const double a2 = 2.0 * sxy + kSsimC2;
        const double b1 = ux * ux + uy * uy + kSsimC1;
        const double b2 = sxx + syy + kSsimC2;
        const double s = (a1 * a2) / (b1 * b2);
        const double d_a1 = a2 / (b1 * b2);
        const double d_a2 = a1 / (b1 * b2);
        const double d_b1 = -s / b1;
        const double d_b2 = -s / b2;
        const double d_mu =
            d_a1 * 2.0 * uy - d_a2 * 2.0 * uy + d_b1 * 2.0 * ux -
            d_b2 * 2.0 * ux;
        w_mu.data[i] = static_cast<T>(gscale * d_mu);
        w_xx.data[i] = static_cast<T>(gscale * d_b2);
        w_xy.data[i] = static_cast<T>(gscale * 2.0 * d_a2);
    }
    TensorT<T> g_mu = ssim_blur(w_mu);
    TensorT<T> g_xx = ssim_blur(w_xx);
    TensorT<T> g_xy = ssim_blur(w_xy);
    TensorT<T> grad(x.b, x.c, x.h, x.w);
    for (size_t i = 0; i < x.data.size(); ++i)
        grad.data[i] = g_mu.data[i] +
                       T(2) * x.data[i] * g_xx.data[i] +
                       y.data[i] * g_xy.data[i];
    return grad;
}

// ---- perceptual loss ----
// Feature distance under a fixed, randomly initialized conv stack (5 layers,
// 3x3, ReLU), tapped after the configured layers. The weights are seeded
// once and never trained, so the loss is a deterministic function of its
// inputs. Distance per tap is the mean squared feature difference.

template <typename T>
struct PerceptualExtractor {
    std::vector<TensorT<T>> weights;  // (oc, ic, 3, 3)
    std::vector<TensorT<T>> biases;   // (1, oc, 1, 1)
    std::vector<int> taps;            // 1-indexed layer numbers
    bool relu_enabled = true;

    static constexpr uint64_t kDefaultSeed = 0x5eedfacef00dull;

    explicit PerceptualExtractor(std::vector<int> tap_layers = {2, 4},
                                 uint64_t seed = kDefaultSeed)
        : taps(std::move(tap_layers)) {
        const std::vector<int64_t> chans = {3, 16, 24, 32, 48, 64};
        Rng rng(seed);
        for (size_t l = 0; l + 1 < chans.size(); ++l) {
            TensorT<T> w(chans[l + 1], chans[l], 3, 3);
            he_init(w, rng);
            weights.push_back(std::move(w));
            biases.emplace_back(1, chans[l + 1], 1, 1);
        }
        for (int t : taps)
            if (t < 1 || t > static_cast<int>(weights.size()))
                throw ConfigError("perceptual: tap layer out of range");
    }

    // Returns activations after each layer (post-ReLU).
    std::vector<TensorT<T>> forward(const TensorT<T>& x) const {
        std::vector<TensorT<T>> acts;
        const TensorT<T>* cur = &x;
        for (size_t l = 0; l < weights.size(); ++l) {
            TensorT<T> z = conv2d(*cur, weights[l], &biases[l]);
            acts.push_back(relu_enabled ? relu(z) : std::move(z));
            cur = &acts.back();
        }
        return acts;
    }
};

template <typename T>
double perceptual_loss(const PerceptualExtractor<T>& ex, const TensorT<T>& x,
                       const TensorT<T>& y) {
    require_same_shape("perceptual_loss", x, y);
    const auto fx = ex.forward(x);
    const auto fy = ex.forward(y);
    double total = 0.0;
    for (int t : ex.taps) total += mse(fx[static_cast<size_t>(t - 1)],
                                       fy[static_cast<size_t>(t - 1)]);
    return total;
}

// Gradient w.r.t. x only; the extractor weights are fixed.
template <typename T>
TensorT<T> perceptual_loss_backward(const PerceptualExtractor<T>& ex,
                                    const TensorT<T>& x, const TensorT<T>& y,
                                    double upstream = 1.0) {
    const auto fx = ex.forward(x);
    const auto fy = ex.forward(y);
    const size_t layers = ex.weights.size();
    // Per-layer upstream gradient, accumulated from taps downward.
    std::vector<TensorT<T>> grads(layers);
    for (int t : ex.taps) {
        const size_t li = static_cast<size_t>(t - 1);
        const auto& a = fx[li];
        TensorT<T> g(a.b, a.c, a.h, a.w);
        const T s = static_cast<T>(2.0 * upstream /
                                   static_cast<double>(a.numel()));
        for (size_t i = 0; i < a.data.size(); ++i)
            g.data[i] = s * (a.data[i] - fy[li].data[i]);
        if (grads[li].numel() == 0)
            grads[li] = std::move(g);
        else
            grads[li] = add(grads[li], g);
    }
    size_t top = 0;
    for (int t : ex.taps) top = std::max(top, static_cast<size_t>(t - 1));
    TensorT<T> up;
    for (size_t l = top + 1; l-- > 0;) {
        TensorT<T> g = std::move(up);
        if (grads[l].numel() != 0)
            g = g.numel() == 0 ? std::move(grads[l]) : add(g, grads[l]);
        if (ex.relu_enabled) {
            // acts are post-ReLU; the pre-activation sign matches act > 0.
            for (size_t i = 0; i < g.data.size(); ++i)
                if (!(fx[l].data[i] > T(0))) g.data[i] = T(0);
        }
        const TensorT<T>& input = l == 0 ? x : fx[l - 1];
        TensorT<T> gx, gw;
        conv2d_backward(g, input, ex.weights[l], gx, gw);
        up = std::move(gx);
    }
    return up;
}

// ---- composite training loss ----

struct LossWeights {
    double lambda_p = 0.5;   // perceptual
    double lambda_s = 0.05;  // 1 - SSIM
};

struct LossTerms {
    double l1 = 0.0;
    double perceptual = 0.0;
    double ssim = 0.0;  // mean SSIM value, not the loss term
    double total = 0.0;
};

// total = L1 + lambda_p * perceptual + lambda_s * (1 - SSIM), evaluated on
// linear radiance. grad_out receives d(total)/d(pred).
template <typename T>
LossTerms composite_loss(const TensorT<T>& pred, const TensorT<T>& target,
                         const LossWeights& w,
                         const PerceptualExtractor<T>* extractor,
                         TensorT<T>* grad_out) {
    LossTerms terms;
    terms.l1 = l1_loss(pred, target);
    if (grad_out) *grad_out = l1_loss_backward(pred, target, 1.0);
    if (w.lambda_s != 0.0) {
        SsimTrace<T> tr;
        terms.ssim = ssim_mean(pred, target, grad_out ? &tr : nullptr);
        if (grad_out)
            *grad_out = add(*grad_out,
                            ssim_backward(pred, target, tr, -w.lambda_s));
    }
    if (w.lambda_p != 0.0) {
        if (!extractor)
            throw ConfigError("composite_loss: lambda_p != 0 needs an "
                              "extractor");
        terms.perceptual = perceptual_loss(*extractor, pred, target);
        if (grad_out)
            *grad_out = add(*grad_out, perceptual_loss_backward(
                                           *extractor, pred, target,
                                           w.lambda_p));
    }
    terms.total = terms.l1 + w.lambda_p * terms.perceptual +
                  w.lambda_s * (1.0 - terms.ssim);
    return terms;
}

}  // namespace fusesr
