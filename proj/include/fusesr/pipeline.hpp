#pragma once

// Glue between rendered frame bundles and the network: builds the LR
// encoder stack (demodulated radiance + G-buffer, with warped history) and
// the HR G-buffer stack, and maps network output back to radiance.

#include "fusesr/brdf.hpp"
#include "fusesr/dataset.hpp"
#include "fusesr/model.hpp"
#include "fusesr/ops.hpp"

namespace fusesr {

struct ModelInput {
    Tensor encoder_in;   // (1, c, lr_h, lr_w)
    Tensor hr_gbuf;      // (1, 11, hr_h, hr_w); empty when branch disabled
    Tensor fbeta_hr;     // (1, 3, hr_h, hr_w)
    Tensor emissive_hr;  // (1, 3, hr_h, hr_w)
};

// Bounded depth encoding keeps network inputs in a unit-scale range.
inline Tensor encode_depth(const Tensor& depth) {
    Tensor out = depth;
    for (auto& v : out.data) {
        const float d = v > 0.0f ? v : 0.0f;
        v = d / (1.0f + d);
    }
    return out;
}

// G-buffer stack fed at LR alongside radiance: depth, normal, roughness,
// ndotv.
inline Tensor lr_gbuf_stack(const FrameData& f) {
    Tensor depth = encode_depth(f.depth);
    return concat_channels<float>(
        {&depth, &f.normal, &f.roughness, &f.ndotv});
}

inline Tensor radiance_input(const FrameData& lr, const EnvBrdfLut& lut,
                             const HNetConfig& cfg, FbetaMode mode) {
    if (!cfg.use_demodulation) return lr.color;
    const Tensor fbeta =
        build_fbeta_map(lr.albedo, lr.roughness, lr.ndotv, lut, mode);
    return demodulate(lr.color, lr.emissive, fbeta);
}

// Per-frame LR feature stack: radiance (demodulated unless disabled) plus
// the G-buffer channels.
inline Tensor lr_frame_stack(const FrameData& lr, const EnvBrdfLut& lut,
                             const HNetConfig& cfg, FbetaMode mode) {
    const Tensor rad = radiance_input(lr, lut, cfg, mode);
    const Tensor gbuf = lr_gbuf_stack(lr);
    return concat_channels(rad, gbuf);
}

// prev1/prev2 may be null (sequence start); the current frame substitutes.
// History frames are warped into the current frame with the stored motion;
// the second hop composes motions: m2 = m1 + warp(prev1.motion, m1).
inline ModelInput build_model_input(const FramePair& cur,
                                    const FramePair* prev1,
                                    const FramePair* prev2,
                                    const EnvBrdfLut& lut,
                                    const HNetConfig& cfg,
                                    FbetaMode mode = FbetaMode::diffuse_specular) {
    ModelInput in;
    const Tensor cur_stack = lr_frame_stack(cur.lr, lut, cfg, mode);
    if (cfg.history_active()) {
        const FramePair& p1 = prev1 ? *prev1 : cur;
        const FramePair& p2 = prev2 ? *prev2 : (prev1 ? *prev1 : cur);
        const Tensor& m1 = cur.lr.motion;
        Tensor s1 = warp_bilinear(lr_frame_stack(p1.lr, lut, cfg, mode), m1);
        Tensor m2 = add(m1, warp_bilinear(p1.lr.motion, m1));
        Tensor s2 = warp_bilinear(lr_frame_stack(p2.lr, lut, cfg, mode), m2);
        in.encoder_in = concat_channels<float>({&cur_stack, &s1, &s2});
    } else {
        in.encoder_in = cur_stack;
    }
    in.fbeta_hr = build_fbeta_map(cur.hr.albedo, cur.hr.roughness,
                                  cur.hr.ndotv, lut, mode);
    in.emissive_hr = cur.hr.emissive;
    if (cfg.use_hr_gbuffer)
        in.hr_gbuf = concat_channels<float>({&in.fbeta_hr, &cur.hr.roughness,
                                             &cur.hr.ndotv, &cur.hr.normal,
                                             &cur.hr.emissive});
    return in;
}

// Network output to predicted HR radiance: remodulate when the network ran
// on demodulated input, identity otherwise.
inline Tensor finalize_prediction(const Tensor& net_out, const ModelInput& in,
                                  const HNetConfig& cfg) {
    if (!cfg.use_demodulation) return net_out;
    return remodulate(net_out, in.emissive_hr, in.fbeta_hr);
}

// d(prediction)/d(net_out) is the demodulation factor (or identity).
inline Tensor finalize_backward(const Tensor& grad_pred, const ModelInput& in,
                                const HNetConfig& cfg) {
    if (!cfg.use_demodulation) return grad_pred;
    return elementwise_mul(grad_pred, in.fbeta_hr);
}

// Crops a prepared full-frame input to an LR window (and the matching
// r-scaled HR window).
inline ModelInput crop_model_input(const ModelInput& in, int r, int64_t y0,
                                   int64_t x0, int64_t ch, int64_t cw) {
    ModelInput out;
    out.encoder_in = crop(in.encoder_in, y0, x0, ch, cw);
    out.fbeta_hr = crop(in.fbeta_hr, y0 * r, x0 * r, ch * r, cw * r);
    out.emissive_hr = crop(in.emissive_hr, y0 * r, x0 * r, ch * r, cw * r);
    if (in.hr_gbuf.numel() > 0)
        out.hr_gbuf = crop(in.hr_gbuf, y0 * r, x0 * r, ch * r, cw * r);
    return out;
}

// Stacks per-frame crops into one batched input.
inline ModelInput batch_model_inputs(const std::vector<ModelInput>& items) {
    ModelInput out;
    std::vector<const Tensor*> enc, hr, fb, em;
    for (const auto& it : items) {
        enc.push_back(&it.encoder_in);
        fb.push_back(&it.fbeta_hr);
        em.push_back(&it.emissive_hr);
        if (it.hr_gbuf.numel() > 0) hr.push_back(&it.hr_gbuf);
    }
    out.encoder_in = stack_batch(enc);
    out.fbeta_hr = stack_batch(fb);
    out.emissive_hr = stack_batch(em);
    if (hr.size() == items.size()) out.hr_gbuf = stack_batch(hr);
    return out;
}

}  // namespace fusesr
