#pragma once

// Fusion super-resolution network. Two inputs: a low-resolution stack
// (demodulated radiance + G-buffer, optionally with two warped history
// frames) and a high-resolution G-buffer stack. The HR stack is aligned to
// LR by pixel unshuffle (or pooling, for ablations), fused with the encoder
// output by a residual backbone, and the result is upscaled by pixel shuffle
// into a conv head. All trainable convs are 3x3 stride 1, ReLU.
//
// The lite variant drops history input, halves the fusion width, and swaps
// fusion convs for depthwise-separable ones.

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "fusesr/conv.hpp"
#include "fusesr/ops.hpp"
#include "fusesr/tensor.hpp"

namespace fusesr {

enum class Alignment { unshuffle, avgpool, maxpool };

inline const char* alignment_name(Alignment a) {
    switch (a) {
        case Alignment::unshuffle: return "unshuffle";
        case Alignment::avgpool: return "avgpool";
        case Alignment::maxpool: return "maxpool";
    }
    return "unshuffle";
}

inline Alignment alignment_from_name(const std::string& s) {
    if (s == "unshuffle") return Alignment::unshuffle;
    if (s == "avgpool") return Alignment::avgpool;
    if (s == "maxpool") return Alignment::maxpool;
    throw ConfigError("unknown alignment '" + s + "'");
}

// The unshuffle-aligned HR stack dwarfs the encoder output (11*r^2 channels
// against a few dozen), so He-scaled adapter weights let it dominate the
// fused signal at init and stall short training schedules. Damping the HR
// input columns starts the network at its LR-only operating point; the
// optimizer grows the HR contribution back where it pays off (side-branch
// zero-ish init). Applied to the unshuffle alignment only: the pooled
// alignments keep an 11-channel stack that starts balanced on its own.
constexpr float kHrAdapterInitDamp = 0.1f;

// Channel widths of the two input stacks.
constexpr int64_t kRadianceChannels = 3;
// G-buffer fed at LR: depth, normal(3), roughness, ndotv.
constexpr int64_t kLrGbufChannels = 6;
constexpr int64_t kLrPerFrameChannels = kRadianceChannels + kLrGbufChannels;
// G-buffer fed at HR: demodulation factor(3), roughness, ndotv, normal(3),
// emissive(3).
constexpr int64_t kHrGbufChannels = 11;

struct HNetConfig {
    int r = 4;
    bool lite = false;
    bool use_history = true;       // ignored (off) when lite
    bool use_demodulation = true;  // ablation: feed/emit raw radiance
    bool use_hr_gbuffer = true;    // ablation: drop the HR branch
    Alignment alignment = Alignment::unshuffle;
    std::vector<int64_t> encoder_channels = {64, 64, 32, 24, 24, 32};
    int64_t fusion_channels = 128;  // halved when lite
    int fusion_blocks = 6;

    bool history_active() const { return use_history && !lite; }
    int64_t fusion_width() const {
        return lite ? fusion_channels / 2 : fusion_channels;
    }
    int64_t encoder_in_channels() const {
        return kLrPerFrameChannels * (history_active() ? 3 : 1);
    }
    int64_t skip_channels() const { return encoder_channels.front(); }
    int64_t encoder_out_channels() const { return encoder_channels.back(); }
    int64_t aligned_channels() const {
        return alignment == Alignment::unshuffle ? kHrGbufChannels * r * r
                                                 : kHrGbufChannels;
    }
    int64_t fusion_in_channels() const {
        return encoder_out_channels() +
               (use_hr_gbuffer ? aligned_channels() : 0);
    }
    int64_t head_in_channels() const {
        return skip_channels() + fusion_width();
    }

    void validate() const {
        require_scale(r);
        if (encoder_channels.empty())
            throw ConfigError("model: encoder needs at least one layer");
        for (int64_t c : encoder_channels)
            if (c < 1) throw ConfigError("model: bad encoder channel count");
        if (fusion_width() < 1 || fusion_blocks < 0)
            throw ConfigError("model: bad fusion plan");
        if (head_in_channels() % (int64_t(r) * r) != 0)
            throw ConfigError(
                "model: skip+fusion channels (" +
                std::to_string(head_in_channels()) +
                ") must be divisible by r^2 for the upscaling shuffle");
    }
};

// One trainable conv: standard (weight (oc,ic,3,3)) or depthwise-separable
// (depthwise (ic,1,3,3) without bias, then pointwise (oc,ic,1,1) with bias).
template <typename T>
struct ConvUnitT {
    bool dws = false;
    TensorT<T> w;   // std weight, or depthwise weight
    TensorT<T> pw;  // pointwise weight (dws only)
    TensorT<T> b;   // (1, oc, 1, 1)

    void init(int64_t ic, int64_t oc, bool dws_, Rng& rng) {
        dws = dws_;
        b = TensorT<T>(1, oc, 1, 1);
        if (dws) {
            w = TensorT<T>(ic, 1, 3, 3);
            pw = TensorT<T>(oc, ic, 1, 1);
            he_init(w, rng);
            he_init(pw, rng);
        } else {
            w = TensorT<T>(oc, ic, 3, 3);
            he_init(w, rng);
        }
    }

    void zero_like(const ConvUnitT& other) {
        dws = other.dws;
        w = TensorT<T>(other.w.b, other.w.c, other.w.h, other.w.w);
        if (other.dws)
            pw = TensorT<T>(other.pw.b, other.pw.c, other.pw.h, other.pw.w);
        b = TensorT<T>(other.b.b, other.b.c, other.b.h, other.b.w);
    }

    int64_t in_channels() const { return dws ? w.b : w.c; }
    int64_t out_channels() const { return dws ? pw.b : w.b; }

    TensorT<T> forward(const TensorT<T>& x, TensorT<T>* mid = nullptr) const {
        if (!dws) return conv2d(x, w, &b);
        TensorT<T> m = depthwise_conv2d(x, w);
        TensorT<T> y = conv2d(m, pw, &b);
        if (mid) *mid = std::move(m);
        return y;
    }

    void backward(const TensorT<T>& grad_y, const TensorT<T>& x,
                  const TensorT<T>& mid, TensorT<T>& grad_x,
                  ConvUnitT& grads) const {
        if (!dws) {
            conv2d_backward(grad_y, x, w, grad_x, grads.w, &grads.b);
            return;
        }
        TensorT<T> grad_mid;
        conv2d_backward(grad_y, mid, pw, grad_mid, grads.pw, &grads.b);
        depthwise_conv2d_backward(grad_mid, x, w, grad_x, grads.w);
    }

    int64_t param_count() const {
        return w.numel() + pw.numel() + b.numel();
    }
    // Multiply-accumulate count for one (h, w) spatial pass.
    int64_t macs(int64_t h, int64_t w_) const {
        if (!dws) return h * w_ * w.b * w.c * w.h * w.w;
        return h * w_ * w.b * 9 + h * w_ * pw.b * pw.c;
    }
};

template <typename T>
struct HNetModelT {
    HNetConfig cfg;
    std::vector<ConvUnitT<T>> encoder;
    ConvUnitT<T> adapter;
    std::vector<std::array<ConvUnitT<T>, 2>> blocks;
    ConvUnitT<T> head;

    HNetModelT() = default;

    HNetModelT(const HNetConfig& c, uint64_t init_seed) : cfg(c) {
        cfg.validate();
        Rng rng(init_seed);
        int64_t ic = cfg.encoder_in_channels();
        for (int64_t oc : cfg.encoder_channels) {
            ConvUnitT<T> u;
            u.init(ic, oc, false, rng);
            encoder.push_back(std::move(u));
            ic = oc;
        }
        adapter.init(cfg.fusion_in_channels(), cfg.fusion_width(), cfg.lite,
                     rng);
        if (cfg.use_hr_gbuffer && cfg.alignment == Alignment::unshuffle) {
            // Damp the mixing weights that read the aligned HR channels
            // (the pointwise stage for DWS adapters). Only the unshuffle
            // stack is wide enough (11 r^2 channels) to dominate the fused
            // activations at init; the pooled stacks are as narrow as the
            // encoder output and start balanced without help.
            const int64_t lo = cfg.encoder_out_channels();
            const int64_t hi = lo + cfg.aligned_channels();
            TensorT<T>& mix = cfg.lite ? adapter.pw : adapter.w;
            for (int64_t oc = 0; oc < mix.b; ++oc)
                for (int64_t ch = lo; ch < hi; ++ch)
                    for (int64_t ky = 0; ky < mix.h; ++ky)
                        for (int64_t kx = 0; kx < mix.w; ++kx)
                            mix.at(oc, ch, ky, kx) *=
                                static_cast<T>(kHrAdapterInitDamp);
        }
        for (int i = 0; i < cfg.fusion_blocks; ++i) {
            std::array<ConvUnitT<T>, 2> blk;
            blk[0].init(cfg.fusion_width(), cfg.fusion_width(), cfg.lite, rng);
            blk[1].init(cfg.fusion_width(), cfg.fusion_width(), cfg.lite, rng);
            blocks.push_back(std::move(blk));
        }
        head.init(cfg.head_in_channels() / (int64_t(cfg.r) * cfg.r), 3, false,
                  rng);
    }

    // Creates a same-shape zero model, used as a gradient holder.
    HNetModelT zeros_like() const {
        HNetModelT g;
        g.cfg = cfg;
        g.encoder.resize(encoder.size());
        for (size_t i = 0; i < encoder.size(); ++i)
            g.encoder[i].zero_like(encoder[i]);
        g.adapter.zero_like(adapter);
        g.blocks.resize(blocks.size());
        for (size_t i = 0; i < blocks.size(); ++i) {
            g.blocks[i][0].zero_like(blocks[i][0]);
            g.blocks[i][1].zero_like(blocks[i][1]);
        }
        g.head.zero_like(head);
        return g;
    }

    struct BlockTrace {
        TensorT<T> in;    // block input
        TensorT<T> mid1;  // dws intermediate of conv1 (empty when std)
        TensorT<T> act1;  // relu(conv1(in))
        TensorT<T> mid2;  // dws intermediate of conv2
    };

    struct Trace {
        TensorT<T> enc_in;
        std::vector<TensorT<T>> enc_acts;
        TensorT<T> hr_gbuf;
        TensorT<T> fusion_in;
        TensorT<T> adapter_mid;
        TensorT<T> adapter_out;
        std::vector<BlockTrace> block_traces;
        TensorT<T> head_cat;
        TensorT<T> shuffled;
        TensorT<T> out;
    };

    void validate_inputs(const TensorT<T>& enc_in,
                         const TensorT<T>& hr_gbuf) const {
        if (enc_in.c != cfg.encoder_in_channels())
            throw ShapeError("model: encoder input has " +
                             std::to_string(enc_in.c) + " channels, expected " +
                             std::to_string(cfg.encoder_in_channels()));
        if (!cfg.use_hr_gbuffer) return;
        if (hr_gbuf.c != kHrGbufChannels)
            throw ShapeError("model: hr stack has " +
                             std::to_string(hr_gbuf.c) +
                             " channels, expected " +
                             std::to_string(kHrGbufChannels));
        if (hr_gbuf.b != enc_in.b || hr_gbuf.h != enc_in.h * cfg.r ||
            hr_gbuf.w != enc_in.w * cfg.r)
            throw ShapeError("model: hr stack " + hr_gbuf.shape_str() +
                             " is not r=" + std::to_string(cfg.r) +
                             " times the lr input " + enc_in.shape_str());
    }

    TensorT<T> align(const TensorT<T>& hr) const {
        switch (cfg.alignment) {
            case Alignment::unshuffle: return pixel_unshuffle(hr, cfg.r);
            case Alignment::avgpool: return avgpool_down(hr, cfg.r);
            case Alignment::maxpool: return maxpool_down(hr, cfg.r);
        }
        throw ConfigError("model: bad alignment");
    }

    TensorT<T> align_backward(const TensorT<T>& grad_aligned,
                              const TensorT<T>& hr) const {
        switch (cfg.alignment) {
            case Alignment::unshuffle:
                return pixel_unshuffle_backward(grad_aligned, cfg.r);
            case Alignment::avgpool:
                return avgpool_down_backward(grad_aligned, hr, cfg.r);
            case Alignment::maxpool:
                return maxpool_down_backward(grad_aligned, hr, cfg.r);
        }
        throw ConfigError("model: bad alignment");
    }

    // Stage 1: encoder chain. Returns every layer's activation; the front is
    // the skip tap and the back is the encoder output fed to fusion.
    std::vector<TensorT<T>> encode(const TensorT<T>& enc_in) const {
        std::vector<TensorT<T>> acts;
        acts.reserve(encoder.size());
        TensorT<T> cur = enc_in;
        for (const auto& u : encoder) {
            cur = relu(u.forward(cur));
            acts.push_back(cur);
        }
        return acts;
    }

    // Stage 2: align the HR stack to LR, adapt, and run the residual
    // backbone. hr_gbuf is ignored when the HR branch is disabled.
    TensorT<T> fuse(const TensorT<T>& f_enc, const TensorT<T>& hr_gbuf) const {
        TensorT<T> x;
        if (cfg.use_hr_gbuffer)
            x = relu(adapter.forward(concat_channels(f_enc, align(hr_gbuf))));
        else
            x = relu(adapter.forward(f_enc));
        for (const auto& blk : blocks)
            x = add(blk[1].forward(relu(blk[0].forward(x))), x);
        return x;
    }

    // Stage 3: concat the skip tap, shuffle up to HR, and apply the head.
    TensorT<T> upscale(const TensorT<T>& f_skip, const TensorT<T>& f_f) const {
        return relu(
            head.forward(pixel_shuffle(concat_channels(f_skip, f_f), cfg.r)));
    }

    // hr_gbuf may be empty when the HR branch is disabled.
    TensorT<T> forward(const TensorT<T>& enc_in, const TensorT<T>& hr_gbuf,
                       Trace* tr = nullptr) const {
        validate_inputs(enc_in, hr_gbuf);
        if (!tr) {
            std::vector<TensorT<T>> acts = encode(enc_in);
            TensorT<T> ff = fuse(acts.back(), hr_gbuf);
            return upscale(acts.front(), ff);
        }
        *tr = Trace{};
        tr->enc_in = enc_in;
        TensorT<T> cur = enc_in;
        std::vector<TensorT<T>> acts;
        acts.reserve(encoder.size());
        for (const auto& u : encoder) {
            cur = relu(u.forward(cur));
            acts.push_back(cur);
        }
        const TensorT<T>& f_skip = acts.front();
        const TensorT<T>& f_enc = acts.back();

        TensorT<T> fusion_in;
        if (cfg.use_hr_gbuffer) {
            TensorT<T> aligned = align(hr_gbuf);
            fusion_in = concat_channels(f_enc, aligned);
            if (tr) tr->hr_gbuf = hr_gbuf;
        } else {
            fusion_in = f_enc;
        }

        TensorT<T> adapter_mid;
        TensorT<T> x = relu(adapter.forward(fusion_in, &adapter_mid));
        if (tr) {
            tr->fusion_in = fusion_in;
            tr->adapter_mid = std::move(adapter_mid);
            tr->adapter_out = x;
        }
        for (const auto& blk : blocks) {
            BlockTrace bt;
            if (tr) bt.in = x;
            TensorT<T> mid1, mid2;
            TensorT<T> v = relu(blk[0].forward(x, &mid1));
            TensorT<T> y = add(blk[1].forward(v, &mid2), x);
            if (tr) {
                bt.mid1 = std::move(mid1);
                bt.act1 = std::move(v);
                bt.mid2 = std::move(mid2);
                tr->block_traces.push_back(std::move(bt));
            }
            x = std::move(y);
        }

        TensorT<T> head_cat = concat_channels(f_skip, x);
        TensorT<T> shuffled = pixel_shuffle(head_cat, cfg.r);
        TensorT<T> out = relu(head.forward(shuffled));
        if (tr) {
            tr->enc_acts = std::move(acts);
            tr->head_cat = std::move(head_cat);
            tr->shuffled = std::move(shuffled);
            tr->out = out;
        }
        return out;
    }

    // Accumulates parameter gradients into grads (a zeros_like clone per
    // call site; values add, so batches can accumulate). Optionally emits
    // input gradients.
    void backward(const Trace& tr, const TensorT<T>& grad_out,
                  HNetModelT& grads, TensorT<T>* grad_enc_in = nullptr,
                  TensorT<T>* grad_hr = nullptr) const {
        TensorT<T> gz = relu_backward(grad_out, tr.out);
        TensorT<T> g_shuffled;
        {
            ConvUnitT<T> hg;
            hg.zero_like(head);
            head.backward(gz, tr.shuffled, TensorT<T>{}, g_shuffled, hg);
            accumulate(grads.head, hg);
        }
        TensorT<T> g_cat = pixel_shuffle_backward(g_shuffled, cfg.r);
        auto cat_parts = split_channels(
            g_cat, {cfg.skip_channels(), cfg.fusion_width()});
        TensorT<T> g_skip = std::move(cat_parts[0]);
        TensorT<T> gx = std::move(cat_parts[1]);

        for (size_t i = blocks.size(); i-- > 0;) {
            const auto& bt = tr.block_traces[i];
            TensorT<T> gv;
            {
                ConvUnitT<T> cg;
                cg.zero_like(blocks[i][1]);
                blocks[i][1].backward(gx, bt.act1, bt.mid2, gv, cg);
                accumulate(grads.blocks[i][1], cg);
            }
            TensorT<T> gu = relu_backward(gv, bt.act1);
            TensorT<T> gin;
            {
                ConvUnitT<T> cg;
                cg.zero_like(blocks[i][0]);
                blocks[i][0].backward(gu, bt.in, bt.mid1, gin, cg);
                accumulate(grads.blocks[i][0], cg);
            }
            gx = add(gx, gin);
        }

        TensorT<T> ga = relu_backward(gx, tr.adapter_out);
        TensorT<T> g_fusion_in;
        {
            ConvUnitT<T> ag;
            ag.zero_like(adapter);
            adapter.backward(ga, tr.fusion_in, tr.adapter_mid, g_fusion_in,
                             ag);
            accumulate(grads.adapter, ag);
        }

        TensorT<T> g_enc_out;
        if (cfg.use_hr_gbuffer) {
            auto parts = split_channels(
                g_fusion_in,
                {cfg.encoder_out_channels(), cfg.aligned_channels()});
            g_enc_out = std::move(parts[0]);
            if (grad_hr)
                *grad_hr = align_backward(parts[1], tr.hr_gbuf);
        } else {
            g_enc_out = std::move(g_fusion_in);
        }

        // Per-layer activation gradients; the skip tap joins at layer 0.
        std::vector<TensorT<T>> act_grads(encoder.size());
        act_grads.back() = std::move(g_enc_out);
        if (encoder.size() == 1)
            act_grads[0] = add(act_grads[0], g_skip);
        else
            act_grads[0] = std::move(g_skip);
        for (size_t l = encoder.size(); l-- > 0;) {
            TensorT<T> g = std::move(act_grads[l]);
            TensorT<T> gzl = relu_backward(g, tr.enc_acts[l]);
            const TensorT<T>& input = l == 0 ? tr.enc_in : tr.enc_acts[l - 1];
            TensorT<T> gin;
            ConvUnitT<T> eg;
            eg.zero_like(encoder[l]);
            encoder[l].backward(gzl, input, TensorT<T>{}, gin, eg);
            accumulate(grads.encoder[l], eg);
            if (l == 0) {
                if (grad_enc_in) *grad_enc_in = std::move(gin);
            } else {
                act_grads[l - 1] = act_grads[l - 1].numel() == 0
                                       ? std::move(gin)
                                       : add(act_grads[l - 1], gin);
            }
        }
    }

    // Stable parameter enumeration; drives the optimizer, serialization,
    // and gradient checks.
    void visit_params(
        const std::function<void(const std::string&, TensorT<T>&)>& fn) {
        for (size_t i = 0; i < encoder.size(); ++i) {
            fn("encoder." + std::to_string(i) + ".w", encoder[i].w);
            fn("encoder." + std::to_string(i) + ".b", encoder[i].b);
        }
        visit_unit("adapter", adapter, fn);
        for (size_t i = 0; i < blocks.size(); ++i) {
            visit_unit("block." + std::to_string(i) + ".conv1", blocks[i][0],
                       fn);
            visit_unit("block." + std::to_string(i) + ".conv2", blocks[i][1],
                       fn);
        }
        fn("head.w", head.w);
        fn("head.b", head.b);
    }

    int64_t param_count() const {
        int64_t n = 0;
        for (const auto& u : encoder) n += u.param_count();
        n += adapter.param_count();
        for (const auto& blk : blocks)
            n += blk[0].param_count() + blk[1].param_count();
        n += head.param_count();
        return n;
    }

    struct StageMacs {
        int64_t encoder = 0;
        int64_t fusion_adapter = 0;
        int64_t fusion_blocks = 0;
        int64_t head = 0;
        int64_t total() const {
            return encoder + fusion_adapter + fusion_blocks + head;
        }
    };

    // Alignment and shuffle stages are pure data movement (0 MACs).
    StageMacs stage_macs(int64_t lr_h, int64_t lr_w) const {
        StageMacs m;
        for (const auto& u : encoder) m.encoder += u.macs(lr_h, lr_w);
        m.fusion_adapter = adapter.macs(lr_h, lr_w);
        for (const auto& blk : blocks)
            m.fusion_blocks += blk[0].macs(lr_h, lr_w) +
                               blk[1].macs(lr_h, lr_w);
        m.head = head.macs(lr_h * cfg.r, lr_w * cfg.r);
        return m;
    }

private:
    static void accumulate(ConvUnitT<T>& dst, const ConvUnitT<T>& src) {
        for (size_t i = 0; i < dst.w.data.size(); ++i)
            dst.w.data[i] += src.w.data[i];
        for (size_t i = 0; i < dst.pw.data.size(); ++i)
            dst.pw.data[i] += src.pw.data[i];
        for (size_t i = 0; i < dst.b.data.size(); ++i)
            dst.b.data[i] += src.b.data[i];
    }

    static void visit_unit(
        const std::string& prefix, ConvUnitT<T>& u,
        const std::function<void(const std::string&, TensorT<T>&)>& fn) {
        fn(prefix + ".w", u.w);
        if (u.dws) fn(prefix + ".pw", u.pw);
        fn(prefix + ".b", u.b);
    }

public:
    template <typename U>
    HNetModelT<U> cast() const {
        HNetModelT<U> out;
        out.cfg = cfg;
        out.encoder.resize(encoder.size());
        for (size_t i = 0; i < encoder.size(); ++i)
            cast_unit(encoder[i], out.encoder[i]);
        cast_unit(adapter, out.adapter);
        out.blocks.resize(blocks.size());
        for (size_t i = 0; i < blocks.size(); ++i) {
            cast_unit(blocks[i][0], out.blocks[i][0]);
            cast_unit(blocks[i][1], out.blocks[i][1]);
        }
        cast_unit(head, out.head);
        return out;
    }

private:
    template <typename U>
    static void cast_unit(const ConvUnitT<T>& src, ConvUnitT<U>& dst) {
        dst.dws = src.dws;
        dst.w = src.w.template cast<U>();
        dst.pw = src.pw.template cast<U>();
        dst.b = src.b.template cast<U>();
    }
};

using HNetModel = HNetModelT<float>;

// model.json + weights.bin in a directory.
void save_model(const HNetModel& model, const std::string& dir);
HNetModel load_model(const std::string& dir);
// Same, but the caller pins the configuration it expects; a stored model
// whose architecture differs raises a schema error naming the first
// mismatched field or tensor.
HNetModel load_model(const std::string& dir, const HNetConfig& expected);

// Config (de)serialization shared by the model files and the CLI.
std::string hnet_config_to_json(const HNetConfig& cfg);
HNetConfig hnet_config_from_json(const std::string& text);

}  // namespace fusesr
