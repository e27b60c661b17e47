#include "fusesr/bench.hpp"

#include <algorithm>
#include <chrono>

#include <json.hpp>

namespace fusesr {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0)
        .count();
}

// Mirrors the model forward pass with a timer around each stage.
StageTimes timed_forward(const HNetModel& model, const Tensor& enc_in,
                         const Tensor& hr_gbuf) {
    StageTimes st;
    auto t0 = Clock::now();
    Tensor cur = enc_in;
    std::vector<Tensor> acts;
    for (const auto& u : model.encoder) {
        cur = relu(u.forward(cur));
        acts.push_back(cur);
    }
    st.encoder_ms = ms_since(t0);

    t0 = Clock::now();
    Tensor fusion_in;
    if (model.cfg.use_hr_gbuffer) {
        Tensor aligned = model.align(hr_gbuf);
        st.alignment_ms = ms_since(t0);
        t0 = Clock::now();
        fusion_in = concat_channels(acts.back(), aligned);
    } else {
        fusion_in = acts.back();
    }
    Tensor x = relu(model.adapter.forward(fusion_in));
    st.fusion_adapter_ms = ms_since(t0);

    t0 = Clock::now();
    for (const auto& blk : model.blocks) {
        Tensor v = relu(blk[0].forward(x));
        x = add(blk[1].forward(v), x);
    }
    st.fusion_blocks_ms = ms_since(t0);

    t0 = Clock::now();
    Tensor head_cat = concat_channels(acts.front(), x);
    Tensor shuffled = pixel_shuffle(head_cat, model.cfg.r);
    Tensor out = relu(model.head.forward(shuffled));
    st.head_ms = ms_since(t0);

    st.total_ms = st.encoder_ms + st.alignment_ms + st.fusion_adapter_ms +
                  st.fusion_blocks_ms + st.head_ms;
    // Keep the result alive so the work cannot be elided.
    if (out.data.empty()) st.total_ms = -1.0;
    return st;
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double percentile_of(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    const double pos = p * static_cast<double>(v.size() - 1);
    const size_t lo = static_cast<size_t>(pos);
    const size_t hi = std::min(lo + 1, v.size() - 1);
    const double f = pos - static_cast<double>(lo);
    return v[lo] * (1.0 - f) + v[hi] * f;
}

}  // namespace

BenchReport run_bench(const BenchConfig& cfg) {
    cfg.model.validate();
    if (cfg.hr_size % cfg.model.r != 0)
        throw ConfigError("bench: hr size must be divisible by r");
    if (cfg.runs < 1) throw ConfigError("bench: need at least one run");
    const int lr = cfg.hr_size / cfg.model.r;

    HNetModel model(cfg.model, cfg.seed);
    Rng rng(hash_combine(cfg.seed, 0xbe7cull));
    Tensor enc_in(1, cfg.model.encoder_in_channels(), lr, lr);
    enc_in.fill_uniform(rng, 0.0f, 1.0f);
    Tensor hr_gbuf;
    if (cfg.model.use_hr_gbuffer) {
        hr_gbuf = Tensor(1, kHrGbufChannels, cfg.hr_size, cfg.hr_size);
        hr_gbuf.fill_uniform(rng, 0.0f, 1.0f);
    }

    for (int i = 0; i < cfg.warmup; ++i)
        timed_forward(model, enc_in, hr_gbuf);

    std::vector<StageTimes> runs;
    runs.reserve(static_cast<size_t>(cfg.runs));
    for (int i = 0; i < cfg.runs; ++i)
        runs.push_back(timed_forward(model, enc_in, hr_gbuf));

    auto collect = [&](double StageTimes::*field) {
        std::vector<double> v;
        v.reserve(runs.size());
        for (const auto& r : runs) v.push_back(r.*field);
        return v;
    };

    BenchReport rep;
    rep.median.encoder_ms = median_of(collect(&StageTimes::encoder_ms));
    rep.median.alignment_ms = median_of(collect(&StageTimes::alignment_ms));
    rep.median.fusion_adapter_ms =
        median_of(collect(&StageTimes::fusion_adapter_ms));
    rep.median.fusion_blocks_ms =
        median_of(collect(&StageTimes::fusion_blocks_ms));
    rep.median.head_ms = median_of(collect(&StageTimes::head_ms));
    const auto totals = collect(&StageTimes::total_ms);
    rep.median.total_ms = median_of(totals);
    rep.spread = (percentile_of(totals, 0.9) - percentile_of(totals, 0.1)) /
                 rep.median.total_ms;
    rep.macs = model.stage_macs(lr, lr);
    rep.params = model.param_count();
    return rep;
}

std::string BenchReport::to_json() const {
    nlohmann::json j;
    j["median_ms"] = {{"encoder", median.encoder_ms},
                      {"alignment", median.alignment_ms},
                      {"fusion_adapter", median.fusion_adapter_ms},
                      {"fusion_blocks", median.fusion_blocks_ms},
                      {"head", median.head_ms},
                      {"total", median.total_ms}};
    j["spread"] = spread;
    j["macs"] = {{"encoder", macs.encoder},
                 {"fusion_adapter", macs.fusion_adapter},
                 {"fusion_blocks", macs.fusion_blocks},
                 {"head", macs.head},
                 {"total", macs.total()}};
    j["params"] = params;
    return j.dump(2);
}

}  // namespace fusesr
