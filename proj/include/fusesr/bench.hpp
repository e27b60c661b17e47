#pragma once

// Stage-level runtime and MAC accounting for a model plan at a fixed output
// resolution. Wall-clock numbers are medians over warm runs; MAC counts are
// analytic and exact.

#include <string>

#include "fusesr/model.hpp"

namespace fusesr {

struct BenchConfig {
    HNetConfig model;
    int hr_size = 512;
    int runs = 20;  // timed runs after warmup
    int warmup = 3;
    uint64_t seed = 7;
};

struct StageTimes {
    double encoder_ms = 0.0;
    double alignment_ms = 0.0;
    double fusion_adapter_ms = 0.0;
    double fusion_blocks_ms = 0.0;
    double head_ms = 0.0;
    double total_ms = 0.0;
};

struct BenchReport {
    StageTimes median;
    double spread = 0.0;  // (p90 - p10) / median of total times
    HNetModel::StageMacs macs;
    int64_t params = 0;
    std::string to_json() const;
};

BenchReport run_bench(const BenchConfig& cfg);

}  // namespace fusesr
