#pragma once

// Frame-by-frame evaluation: PSNR and SSIM of tone-mapped predictions
// against tone-mapped references, written as CSV with an exact-mean
// aggregate row.

#include <string>
#include <vector>

#include "fusesr/model.hpp"

namespace fusesr {

struct EvalConfig {
    std::string data_dir;
    std::string model_dir;          // used when method == "model"
    std::string method = "model";   // model | bicubic | bilinear | reference
    std::string out_csv;
    double eval_split = 0.8;  // evaluate frames past this fraction
    bool all_frames = false;
};

struct EvalRow {
    int frame = 0;
    double psnr_db = 0.0;
    double ssim = 0.0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    double mean_psnr_db = 0.0;
    double mean_ssim = 0.0;
};

// Renders predictions per frame, computes metrics, optionally writes the
// CSV. "bicubic" and "bilinear" upsample the LR color; "reference" scores
// the HR frame against itself (metric sanity path).
EvalReport run_eval(const EvalConfig& cfg);

void write_eval_csv(const std::string& path, const EvalReport& report);

// Full-frame prediction for one frame of a dataset.
Tensor predict_frame(const HNetModel& model, const struct DatasetIndex& idx,
                     int frame, const class EnvBrdfLut& lut);

}  // namespace fusesr
