#pragma once

// Adam optimizer, checkpointing, and the training loop. Training is
// single-threaded and all randomness flows through explicitly seeded
// generators, so identical configs produce bitwise identical weights, and a
// checkpoint resume continues the exact same trajectory.

#include <string>
#include <vector>

#include "fusesr/brdf.hpp"
#include "fusesr/loss.hpp"
#include "fusesr/model.hpp"

namespace fusesr {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    explicit Adam(const AdamConfig& cfg = {}) : cfg_(cfg) {}

    // params and grads must enumerate the same tensors in the same order
    // every call. State tensors are created on first use.
    void step(const std::vector<Tensor*>& params,
              const std::vector<const Tensor*>& grads);

    int64_t step_count() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

    std::vector<Tensor>& moment1() { return m_; }
    std::vector<Tensor>& moment2() { return v_; }
    void restore(int64_t t, std::vector<Tensor> m, std::vector<Tensor> v) {
        t_ = t;
        m_ = std::move(m);
        v_ = std::move(v);
    }

private:
    AdamConfig cfg_;
    int64_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

// Default preintegration table used by training and evaluation, pinned so
// separate invocations agree bit-for-bit. Built lazily once per process.
const EnvBrdfLut& default_env_lut();

struct TrainConfig {
    std::string data_dir;
    std::string out_dir;
    HNetConfig model;
    FbetaMode fbeta_mode = FbetaMode::diffuse_specular;
    LossWeights loss;
    AdamConfig adam;
    int steps = 2000;
    int batch = 4;
    int crop = 64;  // LR-space crop size
    uint64_t seed = 1;
    double train_split = 0.8;  // leading fraction of frames used to train
    int checkpoint_every = 0;  // 0 disables periodic checkpoints
    std::string checkpoint_path;
    std::string resume_from;
    std::string log_csv;
    // Overfit mode: train on exactly these frames (indices into the
    // dataset), ignoring the split.
    std::vector<int> restrict_frames;
};

struct TrainReport {
    int steps_run = 0;
    double final_loss = 0.0;
    std::vector<double> loss_history;
    // Moving average of the loss over the last `window` steps, sampled at
    // the start and end of training.
    double moving_avg_first = 0.0;
    double moving_avg_last = 0.0;
    std::string model_dir;
};

TrainReport train_model(const TrainConfig& cfg);

// Checkpoint = weights + optimizer moments + sampler RNG + step counter.
void save_checkpoint(const std::string& path, const HNetModel& model,
                     Adam& opt, const Rng& sampler, int step);
void load_checkpoint(const std::string& path, HNetModel& model, Adam& opt,
                     Rng& sampler, int& step);

}  // namespace fusesr
