// Command-line front end: lut, gen, train, infer, eval, bench, gradcheck.
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "fusesr/bench.hpp"
#include "fusesr/brdf.hpp"
#include "fusesr/dataset.hpp"
#include "fusesr/eval.hpp"
#include "fusesr/gradcheck.hpp"
#include "fusesr/loss.hpp"
#include "fusesr/model.hpp"
#include "fusesr/pfm.hpp"
#include "fusesr/pipeline.hpp"
#include "fusesr/train.hpp"

namespace {

using namespace fusesr;

int cmd_lut(int size, int samples, uint64_t seed, const std::string& out) {
    const EnvBrdfLut lut =
        EnvBrdfLut::build(size, static_cast<uint32_t>(samples), seed);
    lut.save(out);
    std::printf("wrote %s (%dx%d, %d samples/cell, seed %llu)\n", out.c_str(),
                size, size, samples,
                static_cast<unsigned long long>(seed));
    return 0;
}

GradcheckReport run_op_gradchecks();
GradcheckReport run_model_gradcheck(const HNetConfig& cfg);

HNetConfig small_gradcheck_config() {
    HNetConfig cfg;
    cfg.r = 2;
    cfg.lite = true;
    cfg.encoder_channels = {8, 8};
    cfg.fusion_channels = 16;  // lite halves this
    cfg.fusion_blocks = 1;
    return cfg;
}

int cmd_gradcheck(bool full, const std::string& config_path) {
    GradcheckReport rep = run_op_gradchecks();
    if (!config_path.empty()) {
        std::ifstream is(config_path);
        if (!is) throw IoError("gradcheck: cannot open " + config_path);
        std::string text((std::istreambuf_iterator<char>(is)),
                         std::istreambuf_iterator<char>());
        rep.merge(run_model_gradcheck(hnet_config_from_json(text)));
    } else if (full) {
        rep.merge(run_model_gradcheck(small_gradcheck_config()));
    }
    std::printf("gradcheck: %d checked, %d failed, max rel err %.3e (%s)\n",
                rep.checked, rep.failed, rep.max_err, rep.worst.c_str());
    return rep.ok() ? 0 : 1;
}

// Small dual-route checks runnable from the CLI; the full suite lives in
// the test binaries.
GradcheckReport run_op_gradchecks() {
    GradcheckReport all;
    Rng rng(99);

    // conv2d, weights and input
    {
        TensorT<double> x(1, 3, 6, 6), w(4, 3, 3, 3), b(1, 4, 1, 1);
        x.fill_normal(rng, 0.0, 1.0);
        w.fill_normal(rng, 0.0, 0.5);
        b.fill_normal(rng, 0.0, 0.5);
        ProjectionLoss proj(1, 4, 6, 6, 17);
        auto loss = [&]() { return proj.value(conv2d(x, w, &b)); };
        TensorT<double> gx, gw, gb;
        conv2d_backward(proj.output_grad(), x, w, gx, gw, &gb);
        all.merge(check_gradient_block("conv.w", w, gw, loss));
        all.merge(check_gradient_block("conv.b", b, gb, loss));
        all.merge(check_gradient_block("conv.x", x, gx, loss));
    }
    // depthwise
    {
        TensorT<double> x(1, 3, 6, 6), w(3, 1, 3, 3);
        x.fill_normal(rng, 0.0, 1.0);
        w.fill_normal(rng, 0.0, 0.5);
        ProjectionLoss proj(1, 3, 6, 6, 23);
        auto loss = [&]() { return proj.value(depthwise_conv2d(x, w)); };
        TensorT<double> gx, gw;
        depthwise_conv2d_backward(proj.output_grad(), x, w, gx, gw);
        all.merge(check_gradient_block("dws.w", w, gw, loss));
        all.merge(check_gradient_block("dws.x", x, gx, loss));
    }
    return all;
}

GradcheckReport run_model_gradcheck(const HNetConfig& cfg) {
    HNetModelT<double> model =
        HNetModelT<float>(cfg, 404).cast<double>();
    Rng rng(11);
    const int64_t lr_size = 6;
    TensorT<double> enc_in(1, cfg.encoder_in_channels(), lr_size, lr_size);
    TensorT<double> hr(1, kHrGbufChannels, lr_size * cfg.r, lr_size * cfg.r);
    enc_in.fill_normal(rng, 0.0, 1.0);
    hr.fill_normal(rng, 0.0, 1.0);
    ProjectionLoss proj(1, 3, lr_size * cfg.r, lr_size * cfg.r, 31);
    auto loss = [&]() { return proj.value(model.forward(enc_in, hr)); };
    HNetModelT<double>::Trace tr;
    model.forward(enc_in, hr, &tr);
    HNetModelT<double> grads = model.zeros_like();
    model.backward(tr, proj.output_grad(), grads);

    GradcheckReport all;
    std::vector<std::pair<std::string, TensorT<double>*>> params, gparams;
    model.visit_params([&](const std::string& n, TensorT<double>& t) {
        params.emplace_back(n, &t);
    });
    grads.visit_params([&](const std::string& n, TensorT<double>& t) {
        gparams.emplace_back(n, &t);
    });
    for (size_t i = 0; i < params.size(); ++i) {
        const auto idx = sample_indices(params[i].second->numel(), 8,
                                        hash_combine(7, i));
        all.merge(check_gradient_block(params[i].first, *params[i].second,
                                       *gparams[i].second, loss, idx));
    }
    return all;
}

int cmd_infer(const std::string& model_dir, const std::string& data_dir,
              int frame, const std::string& out) {
    const HNetModel model = load_model(model_dir);
    const DatasetIndex idx = load_dataset_index(data_dir);
    const EnvBrdfLut& lut = default_env_lut();
    const Tensor pred = predict_frame(model, idx, frame, lut);
    write_pfm(out, pred);
    std::printf("wrote %s\n", out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fusesr: paired-resolution super-resolution toolkit"};
    app.require_subcommand(1);

    // lut
    auto* lut_cmd = app.add_subcommand("lut", "Precompute the BRDF table");
    int lut_size = 32, lut_samples = 1024;
    uint64_t lut_seed = 1;
    std::string lut_out = "lut.bin";
    lut_cmd->add_option("--size", lut_size, "Grid size per axis");
    lut_cmd->add_option("--samples", lut_samples, "Samples per cell");
    lut_cmd->add_option("--seed", lut_seed, "Integration seed");
    lut_cmd->add_option("--out", lut_out, "Output path")->required();

    // gen
    auto* gen_cmd = app.add_subcommand("gen", "Generate a paired dataset");
    GenConfig gen;
    std::string gen_out, gen_lobes = "both", gen_downsample = "native";
    gen_cmd->add_option("--scene-seed", gen.scene_seed, "Scene seed");
    gen_cmd->add_option("--frames", gen.frames, "Frame count");
    gen_cmd->add_option("--hr", gen.hr_size, "HR resolution");
    gen_cmd->add_option("--r", gen.r, "Upscaling factor");
    gen_cmd->add_option("--lobes", gen_lobes,
                        "Material lobes: diffuse|specular|both");
    gen_cmd->add_option("--downsample", gen_downsample,
                        "LR source: native|box");
    gen_cmd->add_option("--out", gen_out, "Output directory")->required();

    // train
    auto* train_cmd = app.add_subcommand("train", "Train a model");
    TrainConfig tc;
    std::string tr_align = "unshuffle";
    bool tr_no_demod = false, tr_no_hr = false, tr_no_history = false;
    std::vector<int64_t> tr_enc_channels;
    train_cmd->add_option("--data", tc.data_dir, "Dataset directory")
        ->required();
    train_cmd->add_option("--out", tc.out_dir, "Model output directory")
        ->required();
    train_cmd->add_option("--steps", tc.steps, "Optimization steps");
    train_cmd->add_option("--batch", tc.batch, "Batch size");
    train_cmd->add_option("--crop", tc.crop, "LR crop size");
    train_cmd->add_option("--lr", tc.adam.lr, "Learning rate");
    train_cmd->add_option("--seed", tc.seed, "Init/sampling seed");
    train_cmd->add_option("--r", tc.model.r, "Upscaling factor");
    train_cmd->add_flag("--lite", tc.model.lite, "Lite variant");
    train_cmd->add_flag("--no-demod", tr_no_demod,
                        "Train on raw radiance (ablation)");
    train_cmd->add_flag("--no-hr-gbuffer", tr_no_hr,
                        "Drop the HR branch (ablation)");
    train_cmd->add_flag("--no-history", tr_no_history,
                        "Drop history frames");
    train_cmd->add_option("--alignment", tr_align,
                          "HR alignment: unshuffle|avgpool|maxpool");
    train_cmd->add_option("--encoder-channels", tr_enc_channels,
                          "Encoder channel plan");
    train_cmd->add_option("--fusion-channels", tc.model.fusion_channels,
                          "Fusion width");
    train_cmd->add_option("--fusion-blocks", tc.model.fusion_blocks,
                          "Fusion residual blocks");
    train_cmd->add_option("--lambda-p", tc.loss.lambda_p,
                          "Perceptual loss weight");
    train_cmd->add_option("--lambda-s", tc.loss.lambda_s,
                          "SSIM loss weight");
    train_cmd->add_option("--train-split", tc.train_split,
                          "Leading train fraction");
    train_cmd->add_option("--frames", tc.restrict_frames,
                          "Train on exactly these frames");
    train_cmd->add_option("--checkpoint-every", tc.checkpoint_every,
                          "Checkpoint interval (steps)");
    train_cmd->add_option("--checkpoint", tc.checkpoint_path,
                          "Checkpoint file path");
    train_cmd->add_option("--resume", tc.resume_from,
                          "Resume from checkpoint");
    train_cmd->add_option("--log", tc.log_csv, "Loss log CSV");

    // infer
    auto* infer_cmd = app.add_subcommand("infer", "Predict one frame");
    std::string inf_model, inf_data, inf_out = "pred.pfm";
    int inf_frame = 0;
    infer_cmd->add_option("--model", inf_model, "Model directory")
        ->required();
    infer_cmd->add_option("--data", inf_data, "Dataset directory")
        ->required();
    infer_cmd->add_option("--frame", inf_frame, "Frame index");
    infer_cmd->add_option("--out", inf_out, "Output PFM path");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate predictions");
    EvalConfig ec;
    eval_cmd->add_option("--data", ec.data_dir, "Dataset directory")
        ->required();
    eval_cmd->add_option("--model", ec.model_dir, "Model directory");
    eval_cmd->add_option("--method", ec.method,
                         "model|bicubic|bilinear|reference");
    eval_cmd->add_option("--out", ec.out_csv, "Output CSV")->required();
    eval_cmd->add_flag("--all-frames", ec.all_frames,
                       "Evaluate every frame, not the held-out tail");
    eval_cmd->add_option("--eval-split", ec.eval_split,
                         "Held-out split point");

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "Time model stages");
    BenchConfig bc;
    std::string bench_out;
    bench_cmd->add_option("--r", bc.model.r, "Upscaling factor");
    bench_cmd->add_option("--hr", bc.hr_size, "HR resolution");
    bench_cmd->add_flag("--lite", bc.model.lite, "Lite variant");
    bench_cmd->add_option("--runs", bc.runs, "Timed runs");
    bench_cmd->add_option("--warmup", bc.warmup, "Warmup runs");
    bench_cmd->add_option("--out", bench_out, "Write report JSON here");

    // gradcheck
    auto* gc_cmd = app.add_subcommand("gradcheck", "Verify gradients");
    bool gc_full = false;
    std::string gc_config;
    gc_cmd->add_flag("--full", gc_full, "Include the model-level check");
    gc_cmd->add_option("--config", gc_config,
                       "Model config JSON to gradcheck");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*lut_cmd) return cmd_lut(lut_size, lut_samples, lut_seed, lut_out);
        if (*gen_cmd) {
            gen.lobes = lobe_mode_from_name(gen_lobes);
            if (gen_downsample == "native")
                gen.lr_mode = LrMode::native;
            else if (gen_downsample == "box")
                gen.lr_mode = LrMode::box;
            else
                throw ConfigError("gen: unknown downsample mode '" +
                                  gen_downsample + "'");
            generate_dataset(gen, gen_out);
            std::printf("wrote %d frame pairs to %s\n", gen.frames,
                        gen_out.c_str());
            return 0;
        }
        if (*train_cmd) {
            tc.model.use_demodulation = !tr_no_demod;
            tc.model.use_hr_gbuffer = !tr_no_hr;
            tc.model.use_history = !tr_no_history;
            tc.model.alignment = alignment_from_name(tr_align);
            if (!tr_enc_channels.empty())
                tc.model.encoder_channels = tr_enc_channels;
            const TrainReport rep = train_model(tc);
            std::printf("trained %d steps, final loss %.6f, model at %s\n",
                        rep.steps_run, rep.final_loss,
                        rep.model_dir.c_str());
            return 0;
        }
        if (*infer_cmd)
            return cmd_infer(inf_model, inf_data, inf_frame, inf_out);
        if (*eval_cmd) {
            if (ec.method == "model" && ec.model_dir.empty())
                throw ConfigError("eval: --model required for method=model");
            const EvalReport rep = run_eval(ec);
            std::printf("eval %s: mean psnr %.3f dB, mean ssim %.4f (%zu "
                        "frames)\n",
                        ec.method.c_str(), rep.mean_psnr_db, rep.mean_ssim,
                        rep.rows.size());
            return 0;
        }
        if (*bench_cmd) {
            const BenchReport rep = run_bench(bc);
            const std::string j = rep.to_json();
            if (!bench_out.empty()) {
                std::ofstream os(bench_out);
                if (!os) throw IoError("bench: cannot write " + bench_out);
                os << j << "\n";
            }
            std::printf("%s\n", j.c_str());
            return 0;
        }
        if (*gc_cmd) return cmd_gradcheck(gc_full, gc_config);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 1;
    }
    return 2;
}
