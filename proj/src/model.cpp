#include "fusesr/model.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "fusesr/serialize.hpp"

namespace fusesr {

namespace {

nlohmann::json config_json(const HNetConfig& cfg) {
    return {{"r", cfg.r},
            {"lite", cfg.lite},
            {"use_history", cfg.use_history},
            {"use_demodulation", cfg.use_demodulation},
            {"use_hr_gbuffer", cfg.use_hr_gbuffer},
            {"alignment", alignment_name(cfg.alignment)},
            {"encoder_channels", cfg.encoder_channels},
            {"fusion_channels", cfg.fusion_channels},
            {"fusion_blocks", cfg.fusion_blocks}};
}

HNetConfig config_from(const nlohmann::json& j) {
    HNetConfig cfg;
    cfg.r = j.at("r").get<int>();
    cfg.lite = j.at("lite").get<bool>();
    cfg.use_history = j.at("use_history").get<bool>();
    cfg.use_demodulation = j.at("use_demodulation").get<bool>();
    cfg.use_hr_gbuffer = j.at("use_hr_gbuffer").get<bool>();
    cfg.alignment = alignment_from_name(j.at("alignment").get<std::string>());
    cfg.encoder_channels = j.at("encoder_channels").get<std::vector<int64_t>>();
    cfg.fusion_channels = j.at("fusion_channels").get<int64_t>();
    cfg.fusion_blocks = j.at("fusion_blocks").get<int>();
    cfg.validate();
    return cfg;
}

}  // namespace

std::string hnet_config_to_json(const HNetConfig& cfg) {
    return config_json(cfg).dump(2);
}

HNetConfig hnet_config_from_json(const std::string& text) {
    try {
        return config_from(nlohmann::json::parse(text));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
}

void save_model(const HNetModel& model, const std::string& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream os(dir + "/model.json");
        if (!os) throw IoError("save_model: cannot write " + dir +
                               "/model.json");
        os << hnet_config_to_json(model.cfg) << "\n";
    }
    std::vector<std::pair<std::string, const Tensor*>> tensors;
    const_cast<HNetModel&>(model).visit_params(
        [&](const std::string& name, Tensor& t) {
            tensors.emplace_back(name, &t);
        });
    save_tensor_file(dir + "/weights.bin", tensors,
                     {{"kind", "model_weights"}});
}

HNetModel load_model(const std::string& dir) {
    std::ifstream is(dir + "/model.json");
    if (!is) throw IoError("load_model: cannot open " + dir + "/model.json");
    std::string text((std::istreambuf_iterator<char>(is)),
                     std::istreambuf_iterator<char>());
    const HNetConfig cfg = hnet_config_from_json(text);
    HNetModel model(cfg, 0);
    TensorFile tf = load_tensor_file(dir + "/weights.bin");
    model.visit_params([&](const std::string& name, Tensor& t) {
        const Tensor& stored = tf.find(name);
        if (!stored.same_shape(t))
            throw FormatError("load_model: tensor '" + name + "' has shape " +
                              stored.shape_str() + ", expected " +
                              t.shape_str());
        t = stored;
    });
    return model;
}

HNetModel load_model(const std::string& dir, const HNetConfig& expected) {
    HNetModel model = load_model(dir);
    const HNetConfig& got = model.cfg;
    auto fail = [&](const std::string& what) {
        throw SchemaError("load_model: stored model does not match the "
                          "expected configuration: " + what);
    };
    if (got.r != expected.r)
        fail("upscaling factor is " + std::to_string(got.r) + ", expected " +
             std::to_string(expected.r) + " (pixel-shuffle head and "
             "g-buffer alignment layers change shape with r)");
    if (got.lite != expected.lite) fail("lite flag differs");
    if (got.use_history != expected.use_history)
        fail("history flag differs (encoder input layer width)");
    if (got.use_demodulation != expected.use_demodulation)
        fail("demodulation flag differs");
    if (got.use_hr_gbuffer != expected.use_hr_gbuffer)
        fail("hr g-buffer flag differs (fusion adapter input width)");
    if (got.alignment != expected.alignment)
        fail(std::string("alignment is ") + alignment_name(got.alignment) +
             ", expected " + alignment_name(expected.alignment));
    if (got.encoder_channels != expected.encoder_channels)
        fail("encoder channel widths differ");
    if (got.fusion_channels != expected.fusion_channels)
        fail("fusion channel width differs");
    if (got.fusion_blocks != expected.fusion_blocks)
        fail("fusion block count differs");
    return model;
}

}  // namespace fusesr
