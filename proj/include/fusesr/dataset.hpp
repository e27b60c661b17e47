#pragma once

// Procedural paired-resolution dataset: analytic sphere/plane scenes with
// seeded textures, direct lighting (no shadows), rigid per-object motion
// tracks, and exact analytic motion vectors. Each frame is rendered by point
// sampling pixel centers at the target resolution; the low-resolution pass
// is rendered natively by default (box-filtered from HR as an option).

#include <cstdint>
#include <string>
#include <vector>

#include "fusesr/brdf.hpp"
#include "fusesr/tensor.hpp"

namespace fusesr {

// One rendered frame. All tensors are (1, c, h, w); motion is (1, 2, h, w)
// in this frame's own pixel units, pointing from the current pixel to the
// same surface point's position in the previous frame.
struct FrameData {
    Tensor color;      // 3: outgoing radiance, linear
    Tensor albedo;     // 3: reflectance (serves as F0 and diffuse albedo)
    Tensor roughness;  // 1: perceptual roughness
    Tensor normal;     // 3: world-space unit normal
    Tensor ndotv;      // 1: clamped N.V
    Tensor emissive;   // 3: emitted radiance
    Tensor depth;      // 1: camera-space forward distance
    Tensor motion;     // 2: (dx, dy) to the previous frame
};

struct FramePair {
    FrameData hr, lr;
};

enum class LobeMode { diffuse_only, specular_only, diffuse_specular };
enum class LrMode { native, box };

const char* lobe_mode_name(LobeMode m);
LobeMode lobe_mode_from_name(const std::string& s);

// ---- camera ----

struct Camera {
    ggx::Vec3 pos;
    ggx::Vec3 right, up, forward;  // orthonormal, forward = viewing axis
    double vfov = 1.0;             // vertical field of view, radians
    int w = 0, h = 0;

    double focal() const { return (h / 2.0) / std::tan(vfov / 2.0); }

    // World point to continuous pixel coordinates. False if behind camera.
    bool project(const ggx::Vec3& p, double& px, double& py) const;

    // Unit ray direction through a continuous pixel coordinate; the exact
    // inverse of project.
    ggx::Vec3 ray_dir(double px, double py) const;
};

// ---- scene ----

struct ProceduralTexture {
    enum Kind { constant, checker, noise } kind = constant;
    double scale = 1.0;
    ggx::Vec3 color_a, color_b;
    uint64_t seed = 0;

    ggx::Vec3 sample(const ggx::Vec3& local) const;
};

struct SceneObject {
    enum Kind { plane, sphere } kind = plane;
    // plane: passes through `anchor` with unit `normal` (faces the camera
    // side); sphere: center `anchor` at frame 0, radius `radius`.
    ggx::Vec3 anchor;
    ggx::Vec3 normal;
    double radius = 1.0;
    // Rigid translation track: center(t) = anchor + amp .* sin(freq*t + ph).
    ggx::Vec3 motion_amp, motion_freq, motion_phase;

    ProceduralTexture reflectance;
    double rough_base = 0.5;
    double rough_amp = 0.0;  // roughness = clamp(base + amp*(noise*2-1))
    uint64_t rough_seed = 0;
    // Normal detail: shading normal = normalize(n + amp * noise vector).
    // Adds sub-pixel shading variation that flat analytic geometry lacks;
    // the G-buffer stores the perturbed normal. Smooth noise by default;
    // facet mode quantizes the perturbation to two levels per axis, giving
    // piecewise-constant micro-facets instead of rolling detail.
    double bump_amp = 0.0;
    double bump_scale = 8.0;
    uint64_t bump_seed = 0;
    bool bump_facet = false;
    ggx::Vec3 emissive;

    ggx::Vec3 center_at(double t) const;
};

struct Light {
    enum Kind { directional, point } kind = directional;
    ggx::Vec3 dir_or_pos;  // unit direction of travel, or world position
    ggx::Vec3 intensity;   // irradiance (directional) or radiant intensity
};

struct Scene {
    std::vector<SceneObject> objects;
    std::vector<Light> lights;
    ggx::Vec3 ambient;  // constant environment radiance
    LobeMode lobes = LobeMode::diffuse_specular;
    Camera camera;          // orientation fixed; w/h set per render pass
    ggx::Vec3 pan_velocity; // camera position at frame t = pos + t * pan

    // Camera for frame t at the given resolution (pan applied).
    Camera camera_at(double t, int w, int h) const;

    // Deterministic procedural scene: enclosing room, textured floor,
    // several moving spheres, mixed lights. Pan stays zero.
    static Scene generate(uint64_t seed, LobeMode lobes);
};

// Shading result for the ray through one continuous pixel coordinate.
struct ShadeSample {
    bool hit = false;
    int object = -1;  // index into scene.objects; -1 on miss
    ggx::Vec3 pos;    // world-space hit point (valid when hit)
    ggx::Vec3 color, albedo, normal, emissive;
    double roughness = 0.0, ndotv = 1.0, depth = 0.0;
};

// Evaluates the renderer for the ray through continuous pixel (px, py) of
// `cam` at time t. Pixel (x, y) of a pass corresponds to (x+0.5, y+0.5);
// render_frame is exactly this at every pixel center, plus the motion
// projection. Because focal length scales linearly with resolution, pixel
// centers of an r-times-downscaled pass trace bitwise-identical rays to the
// corresponding continuous coordinates of the full-resolution pass for
// power-of-two r.
ShadeSample shade_at(const Scene& scene, const Camera& cam, double px,
                     double py, double t, const EnvBrdfLut* ambient_lut);

// Renders one frame at (w, h). The LUT supplies the preintegrated specular
// response to the ambient term; pass nullptr to skip ambient specular.
FrameData render_frame(const Scene& scene, int frame, int w, int h,
                       const EnvBrdfLut* ambient_lut);

// ---- dataset generation and bundle I/O ----

struct GenConfig {
    uint64_t scene_seed = 1;
    int frames = 8;
    int hr_size = 512;
    int r = 4;
    LobeMode lobes = LobeMode::diffuse_specular;
    LrMode lr_mode = LrMode::native;
};

void generate_dataset(const GenConfig& cfg, const std::string& out_dir);
// Same, but renders the given scene instead of generating one from the seed.
void generate_dataset(const GenConfig& cfg, const std::string& out_dir,
                      const Scene* scene_override);

// Writes the eight channel maps plus manifest.json (frame index, resolution,
// per-channel dims, camera basis when provided).
void save_frame_bundle(const std::string& frame_dir, const FrameData& f,
                       int frame_index = 0, const Camera* camera = nullptr);
// Throws SchemaError naming the first missing or mismatched channel; the
// bundle manifest must list every channel with dims that match its file.
FrameData load_frame_bundle(const std::string& frame_dir);

struct DatasetIndex {
    uint64_t scene_seed = 0;
    int frames = 0;
    int r = 0;
    int64_t hr_h = 0, hr_w = 0, lr_h = 0, lr_w = 0;
    std::string root;
    std::vector<std::string> hr_dirs, lr_dirs;  // relative to root
};

DatasetIndex load_dataset_index(const std::string& dir);
FramePair load_frame_pair(const DatasetIndex& idx, int frame);

}  // namespace fusesr
