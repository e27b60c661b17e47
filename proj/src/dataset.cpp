#include "fusesr/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "fusesr/ops.hpp"
#include "fusesr/pfm.hpp"

namespace fusesr {

namespace {

constexpr double kPi = 3.14159265358979323846;

using ggx::Vec3;

Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
Vec3 mul(Vec3 a, Vec3 b) { return {a.x * b.x, a.y * b.y, a.z * b.z}; }

double lattice_hash(uint64_t seed, int64_t x, int64_t y, int64_t z) {
    uint64_t h = hash_combine(seed, static_cast<uint64_t>(x));
    h = hash_combine(h, static_cast<uint64_t>(y));
    h = hash_combine(h, static_cast<uint64_t>(z));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double fade(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise3(uint64_t seed, Vec3 p) {
    const int64_t ix = static_cast<int64_t>(std::floor(p.x));
    const int64_t iy = static_cast<int64_t>(std::floor(p.y));
    const int64_t iz = static_cast<int64_t>(std::floor(p.z));
    const double fx = fade(p.x - std::floor(p.x));
    const double fy = fade(p.y - std::floor(p.y));
    const double fz = fade(p.z - std::floor(p.z));
    double c[2][2][2];
    for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx)
                c[dz][dy][dx] = lattice_hash(seed, ix + dx, iy + dy, iz + dz);
    auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };
    const double x00 = lerp(c[0][0][0], c[0][0][1], fx);
    const double x01 = lerp(c[0][1][0], c[0][1][1], fx);
    const double x10 = lerp(c[1][0][0], c[1][0][1], fx);
    const double x11 = lerp(c[1][1][0], c[1][1][1], fx);
    const double y0 = lerp(x00, x01, fy);
    const double y1 = lerp(x10, x11, fy);
    return lerp(y0, y1, fz);
}

}  // namespace

const char* lobe_mode_name(LobeMode m) {
    switch (m) {
        case LobeMode::diffuse_only: return "diffuse";
        case LobeMode::specular_only: return "specular";
        case LobeMode::diffuse_specular: return "both";
    }
    return "both";
}

LobeMode lobe_mode_from_name(const std::string& s) {
    if (s == "diffuse") return LobeMode::diffuse_only;
    if (s == "specular") return LobeMode::specular_only;
    if (s == "both") return LobeMode::diffuse_specular;
    throw ConfigError("unknown lobe mode '" + s + "'");
}

bool Camera::project(const Vec3& p, double& px, double& py) const {
    const Vec3 d = p - pos;
    const double xc = ggx::dot(d, right);
    const double yc = ggx::dot(d, up);
    const double zc = ggx::dot(d, forward);
    if (zc <= 1e-9) return false;
    const double f = focal();
    px = w / 2.0 + f * (xc / zc);
    py = h / 2.0 - f * (yc / zc);
    return true;
}

Vec3 Camera::ray_dir(double px, double py) const {
    const double f = focal();
    const double xc = (px - w / 2.0) / f;
    const double yc = -(py - h / 2.0) / f;
    return ggx::normalize(xc * right + yc * up + 1.0 * forward);
}

Camera Scene::camera_at(double t, int w, int h) const {
    Camera cam = camera;
    cam.pos = camera.pos + t * pan_velocity;
    cam.w = w;
    cam.h = h;
    return cam;
}

Vec3 ProceduralTexture::sample(const Vec3& local) const {
    switch (kind) {
        case constant:
            return color_a;
        case checker: {
            const int64_t s =
                static_cast<int64_t>(std::floor(local.x * scale)) +
                static_cast<int64_t>(std::floor(local.y * scale)) +
                static_cast<int64_t>(std::floor(local.z * scale));
            return ((s % 2) + 2) % 2 == 0 ? color_a : color_b;
        }
        case noise: {
            const double n1 = value_noise3(seed, scale * local);
            const double n2 =
                value_noise3(seed ^ 0x517cc1b727220a95ull, (2.3 * scale) * local);
            const double t = 0.65 * n1 + 0.35 * n2;
            return {color_a.x + (color_b.x - color_a.x) * t,
                    color_a.y + (color_b.y - color_a.y) * t,
                    color_a.z + (color_b.z - color_a.z) * t};
        }
    }
    return color_a;
}

Vec3 SceneObject::center_at(double t) const {
    return {anchor.x + motion_amp.x * std::sin(motion_freq.x * t +
                                               motion_phase.x),
            anchor.y + motion_amp.y * std::sin(motion_freq.y * t +
                                               motion_phase.y),
            anchor.z + motion_amp.z * std::sin(motion_freq.z * t +
                                               motion_phase.z)};
}

Scene Scene::generate(uint64_t seed, LobeMode lobes) {
    Rng rng(hash_combine(seed, 0x5ce11eull));
    Scene s;
    s.lobes = lobes;

    auto rand_color = [&](double lo, double hi) -> Vec3 {
        return {rng.uniform(lo, hi), rng.uniform(lo, hi),
                rng.uniform(lo, hi)};
    };

    // Enclosing room: floor, ceiling, four walls, all static.
    auto add_plane = [&](Vec3 anchor, Vec3 normal, ProceduralTexture tex,
                         double rough) {
        SceneObject o;
        o.kind = SceneObject::plane;
        o.anchor = anchor;
        o.normal = normal;
        o.reflectance = tex;
        o.rough_base = rough;
        s.objects.push_back(o);
    };

    // High-frequency normal detail drives shading variation the low-res
    // pass cannot resolve, which is what the high-res G-buffer is for.
    auto add_bump = [&](double lo, double hi) {
        SceneObject& o = s.objects.back();
        o.bump_amp = rng.uniform(lo, hi);
        o.bump_scale = rng.uniform(8.0, 20.0);
        o.bump_seed = rng.next_u64();
    };

    ProceduralTexture floor_tex;
    floor_tex.kind = ProceduralTexture::checker;
    floor_tex.scale = rng.uniform(1.2, 3.0);
    floor_tex.color_a = rand_color(0.08, 0.30);
    floor_tex.color_b = rand_color(0.55, 0.90);
    add_plane({0, 0, 0}, {0, 1, 0}, floor_tex, rng.uniform(0.15, 0.45));
    add_bump(0.25, 0.5);

    ProceduralTexture ceil_tex;
    ceil_tex.kind = ProceduralTexture::constant;
    ceil_tex.color_a = rand_color(0.35, 0.7);
    add_plane({0, 6, 0}, {0, -1, 0}, ceil_tex, rng.uniform(0.5, 0.9));

    auto wall_tex = [&]() {
        ProceduralTexture t;
        if (rng.uniform() < 0.5) {
            t.kind = ProceduralTexture::noise;
            t.scale = rng.uniform(0.5, 1.8);
            t.seed = rng.next_u64();
            t.color_a = rand_color(0.15, 0.45);
            t.color_b = rand_color(0.45, 0.85);
        } else {
            t.kind = ProceduralTexture::checker;
            t.scale = rng.uniform(0.6, 1.6);
            t.color_a = rand_color(0.2, 0.45);
            t.color_b = rand_color(0.45, 0.8);
        }
        return t;
    };
    add_plane({0, 0, 10}, {0, 0, -1}, wall_tex(), rng.uniform(0.25, 0.8));
    if (rng.uniform() < 0.5) add_bump(0.15, 0.35);
    add_plane({0, 0, -3}, {0, 0, 1}, wall_tex(), rng.uniform(0.25, 0.8));
    if (rng.uniform() < 0.5) add_bump(0.15, 0.35);
    add_plane({-6, 0, 0}, {1, 0, 0}, wall_tex(), rng.uniform(0.25, 0.8));
    if (rng.uniform() < 0.5) add_bump(0.15, 0.35);
    add_plane({6, 0, 0}, {-1, 0, 0}, wall_tex(), rng.uniform(0.25, 0.8));
    if (rng.uniform() < 0.5) add_bump(0.15, 0.35);

    const int n_spheres = 3 + static_cast<int>(rng.uniform_index(3));
    for (int i = 0; i < n_spheres; ++i) {
        SceneObject o;
        o.kind = SceneObject::sphere;
        o.radius = rng.uniform(0.45, 1.1);
        o.anchor = {rng.uniform(-3.5, 3.5),
                    rng.uniform(o.radius + 0.1, 3.0), rng.uniform(3.0, 8.0)};
        o.motion_amp = {rng.uniform(0.0, 0.7),
                        rng.uniform(0.0, std::max(
                            0.0, o.anchor.y - o.radius - 0.05)),
                        rng.uniform(0.0, 0.7)};
        if (o.motion_amp.y > 0.7) o.motion_amp.y = 0.7;
        o.motion_freq = {rng.uniform(0.25, 0.8), rng.uniform(0.25, 0.8),
                         rng.uniform(0.25, 0.8)};
        o.motion_phase = {rng.uniform(0.0, 2 * kPi),
                          rng.uniform(0.0, 2 * kPi),
                          rng.uniform(0.0, 2 * kPi)};
        const double pick = rng.uniform();
        if (pick < 0.45) {
            o.reflectance.kind = ProceduralTexture::checker;
            o.reflectance.scale = rng.uniform(2.0, 6.0);
            o.reflectance.color_a = rand_color(0.10, 0.35);
            o.reflectance.color_b = rand_color(0.5, 0.9);
        } else if (pick < 0.8) {
            o.reflectance.kind = ProceduralTexture::noise;
            o.reflectance.scale = rng.uniform(1.5, 4.0);
            o.reflectance.seed = rng.next_u64();
            o.reflectance.color_a = rand_color(0.10, 0.4);
            o.reflectance.color_b = rand_color(0.45, 0.9);
        } else {
            o.reflectance.kind = ProceduralTexture::constant;
            o.reflectance.color_a = rand_color(0.15, 0.85);
        }
        o.rough_base = rng.uniform(0.12, 0.85);
        if (rng.uniform() < 0.5) {
            o.rough_amp = rng.uniform(0.05, 0.2);
            o.rough_seed = rng.next_u64();
        }
        if (i == 0 && rng.uniform() < 0.4)
            o.emissive = rand_color(0.4, 1.5);
        s.objects.push_back(o);
        if (rng.uniform() < 0.7) add_bump(0.2, 0.5);
    }

    {
        Light sun;
        sun.kind = Light::directional;
        sun.dir_or_pos = ggx::normalize(
            {rng.uniform(-0.5, 0.5), -1.0, rng.uniform(-0.5, 0.5)});
        const double e = rng.uniform(1.2, 2.8);
        sun.intensity = {e * rng.uniform(0.85, 1.0), e * rng.uniform(0.85, 1.0),
                         e * rng.uniform(0.85, 1.0)};
        s.lights.push_back(sun);
    }
    const int n_points = 1 + static_cast<int>(rng.uniform_index(2));
    for (int i = 0; i < n_points; ++i) {
        Light p;
        p.kind = Light::point;
        p.dir_or_pos = {rng.uniform(-3.0, 3.0), rng.uniform(3.5, 5.5),
                        rng.uniform(1.0, 7.0)};
        const double e = rng.uniform(8.0, 25.0);
        p.intensity = {e * rng.uniform(0.8, 1.0), e * rng.uniform(0.8, 1.0),
                       e * rng.uniform(0.8, 1.0)};
        s.lights.push_back(p);
    }
    s.ambient = rand_color(0.04, 0.15);

    s.camera.pos = {rng.uniform(-1.0, 1.0), rng.uniform(1.4, 2.4),
                    rng.uniform(-1.5, -0.2)};
    const Vec3 target = {rng.uniform(-0.8, 0.8), rng.uniform(0.8, 1.8),
                         rng.uniform(4.5, 6.5)};
    s.camera.forward = ggx::normalize(target - s.camera.pos);
    const Vec3 world_up = {0, 1, 0};
    s.camera.right = ggx::normalize(ggx::cross(s.camera.forward, world_up));
    s.camera.up = ggx::cross(s.camera.right, s.camera.forward);
    s.camera.vfov = rng.uniform(55.0, 70.0) * kPi / 180.0;
    return s;
}

namespace {

struct Hit {
    double t = -1.0;
    int object = -1;
    Vec3 pos, normal;
    bool valid() const { return object >= 0; }
};

Hit intersect_scene(const Scene& scene, const Vec3& origin, const Vec3& dir,
                    double time) {
    Hit best;
    best.t = 1e30;
    for (size_t i = 0; i < scene.objects.size(); ++i) {
        const SceneObject& o = scene.objects[i];
        if (o.kind == SceneObject::plane) {
            const double denom = ggx::dot(dir, o.normal);
            if (denom >= -1e-9) continue;  // front faces only
            const double t = ggx::dot(o.anchor - origin, o.normal) / denom;
            if (t > 1e-6 && t < best.t) {
                best.t = t;
                best.object = static_cast<int>(i);
                best.pos = origin + t * dir;
                best.normal = o.normal;
            }
        } else {
            const Vec3 c = o.center_at(time);
            const Vec3 oc = origin - c;
            const double b = ggx::dot(oc, dir);
            const double disc =
                b * b - (ggx::dot(oc, oc) - o.radius * o.radius);
            if (disc < 0.0) continue;
            const double sq = std::sqrt(disc);
            double t = -b - sq;
            if (t <= 1e-6) t = -b + sq;
            if (t > 1e-6 && t < best.t) {
                best.t = t;
                best.object = static_cast<int>(i);
                best.pos = origin + t * dir;
                best.normal = ggx::normalize(
                    {(best.pos.x - c.x) / o.radius,
                     (best.pos.y - c.y) / o.radius,
                     (best.pos.z - c.z) / o.radius});
            }
        }
    }
    if (best.object < 0) best.t = -1.0;
    return best;
}

// Specular response to one light: D * F * G2 / (4 * NoV) * E.
Vec3 specular_term(const Vec3& f0, double alpha, const Vec3& n, const Vec3& v,
                   const Vec3& wi, const Vec3& irradiance) {
    const Vec3 h = ggx::normalize(wi + v);
    const double noh = std::max(0.0, ggx::dot(n, h));
    const double nol = std::max(0.0, ggx::dot(n, wi));
    const double nov = std::max(1e-4, ggx::dot(n, v));
    const double voh = std::max(0.0, ggx::dot(v, h));
    if (nol <= 0.0) return {0, 0, 0};
    const double d = ggx::distribution(noh, alpha);
    const double g2 = ggx::g2_smith_height_correlated(nol, nov, alpha);
    const double fc = ggx::fresnel_schlick_weight(voh);
    const double k = d * g2 / (4.0 * nov);
    const Vec3 f = {f0.x + (1.0 - f0.x) * fc, f0.y + (1.0 - f0.y) * fc,
                    f0.z + (1.0 - f0.z) * fc};
    return {k * f.x * irradiance.x, k * f.y * irradiance.y,
            k * f.z * irradiance.z};
}

}  // namespace

ShadeSample shade_at(const Scene& scene, const Camera& cam, double px,
                     double py, double t, const EnvBrdfLut* ambient_lut) {
    const bool diffuse_on = scene.lobes != LobeMode::specular_only;
    const bool specular_on = scene.lobes != LobeMode::diffuse_only;
    ShadeSample s;
    const Vec3 dir = cam.ray_dir(px, py);
    const Hit hit = intersect_scene(scene, cam.pos, dir, t);
    if (!hit.valid()) {
        s.depth = 1e4;
        s.normal = {-dir.x, -dir.y, -dir.z};
        s.ndotv = 1.0;
        return s;
    }
    const SceneObject& obj = scene.objects[static_cast<size_t>(hit.object)];
    const Vec3 v = {-dir.x, -dir.y, -dir.z};

    // Material, sampled in object-local coordinates so textures ride the
    // rigid motion.
    const Vec3 local = obj.kind == SceneObject::sphere
                           ? hit.pos - obj.center_at(t)
                           : hit.pos - obj.anchor;
    Vec3 n = hit.normal;
    if (obj.bump_amp > 0.0) {
        const Vec3 q = obj.bump_scale * local;
        Vec3 d = {
            2.0 * value_noise3(obj.bump_seed ^ 0x9e3779b97f4a7c15ull, q) - 1.0,
            2.0 * value_noise3(obj.bump_seed ^ 0xbf58476d1ce4e5b9ull, q) - 1.0,
            2.0 * value_noise3(obj.bump_seed ^ 0x94d049bb133111ebull, q) -
                1.0};
        // Facets snap each axis to +-1, so the perturbed normal flips between
        // a few discrete tilts at the noise cell scale instead of rolling.
        if (obj.bump_facet)
            d = {d.x < 0.0 ? -1.0 : 1.0, d.y < 0.0 ? -1.0 : 1.0,
                 d.z < 0.0 ? -1.0 : 1.0};
        n = ggx::normalize(n + obj.bump_amp * d);
    }
    const double ndotv = std::min(1.0, std::max(0.0, ggx::dot(n, v)));
    const Vec3 albedo = obj.reflectance.sample(local);
    double rough = obj.rough_base;
    if (obj.rough_amp > 0.0)
        rough += obj.rough_amp *
                 (2.0 * value_noise3(obj.rough_seed, 3.0 * local) - 1.0);
    rough = std::min(1.0, std::max(0.02, rough));
    const double alpha = ggx::alpha_from_roughness(rough);
    const double kd = scene.lobes == LobeMode::diffuse_specular
                          ? 1.0 - (albedo.x + albedo.y + albedo.z) / 3.0
                          : (diffuse_on ? 1.0 : 0.0);

    Vec3 out = obj.emissive;
    for (const Light& light : scene.lights) {
        Vec3 wi;
        Vec3 e;
        if (light.kind == Light::directional) {
            wi = {-light.dir_or_pos.x, -light.dir_or_pos.y,
                  -light.dir_or_pos.z};
            e = light.intensity;
        } else {
            const Vec3 d = light.dir_or_pos - hit.pos;
            const double d2 = ggx::dot(d, d);
            wi = ggx::normalize(d);
            e = (1.0 / d2) * light.intensity;
        }
        const double nol = ggx::dot(n, wi);
        if (nol <= 0.0) continue;
        if (diffuse_on) {
            const double sd = kd * nol / kPi;
            out = out + mul(sd * albedo, e);
        }
        if (specular_on)
            out = out + specular_term(albedo, alpha, n, v, wi, e);
    }
    // Constant-environment ambient: the Lambertian lobe responds with
    // kd * albedo, the specular lobe with its preintegrated directional
    // albedo.
    if (diffuse_on) out = out + mul(kd * albedo, scene.ambient);
    if (specular_on && ambient_lut) {
        float a = 0.0f, b = 0.0f;
        ambient_lut->query(static_cast<float>(ndotv),
                           static_cast<float>(rough), a, b);
        const Vec3 spec = {albedo.x * a + b, albedo.y * a + b,
                           albedo.z * a + b};
        out = out + mul(spec, scene.ambient);
    }

    s.hit = true;
    s.object = hit.object;
    s.pos = hit.pos;
    s.color = out;
    s.albedo = albedo;
    s.normal = n;
    s.emissive = obj.emissive;
    s.roughness = rough;
    s.ndotv = ndotv;
    s.depth = ggx::dot(hit.pos - cam.pos, cam.forward);
    return s;
}

FrameData render_frame(const Scene& scene, int frame, int w, int h,
                       const EnvBrdfLut* ambient_lut) {
    const double t_now = frame;
    const double t_prev = frame - 1;
    const Camera cam = scene.camera_at(t_now, w, h);
    const Camera cam_prev = scene.camera_at(t_prev, w, h);
    const bool camera_static = cam.pos.x == cam_prev.pos.x &&
                               cam.pos.y == cam_prev.pos.y &&
                               cam.pos.z == cam_prev.pos.z;
    FrameData f;
    f.color = Tensor(1, 3, h, w);
    f.albedo = Tensor(1, 3, h, w);
    f.roughness = Tensor(1, 1, h, w);
    f.normal = Tensor(1, 3, h, w);
    f.ndotv = Tensor(1, 1, h, w);
    f.emissive = Tensor(1, 3, h, w);
    f.depth = Tensor(1, 1, h, w);
    f.motion = Tensor(1, 2, h, w);

    auto put3 = [](Tensor& t, int64_t y, int64_t x, const Vec3& v) {
        t.at(0, 0, y, x) = static_cast<float>(v.x);
        t.at(0, 1, y, x) = static_cast<float>(v.y);
        t.at(0, 2, y, x) = static_cast<float>(v.z);
    };

    for (int64_t py = 0; py < h; ++py)
        for (int64_t px = 0; px < w; ++px) {
            const ShadeSample s =
                shade_at(scene, cam, px + 0.5, py + 0.5, t_now, ambient_lut);
            put3(f.normal, py, px, s.normal);
            f.ndotv.at(0, 0, py, px) = static_cast<float>(s.ndotv);
            f.depth.at(0, 0, py, px) = static_cast<float>(s.depth);
            if (!s.hit) continue;
            put3(f.color, py, px, s.color);
            put3(f.albedo, py, px, s.albedo);
            f.roughness.at(0, 0, py, px) = static_cast<float>(s.roughness);
            put3(f.emissive, py, px, s.emissive);

            // Exact motion to the previous frame (translation-only tracks):
            // the hit point moves with its object, and is projected through
            // the previous frame's camera.
            const SceneObject& obj =
                scene.objects[static_cast<size_t>(s.object)];
            Vec3 pos_prev = s.pos;
            bool object_moved = false;
            if (obj.kind == SceneObject::sphere) {
                const Vec3 c_now = obj.center_at(t_now);
                const Vec3 c_prev = obj.center_at(t_prev);
                if (c_now.x != c_prev.x || c_now.y != c_prev.y ||
                    c_now.z != c_prev.z) {
                    pos_prev = s.pos - c_now + c_prev;
                    object_moved = true;
                }
            }
            // Identical placement in both frames means zero motion by
            // definition; skipping the projection keeps the stored field
            // exactly zero instead of roundtrip noise.
            if (!object_moved && camera_static) continue;
            double ppx = px + 0.5, ppy = py + 0.5;
            cam_prev.project(pos_prev, ppx, ppy);
            f.motion.at(0, 0, py, px) = static_cast<float>(ppx - (px + 0.5));
            f.motion.at(0, 1, py, px) = static_cast<float>(ppy - (py + 0.5));
        }
    return f;
}

namespace {

FrameData box_downsample_frame(const FrameData& hr, int r) {
    FrameData lr;
    lr.color = avgpool_down(hr.color, r);
    lr.albedo = avgpool_down(hr.albedo, r);
    lr.roughness = avgpool_down(hr.roughness, r);
    lr.normal = avgpool_down(hr.normal, r);
    lr.ndotv = avgpool_down(hr.ndotv, r);
    lr.emissive = avgpool_down(hr.emissive, r);
    lr.depth = avgpool_down(hr.depth, r);
    // Motion averages in HR pixel units; rescale to LR pixels.
    lr.motion = scale(avgpool_down(hr.motion, r),
                      1.0f / static_cast<float>(r));
    // Box-averaged normals lose unit length; renormalize.
    for (int64_t y = 0; y < lr.normal.h; ++y)
        for (int64_t x = 0; x < lr.normal.w; ++x) {
            const double nx = lr.normal.at(0, 0, y, x);
            const double ny = lr.normal.at(0, 1, y, x);
            const double nz = lr.normal.at(0, 2, y, x);
            const double len = std::sqrt(nx * nx + ny * ny + nz * nz);
            if (len > 1e-9) {
                lr.normal.at(0, 0, y, x) = static_cast<float>(nx / len);
                lr.normal.at(0, 1, y, x) = static_cast<float>(ny / len);
                lr.normal.at(0, 2, y, x) = static_cast<float>(nz / len);
            }
        }
    return lr;
}

std::string frame_dir_name(int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%05d", i);
    return buf;
}

}  // namespace

void save_frame_bundle(const std::string& frame_dir, const FrameData& f,
                       int frame_index, const Camera* camera) {
    std::filesystem::create_directories(frame_dir);
    write_pfm(frame_dir + "/color.pfm", f.color);
    write_pfm(frame_dir + "/albedo.pfm", f.albedo);
    write_pfm(frame_dir + "/roughness.pfm", f.roughness);
    write_pfm(frame_dir + "/normal.pfm", f.normal);
    write_pfm(frame_dir + "/ndotv.pfm", f.ndotv);
    write_pfm(frame_dir + "/emissive.pfm", f.emissive);
    write_pfm(frame_dir + "/depth.pfm", f.depth);
    // Motion is stored as a 3-channel map with a zero third channel.
    Tensor m3(1, 3, f.motion.h, f.motion.w);
    std::copy(f.motion.plane(0, 0), f.motion.plane(0, 0) + f.motion.h * f.motion.w,
              m3.plane(0, 0));
    std::copy(f.motion.plane(0, 1), f.motion.plane(0, 1) + f.motion.h * f.motion.w,
              m3.plane(0, 1));
    write_pfm(frame_dir + "/motion.pfm", m3);

    nlohmann::json man;
    man["frame_index"] = frame_index;
    man["resolution"] = {f.color.h, f.color.w};
    nlohmann::json chans = nlohmann::json::array();
    auto add = [&](const char* name, const Tensor& t, int64_t file_channels) {
        chans.push_back({{"name", name},
                         {"dtype", "float32"},
                         {"channels", file_channels},
                         {"h", t.h},
                         {"w", t.w}});
    };
    add("color", f.color, 3);
    add("albedo", f.albedo, 3);
    add("roughness", f.roughness, 1);
    add("normal", f.normal, 3);
    add("ndotv", f.ndotv, 1);
    add("emissive", f.emissive, 3);
    add("depth", f.depth, 1);
    add("motion", f.motion, 3);
    man["channels"] = chans;
    if (camera) {
        auto v3 = [](const Vec3& v) {
            return nlohmann::json{v.x, v.y, v.z};
        };
        man["camera"] = {{"pos", v3(camera->pos)},
                         {"right", v3(camera->right)},
                         {"up", v3(camera->up)},
                         {"forward", v3(camera->forward)},
                         {"vfov", camera->vfov}};
    }
    const std::string man_path = frame_dir + "/manifest.json";
    std::ofstream os(man_path);
    if (!os) throw IoError("bundle: cannot write " + man_path);
    os << man.dump(2) << "\n";
}

FrameData load_frame_bundle(const std::string& frame_dir) {
    const std::string man_path = frame_dir + "/manifest.json";
    std::ifstream is(man_path);
    if (!is)
        throw SchemaError("frame bundle missing manifest.json (" + man_path +
                          ")");
    nlohmann::json man;
    try {
        is >> man;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("frame bundle: bad manifest.json: " +
                          std::string(e.what()));
    }
    if (!man.contains("channels") || !man["channels"].is_array())
        throw SchemaError("frame bundle manifest lacks a channel list");

    // Every channel must be listed in the manifest, exist on disk, and match
    // the dims/dtype the manifest promises.
    auto need = [&](const char* name, int64_t want_channels) -> Tensor {
        const nlohmann::json* entry = nullptr;
        for (const auto& e : man["channels"])
            if (e.value("name", std::string()) == name) {
                entry = &e;
                break;
            }
        if (!entry)
            throw SchemaError("frame bundle manifest missing channel '" +
                              std::string(name) + "'");
        const std::string path = frame_dir + "/" + name + std::string(".pfm");
        if (!std::filesystem::exists(path))
            throw SchemaError("frame bundle missing channel '" +
                              std::string(name) + "' (" + path + ")");
        Tensor t = read_pfm(path);
        int64_t mc = 0, mh = 0, mw = 0;
        std::string dtype;
        try {
            mc = entry->at("channels").get<int64_t>();
            mh = entry->at("h").get<int64_t>();
            mw = entry->at("w").get<int64_t>();
            dtype = entry->at("dtype").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError("frame bundle manifest entry for '" +
                              std::string(name) +
                              "' is incomplete: " + e.what());
        }
        if (dtype != "float32")
            throw SchemaError("frame bundle channel '" + std::string(name) +
                              "' has unsupported dtype '" + dtype + "'");
        if (t.c != mc || t.h != mh || t.w != mw)
            throw SchemaError("frame bundle channel '" + std::string(name) +
                              "' dims do not match its manifest entry");
        if (t.c != want_channels)
            throw SchemaError("frame bundle channel '" + std::string(name) +
                              "' must have " + std::to_string(want_channels) +
                              " channels");
        return t;
    };
    FrameData f;
    f.color = need("color", 3);
    f.albedo = need("albedo", 3);
    f.roughness = need("roughness", 1);
    f.normal = need("normal", 3);
    f.ndotv = need("ndotv", 1);
    f.emissive = need("emissive", 3);
    f.depth = need("depth", 1);
    Tensor m3 = need("motion", 3);
    f.motion = Tensor(1, 2, m3.h, m3.w);
    std::copy(m3.plane(0, 0), m3.plane(0, 0) + m3.h * m3.w,
              f.motion.plane(0, 0));
    std::copy(m3.plane(0, 1), m3.plane(0, 1) + m3.h * m3.w,
              f.motion.plane(0, 1));
    return f;
}

void generate_dataset(const GenConfig& cfg, const std::string& out_dir) {
    generate_dataset(cfg, out_dir, nullptr);
}

void generate_dataset(const GenConfig& cfg, const std::string& out_dir,
                      const Scene* scene_override) {
    require_scale(cfg.r);
    if (cfg.frames < 1) throw ConfigError("gen: frames must be >= 1");
    if (cfg.hr_size < cfg.r || cfg.hr_size % cfg.r != 0)
        throw ConfigError("gen: hr size must be a positive multiple of r");
    const Scene scene = scene_override
                            ? *scene_override
                            : Scene::generate(cfg.scene_seed, cfg.lobes);
    // Ambient specular uses a small preintegrated table seeded from the
    // scene, so generation stays a pure function of the config.
    EnvBrdfLut ambient_lut;
    const EnvBrdfLut* lut_ptr = nullptr;
    if (scene.lobes != LobeMode::diffuse_only) {
        ambient_lut =
            EnvBrdfLut::build(32, 256, hash_combine(cfg.scene_seed, 0xa3b1e5ull));
        lut_ptr = &ambient_lut;
    }
    std::filesystem::create_directories(out_dir);
    const int lr_size = cfg.hr_size / cfg.r;

    parallel_for(cfg.frames, [&](int64_t i) {
        const int frame = static_cast<int>(i);
        const FrameData hr =
            render_frame(scene, frame, cfg.hr_size, cfg.hr_size, lut_ptr);
        FrameData lr;
        if (cfg.lr_mode == LrMode::native)
            lr = render_frame(scene, frame, lr_size, lr_size, lut_ptr);
        else
            lr = box_downsample_frame(hr, cfg.r);
        const Camera hr_cam =
            scene.camera_at(frame, cfg.hr_size, cfg.hr_size);
        const Camera lr_cam = scene.camera_at(frame, lr_size, lr_size);
        save_frame_bundle(out_dir + "/hr/" + frame_dir_name(frame), hr,
                          frame, &hr_cam);
        save_frame_bundle(out_dir + "/lr/" + frame_dir_name(frame), lr,
                          frame, &lr_cam);
    });

    nlohmann::json manifest;
    manifest["scene_seed"] = cfg.scene_seed;
    manifest["frames"] = cfg.frames;
    manifest["r"] = cfg.r;
    manifest["hr"] = {cfg.hr_size, cfg.hr_size};
    manifest["lr"] = {lr_size, lr_size};
    manifest["lobes"] = lobe_mode_name(scene.lobes);
    manifest["lr_mode"] = cfg.lr_mode == LrMode::native ? "native" : "box";
    manifest["channels"] = {"color",    "albedo", "roughness", "normal",
                            "ndotv",    "emissive", "depth",   "motion"};
    nlohmann::json hr_dirs = nlohmann::json::array();
    nlohmann::json lr_dirs = nlohmann::json::array();
    for (int i = 0; i < cfg.frames; ++i) {
        hr_dirs.push_back("hr/" + frame_dir_name(i));
        lr_dirs.push_back("lr/" + frame_dir_name(i));
    }
    manifest["hr_dirs"] = hr_dirs;
    manifest["lr_dirs"] = lr_dirs;
    std::ofstream os(out_dir + "/dataset.json");
    if (!os) throw IoError("gen: cannot write " + out_dir + "/dataset.json");
    os << manifest.dump(2) << "\n";
}

DatasetIndex load_dataset_index(const std::string& dir) {
    std::ifstream is(dir + "/dataset.json");
    if (!is)
        throw IoError("dataset: cannot open " + dir + "/dataset.json");
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("dataset: bad manifest: " + std::string(e.what()));
    }
    DatasetIndex idx;
    idx.root = dir;
    try {
        idx.scene_seed = j.at("scene_seed").get<uint64_t>();
        idx.frames = j.at("frames").get<int>();
        idx.r = j.at("r").get<int>();
        idx.hr_h = j.at("hr")[0].get<int64_t>();
        idx.hr_w = j.at("hr")[1].get<int64_t>();
        idx.lr_h = j.at("lr")[0].get<int64_t>();
        idx.lr_w = j.at("lr")[1].get<int64_t>();
        idx.hr_dirs = j.at("hr_dirs").get<std::vector<std::string>>();
        idx.lr_dirs = j.at("lr_dirs").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("dataset: manifest missing field: " +
                          std::string(e.what()));
    }
    if (static_cast<int>(idx.hr_dirs.size()) != idx.frames ||
        static_cast<int>(idx.lr_dirs.size()) != idx.frames)
        throw FormatError("dataset: frame count does not match directory "
                          "lists");
    return idx;
}

FramePair load_frame_pair(const DatasetIndex& idx, int frame) {
    if (frame < 0 || frame >= idx.frames)
        throw ConfigError("dataset: frame index out of range");
    FramePair p;
    p.hr = load_frame_bundle(idx.root + "/" +
                             idx.hr_dirs[static_cast<size_t>(frame)]);
    p.lr = load_frame_bundle(idx.root + "/" +
                             idx.lr_dirs[static_cast<size_t>(frame)]);
    return p;
}

}  // namespace fusesr
