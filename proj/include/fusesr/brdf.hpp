#pragma once

// GGX microfacet math and the split-sum environment BRDF table.
// Convention: "roughness" is perceptual roughness in [0,1]; the microfacet
// alpha is roughness^2, floored at 1e-4 so the mirror limit stays defined.

#include <cstdint>
#include <string>
#include <vector>

#include "fusesr/tensor.hpp"

namespace fusesr {

constexpr float kAlphaFloor = 1e-4f;
constexpr float kNdotvFloor = 1e-2f;
constexpr float kDemodEps = 1e-4f;

namespace ggx {

struct Vec3 {
    double x = 0, y = 0, z = 0;
};

inline Vec3 normalize(Vec3 v) {
    const double n = std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z);
    return {v.x / n, v.y / n, v.z / n};
}
inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(Vec3 a, Vec3 b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z,
            a.x * b.y - a.y * b.x};
}

inline double alpha_from_roughness(double roughness) {
    const double a = roughness * roughness;
    return a < kAlphaFloor ? kAlphaFloor : a;
}

inline double distribution(double noh, double alpha) {
    const double a2 = alpha * alpha;
    const double d = noh * noh * (a2 - 1.0) + 1.0;
    return a2 / (3.14159265358979323846 * d * d);
}

// Smith masking for one direction, Lambda-based form.
inline double g1_smith(double nox, double alpha) {
    const double a2 = alpha * alpha;
    return 2.0 * nox / (nox + std::sqrt(a2 + (1.0 - a2) * nox * nox));
}

// Height-correlated Smith for the pair (L, V).
inline double g2_smith_height_correlated(double nol, double nov,
                                         double alpha) {
    const double a2 = alpha * alpha;
    const double lv = nol * std::sqrt(a2 + (1.0 - a2) * nov * nov);
    const double ll = nov * std::sqrt(a2 + (1.0 - a2) * nol * nol);
    return 2.0 * nol * nov / (lv + ll);
}

inline double fresnel_schlick_weight(double voh) {
    const double m = 1.0 - voh;
    const double m2 = m * m;
    return m2 * m2 * m;
}

// Samples a visible GGX normal for view direction v (z-up shading frame),
// Heitz's sphere-cap construction. u1, u2 uniform in [0,1).
inline Vec3 sample_vndf(Vec3 v, double alpha, double u1, double u2) {
    const Vec3 vh = normalize({alpha * v.x, alpha * v.y, v.z});
    const double lensq = vh.x * vh.x + vh.y * vh.y;
    const Vec3 t1 = lensq > 0.0
                        ? Vec3{-vh.y / std::sqrt(lensq), vh.x / std::sqrt(lensq),
                               0.0}
                        : Vec3{1.0, 0.0, 0.0};
    const Vec3 t2 = cross(vh, t1);
    const double r = std::sqrt(u1);
    const double phi = 2.0 * 3.14159265358979323846 * u2;
    const double p1 = r * std::cos(phi);
    double p2 = r * std::sin(phi);
    const double s = 0.5 * (1.0 + vh.z);
    p2 = (1.0 - s) * std::sqrt(std::max(0.0, 1.0 - p1 * p1)) + s * p2;
    const double p3 =
        std::sqrt(std::max(0.0, 1.0 - p1 * p1 - p2 * p2));
    const Vec3 nh = {p1 * t1.x + p2 * t2.x + p3 * vh.x,
                     p1 * t1.y + p2 * t2.y + p3 * vh.y,
                     p1 * t1.z + p2 * t2.z + p3 * vh.z};
    return normalize({alpha * nh.x, alpha * nh.y, std::max(0.0, nh.z)});
}

}  // namespace ggx

// Integrates one table cell: the Fresnel-split specular directional albedo
// (scale, bias) such that the preintegrated BRDF is F0 * scale + bias.
// VNDF importance sampling; per-sample estimator weight G2/G1(V).
void integrate_env_brdf_cell(double ndotv, double roughness, uint32_t samples,
                             uint64_t seed, double& out_a, double& out_b);

// Preintegrated environment BRDF, square grid over (ndotv, roughness) with
// cell centers at (i + 0.5) / size. Bilinear queries clamp to the center
// range, so queries at centers reproduce stored values exactly.
class EnvBrdfLut {
public:
    static EnvBrdfLut build(int size, uint32_t samples_per_cell,
                            uint64_t seed);

    // Bilinear lookup; inputs clamped to [0,1].
    void query(float ndotv, float roughness, float& a, float& b) const;

    void save(const std::string& path) const;
    static EnvBrdfLut load(const std::string& path);

    int size() const { return size_; }
    uint32_t samples_per_cell() const { return samples_; }
    uint64_t seed() const { return seed_; }
    float cell_a(int rough_idx, int ndotv_idx) const {
        return a_[static_cast<size_t>(rough_idx * size_ + ndotv_idx)];
    }
    float cell_b(int rough_idx, int ndotv_idx) const {
        return b_[static_cast<size_t>(rough_idx * size_ + ndotv_idx)];
    }

private:
    int size_ = 0;
    uint32_t samples_ = 0;
    uint64_t seed_ = 0;
    // Row-major over (roughness row, ndotv column).
    std::vector<float> a_, b_;
};

enum class FbetaMode { specular_only, diffuse_specular };

// Per-pixel demodulation factor: F_beta = f0 * A + B, plus the diffuse
// albedo term (1 - mean(f0)) * f0 when the diffuse lobe is enabled.
// f0 is (b,3,h,w); roughness and ndotv are (b,1,h,w). ndotv is floored at
// 1e-2 before lookup so grazing pixels stay demodulatable.
Tensor build_fbeta_map(const Tensor& f0, const Tensor& roughness,
                       const Tensor& ndotv, const EnvBrdfLut& lut,
                       FbetaMode mode = FbetaMode::diffuse_specular);

// demodulated = (color - emissive) / F_beta (divisor clamped to 1e-4).
Tensor demodulate(const Tensor& color, const Tensor& emissive,
                  const Tensor& fbeta);

// color = demodulated * F_beta + emissive. Exact inverse of demodulate
// wherever |F_beta| >= the divisor clamp.
Tensor remodulate(const Tensor& demodulated, const Tensor& emissive,
                  const Tensor& fbeta);

}  // namespace fusesr
