#include "fusesr/brdf.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "fusesr/ops.hpp"

namespace fusesr {

void integrate_env_brdf_cell(double ndotv, double roughness, uint32_t samples,
                             uint64_t seed, double& out_a, double& out_b) {
    const double alpha = ggx::alpha_from_roughness(roughness);
    const double nov = std::max(ndotv, 1e-4);
    const ggx::Vec3 v = {std::sqrt(std::max(0.0, 1.0 - nov * nov)), 0.0, nov};
    Rng rng(seed);
    double acc_a = 0.0, acc_b = 0.0;
    for (uint32_t i = 0; i < samples; ++i) {
        const double u1 = rng.uniform();
        const double u2 = rng.uniform();
        const ggx::Vec3 h = ggx::sample_vndf(v, alpha, u1, u2);
        const double voh = ggx::dot(v, h);
        const ggx::Vec3 l = {2.0 * voh * h.x - v.x, 2.0 * voh * h.y - v.y,
                             2.0 * voh * h.z - v.z};
        if (l.z <= 0.0 || voh <= 0.0) continue;
        const double nol = l.z;
        // VNDF pdf cancels D and G1(V), leaving G2 / G1(V) per sample.
        const double w = ggx::g2_smith_height_correlated(nol, nov, alpha) /
                         ggx::g1_smith(nov, alpha);
        const double fc = ggx::fresnel_schlick_weight(voh);
        acc_a += (1.0 - fc) * w;
        acc_b += fc * w;
    }
    out_a = acc_a / static_cast<double>(samples);
    out_b = acc_b / static_cast<double>(samples);
}

EnvBrdfLut EnvBrdfLut::build(int size, uint32_t samples_per_cell,
                             uint64_t seed) {
    if (size < 2) throw ConfigError("lut: size must be >= 2");
    if (samples_per_cell == 0) throw ConfigError("lut: samples must be >= 1");
    EnvBrdfLut lut;
    lut.size_ = size;
    lut.samples_ = samples_per_cell;
    lut.seed_ = seed;
    lut.a_.assign(static_cast<size_t>(size) * size, 0.0f);
    lut.b_.assign(static_cast<size_t>(size) * size, 0.0f);
    // Each cell draws from its own seeded stream, so the table is identical
    // for any thread count and any cell evaluation order.
    parallel_for(static_cast<int64_t>(size) * size, [&](int64_t idx) {
        const int j = static_cast<int>(idx) / size;  // roughness row
        const int i = static_cast<int>(idx) % size;  // ndotv column
        const double nv = (i + 0.5) / size;
        const double rough = (j + 0.5) / size;
        double a = 0.0, b = 0.0;
        integrate_env_brdf_cell(nv, rough, samples_per_cell,
                                hash_combine(seed, static_cast<uint64_t>(idx)),
                                a, b);
        lut.a_[static_cast<size_t>(idx)] = static_cast<float>(a);
        lut.b_[static_cast<size_t>(idx)] = static_cast<float>(b);
    });
    return lut;
}

void EnvBrdfLut::query(float ndotv, float roughness, float& a,
                       float& b) const {
    const float lo = 0.5f / static_cast<float>(size_);
    const float hi = 1.0f - lo;
    auto clamp01 = [&](float v) { return std::min(std::max(v, lo), hi); };
    const float u = clamp01(ndotv) * static_cast<float>(size_) - 0.5f;
    const float w = clamp01(roughness) * static_cast<float>(size_) - 0.5f;
    const int i0 = std::min(static_cast<int>(u), size_ - 2);
    const int j0 = std::min(static_cast<int>(w), size_ - 2);
    const float fu = u - static_cast<float>(i0);
    const float fw = w - static_cast<float>(j0);
    auto lerp_cell = [&](const std::vector<float>& t) {
        const float v00 = t[static_cast<size_t>(j0 * size_ + i0)];
        const float v01 = t[static_cast<size_t>(j0 * size_ + i0 + 1)];
        const float v10 = t[static_cast<size_t>((j0 + 1) * size_ + i0)];
        const float v11 = t[static_cast<size_t>((j0 + 1) * size_ + i0 + 1)];
        return (1.0f - fw) * ((1.0f - fu) * v00 + fu * v01) +
               fw * ((1.0f - fu) * v10 + fu * v11);
    };
    a = lerp_cell(a_);
    b = lerp_cell(b_);
}

namespace {

constexpr char kLutMagic[7] = {'S', 'S', 'L', 'U', 'T', '0', '1'};

template <typename T>
void write_le(std::ostream& os, T v) {
    static_assert(std::endian::native == std::endian::little,
                  "serialization assumes a little-endian host");
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

}  // namespace

void EnvBrdfLut::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("lut: cannot open for writing: " + path);
    os.write(kLutMagic, sizeof(kLutMagic));
    write_le<uint32_t>(os, static_cast<uint32_t>(size_));
    write_le<uint32_t>(os, samples_);
    write_le<uint64_t>(os, seed_);
    for (size_t i = 0; i < a_.size(); ++i) {
        write_le<float>(os, a_[i]);
        write_le<float>(os, b_[i]);
    }
    if (!os) throw IoError("lut: write failed: " + path);
}

EnvBrdfLut EnvBrdfLut::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("lut: cannot open: " + path);
    char magic[sizeof(kLutMagic)];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kLutMagic, sizeof(magic)) != 0)
        throw FormatError("lut: bad magic in " + path);
    EnvBrdfLut lut;
    lut.size_ = static_cast<int>(read_le<uint32_t>(is));
    lut.samples_ = read_le<uint32_t>(is);
    lut.seed_ = read_le<uint64_t>(is);
    if (!is || lut.size_ < 2 || lut.size_ > 4096)
        throw FormatError("lut: bad header in " + path);
    const size_t n = static_cast<size_t>(lut.size_) * lut.size_;
    lut.a_.resize(n);
    lut.b_.resize(n);
    for (size_t i = 0; i < n; ++i) {
        lut.a_[i] = read_le<float>(is);
        lut.b_[i] = read_le<float>(is);
    }
    if (!is) throw FormatError("lut: truncated file: " + path);
    return lut;
}

Tensor build_fbeta_map(const Tensor& f0, const Tensor& roughness,
                       const Tensor& ndotv, const EnvBrdfLut& lut,
                       FbetaMode mode) {
    if (f0.c != 3)
        throw ShapeError("build_fbeta_map: f0 must have 3 channels, got " +
                         f0.shape_str());
    if (roughness.c != 1 || ndotv.c != 1 || roughness.b != f0.b ||
        ndotv.b != f0.b || roughness.h != f0.h || roughness.w != f0.w ||
        ndotv.h != f0.h || ndotv.w != f0.w)
        throw ShapeError("build_fbeta_map: roughness/ndotv must be (b,1,h,w) "
                         "matching f0");
    Tensor fbeta(f0.b, 3, f0.h, f0.w);
    for (int64_t bi = 0; bi < f0.b; ++bi) {
        const float* rp = roughness.plane(bi, 0);
        const float* np = ndotv.plane(bi, 0);
        for (int64_t p = 0; p < f0.h * f0.w; ++p) {
            float a = 0.0f, b = 0.0f;
            const float nv = std::max(np[p], kNdotvFloor);
            lut.query(nv, rp[p], a, b);
            const float r = f0.plane(bi, 0)[p];
            const float g = f0.plane(bi, 1)[p];
            const float bl = f0.plane(bi, 2)[p];
            float out_r = r * a + b;
            float out_g = g * a + b;
            float out_b = bl * a + b;
            if (mode == FbetaMode::diffuse_specular) {
                const float kd = 1.0f - (r + g + bl) / 3.0f;
                out_r += kd * r;
                out_g += kd * g;
                out_b += kd * bl;
            }
            fbeta.plane(bi, 0)[p] = out_r;
            fbeta.plane(bi, 1)[p] = out_g;
            fbeta.plane(bi, 2)[p] = out_b;
        }
    }
    return fbeta;
}

Tensor demodulate(const Tensor& color, const Tensor& emissive,
                  const Tensor& fbeta) {
    return elementwise_div(sub(color, emissive), fbeta, kDemodEps);
}

Tensor remodulate(const Tensor& demodulated, const Tensor& emissive,
                  const Tensor& fbeta) {
    return add(elementwise_mul(demodulated, fbeta), emissive);
}

}  // namespace fusesr
