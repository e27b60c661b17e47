#pragma once

// Shared plumbing: error taxonomy, deterministic RNG, hashing, thread budget.

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace fusesr {

// Error taxonomy. Every failure the library raises derives from Error so the
// CLI can map library errors to exit code 1 and usage errors to 2.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ShapeError : Error {
    using Error::Error;
};
struct SchemaError : Error {
    using Error::Error;
};
struct FormatError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};

// splitmix64: used to derive independent stream seeds (per-cell, per-frame)
// from a global seed. Fixed algorithm, bit-exact across platforms.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t hash_combine(uint64_t seed, uint64_t v) {
    return splitmix64(seed ^ splitmix64(v));
}

// Deterministic RNG. mt19937_64 has a pinned algorithm in the standard; the
// distributions do not, so all mappings from raw bits are spelled out here.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Multiply-shift; bias is < 2^-53 per draw
    // for the n used here, and the mapping is fixed either way.
    uint64_t uniform_index(uint64_t n) {
        return static_cast<uint64_t>(uniform() * static_cast<double>(n)) % n;
    }

    // Standard normal via Box-Muller. One value per call; the pair's second
    // member is cached so draw order stays well-defined.
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        double u2 = uniform();
        // Avoid log(0).
        u1 = u1 > 0.0 ? u1 : 0x1.0p-53;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 2.0 * 3.14159265358979323846 * u2;
        cached_ = r * std::sin(t);
        have_cached_ = true;
        return r * std::cos(t);
    }

    std::mt19937_64& engine() { return gen_; }

    // Engine state round-trips through text so checkpoints resume bit-exactly.
    std::string serialize_state() const;
    void deserialize_state(const std::string& s);

private:
    std::mt19937_64 gen_;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

inline std::string Rng::serialize_state() const {
    // mt19937_64 stream operators emit space-separated words; include the
    // Box-Muller cache so resumed draws continue mid-pair.
    std::string out;
    {
        std::ostringstream oss;
        oss << gen_;
        out = oss.str();
    }
    out += have_cached_ ? " 1 " : " 0 ";
    {
        std::ostringstream oss;
        oss.precision(17);
        oss << cached_;
        out += oss.str();
    }
    return out;
}

inline void Rng::deserialize_state(const std::string& s) {
    std::istringstream iss(s);
    iss >> gen_;
    int flag = 0;
    iss >> flag >> cached_;
    if (iss.fail()) throw FormatError("rng state: malformed serialized state");
    have_cached_ = flag != 0;
}

// Thread budget: FUSESR_THREADS caps worker count, default 1 thread beyond
// hardware concurrency never helps here. Training paths stay single-threaded
// regardless; only embarrassingly parallel loops (LUT cells, eval frames)
// consult this.
inline int thread_budget() {
    if (const char* env = std::getenv("FUSESR_THREADS")) {
        const long n = std::strtol(env, nullptr, 10);
        if (n >= 1) return static_cast<int>(n);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(i) for i in [0, n). Work items must be independent and write only
// to their own index; that keeps results identical for any thread count.
inline void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
    const int threads = thread_budget();
    if (threads <= 1 || n <= 1) {
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    const int use = static_cast<int>(std::min<int64_t>(threads, n));
    std::atomic<int64_t> next{0};
    pool.reserve(static_cast<size_t>(use));
    for (int t = 0; t < use; ++t) {
        pool.emplace_back([&]() {
            for (;;) {
                const int64_t i = next.fetch_add(1);
                if (i >= n) return;
                fn(i);
            }
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace fusesr
