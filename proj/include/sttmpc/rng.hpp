#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Dense>

namespace sttmpc {

/// Splittable 64-bit generator (splitmix64). Streams for a Monte-Carlo run
/// are derived as: state = splitmix(master_seed XOR run_index) advanced by a
/// small stream tag, so any (master_seed, run_index, tag) triple names a
/// reproducible stream independent of execution order.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller on explicit uniforms. Stateless apart
    /// from the underlying counter, so sequences are reproducible bit-for-bit.
    double next_normal() {
        double u1 = next_double();
        double u2 = next_double();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    Eigen::VectorXd normal_vector(int dim) {
        Eigen::VectorXd v(dim);
        for (int i = 0; i < dim; ++i) v(i) = next_normal();
        return v;
    }

private:
    std::uint64_t state_;
};

/// Named stream tags so coupled runs agree on which substream is which.
enum class StreamTag : std::uint64_t {
    disturbance = 1,
    excitation = 2,
};

inline SplitMix64 derive_stream(std::uint64_t master_seed, std::uint64_t run_index, StreamTag tag) {
    SplitMix64 mix(master_seed ^ run_index);
    std::uint64_t s = mix.next_u64();
    for (std::uint64_t i = 0; i < static_cast<std::uint64_t>(tag); ++i) s = SplitMix64(s).next_u64();
    return SplitMix64(s);
}

}  // namespace sttmpc
