#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace dnsgd {

/// What a random stream is used for. Streams with different purposes never
/// overlap, even when every other key field is equal.
enum class StreamPurpose : std::uint64_t {
    oracle = 1,
    topology = 2,
    output_draw = 3,
    offsets = 4,
    seed_fanout = 5,
    certification = 6,
    input = 7,
};

std::string_view to_string(StreamPurpose p);

struct StreamKey {
    std::uint64_t master_seed = 0;
    StreamPurpose purpose = StreamPurpose::oracle;
    std::uint64_t agent = 0;
    std::uint64_t iteration = 0;

    friend bool operator==(const StreamKey&, const StreamKey&) = default;
};

/// SplitMix64 finalizer; bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Hashes every key field into a single 64-bit seed. The result depends only
/// on the key, never on call order or the calling thread.
constexpr std::uint64_t stream_seed(const StreamKey& key) {
    std::uint64_t h = mix64(key.master_seed);
    h = mix64(h ^ static_cast<std::uint64_t>(key.purpose));
    h = mix64(h ^ key.agent);
    h = mix64(h ^ (key.iteration + 0x632be59bd9b4e019ULL));
    return h;
}

/// A random stream. Thin wrapper over a standard engine so the distributions
/// in <random> can be used directly.
class Stream {
public:
    using result_type = std::mt19937_64::result_type;

    explicit Stream(std::uint64_t seed) : engine_(seed) {}

    static constexpr result_type min() { return std::mt19937_64::min(); }
    static constexpr result_type max() { return std::mt19937_64::max(); }
    result_type operator()() { return engine_(); }

    double normal() { return normal_(engine_); }
    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
    }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

inline Stream derive_stream(const StreamKey& key) { return Stream(stream_seed(key)); }

}  // namespace dnsgd
