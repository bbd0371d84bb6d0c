#include <cmath>
#include <vector>

#include "doctest.h"
#include "dnsgd/rng.hpp"

using namespace dnsgd;

namespace {

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

std::vector<double> normals(StreamKey key, std::size_t n) {
    Stream s = derive_stream(key);
    std::vector<double> out(n);
    for (double& v : out) v = s.normal();
    return out;
}

}  // namespace

TEST_SUITE("rng") {
    TEST_CASE("same key gives the same draws") {
        const StreamKey key{42, StreamPurpose::oracle, 3, 17};
        Stream a = derive_stream(key);
        Stream b = derive_stream(key);
        for (int i = 0; i < 100; ++i) CHECK(a() == b());
    }

    TEST_CASE("streams for neighbouring agents are uncorrelated") {
        for (std::uint64_t agent = 0; agent < 8; ++agent) {
            const auto a = normals({7, StreamPurpose::oracle, agent, 5}, 10000);
            const auto b = normals({7, StreamPurpose::oracle, agent + 1, 5}, 10000);
            CHECK(std::abs(correlation(a, b)) < 0.05);
        }
    }

    TEST_CASE("iteration index changes the first draw") {
        for (std::uint64_t t = 0; t < 50; ++t) {
            Stream a = derive_stream({1, StreamPurpose::oracle, 0, t});
            Stream b = derive_stream({1, StreamPurpose::oracle, 0, t + 1});
            CHECK(a() != b());
        }
    }

    TEST_CASE("purpose separates streams with otherwise equal keys") {
        CHECK(stream_seed({1, StreamPurpose::oracle, 0, 0}) != stream_seed({1, StreamPurpose::topology, 0, 0}));
        CHECK(stream_seed({1, StreamPurpose::offsets, 2, 3}) != stream_seed({1, StreamPurpose::output_draw, 2, 3}));
    }

    TEST_CASE("no seed collisions over a grid of keys") {
        std::vector<std::uint64_t> seeds;
        for (std::uint64_t m = 0; m < 4; ++m)
            for (std::uint64_t a = 0; a < 16; ++a)
                for (std::uint64_t t = 0; t < 64; ++t) seeds.push_back(stream_seed({m, StreamPurpose::oracle, a, t}));
        std::sort(seeds.begin(), seeds.end());
        CHECK(std::adjacent_find(seeds.begin(), seeds.end()) == seeds.end());
    }

    TEST_CASE("below stays in range") {
        Stream s(3);
        for (int i = 0; i < 1000; ++i) CHECK(s.below(7) < 7);
    }
}
