#pragma once

#include <cstdint>
#include <random>

namespace csb_ewma {

/// SplitMix64 finaliser.
[[nodiscard]] constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed of replication `index` under master seed `master`. Stable across
/// releases and independent of how replications are scheduled.
[[nodiscard]] constexpr std::uint64_t replication_seed(std::uint64_t master, std::uint64_t index) noexcept {
    return splitmix64(master ^ splitmix64(index));
}

class BernoulliSource {
public:
    explicit BernoulliSource(std::uint64_t seed) : engine_(seed) {}

    // Top 53 bits as a uniform on [0, 1); p = 1 always succeeds, p = 0 never does.
    bool operator()(double p) {
        const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
        return u < p;
    }

private:
    std::mt19937_64 engine_;
};

} // namespace csb_ewma
