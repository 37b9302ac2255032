#pragma once

#include <cstdint>

namespace kb {

// Counter-based generator (splitmix64). Deterministic across platforms and
// cheap to split: each child stream is keyed off the parent seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // inclusive bounds
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(next_u64() % span);
    }

    bool coin() { return (next_u64() & 1u) != 0; }

    // child stream for (seed, key), independent of this stream's position
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t key) {
        Rng r(seed ^ (0x2545f4914f6cdd1dULL * (key + 1)));
        return r.next_u64();
    }

    Rng split(std::uint64_t key) const { return Rng(derive(state_, key)); }

private:
    std::uint64_t state_;
};

} // namespace kb
