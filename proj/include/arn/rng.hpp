#pragma once

#include <cstdint>
#include <random>

namespace arn {

// splitmix64 finalizer, used to derive independent stream seeds from the
// single top-level seed.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stage,
                                 std::uint64_t index = 0) {
    return mix_seed(mix_seed(seed ^ mix_seed(stage)) + index);
}

// mt19937_64 is fully specified by the standard, but the distributions are
// not, so uniform doubles are built by hand to stay portable bit-for-bit.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double sign() { return (eng_() >> 63) ? 1.0 : -1.0; }

    std::uint64_t next() { return eng_(); }

private:
    std::mt19937_64 eng_;
};

}  // namespace arn
