#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace ksopt {

// splitmix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
    return mix64(seed ^ mix64(stream + mix64(index)));
}

// mt19937_64 with explicit mappings to doubles/ranges. The engine is pinned by
// the standard, and the mappings below avoid std::uniform_*_distribution whose
// output is implementation-defined, so sequences are reproducible everywhere.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next() { return eng_(); }

    // [0, 1)
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // [a, b)
    double uniform(double a, double b) { return a + (b - a) * uniform01(); }

    // Unbiased integer in [0, n)
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t rem = (UINT64_MAX % n + 1) % n;  // 2^64 mod n
        const std::uint64_t limit = UINT64_MAX - rem;
        std::uint64_t x;
        do {
            x = next();
        } while (x > limit);
        return x % n;
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::mt19937_64 eng_;
};

}  // namespace ksopt
