#pragma once

#include <cstdint>
#include <vector>

#include "flowvae/tensor.hpp"

namespace flowvae {

/// Deterministic pseudo-random stream: xoshiro256++ seeded via splitmix64,
/// normal draws via Box-Muller. The same seed yields the same sequence on
/// every platform; this is what makes whole training runs reproducible.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed);

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64();

    /// Uniform in [0, 1) with 53 random bits.
    double uniform();

    double uniform(double lo, double hi);

    /// Uniform integer in [0, n); n must be positive.
    std::uint64_t uniform_index(std::uint64_t n);

    /// Standard normal draw (Box-Muller; the sine partner is cached).
    double normal();

    void fill_normal(Tensor& t);

    /// Seeded Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_index(i + 1));
            std::swap(v[i], v[j]);
        }
    }

    /// Independent substream derived from this stream's seed and a tag.
    /// Forking twice with the same tag gives the same stream regardless of
    /// how far this stream has advanced.
    RngStream fork(std::uint64_t tag) const;

private:
    std::uint64_t seed_ = 0;
    std::uint64_t state_[4] = {0, 0, 0, 0};
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace flowvae
