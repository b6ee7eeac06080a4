// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <span>

#include "flowtok/numerics/tensor.hpp"

namespace flowtok::num {

/// Seeded random stream. Built on std::mt19937_64, whose output sequence is
/// fixed by the standard; uniforms and normals are derived here rather than
/// through <random> distributions so that draws are bit-identical across
/// standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0);

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64();
    double uniform();        // [0, 1), 53-bit resolution
    double uniform(double lo, double hi);
    double normal();         // Box-Muller
    std::size_t below(std::size_t n);  // uniform integer in [0, n)

    // Index drawn proportionally to probs. Throws std::invalid_argument on a
    // negative or non-finite weight, or when all weights are zero.
    std::size_t categorical(std::span<const double> probs);

    Tensor normal_tensor(const Shape& shape);
    Tensor uniform_tensor(const Shape& shape, double lo = 0.0, double hi = 1.0);

    // Independent child stream; deterministic in (seed, stream id).
    Rng fork(std::uint64_t stream) const;

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace flowtok::num
