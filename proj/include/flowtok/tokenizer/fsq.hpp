// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "flowtok/numerics/ops.hpp"

namespace flowtok::tok {

/// Finite scalar quantisation over per-dimension levels l_k.
///
/// A dimension with l levels takes the integer grid values
/// {-floor(l/2), ..., l - 1 - floor(l/2)}; the grid index is value + floor(l/2)
/// and the code is the mixed-radix number of the indices with basis
/// (1, l0, l0*l1, ...). The bound maps R onto an interval that rounds to
/// exactly l values, also for even l: tanh(z + s) * h - o with
/// h = (l - 1)(1 + 1e-3)/2, o = 0.5 for even l (else 0), s = atanh(o / h).
class Fsq {
public:
    explicit Fsq(std::vector<int> levels);

    std::size_t dims() const noexcept { return levels_.size(); }
    std::size_t codebook_size() const noexcept { return codebook_; }
    const std::vector<int>& levels() const noexcept { return levels_; }
    int min_value(std::size_t k) const { return -(levels_[k] / 2); }
    int max_value(std::size_t k) const { return levels_[k] - 1 - levels_[k] / 2; }

    // Differentiable bound on the last axis (size dims()).
    num::Var bound(const num::Var& z) const;
    double bound(double z, std::size_t k) const;

    // Grid values (forward) with identity gradient.
    num::Var quantize(const num::Var& z) const { return num::round_ste(bound(z)); }

    std::int64_t code(std::span<const double> grid_values) const;
    void grid(std::int64_t code, std::span<double> out) const;

    // Codes for a [..., dims] tensor of grid values, and back.
    std::vector<std::int64_t> codes(const num::Tensor& grid_values) const;
    num::Tensor grid_from_codes(std::span<const std::int64_t> codes) const;  // [n, dims]

    // Grid values divided by floor(l/2), so each dimension lies in [-1, 1].
    num::Tensor normalizer() const;  // [dims]

private:
    std::vector<int> levels_;
    std::vector<std::int64_t> basis_;
    std::vector<double> half_, offset_, shift_;
    std::size_t codebook_ = 1;
};

}  // namespace flowtok::tok
