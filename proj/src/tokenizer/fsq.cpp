// SPDX-License-Identifier: Apache-2.0
#include "flowtok/tokenizer/fsq.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace flowtok::tok {

using num::Shape;
using num::Tensor;
using num::Var;

Fsq::Fsq(std::vector<int> levels) : levels_(std::move(levels)) {
    if (levels_.empty()) throw std::invalid_argument("Fsq: no levels");
    constexpr double eps = 1e-3;
    std::int64_t b = 1;
    for (int l : levels_) {
        if (l < 2) throw std::invalid_argument("Fsq: level " + std::to_string(l) + " < 2");
        basis_.push_back(b);
        b *= l;
        const double h = (l - 1) * (1.0 + eps) / 2.0;
        const double o = l % 2 == 0 ? 0.5 : 0.0;
        half_.push_back(h);
        offset_.push_back(o);
        shift_.push_back(std::atanh(o / h));
    }
    codebook_ = static_cast<std::size_t>(b);
}

double Fsq::bound(double z, std::size_t k) const { return std::tanh(z + shift_[k]) * half_[k] - offset_[k]; }

Var Fsq::bound(const Var& z) const {
    const std::size_t d = dims();
    if (z.shape().empty() || z.shape().back() != d) throw num::ShapeError("fsq_bound", {z.shape()});
    Tensor shift(Shape{d}), half(Shape{d}), offset(Shape{d});
    for (std::size_t k = 0; k < d; ++k) {
        shift[k] = shift_[k];
        half[k] = half_[k];
        offset[k] = -offset_[k];
    }
    Var t = num::tanh(num::add(z, num::constant(shift)));
    return num::add(num::mul(t, num::constant(half)), num::constant(offset));
}

std::int64_t Fsq::code(std::span<const double> v) const {
    if (v.size() != dims()) throw std::invalid_argument("Fsq::code: wrong dimensionality");
    std::int64_t c = 0;
    for (std::size_t k = 0; k < dims(); ++k) {
        const auto idx = static_cast<std::int64_t>(std::llround(v[k])) + levels_[k] / 2;
        if (idx < 0 || idx >= levels_[k] || std::abs(v[k] - std::round(v[k])) > 1e-9) {
            throw std::invalid_argument("Fsq::code: value off the grid");
        }
        c += idx * basis_[k];
    }
    return c;
}

void Fsq::grid(std::int64_t code, std::span<double> out) const {
    if (code < 0 || static_cast<std::size_t>(code) >= codebook_) {
        throw std::out_of_range("Fsq::grid: code " + std::to_string(code) + " outside [0, " +
                                std::to_string(codebook_) + ")");
    }
    for (std::size_t k = 0; k < dims(); ++k) {
        const std::int64_t idx = (code / basis_[k]) % levels_[k];
        out[k] = static_cast<double>(idx - levels_[k] / 2);
    }
}

std::vector<std::int64_t> Fsq::codes(const Tensor& g) const {
    const std::size_t d = dims();
    if (g.shape().empty() || g.shape().back() != d) throw num::ShapeError("fsq_codes", {g.shape()});
    std::vector<std::int64_t> out(g.size() / d);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = code(g.data().subspan(i * d, d));
    return out;
}

Tensor Fsq::grid_from_codes(std::span<const std::int64_t> codes) const {
    const std::size_t d = dims();
    Tensor out(Shape{codes.size(), d});
    for (std::size_t i = 0; i < codes.size(); ++i) grid(codes[i], out.data().subspan(i * d, d));
    return out;
}

Tensor Fsq::normalizer() const {
    Tensor out(Shape{dims()});
    for (std::size_t k = 0; k < dims(); ++k) out[k] = 1.0 / static_cast<double>(levels_[k] / 2);
    return out;
}

}  // namespace flowtok::tok
