// SPDX-License-Identifier: Apache-2.0
#include "flowtok/numerics/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace flowtok::num {

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

std::string shape_error_message(std::string_view op, const std::vector<Shape>& shapes,
                                std::string_view detail) {
    std::ostringstream os;
    os << op << ": shape mismatch";
    for (const auto& s : shapes) os << ' ' << shape_str(s);
    if (!detail.empty()) os << " (" << detail << ')';
    return os.str();
}

}  // namespace

ShapeError::ShapeError(std::string_view op, const std::vector<Shape>& shapes, std::string_view detail)
    : std::invalid_argument(shape_error_message(op, shapes, detail)) {}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (numel(shape_) != data_.size()) {
        throw ShapeError("Tensor", {shape_}, "data length " + std::to_string(data_.size()));
    }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

Tensor Tensor::from(std::initializer_list<double> values) {
    return Tensor(Shape{values.size()}, std::vector<double>(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) throw ShapeError("dim", {shape_}, "axis " + std::to_string(axis));
    return shape_[axis];
}

double Tensor::item() const {
    if (data_.size() != 1) throw ShapeError("item", {shape_});
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
    if (numel(shape) != data_.size()) throw ShapeError("reshape", {shape_, shape});
    return Tensor(std::move(shape), data_);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor& Tensor::operator+=(const Tensor& other) {
    if (other.shape_ != shape_) throw ShapeError("operator+=", {shape_, other.shape_});
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Tensor& Tensor::operator*=(double s) {
    for (auto& v : data_) v *= s;
    return *this;
}

Tensor operator+(const Tensor& a, const Tensor& b) {
    Tensor out = a;
    out += b;
    return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ShapeError("operator-", {a.shape(), b.shape()});
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
    return out;
}

Tensor operator*(const Tensor& a, double s) {
    Tensor out = a;
    out *= s;
    return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ShapeError("max_abs_diff", {a.shape(), b.shape()});
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace flowtok::num
