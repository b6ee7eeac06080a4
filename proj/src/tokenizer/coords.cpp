// SPDX-License-Identifier: Apache-2.0
#include "flowtok/tokenizer/coords.hpp"

#include <algorithm>
#include <cmath>

#include "flowtok/geometry/geometry.hpp"

namespace flowtok::tok {

using num::Shape;
using num::Tensor;

Tensor to_model_units(const BackboneStructure& s, double scale) {
    s.validate();
    const auto a = static_cast<std::size_t>(s.atoms);
    const Coords c = geo::center_ca(s).coords;
    Tensor out(Shape{s.length(), a, 3});
    for (Eigen::Index r = 0; r < c.rows(); ++r) {
        for (int k = 0; k < 3; ++k) out[static_cast<std::size_t>(r) * 3 + k] = c(r, k) * scale;
    }
    return out;
}

BackboneStructure from_model_units(const Tensor& x, const BackboneStructure& like, double scale) {
    if (x.rank() != 3 || x.dim(0) != like.length() || x.dim(1) != static_cast<std::size_t>(like.atoms) ||
        x.dim(2) != 3) {
        throw num::ShapeError("from_model_units", {x.shape()}, "expected [" + std::to_string(like.length()) + ", " +
                                                                   std::to_string(like.atoms) + ", 3]");
    }
    BackboneStructure s = like;
    s.plddt.reset();
    s.coords.resize(static_cast<Eigen::Index>(x.dim(0) * x.dim(1)), 3);
    for (Eigen::Index r = 0; r < s.coords.rows(); ++r) {
        for (int k = 0; k < 3; ++k) s.coords(r, k) = x[static_cast<std::size_t>(r) * 3 + k] / scale;
    }
    return s;
}

namespace {

struct Layout {
    std::size_t batch, length, atoms;
};

Layout layout(const Tensor& x, int atoms, const char* op) {
    const auto a = static_cast<std::size_t>(atoms);
    if (x.rank() < 3 || x.shape()[x.rank() - 1] != 3 || x.shape()[x.rank() - 2] != a) {
        throw num::ShapeError(op, {x.shape()}, "expected [..., L, " + std::to_string(atoms) + ", 3]");
    }
    const std::size_t l = x.shape()[x.rank() - 3];
    if (l == 0) throw num::ShapeError(op, {x.shape()}, "empty chain");
    return {x.size() / (l * a * 3), l, a};
}

}  // namespace

void center_ca(Tensor& x, int atoms) {
    const Layout g = layout(x, atoms, "center_ca");
    const std::size_t ca = g.atoms == 3 ? 1 : 0, per = g.length * g.atoms * 3;
    for (std::size_t b = 0; b < g.batch; ++b) {
        double* p = x.ptr() + b * per;
        double c[3] = {0, 0, 0};
        for (std::size_t i = 0; i < g.length; ++i) {
            for (int k = 0; k < 3; ++k) c[k] += p[(i * g.atoms + ca) * 3 + k];
        }
        for (double& v : c) v /= static_cast<double>(g.length);
        for (std::size_t r = 0; r < g.length * g.atoms; ++r) {
            for (int k = 0; k < 3; ++k) p[r * 3 + k] -= c[k];
        }
    }
}

double max_ca_centroid(const Tensor& x, int atoms) {
    const Layout g = layout(x, atoms, "max_ca_centroid");
    const std::size_t ca = g.atoms == 3 ? 1 : 0, per = g.length * g.atoms * 3;
    double worst = 0.0;
    for (std::size_t b = 0; b < g.batch; ++b) {
        const double* p = x.ptr() + b * per;
        for (int k = 0; k < 3; ++k) {
            double c = 0.0;
            for (std::size_t i = 0; i < g.length; ++i) c += p[(i * g.atoms + ca) * 3 + k];
            worst = std::max(worst, std::abs(c / static_cast<double>(g.length)));
        }
    }
    return worst;
}

Tensor stack(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw num::ShapeError("stack", {}, "no parts");
    Shape s{parts.size()};
    s.insert(s.end(), parts[0].shape().begin(), parts[0].shape().end());
    Tensor out(s);
    const std::size_t n = parts[0].size();
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (parts[i].shape() != parts[0].shape()) throw num::ShapeError("stack", {parts[0].shape(), parts[i].shape()});
        std::copy(parts[i].data().begin(), parts[i].data().end(), out.ptr() + i * n);
    }
    return out;
}

Tensor unstack(const Tensor& x, std::size_t i) {
    if (x.rank() == 0 || i >= x.dim(0)) throw num::ShapeError("unstack", {x.shape()}, "index " + std::to_string(i));
    Shape s(x.shape().begin() + 1, x.shape().end());
    const std::size_t n = num::numel(s);
    return Tensor(s, std::vector<double>(x.ptr() + i * n, x.ptr() + (i + 1) * n));
}

}  // namespace flowtok::tok
