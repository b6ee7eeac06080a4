// SPDX-License-Identifier: Apache-2.0
#include "flowtok/numerics/ops.hpp"

#include "flowtok/numerics/vmath.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace flowtok::num {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

// ---------------------------------------------------------------- broadcast

struct BroadcastPlan {
    Shape out;
    std::vector<std::size_t> stride_a;  // 0 on broadcast axes
    std::vector<std::size_t> stride_b;
};

std::vector<std::size_t> strides_of(const Shape& shape) {
    std::vector<std::size_t> s(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
    return s;
}

BroadcastPlan plan_broadcast(std::string_view op, const Shape& a, const Shape& b) {
    const std::size_t rank = std::max(a.size(), b.size());
    BroadcastPlan plan;
    plan.out.assign(rank, 1);
    plan.stride_a.assign(rank, 0);
    plan.stride_b.assign(rank, 0);
    const auto sa = strides_of(a);
    const auto sb = strides_of(b);
    for (std::size_t i = 0; i < rank; ++i) {
        const std::size_t ai = i + a.size() >= rank ? i + a.size() - rank : SIZE_MAX;
        const std::size_t bi = i + b.size() >= rank ? i + b.size() - rank : SIZE_MAX;
        const std::size_t da = ai == SIZE_MAX ? 1 : a[ai];
        const std::size_t db = bi == SIZE_MAX ? 1 : b[bi];
        if (da != db && da != 1 && db != 1) throw ShapeError(op, {a, b}, "not broadcastable");
        plan.out[i] = std::max(da, db);
        if (da == 0 || db == 0) plan.out[i] = 0;
        if (ai != SIZE_MAX && da != 1) plan.stride_a[i] = sa[ai];
        if (bi != SIZE_MAX && db != 1) plan.stride_b[i] = sb[bi];
    }
    return plan;
}

template <class F>
void for_each_broadcast(const BroadcastPlan& plan, F&& f) {
    const std::size_t rank = plan.out.size();
    const std::size_t total = numel(plan.out);
    if (total == 0) return;
    if (rank == 0) {
        f(std::size_t{0}, std::size_t{0}, std::size_t{0});
        return;
    }
    const std::size_t inner = plan.out.back();
    const std::size_t ia_step = plan.stride_a.back();
    const std::size_t ib_step = plan.stride_b.back();
    const std::size_t outer = total / inner;
    std::vector<std::size_t> idx(rank, 0);
    std::size_t ia = 0, ib = 0, o = 0;
    for (std::size_t r = 0; r < outer; ++r) {
        for (std::size_t k = 0; k < inner; ++k) f(o + k, ia + k * ia_step, ib + k * ib_step);
        o += inner;
        for (std::size_t d = rank - 1; d-- > 0;) {
            ++idx[d];
            ia += plan.stride_a[d];
            ib += plan.stride_b[d];
            if (idx[d] < plan.out[d]) break;
            ia -= plan.stride_a[d] * plan.out[d];
            ib -= plan.stride_b[d] * plan.out[d];
            idx[d] = 0;
        }
    }
}

enum class BinaryKind { add, sub, mul };

Var binary(const Var& a, const Var& b, BinaryKind kind) {
    const char* name = kind == BinaryKind::add ? "add" : kind == BinaryKind::sub ? "sub" : "mul";
    const Tensor& av = a.value();
    const Tensor& bv = b.value();

    if (av.shape() == bv.shape()) {
        Tensor out(av.shape());
        const std::size_t n = out.size();
        for (std::size_t i = 0; i < n; ++i) {
            switch (kind) {
                case BinaryKind::add: out[i] = av[i] + bv[i]; break;
                case BinaryKind::sub: out[i] = av[i] - bv[i]; break;
                case BinaryKind::mul: out[i] = av[i] * bv[i]; break;
            }
        }
        return make_result(std::move(out), name, {a, b}, [kind](Node& self) {
            const Tensor& g = self.grad;
            Node& pa = *self.parents[0];
            Node& pb = *self.parents[1];
            const std::size_t n = g.size();
            if (pa.requires_grad) {
                Tensor& ga = pa.grad_buffer();
                if (kind == BinaryKind::mul) {
                    for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * pb.value[i];
                } else {
                    for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
                }
            }
            if (pb.requires_grad) {
                Tensor& gb = pb.grad_buffer();
                if (kind == BinaryKind::mul) {
                    for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * pa.value[i];
                } else if (kind == BinaryKind::sub) {
                    for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
                } else {
                    for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
                }
            }
        });
    }

    auto plan = plan_broadcast(name, av.shape(), bv.shape());
    Tensor out(plan.out);
    for_each_broadcast(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
        switch (kind) {
            case BinaryKind::add: out[o] = av[ia] + bv[ib]; break;
            case BinaryKind::sub: out[o] = av[ia] - bv[ib]; break;
            case BinaryKind::mul: out[o] = av[ia] * bv[ib]; break;
        }
    });
    return make_result(std::move(out), name, {a, b}, [kind, plan](Node& self) {
        const Tensor& g = self.grad;
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            Tensor& ga = pa.grad_buffer();
            for_each_broadcast(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
                ga[ia] += kind == BinaryKind::mul ? g[o] * pb.value[ib] : g[o];
            });
        }
        if (pb.requires_grad) {
            Tensor& gb = pb.grad_buffer();
            for_each_broadcast(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
                switch (kind) {
                    case BinaryKind::add: gb[ib] += g[o]; break;
                    case BinaryKind::sub: gb[ib] -= g[o]; break;
                    case BinaryKind::mul: gb[ib] += g[o] * pa.value[ia]; break;
                }
            });
        }
    });
}

// ---------------------------------------------------------------- unary

template <class Fwd, class Deriv>
Var unary(const Var& a, const char* name, Fwd fwd, Deriv deriv) {
    const Tensor& av = a.value();
    Tensor out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
    return make_result(std::move(out), name, {a}, [deriv](Node& self) {
        Node& pa = *self.parents[0];
        Tensor& ga = pa.grad_buffer();
        const Tensor& g = self.grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(pa.value[i], self.value[i]);
    });
}

}  // namespace

Var add(const Var& a, const Var& b) { return binary(a, b, BinaryKind::add); }
Var sub(const Var& a, const Var& b) { return binary(a, b, BinaryKind::sub); }
Var mul(const Var& a, const Var& b) { return binary(a, b, BinaryKind::mul); }

Var scale(const Var& a, double s) {
    return unary(a, "scale", [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double s) {
    return unary(a, "add_scalar", [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var square(const Var& a) {
    return unary(a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var tanh(const Var& a) {
    Tensor out(a.shape());
    vmath::tanh(a.value().ptr(), out.ptr(), a.size());
    return make_result(std::move(out), "tanh", {a}, [](Node& self) {
        double* ga = self.parents[0]->grad_buffer().ptr();
        const double* y = self.value.ptr();
        const double* g = self.grad.ptr();
        for (std::size_t i = 0; i < self.value.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
    });
}

Var silu(const Var& a) {
    // sigmoid(x) = 1 / (1 + exp(-x)), kept for the backward pass
    const std::size_t n = a.size();
    const double* x = a.value().ptr();
    std::vector<double> sig(n);
    for (std::size_t i = 0; i < n; ++i) sig[i] = -x[i];
    vmath::exp(sig.data(), sig.data(), n);
    Tensor out(a.shape());
    for (std::size_t i = 0; i < n; ++i) {
        sig[i] = 1.0 / (1.0 + sig[i]);
        out[i] = x[i] * sig[i];
    }
    return make_result(std::move(out), "silu", {a}, [sig = std::move(sig)](Node& self) {
        Node& pa = *self.parents[0];
        double* ga = pa.grad_buffer().ptr();
        const double* x = pa.value.ptr();
        const double* g = self.grad.ptr();
        for (std::size_t i = 0; i < sig.size(); ++i) ga[i] += g[i] * sig[i] * (1.0 + x[i] * (1.0 - sig[i]));
    });
}

Var gelu(const Var& a) {
    // exact form x * Phi(x), Phi(x) = (1 + erf(x / sqrt 2)) / 2
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    const std::size_t n = a.size();
    const double* x = a.value().ptr();
    std::vector<double> phi(n);
    for (std::size_t i = 0; i < n; ++i) phi[i] = x[i] * inv_sqrt2;
    vmath::erf(phi.data(), phi.data(), n);
    Tensor out(a.shape());
    for (std::size_t i = 0; i < n; ++i) {
        phi[i] = 0.5 * (1.0 + phi[i]);
        out[i] = x[i] * phi[i];
    }
    return make_result(std::move(out), "gelu", {a}, [phi = std::move(phi)](Node& self) {
        const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
        Node& pa = *self.parents[0];
        double* ga = pa.grad_buffer().ptr();
        const double* x = pa.value.ptr();
        const double* g = self.grad.ptr();
        const std::size_t n = phi.size();
        std::vector<double> pdf(n);
        for (std::size_t i = 0; i < n; ++i) pdf[i] = -0.5 * x[i] * x[i];
        vmath::exp(pdf.data(), pdf.data(), n);
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * (phi[i] + x[i] * inv_sqrt_2pi * pdf[i]);
    });
}

Var sum(const Var& a) {
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    return make_result(Tensor::scalar(s), "sum", {a}, [](Node& self) {
        Node& pa = *self.parents[0];
        Tensor& ga = pa.grad_buffer();
        const double g = self.grad[0];
        for (auto& v : ga.data()) v += g;
    });
}

Var mean(const Var& a) {
    const std::size_t n = a.size();
    if (n == 0) throw ShapeError("mean", {a.shape()}, "empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var mse(const Var& a, const Var& b) {
    if (a.shape() != b.shape()) throw ShapeError("mse", {a.shape(), b.shape()});
    const std::size_t n = a.size();
    if (n == 0) throw ShapeError("mse", {a.shape()}, "empty tensor");
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a.value()[i] - b.value()[i];
        s += d * d;
    }
    return make_result(Tensor::scalar(s / static_cast<double>(n)), "mse", {a, b}, [n](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        const double k = 2.0 * self.grad[0] / static_cast<double>(n);
        if (pa.requires_grad) {
            Tensor& ga = pa.grad_buffer();
            for (std::size_t i = 0; i < n; ++i) ga[i] += k * (pa.value[i] - pb.value[i]);
        }
        if (pb.requires_grad) {
            Tensor& gb = pb.grad_buffer();
            for (std::size_t i = 0; i < n; ++i) gb[i] -= k * (pa.value[i] - pb.value[i]);
        }
    });
}

// ---------------------------------------------------------------- matmul

Var matmul(const Var& a, const Var& b) {
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    if (as.empty() || bs.size() != 2 || as.back() != bs[0]) throw ShapeError("matmul", {as, bs});
    const std::size_t k = bs[0];
    const std::size_t n = bs[1];
    const std::size_t rows = k == 0 ? 0 : a.size() / k;
    Shape out_shape = as;
    out_shape.back() = n;
    Tensor out(out_shape);
    MutMap(out.ptr(), rows, n).noalias() = ConstMap(a.value().ptr(), rows, k) * ConstMap(b.value().ptr(), k, n);
    return make_result(std::move(out), "matmul", {a, b}, [rows, k, n](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        ConstMap g(self.grad.ptr(), rows, n);
        if (pa.requires_grad) {
            MutMap(pa.grad_buffer().ptr(), rows, k).noalias() += g * ConstMap(pb.value.ptr(), k, n).transpose();
        }
        if (pb.requires_grad) {
            MutMap(pb.grad_buffer().ptr(), k, n).noalias() += ConstMap(pa.value.ptr(), rows, k).transpose() * g;
        }
    });
}

Var bmm(const Var& a, const Var& b, bool transpose_b) {
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    if (as.size() < 2 || bs.size() != as.size() ||
        !std::equal(as.begin(), as.end() - 2, bs.begin())) {
        throw ShapeError("bmm", {as, bs}, "leading dims must match");
    }
    const std::size_t m = as[as.size() - 2];
    const std::size_t k = as.back();
    const std::size_t kb = transpose_b ? bs.back() : bs[bs.size() - 2];
    const std::size_t n = transpose_b ? bs[bs.size() - 2] : bs.back();
    if (k != kb) throw ShapeError("bmm", {as, bs}, transpose_b ? "transpose_b" : "");
    const std::size_t batch = numel(Shape(as.begin(), as.end() - 2));
    Shape out_shape(as.begin(), as.end() - 2);
    out_shape.push_back(m);
    out_shape.push_back(n);
    Tensor out(out_shape);
    const double* ap = a.value().ptr();
    const double* bp = b.value().ptr();
    double* op = out.ptr();
    for (std::size_t i = 0; i < batch; ++i) {
        ConstMap am(ap + i * m * k, m, k);
        MutMap om(op + i * m * n, m, n);
        if (transpose_b) {
            om.noalias() = am * ConstMap(bp + i * n * k, n, k).transpose();
        } else {
            om.noalias() = am * ConstMap(bp + i * k * n, k, n);
        }
    }
    return make_result(std::move(out), "bmm", {a, b}, [batch, m, k, n, transpose_b](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        const double* gp = self.grad.ptr();
        for (std::size_t i = 0; i < batch; ++i) {
            ConstMap g(gp + i * m * n, m, n);
            if (pa.requires_grad) {
                MutMap ga(pa.grad_buffer().ptr() + i * m * k, m, k);
                if (transpose_b) {
                    ga.noalias() += g * ConstMap(pb.value.ptr() + i * n * k, n, k);
                } else {
                    ga.noalias() += g * ConstMap(pb.value.ptr() + i * k * n, k, n).transpose();
                }
            }
            if (pb.requires_grad) {
                ConstMap am(pa.value.ptr() + i * m * k, m, k);
                if (transpose_b) {
                    MutMap(pb.grad_buffer().ptr() + i * n * k, n, k).noalias() += g.transpose() * am;
                } else {
                    MutMap(pb.grad_buffer().ptr() + i * k * n, k, n).noalias() += am.transpose() * g;
                }
            }
        }
    });
}

// ---------------------------------------------------------------- shapes

Var reshape(const Var& a, Shape shape) {
    if (numel(shape) != a.size()) throw ShapeError("reshape", {a.shape(), shape});
    Tensor out = a.value().reshaped(std::move(shape));
    return make_result(std::move(out), "reshape", {a}, [](Node& self) {
        Node& pa = *self.parents[0];
        Tensor& ga = pa.grad_buffer();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
    });
}

namespace {

// Visits (out_offset, in_offset) pairs of a permutation.
template <class F>
void for_each_permuted(const Shape& in_shape, const std::vector<std::size_t>& perm, F&& f) {
    const std::size_t rank = in_shape.size();
    const auto in_strides = strides_of(in_shape);
    Shape out_shape(rank);
    std::vector<std::size_t> step(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        out_shape[i] = in_shape[perm[i]];
        step[i] = in_strides[perm[i]];
    }
    BroadcastPlan plan{out_shape, step, std::vector<std::size_t>(rank, 0)};
    for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t) { f(o, i); });
}

}  // namespace

Var permute(const Var& a, const std::vector<std::size_t>& perm) {
    const Shape& in_shape = a.shape();
    if (perm.size() != in_shape.size()) throw ShapeError("permute", {in_shape}, "perm rank");
    std::vector<bool> seen(perm.size(), false);
    Shape out_shape(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        if (perm[i] >= perm.size() || seen[perm[i]]) throw ShapeError("permute", {in_shape}, "invalid perm");
        seen[perm[i]] = true;
        out_shape[i] = in_shape[perm[i]];
    }
    Tensor out(out_shape);
    const Tensor& av = a.value();
    for_each_permuted(in_shape, perm, [&](std::size_t o, std::size_t i) { out[o] = av[i]; });
    return make_result(std::move(out), "permute", {a}, [in_shape, perm](Node& self) {
        Node& pa = *self.parents[0];
        Tensor& ga = pa.grad_buffer();
        const Tensor& g = self.grad;
        for_each_permuted(in_shape, perm, [&](std::size_t o, std::size_t i) { ga[i] += g[o]; });
    });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat", {}, "no inputs");
    const Shape& first = parts[0].shape();
    if (axis >= first.size()) throw ShapeError("concat", {first}, "axis out of range");
    std::vector<Shape> shapes;
    for (const auto& p : parts) shapes.push_back(p.shape());
    Shape out_shape = first;
    out_shape[axis] = 0;
    for (const auto& s : shapes) {
        if (s.size() != first.size()) throw ShapeError("concat", shapes);
        for (std::size_t d = 0; d < s.size(); ++d) {
            if (d != axis && s[d] != first[d]) throw ShapeError("concat", shapes);
        }
        out_shape[axis] += s[axis];
    }
    const std::size_t outer = numel(Shape(first.begin(), first.begin() + axis));
    const std::size_t inner = numel(Shape(first.begin() + axis + 1, first.end()));
    const std::size_t out_row = out_shape[axis] * inner;
    Tensor out(out_shape);
    std::vector<std::size_t> widths;
    std::size_t col = 0;
    for (const auto& p : parts) {
        const std::size_t w = p.shape()[axis] * inner;
        const double* src = p.value().ptr();
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy(src + o * w, src + (o + 1) * w, out.ptr() + o * out_row + col);
        }
        widths.push_back(w);
        col += w;
    }
    return make_result(std::move(out), "concat", parts, [outer, out_row, widths](Node& self) {
        std::size_t col = 0;
        for (std::size_t p = 0; p < self.parents.size(); ++p) {
            Node& pn = *self.parents[p];
            const std::size_t w = widths[p];
            if (pn.requires_grad) {
                double* gp = pn.grad_buffer().ptr();
                for (std::size_t o = 0; o < outer; ++o) {
                    const double* src = self.grad.ptr() + o * out_row + col;
                    for (std::size_t j = 0; j < w; ++j) gp[o * w + j] += src[j];
                }
            }
            col += w;
        }
    });
}

Var slice(const Var& a, std::size_t axis, std::size_t start, std::size_t length) {
    const Shape& s = a.shape();
    if (axis >= s.size() || start + length > s[axis]) {
        throw ShapeError("slice", {s},
                         "axis " + std::to_string(axis) + " range [" + std::to_string(start) + ", " +
                             std::to_string(start + length) + ")");
    }
    const std::size_t outer = numel(Shape(s.begin(), s.begin() + axis));
    const std::size_t inner = numel(Shape(s.begin() + axis + 1, s.end()));
    const std::size_t in_row = s[axis] * inner;
    const std::size_t w = length * inner;
    const std::size_t off = start * inner;
    Shape out_shape = s;
    out_shape[axis] = length;
    Tensor out(out_shape);
    const double* src = a.value().ptr();
    for (std::size_t o = 0; o < outer; ++o) {
        std::copy(src + o * in_row + off, src + o * in_row + off + w, out.ptr() + o * w);
    }
    return make_result(std::move(out), "slice", {a}, [outer, in_row, w, off](Node& self) {
        double* gp = self.parents[0]->grad_buffer().ptr();
        for (std::size_t o = 0; o < outer; ++o) {
            const double* src = self.grad.ptr() + o * w;
            for (std::size_t j = 0; j < w; ++j) gp[o * in_row + off + j] += src[j];
        }
    });
}

Var embedding(const Var& table, std::span<const std::int64_t> indices, const Shape& index_shape) {
    const Shape& ts = table.shape();
    if (ts.size() != 2 || numel(index_shape) != indices.size()) {
        throw ShapeError("embedding", {ts, index_shape});
    }
    const std::size_t rows = ts[0];
    const std::size_t d = ts[1];
    for (auto idx : indices) {
        if (idx < 0 || static_cast<std::size_t>(idx) >= rows) {
            throw std::out_of_range("embedding: index " + std::to_string(idx) + " outside table of " +
                                    std::to_string(rows) + " rows");
        }
    }
    Shape out_shape = index_shape;
    out_shape.push_back(d);
    Tensor out(out_shape);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const double* src = table.value().ptr() + static_cast<std::size_t>(indices[i]) * d;
        std::copy(src, src + d, out.ptr() + i * d);
    }
    std::vector<std::int64_t> idx(indices.begin(), indices.end());
    return make_result(std::move(out), "embedding", {table}, [idx = std::move(idx), d](Node& self) {
        double* gp = self.parents[0]->grad_buffer().ptr();
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const double* src = self.grad.ptr() + i * d;
            double* dst = gp + static_cast<std::size_t>(idx[i]) * d;
            for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
        }
    });
}

// ---------------------------------------------------------------- rows

Var softmax(const Var& a) {
    const Shape& s = a.shape();
    if (s.empty()) throw ShapeError("softmax", {s}, "rank 0");
    const std::size_t d = s.back();
    const std::size_t rows = d == 0 ? 0 : a.size() / d;
    Tensor out(s);
    const double* x = a.value().ptr();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x + r * d;
        double* yr = out.ptr() + r * d;
        const double m = *std::max_element(xr, xr + d);
        for (std::size_t j = 0; j < d; ++j) yr[j] = xr[j] - m;
        vmath::exp(yr, yr, d);
        double z = 0.0;
        for (std::size_t j = 0; j < d; ++j) z += yr[j];
        const double inv = 1.0 / z;
        for (std::size_t j = 0; j < d; ++j) yr[j] *= inv;
    }
    return make_result(std::move(out), "softmax", {a}, [rows, d](Node& self) {
        double* gp = self.parents[0]->grad_buffer().ptr();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = self.value.ptr() + r * d;
            const double* g = self.grad.ptr() + r * d;
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) dot += g[j] * y[j];
            for (std::size_t j = 0; j < d; ++j) gp[r * d + j] += y[j] * (g[j] - dot);
        }
    });
}

Var layer_norm(const Var& a, double eps) {
    const Shape& s = a.shape();
    if (s.empty() || s.back() == 0) throw ShapeError("layer_norm", {s});
    const std::size_t d = s.back();
    const std::size_t rows = a.size() / d;
    Tensor out(s);
    std::vector<double> rstd(rows);
    const double* x = a.value().ptr();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x + r * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += xr[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<double>(d);
        rstd[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) out[r * d + j] = (xr[j] - mu) * rstd[r];
    }
    return make_result(std::move(out), "layer_norm", {a}, [rows, d, rstd = std::move(rstd)](Node& self) {
        double* gp = self.parents[0]->grad_buffer().ptr();
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* xhat = self.value.ptr() + r * d;
            const double* g = self.grad.ptr() + r * d;
            double mg = 0.0, mgx = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                mg += g[j];
                mgx += g[j] * xhat[j];
            }
            mg *= inv_d;
            mgx *= inv_d;
            for (std::size_t j = 0; j < d; ++j) gp[r * d + j] += rstd[r] * (g[j] - mg - xhat[j] * mgx);
        }
    });
}

Var cross_entropy(const Var& logits, std::span<const std::int64_t> targets, std::int64_t ignore_index) {
    const Shape& s = logits.shape();
    if (s.size() != 2 || s[0] != targets.size()) {
        throw ShapeError("cross_entropy", {s, Shape{targets.size()}});
    }
    const std::size_t n = s[0];
    const std::size_t v = s[1];
    Tensor probs(s);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t r = 0; r < n; ++r) {
        const double* x = logits.value().ptr() + r * v;
        double* p = probs.ptr() + r * v;
        const double m = *std::max_element(x, x + v);
        double z = 0.0;
        for (std::size_t j = 0; j < v; ++j) {
            p[j] = std::exp(x[j] - m);
            z += p[j];
        }
        for (std::size_t j = 0; j < v; ++j) p[j] /= z;
        const std::int64_t t = targets[r];
        if (t == ignore_index) continue;
        if (t < 0 || static_cast<std::size_t>(t) >= v) {
            throw std::out_of_range("cross_entropy: target " + std::to_string(t) + " outside vocabulary of " +
                                    std::to_string(v));
        }
        total += -(x[t] - m - std::log(z));
        ++count;
    }
    const double denom = count == 0 ? 1.0 : static_cast<double>(count);
    std::vector<std::int64_t> tg(targets.begin(), targets.end());
    return make_result(Tensor::scalar(total / denom), "cross_entropy", {logits},
                       [probs = std::move(probs), tg = std::move(tg), n, v, denom, ignore_index](Node& self) {
                           double* gp = self.parents[0]->grad_buffer().ptr();
                           const double k = self.grad[0] / denom;
                           for (std::size_t r = 0; r < n; ++r) {
                               if (tg[r] == ignore_index) continue;
                               for (std::size_t j = 0; j < v; ++j) gp[r * v + j] += k * probs[r * v + j];
                               gp[r * v + static_cast<std::size_t>(tg[r])] -= k;
                           }
                       });
}

Var rope(const Var& a, std::span<const std::int64_t> positions, double base) {
    const Shape& s = a.shape();
    if (s.size() < 2 || s.back() % 2 != 0 || s[s.size() - 2] != positions.size()) {
        throw ShapeError("rope", {s, Shape{positions.size()}});
    }
    const std::size_t t = positions.size();
    const std::size_t d = s.back();
    const std::size_t half = d / 2;
    std::vector<double> cos_t(t * half), sin_t(t * half);
    for (std::size_t p = 0; p < t; ++p) {
        for (std::size_t i = 0; i < half; ++i) {
            const double theta = static_cast<double>(positions[p]) *
                                 std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(d));
            cos_t[p * half + i] = std::cos(theta);
            sin_t[p * half + i] = std::sin(theta);
        }
    }
    const std::size_t blocks = a.size() / (t * d);
    Tensor out(s);
    const double* x = a.value().ptr();
    for (std::size_t b = 0; b < blocks; ++b) {
        for (std::size_t p = 0; p < t; ++p) {
            const std::size_t row = (b * t + p) * d;
            for (std::size_t i = 0; i < half; ++i) {
                const double c = cos_t[p * half + i], sn = sin_t[p * half + i];
                const double x0 = x[row + 2 * i], x1 = x[row + 2 * i + 1];
                out[row + 2 * i] = x0 * c - x1 * sn;
                out[row + 2 * i + 1] = x0 * sn + x1 * c;
            }
        }
    }
    return make_result(std::move(out), "rope", {a},
                       [blocks, t, d, half, cos_t = std::move(cos_t), sin_t = std::move(sin_t)](Node& self) {
                           double* gp = self.parents[0]->grad_buffer().ptr();
                           const double* g = self.grad.ptr();
                           for (std::size_t b = 0; b < blocks; ++b) {
                               for (std::size_t p = 0; p < t; ++p) {
                                   const std::size_t row = (b * t + p) * d;
                                   for (std::size_t i = 0; i < half; ++i) {
                                       const double c = cos_t[p * half + i], sn = sin_t[p * half + i];
                                       const double g0 = g[row + 2 * i], g1 = g[row + 2 * i + 1];
                                       gp[row + 2 * i] += g0 * c + g1 * sn;
                                       gp[row + 2 * i + 1] += -g0 * sn + g1 * c;
                                   }
                               }
                           }
                       });
}

Var stop_gradient(const Var& a) { return constant(a.value()); }

Var straight_through(const Var& a, Tensor forward) {
    if (forward.shape() != a.shape()) throw ShapeError("straight_through", {a.shape(), forward.shape()});
    return make_result(std::move(forward), "straight_through", {a}, [](Node& self) {
        Tensor& ga = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
    });
}

Var round_ste(const Var& a) {
    Tensor rounded = a.value();
    for (auto& v : rounded.data()) v = std::round(v);
    return straight_through(a, std::move(rounded));
}

Var dropout(const Var& a, double p, Rng& rng) {
    if (p <= 0.0) return a;
    if (p >= 1.0) throw std::invalid_argument("dropout: p must be < 1");
    const double keep_scale = 1.0 / (1.0 - p);
    Tensor mask(a.shape());
    for (auto& m : mask.data()) m = rng.uniform() < p ? 0.0 : keep_scale;
    return mul(a, constant(std::move(mask)));
}

}  // namespace flowtok::num
