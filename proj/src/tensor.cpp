// Copyright (c) 2026 the pdaf authors
// SPDX-License-Identifier: Apache-2.0

#include "pdaf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>
#include <utility>

namespace pdaf {

bool GradMode::enabled_ = true;

std::int64_t shape_numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int e : shape) {
        if (e < 1) {
            throw ShapeError("tensor extents must be >= 1");
        }
        n *= e;
    }
    return n;
}

Tensor::Tensor(std::vector<int> s, std::vector<double> d, bool grad_tracked)
    : shape(std::move(s)), data(std::move(d)), requires_grad(grad_tracked) {
    if (shape.size() > 4) {
        throw ShapeError("rank > 4 is not supported");
    }
    if (static_cast<std::int64_t>(data.size()) != shape_numel(shape)) {
        throw ShapeError("data length " + std::to_string(data.size()) +
                         " does not match shape product " +
                         std::to_string(shape_numel(shape)));
    }
}

TensorPtr Tensor::zeros(const std::vector<int>& shape, bool grad_tracked) {
    return std::make_shared<Tensor>(
        shape, std::vector<double>(static_cast<std::size_t>(shape_numel(shape)), 0.0),
        grad_tracked);
}

TensorPtr Tensor::full(const std::vector<int>& shape, double value, bool grad_tracked) {
    return std::make_shared<Tensor>(
        shape, std::vector<double>(static_cast<std::size_t>(shape_numel(shape)), value),
        grad_tracked);
}

TensorPtr Tensor::from_data(const std::vector<int>& shape, std::vector<double> values,
                            bool grad_tracked) {
    return std::make_shared<Tensor>(shape, std::move(values), grad_tracked);
}

TensorPtr Tensor::gaussian(const std::vector<int>& shape, RngStream& rng, bool grad_tracked) {
    std::vector<double> values(static_cast<std::size_t>(shape_numel(shape)));
    for (double& v : values) {
        v = rng.gaussian();
    }
    return std::make_shared<Tensor>(shape, std::move(values), grad_tracked);
}

double Tensor::item() const {
    if (numel() != 1) {
        throw ContractError("item() requires a single-element tensor");
    }
    return data[0];
}

void Tensor::ensure_grad() {
    if (grad.size() != data.size()) {
        grad.assign(data.size(), 0.0);
    }
}

void Tensor::zero_grad() {
    std::fill(grad.begin(), grad.end(), 0.0);
}

namespace {

bool should_track(std::initializer_list<TensorPtr> inputs) {
    if (!GradMode::enabled()) {
        return false;
    }
    for (const auto& t : inputs) {
        if (t && t->requires_grad) {
            return true;
        }
    }
    return false;
}

void require_same_shape(const TensorPtr& a, const TensorPtr& b, const char* op) {
    if (a->shape != b->shape) {
        throw ShapeError(std::string(op) + ": operand shapes differ");
    }
}

void require_rank4(const TensorPtr& x, const char* op) {
    if (x->rank() != 4) {
        throw ShapeError(std::string(op) + ": rank-4 tensor (B,C,H,W) required");
    }
}

}  // namespace

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a->data[i] + b->data[i];
    }
    auto r = Tensor::from_data(a->shape, std::move(out));
    if (should_track({a, b})) {
        r->requires_grad = true;
        r->parents = {a, b};
        Tensor* rp = r.get();
        r->backward_fn = [a, b, rp]() {
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += rp->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < b->grad.size(); ++i) b->grad[i] += rp->grad[i];
            }
        };
    }
    return r;
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a->data[i] - b->data[i];
    }
    auto r = Tensor::from_data(a->shape, std::move(out));
    if (should_track({a, b})) {
        r->requires_grad = true;
        r->parents = {a, b};
        Tensor* rp = r.get();
        r->backward_fn = [a, b, rp]() {
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += rp->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < b->grad.size(); ++i) b->grad[i] -= rp->grad[i];
            }
        };
    }
    return r;
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a->data[i] * b->data[i];
    }
    auto r = Tensor::from_data(a->shape, std::move(out));
    if (should_track({a, b})) {
        r->requires_grad = true;
        r->parents = {a, b};
        Tensor* rp = r.get();
        r->backward_fn = [a, b, rp]() {
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < a->grad.size(); ++i)
                    a->grad[i] += rp->grad[i] * b->data[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < b->grad.size(); ++i)
                    b->grad[i] += rp->grad[i] * a->data[i];
            }
        };
    }
    return r;
}

TensorPtr scalar_affine(const TensorPtr& x, double mul, double add) {
    std::vector<double> out(x->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = mul * x->data[i] + add;
    }
    auto r = Tensor::from_data(x->shape, std::move(out));
    if (should_track({x})) {
        r->requires_grad = true;
        r->parents = {x};
        Tensor* rp = r.get();
        r->backward_fn = [x, mul, rp]() {
            x->ensure_grad();
            for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += mul * rp->grad[i];
        };
    }
    return r;
}

namespace {

/// Shared scaffold for unary elementwise ops with data-dependent derivative.
TensorPtr unary_op(const TensorPtr& x, const std::function<double(double)>& f,
                   const std::function<double(double, double)>& dfdx_of_in_out) {
    std::vector<double> out(x->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = f(x->data[i]);
    }
    auto r = Tensor::from_data(x->shape, std::move(out));
    if (should_track({x})) {
        r->requires_grad = true;
        r->parents = {x};
        Tensor* rp = r.get();
        r->backward_fn = [x, dfdx_of_in_out, rp]() {
            x->ensure_grad();
            for (std::size_t i = 0; i < x->grad.size(); ++i) {
                x->grad[i] += rp->grad[i] * dfdx_of_in_out(x->data[i], rp->data[i]);
            }
        };
    }
    return r;
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

TensorPtr relu(const TensorPtr& x) {
    return unary_op(
        x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

TensorPtr silu(const TensorPtr& x) {
    return unary_op(
        x, [](double v) { return v * sigmoid(v); },
        [](double v, double) {
            const double s = sigmoid(v);
            return s + v * s * (1.0 - s);
        });
}

TensorPtr exp(const TensorPtr& x) {
    return unary_op(
        x, [](double v) { return std::exp(v); },
        [](double, double out) { return out; });
}

TensorPtr log(const TensorPtr& x) {
    return unary_op(
        x, [](double v) { return std::log(std::max(v, kLogFloor)); },
        [](double v, double) { return 1.0 / std::max(v, kLogFloor); });
}

TensorPtr softplus(const TensorPtr& x) {
    return unary_op(
        x,
        [](double v) {
            if (v > 30.0) return v;
            if (v < -30.0) return std::exp(v);
            return std::log1p(std::exp(v));
        },
        [](double v, double) { return sigmoid(v); });
}

TensorPtr clamp(const TensorPtr& x, double lo, double hi) {
    if (lo > hi) {
        throw ContractError("clamp: lo > hi");
    }
    return unary_op(
        x, [lo, hi](double v) { return std::min(std::max(v, lo), hi); },
        [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

TensorPtr concat_channels(const std::vector<TensorPtr>& xs) {
    if (xs.empty()) {
        throw ContractError("concat_channels: no inputs");
    }
    for (const auto& x : xs) {
        require_rank4(x, "concat_channels");
    }
    const int b = xs[0]->dim(0), h = xs[0]->dim(2), w = xs[0]->dim(3);
    int c_total = 0;
    for (const auto& x : xs) {
        if (x->dim(0) != b || x->dim(2) != h || x->dim(3) != w) {
            throw ShapeError("concat_channels: B/H/W mismatch");
        }
        c_total += x->dim(1);
    }
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    std::vector<double> out(static_cast<std::size_t>(b) * c_total * plane);
    for (int bi = 0; bi < b; ++bi) {
        std::int64_t oc = 0;
        for (const auto& x : xs) {
            const int c = x->dim(1);
            const double* src = x->data.data() + static_cast<std::int64_t>(bi) * c * plane;
            double* dst = out.data() + (static_cast<std::int64_t>(bi) * c_total + oc) * plane;
            std::copy(src, src + c * plane, dst);
            oc += c;
        }
    }
    auto r = Tensor::from_data({b, c_total, h, w}, std::move(out));
    bool track = GradMode::enabled();
    if (track) {
        track = false;
        for (const auto& x : xs) track = track || x->requires_grad;
    }
    if (track) {
        r->requires_grad = true;
        r->parents.assign(xs.begin(), xs.end());
        Tensor* rp = r.get();
        auto inputs = xs;
        r->backward_fn = [inputs, b, c_total, plane, rp]() {
            for (int bi = 0; bi < b; ++bi) {
                std::int64_t oc = 0;
                for (const auto& x : inputs) {
                    const int c = x->dim(1);
                    if (x->requires_grad) {
                        x->ensure_grad();
                        const double* src =
                            rp->grad.data() + (static_cast<std::int64_t>(bi) * c_total + oc) * plane;
                        double* dst = x->grad.data() + static_cast<std::int64_t>(bi) * c * plane;
                        for (std::int64_t i = 0; i < c * plane; ++i) dst[i] += src[i];
                    }
                    oc += c;
                }
            }
        };
    }
    return r;
}

TensorPtr nearest_upsample2(const TensorPtr& x) {
    require_rank4(x, "nearest_upsample2");
    const int b = x->dim(0), c = x->dim(1), h = x->dim(2), w = x->dim(3);
    const int oh = 2 * h, ow = 2 * w;
    std::vector<double> out(static_cast<std::size_t>(b) * c * oh * ow);
    for (int bc = 0; bc < b * c; ++bc) {
        const double* src = x->data.data() + static_cast<std::int64_t>(bc) * h * w;
        double* dst = out.data() + static_cast<std::int64_t>(bc) * oh * ow;
        for (int y = 0; y < h; ++y) {
            for (int xx = 0; xx < w; ++xx) {
                const double v = src[y * w + xx];
                double* d = dst + (2 * y) * ow + 2 * xx;
                d[0] = v;
                d[1] = v;
                d[ow] = v;
                d[ow + 1] = v;
            }
        }
    }
    auto r = Tensor::from_data({b, c, oh, ow}, std::move(out));
    if (should_track({x})) {
        r->requires_grad = true;
        r->parents = {x};
        Tensor* rp = r.get();
        r->backward_fn = [x, b, c, h, w, ow, rp]() {
            x->ensure_grad();
            for (int bc = 0; bc < b * c; ++bc) {
                const double* g = rp->grad.data() + static_cast<std::int64_t>(bc) * (2 * h) * ow;
                double* dst = x->grad.data() + static_cast<std::int64_t>(bc) * h * w;
                for (int y = 0; y < h; ++y) {
                    for (int xx = 0; xx < w; ++xx) {
                        const double* s = g + (2 * y) * ow + 2 * xx;
                        dst[y * w + xx] += s[0] + s[1] + s[ow] + s[ow + 1];
                    }
                }
            }
        };
    }
    return r;
}

TensorPtr sum_all(const TensorPtr& x) {
    double acc = 0.0;
    for (double v : x->data) acc += v;
    auto r = Tensor::from_data({1}, {acc});
    if (should_track({x})) {
        r->requires_grad = true;
        r->parents = {x};
        Tensor* rp = r.get();
        r->backward_fn = [x, rp]() {
            x->ensure_grad();
            const double g = rp->grad[0];
            for (double& gv : x->grad) gv += g;
        };
    }
    return r;
}

TensorPtr mean_all(const TensorPtr& x) {
    double acc = 0.0;
    for (double v : x->data) acc += v;
    const double n = static_cast<double>(x->numel());
    auto r = Tensor::from_data({1}, {acc / n});
    if (should_track({x})) {
        r->requires_grad = true;
        r->parents = {x};
        Tensor* rp = r.get();
        r->backward_fn = [x, n, rp]() {
            x->ensure_grad();
            const double g = rp->grad[0] / n;
            for (double& gv : x->grad) gv += g;
        };
    }
    return r;
}

TensorPtr channel_softmax(const TensorPtr& x) {
    require_rank4(x, "channel_softmax");
    const int b = x->dim(0), c = x->dim(1), h = x->dim(2), w = x->dim(3);
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    std::vector<double> out(x->data.size());
    for (int bi = 0; bi < b; ++bi) {
        const double* src = x->data.data() + static_cast<std::int64_t>(bi) * c * plane;
        double* dst = out.data() + static_cast<std::int64_t>(bi) * c * plane;
        for (std::int64_t p = 0; p < plane; ++p) {
            double mx = src[p];
            for (int ci = 1; ci < c; ++ci) mx = std::max(mx, src[ci * plane + p]);
            double denom = 0.0;
            for (int ci = 0; ci < c; ++ci) {
                const double e = std::exp(src[ci * plane + p] - mx);
                dst[ci * plane + p] = e;
                denom += e;
            }
            for (int ci = 0; ci < c; ++ci) dst[ci * plane + p] /= denom;
        }
    }
    auto r = Tensor::from_data(x->shape, std::move(out));
    if (should_track({x})) {
        r->requires_grad = true;
        r->parents = {x};
        Tensor* rp = r.get();
        r->backward_fn = [x, b, c, plane, rp]() {
            x->ensure_grad();
            for (int bi = 0; bi < b; ++bi) {
                const std::int64_t base = static_cast<std::int64_t>(bi) * c * plane;
                const double* s = rp->data.data() + base;
                const double* g = rp->grad.data() + base;
                double* dx = x->grad.data() + base;
                for (std::int64_t p = 0; p < plane; ++p) {
                    double dot = 0.0;
                    for (int ci = 0; ci < c; ++ci) {
                        dot += g[ci * plane + p] * s[ci * plane + p];
                    }
                    for (int ci = 0; ci < c; ++ci) {
                        dx[ci * plane + p] += s[ci * plane + p] * (g[ci * plane + p] - dot);
                    }
                }
            }
        };
    }
    return r;
}

namespace {

struct ConvDims {
    int b, ci, h, w, co, k, oh, ow, stride, pad;
};

ConvDims conv_dims(const TensorPtr& x, const TensorPtr& w, const TensorPtr& bias,
                   int stride, int pad) {
    require_rank4(x, "conv2d");
    require_rank4(w, "conv2d kernel");
    if (bias->rank() != 1) {
        throw ShapeError("conv2d: bias must be rank 1");
    }
    ConvDims d{};
    d.b = x->dim(0);
    d.ci = x->dim(1);
    d.h = x->dim(2);
    d.w = x->dim(3);
    d.co = w->dim(0);
    d.k = w->dim(2);
    d.stride = stride;
    d.pad = pad;
    if (w->dim(1) != d.ci) {
        throw ShapeError("conv2d: kernel input channels " + std::to_string(w->dim(1)) +
                         " != input channels " + std::to_string(d.ci));
    }
    if (w->dim(3) != d.k || d.k % 2 == 0) {
        throw ShapeError("conv2d: kernel must be square with odd extent");
    }
    if (bias->dim(0) != d.co) {
        throw ShapeError("conv2d: bias length != output channels");
    }
    if (stride < 1 || pad < 0) {
        throw ShapeError("conv2d: stride must be >= 1 and pad >= 0");
    }
    const int hn = d.h + 2 * pad - d.k;
    const int wn = d.w + 2 * pad - d.k;
    if (hn < 0 || wn < 0 || hn % stride != 0 || wn % stride != 0) {
        throw ShapeError("conv2d: output extent is not integral for given stride/pad");
    }
    d.oh = hn / stride + 1;
    d.ow = wn / stride + 1;
    return d;
}

// Valid output range along one axis for a kernel offset kq:
// in = out*stride + kq - pad must land in [0, extent).
inline void axis_range(int extent, int out_extent, int stride, int pad, int kq,
                       int& lo, int& hi) {
    int num = pad - kq;
    lo = num <= 0 ? 0 : (num + stride - 1) / stride;
    int top = extent - 1 - kq + pad;
    hi = top < 0 ? -1 : std::min(out_extent - 1, top / stride);
}

}  // namespace

TensorPtr conv2d(const TensorPtr& x, const TensorPtr& w, const TensorPtr& bias,
                 int stride, int pad) {
    const ConvDims d = conv_dims(x, w, bias, stride, pad);
    const std::int64_t in_plane = static_cast<std::int64_t>(d.h) * d.w;
    const std::int64_t out_plane = static_cast<std::int64_t>(d.oh) * d.ow;
    std::vector<double> out(static_cast<std::size_t>(d.b) * d.co * out_plane);

    for (int bi = 0; bi < d.b; ++bi) {
        for (int oc = 0; oc < d.co; ++oc) {
            double* oplane = out.data() + (static_cast<std::int64_t>(bi) * d.co + oc) * out_plane;
            std::fill(oplane, oplane + out_plane, bias->data[static_cast<std::size_t>(oc)]);
            for (int ic = 0; ic < d.ci; ++ic) {
                const double* xplane =
                    x->data.data() + (static_cast<std::int64_t>(bi) * d.ci + ic) * in_plane;
                const double* wbase =
                    w->data.data() + ((static_cast<std::int64_t>(oc) * d.ci + ic) * d.k) * d.k;
                for (int ky = 0; ky < d.k; ++ky) {
                    int oy0, oy1;
                    axis_range(d.h, d.oh, d.stride, d.pad, ky, oy0, oy1);
                    for (int kx = 0; kx < d.k; ++kx) {
                        const double wv = wbase[ky * d.k + kx];
                        int ox0, ox1;
                        axis_range(d.w, d.ow, d.stride, d.pad, kx, ox0, ox1);
                        for (int oy = oy0; oy <= oy1; ++oy) {
                            const int iy = oy * d.stride + ky - d.pad;
                            const double* xrow =
                                xplane + static_cast<std::int64_t>(iy) * d.w +
                                (static_cast<std::int64_t>(ox0) * d.stride + kx - d.pad);
                            double* orow = oplane + static_cast<std::int64_t>(oy) * d.ow + ox0;
                            const int n = ox1 - ox0 + 1;
                            if (d.stride == 1) {
                                for (int i = 0; i < n; ++i) orow[i] += wv * xrow[i];
                            } else {
                                for (int i = 0; i < n; ++i) {
                                    orow[i] += wv * xrow[static_cast<std::int64_t>(i) * d.stride];
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    auto r = Tensor::from_data({d.b, d.co, d.oh, d.ow}, std::move(out));
    if (should_track({x, w, bias})) {
        r->requires_grad = true;
        r->parents = {x, w, bias};
        Tensor* rp = r.get();
        r->backward_fn = [x, w, bias, d, in_plane, out_plane, rp]() {
            const std::vector<double>& g = rp->grad;
            if (bias->requires_grad) {
                bias->ensure_grad();
                for (int bi = 0; bi < d.b; ++bi) {
                    for (int oc = 0; oc < d.co; ++oc) {
                        const double* gp =
                            g.data() + (static_cast<std::int64_t>(bi) * d.co + oc) * out_plane;
                        double acc = 0.0;
                        for (std::int64_t i = 0; i < out_plane; ++i) acc += gp[i];
                        bias->grad[static_cast<std::size_t>(oc)] += acc;
                    }
                }
            }
            if (w->requires_grad) {
                w->ensure_grad();
                for (int bi = 0; bi < d.b; ++bi) {
                    for (int oc = 0; oc < d.co; ++oc) {
                        const double* gplane =
                            g.data() + (static_cast<std::int64_t>(bi) * d.co + oc) * out_plane;
                        for (int ic = 0; ic < d.ci; ++ic) {
                            const double* xplane =
                                x->data.data() +
                                (static_cast<std::int64_t>(bi) * d.ci + ic) * in_plane;
                            double* wg =
                                w->grad.data() +
                                ((static_cast<std::int64_t>(oc) * d.ci + ic) * d.k) * d.k;
                            for (int ky = 0; ky < d.k; ++ky) {
                                int oy0, oy1;
                                axis_range(d.h, d.oh, d.stride, d.pad, ky, oy0, oy1);
                                for (int kx = 0; kx < d.k; ++kx) {
                                    int ox0, ox1;
                                    axis_range(d.w, d.ow, d.stride, d.pad, kx, ox0, ox1);
                                    double acc = 0.0;
                                    for (int oy = oy0; oy <= oy1; ++oy) {
                                        const int iy = oy * d.stride + ky - d.pad;
                                        const double* xrow =
                                            xplane + static_cast<std::int64_t>(iy) * d.w +
                                            (static_cast<std::int64_t>(ox0) * d.stride + kx -
                                             d.pad);
                                        const double* grow =
                                            gplane + static_cast<std::int64_t>(oy) * d.ow + ox0;
                                        const int n = ox1 - ox0 + 1;
                                        if (d.stride == 1) {
                                            for (int i = 0; i < n; ++i) acc += grow[i] * xrow[i];
                                        } else {
                                            for (int i = 0; i < n; ++i) {
                                                acc += grow[i] *
                                                       xrow[static_cast<std::int64_t>(i) * d.stride];
                                            }
                                        }
                                    }
                                    wg[ky * d.k + kx] += acc;
                                }
                            }
                        }
                    }
                }
            }
            if (x->requires_grad) {
                x->ensure_grad();
                for (int bi = 0; bi < d.b; ++bi) {
                    for (int ic = 0; ic < d.ci; ++ic) {
                        double* xg = x->grad.data() +
                                     (static_cast<std::int64_t>(bi) * d.ci + ic) * in_plane;
                        for (int oc = 0; oc < d.co; ++oc) {
                            const double* gplane =
                                g.data() + (static_cast<std::int64_t>(bi) * d.co + oc) * out_plane;
                            const double* wbase =
                                w->data.data() +
                                ((static_cast<std::int64_t>(oc) * d.ci + ic) * d.k) * d.k;
                            for (int ky = 0; ky < d.k; ++ky) {
                                int oy0, oy1;
                                axis_range(d.h, d.oh, d.stride, d.pad, ky, oy0, oy1);
                                for (int kx = 0; kx < d.k; ++kx) {
                                    const double wv = wbase[ky * d.k + kx];
                                    int ox0, ox1;
                                    axis_range(d.w, d.ow, d.stride, d.pad, kx, ox0, ox1);
                                    for (int oy = oy0; oy <= oy1; ++oy) {
                                        const int iy = oy * d.stride + ky - d.pad;
                                        double* xrow =
                                            xg + static_cast<std::int64_t>(iy) * d.w +
                                            (static_cast<std::int64_t>(ox0) * d.stride + kx -
                                             d.pad);
                                        const double* grow =
                                            gplane + static_cast<std::int64_t>(oy) * d.ow + ox0;
                                        const int n = ox1 - ox0 + 1;
                                        if (d.stride == 1) {
                                            for (int i = 0; i < n; ++i) xrow[i] += wv * grow[i];
                                        } else {
                                            for (int i = 0; i < n; ++i) {
                                                xrow[static_cast<std::int64_t>(i) * d.stride] +=
                                                    wv * grow[i];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        };
    }
    return r;
}

TensorPtr detach(const TensorPtr& x) {
    return Tensor::from_data(x->shape, x->data, false);
}

void backward(const TensorPtr& loss) {
    if (!loss) {
        throw ContractError("backward: null loss");
    }
    if (loss->numel() != 1) {
        throw ContractError("backward: loss must be a scalar tensor");
    }
    if (loss->backward_ran_) {
        throw ContractError("backward: graph already consumed; rebuild the forward pass");
    }
    loss->backward_ran_ = true;

    // Iterative post-order DFS to topologically sort the graph.
    std::vector<Tensor*> order;
    std::unordered_set<Tensor*> visited;
    std::vector<std::pair<Tensor*, std::size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    visited.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Tensor* next = node->parents[idx].get();
            ++idx;
            if (visited.insert(next).second) {
                stack.emplace_back(next, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss->ensure_grad();
    loss->grad[0] += 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Tensor* node = *it;
        if (node->backward_fn) {
            node->ensure_grad();
            node->backward_fn();
            node->backward_fn = nullptr;  // one-shot; also releases captures
        }
    }
}

void adam_step(const std::vector<TensorPtr>& params, AdamState& state,
               double lr, double beta1, double beta2, double eps) {
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(params[i]->data.size(), 0.0);
            state.v[i].assign(params[i]->data.size(), 0.0);
        }
    }
    if (state.m.size() != params.size()) {
        throw ContractError("adam_step: state/param count mismatch");
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        if (state.m[i].size() != p.data.size()) {
            throw ContractError("adam_step: state/param shape mismatch");
        }
        const bool has_grad = p.grad.size() == p.data.size();
        for (std::size_t j = 0; j < p.data.size(); ++j) {
            const double g = has_grad ? p.grad[j] : 0.0;
            state.m[i][j] = beta1 * state.m[i][j] + (1.0 - beta1) * g;
            state.v[i][j] = beta2 * state.v[i][j] + (1.0 - beta2) * g * g;
            const double mhat = state.m[i][j] / bc1;
            const double vhat = state.v[i][j] / bc2;
            p.data[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

AdamOptimizer::AdamOptimizer(std::vector<TensorPtr> params, double lr,
                             double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamOptimizer::step() {
    adam_step(params_, state_, lr_, beta1_, beta2_, eps_);
}

void AdamOptimizer::zero_grad() {
    for (const auto& p : params_) {
        p->zero_grad();
    }
}

}  // namespace pdaf
