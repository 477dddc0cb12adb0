// Copyright (c) 2026 the pdaf authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "pdaf/errors.hpp"
#include "pdaf/rng.hpp"

namespace pdaf {

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

/// Global switch for graph recording. Turned off during evaluation so forward
/// passes skip building backward closures.
class GradMode {
public:
    static bool enabled() { return enabled_; }
    static void set_enabled(bool on) { enabled_ = on; }

private:
    static bool enabled_;
};

struct NoGradGuard {
    NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set_enabled(false); }
    ~NoGradGuard() { GradMode::set_enabled(prev_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

/// Dense row-major tensor of doubles, rank <= 4 with B,C,H,W meaning at rank 4.
/// Ops build a dynamic graph; backward() walks it exactly once per forward.
/// Tensors are immutable after creation, except for in-place optimizer updates
/// between graph builds.
class Tensor : public std::enable_shared_from_this<Tensor> {
public:
    std::vector<int> shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;  // allocated on first use in backward

    std::vector<TensorPtr> parents;
    std::function<void()> backward_fn;  // one-shot; cleared after it runs

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> d, bool grad_tracked);

    static TensorPtr zeros(const std::vector<int>& shape, bool grad_tracked = false);
    static TensorPtr full(const std::vector<int>& shape, double value, bool grad_tracked = false);
    static TensorPtr from_data(const std::vector<int>& shape, std::vector<double> values,
                               bool grad_tracked = false);
    static TensorPtr gaussian(const std::vector<int>& shape, RngStream& rng,
                              bool grad_tracked = false);

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    /// Value of a single-element tensor.
    double item() const;

    void ensure_grad();
    void zero_grad();

    bool backward_consumed() const { return backward_ran_; }

private:
    bool backward_ran_ = false;
    friend void backward(const TensorPtr&);
};

std::int64_t shape_numel(const std::vector<int>& shape);

/// Floor applied inside log() and to division denominators.
inline constexpr double kLogFloor = 1e-12;

// Elementwise and structural ops. Binary ops require identical shapes.
TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
TensorPtr scalar_affine(const TensorPtr& x, double mul, double add);
TensorPtr relu(const TensorPtr& x);
TensorPtr silu(const TensorPtr& x);
TensorPtr exp(const TensorPtr& x);
TensorPtr log(const TensorPtr& x);
TensorPtr softplus(const TensorPtr& x);
TensorPtr clamp(const TensorPtr& x, double lo, double hi);
TensorPtr concat_channels(const std::vector<TensorPtr>& xs);
TensorPtr nearest_upsample2(const TensorPtr& x);
TensorPtr sum_all(const TensorPtr& x);
TensorPtr mean_all(const TensorPtr& x);
TensorPtr channel_softmax(const TensorPtr& x);
TensorPtr conv2d(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b,
                 int stride, int pad);

/// Copy of x cut off from the graph (no gradient flows through).
TensorPtr detach(const TensorPtr& x);

/// Reverse-mode sweep from a scalar loss. Each graph supports exactly one
/// sweep; calling again without re-running the forward pass is an error.
void backward(const TensorPtr& loss);

struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::int64_t t = 0;
};

/// Bias-corrected Adam update, in place. Empty grads count as zero.
void adam_step(const std::vector<TensorPtr>& params, AdamState& state,
               double lr, double beta1, double beta2, double eps);

class AdamOptimizer {
public:
    AdamOptimizer() = default;
    AdamOptimizer(std::vector<TensorPtr> params, double lr,
                  double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void step();
    void zero_grad();

    const std::vector<TensorPtr>& params() const { return params_; }
    AdamState& state() { return state_; }
    const AdamState& state() const { return state_; }
    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }

private:
    std::vector<TensorPtr> params_;
    AdamState state_;
    double lr_ = 1e-3;
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
};

}  // namespace pdaf
