#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace edd {

/// Raised when operand shapes do not conform; the message names both shapes.
class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised on autodiff protocol violations (backward before forward, double backward,
/// optimizer step without gradients).
class GradError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<int>;

inline size_t shape_numel(const Shape& shape) {
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream oss;
    oss << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) oss << ", ";
        oss << shape[i];
    }
    oss << "]";
    return oss.str();
}

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

/// Thread-local switch: while disabled, ops run forward-only and record no graph.
class GradMode {
public:
    static bool& enabled() {
        thread_local bool flag = true;
        return flag;
    }
};

/// RAII scope that disables graph recording (evaluation fast path).
class NoGradGuard {
public:
    NoGradGuard() : prev_(GradMode::enabled()) { GradMode::enabled() = false; }
    ~NoGradGuard() { GradMode::enabled() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

/// Dense row-major float32 array with an optional gradient buffer and the
/// links needed for reverse-mode differentiation. Ops are free functions in
/// ops.hpp; each one stores a closure here that routes its output gradient to
/// the parents.
class Tensor {
public:
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;  // empty until backward first touches this node
    bool requires_grad = false;

    std::vector<TensorPtr> parents;
    std::function<void()> backward_fn;
    bool backward_ran = false;

    Tensor() = default;
    Tensor(Shape s, std::vector<float> values, bool rg = false)
        : shape(std::move(s)), data(std::move(values)), requires_grad(rg) {
        if (shape_numel(shape) != data.size())
            throw ShapeError("tensor shape " + shape_str(shape) + " does not match " +
                             std::to_string(data.size()) + " values");
    }

    static TensorPtr from(Shape s, std::vector<float> values, bool rg = false) {
        return std::make_shared<Tensor>(std::move(s), std::move(values), rg);
    }

    static TensorPtr zeros(Shape s, bool rg = false) {
        size_t n = shape_numel(s);
        return std::make_shared<Tensor>(std::move(s), std::vector<float>(n, 0.0f), rg);
    }

    static TensorPtr full(Shape s, float v, bool rg = false) {
        size_t n = shape_numel(s);
        return std::make_shared<Tensor>(std::move(s), std::vector<float>(n, v), rg);
    }

    static TensorPtr scalar(float v, bool rg = false) {
        return Tensor::from({1}, {v}, rg);
    }

    size_t size() const { return data.size(); }
    int dim(size_t i) const { return shape[i]; }
    size_t rank() const { return shape.size(); }

    /// Value of a one-element tensor.
    float item() const {
        if (data.size() != 1)
            throw ShapeError("item() on tensor of shape " + shape_str(shape));
        return data[0];
    }

    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), 0.0f);
    }

    void zero_grad() { grad.clear(); }

    bool has_grad() const { return !grad.empty(); }

    bool all_finite() const {
        for (float v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

/// Reverse-mode pass from a scalar loss node. Gradients accumulate into every
/// reachable node that requires them. Running backward twice on the same loss
/// node is an error; so is passing a node that records no computation.
inline void backward(const TensorPtr& loss) {
    if (!loss)
        throw GradError("backward called before any forward pass recorded a loss");
    if (loss->size() != 1)
        throw GradError("backward requires a scalar loss, got shape " + shape_str(loss->shape));
    if (loss->backward_ran)
        throw GradError("backward already ran for this loss node; run a new forward pass first");
    if (!loss->backward_fn && loss->parents.empty() && !loss->requires_grad)
        throw GradError("backward called on a node with no recorded computation");

    // Depth-first topological order, iterative to keep deep graphs safe.
    std::vector<Tensor*> order;
    std::unordered_set<Tensor*> seen;
    std::vector<std::pair<Tensor*, size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    seen.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Tensor* parent = node->parents[idx].get();
            ++idx;
            if (parent && !seen.count(parent)) {
                seen.insert(parent);
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss->ensure_grad();
    loss->grad[0] = 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Tensor* node = *it;
        if (node->backward_fn && node->has_grad()) node->backward_fn();
    }
    loss->backward_ran = true;
}

}  // namespace edd
