#pragma once

#include <string>
#include <vector>

#include "edd/params.hpp"
#include "edd/tensor.hpp"

namespace edd {

/// Plain SGD with optional momentum and decoupled-from-nothing weight decay:
/// the decay term realizes an L2 prior on the parameters.
///
///   v <- momentum * v + (grad + weight_decay * p)
///   p <- p - learning_rate * v
///
/// With momentum 0 this is exactly p <- p - lr * (grad + weight_decay * p).
/// Gradients are zeroed after a step.
class SgdOptimizer {
public:
    struct Options {
        float learning_rate = 0.05f;
        float weight_decay = 0.0f;
        float momentum = 0.0f;
    };

    explicit SgdOptimizer(Options options) : options_(options) {
        if (options_.learning_rate <= 0.0f)
            throw std::invalid_argument("learning rate must be positive");
        if (options_.weight_decay < 0.0f)
            throw std::invalid_argument("weight decay must be nonnegative");
    }

    const Options& options() const { return options_; }

    void step(ParameterStore& params) {
        if (velocity_.empty() && options_.momentum != 0.0f)
            velocity_.resize(params.count());
        size_t idx = 0;
        for (const auto& e : params.entries()) {
            Tensor& p = *e.tensor;
            if (!p.has_grad())
                throw GradError("optimizer step: parameter '" + e.name +
                                "' has no gradient; run backward first");
            if (options_.momentum != 0.0f) {
                auto& v = velocity_[idx];
                if (v.empty()) v.assign(p.size(), 0.0f);
                for (size_t i = 0; i < p.data.size(); ++i) {
                    const float g = p.grad[i] + options_.weight_decay * p.data[i];
                    v[i] = options_.momentum * v[i] + g;
                    p.data[i] -= options_.learning_rate * v[i];
                }
            } else {
                for (size_t i = 0; i < p.data.size(); ++i) {
                    const float g = p.grad[i] + options_.weight_decay * p.data[i];
                    p.data[i] -= options_.learning_rate * g;
                }
            }
            ++idx;
        }
        params.zero_grads();
    }

private:
    Options options_;
    std::vector<std::vector<float>> velocity_;
};

}  // namespace edd
