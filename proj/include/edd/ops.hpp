#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "edd/tensor.hpp"

namespace edd {

/// Floor applied to log arguments in cross-entropy so saturated softmax rows
/// cannot produce -inf. Documented part of the loss contract.
inline constexpr double kLogFloor = 1e-12;

namespace detail {

inline bool track(const std::initializer_list<TensorPtr>& inputs) {
    if (!GradMode::enabled()) return false;
    for (const auto& t : inputs)
        if (t && t->requires_grad) return true;
    return false;
}

inline void accumulate(Tensor& t, size_t i, double v) {
    t.grad[i] += static_cast<float>(v);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Dense layer
// ---------------------------------------------------------------------------

/// out[b,o] = sum_i input[b,i]*weights[i,o] + bias[o]. Accumulates in double.
inline TensorPtr dense(const TensorPtr& input, const TensorPtr& weights, const TensorPtr& bias) {
    if (input->rank() != 2 || weights->rank() != 2)
        throw ShapeError("dense: input " + shape_str(input->shape) + " and weights " +
                         shape_str(weights->shape) + " must both be rank 2");
    const int batch = input->dim(0);
    const int in_w = input->dim(1);
    const int out_w = weights->dim(1);
    if (weights->dim(0) != in_w)
        throw ShapeError("dense: input " + shape_str(input->shape) +
                         " incompatible with weights " + shape_str(weights->shape));
    if (bias->rank() != 1 || bias->dim(0) != out_w)
        throw ShapeError("dense: bias " + shape_str(bias->shape) +
                         " incompatible with weights " + shape_str(weights->shape));

    auto out = Tensor::zeros({batch, out_w});
    const float* x = input->data.data();
    const float* w = weights->data.data();
    const float* b = bias->data.data();
    for (int bi = 0; bi < batch; ++bi) {
        for (int o = 0; o < out_w; ++o) {
            double acc = b[o];
            for (int i = 0; i < in_w; ++i) acc += static_cast<double>(x[bi * in_w + i]) * w[i * out_w + o];
            out->data[bi * out_w + o] = static_cast<float>(acc);
        }
    }

    if (detail::track({input, weights, bias})) {
        out->requires_grad = true;
        out->parents = {input, weights, bias};
        Tensor* self = out.get();
        out->backward_fn = [self, batch, in_w, out_w]() {
            const auto& in = self->parents[0];
            const auto& wt = self->parents[1];
            const auto& bs = self->parents[2];
            const float* g = self->grad.data();
            if (in->requires_grad) {
                in->ensure_grad();
                for (int bi = 0; bi < batch; ++bi)
                    for (int i = 0; i < in_w; ++i) {
                        double acc = 0.0;
                        for (int o = 0; o < out_w; ++o)
                            acc += static_cast<double>(g[bi * out_w + o]) * wt->data[i * out_w + o];
                        detail::accumulate(*in, bi * in_w + i, acc);
                    }
            }
            if (wt->requires_grad) {
                wt->ensure_grad();
                for (int i = 0; i < in_w; ++i)
                    for (int o = 0; o < out_w; ++o) {
                        double acc = 0.0;
                        for (int bi = 0; bi < batch; ++bi)
                            acc += static_cast<double>(in->data[bi * in_w + i]) * g[bi * out_w + o];
                        detail::accumulate(*wt, i * out_w + o, acc);
                    }
            }
            if (bs->requires_grad) {
                bs->ensure_grad();
                for (int o = 0; o < out_w; ++o) {
                    double acc = 0.0;
                    for (int bi = 0; bi < batch; ++bi) acc += g[bi * out_w + o];
                    detail::accumulate(*bs, o, acc);
                }
            }
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// Convolution (valid padding, cross-correlation)
// ---------------------------------------------------------------------------

inline TensorPtr conv2d(const TensorPtr& input, const TensorPtr& kernels, const TensorPtr& bias,
                        int stride) {
    if (input->rank() != 4 || kernels->rank() != 4)
        throw ShapeError("conv2d: input " + shape_str(input->shape) + " and kernels " +
                         shape_str(kernels->shape) + " must both be rank 4");
    if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
    const int batch = input->dim(0), c_in = input->dim(1), h = input->dim(2), w = input->dim(3);
    const int c_out = kernels->dim(0), kh = kernels->dim(2), kw = kernels->dim(3);
    if (kernels->dim(1) != c_in)
        throw ShapeError("conv2d: input " + shape_str(input->shape) +
                         " incompatible with kernels " + shape_str(kernels->shape));
    if (kh > h || kw > w)
        throw ShapeError("conv2d: kernel " + shape_str(kernels->shape) +
                         " larger than input " + shape_str(input->shape));
    if (bias->rank() != 1 || bias->dim(0) != c_out)
        throw ShapeError("conv2d: bias " + shape_str(bias->shape) + " incompatible with kernels " +
                         shape_str(kernels->shape));

    const int oh = (h - kh) / stride + 1;
    const int ow = (w - kw) / stride + 1;
    auto out = Tensor::zeros({batch, c_out, oh, ow});

    const float* x = input->data.data();
    const float* k = kernels->data.data();
    for (int bi = 0; bi < batch; ++bi)
        for (int co = 0; co < c_out; ++co)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = bias->data[co];
                    for (int ci = 0; ci < c_in; ++ci)
                        for (int ky = 0; ky < kh; ++ky) {
                            const float* xrow = x + ((bi * c_in + ci) * h + oy * stride + ky) * w +
                                                ox * stride;
                            const float* krow = k + ((co * c_in + ci) * kh + ky) * kw;
                            for (int kx = 0; kx < kw; ++kx)
                                acc += static_cast<double>(xrow[kx]) * krow[kx];
                        }
                    out->data[((bi * c_out + co) * oh + oy) * ow + ox] = static_cast<float>(acc);
                }

    if (detail::track({input, kernels, bias})) {
        out->requires_grad = true;
        out->parents = {input, kernels, bias};
        Tensor* self = out.get();
        out->backward_fn = [self, batch, c_in, h, w, c_out, kh, kw, oh, ow, stride]() {
            const auto& in = self->parents[0];
            const auto& ker = self->parents[1];
            const auto& bs = self->parents[2];
            const float* g = self->grad.data();
            if (in->requires_grad) in->ensure_grad();
            if (ker->requires_grad) ker->ensure_grad();
            if (bs->requires_grad) bs->ensure_grad();
            for (int bi = 0; bi < batch; ++bi)
                for (int co = 0; co < c_out; ++co)
                    for (int oy = 0; oy < oh; ++oy)
                        for (int ox = 0; ox < ow; ++ox) {
                            const float go = g[((bi * c_out + co) * oh + oy) * ow + ox];
                            if (go == 0.0f) continue;
                            if (bs->requires_grad) bs->grad[co] += go;
                            for (int ci = 0; ci < c_in; ++ci)
                                for (int ky = 0; ky < kh; ++ky)
                                    for (int kx = 0; kx < kw; ++kx) {
                                        const size_t xi =
                                            ((static_cast<size_t>(bi) * c_in + ci) * h +
                                             oy * stride + ky) * w + ox * stride + kx;
                                        const size_t kidx =
                                            ((static_cast<size_t>(co) * c_in + ci) * kh + ky) * kw + kx;
                                        if (ker->requires_grad)
                                            ker->grad[kidx] += go * in->data[xi];
                                        if (in->requires_grad)
                                            in->grad[xi] += go * ker->data[kidx];
                                    }
                        }
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// Max pooling
// ---------------------------------------------------------------------------

inline TensorPtr max_pool2d(const TensorPtr& input, int window, int stride) {
    if (input->rank() != 4)
        throw ShapeError("max_pool2d: input " + shape_str(input->shape) + " must be rank 4");
    if (window < 1 || stride < 1) throw ShapeError("max_pool2d: window and stride must be >= 1");
    const int batch = input->dim(0), c = input->dim(1), h = input->dim(2), w = input->dim(3);
    if (window > h || window > w)
        throw ShapeError("max_pool2d: window " + std::to_string(window) + " larger than input " +
                         shape_str(input->shape));
    const int oh = (h - window) / stride + 1;
    const int ow = (w - window) / stride + 1;

    auto out = Tensor::zeros({batch, c, oh, ow});
    auto argmax = std::make_shared<std::vector<uint32_t>>(out->size());
    const float* x = input->data.data();
    for (int bi = 0; bi < batch; ++bi)
        for (int ci = 0; ci < c; ++ci)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    float best = -std::numeric_limits<float>::infinity();
                    uint32_t best_idx = 0;
                    for (int ky = 0; ky < window; ++ky)
                        for (int kx = 0; kx < window; ++kx) {
                            const size_t xi = ((static_cast<size_t>(bi) * c + ci) * h +
                                               oy * stride + ky) * w + ox * stride + kx;
                            if (x[xi] > best) {
                                best = x[xi];
                                best_idx = static_cast<uint32_t>(xi);
                            }
                        }
                    const size_t oi = ((static_cast<size_t>(bi) * c + ci) * oh + oy) * ow + ox;
                    out->data[oi] = best;
                    (*argmax)[oi] = best_idx;
                }

    if (detail::track({input})) {
        out->requires_grad = true;
        out->parents = {input};
        Tensor* self = out.get();
        out->backward_fn = [self, argmax]() {
            const auto& in = self->parents[0];
            if (!in->requires_grad) return;
            in->ensure_grad();
            for (size_t i = 0; i < self->grad.size(); ++i)
                in->grad[(*argmax)[i]] += self->grad[i];
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// Activations and shape plumbing
// ---------------------------------------------------------------------------

inline TensorPtr relu(const TensorPtr& input) {
    auto out = Tensor::zeros(input->shape);
    for (size_t i = 0; i < input->size(); ++i)
        out->data[i] = input->data[i] > 0.0f ? input->data[i] : 0.0f;
    if (detail::track({input})) {
        out->requires_grad = true;
        out->parents = {input};
        Tensor* self = out.get();
        out->backward_fn = [self]() {
            const auto& in = self->parents[0];
            if (!in->requires_grad) return;
            in->ensure_grad();
            for (size_t i = 0; i < self->grad.size(); ++i)
                if (in->data[i] > 0.0f) in->grad[i] += self->grad[i];
        };
    }
    return out;
}

/// Collapse all trailing dimensions: [B, ...] -> [B, prod(...)]
inline TensorPtr flatten(const TensorPtr& input) {
    if (input->rank() < 2)
        throw ShapeError("flatten: input " + shape_str(input->shape) + " must be rank >= 2");
    const int batch = input->dim(0);
    const int rest = static_cast<int>(input->size()) / batch;
    auto out = Tensor::from({batch, rest}, input->data);
    if (detail::track({input})) {
        out->requires_grad = true;
        out->parents = {input};
        Tensor* self = out.get();
        out->backward_fn = [self]() {
            const auto& in = self->parents[0];
            if (!in->requires_grad) return;
            in->ensure_grad();
            for (size_t i = 0; i < self->grad.size(); ++i) in->grad[i] += self->grad[i];
        };
    }
    return out;
}

/// Column-wise concatenation of rank-2 tensors sharing a batch dimension.
inline TensorPtr concat_cols(const std::vector<TensorPtr>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const int batch = parts[0]->dim(0);
    int total = 0;
    for (const auto& p : parts) {
        if (p->rank() != 2 || p->dim(0) != batch)
            throw ShapeError("concat_cols: part " + shape_str(p->shape) +
                             " incompatible with batch " + std::to_string(batch));
        total += p->dim(1);
    }
    auto out = Tensor::zeros({batch, total});
    int col = 0;
    for (const auto& p : parts) {
        const int w = p->dim(1);
        for (int bi = 0; bi < batch; ++bi)
            std::copy_n(p->data.begin() + static_cast<size_t>(bi) * w, w,
                        out->data.begin() + static_cast<size_t>(bi) * total + col);
        col += w;
    }

    bool any = false;
    for (const auto& p : parts) any = any || p->requires_grad;
    if (GradMode::enabled() && any) {
        out->requires_grad = true;
        out->parents = parts;
        Tensor* self = out.get();
        out->backward_fn = [self, batch, total]() {
            int col = 0;
            for (const auto& p : self->parents) {
                const int w = p->dim(1);
                if (p->requires_grad) {
                    p->ensure_grad();
                    for (int bi = 0; bi < batch; ++bi)
                        for (int i = 0; i < w; ++i)
                            p->grad[static_cast<size_t>(bi) * w + i] +=
                                self->grad[static_cast<size_t>(bi) * total + col + i];
                }
                col += w;
            }
        };
    }
    return out;
}

inline TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape != b->shape)
        throw ShapeError("add: shape " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    auto out = Tensor::zeros(a->shape);
    for (size_t i = 0; i < a->size(); ++i) out->data[i] = a->data[i] + b->data[i];
    if (detail::track({a, b})) {
        out->requires_grad = true;
        out->parents = {a, b};
        Tensor* self = out.get();
        out->backward_fn = [self]() {
            for (const auto& p : self->parents) {
                if (!p->requires_grad) continue;
                p->ensure_grad();
                for (size_t i = 0; i < self->grad.size(); ++i) p->grad[i] += self->grad[i];
            }
        };
    }
    return out;
}

inline TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape != b->shape)
        throw ShapeError("mul: shape " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    auto out = Tensor::zeros(a->shape);
    for (size_t i = 0; i < a->size(); ++i) out->data[i] = a->data[i] * b->data[i];
    if (detail::track({a, b})) {
        out->requires_grad = true;
        out->parents = {a, b};
        Tensor* self = out.get();
        out->backward_fn = [self]() {
            const auto& a = self->parents[0];
            const auto& b = self->parents[1];
            if (a->requires_grad) {
                a->ensure_grad();
                for (size_t i = 0; i < self->grad.size(); ++i)
                    a->grad[i] += self->grad[i] * b->data[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (size_t i = 0; i < self->grad.size(); ++i)
                    b->grad[i] += self->grad[i] * a->data[i];
            }
        };
    }
    return out;
}

inline TensorPtr scale(const TensorPtr& a, float c) {
    auto out = Tensor::zeros(a->shape);
    for (size_t i = 0; i < a->size(); ++i) out->data[i] = a->data[i] * c;
    if (detail::track({a})) {
        out->requires_grad = true;
        out->parents = {a};
        Tensor* self = out.get();
        out->backward_fn = [self, c]() {
            const auto& p = self->parents[0];
            if (!p->requires_grad) return;
            p->ensure_grad();
            for (size_t i = 0; i < self->grad.size(); ++i) p->grad[i] += self->grad[i] * c;
        };
    }
    return out;
}

/// Double-accumulated sum of scalar nodes (per-factor losses combine through
/// this, so the total matches an independent summation bit for bit).
inline TensorPtr add_scalars(const std::vector<TensorPtr>& terms) {
    if (terms.empty()) throw ShapeError("add_scalars: no inputs");
    double acc = 0.0;
    for (const auto& t : terms) {
        if (t->size() != 1)
            throw ShapeError("add_scalars: term of shape " + shape_str(t->shape) +
                             " is not scalar");
        acc += t->data[0];
    }
    auto out = Tensor::scalar(static_cast<float>(acc));
    bool any = false;
    for (const auto& t : terms) any = any || t->requires_grad;
    if (GradMode::enabled() && any) {
        out->requires_grad = true;
        out->parents = terms;
        Tensor* self = out.get();
        out->backward_fn = [self]() {
            for (const auto& p : self->parents) {
                if (!p->requires_grad) continue;
                p->ensure_grad();
                p->grad[0] += self->grad[0];
            }
        };
    }
    return out;
}

/// Sum of all elements, as a scalar node.
inline TensorPtr sum(const TensorPtr& a) {
    double acc = 0.0;
    for (float v : a->data) acc += v;
    auto out = Tensor::scalar(static_cast<float>(acc));
    if (detail::track({a})) {
        out->requires_grad = true;
        out->parents = {a};
        Tensor* self = out.get();
        out->backward_fn = [self]() {
            const auto& p = self->parents[0];
            if (!p->requires_grad) return;
            p->ensure_grad();
            const float g = self->grad[0];
            for (size_t i = 0; i < p->grad.size(); ++i) p->grad[i] += g;
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// Softmax and cross-entropy
// ---------------------------------------------------------------------------

/// Row-wise softmax with max-subtraction; rows of the output sum to 1.
inline TensorPtr softmax(const TensorPtr& logits) {
    if (logits->rank() != 2)
        throw ShapeError("softmax: input " + shape_str(logits->shape) + " must be rank 2");
    const int batch = logits->dim(0);
    const int n = logits->dim(1);
    if (n < 1) throw ShapeError("softmax: empty rows in " + shape_str(logits->shape));
    auto out = Tensor::zeros(logits->shape);
    for (int bi = 0; bi < batch; ++bi) {
        const float* row = logits->data.data() + static_cast<size_t>(bi) * n;
        float m = row[0];
        for (int i = 1; i < n; ++i) m = std::max(m, row[i]);
        double denom = 0.0;
        for (int i = 0; i < n; ++i) denom += std::exp(static_cast<double>(row[i]) - m);
        for (int i = 0; i < n; ++i)
            out->data[static_cast<size_t>(bi) * n + i] =
                static_cast<float>(std::exp(static_cast<double>(row[i]) - m) / denom);
    }
    if (detail::track({logits})) {
        out->requires_grad = true;
        out->parents = {logits};
        Tensor* self = out.get();
        out->backward_fn = [self, batch, n]() {
            const auto& in = self->parents[0];
            if (!in->requires_grad) return;
            in->ensure_grad();
            for (int bi = 0; bi < batch; ++bi) {
                const float* p = self->data.data() + static_cast<size_t>(bi) * n;
                const float* g = self->grad.data() + static_cast<size_t>(bi) * n;
                double dot = 0.0;
                for (int i = 0; i < n; ++i) dot += static_cast<double>(g[i]) * p[i];
                for (int i = 0; i < n; ++i)
                    in->grad[static_cast<size_t>(bi) * n + i] +=
                        static_cast<float>(p[i] * (static_cast<double>(g[i]) - dot));
            }
        };
    }
    return out;
}

namespace detail {

inline int one_hot_index(const float* row, int n, int batch_row) {
    int hot = -1;
    for (int i = 0; i < n; ++i) {
        if (row[i] == 1.0f) {
            if (hot >= 0) hot = -2;
            if (hot == -1) hot = i;
        } else if (row[i] != 0.0f) {
            hot = -2;
        }
        if (hot == -2) break;
    }
    if (hot < 0)
        throw ShapeError("cross_entropy: target row " + std::to_string(batch_row) +
                         " is not one-hot");
    return hot;
}

}  // namespace detail

/// Mean negative log-likelihood of one-hot targets under distribution rows,
/// with per-row 0/1 masking. Masked-out rows contribute nothing (their target
/// rows are ignored entirely); the mean is taken over the full batch, so the
/// result equals -mean log p over the batch under the factorized model.
inline TensorPtr cross_entropy_masked(const TensorPtr& pred, const TensorPtr& target,
                                      const std::vector<float>& mask) {
    if (pred->rank() != 2 || target->rank() != 2 || pred->shape != target->shape)
        throw ShapeError("cross_entropy: pred " + shape_str(pred->shape) + " vs target " +
                         shape_str(target->shape));
    const int batch = pred->dim(0);
    const int n = pred->dim(1);
    if (mask.size() != static_cast<size_t>(batch))
        throw ShapeError("cross_entropy: mask length " + std::to_string(mask.size()) +
                         " vs batch " + std::to_string(batch));

    auto hot = std::make_shared<std::vector<int>>(batch, -1);
    double acc = 0.0;
    for (int bi = 0; bi < batch; ++bi) {
        if (mask[bi] == 0.0f) continue;
        const int t = detail::one_hot_index(target->data.data() + static_cast<size_t>(bi) * n, n, bi);
        (*hot)[bi] = t;
        const double p = std::max(static_cast<double>(pred->data[static_cast<size_t>(bi) * n + t]),
                                  kLogFloor);
        acc -= std::log(p);
    }
    auto out = Tensor::scalar(static_cast<float>(acc / batch));

    if (detail::track({pred})) {
        out->requires_grad = true;
        out->parents = {pred, target};
        Tensor* self = out.get();
        out->backward_fn = [self, hot, batch, n]() {
            const auto& p = self->parents[0];
            if (!p->requires_grad) return;
            p->ensure_grad();
            const double g = self->grad[0];
            for (int bi = 0; bi < batch; ++bi) {
                const int t = (*hot)[bi];
                if (t < 0) continue;
                const double pv = std::max(
                    static_cast<double>(p->data[static_cast<size_t>(bi) * n + t]), kLogFloor);
                p->grad[static_cast<size_t>(bi) * n + t] +=
                    static_cast<float>(-g / (pv * batch));
            }
        };
    }
    return out;
}

/// Unmasked form: every target row must be one-hot.
inline TensorPtr cross_entropy(const TensorPtr& pred, const TensorPtr& target) {
    const int batch = pred->rank() == 2 ? pred->dim(0) : 0;
    return cross_entropy_masked(pred, target, std::vector<float>(batch, 1.0f));
}

/// Row argmax (first maximum wins); not differentiated.
inline std::vector<int> argmax_rows(const Tensor& t) {
    std::vector<int> out(t.shape[0]);
    const int n = t.shape[1];
    for (int bi = 0; bi < t.shape[0]; ++bi) {
        const float* row = t.data.data() + static_cast<size_t>(bi) * n;
        int best = 0;
        for (int i = 1; i < n; ++i)
            if (row[i] > row[best]) best = i;
        out[bi] = best;
    }
    return out;
}

}  // namespace edd
