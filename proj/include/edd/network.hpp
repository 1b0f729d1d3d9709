#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "edd/dataset.hpp"
#include "edd/factorization.hpp"
#include "edd/optimizer.hpp"
#include "edd/ops.hpp"
#include "edd/params.hpp"
#include "edd/rng.hpp"
#include "edd/schema.hpp"
#include "edd/tensor.hpp"

namespace edd {

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ConvLayerSpec {
    int out_channels;
    int kernel = 3;
    int stride = 1;
    int pool = 1;  // 1 = no pooling; k pools k x k with stride k after the activation
};

struct ArchitectureConfig {
    std::vector<ConvLayerSpec> conv_layers;
    int image_size = 32;
    // Tap assignment per complexity tier, as 1-based conv layer indices.
    int tap_simple = 2;
    int tap_medium = 3;
    int tap_complex = 4;
    int trunk_width = 64;   // final dense stack feeding the class head
    int head_hidden = 0;    // 0: each head is a single dense layer to logits

    int epochs = 30;
    int batch_size = 32;
    float learning_rate = 0.015f;
    float momentum = 0.9f;
    float weight_decay = 0.0f;
    int teacher_forcing_epochs = 9;  // E_tf; the remaining epochs run free
    uint64_t seed = 1;

    int tap_for(Tier tier) const {
        switch (tier) {
            case Tier::kSimple: return tap_simple;
            case Tier::kMedium: return tap_medium;
            case Tier::kComplex: return tap_complex;
        }
        return tap_complex;
    }
};

/// Desk-scale default: four 3x3 conv layers with pooling after the first two,
/// color heads tapping conv 2, shape conv 3, symbols conv 4.
inline ArchitectureConfig desk_architecture() {
    ArchitectureConfig a;
    a.conv_layers = {{8, 3, 1, 2}, {16, 3, 1, 2}, {24, 3, 1, 1}, {32, 3, 1, 1}};
    return a;
}

/// Where one softmax head reads its features and who feeds it.
struct HeadSpec {
    int head_id;              // kClassHeadId or attribute group index
    std::string name;         // parameter name stem ("y", "z0", ...)
    int tap;                  // 1-based conv layer index; the class head reads the trunk
    int tap_width;
    int input_width;          // tap_width + sum of parent cardinalities
    int cardinality;
    std::vector<int> parents; // head ids in plan order
};

struct EddNetwork {
    FactorizationPlan plan;
    AttributeSchema schema;
    int n_classes = 0;
    ArchitectureConfig arch;
    ParameterStore params;
    std::vector<HeadSpec> heads;                          // topological order
    std::vector<int> conv_out_c, conv_out_h, conv_out_w;  // after activation + pooling

    const HeadSpec& head(int head_id) const {
        for (const auto& h : heads)
            if (h.head_id == head_id) return h;
        throw std::runtime_error("no head with id " + std::to_string(head_id));
    }

    int cardinality_of(int head_id) const {
        return head_id == kClassHeadId
                   ? n_classes
                   : static_cast<int>(schema.group(head_id).values.size());
    }
};

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

inline EddNetwork build_network(const FactorizationPlan& plan, const AttributeSchema& schema,
                                int n_classes, const ArchitectureConfig& arch) {
    auto issues = validate(plan);
    if (!issues.empty()) throw std::invalid_argument("build_network: " + issues.front());
    if (plan.has_attribute_heads && plan.group_count != static_cast<int>(schema.group_count()))
        throw std::invalid_argument("build_network: plan group count does not match schema");
    if (n_classes < 2) throw std::invalid_argument("build_network: need at least 2 classes");
    if (arch.conv_layers.empty()) throw std::invalid_argument("build_network: no conv layers");
    const int n_conv = static_cast<int>(arch.conv_layers.size());
    for (int tap : {arch.tap_simple, arch.tap_medium, arch.tap_complex})
        if (tap < 1 || tap > n_conv)
            throw std::invalid_argument("build_network: tap index " + std::to_string(tap) +
                                        " outside conv stack of depth " + std::to_string(n_conv));
    if (!(arch.tap_simple <= arch.tap_medium && arch.tap_medium <= arch.tap_complex))
        throw std::invalid_argument(
            "build_network: tier taps must be monotone in depth (simple <= medium <= complex)");

    EddNetwork net;
    net.plan = plan;
    net.schema = schema;
    net.n_classes = n_classes;
    net.arch = arch;

    Rng rng(arch.seed);

    // Backbone: trace dims through the conv stack and register parameters.
    int c = 3, h = arch.image_size, w = arch.image_size;
    for (int i = 0; i < n_conv; ++i) {
        const auto& spec = arch.conv_layers[i];
        h = (h - spec.kernel) / spec.stride + 1;
        w = (w - spec.kernel) / spec.stride + 1;
        if (spec.pool > 1) {
            h = (h - spec.pool) / spec.pool + 1;
            w = (w - spec.pool) / spec.pool + 1;
        }
        if (h < 1 || w < 1)
            throw std::invalid_argument("build_network: conv layer " + std::to_string(i + 1) +
                                        " shrinks the image below 1x1");
        auto kernel = Tensor::zeros({spec.out_channels, c, spec.kernel, spec.kernel});
        init_uniform_scaled(*kernel, c * spec.kernel * spec.kernel,
                            spec.out_channels * spec.kernel * spec.kernel, rng);
        net.params.add("conv" + std::to_string(i + 1) + ".w", Partition::feature(), kernel);
        net.params.add("conv" + std::to_string(i + 1) + ".b", Partition::feature(),
                       Tensor::zeros({spec.out_channels}));
        c = spec.out_channels;
        net.conv_out_c.push_back(c);
        net.conv_out_h.push_back(h);
        net.conv_out_w.push_back(w);
    }

    const int final_width = c * h * w;
    auto trunk_w = Tensor::zeros({final_width, arch.trunk_width});
    init_uniform_scaled(*trunk_w, final_width, arch.trunk_width, rng);
    net.params.add("trunk.w", Partition::feature(), trunk_w);
    net.params.add("trunk.b", Partition::feature(), Tensor::zeros({arch.trunk_width}));

    // Heads in topological order: tap features plus concatenated parent
    // distributions, through an optional hidden layer, to softmax logits.
    for (int head_id : topological_head_order(plan)) {
        HeadSpec spec;
        spec.head_id = head_id;
        spec.name = head_id == kClassHeadId ? "y" : "z" + std::to_string(head_id);
        spec.cardinality = net.cardinality_of(head_id);
        if (head_id == kClassHeadId) {
            spec.tap = n_conv;  // reads the trunk, which reads the last conv layer
            spec.tap_width = arch.trunk_width;
        } else {
            spec.tap = arch.tap_for(schema.group(head_id).tier);
            spec.tap_width = net.conv_out_c[spec.tap - 1] * net.conv_out_h[spec.tap - 1] *
                             net.conv_out_w[spec.tap - 1];
        }
        spec.parents = plan.parents_of(head_id);
        spec.input_width = spec.tap_width;
        for (int p : spec.parents) spec.input_width += net.cardinality_of(p);

        const Partition partition = head_id == kClassHeadId ? Partition::class_head()
                                                            : Partition::attribute_head(head_id);
        int logits_in = spec.input_width;
        if (arch.head_hidden > 0) {
            auto hw = Tensor::zeros({spec.input_width, arch.head_hidden});
            init_uniform_scaled(*hw, spec.input_width, arch.head_hidden, rng);
            net.params.add("head." + spec.name + ".h.w", partition, hw);
            net.params.add("head." + spec.name + ".h.b", partition,
                           Tensor::zeros({arch.head_hidden}));
            logits_in = arch.head_hidden;
        }
        auto lw = Tensor::zeros({logits_in, spec.cardinality});
        // Logit layers start at a tenth of the usual scale so untrained heads
        // emit near-uniform distributions (initial loss sits at chance level).
        init_uniform_scaled(*lw, logits_in, spec.cardinality, rng);
        for (auto& v : lw->data) v *= 0.1f;
        net.params.add("head." + spec.name + ".w", partition, lw);
        net.params.add("head." + spec.name + ".b", partition, Tensor::zeros({spec.cardinality}));
        net.heads.push_back(std::move(spec));
    }
    return net;
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

enum class ForwardMode { kFree, kTeacherForced };

namespace network_detail {

/// Ground-truth one-hot feed for a parent head; class labels of -1 (samples
/// without a class) feed a uniform row instead.
inline TensorPtr forced_feed(const EddNetwork& net, const Batch& batch, int parent) {
    const int b = batch.images->dim(0);
    if (parent == kClassHeadId) {
        if (batch.class_labels.size() != static_cast<size_t>(b))
            throw TrainingError("teacher-forced forward requires class labels for every sample");
        auto feed = Tensor::zeros({b, net.n_classes});
        for (int i = 0; i < b; ++i) {
            if (batch.class_labels[i] >= 0)
                feed->data[static_cast<size_t>(i) * net.n_classes + batch.class_labels[i]] = 1.0f;
            else
                for (int j = 0; j < net.n_classes; ++j)
                    feed->data[static_cast<size_t>(i) * net.n_classes + j] =
                        1.0f / static_cast<float>(net.n_classes);
        }
        return feed;
    }
    if (batch.attr_labels.size() <= static_cast<size_t>(parent) ||
        batch.attr_labels[parent].size() != static_cast<size_t>(b))
        throw TrainingError("teacher-forced forward requires attribute labels for every sample");
    return one_hot_rows(batch.attr_labels[parent], net.cardinality_of(parent));
}

}  // namespace network_detail

/// Evaluates every head in topological order. In teacher-forced mode parent
/// slots receive ground-truth one-hots; in free mode they receive the parent
/// head's softmax output, so gradients flow through the dependency edges.
inline HeadOutputs forward(const EddNetwork& net, const Batch& batch, ForwardMode mode) {
    if (batch.images->rank() != 4 || batch.images->dim(2) != net.arch.image_size ||
        batch.images->dim(3) != net.arch.image_size || batch.images->dim(1) != 3)
        throw ShapeError("forward: batch images " + shape_str(batch.images->shape) +
                         " do not match configured input [B, 3, " +
                         std::to_string(net.arch.image_size) + ", " +
                         std::to_string(net.arch.image_size) + "]");

    // Conv stack, caching each layer's (activated, pooled) output.
    std::vector<TensorPtr> conv_outs;
    TensorPtr x = batch.images;
    for (size_t i = 0; i < net.arch.conv_layers.size(); ++i) {
        const auto& spec = net.arch.conv_layers[i];
        x = relu(conv2d(x, net.params.get("conv" + std::to_string(i + 1) + ".w"),
                        net.params.get("conv" + std::to_string(i + 1) + ".b"), spec.stride));
        if (spec.pool > 1) x = max_pool2d(x, spec.pool, spec.pool);
        conv_outs.push_back(x);
    }
    TensorPtr trunk =
        relu(dense(flatten(conv_outs.back()), net.params.get("trunk.w"), net.params.get("trunk.b")));

    std::map<int, TensorPtr> flattened_taps;
    auto tap_features = [&](const HeadSpec& spec) -> TensorPtr {
        if (spec.head_id == kClassHeadId) return trunk;
        auto it = flattened_taps.find(spec.tap);
        if (it == flattened_taps.end())
            it = flattened_taps.emplace(spec.tap, flatten(conv_outs[spec.tap - 1])).first;
        return it->second;
    };

    HeadOutputs outputs;
    outputs.attr_probs.resize(net.plan.has_attribute_heads ? net.plan.group_count : 0);
    std::map<int, TensorPtr> probs_by_head;
    for (const auto& spec : net.heads) {
        std::vector<TensorPtr> feeds = {tap_features(spec)};
        for (int p : spec.parents)
            feeds.push_back(mode == ForwardMode::kTeacherForced
                                ? network_detail::forced_feed(net, batch, p)
                                : probs_by_head.at(p));
        TensorPtr input = feeds.size() > 1 ? concat_cols(feeds) : feeds[0];
        if (net.arch.head_hidden > 0)
            input = relu(dense(input, net.params.get("head." + spec.name + ".h.w"),
                               net.params.get("head." + spec.name + ".h.b")));
        TensorPtr probs = softmax(dense(input, net.params.get("head." + spec.name + ".w"),
                                        net.params.get("head." + spec.name + ".b")));
        probs_by_head[spec.head_id] = probs;
        if (spec.head_id == kClassHeadId)
            outputs.class_probs = probs;
        else
            outputs.attr_probs[spec.head_id] = probs;
    }
    return outputs;
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

/// Greedy per-head argmax over the free-mode outputs.
struct Prediction {
    int class_index = -1;
    std::vector<int> attributes;  // one value index per group; empty for M-REF
    HeadOutputs outputs;
};

struct BatchPredictions {
    std::vector<int> class_pred;
    std::vector<std::vector<int>> attr_pred;  // [group][B]
    HeadOutputs outputs;
};

inline BatchPredictions predict_batch(const EddNetwork& net, const Batch& batch) {
    BatchPredictions out;
    out.outputs = forward(net, batch, ForwardMode::kFree);
    out.class_pred = argmax_rows(*out.outputs.class_probs);
    if (net.plan.has_attribute_heads)
        for (const auto& probs : out.outputs.attr_probs)
            out.attr_pred.push_back(argmax_rows(*probs));
    return out;
}

/// Single normalized image [3, H, W] -> greedy prediction, free mode.
inline Prediction predict(const EddNetwork& net, const TensorPtr& image) {
    if (image->rank() != 3)
        throw ShapeError("predict: image " + shape_str(image->shape) + " must be [3, H, W]");
    NoGradGuard no_grad;
    Batch batch;
    batch.images = Tensor::from({1, image->dim(0), image->dim(1), image->dim(2)}, image->data);
    batch.class_labels = {-1};
    batch.class_mask = {0.0f};
    batch.attr_labels.assign(net.schema.group_count(), {0});
    auto preds = predict_batch(net, batch);
    Prediction p;
    p.class_index = preds.class_pred[0];
    for (const auto& a : preds.attr_pred) p.attributes.push_back(a[0]);
    p.outputs = std::move(preds.outputs);
    return p;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct EpochRecord {
    int epoch = 0;                 // 1-based
    ForwardMode mode = ForwardMode::kFree;
    double train_loss = 0.0;       // mean joint NLL over the epoch's batches
    double test_class_acc = 0.0;   // fraction in [0,1]
    double test_attr_acc = 0.0;    // mean per-group fraction; 0 for M-REF
};

struct TrainHistory {
    double pre_training_loss = 0.0;  // joint NLL over the train split before any update
    std::vector<EpochRecord> epochs;
};

namespace network_detail {

inline HeadTargets batch_targets(const EddNetwork& net, const Batch& batch) {
    HeadTargets targets;
    targets.class_onehot = one_hot_rows(batch.class_labels, net.n_classes);
    if (net.plan.has_attribute_heads)
        for (int k = 0; k < net.plan.group_count; ++k)
            targets.attr_onehot.push_back(
                one_hot_rows(batch.attr_labels[k], net.cardinality_of(k)));
    return targets;
}

inline double dataset_loss(const EddNetwork& net, const DatasetSplit& split,
                           const std::vector<Sample>& pool, ForwardMode mode, int batch_size) {
    NoGradGuard no_grad;
    double total = 0.0;
    int count = 0;
    for (size_t start = 0; start < pool.size(); start += batch_size) {
        std::vector<int> idx;
        for (size_t i = start; i < std::min(pool.size(), start + batch_size); ++i)
            idx.push_back(static_cast<int>(i));
        Batch batch = make_batch(split, pool, idx);
        auto outputs = forward(net, batch, mode);
        auto loss = joint_nll(outputs, batch_targets(net, batch), net.plan, batch.class_mask);
        total += static_cast<double>(loss->item()) * static_cast<double>(idx.size());
        count += static_cast<int>(idx.size());
    }
    return total / count;
}

struct TestAccuracy {
    double class_acc = 0.0;
    double attr_acc = 0.0;
};

inline TestAccuracy test_accuracy(const EddNetwork& net, const DatasetSplit& split,
                                  int batch_size) {
    NoGradGuard no_grad;
    int class_hits = 0, class_total = 0;
    std::vector<int> attr_hits(net.schema.group_count(), 0);
    int attr_total = 0;
    for (size_t start = 0; start < split.test.size(); start += batch_size) {
        std::vector<int> idx;
        for (size_t i = start; i < std::min(split.test.size(), start + batch_size); ++i)
            idx.push_back(static_cast<int>(i));
        Batch batch = make_batch(split, split.test, idx);
        auto preds = predict_batch(net, batch);
        for (size_t i = 0; i < idx.size(); ++i) {
            if (batch.class_labels[i] >= 0) {
                ++class_total;
                if (preds.class_pred[i] == batch.class_labels[i]) ++class_hits;
            }
            if (net.plan.has_attribute_heads) {
                ++attr_total;
                for (size_t k = 0; k < net.schema.group_count(); ++k)
                    if (preds.attr_pred[k][i] == batch.attr_labels[k][i]) ++attr_hits[k];
            }
        }
    }
    TestAccuracy acc;
    acc.class_acc = class_total > 0 ? static_cast<double>(class_hits) / class_total : 0.0;
    if (net.plan.has_attribute_heads && attr_total > 0) {
        double mean = 0.0;
        for (int hits : attr_hits) mean += static_cast<double>(hits) / attr_total;
        acc.attr_acc = mean / static_cast<double>(net.schema.group_count());
    }
    return acc;
}

inline constexpr uint64_t kStreamBatchOrder = 101;

}  // namespace network_detail

/// Trains in place. Epochs 1..E_tf run teacher-forced, the rest free.
/// Deterministic given the architecture seed; throws TrainingError with the
/// model tag and epoch if the loss stops being finite.
inline TrainHistory train(EddNetwork& net, const DatasetSplit& split) {
    using namespace network_detail;
    const auto& arch = net.arch;
    if (arch.teacher_forcing_epochs > arch.epochs)
        throw std::invalid_argument("train: teacher-forced epoch count exceeds total epochs");
    if (arch.batch_size < 1 || arch.epochs < 0)
        throw std::invalid_argument("train: bad epoch or batch configuration");

    SgdOptimizer optimizer(
        {arch.learning_rate, arch.weight_decay, arch.momentum});

    TrainHistory history;
    const ForwardMode first_mode = (arch.teacher_forcing_epochs >= 1 && net.plan.teacher_forcing)
                                       ? ForwardMode::kTeacherForced
                                       : ForwardMode::kFree;
    history.pre_training_loss =
        dataset_loss(net, split, split.train, first_mode, arch.batch_size);

    std::vector<int> indices(split.train.size());
    for (size_t i = 0; i < indices.size(); ++i) indices[i] = static_cast<int>(i);

    for (int epoch = 1; epoch <= arch.epochs; ++epoch) {
        const ForwardMode mode = (epoch <= arch.teacher_forcing_epochs && net.plan.teacher_forcing)
                                     ? ForwardMode::kTeacherForced
                                     : ForwardMode::kFree;
        Rng shuffle_rng(derive_seed(arch.seed, kStreamBatchOrder, epoch));
        shuffle_rng.shuffle(indices);

        double loss_sum = 0.0;
        int seen = 0;
        for (size_t start = 0; start < indices.size(); start += arch.batch_size) {
            std::vector<int> idx(indices.begin() + start,
                                 indices.begin() +
                                     std::min(indices.size(), start + arch.batch_size));
            Batch batch = make_batch(split, split.train, idx);
            auto outputs = forward(net, batch, mode);
            auto loss = joint_nll(outputs, batch_targets(net, batch), net.plan, batch.class_mask);
            const double loss_value = loss->item();
            if (!std::isfinite(loss_value))
                throw TrainingError("training diverged: model " + net.plan.label +
                                    ", epoch " + std::to_string(epoch) +
                                    ", non-finite loss");
            backward(loss);
            optimizer.step(net.params);
            loss_sum += loss_value * static_cast<double>(idx.size());
            seen += static_cast<int>(idx.size());
        }

        EpochRecord record;
        record.epoch = epoch;
        record.mode = mode;
        record.train_loss = loss_sum / seen;
        auto acc = test_accuracy(net, split, arch.batch_size);
        record.test_class_acc = acc.class_acc;
        record.test_attr_acc = acc.attr_acc;
        history.epochs.push_back(record);
    }
    return history;
}

}  // namespace edd
