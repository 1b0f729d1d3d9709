#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "edd/io.hpp"
#include "edd/render.hpp"
#include "edd/rng.hpp"
#include "edd/schema.hpp"
#include "edd/tensor.hpp"

namespace edd {

/// One labeled image. Images are stored raw in [0,1]; normalization happens
/// at batch-assembly time with the split's train statistics. Free-attribute
/// synthetic samples carry no class (class_index -1) and contribute only to
/// the attribute losses.
struct Sample {
    TensorPtr image;              // [3, H, W]
    int class_index = -1;         // -1: no class
    std::vector<int> attributes;  // value index per schema group

    bool has_class() const { return class_index >= 0; }
};

struct DatasetConfig {
    int n_train = 2000;
    int n_test = 500;
    double free_attr_fraction = 0.39;
    int image_size = 32;
    uint64_t seed = 1;
};

struct DatasetSplit {
    AttributeSchema schema;
    std::vector<SignClass> classes;
    std::vector<Sample> train;
    std::vector<Sample> test;
    std::array<double, 3> mean{};
    std::array<double, 3> stddev{};
    double free_attr_fraction = 0.0;
    int image_size = 32;
    uint64_t seed = 0;

    /// (x - mean) / stddev per channel, using train statistics.
    TensorPtr normalized_image(const Sample& s) const {
        auto out = Tensor::zeros(s.image->shape);
        const size_t plane = s.image->size() / 3;
        for (int c = 0; c < 3; ++c) {
            const double m = mean[c], sd = stddev[c];
            for (size_t p = 0; p < plane; ++p) {
                const size_t i = c * plane + p;
                out->data[i] = static_cast<float>((s.image->data[i] - m) / sd);
            }
        }
        return out;
    }
};

namespace dataset_detail {

// Stream ids for per-sample seed derivation.
inline constexpr uint64_t kStreamTrainRender = 1;
inline constexpr uint64_t kStreamTestRender = 2;
inline constexpr uint64_t kStreamFreeAttrs = 3;
inline constexpr uint64_t kStreamShuffle = 4;

inline void compute_stats(DatasetSplit& split) {
    double sum[3] = {0, 0, 0}, sq[3] = {0, 0, 0};
    size_t count = 0;
    for (const auto& s : split.train) {
        const size_t plane = s.image->size() / 3;
        count += plane;
        for (int c = 0; c < 3; ++c)
            for (size_t p = 0; p < plane; ++p) {
                const double v = s.image->data[c * plane + p];
                sum[c] += v;
                sq[c] += v * v;
            }
    }
    for (int c = 0; c < 3; ++c) {
        const double m = sum[c] / static_cast<double>(count);
        const double var = sq[c] / static_cast<double>(count) - m * m;
        split.mean[c] = m;
        split.stddev[c] = std::sqrt(std::max(var, 1e-12));
    }
}

}  // namespace dataset_detail

/// Builds a deterministic split: class-derived samples are assigned classes
/// round-robin so the class histogram is balanced; free-attribute samples draw
/// every group value independently and carry no class. Free-attribute samples
/// go to the train split only, so test metrics stay well defined.
inline DatasetSplit build_dataset(const AttributeSchema& schema,
                                  const std::vector<SignClass>& classes,
                                  const DatasetConfig& config) {
    schema.validate();
    validate_classes(schema, classes);
    if (classes.empty()) throw SchemaError("build_dataset: no classes");
    if (config.n_train <= 0 || config.n_test <= 0)
        throw std::invalid_argument("build_dataset: n_train and n_test must be positive");
    if (config.free_attr_fraction < 0.0 || config.free_attr_fraction >= 1.0)
        throw std::invalid_argument("build_dataset: free_attr_fraction must be in [0, 1)");

    using namespace dataset_detail;
    DatasetSplit split;
    split.schema = schema;
    split.classes = classes;
    split.free_attr_fraction = config.free_attr_fraction;
    split.image_size = config.image_size;
    split.seed = config.seed;

    const int n_free = static_cast<int>(std::lround(config.n_train * config.free_attr_fraction));
    const int n_class_derived = config.n_train - n_free;
    const int n_classes = static_cast<int>(classes.size());

    split.train.reserve(config.n_train);
    for (int i = 0; i < n_class_derived; ++i) {
        Sample s;
        s.class_index = i % n_classes;
        s.attributes = classes[s.class_index].attributes;
        s.image = render_sign(schema, s.attributes,
                              derive_seed(config.seed, kStreamTrainRender, i), config.image_size);
        split.train.push_back(std::move(s));
    }
    for (int i = 0; i < n_free; ++i) {
        Sample s;
        s.class_index = -1;
        Rng attr_rng(derive_seed(config.seed, kStreamFreeAttrs, i));
        s.attributes.resize(schema.group_count());
        for (size_t k = 0; k < schema.group_count(); ++k)
            s.attributes[k] = attr_rng.uniform_int(static_cast<int>(schema.groups[k].values.size()));
        s.image = render_sign(schema, s.attributes,
                              derive_seed(config.seed, kStreamTrainRender,
                                          static_cast<uint64_t>(n_class_derived) + i),
                              config.image_size);
        split.train.push_back(std::move(s));
    }
    // Mix class-derived and free samples so early batches see both.
    Rng shuffle_rng(derive_seed(config.seed, kStreamShuffle));
    shuffle_rng.shuffle(split.train);

    for (int i = 0; i < config.n_test; ++i) {
        Sample s;
        s.class_index = i % n_classes;
        s.attributes = classes[s.class_index].attributes;
        s.image = render_sign(schema, s.attributes,
                              derive_seed(config.seed, kStreamTestRender, i), config.image_size);
        split.test.push_back(std::move(s));
    }

    compute_stats(split);
    return split;
}

// ---------------------------------------------------------------------------
// Dataset file ("EDDD"): magic, u32 version, u32 manifest length, manifest
// JSON text, then a flat f32 little-endian image block (train samples first,
// then test, each 3*H*W values) and a u16 label block (per sample: class
// index with 0xFFFF for "no class", then one value index per group).
// ---------------------------------------------------------------------------

inline constexpr uint32_t kDatasetFormatVersion = 1;
inline constexpr uint16_t kNoClassLabel = 0xFFFF;

inline void save_dataset(const DatasetSplit& split, const std::string& path) {
    nlohmann::json manifest;
    manifest["format_version"] = kDatasetFormatVersion;
    manifest["image_size"] = split.image_size;
    manifest["n_train"] = split.train.size();
    manifest["n_test"] = split.test.size();
    manifest["free_attr_fraction"] = split.free_attr_fraction;
    manifest["seed"] = split.seed;
    manifest["stats"] = {{"mean", split.mean}, {"stddev", split.stddev}};
    nlohmann::json schema_json = nlohmann::json::array();
    for (const auto& g : split.schema.groups)
        schema_json.push_back(
            {{"name", g.name}, {"tier", tier_str(g.tier)}, {"values", g.values}});
    manifest["schema"] = schema_json;
    nlohmann::json classes_json = nlohmann::json::array();
    for (const auto& c : split.classes)
        classes_json.push_back({{"name", c.name}, {"attributes", c.attributes}});
    manifest["classes"] = classes_json;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write("EDDD", 4);
    write_u32(out, kDatasetFormatVersion);
    write_string(out, manifest.dump());

    for (const auto* samples : {&split.train, &split.test})
        for (const auto& s : *samples) write_f32_block(out, s.image->data);
    for (const auto* samples : {&split.train, &split.test})
        for (const auto& s : *samples) {
            write_u16(out, s.has_class() ? static_cast<uint16_t>(s.class_index) : kNoClassLabel);
            for (int a : s.attributes) write_u16(out, static_cast<uint16_t>(a));
        }
    if (!out) throw IoError("write failed for '" + path + "'");
}

inline DatasetSplit load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    char magic[4];
    if (!in.read(magic, 4) || std::string(magic, 4) != "EDDD")
        throw FileFormatError("'" + path + "' is not a dataset file (bad magic)");
    const uint32_t version = read_u32(in, "version");
    if (version != kDatasetFormatVersion)
        throw FileFormatError("unsupported dataset format version " + std::to_string(version));

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(read_string(in, "manifest"));
    } catch (const nlohmann::json::exception& e) {
        throw FileFormatError(std::string("bad dataset manifest: ") + e.what());
    }

    DatasetSplit split;
    split.image_size = manifest.at("image_size").get<int>();
    split.free_attr_fraction = manifest.at("free_attr_fraction").get<double>();
    split.seed = manifest.at("seed").get<uint64_t>();
    const auto& stats = manifest.at("stats");
    for (int c = 0; c < 3; ++c) {
        split.mean[c] = stats.at("mean").at(c).get<double>();
        split.stddev[c] = stats.at("stddev").at(c).get<double>();
    }
    for (const auto& g : manifest.at("schema")) {
        AttributeGroup group;
        group.name = g.at("name").get<std::string>();
        group.tier = tier_from_str(g.at("tier").get<std::string>());
        group.values = g.at("values").get<std::vector<std::string>>();
        split.schema.groups.push_back(std::move(group));
    }
    split.schema.validate();
    for (const auto& c : manifest.at("classes")) {
        SignClass sc;
        sc.name = c.at("name").get<std::string>();
        sc.attributes = c.at("attributes").get<std::vector<int>>();
        split.classes.push_back(std::move(sc));
    }
    validate_classes(split.schema, split.classes);

    const size_t n_train = manifest.at("n_train").get<size_t>();
    const size_t n_test = manifest.at("n_test").get<size_t>();
    const size_t pixels = 3 * static_cast<size_t>(split.image_size) * split.image_size;
    const size_t e = split.schema.group_count();

    auto read_images = [&](std::vector<Sample>& samples, size_t n) {
        samples.resize(n);
        for (size_t i = 0; i < n; ++i) {
            std::vector<float> data;
            read_f32_block(in, data, pixels, "image data");
            samples[i].image =
                Tensor::from({3, split.image_size, split.image_size}, std::move(data));
        }
    };
    read_images(split.train, n_train);
    read_images(split.test, n_test);
    auto read_labels = [&](std::vector<Sample>& samples) {
        for (auto& s : samples) {
            const uint16_t cls = read_u16(in, "class label");
            s.class_index = cls == kNoClassLabel ? -1 : static_cast<int>(cls);
            s.attributes.resize(e);
            for (size_t k = 0; k < e; ++k)
                s.attributes[k] = static_cast<int>(read_u16(in, "attribute label"));
        }
    };
    read_labels(split.train);
    read_labels(split.test);
    return split;
}

// ---------------------------------------------------------------------------
// Batch assembly
// ---------------------------------------------------------------------------

/// Normalized images plus label indices for a set of samples. class_mask is 1
/// for samples with a valid class, 0 for free-attribute synthetics.
struct Batch {
    TensorPtr images;                          // [B, 3, H, W], normalized
    std::vector<int> class_labels;             // -1 for no class
    std::vector<std::vector<int>> attr_labels; // [group][B]
    std::vector<float> class_mask;
};

inline Batch make_batch(const DatasetSplit& split, const std::vector<Sample>& pool,
                        const std::vector<int>& indices) {
    Batch batch;
    const int b = static_cast<int>(indices.size());
    const int hw = split.image_size;
    const size_t pixels = 3 * static_cast<size_t>(hw) * hw;
    batch.images = Tensor::zeros({b, 3, hw, hw});
    batch.class_labels.resize(b);
    batch.class_mask.resize(b);
    batch.attr_labels.assign(split.schema.group_count(), std::vector<int>(b));
    for (int i = 0; i < b; ++i) {
        const Sample& s = pool[indices[i]];
        auto norm = split.normalized_image(s);
        std::copy(norm->data.begin(), norm->data.end(),
                  batch.images->data.begin() + static_cast<size_t>(i) * pixels);
        batch.class_labels[i] = s.class_index;
        batch.class_mask[i] = s.has_class() ? 1.0f : 0.0f;
        for (size_t k = 0; k < split.schema.group_count(); ++k)
            batch.attr_labels[k][i] = s.attributes[k];
    }
    return batch;
}

/// One-hot rows; indices of -1 leave a zero row (paired with a 0 mask entry).
inline TensorPtr one_hot_rows(const std::vector<int>& indices, int n) {
    auto out = Tensor::zeros({static_cast<int>(indices.size()), n});
    for (size_t i = 0; i < indices.size(); ++i)
        if (indices[i] >= 0) out->data[i * n + indices[i]] = 1.0f;
    return out;
}

}  // namespace edd
