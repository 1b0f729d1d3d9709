#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "edd/io.hpp"
#include "edd/rng.hpp"
#include "edd/tensor.hpp"

namespace edd {

/// Every trainable tensor belongs to exactly one partition: the shared feature
/// extractor, the class head, or one attribute head (identified by group index).
struct Partition {
    enum Kind : uint8_t { kFeature = 0, kClassHead = 1, kAttributeHead = 2 };
    Kind kind = kFeature;
    int attribute = -1;  // group index, only meaningful for kAttributeHead

    static Partition feature() { return {kFeature, -1}; }
    static Partition class_head() { return {kClassHead, -1}; }
    static Partition attribute_head(int k) { return {kAttributeHead, k}; }

    bool operator==(const Partition& o) const {
        return kind == o.kind && (kind != kAttributeHead || attribute == o.attribute);
    }

    /// Wire encoding used in the weight file: 0 feature, 1 class head,
    /// 2+k attribute head k.
    uint8_t tag_byte() const {
        if (kind == kFeature) return 0;
        if (kind == kClassHead) return 1;
        return static_cast<uint8_t>(2 + attribute);
    }

    static Partition from_tag_byte(uint8_t b) {
        if (b == 0) return feature();
        if (b == 1) return class_head();
        return attribute_head(static_cast<int>(b) - 2);
    }

    std::string str() const {
        if (kind == kFeature) return "feature";
        if (kind == kClassHead) return "class_head";
        return "attribute_head(" + std::to_string(attribute) + ")";
    }
};

/// Named parameter tensors in a stable (insertion) order. Order determines
/// both the optimizer update sequence and the weight-file layout, so identical
/// build sequences give bitwise-identical files.
class ParameterStore {
public:
    struct Entry {
        std::string name;
        Partition partition;
        TensorPtr tensor;
    };

    TensorPtr add(const std::string& name, Partition partition, TensorPtr tensor) {
        if (index_.count(name))
            throw std::runtime_error("parameter '" + name + "' already registered");
        tensor->requires_grad = true;
        index_[name] = entries_.size();
        entries_.push_back({name, partition, std::move(tensor)});
        return entries_.back().tensor;
    }

    const TensorPtr& get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::runtime_error("unknown parameter '" + name + "'");
        return entries_[it->second].tensor;
    }

    bool has(const std::string& name) const { return index_.count(name) > 0; }

    const std::vector<Entry>& entries() const { return entries_; }

    size_t count() const { return entries_.size(); }

    size_t scalar_count() const {
        size_t n = 0;
        for (const auto& e : entries_) n += e.tensor->size();
        return n;
    }

    void zero_grads() {
        for (auto& e : entries_) e.tensor->zero_grad();
    }

    std::vector<Entry> partition_entries(const Partition& p) const {
        std::vector<Entry> out;
        for (const auto& e : entries_)
            if (e.partition == p) out.push_back(e);
        return out;
    }

private:
    std::vector<Entry> entries_;
    std::map<std::string, size_t> index_;
};

/// Seeded uniform init in +-sqrt(6/(fan_in+fan_out)).
inline void init_uniform_scaled(Tensor& t, int fan_in, int fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& v : t.data) v = static_cast<float>(rng.uniform(-limit, limit));
}

// ---------------------------------------------------------------------------
// Weight file ("EDDW"): magic, u32 version, u32 parameter count, then one
// record per parameter: u32 name length + name bytes, partition tag byte,
// u32 rank, u32 dims, f32 data. All integers and floats little-endian.
// ---------------------------------------------------------------------------

inline constexpr uint32_t kWeightFormatVersion = 1;

inline void save_weights(const ParameterStore& store, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write("EDDW", 4);
    write_u32(out, kWeightFormatVersion);
    write_u32(out, static_cast<uint32_t>(store.count()));
    for (const auto& e : store.entries()) {
        write_string(out, e.name);
        write_u8(out, e.partition.tag_byte());
        write_u32(out, static_cast<uint32_t>(e.tensor->rank()));
        for (int d : e.tensor->shape) write_u32(out, static_cast<uint32_t>(d));
        write_f32_block(out, e.tensor->data);
    }
    if (!out) throw IoError("write failed for '" + path + "'");
}

inline ParameterStore load_weights(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    char magic[4];
    if (!in.read(magic, 4) || std::string(magic, 4) != "EDDW")
        throw FileFormatError("'" + path + "' is not a weight file (bad magic)");
    const uint32_t version = read_u32(in, "version");
    if (version != kWeightFormatVersion)
        throw FileFormatError("unsupported weight format version " + std::to_string(version));
    const uint32_t count = read_u32(in, "parameter count");
    ParameterStore store;
    for (uint32_t i = 0; i < count; ++i) {
        std::string name = read_string(in, "parameter name");
        Partition partition = Partition::from_tag_byte(read_u8(in, "partition tag"));
        const uint32_t rank = read_u32(in, "rank");
        Shape shape(rank);
        for (uint32_t d = 0; d < rank; ++d)
            shape[d] = static_cast<int>(read_u32(in, "dimension"));
        std::vector<float> data;
        read_f32_block(in, data, shape_numel(shape), "parameter data");
        store.add(name, partition, Tensor::from(std::move(shape), std::move(data)));
    }
    return store;
}

/// Copy values from a loaded store into a freshly built one; the name sets
/// must match exactly and shapes must agree.
inline void assign_weights(ParameterStore& dst, const ParameterStore& src) {
    if (dst.count() != src.count())
        throw FileFormatError("weight file has " + std::to_string(src.count()) +
                              " parameters, network has " + std::to_string(dst.count()));
    for (const auto& e : src.entries()) {
        const TensorPtr& target = dst.get(e.name);
        if (target->shape != e.tensor->shape)
            throw FileFormatError("parameter '" + e.name + "' shape " +
                                  shape_str(e.tensor->shape) + " does not match network shape " +
                                  shape_str(target->shape));
        target->data = e.tensor->data;
    }
}

}  // namespace edd
