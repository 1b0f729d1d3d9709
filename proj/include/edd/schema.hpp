#pragma once

#include <algorithm>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace edd {

class SchemaError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Tier { kSimple, kMedium, kComplex };

inline std::string tier_str(Tier t) {
    switch (t) {
        case Tier::kSimple: return "simple";
        case Tier::kMedium: return "medium";
        case Tier::kComplex: return "complex";
    }
    return "?";
}

inline Tier tier_from_str(const std::string& s) {
    if (s == "simple") return Tier::kSimple;
    if (s == "medium") return Tier::kMedium;
    if (s == "complex") return Tier::kComplex;
    throw SchemaError("unknown complexity tier '" + s + "'");
}

/// One categorical attribute group: a name, a closed value set and a
/// complexity tier that decides which network depth its head taps.
struct AttributeGroup {
    std::string name;
    std::vector<std::string> values;
    Tier tier = Tier::kSimple;

    int value_index(const std::string& v) const {
        for (size_t i = 0; i < values.size(); ++i)
            if (values[i] == v) return static_cast<int>(i);
        throw SchemaError("unknown value '" + v + "' in attribute group '" + name + "'");
    }
};

/// Ordered list of attribute groups. The order is the z-index order used by
/// the chained factorizations: simpler groups first, complex last, so a chain
/// conditioned on later indices conditions on the more complex attributes.
struct AttributeSchema {
    std::vector<AttributeGroup> groups;

    size_t group_count() const { return groups.size(); }

    int group_index(const std::string& name) const {
        for (size_t i = 0; i < groups.size(); ++i)
            if (groups[i].name == name) return static_cast<int>(i);
        throw SchemaError("unknown attribute group '" + name + "'");
    }

    const AttributeGroup& group(int k) const { return groups.at(static_cast<size_t>(k)); }

    void validate() const {
        std::vector<std::string> names;
        for (const auto& g : groups) {
            if (g.values.size() < 2)
                throw SchemaError("attribute group '" + g.name + "' needs at least 2 values");
            names.push_back(g.name);
            std::vector<std::string> vals = g.values;
            std::sort(vals.begin(), vals.end());
            if (std::adjacent_find(vals.begin(), vals.end()) != vals.end())
                throw SchemaError("duplicate value in attribute group '" + g.name + "'");
        }
        std::sort(names.begin(), names.end());
        if (std::adjacent_find(names.begin(), names.end()) != names.end())
            throw SchemaError("duplicate attribute group name");
    }
};

/// A sign class: display name plus the defining attribute assignment
/// (one value index per group, in schema group order).
struct SignClass {
    std::string name;
    std::vector<int> attributes;
};

inline void validate_classes(const AttributeSchema& schema, const std::vector<SignClass>& classes) {
    for (const auto& c : classes) {
        if (c.attributes.size() != schema.group_count())
            throw SchemaError("class '" + c.name + "' must assign every attribute group");
        for (size_t k = 0; k < c.attributes.size(); ++k)
            if (c.attributes[k] < 0 ||
                c.attributes[k] >= static_cast<int>(schema.groups[k].values.size()))
                throw SchemaError("class '" + c.name + "' has out-of-range value for group '" +
                                  schema.groups[k].name + "'");
    }
    for (size_t a = 0; a < classes.size(); ++a)
        for (size_t b = a + 1; b < classes.size(); ++b)
            if (classes[a].attributes == classes[b].attributes)
                throw SchemaError("classes '" + classes[a].name + "' and '" + classes[b].name +
                                  "' share the same attribute assignment");
}

/// Default taxonomy: two color groups (simple), shape (medium), symbol (complex).
inline AttributeSchema default_schema() {
    AttributeSchema s;
    s.groups = {
        {"main_color", {"white", "red", "blue", "yellow"}, Tier::kSimple},
        {"border_color", {"red", "blue", "black", "none"}, Tier::kSimple},
        {"shape", {"circle", "triangle", "square", "octagon"}, Tier::kMedium},
        {"symbol", {"none", "bar", "dot", "cross", "chevron", "digit8", "digit0"}, Tier::kComplex},
    };
    s.validate();
    return s;
}

/// Eight desk-scale sign classes covering every value of every default group.
inline std::vector<SignClass> default_classes(const AttributeSchema& schema) {
    auto mk = [&](const std::string& name, const std::string& main, const std::string& border,
                  const std::string& shape, const std::string& symbol) {
        SignClass c;
        c.name = name;
        c.attributes = {schema.group(0).value_index(main), schema.group(1).value_index(border),
                        schema.group(2).value_index(shape), schema.group(3).value_index(symbol)};
        return c;
    };
    std::vector<SignClass> classes = {
        mk("stop", "red", "none", "octagon", "bar"),
        mk("speed-80", "white", "red", "circle", "digit8"),
        mk("speed-end", "white", "black", "circle", "digit0"),
        mk("priority-road", "yellow", "none", "square", "none"),
        mk("give-way", "white", "red", "triangle", "none"),
        mk("roadworks", "white", "red", "triangle", "cross"),
        mk("keep-right", "blue", "none", "circle", "chevron"),
        mk("parking", "blue", "blue", "square", "dot"),
    };
    validate_classes(schema, classes);
    return classes;
}

}  // namespace edd
