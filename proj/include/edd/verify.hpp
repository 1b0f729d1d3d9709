#pragma once

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "edd/io.hpp"
#include "edd/schema.hpp"

namespace edd {

class KbError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One concrete attribute value, as (group index, value index) in a schema.
struct ValueRef {
    int group = 0;
    int value = 0;
    bool operator==(const ValueRef& o) const { return group == o.group && value == o.value; }
    bool operator<(const ValueRef& o) const {
        return group != o.group ? group < o.group : value < o.value;
    }
};

/// Per-class verification conditions: every necessary value must be present
/// whenever the class is predicted, and at least one sufficient set alone
/// supports deducing the class.
struct ClassConditions {
    std::vector<ValueRef> necessary;
    std::vector<std::vector<ValueRef>> sufficient;
};

struct ConditionKB {
    std::vector<ClassConditions> per_class;  // indexed by class id

    void validate(const AttributeSchema& schema, size_t n_classes) const {
        if (per_class.size() != n_classes)
            throw KbError("knowledge base covers " + std::to_string(per_class.size()) +
                          " classes, expected " + std::to_string(n_classes));
        auto check_ref = [&](const ValueRef& r) {
            if (r.group < 0 || r.group >= static_cast<int>(schema.group_count()))
                throw KbError("condition references unknown attribute group index " +
                              std::to_string(r.group));
            if (r.value < 0 ||
                r.value >= static_cast<int>(schema.group(r.group).values.size()))
                throw KbError("condition references unknown value in group '" +
                              schema.group(r.group).name + "'");
        };
        for (const auto& c : per_class) {
            if (c.sufficient.empty())
                throw KbError("every class needs at least one sufficient condition");
            for (const auto& r : c.necessary) check_ref(r);
            for (const auto& s : c.sufficient) {
                if (s.empty()) throw KbError("empty sufficient condition set");
                for (const auto& r : s) check_ref(r);
            }
        }
    }
};

/// One chosen value per attribute group, as consumed by verification.
struct HardAttributes {
    std::vector<int> values;  // value index per group

    bool contains(const ValueRef& r) const {
        return r.group >= 0 && r.group < static_cast<int>(values.size()) &&
               values[r.group] == r.value;
    }
};

struct CandidateSet {
    std::vector<int> classes;  // ascending class ids

    bool contains(int c) const {
        return std::find(classes.begin(), classes.end(), c) != classes.end();
    }
    size_t size() const { return classes.size(); }
    bool empty() const { return classes.empty(); }
};

/// A class is a candidate iff all of its necessary values are present and at
/// least one of its sufficient sets is fully present.
inline CandidateSet candidate_classes(const HardAttributes& attrs, const ConditionKB& kb,
                                      const AttributeSchema& schema) {
    if (attrs.values.size() != schema.group_count())
        throw KbError("attributes must choose one value per schema group");
    for (size_t k = 0; k < attrs.values.size(); ++k)
        if (attrs.values[k] < 0 ||
            attrs.values[k] >= static_cast<int>(schema.groups[k].values.size()))
            throw KbError("attribute value out of range for group '" + schema.groups[k].name +
                          "'");
    CandidateSet out;
    for (size_t c = 0; c < kb.per_class.size(); ++c) {
        const auto& cond = kb.per_class[c];
        bool necessary_ok = true;
        for (const auto& r : cond.necessary)
            if (!attrs.contains(r)) necessary_ok = false;
        if (!necessary_ok) continue;
        bool sufficient_ok = false;
        for (const auto& s : cond.sufficient) {
            bool all = true;
            for (const auto& r : s)
                if (!attrs.contains(r)) all = false;
            if (all) {
                sufficient_ok = true;
                break;
            }
        }
        if (sufficient_ok) out.classes.push_back(static_cast<int>(c));
    }
    return out;
}

/// Four-valued verification outcome for a predicted class against the
/// candidate set: True (only support), Both (support and contradiction),
/// False (only contradiction), None (no information).
enum class Belnap { kTrue, kBoth, kFalse, kNone };

inline std::string belnap_str(Belnap b) {
    switch (b) {
        case Belnap::kTrue: return "True";
        case Belnap::kBoth: return "Both";
        case Belnap::kFalse: return "False";
        case Belnap::kNone: return "None";
    }
    return "?";
}

inline Belnap belnap_category(int predicted, const CandidateSet& candidates) {
    if (candidates.empty()) return Belnap::kNone;
    const bool member = candidates.contains(predicted);
    if (member && candidates.size() == 1) return Belnap::kTrue;
    if (member) return Belnap::kBoth;
    return Belnap::kFalse;
}

/// Acceptance policy. The default accepts only the category True; the weaker
/// policy also accepts Both (the predicted class is supported, but so is at
/// least one other).
enum class RejectPolicy { kStrictTrue, kAcceptIfMember };

inline bool decide(int predicted, const CandidateSet& candidates,
                   RejectPolicy policy = RejectPolicy::kStrictTrue) {
    const Belnap cat = belnap_category(predicted, candidates);
    if (policy == RejectPolicy::kStrictTrue) return cat == Belnap::kTrue;
    return cat == Belnap::kTrue || cat == Belnap::kBoth;
}

struct VerificationResult {
    Belnap category = Belnap::kNone;
    bool accept = false;
    CandidateSet candidates;
    std::string justification;
};

namespace verify_detail {

inline std::string ref_str(const AttributeSchema& schema, const ValueRef& r) {
    return schema.group(r.group).name + "=" + schema.group(r.group).values[r.value];
}

inline std::string set_str(const AttributeSchema& schema, const std::vector<ValueRef>& refs) {
    std::string out = "{";
    for (size_t i = 0; i < refs.size(); ++i) {
        if (i) out += ", ";
        out += ref_str(schema, refs[i]);
    }
    return out + "}";
}

inline std::string class_list_str(const std::vector<SignClass>& classes,
                                  const CandidateSet& set) {
    std::string out;
    for (size_t i = 0; i < set.classes.size(); ++i) {
        if (i) out += ", ";
        out += classes[set.classes[i]].name;
    }
    return out.empty() ? "(none)" : out;
}

}  // namespace verify_detail

/// Full adjudication with a readable justification naming the category and
/// the conditions that fired or failed for the predicted class.
inline VerificationResult verify_prediction(int predicted, const HardAttributes& attrs,
                                            const ConditionKB& kb, const AttributeSchema& schema,
                                            const std::vector<SignClass>& classes,
                                            RejectPolicy policy = RejectPolicy::kStrictTrue) {
    using namespace verify_detail;
    kb.validate(schema, classes.size());
    if (predicted < 0 || predicted >= static_cast<int>(classes.size()))
        throw KbError("predicted class id out of range");

    VerificationResult result;
    result.candidates = candidate_classes(attrs, kb, schema);
    result.category = belnap_category(predicted, result.candidates);
    result.accept = decide(predicted, result.candidates, policy);

    std::ostringstream why;
    why << "category " << belnap_str(result.category) << ": ";
    const auto& cond = kb.per_class[predicted];
    std::vector<ValueRef> missing;
    for (const auto& r : cond.necessary)
        if (!attrs.contains(r)) missing.push_back(r);
    switch (result.category) {
        case Belnap::kTrue:
            why << "the predicted attributes uniquely support class '"
                << classes[predicted].name << "'";
            break;
        case Belnap::kBoth:
            why << "the attributes also support other classes: "
                << class_list_str(classes, result.candidates);
            break;
        case Belnap::kFalse:
            why << "the attributes support only other classes ("
                << class_list_str(classes, result.candidates) << ")";
            if (!missing.empty())
                why << "; missing necessary values for '" << classes[predicted].name
                    << "': " << set_str(schema, missing);
            break;
        case Belnap::kNone:
            why << "no class's conditions are met";
            if (!missing.empty())
                why << "; missing necessary values for '" << classes[predicted].name
                    << "': " << set_str(schema, missing);
            break;
    }
    why << " -> " << (result.accept ? "accept" : "reject");
    result.justification = why.str();
    return result;
}

// ---------------------------------------------------------------------------
// Default knowledge base
// ---------------------------------------------------------------------------

/// Necessary conditions are the class's defining values for the non-simple
/// (shape and symbol) groups. Sufficient conditions are the values the class
/// holds uniquely among all classes, each alone; classes with no unique value
/// fall back to their full defining assignment.
inline ConditionKB default_kb(const AttributeSchema& schema,
                              const std::vector<SignClass>& classes) {
    validate_classes(schema, classes);
    if (classes.size() < 2) throw KbError("default_kb: need at least two classes");
    ConditionKB kb;
    for (size_t c = 0; c < classes.size(); ++c) {
        ClassConditions cond;
        for (size_t k = 0; k < schema.group_count(); ++k)
            if (schema.groups[k].tier != Tier::kSimple)
                cond.necessary.push_back(
                    {static_cast<int>(k), classes[c].attributes[k]});
        for (size_t k = 0; k < schema.group_count(); ++k) {
            bool unique = true;
            for (size_t o = 0; o < classes.size(); ++o)
                if (o != c && classes[o].attributes[k] == classes[c].attributes[k])
                    unique = false;
            if (unique)
                cond.sufficient.push_back({{static_cast<int>(k), classes[c].attributes[k]}});
        }
        if (cond.sufficient.empty()) {
            std::vector<ValueRef> full;
            for (size_t k = 0; k < schema.group_count(); ++k)
                full.push_back({static_cast<int>(k), classes[c].attributes[k]});
            cond.sufficient.push_back(std::move(full));
        }
        kb.per_class.push_back(std::move(cond));
    }
    kb.validate(schema, classes.size());
    return kb;
}

// ---------------------------------------------------------------------------
// KB file: line-oriented text, one block per class.
//
//   eddkb 1
//   class stop
//   necessary shape=octagon symbol=bar
//   sufficient main_color=red
//   end
// ---------------------------------------------------------------------------

inline void save_kb(const ConditionKB& kb, const AttributeSchema& schema,
                    const std::vector<SignClass>& classes, const std::string& path) {
    kb.validate(schema, classes.size());
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "eddkb 1\n";
    for (size_t c = 0; c < kb.per_class.size(); ++c) {
        out << "class " << classes[c].name << "\n";
        const auto& cond = kb.per_class[c];
        if (!cond.necessary.empty()) {
            out << "necessary";
            for (const auto& r : cond.necessary) out << " " << verify_detail::ref_str(schema, r);
            out << "\n";
        }
        for (const auto& s : cond.sufficient) {
            out << "sufficient";
            for (const auto& r : s) out << " " << verify_detail::ref_str(schema, r);
            out << "\n";
        }
        out << "end\n";
    }
    if (!out) throw IoError("write failed for '" + path + "'");
}

inline ConditionKB load_kb(const std::string& path, const AttributeSchema& schema,
                           const std::vector<SignClass>& classes) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::string line;
    if (!std::getline(in, line) || line != "eddkb 1")
        throw FileFormatError("'" + path + "' is not a knowledge-base file (bad header)");

    auto class_id = [&](const std::string& name) {
        for (size_t i = 0; i < classes.size(); ++i)
            if (classes[i].name == name) return static_cast<int>(i);
        throw KbError("knowledge base names unknown class '" + name + "'");
    };
    auto parse_ref = [&](const std::string& token) {
        const auto eq = token.find('=');
        if (eq == std::string::npos)
            throw FileFormatError("bad condition token '" + token + "' (expected group=value)");
        const int g = schema.group_index(token.substr(0, eq));
        const int v = schema.group(g).value_index(token.substr(eq + 1));
        return ValueRef{g, v};
    };

    ConditionKB kb;
    kb.per_class.resize(classes.size());
    std::vector<bool> seen(classes.size(), false);
    int current = -1;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream tokens(line);
        std::string keyword;
        if (!(tokens >> keyword)) continue;
        if (keyword == "class") {
            std::string name;
            if (!(tokens >> name) || current != -1)
                throw FileFormatError("line " + std::to_string(line_no) + ": unexpected 'class'");
            current = class_id(name);
            if (seen[current]) throw KbError("duplicate block for class '" + name + "'");
            seen[current] = true;
        } else if (keyword == "necessary" || keyword == "sufficient") {
            if (current == -1)
                throw FileFormatError("line " + std::to_string(line_no) +
                                      ": condition outside a class block");
            std::vector<ValueRef> refs;
            std::string token;
            while (tokens >> token) refs.push_back(parse_ref(token));
            if (keyword == "necessary")
                kb.per_class[current].necessary = std::move(refs);
            else
                kb.per_class[current].sufficient.push_back(std::move(refs));
        } else if (keyword == "end") {
            if (current == -1)
                throw FileFormatError("line " + std::to_string(line_no) + ": stray 'end'");
            current = -1;
        } else {
            throw FileFormatError("line " + std::to_string(line_no) + ": unknown keyword '" +
                                  keyword + "'");
        }
    }
    if (current != -1) throw FileFormatError("unterminated class block at end of file");
    for (size_t c = 0; c < classes.size(); ++c)
        if (!seen[c]) throw KbError("knowledge base missing class '" + classes[c].name + "'");
    kb.validate(schema, classes.size());
    return kb;
}

}  // namespace edd
