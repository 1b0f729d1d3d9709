#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "edd/ops.hpp"
#include "edd/tensor.hpp"

namespace edd {

/// Head identifiers: kClassHeadId names the class variable, nonnegative
/// values name attribute groups by index.
inline constexpr int kClassHeadId = -1;

enum class ModelTag { kRef, kFi, kIacd, kDacd, kCdia, kCdda };

inline const std::vector<ModelTag>& all_model_tags() {
    static const std::vector<ModelTag> tags = {ModelTag::kRef,  ModelTag::kFi,
                                               ModelTag::kIacd, ModelTag::kDacd,
                                               ModelTag::kCdia, ModelTag::kCdda};
    return tags;
}

inline std::string model_tag_str(ModelTag t) {
    switch (t) {
        case ModelTag::kRef: return "M-REF";
        case ModelTag::kFi: return "M-FI";
        case ModelTag::kIacd: return "M-IACD";
        case ModelTag::kDacd: return "M-DACD";
        case ModelTag::kCdia: return "M-CDIA";
        case ModelTag::kCdda: return "M-CDDA";
    }
    return "?";
}

inline std::optional<ModelTag> model_tag_from_str(const std::string& s) {
    for (ModelTag t : all_model_tags())
        if (model_tag_str(t) == s) return t;
    return std::nullopt;
}

/// Whether the joint factorizes class-first, p(y|x) p(z|y,x), or
/// attributes-first, p(z|x) p(y|z,x).
enum class BaseEquation { kClassFirst, kAttributesFirst };

/// Machine form of one dependency-table row: which variables condition which.
/// Parent entries use head ids (kClassHeadId for y, group index for z_k).
struct FactorizationPlan {
    ModelTag tag = ModelTag::kRef;
    std::string label = "M-REF";                  // tag string, or a custom plan's name
    BaseEquation base = BaseEquation::kClassFirst;
    bool has_attribute_heads = false;
    int group_count = 0;
    std::vector<int> class_parents;               // z indices feeding the class head
    std::vector<std::vector<int>> attr_parents;   // per group: parent head ids
    bool teacher_forcing = false;

    std::vector<int> parents_of(int head) const {
        if (head == kClassHeadId) return class_parents;
        return attr_parents.at(static_cast<size_t>(head));
    }

    std::vector<int> head_ids() const {
        std::vector<int> ids = {kClassHeadId};
        if (has_attribute_heads)
            for (int k = 0; k < group_count; ++k) ids.push_back(k);
        return ids;
    }
};

/// Builds the canonical plan for a model tag over a schema with
/// `group_count` attribute groups (indexed simple -> complex):
///   M-REF   class only, no attribute heads
///   M-FI    p(y|x) p(z|x), no parents anywhere
///   M-IACD  class-first, pa(z_k) = {y}
///   M-DACD  class-first, pa(z_k) = {z_{k+1}, ..., z_e} plus y
///   M-CDIA  attributes-first, pa(z_k) = {}, class conditioned on all z
///   M-CDDA  attributes-first, pa(z_k) = {z_{k+1}, ..., z_e}, class on all z
inline FactorizationPlan plan_for(ModelTag tag, int group_count) {
    if (group_count < 1) throw std::invalid_argument("plan_for: need at least one group");
    FactorizationPlan plan;
    plan.tag = tag;
    plan.label = model_tag_str(tag);
    plan.group_count = group_count;
    auto chain_parents = [&](int k) {
        std::vector<int> parents;
        for (int j = k + 1; j < group_count; ++j) parents.push_back(j);
        return parents;
    };
    switch (tag) {
        case ModelTag::kRef:
            plan.base = BaseEquation::kClassFirst;
            plan.has_attribute_heads = false;
            break;
        case ModelTag::kFi:
            plan.base = BaseEquation::kClassFirst;
            plan.has_attribute_heads = true;
            plan.attr_parents.assign(group_count, {});
            break;
        case ModelTag::kIacd:
            plan.base = BaseEquation::kClassFirst;
            plan.has_attribute_heads = true;
            plan.attr_parents.assign(group_count, {kClassHeadId});
            break;
        case ModelTag::kDacd:
            plan.base = BaseEquation::kClassFirst;
            plan.has_attribute_heads = true;
            for (int k = 0; k < group_count; ++k) {
                std::vector<int> parents = {kClassHeadId};
                for (int j : chain_parents(k)) parents.push_back(j);
                plan.attr_parents.push_back(std::move(parents));
            }
            break;
        case ModelTag::kCdia:
            plan.base = BaseEquation::kAttributesFirst;
            plan.has_attribute_heads = true;
            plan.attr_parents.assign(group_count, {});
            for (int k = 0; k < group_count; ++k) plan.class_parents.push_back(k);
            break;
        case ModelTag::kCdda:
            plan.base = BaseEquation::kAttributesFirst;
            plan.has_attribute_heads = true;
            for (int k = 0; k < group_count; ++k) plan.attr_parents.push_back(chain_parents(k));
            for (int k = 0; k < group_count; ++k) plan.class_parents.push_back(k);
            break;
    }
    for (const auto& parents : plan.attr_parents)
        if (!parents.empty()) plan.teacher_forcing = true;
    if (!plan.class_parents.empty()) plan.teacher_forcing = true;
    return plan;
}

/// Structural validation: parent references in range, no duplicate parents,
/// no self-conditioning, acyclic dependency graph. Returns diagnostics; an
/// empty list means the plan is well formed.
inline std::vector<std::string> validate(const FactorizationPlan& plan) {
    std::vector<std::string> issues;
    const int e = plan.group_count;
    if (e < 0) issues.push_back("negative group count");
    if (plan.has_attribute_heads && static_cast<int>(plan.attr_parents.size()) != e)
        issues.push_back("plan must list parents for every attribute head exactly once");
    if (!plan.has_attribute_heads && !plan.attr_parents.empty())
        issues.push_back("plan without attribute heads lists attribute factors");
    if (!plan.has_attribute_heads && !plan.class_parents.empty())
        issues.push_back("class head conditions on attributes that have no factor");

    auto check_parent_list = [&](int head, const std::vector<int>& parents) {
        std::vector<int> sorted = parents;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
            issues.push_back("duplicate parent in factor for head " + std::to_string(head));
        for (int p : parents) {
            if (p == head)
                issues.push_back((head == kClassHeadId ? std::string("class head")
                                                       : "attribute head " + std::to_string(head)) +
                                 " conditions on itself");
            if (p != kClassHeadId && (p < 0 || p >= e))
                issues.push_back("parent index " + std::to_string(p) + " out of range");
        }
    };
    check_parent_list(kClassHeadId, plan.class_parents);
    if (plan.has_attribute_heads)
        for (int k = 0; k < static_cast<int>(plan.attr_parents.size()); ++k)
            check_parent_list(k, plan.attr_parents[k]);
    if (!issues.empty()) return issues;

    // Cycle check over {y, z_0..z_{e-1}} via Kahn's algorithm.
    const int n_nodes = e + 1;  // node 0 = class, node k+1 = z_k
    auto node_of = [&](int head) { return head == kClassHeadId ? 0 : head + 1; };
    std::vector<std::vector<int>> children(n_nodes);
    std::vector<int> indegree(n_nodes, 0);
    for (int head : plan.head_ids())
        for (int p : plan.parents_of(head)) {
            children[node_of(p)].push_back(node_of(head));
            ++indegree[node_of(head)];
        }
    std::vector<int> ready;
    for (int head : plan.head_ids())
        if (indegree[node_of(head)] == 0) ready.push_back(node_of(head));
    size_t processed = 0;
    while (!ready.empty()) {
        int node = ready.back();
        ready.pop_back();
        ++processed;
        for (int c : children[node])
            if (--indegree[c] == 0) ready.push_back(c);
    }
    if (processed != plan.head_ids().size())
        issues.push_back("dependency graph contains a cycle");
    return issues;
}

/// Deterministic topological order over the plan's heads: every head appears
/// after all of its parents. Ties go to attribute heads in ascending index
/// order; the class head wins ties only when it is a parent somewhere in the
/// plan (otherwise it sorts last among ready heads).
inline std::vector<int> topological_head_order(const FactorizationPlan& plan) {
    auto issues = validate(plan);
    if (!issues.empty())
        throw std::invalid_argument("topological_head_order: invalid plan: " + issues.front());

    bool class_is_parent = false;
    for (const auto& parents : plan.attr_parents)
        for (int p : parents)
            if (p == kClassHeadId) class_is_parent = true;

    std::vector<int> remaining = plan.head_ids();
    std::vector<int> order;
    auto is_placed = [&](int head) {
        return std::find(order.begin(), order.end(), head) != order.end();
    };
    while (!remaining.empty()) {
        std::vector<int> ready;
        for (int head : remaining) {
            bool ok = true;
            for (int p : plan.parents_of(head))
                if (!is_placed(p)) ok = false;
            if (ok) ready.push_back(head);
        }
        std::sort(ready.begin(), ready.end(), [&](int a, int b) {
            if (a == kClassHeadId) return class_is_parent;
            if (b == kClassHeadId) return !class_is_parent;
            return a < b;
        });
        const int pick = ready.front();
        order.push_back(pick);
        remaining.erase(std::find(remaining.begin(), remaining.end(), pick));
    }
    return order;
}

/// Per-head softmax outputs for one batch, keyed like the plan's heads.
struct HeadOutputs {
    TensorPtr class_probs;              // [B, n]; null only if the plan lacks it
    std::vector<TensorPtr> attr_probs;  // [group] -> [B, |group|]

    const TensorPtr& of(int head) const {
        return head == kClassHeadId ? class_probs : attr_probs.at(static_cast<size_t>(head));
    }
};

/// One-hot targets matching HeadOutputs.
struct HeadTargets {
    TensorPtr class_onehot;
    std::vector<TensorPtr> attr_onehot;
};

/// Joint negative log-likelihood under the plan's factorization: the sum of
/// one cross-entropy per factor, with the class factor masked per sample.
/// Equals -mean log p(y,z|x) over the batch (class terms contributing only
/// for samples that have a class).
inline TensorPtr joint_nll(const HeadOutputs& outputs, const HeadTargets& targets,
                           const FactorizationPlan& plan, const std::vector<float>& class_mask) {
    if (!outputs.class_probs) throw ShapeError("joint_nll: missing class head output");
    if (plan.has_attribute_heads &&
        (outputs.attr_probs.size() != static_cast<size_t>(plan.group_count) ||
         targets.attr_onehot.size() != static_cast<size_t>(plan.group_count)))
        throw ShapeError("joint_nll: plan expects " + std::to_string(plan.group_count) +
                         " attribute heads, got " + std::to_string(outputs.attr_probs.size()));

    std::vector<TensorPtr> factor_losses = {
        cross_entropy_masked(outputs.class_probs, targets.class_onehot, class_mask)};
    if (plan.has_attribute_heads)
        for (int k = 0; k < plan.group_count; ++k)
            factor_losses.push_back(cross_entropy(outputs.attr_probs[k], targets.attr_onehot[k]));
    return add_scalars(factor_losses);
}

}  // namespace edd
