#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "edd/dataset.hpp"
#include "edd/factorization.hpp"
#include "edd/ops.hpp"
#include "edd/rng.hpp"
#include "toy_tables.hpp"

using namespace edd;

namespace {

constexpr int kGroups = 4;

}  // namespace

// ---------------------------------------------------------------------------
// plan_for: the dependency table, row by row
// ---------------------------------------------------------------------------

TEST(PlanFor, RefHasNoAttributeFactors) {
    auto plan = plan_for(ModelTag::kRef, kGroups);
    EXPECT_FALSE(plan.has_attribute_heads);
    EXPECT_TRUE(plan.attr_parents.empty());
    EXPECT_TRUE(plan.class_parents.empty());
    EXPECT_FALSE(plan.teacher_forcing);
    EXPECT_EQ(plan.head_ids(), (std::vector<int>{kClassHeadId}));
}

TEST(PlanFor, FiIsFullyIndependent) {
    auto plan = plan_for(ModelTag::kFi, kGroups);
    EXPECT_TRUE(plan.has_attribute_heads);
    EXPECT_TRUE(plan.class_parents.empty());
    for (const auto& parents : plan.attr_parents) EXPECT_TRUE(parents.empty());
    EXPECT_FALSE(plan.teacher_forcing);
}

TEST(PlanFor, IacdConditionsEveryAttributeOnClass) {
    auto plan = plan_for(ModelTag::kIacd, kGroups);
    EXPECT_EQ(plan.base, BaseEquation::kClassFirst);
    for (int k = 0; k < kGroups; ++k)
        EXPECT_EQ(plan.attr_parents[k], (std::vector<int>{kClassHeadId}));
    EXPECT_TRUE(plan.class_parents.empty());
    EXPECT_TRUE(plan.teacher_forcing);
}

TEST(PlanFor, DacdChainsAttributesAndKeepsClassParent) {
    auto plan = plan_for(ModelTag::kDacd, kGroups);
    EXPECT_EQ(plan.base, BaseEquation::kClassFirst);
    for (int k = 0; k < kGroups; ++k) {
        std::vector<int> expected = {kClassHeadId};
        for (int j = k + 1; j < kGroups; ++j) expected.push_back(j);
        EXPECT_EQ(plan.attr_parents[k], expected) << "group " << k;
    }
}

TEST(PlanFor, CdiaConditionsClassOnAllAttributes) {
    auto plan = plan_for(ModelTag::kCdia, kGroups);
    EXPECT_EQ(plan.base, BaseEquation::kAttributesFirst);
    EXPECT_EQ(plan.class_parents, (std::vector<int>{0, 1, 2, 3}));
    for (const auto& parents : plan.attr_parents) EXPECT_TRUE(parents.empty());
}

TEST(PlanFor, CddaChainsAttributesUnderAttributesFirst) {
    auto plan = plan_for(ModelTag::kCdda, kGroups);
    EXPECT_EQ(plan.base, BaseEquation::kAttributesFirst);
    EXPECT_EQ(plan.class_parents, (std::vector<int>{0, 1, 2, 3}));
    for (int k = 0; k < kGroups; ++k) {
        std::vector<int> expected;
        for (int j = k + 1; j < kGroups; ++j) expected.push_back(j);
        EXPECT_EQ(plan.attr_parents[k], expected) << "group " << k;
    }
}

TEST(PlanFor, UnknownTagStringIsRejected) {
    EXPECT_FALSE(model_tag_from_str("M-XYZ").has_value());
    EXPECT_TRUE(model_tag_from_str("M-CDIA").has_value());
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

TEST(Validate, AcceptsAllSixCanonicalPlans) {
    for (ModelTag tag : all_model_tags())
        EXPECT_TRUE(validate(plan_for(tag, kGroups)).empty()) << model_tag_str(tag);
}

TEST(Validate, DetectsTwoCycle) {
    FactorizationPlan plan = plan_for(ModelTag::kFi, 2);
    plan.attr_parents[0] = {1};
    plan.attr_parents[1] = {0};
    auto issues = validate(plan);
    ASSERT_FALSE(issues.empty());
    EXPECT_NE(issues.front().find("cycle"), std::string::npos);
}

TEST(Validate, DetectsSelfParent) {
    FactorizationPlan plan = plan_for(ModelTag::kRef, 2);
    plan.class_parents = {kClassHeadId};
    auto issues = validate(plan);
    ASSERT_FALSE(issues.empty());
    bool mentions_self = false;
    for (const auto& issue : issues)
        if (issue.find("itself") != std::string::npos) mentions_self = true;
    EXPECT_TRUE(mentions_self);
}

TEST(Validate, DetectsDuplicateParent) {
    FactorizationPlan plan = plan_for(ModelTag::kIacd, 2);
    plan.attr_parents[0] = {kClassHeadId, kClassHeadId};
    EXPECT_FALSE(validate(plan).empty());
}

TEST(Validate, DetectsOutOfRangeParent) {
    FactorizationPlan plan = plan_for(ModelTag::kFi, 2);
    plan.attr_parents[0] = {7};
    EXPECT_FALSE(validate(plan).empty());
}

TEST(Validate, NeverThrowsOnBadPlans) {
    FactorizationPlan plan;
    plan.has_attribute_heads = true;
    plan.group_count = 3;
    plan.attr_parents = {{0}};  // wrong length
    EXPECT_NO_THROW({ auto issues = validate(plan); EXPECT_FALSE(issues.empty()); });
}

// ---------------------------------------------------------------------------
// topological_head_order
// ---------------------------------------------------------------------------

namespace {

void expect_topological(const FactorizationPlan& plan, const std::vector<int>& order) {
    // Independent check: every head appears exactly once, after its parents.
    ASSERT_EQ(order.size(), plan.head_ids().size());
    for (int head : plan.head_ids()) {
        auto pos = std::find(order.begin(), order.end(), head);
        ASSERT_NE(pos, order.end());
        for (int parent : plan.parents_of(head))
            EXPECT_LT(std::find(order.begin(), order.end(), parent) - order.begin(),
                      pos - order.begin())
                << "head " << head << " before its parent " << parent;
    }
}

}  // namespace

TEST(TopologicalOrder, DacdRunsClassThenReversedChain) {
    auto plan = plan_for(ModelTag::kDacd, kGroups);
    auto order = topological_head_order(plan);
    expect_topological(plan, order);
    EXPECT_EQ(order, (std::vector<int>{kClassHeadId, 3, 2, 1, 0}));
}

TEST(TopologicalOrder, CdiaRunsAttributesThenClassLast) {
    auto plan = plan_for(ModelTag::kCdia, kGroups);
    auto order = topological_head_order(plan);
    expect_topological(plan, order);
    EXPECT_EQ(order.back(), kClassHeadId);
    EXPECT_EQ(order, (std::vector<int>{0, 1, 2, 3, kClassHeadId}));
}

TEST(TopologicalOrder, FiUsesDocumentedStableOrder) {
    auto plan = plan_for(ModelTag::kFi, kGroups);
    auto order = topological_head_order(plan);
    expect_topological(plan, order);
    // No edges at all: attribute heads by index, class head last.
    EXPECT_EQ(order, (std::vector<int>{0, 1, 2, 3, kClassHeadId}));
}

TEST(TopologicalOrder, AllCanonicalPlansSatisfyParentOrder) {
    for (ModelTag tag : all_model_tags()) {
        auto plan = plan_for(tag, kGroups);
        expect_topological(plan, topological_head_order(plan));
    }
}

// ---------------------------------------------------------------------------
// joint_nll
// ---------------------------------------------------------------------------

namespace {

TensorPtr rows_from(std::vector<std::vector<float>> rows) {
    const int n = static_cast<int>(rows[0].size());
    std::vector<float> flat;
    for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
    return Tensor::from({static_cast<int>(rows.size()), n}, std::move(flat));
}

}  // namespace

TEST(JointNll, ZeroWhenEveryHeadPredictsItsTarget) {
    auto plan = plan_for(ModelTag::kFi, 2);
    HeadOutputs outputs;
    outputs.class_probs = rows_from({{1.0f, 0.0f}});
    outputs.attr_probs = {rows_from({{0.0f, 1.0f}}), rows_from({{1.0f, 0.0f, 0.0f}})};
    HeadTargets targets;
    targets.class_onehot = rows_from({{1.0f, 0.0f}});
    targets.attr_onehot = {rows_from({{0.0f, 1.0f}}), rows_from({{1.0f, 0.0f, 0.0f}})};
    auto loss = joint_nll(outputs, targets, plan, {1.0f});
    EXPECT_FLOAT_EQ(loss->item(), 0.0f);
}

TEST(JointNll, FiDecomposesIntoIndependentCrossEntropies) {
    auto plan = plan_for(ModelTag::kFi, 2);
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const int batch = 3;
        auto logits_y = Tensor::zeros({batch, 4});
        auto logits_z1 = Tensor::zeros({batch, 3});
        auto logits_z2 = Tensor::zeros({batch, 5});
        for (auto t : {logits_y, logits_z1, logits_z2})
            for (auto& v : t->data) v = static_cast<float>(rng.uniform(-2.0, 2.0));
        HeadOutputs outputs{softmax(logits_y), {softmax(logits_z1), softmax(logits_z2)}};
        HeadTargets targets;
        std::vector<int> ty, t1, t2;
        for (int bi = 0; bi < batch; ++bi) {
            ty.push_back(rng.uniform_int(4));
            t1.push_back(rng.uniform_int(3));
            t2.push_back(rng.uniform_int(5));
        }
        targets.class_onehot = one_hot_rows(ty, 4);
        targets.attr_onehot = {one_hot_rows(t1, 3), one_hot_rows(t2, 5)};
        std::vector<float> mask(batch, 1.0f);

        const double joint = joint_nll(outputs, targets, plan, mask)->item();
        // Independent per-head cross-entropies, summed in double and rounded
        // once, exactly like the loss accumulates its factors.
        const double separate = static_cast<float>(
            static_cast<double>(cross_entropy(outputs.class_probs, targets.class_onehot)->item()) +
            cross_entropy(outputs.attr_probs[0], targets.attr_onehot[0])->item() +
            cross_entropy(outputs.attr_probs[1], targets.attr_onehot[1])->item());
        EXPECT_NEAR(joint, separate, 1e-9);
    }
}

TEST(JointNll, FreeAttributeBatchContributesNoClassLoss) {
    auto plan = plan_for(ModelTag::kFi, 1);
    auto probs_y = rows_from({{0.1f, 0.9f}, {0.5f, 0.5f}});
    auto probs_z = rows_from({{0.25f, 0.75f}, {0.5f, 0.5f}});
    HeadOutputs outputs{probs_y, {probs_z}};
    HeadTargets targets;
    targets.class_onehot = rows_from({{0.0f, 0.0f}, {0.0f, 0.0f}});  // no class anywhere
    targets.attr_onehot = {rows_from({{0.0f, 1.0f}, {1.0f, 0.0f}})};
    std::vector<float> mask = {0.0f, 0.0f};
    const double loss = joint_nll(outputs, targets, plan, mask)->item();
    const double expected = -(std::log(0.75) + std::log(0.5)) / 2.0;
    EXPECT_NEAR(loss, expected, 1e-6);
}

TEST(JointNll, HeadCountMismatchThrows) {
    auto plan = plan_for(ModelTag::kFi, 2);
    HeadOutputs outputs{rows_from({{1.0f, 0.0f}}), {rows_from({{1.0f, 0.0f}})}};  // one head short
    HeadTargets targets;
    targets.class_onehot = rows_from({{1.0f, 0.0f}});
    targets.attr_onehot = {rows_from({{1.0f, 0.0f}})};
    EXPECT_THROW(joint_nll(outputs, targets, plan, {1.0f}), ShapeError);
}

TEST(JointNll, RemovingAFactorRemovesExactlyItsTerm) {
    // Additive decomposition: the M-FI loss minus one attribute head's CE
    // equals the loss of a plan without that factor.
    Rng rng(9);
    auto logits_y = Tensor::zeros({2, 3});
    auto logits_z = Tensor::zeros({2, 4});
    for (auto t : {logits_y, logits_z})
        for (auto& v : t->data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    auto probs_y = softmax(logits_y);
    auto probs_z = softmax(logits_z);
    HeadTargets targets;
    targets.class_onehot = one_hot_rows({1, 2}, 3);
    targets.attr_onehot = {one_hot_rows({0, 3}, 4)};
    std::vector<float> mask = {1.0f, 1.0f};

    auto fi = plan_for(ModelTag::kFi, 1);
    HeadOutputs with_attr{probs_y, {probs_z}};
    const double full = joint_nll(with_attr, targets, fi, mask)->item();
    const double attr_term = cross_entropy(probs_z, targets.attr_onehot[0])->item();

    auto ref = plan_for(ModelTag::kRef, 1);
    HeadOutputs class_only{probs_y, {}};
    HeadTargets class_targets;
    class_targets.class_onehot = targets.class_onehot;
    const double reduced = joint_nll(class_only, class_targets, ref, mask)->item();
    EXPECT_NEAR(full - attr_term, reduced, 1e-6);
}

// ---------------------------------------------------------------------------
// Normalization: each plan's factorized joint sums to 1 (brute force)
// ---------------------------------------------------------------------------

TEST(Normalization, AllSixPlansSumToOneOnTinyCardinalities) {
    Rng rng(77);
    for (ModelTag tag : all_model_tags()) {
        for (int trial = 0; trial < 5; ++trial) {
            auto model = toytables::ToyModel::random(plan_for(tag, 2), 3, {2, 3}, rng, 1.0);
            EXPECT_NEAR(model.total_probability(), 1.0, 1e-6)
                << model_tag_str(tag) << " trial " << trial;
        }
    }
}

TEST(Normalization, PlanForIsTotalAndValid) {
    for (ModelTag tag : all_model_tags()) {
        auto plan = plan_for(tag, 2);
        EXPECT_TRUE(validate(plan).empty());
        EXPECT_EQ(plan.label, model_tag_str(tag));
    }
}

// ---------------------------------------------------------------------------
// Greedy vs joint decoding on toy tables
// ---------------------------------------------------------------------------

TEST(GreedyDecode, MatchesJointArgmaxOnPeakedTables) {
    Rng rng(123);
    int total = 0, matched = 0;
    for (ModelTag tag : all_model_tags()) {
        for (int trial = 0; trial < 50; ++trial) {
            auto model = toytables::ToyModel::random(plan_for(tag, 2), 3, {3, 3}, rng, 4.0);
            ++total;
            if (model.greedy_decode() == model.joint_argmax()) ++matched;
        }
    }
    EXPECT_GE(static_cast<double>(matched) / total, 0.95);
}

TEST(GreedyDecode, IndependentPlansAlwaysMatchJoint) {
    // With no dependency edges the joint factorizes completely, so per-head
    // argmax is exactly the joint argmax.
    Rng rng(321);
    for (int trial = 0; trial < 40; ++trial) {
        auto model = toytables::ToyModel::random(plan_for(ModelTag::kFi, 2), 3, {2, 4}, rng, 1.0);
        EXPECT_EQ(model.greedy_decode(), model.joint_argmax());
    }
}
