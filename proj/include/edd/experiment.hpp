#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "edd/dataset.hpp"
#include "edd/metrics.hpp"
#include "edd/network.hpp"
#include "edd/verify.hpp"

namespace edd {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One model to run: a canonical tag or a custom plan built from explicit
/// parent lists in the config.
struct ModelEntry {
    std::string name;
    FactorizationPlan plan;
};

struct ExperimentConfig {
    DatasetConfig dataset;
    ArchitectureConfig architecture = desk_architecture();
    std::vector<ModelEntry> models;
    std::string kb_source = "default";  // "default" or "file"
    std::string kb_path;
    std::string out_dir = "edd-out";
    uint64_t seed = 1;
    RejectPolicy policy = RejectPolicy::kStrictTrue;
};

inline ExperimentConfig default_experiment_config() {
    ExperimentConfig c;
    const auto schema = default_schema();
    for (ModelTag t : all_model_tags())
        c.models.push_back({model_tag_str(t), plan_for(t, static_cast<int>(schema.group_count()))});
    c.dataset.seed = c.seed;
    c.architecture.seed = c.seed;
    return c;
}

namespace experiment_detail {

inline FactorizationPlan parse_custom_plan(const nlohmann::json& j, int group_count) {
    FactorizationPlan plan;
    plan.tag = ModelTag::kFi;  // nominal; custom plans are identified by label
    plan.label = j.at("name").get<std::string>();
    plan.group_count = group_count;
    const std::string base = j.value("base", "class_first");
    if (base == "class_first")
        plan.base = BaseEquation::kClassFirst;
    else if (base == "attributes_first")
        plan.base = BaseEquation::kAttributesFirst;
    else
        throw ConfigError("custom plan '" + plan.label + "': unknown base '" + base + "'");
    plan.has_attribute_heads = j.value("has_attribute_heads", true);
    if (j.contains("class_parents"))
        plan.class_parents = j.at("class_parents").get<std::vector<int>>();
    if (j.contains("attr_parents"))
        plan.attr_parents = j.at("attr_parents").get<std::vector<std::vector<int>>>();
    else if (plan.has_attribute_heads)
        plan.attr_parents.assign(group_count, {});
    for (const auto& parents : plan.attr_parents)
        for (int p : parents)
            if (p == kClassHeadId) plan.teacher_forcing = true;
    if (!plan.class_parents.empty()) plan.teacher_forcing = true;
    for (const auto& parents : plan.attr_parents)
        if (!parents.empty()) plan.teacher_forcing = true;
    auto issues = validate(plan);
    if (!issues.empty())
        throw ConfigError("custom plan '" + plan.label + "': " + issues.front());
    return plan;
}

}  // namespace experiment_detail

/// Parses a config JSON object; every key is optional and falls back to the
/// desk-scale defaults. See the README for the full key reference.
inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
    ExperimentConfig config = default_experiment_config();
    const auto schema = default_schema();
    const int group_count = static_cast<int>(schema.group_count());
    try {
        if (j.contains("seed")) config.seed = j.at("seed").get<uint64_t>();
        config.dataset.seed = config.seed;
        config.architecture.seed = config.seed;
        if (j.contains("out_dir")) config.out_dir = j.at("out_dir").get<std::string>();
        if (j.contains("reject_policy")) {
            const std::string p = j.at("reject_policy").get<std::string>();
            if (p == "strict_true")
                config.policy = RejectPolicy::kStrictTrue;
            else if (p == "accept_if_member")
                config.policy = RejectPolicy::kAcceptIfMember;
            else
                throw ConfigError("unknown reject_policy '" + p + "'");
        }
        if (j.contains("kb")) {
            const auto& kb = j.at("kb");
            config.kb_source = kb.value("source", "default");
            config.kb_path = kb.value("path", "");
            if (config.kb_source != "default" && config.kb_source != "file")
                throw ConfigError("kb.source must be 'default' or 'file'");
            if (config.kb_source == "file" && config.kb_path.empty())
                throw ConfigError("kb.source 'file' requires kb.path");
        }
        if (j.contains("dataset")) {
            const auto& d = j.at("dataset");
            config.dataset.n_train = d.value("n_train", config.dataset.n_train);
            config.dataset.n_test = d.value("n_test", config.dataset.n_test);
            config.dataset.free_attr_fraction =
                d.value("free_attr_fraction", config.dataset.free_attr_fraction);
            config.dataset.image_size = d.value("image_size", config.dataset.image_size);
            config.dataset.seed = d.value("seed", config.dataset.seed);
        }
        if (j.contains("architecture")) {
            const auto& a = j.at("architecture");
            auto& arch = config.architecture;
            arch.epochs = a.value("epochs", arch.epochs);
            arch.batch_size = a.value("batch_size", arch.batch_size);
            arch.learning_rate = a.value("learning_rate", arch.learning_rate);
            arch.momentum = a.value("momentum", arch.momentum);
            arch.weight_decay = a.value("weight_decay", arch.weight_decay);
            arch.teacher_forcing_epochs =
                a.value("teacher_forcing_epochs", arch.teacher_forcing_epochs);
            arch.trunk_width = a.value("trunk_width", arch.trunk_width);
            arch.head_hidden = a.value("head_hidden", arch.head_hidden);
            if (a.contains("conv_layers")) {
                arch.conv_layers.clear();
                for (const auto& l : a.at("conv_layers"))
                    arch.conv_layers.push_back({l.at("channels").get<int>(),
                                                l.value("kernel", 3), l.value("stride", 1),
                                                l.value("pool", 1)});
            }
            if (a.contains("taps")) {
                arch.tap_simple = a.at("taps").value("simple", arch.tap_simple);
                arch.tap_medium = a.at("taps").value("medium", arch.tap_medium);
                arch.tap_complex = a.at("taps").value("complex", arch.tap_complex);
            }
        }
        config.architecture.image_size = config.dataset.image_size;

        std::vector<ModelEntry> custom;
        if (j.contains("custom_plans"))
            for (const auto& p : j.at("custom_plans")) {
                auto plan = experiment_detail::parse_custom_plan(p, group_count);
                custom.push_back({plan.label, plan});
            }
        if (j.contains("models")) {
            config.models.clear();
            for (const auto& name_json : j.at("models")) {
                const std::string name = name_json.get<std::string>();
                if (auto tag = model_tag_from_str(name)) {
                    config.models.push_back({name, plan_for(*tag, group_count)});
                    continue;
                }
                bool found = false;
                for (const auto& entry : custom)
                    if (entry.name == name) {
                        config.models.push_back(entry);
                        found = true;
                    }
                if (!found) throw ConfigError("unknown model '" + name + "' in models list");
            }
        } else if (!custom.empty()) {
            for (const auto& entry : custom) config.models.push_back(entry);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad config: ") + e.what());
    }
    if (config.models.empty()) throw ConfigError("config selects no models");
    return config;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return parse_experiment_config(j);
}

inline ConditionKB resolve_kb(const ExperimentConfig& config, const AttributeSchema& schema,
                              const std::vector<SignClass>& classes) {
    if (config.kb_source == "file") return load_kb(config.kb_path, schema, classes);
    return default_kb(schema, classes);
}

inline std::string mode_str(ForwardMode m) {
    return m == ForwardMode::kTeacherForced ? "teacher_forced" : "free";
}

inline void write_history(const TrainHistory& history, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    nlohmann::json head{{"pre_training_loss", history.pre_training_loss}};
    out << head.dump() << "\n";
    for (const auto& r : history.epochs) {
        nlohmann::json j{{"epoch", r.epoch},
                         {"mode", mode_str(r.mode)},
                         {"train_loss", r.train_loss},
                         {"test_class_acc", r.test_class_acc},
                         {"test_attr_acc", r.test_attr_acc}};
        out << j.dump() << "\n";
    }
}

/// Trains one model entry on a built split and returns its metrics; weights
/// and history land in out_dir when it is nonempty.
inline ModelMetrics run_model(const ModelEntry& entry, const DatasetSplit& split,
                              const ExperimentConfig& config, const ConditionKB& kb) {
    ArchitectureConfig arch = config.architecture;
    arch.seed = derive_seed(config.seed, fnv1a(entry.name));
    EddNetwork net =
        build_network(entry.plan, split.schema, static_cast<int>(split.classes.size()), arch);
    TrainHistory history = train(net, split);
    if (!config.out_dir.empty()) {
        save_weights(net.params, config.out_dir + "/" + entry.name + ".eddw");
        write_history(history, config.out_dir + "/" + entry.name + ".history.jsonl");
    }
    return evaluate(net, split, kb, config.policy);
}

/// Full pipeline: dataset, knowledge base, per-model train + evaluate, report
/// files in all three formats. Deterministic given the config.
inline MetricsReport run_experiment(const ExperimentConfig& config) {
    if (config.models.empty()) throw ConfigError("experiment selects no models");
    if (!config.out_dir.empty()) std::filesystem::create_directories(config.out_dir);

    const AttributeSchema schema = default_schema();
    const std::vector<SignClass> classes = default_classes(schema);
    DatasetSplit split = build_dataset(schema, classes, config.dataset);
    ConditionKB kb = resolve_kb(config, schema, classes);

    MetricsReport report;
    for (const auto& entry : config.models)
        report.models.push_back(run_model(entry, split, config, kb));

    if (!config.out_dir.empty())
        emit_report(report,
                    {ReportFormat::kTabularText, ReportFormat::kCommaSeparated,
                     ReportFormat::kStructured},
                    config.out_dir);
    return report;
}

}  // namespace edd
