// Command-line entry point: dataset generation, training, evaluation, the
// full experiment pipeline, and single-prediction verification against the
// condition knowledge base.

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "edd/experiment.hpp"

namespace {

// Exit codes: 1 usage/config, 2 file or format, 3 training, 4 other.
constexpr int kExitConfig = 1;
constexpr int kExitFile = 2;
constexpr int kExitTraining = 3;
constexpr int kExitOther = 4;

struct CommonArgs {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::string out_dir;
    std::string models_csv;
};

edd::ExperimentConfig resolve_config(const CommonArgs& args) {
    edd::ExperimentConfig config = args.config_path.empty()
                                       ? edd::default_experiment_config()
                                       : edd::load_experiment_config(args.config_path);
    if (args.seed) {
        config.seed = *args.seed;
        config.dataset.seed = *args.seed;
        config.architecture.seed = *args.seed;
    }
    if (!args.out_dir.empty()) config.out_dir = args.out_dir;
    if (!args.models_csv.empty()) {
        std::vector<edd::ModelEntry> selected;
        std::istringstream list(args.models_csv);
        std::string name;
        const int groups = static_cast<int>(edd::default_schema().group_count());
        while (std::getline(list, name, ',')) {
            if (name.empty()) continue;
            if (auto tag = edd::model_tag_from_str(name)) {
                selected.push_back({name, edd::plan_for(*tag, groups)});
                continue;
            }
            bool found = false;
            for (const auto& entry : config.models)
                if (entry.name == name) {
                    selected.push_back(entry);
                    found = true;
                }
            if (!found) throw edd::ConfigError("unknown model '" + name + "'");
        }
        if (selected.empty()) throw edd::ConfigError("--models selected nothing");
        config.models = std::move(selected);
    }
    return config;
}

edd::DatasetSplit resolve_dataset(const edd::ExperimentConfig& config,
                                  const std::string& data_path) {
    if (!data_path.empty()) return edd::load_dataset(data_path);
    const auto schema = edd::default_schema();
    return edd::build_dataset(schema, edd::default_classes(schema), config.dataset);
}

void print_report(const edd::MetricsReport& report) {
    std::cout << edd::render_tabular(report);
}

int cmd_generate(const CommonArgs& args) {
    auto config = resolve_config(args);
    std::filesystem::create_directories(config.out_dir);
    auto split = resolve_dataset(config, "");
    const std::string path = config.out_dir + "/dataset.edd";
    edd::save_dataset(split, path);
    int free_count = 0;
    for (const auto& s : split.train)
        if (!s.has_class()) ++free_count;
    std::cout << "wrote " << path << "\n"
              << "train samples: " << split.train.size() << " (" << free_count
              << " free-attribute)\n"
              << "test samples:  " << split.test.size() << "\n"
              << "channel mean:  [" << edd::format_fixed(split.mean[0], 4) << ", "
              << edd::format_fixed(split.mean[1], 4) << ", "
              << edd::format_fixed(split.mean[2], 4) << "]\n"
              << "channel std:   [" << edd::format_fixed(split.stddev[0], 4) << ", "
              << edd::format_fixed(split.stddev[1], 4) << ", "
              << edd::format_fixed(split.stddev[2], 4) << "]\n";
    return 0;
}

int cmd_train(const CommonArgs& args, const std::string& data_path) {
    auto config = resolve_config(args);
    std::filesystem::create_directories(config.out_dir);
    auto split = resolve_dataset(config, data_path);
    auto kb = edd::resolve_kb(config, split.schema, split.classes);
    for (const auto& entry : config.models) {
        auto metrics = edd::run_model(entry, split, config, kb);
        std::cout << entry.name << ": test class accuracy " << edd::format_fixed(metrics.acc_y)
                  << "%\n";
    }
    std::cout << "weights and history written to " << config.out_dir << "\n";
    return 0;
}

int cmd_evaluate(const CommonArgs& args, const std::string& data_path,
                 const std::string& weights_dir) {
    auto config = resolve_config(args);
    std::filesystem::create_directories(config.out_dir);
    auto split = resolve_dataset(config, data_path);
    auto kb = edd::resolve_kb(config, split.schema, split.classes);
    edd::MetricsReport report;
    for (const auto& entry : config.models) {
        edd::ArchitectureConfig arch = config.architecture;
        arch.seed = edd::derive_seed(config.seed, edd::fnv1a(entry.name));
        auto net = edd::build_network(entry.plan, split.schema,
                                      static_cast<int>(split.classes.size()), arch);
        auto loaded = edd::load_weights(weights_dir + "/" + entry.name + ".eddw");
        edd::assign_weights(net.params, loaded);
        report.models.push_back(edd::evaluate(net, split, kb, config.policy));
    }
    edd::emit_report(report,
                     {edd::ReportFormat::kTabularText, edd::ReportFormat::kCommaSeparated,
                      edd::ReportFormat::kStructured},
                     config.out_dir);
    print_report(report);
    return 0;
}

int cmd_run(const CommonArgs& args) {
    auto config = resolve_config(args);
    auto report = edd::run_experiment(config);
    print_report(report);
    std::cout << "artifacts written to " << config.out_dir << "\n";
    return 0;
}

int cmd_verify(const std::string& attrs_csv, const std::string& class_name,
               const std::string& kb_path, const std::string& policy_name) {
    const auto schema = edd::default_schema();
    const auto classes = edd::default_classes(schema);
    edd::ConditionKB kb = kb_path.empty() ? edd::default_kb(schema, classes)
                                          : edd::load_kb(kb_path, schema, classes);

    edd::HardAttributes attrs;
    attrs.values.assign(schema.group_count(), -1);
    std::istringstream list(attrs_csv);
    std::string token;
    while (std::getline(list, token, ',')) {
        const auto eq = token.find('=');
        if (eq == std::string::npos)
            throw edd::ConfigError("bad attribute '" + token + "' (expected group=value)");
        const int g = schema.group_index(token.substr(0, eq));
        attrs.values[g] = schema.group(g).value_index(token.substr(eq + 1));
    }
    for (size_t k = 0; k < schema.group_count(); ++k)
        if (attrs.values[k] < 0)
            throw edd::ConfigError("missing attribute for group '" + schema.groups[k].name + "'");

    int predicted = -1;
    for (size_t i = 0; i < classes.size(); ++i)
        if (classes[i].name == class_name) predicted = static_cast<int>(i);
    if (predicted < 0) throw edd::ConfigError("unknown class '" + class_name + "'");

    edd::RejectPolicy policy = edd::RejectPolicy::kStrictTrue;
    if (policy_name == "accept_if_member")
        policy = edd::RejectPolicy::kAcceptIfMember;
    else if (!policy_name.empty() && policy_name != "strict_true")
        throw edd::ConfigError("unknown policy '" + policy_name + "'");

    auto result = edd::verify_prediction(predicted, attrs, kb, schema, classes, policy);
    std::cout << "predicted: " << class_name << "\n";
    std::cout << "candidates:";
    if (result.candidates.empty()) std::cout << " (none)";
    for (int c : result.candidates.classes) std::cout << " " << classes[c].name;
    std::cout << "\ncategory: " << edd::belnap_str(result.category) << "\n"
              << "decision: " << (result.accept ? "accept" : "reject") << "\n"
              << result.justification << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Joint class/attribute sign classifiers with dependency-factorized "
                 "training and attribute-based verification"};
    app.require_subcommand(1);

    CommonArgs common;
    std::string data_path, weights_dir;
    std::string attrs_csv, class_name, kb_path, policy_name;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", common.config_path, "experiment config (JSON)");
        cmd->add_option("--seed", common.seed, "seed override");
        cmd->add_option("--out", common.out_dir, "output directory override");
        cmd->add_option("--models", common.models_csv, "comma-separated model list");
    };

    add_common(app.add_subcommand("generate", "render a dataset and write dataset.edd"));
    auto* train_cmd = app.add_subcommand("train", "train the selected models");
    add_common(train_cmd);
    train_cmd->add_option("--data", data_path, "existing dataset file (default: build from config)");
    auto* eval_cmd = app.add_subcommand("evaluate", "evaluate saved weights and emit reports");
    add_common(eval_cmd);
    eval_cmd->add_option("--data", data_path, "existing dataset file (default: build from config)");
    eval_cmd->add_option("--weights", weights_dir, "directory with <model>.eddw files")
        ->required();
    add_common(app.add_subcommand("run", "full pipeline: dataset, train, evaluate, reports"));
    auto* verify_cmd =
        app.add_subcommand("verify", "adjudicate one prediction against the knowledge base");
    verify_cmd
        ->add_option("--attrs", attrs_csv,
                     "predicted attributes, e.g. main_color=red,border_color=none,"
                     "shape=octagon,symbol=bar")
        ->required();
    verify_cmd->add_option("--class", class_name, "predicted class name")->required();
    verify_cmd->add_option("--kb", kb_path, "knowledge-base file (default: built-in rules)");
    verify_cmd->add_option("--policy", policy_name, "strict_true (default) or accept_if_member");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("generate")) return cmd_generate(common);
        if (app.got_subcommand("train")) return cmd_train(common, data_path);
        if (app.got_subcommand("evaluate")) return cmd_evaluate(common, data_path, weights_dir);
        if (app.got_subcommand("run")) return cmd_run(common);
        if (app.got_subcommand("verify"))
            return cmd_verify(attrs_csv, class_name, kb_path, policy_name);
    } catch (const edd::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const edd::FileFormatError& e) {
        std::cerr << "file format error: " << e.what() << "\n";
        return kExitFile;
    } catch (const edd::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitFile;
    } catch (const edd::TrainingError& e) {
        std::cerr << "training error: " << e.what() << "\n";
        return kExitTraining;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitOther;
    }
    return 0;
}
