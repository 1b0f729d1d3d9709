#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "edd/experiment.hpp"
#include "edd/metrics.hpp"

using namespace edd;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    EXPECT_TRUE(in.good()) << path;
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

DatasetSplit tiny_split(uint64_t seed = 71) {
    const auto schema = default_schema();
    DatasetConfig config;
    config.n_train = 32;
    config.n_test = 16;
    config.seed = seed;
    return build_dataset(schema, default_classes(schema), config);
}

TestPredictions ground_truth_predictions(const DatasetSplit& split) {
    TestPredictions preds;
    preds.model = "oracle";
    preds.attr_pred.resize(split.schema.group_count());
    for (const auto& s : split.test) {
        preds.class_pred.push_back(s.class_index);
        for (size_t k = 0; k < split.schema.group_count(); ++k)
            preds.attr_pred[k].push_back(s.attributes[k]);
    }
    return preds;
}

}  // namespace

// ---------------------------------------------------------------------------
// evaluate_predictions
// ---------------------------------------------------------------------------

TEST(Evaluate, GroundTruthPassthroughScoresPerfectly) {
    auto split = tiny_split();
    auto kb = default_kb(split.schema, split.classes);
    auto m = evaluate_predictions(ground_truth_predictions(split), split, kb);
    EXPECT_DOUBLE_EQ(m.acc_y, 100.0);
    EXPECT_DOUBLE_EQ(*m.acc_z, 100.0);
    EXPECT_DOUBLE_EQ(*m.acc_z_strict, 100.0);
    EXPECT_DOUBLE_EQ(*m.rejection_rate, 0.0);
    EXPECT_DOUBLE_EQ(*m.acc_y_accept, 100.0);
    EXPECT_EQ(*m.n_accepted, m.n_test);
    EXPECT_EQ((*m.belnap_counts)[0], m.n_test);  // all True
}

TEST(Evaluate, AdversarialStubRejectsEverything) {
    // Always predict class 0 (stop) while reporting the attributes of class 1
    // (speed-80); stop's necessary shape and symbol are absent every time.
    auto split = tiny_split();
    auto kb = default_kb(split.schema, split.classes);
    TestPredictions preds;
    preds.model = "stub";
    preds.attr_pred.resize(split.schema.group_count());
    for (size_t i = 0; i < split.test.size(); ++i) {
        preds.class_pred.push_back(0);
        for (size_t k = 0; k < split.schema.group_count(); ++k)
            preds.attr_pred[k].push_back(split.classes[1].attributes[k]);
    }
    auto m = evaluate_predictions(preds, split, kb);
    EXPECT_DOUBLE_EQ(*m.rejection_rate, 100.0);
    EXPECT_EQ(*m.n_accepted, 0);
    EXPECT_FALSE(m.acc_y_accept.has_value());  // undefined, not zero
    // Every sample lands in False: the attributes support speed-80, not stop.
    EXPECT_EQ((*m.belnap_counts)[2], m.n_test);
}

TEST(Evaluate, CountsReconcile) {
    auto split = tiny_split();
    auto kb = default_kb(split.schema, split.classes);
    // Noisy predictions: right half the time, shifted otherwise.
    TestPredictions preds;
    preds.model = "noisy";
    preds.attr_pred.resize(split.schema.group_count());
    for (size_t i = 0; i < split.test.size(); ++i) {
        const auto& s = split.test[i];
        const bool flip = i % 2 == 1;
        preds.class_pred.push_back(flip ? (s.class_index + 1) % 8 : s.class_index);
        for (size_t k = 0; k < split.schema.group_count(); ++k) {
            int v = s.attributes[k];
            if (flip && k == 2)
                v = (v + 1) % static_cast<int>(split.schema.groups[k].values.size());
            preds.attr_pred[k].push_back(v);
        }
    }
    auto m = evaluate_predictions(preds, split, kb);
    int belnap_total = 0;
    for (int c : *m.belnap_counts) belnap_total += c;
    EXPECT_EQ(belnap_total, m.n_test);
    EXPECT_EQ((*m.belnap_counts)[0], *m.n_accepted);  // True count == accepted
    const double expected_rate = 100.0 * (m.n_test - *m.n_accepted) / m.n_test;
    EXPECT_DOUBLE_EQ(*m.rejection_rate, expected_rate);
}

// ---------------------------------------------------------------------------
// Report emission
// ---------------------------------------------------------------------------

namespace {

MetricsReport pinned_report() {
    MetricsReport report;
    ModelMetrics ref;
    ref.model = "M-REF";
    ref.acc_y = 93.2;
    ref.n_test = 500;
    report.models.push_back(ref);
    ModelMetrics fi;
    fi.model = "M-FI";
    fi.acc_y = 92.4617;
    fi.acc_z = 88.125;
    fi.acc_z_strict = 70.0;
    fi.acc_y_accept = 97.113;
    fi.rejection_rate = 14.2;
    fi.n_test = 500;
    fi.n_accepted = 429;
    fi.belnap_counts = {{429, 37, 21, 13}};
    report.models.push_back(fi);
    return report;
}

}  // namespace

TEST(Report, SingleModelHasHeaderAndOneRow) {
    MetricsReport report;
    report.models.push_back(pinned_report().models[0]);
    const std::string csv = render_csv(report);
    int lines = 0;
    for (char c : csv)
        if (c == '\n') ++lines;
    EXPECT_EQ(lines, 2);  // header + one data row
    EXPECT_NE(csv.find("model,acc_y,acc_z,acc_y_reject,rejection_rate,n_test,n_accepted,"
                       "belnap_true,belnap_both,belnap_false,belnap_none"),
              std::string::npos);
    EXPECT_NE(csv.find("M-REF,93.20,n/a,n/a,n/a,500,n/a,n/a,n/a,n/a,n/a"), std::string::npos);
}

TEST(Report, CsvRoundTripsAtTwoDecimals) {
    const auto report = pinned_report();
    auto parsed = parse_report_csv(render_csv(report));
    ASSERT_EQ(parsed.models.size(), 2u);
    EXPECT_EQ(parsed.models[0].model, "M-REF");
    EXPECT_DOUBLE_EQ(parsed.models[0].acc_y, 93.20);
    EXPECT_FALSE(parsed.models[0].acc_z.has_value());
    EXPECT_DOUBLE_EQ(parsed.models[1].acc_y, 92.46);
    EXPECT_DOUBLE_EQ(*parsed.models[1].acc_z, 88.12);  // ties-to-even at 2 decimals
    EXPECT_DOUBLE_EQ(*parsed.models[1].acc_y_accept, 97.11);
    EXPECT_EQ(*parsed.models[1].n_accepted, 429);
    EXPECT_EQ((*parsed.models[1].belnap_counts)[3], 13);
    // Re-rendering the parsed report reproduces the same bytes.
    EXPECT_EQ(render_csv(parsed), render_csv(report));
}

TEST(Report, TabularMatchesGoldenLayout) {
    const std::string expected =
        "model  acc_y  acc_z  acc_y_reject  rejection_rate  n_test  n_accepted  belnap_true  "
        "belnap_both  belnap_false  belnap_none\n"
        "-----  -----  -----  ------------  --------------  ------  ----------  -----------  "
        "-----------  ------------  -----------\n"
        "M-REF  93.20  n/a    n/a           n/a             500     n/a         n/a          "
        "n/a          n/a           n/a        \n"
        "M-FI   92.46  88.12  97.11         14.20           500     429         429          "
        "37           21            13         \n";
    EXPECT_EQ(render_tabular(pinned_report()), expected);
}

TEST(Report, EmitWritesRequestedFormats) {
    const std::string dir = testing::TempDir() + "report_emit";
    std::filesystem::create_directories(dir);
    auto written = emit_report(pinned_report(),
                               {ReportFormat::kTabularText, ReportFormat::kCommaSeparated,
                                ReportFormat::kStructured},
                               dir);
    ASSERT_EQ(written.size(), 3u);
    for (const auto& path : written) EXPECT_TRUE(std::filesystem::exists(path));
    // The structured form carries the strict attribute metric as well.
    const std::string json_text = slurp(dir + "/report.json");
    EXPECT_NE(json_text.find("acc_z_strict"), std::string::npos);
    auto parsed = nlohmann::json::parse(json_text);
    EXPECT_EQ(parsed.at("models").size(), 2u);
    EXPECT_TRUE(parsed.at("models").at(0).at("acc_z").is_null());
    EXPECT_DOUBLE_EQ(parsed.at("models").at(1).at("acc_y").get<double>(), 92.46);
}

// ---------------------------------------------------------------------------
// Experiment config
// ---------------------------------------------------------------------------

TEST(Config, DefaultsCoverAllSixModels) {
    auto config = default_experiment_config();
    ASSERT_EQ(config.models.size(), 6u);
    EXPECT_EQ(config.models.front().name, "M-REF");
    EXPECT_EQ(config.models.back().name, "M-CDDA");
    EXPECT_EQ(config.dataset.free_attr_fraction, 0.39);
}

TEST(Config, ParsesOverrides) {
    auto config = parse_experiment_config(nlohmann::json::parse(R"({
        "seed": 99,
        "out_dir": "custom-out",
        "reject_policy": "accept_if_member",
        "models": ["M-CDIA", "M-REF"],
        "dataset": {"n_train": 123, "free_attr_fraction": 0.25},
        "architecture": {"epochs": 7, "learning_rate": 0.5, "teacher_forcing_epochs": 2}
    })"));
    EXPECT_EQ(config.seed, 99u);
    EXPECT_EQ(config.out_dir, "custom-out");
    EXPECT_EQ(config.policy, RejectPolicy::kAcceptIfMember);
    ASSERT_EQ(config.models.size(), 2u);
    EXPECT_EQ(config.models[0].name, "M-CDIA");
    EXPECT_EQ(config.dataset.n_train, 123);
    EXPECT_EQ(config.dataset.seed, 99u);
    EXPECT_EQ(config.architecture.epochs, 7);
    EXPECT_FLOAT_EQ(config.architecture.learning_rate, 0.5f);
}

TEST(Config, CustomPlansAreParsedAndValidated) {
    auto config = parse_experiment_config(nlohmann::json::parse(R"({
        "custom_plans": [{
            "name": "X-CHAIN",
            "base": "class_first",
            "class_parents": [],
            "attr_parents": [[-1], [0], [], []]
        }],
        "models": ["X-CHAIN", "M-REF"]
    })"));
    ASSERT_EQ(config.models.size(), 2u);
    EXPECT_EQ(config.models[0].name, "X-CHAIN");
    EXPECT_TRUE(config.models[0].plan.teacher_forcing);
    EXPECT_EQ(config.models[0].plan.attr_parents[1], (std::vector<int>{0}));

    EXPECT_THROW(parse_experiment_config(nlohmann::json::parse(R"({
        "custom_plans": [{
            "name": "X-CYCLE",
            "attr_parents": [[1], [0], [], []]
        }],
        "models": ["X-CYCLE"]
    })")),
                 ConfigError);
}

TEST(Config, RejectsUnknownNamesAndBadValues) {
    EXPECT_THROW(parse_experiment_config(nlohmann::json::parse(R"({"models": ["M-NOPE"]})")),
                 ConfigError);
    EXPECT_THROW(
        parse_experiment_config(nlohmann::json::parse(R"({"reject_policy": "whatever"})")),
        ConfigError);
    EXPECT_THROW(parse_experiment_config(nlohmann::json::parse(R"({"kb": {"source": "file"}})")),
                 ConfigError);
    EXPECT_THROW(parse_experiment_config(nlohmann::json::parse(R"({"models": []})")),
                 ConfigError);
}

// ---------------------------------------------------------------------------
// run_experiment, small end to end
// ---------------------------------------------------------------------------

namespace {

ExperimentConfig small_experiment(const std::string& out_dir, uint64_t seed = 7) {
    ExperimentConfig config = default_experiment_config();
    config.seed = seed;
    config.dataset.seed = seed;
    config.dataset.n_train = 48;
    config.dataset.n_test = 16;
    config.architecture.seed = seed;
    config.architecture.epochs = 2;
    config.architecture.teacher_forcing_epochs = 1;
    config.architecture.conv_layers = {{4, 3, 1, 2}, {6, 3, 1, 2}, {8, 3, 1, 1}, {10, 3, 1, 1}};
    config.architecture.trunk_width = 16;
    config.out_dir = out_dir;
    config.models = {{"M-REF", plan_for(ModelTag::kRef, 4)},
                     {"M-CDIA", plan_for(ModelTag::kCdia, 4)}};
    return config;
}

}  // namespace

TEST(RunExperiment, ProducesArtifactsAndWellFormedReport) {
    const std::string dir = testing::TempDir() + "exp_artifacts";
    auto report = run_experiment(small_experiment(dir));
    ASSERT_EQ(report.models.size(), 2u);
    EXPECT_EQ(report.models[0].model, "M-REF");
    EXPECT_FALSE(report.models[0].acc_z.has_value());
    EXPECT_EQ(report.models[1].model, "M-CDIA");
    EXPECT_TRUE(report.models[1].acc_z.has_value());
    for (const auto& name :
         {"M-REF.eddw", "M-CDIA.eddw", "M-REF.history.jsonl", "M-CDIA.history.jsonl",
          "report.txt", "report.csv", "report.json"})
        EXPECT_TRUE(std::filesystem::exists(dir + "/" + name)) << name;

    // History lines parse as JSON records with the expected keys.
    std::ifstream history(dir + "/M-CDIA.history.jsonl");
    std::string line;
    ASSERT_TRUE(std::getline(history, line));
    auto head = nlohmann::json::parse(line);
    EXPECT_TRUE(head.contains("pre_training_loss"));
    int epoch_lines = 0;
    while (std::getline(history, line)) {
        auto record = nlohmann::json::parse(line);
        EXPECT_TRUE(record.contains("epoch"));
        EXPECT_TRUE(record.contains("mode"));
        EXPECT_TRUE(record.contains("train_loss"));
        ++epoch_lines;
    }
    EXPECT_EQ(epoch_lines, 2);
}

TEST(RunExperiment, DeterministicAcrossRuns) {
    const std::string dir_a = testing::TempDir() + "exp_det_a";
    const std::string dir_b = testing::TempDir() + "exp_det_b";
    run_experiment(small_experiment(dir_a, 13));
    run_experiment(small_experiment(dir_b, 13));
    for (const auto& name : {"report.txt", "report.csv", "report.json", "M-REF.eddw",
                             "M-CDIA.eddw", "M-REF.history.jsonl", "M-CDIA.history.jsonl"})
        EXPECT_EQ(slurp(dir_a + "/" + name), slurp(dir_b + "/" + name)) << name;
}

TEST(RunExperiment, EvaluateFromSavedWeightsMatchesLiveMetrics) {
    const std::string dir = testing::TempDir() + "exp_reload";
    auto config = small_experiment(dir, 21);
    auto report = run_experiment(config);

    // Rebuild the M-CDIA network, load its weights, re-evaluate.
    const auto schema = default_schema();
    const auto classes = default_classes(schema);
    auto split = build_dataset(schema, classes, config.dataset);
    auto kb = default_kb(schema, classes);
    ArchitectureConfig arch = config.architecture;
    arch.seed = derive_seed(config.seed, fnv1a("M-CDIA"));
    auto net = build_network(plan_for(ModelTag::kCdia, 4), schema, 8, arch);
    assign_weights(net.params, load_weights(dir + "/M-CDIA.eddw"));
    auto metrics = evaluate(net, split, kb);
    EXPECT_DOUBLE_EQ(metrics.acc_y, report.models[1].acc_y);
    EXPECT_DOUBLE_EQ(*metrics.acc_z, *report.models[1].acc_z);
    EXPECT_EQ(*metrics.n_accepted, *report.models[1].n_accepted);
}

// ---------------------------------------------------------------------------
// CLI binary smoke tests
// ---------------------------------------------------------------------------

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(EDD_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

}  // namespace

TEST(Cli, VerifySubcommandAdjudicates) {
    EXPECT_EQ(run_cli("verify --attrs main_color=red,border_color=none,shape=octagon,symbol=bar "
                      "--class stop"),
              0);
    // Unknown class name is a config error (exit 1).
    EXPECT_EQ(run_cli("verify --attrs main_color=red,border_color=none,shape=octagon,symbol=bar "
                      "--class martian"),
              1);
    // Missing required option is a CLI usage error.
    EXPECT_NE(run_cli("verify --class stop"), 0);
}

TEST(Cli, GenerateWritesDataset) {
    const std::string dir = testing::TempDir() + "cli_gen";
    ExperimentConfig config;  // only dataset keys matter here
    nlohmann::json j{{"seed", 3},
                     {"dataset", {{"n_train", 12}, {"n_test", 4}}},
                     {"models", {"M-REF"}}};
    const std::string config_path = testing::TempDir() + "cli_gen_config.json";
    std::ofstream(config_path) << j.dump();
    EXPECT_EQ(run_cli("generate --config " + config_path + " --out " + dir), 0);
    auto split = load_dataset(dir + "/dataset.edd");
    EXPECT_EQ(split.train.size(), 12u);
    EXPECT_EQ(split.test.size(), 4u);
}

TEST(Cli, BadConfigGivesConfigExitCode) {
    const std::string config_path = testing::TempDir() + "cli_bad_config.json";
    std::ofstream(config_path) << "{\"models\": [\"M-NOPE\"]}";
    EXPECT_EQ(run_cli("run --config " + config_path), 1);
    const std::string not_json = testing::TempDir() + "cli_not_json.json";
    std::ofstream(not_json) << "not json at all";
    EXPECT_EQ(run_cli("run --config " + not_json), 1);
}
