#include <amdkit/amdkit.hpp>

#include <cstdlib>
#include <filesystem>

#include <gtest/gtest.h>

namespace amdkit {
namespace {

namespace fs = std::filesystem;
namespace pl = amdkit::pipeline;

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / "amdkit_test_pipeline" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

SyntheticConfig tiny_config() {
    SyntheticConfig c;
    c.n_items = 12;
    c.n_classes = 4;
    c.features_per_class = 6;
    c.seed = 3;
    return c;
}

// Dataset, checkpoint and trace on disk for a small model with d = 4.
struct Trained {
    fs::path dir, data, checkpoint, trace;
};

Trained tiny_trained(const std::string& name) {
    Trained t;
    t.dir = scratch(name);
    t.data = t.dir / "data.json";
    pl::cmd_gen_data(tiny_config(), t.data);
    Hyperparams h;
    h.epochs = 80;
    h.batch_size = 8;
    pl::cmd_train(t.data, {6, 4, 6}, h, t.dir / "model");
    t.checkpoint = t.dir / "model" / "checkpoint.json";
    t.trace = t.dir / "model" / "trace.csv";
    return t;
}

int run_cli(const std::string& args) {
    const int status = std::system((std::string(AMDKIT_CLI) + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Preset, DeskAndPaperShape) {
    const auto desk = pl::preset("desk", 9);
    EXPECT_EQ(desk.data.n_items, 40u);
    EXPECT_EQ(desk.data.seed, 9u);
    EXPECT_EQ(desk.dims, ModelDims::desk());
    EXPECT_EQ(desk.hyper.seed, 9u);
    // 40 items x 8 tasks / 64 per batch = 5 updates per epoch.
    EXPECT_EQ(desk.hyper.epochs * 5, 29550);
    EXPECT_EQ(pl::preset("paper-shape", 7).dims, ModelDims::paper());
    EXPECT_EQ(pl::preset("paper-shape", 7).hyper.epochs, 150);
    EXPECT_THROW(pl::preset("laptop", 7), ValidationError);
}

TEST(OutputPath, EnvironmentOverride) {
    ::setenv("AMDKIT_OUTPUT_ROOT", "/tmp/elsewhere", 1);
    EXPECT_EQ(pl::output_path("run/x.json"), fs::path("/tmp/elsewhere/run/x.json"));
    EXPECT_EQ(pl::output_path("/abs/x.json"), fs::path("/abs/x.json"));
    ::unsetenv("AMDKIT_OUTPUT_ROOT");
    EXPECT_EQ(pl::output_path("run/x.json"), fs::path("run/x.json"));
}

TEST(Analyze, WritesEveryOutputAndIsByteStable) {
    const auto t = tiny_trained("stable");
    pl::AnalyzeConfig cfg;
    cfg.thresholds = {0.0, 0.25};
    const std::vector<LikelihoodMode> both{LikelihoodMode::odds_ratio, LikelihoodMode::standard_bayes};
    pl::cmd_analyze(t.data, t.checkpoint, t.trace, both, cfg, t.dir / "a");
    pl::cmd_analyze(t.data, t.checkpoint, t.trace, both, cfg, t.dir / "b");
    const auto ma = nlohmann::json::parse(read_file(t.dir / "a" / "manifest.json"));
    const auto mb = nlohmann::json::parse(read_file(t.dir / "b" / "manifest.json"));
    EXPECT_EQ(ma["outputs"], mb["outputs"]);
    for (const auto& [rel, hash] : ma["outputs"].items()) {
        EXPECT_EQ(read_file(t.dir / "a" / rel), read_file(t.dir / "b" / rel)) << rel;
        EXPECT_EQ(hex64(fnv1a64(read_file(t.dir / "a" / rel))), hash.get<std::string>()) << rel;
    }
    for (const char* mode : {"odds_ratio", "standard_bayes"}) {
        const auto dir = t.dir / "a" / mode;
        for (const char* f : {"metrics.json", "units.csv", "importance_activation.csv", "task_summary.csv",
                              "mutual_information.csv", "rsa.csv", "acquisition.csv"})
            EXPECT_TRUE(fs::exists(dir / f)) << mode << "/" << f;
        for (const char* m : {"sym_kl", "wasserstein", "mpc", "cosine", "euclidean"}) {
            EXPECT_TRUE(fs::exists(dir / ("distance_" + std::string(m) + ".csv")));
            const auto side = nlohmann::json::parse(read_file(dir / ("distance_" + std::string(m) + ".json")));
            EXPECT_EQ(side["metric_id"], m);
        }
        EXPECT_EQ(std::distance(fs::directory_iterator(dir / "posteriors"), fs::directory_iterator{}), 4);
    }
    EXPECT_TRUE(fs::exists(t.dir / "a" / "accuracy_grid.csv"));
    EXPECT_EQ(ma["inputs"]["dataset"]["fnv1a64"], hex64(fnv1a64(read_file(t.data))));
}

TEST(Analyze, ImportanceCsvMatchesActivations) {
    const auto t = tiny_trained("importance");
    const auto r = pl::cmd_analyze(t.data, t.checkpoint, std::nullopt, {LikelihoodMode::odds_ratio}, {}, t.dir / "a");
    const auto csv = read_file(t.dir / "a" / "odds_ratio" / "importance_activation.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "task,unit,activation,importance");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 4 * 4);
    EXPECT_FALSE(fs::exists(t.dir / "a" / "odds_ratio" / "acquisition.csv"));  // no trace given
    const auto model = load_checkpoint(t.checkpoint.string());
    EXPECT_EQ(r[0].task_reps[2], task_representation(model, 2));
}

TEST(Analyze, GridCacheIsReused) {
    const auto t = tiny_trained("cache");
    pl::cmd_analyze(t.data, t.checkpoint, std::nullopt, {LikelihoodMode::odds_ratio}, {}, t.dir / "a");
    const auto before = read_file(t.dir / "a" / "accuracy_grid.csv");
    // Tamper with one count; a reused cache carries the change into the posterior.
    auto grid = grid_from_csv(before);
    grid.at(0, 0).pos_correct = grid.at(0, 0).pos_total;
    write_file_atomic(t.dir / "a" / "accuracy_grid.csv", grid_csv(grid));
    const auto r = pl::cmd_analyze(t.data, t.checkpoint, std::nullopt, {LikelihoodMode::odds_ratio}, {}, t.dir / "a");
    EXPECT_EQ(r[0].posteriors[0].log_weights[0], log_likelihood(grid.at(0, 0), LikelihoodMode::odds_ratio));
}

TEST(Analyze, SampledPathAboveExactLimit) {
    const auto t = tiny_trained("mcmc");
    pl::AnalyzeConfig cfg;
    cfg.exact_limit = 3;
    cfg.mcmc.n_samples = 20000;
    cfg.mcmc.burn_in = 1000;
    const auto r = pl::cmd_analyze(t.data, t.checkpoint, t.trace, {LikelihoodMode::odds_ratio}, cfg, t.dir / "a");
    EXPECT_FALSE(r[0].posteriors[0].is_exact());
    EXPECT_FALSE(fs::exists(t.dir / "a" / "accuracy_grid.csv"));
    const auto metrics = nlohmann::json::parse(read_file(t.dir / "a" / "odds_ratio" / "metrics.json"));
    EXPECT_EQ(metrics["tasks"]["class_00"]["provenance"]["kind"], "mcmc");
    EXPECT_GE(r[0].mi.in_full, 0.0);
    EXPECT_LE(r[0].mi.in_full, 1.0);
}

TEST(Analyze, RefusesMismatchedDataset) {
    const auto t = tiny_trained("mismatch");
    auto other = tiny_config();
    other.seed = 4;
    pl::cmd_gen_data(other, t.dir / "other.json");
    EXPECT_THROW(pl::cmd_analyze(t.dir / "other.json", t.checkpoint, std::nullopt, {LikelihoodMode::odds_ratio}, {},
                                 t.dir / "a"),
                 RuntimeError);
    EXPECT_THROW(pl::cmd_analyze(t.data, t.dir / "missing.json", std::nullopt, {LikelihoodMode::odds_ratio}, {},
                                 t.dir / "a"),
                 ValidationError);
}

TEST(Analyze, DoesNotModifyInputs) {
    const auto t = tiny_trained("readonly");
    const auto data = read_file(t.data), ckpt = read_file(t.checkpoint);
    pl::cmd_analyze(t.data, t.checkpoint, t.trace, {LikelihoodMode::odds_ratio}, {}, t.dir / "a");
    EXPECT_EQ(read_file(t.data), data);
    EXPECT_EQ(read_file(t.checkpoint), ckpt);
}

TEST(Train, RerunGivesIdenticalCheckpoint) {
    const auto a = tiny_trained("rerun_a"), b = tiny_trained("rerun_b");
    EXPECT_EQ(read_file(a.checkpoint), read_file(b.checkpoint));
    EXPECT_EQ(read_file(a.trace), read_file(b.trace));
}

TEST(Cli, GenDataIsIdempotent) {
    const auto dir = scratch("cli_gen");
    ASSERT_EQ(run_cli("gen-data --preset desk --seed 7 --out " + (dir / "a.json").string()), 0);
    ASSERT_EQ(run_cli("gen-data --preset desk --seed 7 --out " + (dir / "b.json").string()), 0);
    EXPECT_EQ(read_file(dir / "a.json"), read_file(dir / "b.json"));
    EXPECT_EQ(load_dataset((dir / "a.json").string()), generate_synthetic(SyntheticConfig::desk(7)));
}

TEST(Cli, PaperShapePreset) {
    const auto dir = scratch("cli_paper");
    ASSERT_EQ(run_cli("gen-data --preset paper-shape --out " + (dir / "p.json").string()), 0);
    const auto ds = load_dataset((dir / "p.json").string());
    EXPECT_EQ(ds.n_items(), 350u);
    EXPECT_EQ(ds.n_tasks(), 36u);
    EXPECT_EQ(ds.n_features(), 2896u);
}

TEST(Cli, ExitCodes) {
    const auto dir = scratch("cli_codes");
    const std::string err = (dir / "err.txt").string();
    const int bad_rate = std::system((std::string(AMDKIT_CLI) + " gen-data --positive-rate 1.5 --out " +
                                      (dir / "x.json").string() + " 2> " + err)
                                         .c_str());
    EXPECT_EQ(WEXITSTATUS(bad_rate), 2);
    EXPECT_NE(read_file(err).find("positive_rate"), std::string::npos);
    EXPECT_FALSE(fs::exists(dir / "x.json"));
    EXPECT_EQ(run_cli("train --data " + (dir / "none.json").string() + " --epochs 0 --out-dir " + dir.string()), 2);
    EXPECT_EQ(run_cli("train --data " + (dir / "none.json").string() + " --out-dir " + dir.string()), 2);
    EXPECT_EQ(run_cli("frobnicate"), 2);
    EXPECT_EQ(run_cli("--help"), 0);
}

TEST(Cli, ReportProducesBothModeTrees) {
    const auto dir = scratch("cli_report");
    ASSERT_EQ(run_cli("report --preset desk --seed 7 --epochs 30 --out-dir " + dir.string()), 0);
    for (const char* f : {"data/dataset.json", "model/checkpoint.json", "model/trace.csv", "analysis/manifest.json",
                          "analysis/odds_ratio/rsa.csv", "analysis/standard_bayes/rsa.csv",
                          "analysis/odds_ratio/acquisition.csv"})
        EXPECT_TRUE(fs::exists(dir / f)) << f;
    const auto acq = read_file(dir / "analysis" / "odds_ratio" / "acquisition.csv");
    EXPECT_EQ(std::count(acq.begin(), acq.end(), '\n'), 1 + 11 * 3);  // thresholds 0..0.5 step 0.05
}

TEST(Cli, OutputRootEnvironment) {
    const auto dir = scratch("cli_env");
    const int status = std::system(("AMDKIT_OUTPUT_ROOT=" + dir.string() + " " + AMDKIT_CLI +
                                    " gen-data --out sub/d.json > /dev/null")
                                       .c_str());
    EXPECT_EQ(WEXITSTATUS(status), 0);
    EXPECT_TRUE(fs::exists(dir / "sub" / "d.json"));
}

}  // namespace
}  // namespace amdkit
