#include <amdkit/amdkit.hpp>

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace amdkit;
namespace pl = amdkit::pipeline;

std::vector<double> parse_thresholds(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != item.size()) throw ValidationError("--thresholds: '" + item + "' is not a number");
        out.push_back(v);
    }
    if (out.empty()) throw ValidationError("--thresholds is empty");
    return out;
}

std::vector<LikelihoodMode> parse_modes(const std::string& text) {
    if (text == "both") return {LikelihoodMode::odds_ratio, LikelihoodMode::standard_bayes};
    return {parse_mode(text)};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian ablation-mask analysis of task representations"};
    app.set_version_flag("--version", std::string(pl::kToolVersion));
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Write a synthetic item x feature dataset");
    std::string gen_preset = "desk", gen_out;
    std::uint64_t gen_seed = 7;
    std::optional<std::size_t> n_items, n_classes, features_per_class, total_features;
    std::optional<double> positive_rate, expression_rate;
    gen->add_option("--preset", gen_preset, "desk or paper-shape")->capture_default_str();
    gen->add_option("--seed", gen_seed)->capture_default_str();
    gen->add_option("--n-items", n_items);
    gen->add_option("--n-classes", n_classes);
    gen->add_option("--features-per-class", features_per_class);
    gen->add_option("--total-features", total_features);
    gen->add_option("--positive-rate", positive_rate, "P(feature on | class expressed)");
    gen->add_option("--class-expression-rate", expression_rate, "P(class expressed for an item)");
    gen->add_option("--out", gen_out, "Output JSON path")->required();

    // train
    auto* tr = app.add_subcommand("train", "Train the network on a dataset");
    std::string tr_data, tr_out, tr_preset = "desk";
    std::optional<int> epochs;
    std::optional<double> lr;
    std::optional<std::size_t> batch_size, item_dim, task_dim, hidden_dim;
    std::optional<std::uint64_t> tr_seed;
    tr->add_option("--data", tr_data, "Dataset JSON or CSV")->required();
    tr->add_option("--preset", tr_preset, "Defaults for dims and epochs: desk or paper-shape")->capture_default_str();
    tr->add_option("--epochs", epochs);
    tr->add_option("--lr", lr);
    tr->add_option("--batch-size", batch_size);
    tr->add_option("--seed", tr_seed);
    tr->add_option("--item-dim", item_dim);
    tr->add_option("--task-dim", task_dim, "Width of the task representation (mask width)");
    tr->add_option("--hidden-dim", hidden_dim);
    tr->add_option("--out-dir", tr_out)->required();

    // analyze
    auto* an = app.add_subcommand("analyze", "Posteriors, metrics, distances and RSA for a trained model");
    std::string an_data, an_ckpt, an_out, an_mode = "odds_ratio", an_thresholds = "0";
    std::optional<std::string> an_trace;
    pl::AnalyzeConfig acfg;
    an->add_option("--data", an_data)->required();
    an->add_option("--checkpoint", an_ckpt)->required();
    an->add_option("--trace", an_trace, "Training trace CSV, enables acquisition-order correlations");
    an->add_option("--mode", an_mode, "odds_ratio, standard_bayes or both")->capture_default_str();
    an->add_option("--exact-limit", acfg.exact_limit)->capture_default_str();
    an->add_option("--mcmc-samples", acfg.mcmc.n_samples)->capture_default_str();
    an->add_option("--mcmc-burn-in", acfg.mcmc.burn_in)->capture_default_str();
    an->add_option("--mcmc-seed", acfg.mcmc.seed)->capture_default_str();
    an->add_option("--thresholds", an_thresholds, "Comma-separated accuracy thresholds")->capture_default_str();
    an->add_option("--ot-size-limit", acfg.ot.size_limit)->capture_default_str();
    an->add_option("--threads", acfg.threads, "0 = all cores")->capture_default_str();
    an->add_option("--out-dir", an_out)->required();

    // report
    auto* rep = app.add_subcommand("report", "gen-data, train and analyze (both modes) for a preset");
    std::string rep_preset = "desk", rep_out;
    std::uint64_t rep_seed = 7;
    std::optional<int> rep_epochs;
    rep->add_option("--preset", rep_preset)->capture_default_str();
    rep->add_option("--seed", rep_seed)->capture_default_str();
    rep->add_option("--epochs", rep_epochs, "Override the preset's epoch count");
    rep->add_option("--out-dir", rep_out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) {
            auto cfg = pl::preset(gen_preset, gen_seed).data;
            if (n_items) cfg.n_items = *n_items;
            if (n_classes) cfg.n_classes = *n_classes;
            if (features_per_class) cfg.features_per_class = *features_per_class;
            if (total_features) cfg.total_features = *total_features;
            if (positive_rate) cfg.positive_rate = *positive_rate;
            if (expression_rate) cfg.class_expression_rate = *expression_rate;
            const auto ds = pl::cmd_gen_data(cfg, gen_out);
            std::cout << ds.n_items() << " items, " << ds.n_tasks() << " classes, " << ds.n_features()
                      << " features -> " << pl::output_path(gen_out).string() << '\n';
        } else if (tr->parsed()) {
            auto p = pl::preset(tr_preset, tr_seed.value_or(7));
            if (epochs) p.hyper.epochs = *epochs;
            if (lr) p.hyper.lr = *lr;
            if (batch_size) p.hyper.batch_size = *batch_size;
            if (item_dim) p.dims.item = *item_dim;
            if (task_dim) p.dims.task = *task_dim;
            if (hidden_dim) p.dims.hidden = *hidden_dim;
            p.hyper.validate();
            pl::cmd_train(tr_data, p.dims, p.hyper, tr_out, &std::cout);
        } else if (an->parsed()) {
            acfg.thresholds = parse_thresholds(an_thresholds);
            std::optional<pl::fs::path> trace;
            if (an_trace) trace = *an_trace;
            const auto results = pl::cmd_analyze(an_data, an_ckpt, trace, parse_modes(an_mode), acfg, an_out);
            for (const auto& r : results)
                std::cout << to_string(r.mode) << ": In_full " << fmt_double(r.mi.in_full) << ", mean In_unit "
                          << fmt_double(r.mean_unit_mi()) << ", mean entropy drop "
                          << fmt_double(r.mean_entropy_drop()) << '\n';
        } else if (rep->parsed()) {
            pl::cmd_report(rep_preset, rep_seed, rep_out, rep_epochs, &std::cout);
        }
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const RuntimeError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
