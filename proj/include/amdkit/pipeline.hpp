#pragma once

// End-to-end orchestration behind the command-line tool: presets, the full
// analysis of one trained model, and the on-disk output layout.

#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <type_traits>
#include <variant>
#include <vector>

#include <json.hpp>

#include "amd.hpp"
#include "datasets.hpp"
#include "errors.hpp"
#include "hash.hpp"
#include "infotheory.hpp"
#include "io.hpp"
#include "isc.hpp"
#include "similarity.hpp"

#ifndef AMDKIT_VERSION
#define AMDKIT_VERSION "0.1.0"
#endif

namespace amdkit::pipeline {

namespace fs = std::filesystem;

inline constexpr const char* kToolVersion = AMDKIT_VERSION;

// The desk dataset has 40 x 8 = 320 item-task pairs, i.e. 5 updates per epoch
// at batch size 64. 5910 epochs gives the same 29,550 updates as the
// reference training run; 150 epochs would be only 750.
inline constexpr int kDeskEpochs = 5910;

struct Preset {
    SyntheticConfig data;
    ModelDims dims;
    Hyperparams hyper;
};

inline Preset preset(const std::string& name, std::uint64_t seed) {
    Preset p;
    if (name == "desk") {
        p.data = SyntheticConfig::desk(seed);
        p.dims = ModelDims::desk();
        p.hyper.epochs = kDeskEpochs;
    } else if (name == "paper-shape") {
        p.data = SyntheticConfig::paper_shape(seed);
        p.dims = ModelDims::paper();
    } else {
        throw ValidationError("unknown preset '" + name + "' (expected desk or paper-shape)");
    }
    p.hyper.seed = seed;
    return p;
}

/// Relative output paths are placed under $AMDKIT_OUTPUT_ROOT when it is set.
inline fs::path output_path(const fs::path& p) {
    if (p.is_absolute()) return p;
    if (const char* root = std::getenv("AMDKIT_OUTPUT_ROOT"); root && *root) return fs::path(root) / p;
    return p;
}

struct AnalyzeConfig {
    LikelihoodMode mode = LikelihoodMode::odds_ratio;
    unsigned exact_limit = kDefaultExactLimit;
    McmcSettings mcmc{};
    std::vector<double> thresholds{0.0};
    unsigned threads = 0;
    WassersteinOptions ot{};
};

inline nlohmann::json config_json(const AnalyzeConfig& c) {
    return {{"mode", to_string(c.mode)},
            {"exact_limit", c.exact_limit},
            {"mcmc", {{"n_samples", c.mcmc.n_samples}, {"burn_in", c.mcmc.burn_in}, {"seed", c.mcmc.seed}}},
            {"thresholds", c.thresholds},
            {"ot", {{"size_limit", c.ot.size_limit}, {"retained_mass", c.ot.retained_mass}}}};
}

struct AcquisitionRow {
    double threshold;
    std::string measure;  // joint_entropy | marginal_entropy_sum | l1_norm
    double spearman;      // NaN when either side has no rank variance
};

struct AnalysisResult {
    LikelihoodMode mode = LikelihoodMode::odds_ratio;
    std::vector<std::string> task_names;
    std::vector<Eigen::VectorXd> task_reps;  // h(t)
    std::vector<MaskDistribution> posteriors;
    std::vector<TaskRepresentationMetrics> metrics;
    TaskPosterior reverse;
    MIReport mi;
    std::vector<DistanceMatrix> matrices;  // sym_kl, wasserstein, mpc, cosine, euclidean
    std::vector<std::vector<double>> rsa;
    std::vector<AcquisitionRow> acquisition;

    const DistanceMatrix& matrix(MetricId id) const {
        for (const auto& m : matrices)
            if (m.metric == id) return m;
        throw ValidationError(std::string("no matrix for ") + to_string(id));
    }
    double rsa_between(MetricId a, MetricId b) const {
        std::size_t ia = 0, ib = 0;
        for (std::size_t k = 0; k < matrices.size(); ++k) {
            if (matrices[k].metric == a) ia = k;
            if (matrices[k].metric == b) ib = k;
        }
        return rsa[ia][ib];
    }
    double mean_unit_mi() const {
        double s = 0.0;
        for (double v : mi.in_unit) s += v;
        return s / static_cast<double>(mi.in_unit.size());
    }
    double mean_entropy_drop() const {
        double s = 0.0;
        for (const auto& m : metrics) s += m.entropy_drop;
        return s / static_cast<double>(metrics.size());
    }
    double acquisition_abs(double threshold, const std::string& measure) const {
        for (const auto& r : acquisition)
            if (r.threshold == threshold && r.measure == measure) return std::abs(r.spearman);
        throw ValidationError("no acquisition row for " + measure);
    }
};

namespace detail {

inline double spearman_or_nan(std::span<const double> x, std::span<const double> y) {
    try {
        return spearman(x, y);
    } catch (const ValidationError&) {
        return std::numeric_limits<double>::quiet_NaN();
    }
}

/// Runs f(k) for k in [0, n) on up to `threads` workers pulling from a shared counter.
template <typename F>
void parallel_for(std::size_t n, unsigned threads, F&& f) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    if (threads <= 1) {
        for (std::size_t k = 0; k < n; ++k) f(k);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < threads; ++w)
            pool.emplace_back([&] {
                for (std::size_t k; (k = next.fetch_add(1)) < n;) {
                    try {
                        f(k);
                    } catch (...) {
                        std::lock_guard lock(error_mutex);
                        if (!error) error = std::current_exception();
                    }
                }
            });
    }
    if (error) std::rethrow_exception(error);
}

}  // namespace detail

/// Accuracy grid for the analysis. Exact runs use the dense grid; sampled runs
/// evaluate only `masks`.
inline AccuracyGrid build_grid(const ISCModel& model, const Dataset& ds, const AnalyzeConfig& cfg) {
    if (model.mask_width() > cfg.exact_limit)
        throw ValidationError("dense grid requested above the exact limit");
    return evaluate_dense_grid(model, ds, cfg.threads);
}

/// Every analysis for one likelihood mode. `grid` may be supplied (for
/// example from the cache) when the mask width is within the exact limit.
/// `trace` is optional; without it no acquisition correlations are produced.
inline AnalysisResult analyze(const ISCModel& model, const Dataset& ds, const TrainingTrace* trace,
                              const AnalyzeConfig& cfg, const AccuracyGrid* grid = nullptr) {
    model.check_dataset(ds);
    for (double t : cfg.thresholds)
        if (!(t >= 0.0 && t < 1.0)) throw ValidationError("thresholds must lie in [0, 1)");
    const std::size_t T = ds.n_tasks();
    const unsigned d = model.mask_width();
    AnalysisResult r;
    r.mode = cfg.mode;
    r.task_names = ds.task_names;
    for (std::size_t t = 0; t < T; ++t) r.task_reps.push_back(task_representation(model, t));

    AccuracyGrid local;
    const bool exact = d <= cfg.exact_limit;
    if (exact) {
        if (!grid || grid->width() != d || !grid->is_dense() || grid->n_tasks() != T ||
            grid->model_hash() != model_hash(model)) {
            local = build_grid(model, ds, cfg);
            grid = &local;
        }
        for (std::size_t t = 0; t < T; ++t) r.posteriors.push_back(posterior_exact(*grid, t, cfg.mode, cfg.exact_limit));
    } else {
        r.posteriors.resize(T);
        detail::parallel_for(T, cfg.threads, [&](std::size_t t) {
            auto s = cfg.mcmc;
            s.seed = cfg.mcmc.seed + t;
            r.posteriors[t] = posterior_mcmc(model, ds, t, cfg.mode, s);
        });
        // MPC needs every task on one mask set: the union of sampled supports.
        std::vector<std::uint64_t> masks;
        for (const auto& p : r.posteriors) masks.insert(masks.end(), p.support.begin(), p.support.end());
        local = evaluate_grid(model, ds, std::move(masks), cfg.threads);
        grid = &local;
    }

    for (const auto& p : r.posteriors) r.metrics.push_back(metrics_bundle(p));
    if (d <= 24) {
        r.reverse = reverse_task_posterior(r.posteriors);
        r.mi = normalized_mi(r.reverse);
    }

    auto kl = DistanceMatrix::square(MetricId::sym_kl, Orientation::distance, ds.task_names);
    auto w = DistanceMatrix::square(MetricId::wasserstein, Orientation::distance, ds.task_names);
    auto mp = DistanceMatrix::square(MetricId::mpc, Orientation::similarity, ds.task_names);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < T; ++i)
        for (std::size_t j = i + 1; j < T; ++j) pairs.emplace_back(i, j);
    std::vector<WassersteinResult> ot(pairs.size());
    detail::parallel_for(pairs.size(), cfg.threads, [&](std::size_t k) {
        ot[k] = wasserstein_hamming(r.posteriors[pairs[k].first], r.posteriors[pairs[k].second], cfg.ot);
    });
    double min_retained = 1.0;
    std::map<std::string, int> solvers;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const auto [i, j] = pairs[k];
        kl.set(i, j, sym_kl(r.posteriors[i], r.posteriors[j]));
        w.set(i, j, ot[k].distance);
        mp.set(i, j, mpc(*grid, i, j));
        min_retained = std::min({min_retained, ot[k].retained_mass_p, ot[k].retained_mass_q});
        ++solvers[ot[k].solver];
    }
    kl.metadata["epsilon"] = 1e-12 / std::ldexp(1.0, static_cast<int>(d));
    w.metadata["solver"] = solvers;
    w.metadata["min_retained_mass"] = min_retained;
    w.metadata["truncation_threshold"] = cfg.ot.retained_mass;
    mp.metadata["correlation"] = "pearson";
    mp.metadata["n_masks"] = grid->n_masks();
    auto [cos, euc] = vector_distances(model, ds.task_names);
    for (auto* m : {&kl, &w, &mp, &cos, &euc}) {
        m->metadata["likelihood_mode"] = to_string(cfg.mode);
        m->metadata["posterior"] = exact ? "exact" : "mcmc";
    }
    r.matrices = {std::move(kl), std::move(w), std::move(mp), std::move(cos), std::move(euc)};
    r.rsa = rsa(r.matrices);

    if (trace) {
        if (trace->accuracy.empty() || trace->accuracy.front().size() != T)
            throw ValidationError("training trace does not match the dataset's task count");
        std::vector<double> joint, msum, l1;
        for (std::size_t t = 0; t < T; ++t) {
            joint.push_back(r.metrics[t].joint_entropy_bits);
            msum.push_back(r.metrics[t].marginal_entropy_sum);
            l1.push_back(r.task_reps[t].lpNorm<1>());
        }
        for (double th : cfg.thresholds) {
            const auto ranks = task_acquisition_order(*trace, th);
            r.acquisition.push_back({th, "joint_entropy", detail::spearman_or_nan(ranks, joint)});
            r.acquisition.push_back({th, "marginal_entropy_sum", detail::spearman_or_nan(ranks, msum)});
            r.acquisition.push_back({th, "l1_norm", detail::spearman_or_nan(ranks, l1)});
        }
    }
    return r;
}

// --- output files ---------------------------------------------------------------

inline std::string safe_name(const std::string& s) {
    std::string out;
    for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.' ? c : '_';
    return out;
}

/// Collects files and writes them atomically, remembering content hashes for
/// the manifest.
class OutputSet {
public:
    explicit OutputSet(fs::path root) : root_(std::move(root)) {}

    void write(const std::string& rel, const std::string& text) {
        write_file_atomic(root_ / rel, text);
        hashes_[rel] = hex64(fnv1a64(text));
    }
    const fs::path& root() const { return root_; }
    const std::map<std::string, std::string>& hashes() const { return hashes_; }

    void write_manifest(const std::string& command, const nlohmann::json& config, const nlohmann::json& inputs) {
        nlohmann::json m;
        m["tool"] = "amdkit";
        m["version"] = kToolVersion;
        m["command"] = command;
        m["config"] = config;
        m["inputs"] = inputs;
        m["outputs"] = hashes_;
        write_file_atomic(root_ / "manifest.json", m.dump(2) + "\n");
    }

private:
    fs::path root_;
    std::map<std::string, std::string> hashes_;
};

inline std::string acquisition_csv(const std::vector<AcquisitionRow>& rows) {
    std::ostringstream out;
    out << "threshold,measure,spearman,abs_spearman\n";
    for (const auto& r : rows)
        out << fmt_double(r.threshold) << ',' << r.measure << ',' << fmt_double(r.spearman) << ','
            << fmt_double(std::abs(r.spearman)) << '\n';
    return out.str();
}

/// Unit importance against the unit's activation h_i(t), one row per (task, unit).
inline std::string importance_csv(const AnalysisResult& r) {
    std::ostringstream out;
    out << "task,unit,activation,importance\n";
    for (std::size_t t = 0; t < r.task_names.size(); ++t)
        for (std::size_t i = 0; i < r.metrics[t].importance.size(); ++i)
            out << r.task_names[t] << ',' << i << ',' << fmt_double(r.task_reps[t](Eigen::Index(i))) << ','
                << fmt_double(r.metrics[t].importance[i]) << '\n';
    return out.str();
}

inline std::string task_summary_csv(const AnalysisResult& r) {
    std::ostringstream out;
    out << "task,joint_entropy_bits,marginal_entropy_sum,distributedness,entropy_drop,l1_norm\n";
    for (std::size_t t = 0; t < r.task_names.size(); ++t) {
        const auto& m = r.metrics[t];
        out << r.task_names[t] << ',' << fmt_double(m.joint_entropy_bits) << ',' << fmt_double(m.marginal_entropy_sum)
            << ',' << fmt_double(m.distributedness) << ',' << fmt_double(m.entropy_drop) << ','
            << fmt_double(r.task_reps[t].lpNorm<1>()) << '\n';
    }
    return out.str();
}

/// Normalized mutual information: the full-mask value and one row per unit.
inline std::string mi_csv(const AnalysisResult& r) {
    std::ostringstream out;
    out << "scope,unit,normalized_mi\n";
    out << "full,," << fmt_double(r.mi.in_full) << '\n';
    for (std::size_t i = 0; i < r.mi.in_unit.size(); ++i) out << "unit," << i << ',' << fmt_double(r.mi.in_unit[i]) << '\n';
    return out.str();
}

inline nlohmann::json metrics_document(const AnalysisResult& r) {
    nlohmann::json j;
    j["likelihood_mode"] = to_string(r.mode);
    j["In_full"] = r.mi.in_full;
    j["In_unit"] = r.mi.in_unit;
    j["mean_entropy_drop"] = r.mean_entropy_drop();
    for (std::size_t t = 0; t < r.task_names.size(); ++t) {
        auto m = metrics_json(r.metrics[t]);
        m["l1_norm"] = r.task_reps[t].lpNorm<1>();
        std::visit(
            [&](const auto& p) {
                if constexpr (std::is_same_v<std::decay_t<decltype(p)>, McmcProvenance>)
                    m["provenance"] = {{"kind", "mcmc"},
                                       {"n_samples", p.n_samples},
                                       {"burn_in", p.burn_in},
                                       {"seed", p.seed},
                                       {"acceptance_rate", p.acceptance_rate}};
                else
                    m["provenance"] = {{"kind", "exact"}};
            },
            r.posteriors[t].provenance);
        j["tasks"][r.task_names[t]] = m;
    }
    return j;
}

/// Writes one mode's outputs under `out` with paths relative to `prefix`.
inline void write_analysis(const AnalysisResult& r, OutputSet& out, const std::string& prefix) {
    for (std::size_t t = 0; t < r.task_names.size(); ++t)
        out.write(prefix + "posteriors/" + safe_name(r.task_names[t]) + ".csv", posterior_csv(r.posteriors[t]));
    out.write(prefix + "metrics.json", metrics_document(r).dump(2) + "\n");
    out.write(prefix + "units.csv", unit_table_csv(r.task_names, r.metrics, r.mi));
    out.write(prefix + "importance_activation.csv", importance_csv(r));
    out.write(prefix + "task_summary.csv", task_summary_csv(r));
    out.write(prefix + "mutual_information.csv", mi_csv(r));
    for (const auto& m : r.matrices) {
        const std::string base = prefix + "distance_" + to_string(m.metric);
        out.write(base + ".csv", distance_matrix_csv(m));
        out.write(base + ".json", m.metadata.dump(2) + "\n");
    }
    out.write(prefix + "rsa.csv", rsa_csv(r.matrices, r.rsa));
    if (!r.acquisition.empty()) out.write(prefix + "acquisition.csv", acquisition_csv(r.acquisition));
}

// --- commands ---------------------------------------------------------------------

inline nlohmann::json synthetic_json(const SyntheticConfig& c) {
    return {{"n_items", c.n_items},
            {"n_classes", c.n_classes},
            {"features_per_class", c.features_per_class},
            {"total_features", c.total_features},
            {"positive_rate", c.positive_rate},
            {"class_expression_rate", c.class_expression_rate},
            {"seed", c.seed}};
}

inline nlohmann::json file_input(const fs::path& p) { return {{"path", p.string()}, {"fnv1a64", hex64(fnv1a64(read_file(p)))}}; }

inline Dataset cmd_gen_data(const SyntheticConfig& cfg, const fs::path& out_file) {
    cfg.validate();
    const auto ds = generate_synthetic(cfg);
    const auto path = output_path(out_file);
    const auto text = dataset_json_text(ds);
    write_file_atomic(path, text);
    nlohmann::json m{{"tool", "amdkit"},
                     {"version", kToolVersion},
                     {"command", "gen-data"},
                     {"config", synthetic_json(cfg)},
                     {"outputs", {{path.filename().string(), hex64(fnv1a64(text))}}}};
    auto manifest = path;
    manifest += ".manifest.json";
    write_file_atomic(manifest, m.dump(2) + "\n");
    return ds;
}

struct TrainOutcome {
    TrainResult result;
    fs::path dir;
};

inline TrainOutcome cmd_train(const fs::path& data_file, const ModelDims& dims, const Hyperparams& hyper,
                              const fs::path& out_dir, std::ostream* log = nullptr) {
    hyper.validate();
    dims.validate();
    const auto ds = load_dataset(data_file.string());
    TrainOutcome o{train(ds, dims, hyper), output_path(out_dir)};
    OutputSet out(o.dir);
    out.write("checkpoint.json", checkpoint_text(o.result.model));
    out.write("trace.csv", trace_csv(o.result.trace, ds.task_names));
    const auto acc = task_accuracies(o.result.model, ds);
    std::ostringstream summary;
    summary << "task,final_accuracy\n";
    for (std::size_t t = 0; t < acc.size(); ++t) summary << ds.task_names[t] << ',' << fmt_double(acc[t]) << '\n';
    out.write("final_accuracy.csv", summary.str());
    out.write_manifest("train",
                       {{"dims", {{"item", dims.item}, {"task", dims.task}, {"hidden", dims.hidden}}},
                        {"hyper", hyper_to_json(hyper)}},
                       {{"dataset", file_input(data_file)}});
    if (log) {
        *log << "checkpoint " << hex64(model_hash(o.result.model)) << '\n' << summary.str();
    }
    return o;
}

/// Loads the accuracy-grid cache in `dir` when it belongs to this model,
/// otherwise evaluates and stores it.
inline AccuracyGrid cached_grid(const ISCModel& model, const Dataset& ds, const AnalyzeConfig& cfg, OutputSet& out) {
    const auto path = out.root() / "accuracy_grid.csv";
    if (fs::exists(path)) {
        try {
            auto g = grid_from_csv(read_file(path));
            if (g.model_hash() == model_hash(model) && g.width() == model.mask_width() && g.is_dense() &&
                g.n_tasks() == model.n_tasks) {
                out.write("accuracy_grid.csv", grid_csv(g));
                return g;
            }
        } catch (const ValidationError&) {
            // stale or foreign file: recompute below
        }
    }
    auto g = build_grid(model, ds, cfg);
    out.write("accuracy_grid.csv", grid_csv(g));
    return g;
}

/// Analyzes a checkpoint under each requested mode; each mode gets its own
/// subdirectory of `out_dir`.
inline std::vector<AnalysisResult> cmd_analyze(const fs::path& data_file, const fs::path& checkpoint_file,
                                               const std::optional<fs::path>& trace_file,
                                               const std::vector<LikelihoodMode>& modes, AnalyzeConfig cfg,
                                               const fs::path& out_dir) {
    if (modes.empty()) throw ValidationError("no likelihood mode selected");
    const auto ds = load_dataset(data_file.string());
    const auto model = load_checkpoint(checkpoint_file.string());
    model.check_dataset(ds);
    std::optional<TrainingTrace> trace;
    if (trace_file) trace = trace_from_csv(read_file(*trace_file), ds.task_names);

    OutputSet out(output_path(out_dir));
    std::optional<AccuracyGrid> grid;
    if (model.mask_width() <= cfg.exact_limit) grid = cached_grid(model, ds, cfg, out);

    std::vector<AnalysisResult> results;
    nlohmann::json configs = nlohmann::json::array();
    for (auto mode : modes) {
        cfg.mode = mode;
        results.push_back(analyze(model, ds, trace ? &*trace : nullptr, cfg, grid ? &*grid : nullptr));
        write_analysis(results.back(), out, std::string(to_string(mode)) + "/");
        configs.push_back(config_json(cfg));
    }
    nlohmann::json inputs{{"dataset", file_input(data_file)}, {"checkpoint", file_input(checkpoint_file)}};
    if (trace_file) inputs["trace"] = file_input(*trace_file);
    out.write_manifest("analyze", {{"modes", configs}, {"model_hash", hex64(model_hash(model))}}, inputs);
    return results;
}

/// Threshold sweep used by the report: 0, 0.05, ..., 0.5.
inline std::vector<double> default_sweep() {
    std::vector<double> t;
    for (int k = 0; k <= 10; ++k) t.push_back(k / 20.0);
    return t;
}

/// gen-data, train and analyze (both modes) for a preset, under one directory.
inline std::vector<AnalysisResult> cmd_report(const std::string& preset_name, std::uint64_t seed, const fs::path& out_dir,
                                              std::optional<int> epochs = std::nullopt, std::ostream* log = nullptr) {
    auto p = preset(preset_name, seed);
    if (epochs) p.hyper.epochs = *epochs;
    const auto root = output_path(out_dir);
    const auto data = root / "data" / "dataset.json";
    cmd_gen_data(p.data, data);
    if (log) *log << "dataset written to " << data.string() << '\n';
    const auto trained = cmd_train(data, p.dims, p.hyper, root / "model", log);
    AnalyzeConfig cfg;
    cfg.thresholds = default_sweep();
    auto results = cmd_analyze(data, root / "model" / "checkpoint.json", root / "model" / "trace.csv",
                               {LikelihoodMode::odds_ratio, LikelihoodMode::standard_bayes}, cfg, root / "analysis");
    if (log)
        for (const auto& r : results)
            *log << to_string(r.mode) << ": In_full " << fmt_double(r.mi.in_full) << ", mean In_unit "
                 << fmt_double(r.mean_unit_mi()) << ", mean entropy drop " << fmt_double(r.mean_entropy_drop())
                 << ", RSA wasserstein-cosine " << fmt_double(r.rsa_between(MetricId::wasserstein, MetricId::cosine))
                 << '\n';
    return results;
}

}  // namespace amdkit::pipeline
