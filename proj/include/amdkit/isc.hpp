#pragma once

// Integrated semantics-and-control network.
//
//   item one-hot --item_embed--> h_item (D_item)  --out_ci--> all features
//   task one-hot --task_embed--> h_task (D_task)
//   [h_item ; mask * h_task] --hidden--> h_cd (D_hidden) --out_cd--> task features
//
// Every layer is sigmoid. The null task has an exactly-zero task embedding.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "correctness.hpp"
#include "datasets.hpp"
#include "errors.hpp"
#include "hash.hpp"
#include "io.hpp"
#include "mask.hpp"
#include "nn.hpp"
#include "numeric.hpp"
#include "rng.hpp"

namespace amdkit {

struct ModelDims {
    std::size_t item = 32;
    std::size_t task = 10;
    std::size_t hidden = 32;

    static ModelDims desk() { return {}; }
    static ModelDims paper() { return {64, 24, 64}; }

    void validate() const {
        if (item == 0 || task == 0 || hidden == 0) throw ValidationError("model dims must be positive");
        if (task > kMaxPackedWidth) throw ValidationError("task dimension must be <= 63");
    }
    friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

struct Hyperparams {
    double lr = 0.05;
    int epochs = 150;
    std::size_t batch_size = 64;
    std::uint64_t seed = 7;

    void validate() const {
        if (!(lr > 0.0) || !std::isfinite(lr)) throw ValidationError("lr must be positive");
        if (epochs < 1) throw ValidationError("epochs must be >= 1");
        if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    }
    friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

struct ISCLayers {
    nn::DenseLayer item_embed;
    nn::DenseLayer task_embed;
    nn::DenseLayer hidden;
    nn::DenseLayer out_ci;
    nn::DenseLayer out_cd;

    template <typename F>
    void for_each(F&& f) {
        f(item_embed), f(task_embed), f(hidden), f(out_ci), f(out_cd);
    }
    template <typename F>
    void for_each(F&& f) const {
        f(item_embed), f(task_embed), f(hidden), f(out_ci), f(out_cd);
    }

    ISCLayers zeros_like() const {
        ISCLayers z = *this;
        z.for_each([](nn::DenseLayer& l) {
            l.weights.setZero();
            l.bias.setZero();
        });
        return z;
    }

    std::vector<std::span<double>> blocks() {
        std::vector<std::span<double>> out;
        for_each([&](nn::DenseLayer& l) {
            out.emplace_back(l.weights.data(), static_cast<std::size_t>(l.weights.size()));
            out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
        });
        return out;
    }
    std::vector<std::span<const double>> blocks() const {
        std::vector<std::span<const double>> out;
        for_each([&](const nn::DenseLayer& l) {
            out.emplace_back(l.weights.data(), static_cast<std::size_t>(l.weights.size()));
            out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
        });
        return out;
    }

    bool operator==(const ISCLayers&) const = default;
};

struct ISCModel {
    ModelDims dims;
    std::size_t n_items = 0;
    std::size_t n_tasks = 0;
    std::size_t n_features = 0;
    ISCLayers layers;
    Hyperparams hyper;
    std::uint64_t dataset_hash = 0;

    static ISCModel initialize(const Dataset& ds, const ModelDims& dims, const Hyperparams& hyper, Rng& rng) {
        dims.validate();
        ISCModel m;
        m.dims = dims;
        m.n_items = ds.n_items();
        m.n_tasks = ds.n_tasks();
        m.n_features = ds.n_features();
        m.hyper = hyper;
        m.dataset_hash = ds.fingerprint();
        m.layers.item_embed = nn::DenseLayer::uniform_init(m.n_items, dims.item, rng);
        m.layers.task_embed = nn::DenseLayer::uniform_init(m.n_tasks, dims.task, rng);
        m.layers.hidden = nn::DenseLayer::uniform_init(dims.item + dims.task, dims.hidden, rng);
        m.layers.out_ci = nn::DenseLayer::uniform_init(dims.item, m.n_features, rng);
        m.layers.out_cd = nn::DenseLayer::uniform_init(dims.hidden, m.n_features, rng);
        return m;
    }

    unsigned mask_width() const { return static_cast<unsigned>(dims.task); }

    void check_dataset(const Dataset& ds) const {
        if (ds.fingerprint() != dataset_hash)
            throw RuntimeError("dataset fingerprint " + hex64(ds.fingerprint()) + " does not match model's " +
                               hex64(dataset_hash));
    }

    bool operator==(const ISCModel&) const = default;
};

// --- inference -----------------------------------------------------------------

inline Eigen::VectorXd item_representation(const ISCModel& model, std::size_t item) {
    if (item >= model.n_items) throw ValidationError("item index out of range");
    const auto& l = model.layers.item_embed;
    return nn::sigmoid(l.weights.col(static_cast<Eigen::Index>(item)) + l.bias);
}

/// h(t): sigmoid task embedding, or exact zeros for the null task.
inline Eigen::VectorXd task_representation(const ISCModel& model, TaskRef task) {
    if (!task) return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.dims.task));
    if (*task >= model.n_tasks) throw ValidationError("task index out of range");
    const auto& l = model.layers.task_embed;
    return nn::sigmoid(l.weights.col(static_cast<Eigen::Index>(*task)) + l.bias);
}

inline Eigen::VectorXd mask_vector(const Mask& mask) {
    Eigen::VectorXd v(mask.width);
    for (unsigned i = 0; i < mask.width; ++i) v(i) = mask[i] ? 1.0 : 0.0;
    return v;
}

struct ForwardResult {
    Eigen::VectorXd ci_pred;
    Eigen::VectorXd cd_pred;
};

inline ForwardResult forward_full(const ISCModel& model, std::size_t item, TaskRef task, const Mask& mask) {
    if (mask.width != model.dims.task)
        throw ValidationError("mask width " + std::to_string(mask.width) + " != task dimension " +
                              std::to_string(model.dims.task));
    const Eigen::VectorXd h_item = item_representation(model, item);
    const Eigen::VectorXd h_task = task_representation(model, task).cwiseProduct(mask_vector(mask));
    Eigen::VectorXd joint(h_item.size() + h_task.size());
    joint << h_item, h_task;
    const Eigen::VectorXd h_cd = nn::forward(model.layers.hidden, joint, nn::Activation::sigmoid);
    return {nn::forward(model.layers.out_ci, h_item, nn::Activation::sigmoid),
            nn::forward(model.layers.out_cd, h_cd, nn::Activation::sigmoid)};
}

inline ForwardResult forward_full(const ISCModel& model, std::size_t item, TaskRef task) {
    return forward_full(model, item, task, Mask::all_ones(model.mask_width()));
}

/// Thresholded prediction: sigmoid(logit) >= 0.5, evaluated without calling
/// exp away from the boundary.
inline bool predicts_positive(double logit) {
    if (logit >= 0.0) return true;
    if (logit < -1e-9) return false;
    return nn::sigmoid(logit) >= 0.5;
}

/// Batched confusion counting for (task, mask) pairs over all items and all
/// features. Item-side hidden pre-activations are computed once.
class MaskEvaluator {
public:
    MaskEvaluator(const ISCModel& model, const Dataset& ds) : model_(&model) {
        if (ds.n_items() != model.n_items || ds.n_tasks() != model.n_tasks || ds.n_features() != model.n_features)
            throw ValidationError("dataset shape does not match model");
        const auto n_items = static_cast<Eigen::Index>(model.n_items);
        const auto d_item = static_cast<Eigen::Index>(model.dims.item);
        const auto& hid = model.layers.hidden;
        Eigen::MatrixXd h_items(d_item, n_items);
        for (Eigen::Index i = 0; i < n_items; ++i) h_items.col(i) = item_representation(model, std::size_t(i));
        item_pre_ = hid.weights.leftCols(d_item) * h_items;
        item_pre_.colwise() += hid.bias;
        task_weights_ = hid.weights.rightCols(static_cast<Eigen::Index>(model.dims.task));

        const auto by_class = features_by_class(ds);
        task_features_ = by_class;
        positives_.resize(ds.n_tasks());
        for (std::size_t t = 0; t < ds.n_tasks(); ++t) {
            positives_[t].assign(ds.n_items() * ds.n_features(), 0);
            for (std::size_t i = 0; i < ds.n_items(); ++i)
                for (std::size_t f : by_class[t]) positives_[t][i * ds.n_features() + f] = ds.target(i, f);
            std::uint64_t pos = 0;
            for (auto v : positives_[t]) pos += v;
            pos_total_.push_back(pos);
        }
        task_reps_.resize(ds.n_tasks());
        for (std::size_t t = 0; t < ds.n_tasks(); ++t) task_reps_[t] = task_representation(model, t);
    }

    CorrectnessEstimate evaluate(std::size_t task, const Mask& mask) const {
        const auto& model = *model_;
        if (task >= model.n_tasks) throw ValidationError("task index out of range");
        if (mask.width != model.dims.task) throw ValidationError("mask width does not match task dimension");
        const Eigen::VectorXd contrib = task_weights_ * task_reps_[task].cwiseProduct(mask_vector(mask));
        Eigen::MatrixXd h_cd = item_pre_;
        h_cd.colwise() += contrib;
        h_cd = h_cd.unaryExpr([](double v) { return nn::sigmoid(v); });
        Eigen::MatrixXd logits = model.layers.out_cd.weights * h_cd;
        logits.colwise() += model.layers.out_cd.bias;

        const std::size_t n_feat = model.n_features;
        const std::uint64_t pos_total = pos_total_[task];
        const std::uint64_t neg_total = model.n_items * n_feat - pos_total;
        std::uint64_t pos_correct = 0, neg_correct = 0;
        const auto& pos = positives_[task];
        for (std::size_t i = 0; i < model.n_items; ++i) {
            for (std::size_t f = 0; f < n_feat; ++f) {
                const bool predicted = predicts_positive(logits(Eigen::Index(f), Eigen::Index(i)));
                if (pos[i * n_feat + f])
                    pos_correct += predicted;
                else
                    neg_correct += !predicted;
            }
        }
        return CorrectnessEstimate::from_counts(pos_correct, pos_total, neg_correct, neg_total);
    }

private:
    const ISCModel* model_;
    Eigen::MatrixXd item_pre_;      // D_hidden x n_items
    Eigen::MatrixXd task_weights_;  // D_hidden x D_task
    std::vector<Eigen::VectorXd> task_reps_;
    std::vector<std::vector<std::size_t>> task_features_;
    std::vector<std::vector<std::uint8_t>> positives_;
    std::vector<std::uint64_t> pos_total_;
};

// --- loss and gradients ------------------------------------------------------

/// Which of the three summed loss terms to include.
struct LossComponents {
    bool context_independent = true;  // out_ci vs the item's full feature row
    bool context_dependent = true;    // out_cd vs the task-filtered targets
    bool null_task = true;            // out_cd under the null task vs zeros
};

struct ItemTask {
    std::size_t item;
    std::size_t task;
};

namespace detail {

inline void accumulate_head(const nn::DenseLayer& head, nn::DenseLayer& grad, const Eigen::VectorXd& input,
                            const Eigen::VectorXd& pred, std::span<const std::uint8_t> target,
                            Eigen::VectorXd& d_input) {
    Eigen::VectorXd g = pred;
    for (Eigen::Index k = 0; k < g.size(); ++k) g(k) -= target[std::size_t(k)];
    grad.weights.noalias() += g * input.transpose();
    grad.bias += g;
    d_input.noalias() += head.weights.transpose() * g;
}

}  // namespace detail

/// Mean over the batch of the summed loss terms. When `grad` is non-null the
/// gradient of that mean is written into it (same shapes as model.layers).
inline double loss_and_gradient(const ISCModel& model, const Dataset& ds, std::span<const ItemTask> batch,
                                ISCLayers* grad, LossComponents parts = {}) {
    if (batch.empty()) throw ValidationError("empty batch");
    const auto& L = model.layers;
    if (grad) *grad = L.zeros_like();
    const auto d_item = static_cast<Eigen::Index>(model.dims.item);
    const auto d_task = static_cast<Eigen::Index>(model.dims.task);
    const std::vector<std::uint8_t> zeros(model.n_features, 0);

    double total = 0.0;
    for (const auto& [item, task] : batch) {
        const Eigen::VectorXd h_item = item_representation(model, item);
        const Eigen::VectorXd h_task = task_representation(model, task);
        Eigen::VectorXd d_item_rep = Eigen::VectorXd::Zero(d_item);
        Eigen::VectorXd d_task_rep = Eigen::VectorXd::Zero(d_task);

        if (parts.context_independent) {
            const auto target = union_targets(ds, item);
            const Eigen::VectorXd pred = nn::forward(L.out_ci, h_item, nn::Activation::sigmoid);
            total += nn::bce_loss(pred, target);
            if (grad) detail::accumulate_head(L.out_ci, grad->out_ci, h_item, pred, target, d_item_rep);
        }

        // Context-dependent pathway, once with the task and once with the null embedding.
        auto cd_pass = [&](const Eigen::VectorXd& task_rep, std::span<const std::uint8_t> target, bool real_task) {
            Eigen::VectorXd joint(d_item + d_task);
            joint << h_item, task_rep;
            const Eigen::VectorXd h_cd = nn::forward(L.hidden, joint, nn::Activation::sigmoid);
            const Eigen::VectorXd pred = nn::forward(L.out_cd, h_cd, nn::Activation::sigmoid);
            total += nn::bce_loss(pred, target);
            if (!grad) return;
            Eigen::VectorXd d_hcd = Eigen::VectorXd::Zero(h_cd.size());
            detail::accumulate_head(L.out_cd, grad->out_cd, h_cd, pred, target, d_hcd);
            const Eigen::VectorXd dz = d_hcd.cwiseProduct(h_cd.cwiseProduct((1.0 - h_cd.array()).matrix()));
            grad->hidden.weights.noalias() += dz * joint.transpose();
            grad->hidden.bias += dz;
            const Eigen::VectorXd d_joint = L.hidden.weights.transpose() * dz;
            d_item_rep += d_joint.head(d_item);
            if (real_task) d_task_rep += d_joint.tail(d_task);
        };
        if (parts.context_dependent) {
            const auto target = task_targets(ds, item, task);
            cd_pass(h_task, target, true);
        }
        if (parts.null_task) cd_pass(Eigen::VectorXd::Zero(d_task), zeros, false);

        if (grad) {
            const Eigen::VectorXd dpre_item = d_item_rep.cwiseProduct(h_item.cwiseProduct((1.0 - h_item.array()).matrix()));
            grad->item_embed.weights.col(Eigen::Index(item)) += dpre_item;
            grad->item_embed.bias += dpre_item;
            const Eigen::VectorXd dpre_task = d_task_rep.cwiseProduct(h_task.cwiseProduct((1.0 - h_task.array()).matrix()));
            grad->task_embed.weights.col(Eigen::Index(task)) += dpre_task;
            grad->task_embed.bias += dpre_task;
        }
    }
    const double n = static_cast<double>(batch.size());
    if (grad)
        grad->for_each([n](nn::DenseLayer& l) {
            l.weights /= n;
            l.bias /= n;
        });
    return total / n;
}

inline double total_loss(const ISCModel& model, const Dataset& ds, std::span<const ItemTask> batch) {
    return loss_and_gradient(model, ds, batch, nullptr);
}

// --- training ---------------------------------------------------------------------

struct TrainingTrace {
    /// accuracy[e][t]: unsmoothed geometric-mean accuracy of task t with no
    /// ablation, after epoch e+1.
    std::vector<std::vector<double>> accuracy;
    /// Sum of per-example losses over each epoch.
    std::vector<double> loss;
    Hyperparams hyper;

    std::size_t epochs() const { return accuracy.size(); }
    bool operator==(const TrainingTrace&) const = default;
};

struct TrainResult {
    ISCModel model;
    TrainingTrace trace;
};

/// Called after every epoch with (1-based epoch, current model).
using EpochCallback = std::function<void(int, const ISCModel&)>;

inline std::vector<double> task_accuracies(const ISCModel& model, const Dataset& ds) {
    const MaskEvaluator eval(model, ds);
    std::vector<double> acc(model.n_tasks);
    for (std::size_t t = 0; t < model.n_tasks; ++t) acc[t] = eval.evaluate(t, Mask::all_ones(model.mask_width())).raw_geo_mean();
    return acc;
}

inline TrainResult train(const Dataset& ds, const ModelDims& dims, const Hyperparams& hyper,
                         const EpochCallback& on_epoch = {}) {
    ds.validate();
    hyper.validate();
    Rng rng(hyper.seed);
    TrainResult r{ISCModel::initialize(ds, dims, hyper, rng), {}};
    r.trace.hyper = hyper;

    std::vector<ItemTask> pairs;
    for (std::size_t i = 0; i < ds.n_items(); ++i)
        for (std::size_t t = 0; t < ds.n_tasks(); ++t) pairs.push_back({i, t});

    nn::AdamState adam;
    adam.config.lr = hyper.lr;
    ISCLayers grad;
    for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
        rng.shuffle(std::span(pairs));
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < pairs.size(); start += hyper.batch_size) {
            const auto len = std::min(hyper.batch_size, pairs.size() - start);
            const std::span<const ItemTask> batch(pairs.data() + start, len);
            const double loss = loss_and_gradient(r.model, ds, batch, &grad);
            if (!std::isfinite(loss)) throw DivergenceError(epoch, "non-finite loss");
            epoch_loss += loss * static_cast<double>(len);
            const auto g = std::as_const(grad).blocks();
            try {
                nn::adam_step(r.model.layers.blocks(), g, adam);
            } catch (const RuntimeError& e) {
                throw DivergenceError(epoch, e.what());
            }
        }
        r.trace.loss.push_back(epoch_loss);
        r.trace.accuracy.push_back(task_accuracies(r.model, ds));
        if (on_epoch) on_epoch(epoch, r.model);
    }
    return r;
}

/// Fractional ranks of the epoch at which each task's accuracy first exceeds
/// `threshold`. Earliest is rank 1; ties share the mean rank; tasks that
/// never cross all get rank T.
inline std::vector<double> task_acquisition_order(const TrainingTrace& trace, double threshold) {
    if (!(threshold < 1.0)) throw ValidationError("threshold must be < 1");
    if (trace.accuracy.empty()) throw ValidationError("empty training trace");
    const std::size_t n_tasks = trace.accuracy.front().size();
    std::vector<double> first(n_tasks, std::numeric_limits<double>::infinity());
    for (std::size_t t = 0; t < n_tasks; ++t) {
        for (std::size_t e = 0; e < trace.accuracy.size(); ++e) {
            if (trace.accuracy[e][t] > threshold) {
                first[t] = static_cast<double>(e + 1);
                break;
            }
        }
    }
    auto ranks = fractional_ranks(first);
    for (std::size_t t = 0; t < n_tasks; ++t)
        if (std::isinf(first[t])) ranks[t] = static_cast<double>(n_tasks);
    return ranks;
}

// --- serialization -----------------------------------------------------------------

namespace detail {

inline nlohmann::json layer_to_json(const nn::DenseLayer& l) {
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(l.weights.size()));
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weights.cols(); ++c) w.push_back(l.weights(r, c));
    return {{"rows", l.weights.rows()},
            {"cols", l.weights.cols()},
            {"weights", w},
            {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}};
}

inline nn::DenseLayer layer_from_json(const nlohmann::json& j, std::size_t rows, std::size_t cols, const char* name) {
    if (j.at("rows").get<std::size_t>() != rows || j.at("cols").get<std::size_t>() != cols)
        throw ValidationError(std::string("checkpoint layer '") + name + "' has inconsistent shape");
    const auto w = j.at("weights").get<std::vector<double>>();
    const auto b = j.at("bias").get<std::vector<double>>();
    if (w.size() != rows * cols || b.size() != rows)
        throw ValidationError(std::string("checkpoint layer '") + name + "' has wrong element count");
    nn::DenseLayer l(Eigen::MatrixXd(rows, cols), Eigen::VectorXd(rows));
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) l.weights(Eigen::Index(r), Eigen::Index(c)) = w[r * cols + c];
        l.bias(Eigen::Index(r)) = b[r];
    }
    return l;
}

}  // namespace detail

inline nlohmann::json hyper_to_json(const Hyperparams& h) {
    return {{"lr", h.lr}, {"epochs", h.epochs}, {"batch_size", h.batch_size}, {"seed", h.seed}};
}

inline std::string checkpoint_text(const ISCModel& m) {
    nlohmann::json j;
    j["format"] = "amdkit-checkpoint/1";
    j["dims"] = {{"item", m.dims.item}, {"task", m.dims.task}, {"hidden", m.dims.hidden}};
    j["n_items"] = m.n_items;
    j["n_tasks"] = m.n_tasks;
    j["n_features"] = m.n_features;
    j["hyper"] = hyper_to_json(m.hyper);
    j["seed"] = m.hyper.seed;
    j["dataset_hash"] = hex64(m.dataset_hash);
    j["layers"] = {{"item_embed", detail::layer_to_json(m.layers.item_embed)},
                   {"task_embed", detail::layer_to_json(m.layers.task_embed)},
                   {"hidden", detail::layer_to_json(m.layers.hidden)},
                   {"out_ci", detail::layer_to_json(m.layers.out_ci)},
                   {"out_cd", detail::layer_to_json(m.layers.out_cd)}};
    return j.dump() + "\n";
}

/// Hash of the canonical checkpoint encoding.
inline std::uint64_t model_hash(const ISCModel& m) { return fnv1a64(checkpoint_text(m)); }

inline ISCModel checkpoint_from_text(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        ISCModel m;
        m.dims = {j.at("dims").at("item").get<std::size_t>(), j.at("dims").at("task").get<std::size_t>(),
                  j.at("dims").at("hidden").get<std::size_t>()};
        m.dims.validate();
        m.n_items = j.at("n_items").get<std::size_t>();
        m.n_tasks = j.at("n_tasks").get<std::size_t>();
        m.n_features = j.at("n_features").get<std::size_t>();
        const auto& h = j.at("hyper");
        m.hyper = {h.at("lr").get<double>(), h.at("epochs").get<int>(), h.at("batch_size").get<std::size_t>(),
                   h.at("seed").get<std::uint64_t>()};
        m.dataset_hash = std::stoull(j.at("dataset_hash").get<std::string>(), nullptr, 16);
        const auto& L = j.at("layers");
        m.layers.item_embed = detail::layer_from_json(L.at("item_embed"), m.dims.item, m.n_items, "item_embed");
        m.layers.task_embed = detail::layer_from_json(L.at("task_embed"), m.dims.task, m.n_tasks, "task_embed");
        m.layers.hidden = detail::layer_from_json(L.at("hidden"), m.dims.hidden, m.dims.item + m.dims.task, "hidden");
        m.layers.out_ci = detail::layer_from_json(L.at("out_ci"), m.n_features, m.dims.item, "out_ci");
        m.layers.out_cd = detail::layer_from_json(L.at("out_cd"), m.n_features, m.dims.hidden, "out_cd");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed checkpoint: ") + e.what());
    }
}

inline ISCModel load_checkpoint(const std::string& path) { return checkpoint_from_text(read_file(path)); }

/// CSV: epoch,task,accuracy,loss (one row per epoch and task).
inline std::string trace_csv(const TrainingTrace& trace, const std::vector<std::string>& task_names) {
    std::ostringstream out;
    out << "epoch,task,accuracy,loss\n";
    for (std::size_t e = 0; e < trace.epochs(); ++e)
        for (std::size_t t = 0; t < trace.accuracy[e].size(); ++t)
            out << e + 1 << ',' << task_names.at(t) << ',' << fmt_double(trace.accuracy[e][t]) << ','
                << fmt_double(trace.loss[e]) << '\n';
    return out.str();
}

inline TrainingTrace trace_from_csv(const std::string& text, const std::vector<std::string>& task_names) {
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    if (line.rfind("epoch,task,accuracy,loss", 0) != 0) throw ValidationError("trace CSV has unexpected header");
    TrainingTrace trace;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string epoch_s, task, acc_s, loss_s;
        std::getline(ls, epoch_s, ',');
        std::getline(ls, task, ',');
        std::getline(ls, acc_s, ',');
        std::getline(ls, loss_s, ',');
        const std::size_t e = std::stoul(epoch_s);
        const auto it = std::find(task_names.begin(), task_names.end(), task);
        if (it == task_names.end()) throw ValidationError("trace row " + std::to_string(row) + ": unknown task '" + task + "'");
        if (e == 0) throw ValidationError("trace row " + std::to_string(row) + ": epoch must be >= 1");
        if (trace.accuracy.size() < e) {
            trace.accuracy.resize(e, std::vector<double>(task_names.size(), 0.0));
            trace.loss.resize(e, 0.0);
        }
        trace.accuracy[e - 1][std::size_t(it - task_names.begin())] = std::stod(acc_s);
        trace.loss[e - 1] = std::stod(loss_s);
        ++row;
    }
    if (trace.accuracy.empty()) throw ValidationError("trace CSV has no rows");
    return trace;
}

}  // namespace amdkit
