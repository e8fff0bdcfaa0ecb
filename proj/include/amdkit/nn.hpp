#pragma once

// Small dense-network engine: linear layers, sigmoid, summed binary NLL and
// Adam. Everything is double precision.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "rng.hpp"

namespace amdkit::nn {

enum class Activation { sigmoid, identity };

/// Logistic function, stable for large |x|.
inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline Eigen::VectorXd sigmoid(const Eigen::VectorXd& x) {
    return x.unaryExpr([](double v) { return sigmoid(v); });
}

struct DenseLayer {
    Eigen::MatrixXd weights;  // out x in
    Eigen::VectorXd bias;     // out

    DenseLayer() = default;
    DenseLayer(Eigen::MatrixXd w, Eigen::VectorXd b) : weights(std::move(w)), bias(std::move(b)) {
        if (weights.rows() != bias.size()) throw ValidationError("DenseLayer: bias length != rows");
    }

    /// Weights and bias uniform in +-1/sqrt(fan_in).
    static DenseLayer uniform_init(std::size_t in, std::size_t out, Rng& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        DenseLayer l(Eigen::MatrixXd(out, in), Eigen::VectorXd(out));
        // Row-major draw order so the layout is independent of Eigen storage.
        for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = rng.uniform(-bound, bound);
        for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = rng.uniform(-bound, bound);
        return l;
    }

    std::size_t in_dim() const { return static_cast<std::size_t>(weights.cols()); }
    std::size_t out_dim() const { return static_cast<std::size_t>(weights.rows()); }

    bool operator==(const DenseLayer& o) const {
        return weights.rows() == o.weights.rows() && weights.cols() == o.weights.cols() &&
               weights == o.weights && bias == o.bias;
    }
};

inline Eigen::VectorXd forward(const DenseLayer& layer, const Eigen::VectorXd& x, Activation act) {
    if (static_cast<std::size_t>(x.size()) != layer.in_dim())
        throw ValidationError("forward: input length " + std::to_string(x.size()) + " != layer input " +
                              std::to_string(layer.in_dim()));
    Eigen::VectorXd z = layer.weights * x + layer.bias;
    return act == Activation::sigmoid ? sigmoid(z) : z;
}

inline constexpr double kProbClamp = 1e-12;

/// Summed binary negative log-likelihood (natural log).
template <typename Target>
double bce_loss(const Eigen::VectorXd& pred, const Target& target) {
    if (static_cast<std::size_t>(pred.size()) != static_cast<std::size_t>(target.size()))
        throw ValidationError("bce_loss: length mismatch");
    double loss = 0.0;
    for (Eigen::Index i = 0; i < pred.size(); ++i) {
        const double p = std::clamp(pred(i), kProbClamp, 1.0 - kProbClamp);
        loss -= target[static_cast<std::size_t>(i)] ? std::log(p) : std::log1p(-p);
    }
    return loss;
}

struct AdamConfig {
    double lr = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    AdamConfig config;
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
    std::int64_t step = 0;
};

/// One bias-corrected Adam update over a list of parameter blocks.
/// Moments are allocated on the first call.
inline void adam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
                      AdamState& state) {
    if (params.size() != grads.size()) throw ValidationError("adam_step: params/grads count mismatch");
    if (!(state.config.lr > 0.0)) throw ValidationError("adam_step: lr must be positive");
    if (state.first_moment.empty()) {
        for (const auto& p : params) {
            state.first_moment.emplace_back(p.size(), 0.0);
            state.second_moment.emplace_back(p.size(), 0.0);
        }
    }
    if (state.first_moment.size() != params.size()) throw ValidationError("adam_step: state shape mismatch");
    for (std::size_t b = 0; b < params.size(); ++b) {
        if (params[b].size() != grads[b].size() || state.first_moment[b].size() != params[b].size())
            throw ValidationError("adam_step: block " + std::to_string(b) + " shape mismatch");
        for (double g : grads[b])
            if (!std::isfinite(g)) throw RuntimeError("adam_step: non-finite gradient in block " + std::to_string(b));
    }

    const auto& c = state.config;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correct1 = 1.0 - std::pow(c.beta1, t);
    const double correct2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t b = 0; b < params.size(); ++b) {
        auto& m = state.first_moment[b];
        auto& v = state.second_moment[b];
        for (std::size_t i = 0; i < params[b].size(); ++i) {
            const double g = grads[b][i];
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
            params[b][i] -= c.lr * (m[i] / correct1) / (std::sqrt(v[i] / correct2) + c.eps);
        }
    }
}

}  // namespace amdkit::nn
