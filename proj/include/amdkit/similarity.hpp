#pragma once

// Inter-task distances and representational similarity analysis.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "amd.hpp"
#include "errors.hpp"
#include "io.hpp"
#include "isc.hpp"
#include "mask.hpp"
#include "numeric.hpp"
#include "transport.hpp"

namespace amdkit {

enum class MetricId { sym_kl, wasserstein, mpc, cosine, euclidean };
enum class Orientation { distance, similarity };

inline const char* to_string(MetricId id) {
    switch (id) {
        case MetricId::sym_kl: return "sym_kl";
        case MetricId::wasserstein: return "wasserstein";
        case MetricId::mpc: return "mpc";
        case MetricId::cosine: return "cosine";
        case MetricId::euclidean: return "euclidean";
    }
    return "?";
}

struct DistanceMatrix {
    MetricId metric = MetricId::sym_kl;
    Orientation orientation = Orientation::distance;
    std::vector<std::string> task_names;
    std::vector<std::vector<double>> values;
    nlohmann::json metadata = nlohmann::json::object();

    std::size_t size() const { return values.size(); }

    static DistanceMatrix square(MetricId id, Orientation o, std::vector<std::string> names) {
        DistanceMatrix d;
        d.metric = id;
        d.orientation = o;
        const std::size_t n = names.size();
        d.task_names = std::move(names);
        d.values.assign(n, std::vector<double>(n, o == Orientation::similarity ? 1.0 : 0.0));
        d.metadata["metric_id"] = to_string(id);
        d.metadata["orientation"] = o == Orientation::distance ? "distance" : "similarity";
        return d;
    }

    void set(std::size_t i, std::size_t j, double v) { values[i][j] = values[j][i] = v; }

    /// Strict upper triangle, row-major.
    std::vector<double> upper_triangle() const {
        std::vector<double> out;
        for (std::size_t i = 0; i < size(); ++i)
            for (std::size_t j = i + 1; j < size(); ++j) out.push_back(values[i][j]);
        return out;
    }
};

// --- distribution distances ------------------------------------------------------

namespace detail {

/// Probabilities of two distributions on the union of their supports.
struct Aligned {
    std::vector<std::uint64_t> support;
    std::vector<double> p, q;
};

inline Aligned align(const MaskDistribution& P, const MaskDistribution& Q) {
    if (P.width != Q.width) throw ValidationError("mask widths differ");
    Aligned a;
    std::size_t i = 0, j = 0;
    while (i < P.size() || j < Q.size()) {
        const bool take_p = j == Q.size() || (i < P.size() && P.support[i] <= Q.support[j]);
        const bool take_q = i == P.size() || (j < Q.size() && Q.support[j] <= P.support[i]);
        a.support.push_back(take_p ? P.support[i] : Q.support[j]);
        a.p.push_back(take_p ? P.probability(i++) : 0.0);
        a.q.push_back(take_q ? Q.probability(j++) : 0.0);
    }
    return a;
}

inline double kl_bits(const std::vector<double>& p, const std::vector<double>& q) {
    double s = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k)
        if (p[k] > 0.0) s += p[k] * std::log2(p[k] / q[k]);
    return std::max(s, 0.0);
}

}  // namespace detail

/// Symmetrized KL divergence in bits, 0.5 KL(P||Q) + 0.5 KL(Q||P), after adding
/// 1e-12 / 2^d to every cell of the shared support and renormalizing.
inline double sym_kl(const MaskDistribution& P, const MaskDistribution& Q) {
    auto a = detail::align(P, Q);
    const double eps = 1e-12 / std::ldexp(1.0, static_cast<int>(P.width));
    for (auto* v : {&a.p, &a.q}) {
        double s = 0.0;
        for (auto& x : *v) s += (x += eps);
        for (auto& x : *v) x /= s;
    }
    return 0.5 * detail::kl_bits(a.p, a.q) + 0.5 * detail::kl_bits(a.q, a.p);
}

struct WassersteinOptions {
    std::size_t size_limit = 4096;
    double retained_mass = 1.0 - 1e-6;
    bool keep_plan = false;
    SinkhornSettings sinkhorn{};
};

struct WassersteinResult {
    double distance = 0.0;
    std::string solver;  // "transport_simplex" or "sinkhorn"
    double retained_mass_p = 1.0;
    double retained_mass_q = 1.0;
    TransportPlan plan;  // empty unless keep_plan
};

namespace detail {

/// Smallest high-probability prefix covering `mass`, renormalized, returned in
/// ascending mask order.
inline std::pair<std::vector<std::uint64_t>, std::vector<double>> truncate_support(const MaskDistribution& D,
                                                                                   double mass, double& retained) {
    std::vector<std::size_t> order(D.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return D.log_weights[x] > D.log_weights[y]; });
    double acc = 0.0;
    std::size_t keep = 0;
    while (keep < order.size() && acc < mass) acc += D.probability(order[keep++]);
    order.resize(keep);
    std::sort(order.begin(), order.end());
    retained = acc;
    std::pair<std::vector<std::uint64_t>, std::vector<double>> out;
    for (auto k : order) {
        out.first.push_back(D.support[k]);
        out.second.push_back(D.probability(k) / acc);
    }
    return out;
}

}  // namespace detail

/// Earth mover's distance between two mask distributions with Hamming ground
/// cost, i.e. the expected number of bit flips under the optimal coupling.
inline WassersteinResult wasserstein_hamming(const MaskDistribution& P, const MaskDistribution& Q,
                                             const WassersteinOptions& opt = {}) {
    if (P.width != Q.width) throw ValidationError("mask widths differ");
    WassersteinResult r;
    std::vector<std::uint64_t> sp, sq;
    std::vector<double> p, q;
    if (P.size() > opt.size_limit || Q.size() > opt.size_limit) {
        std::tie(sp, p) = detail::truncate_support(P, opt.retained_mass, r.retained_mass_p);
        std::tie(sq, q) = detail::truncate_support(Q, opt.retained_mass, r.retained_mass_q);
    } else {
        sp = P.support;
        sq = Q.support;
        p = P.probabilities();
        q = Q.probabilities();
        auto renorm = [](std::vector<double>& v) {
            const double s = std::accumulate(v.begin(), v.end(), 0.0);
            for (auto& x : v) x /= s;
        };
        renorm(p);
        renorm(q);
    }
    auto cost = [&](std::size_t i, std::size_t j) { return static_cast<double>(hamming(sp[i], sq[j])); };
    TransportPlan plan;
    if (sp.size() > opt.size_limit || sq.size() > opt.size_limit) {
        plan = sinkhorn_transport(std::span<const double>(p), std::span<const double>(q), cost, opt.sinkhorn);
        r.solver = "sinkhorn";
    } else {
        plan = transport_simplex(std::span<const double>(p), std::span<const double>(q), cost);
        r.solver = "transport_simplex";
    }
    r.distance = std::max(plan.cost, 0.0);
    if (opt.keep_plan) r.plan = std::move(plan);
    return r;
}

// --- performance- and vector-based similarity -------------------------------------

enum class CorrelationType { pearson, spearman };

/// Spearman rank correlation: Pearson correlation of mean-fractional ranks.
inline double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ValidationError("spearman: length mismatch");
    if (x.size() < 3) throw ValidationError("spearman: need at least 3 observations");
    const auto rx = fractional_ranks(x), ry = fractional_ranks(y);
    try {
        return pearson(rx, ry);
    } catch (const ValidationError&) {
        throw ValidationError("spearman: zero rank variance");
    }
}

/// Mask-performance correlation: correlation of two tasks' smoothed accuracies
/// across every mask of the grid, with no posterior weighting.
inline double mpc(const AccuracyGrid& grid, std::size_t t1, std::size_t t2,
                  CorrelationType type = CorrelationType::pearson) {
    if (grid.n_masks() < 3) throw ValidationError("mpc needs at least 3 masks");
    const auto a = grid.geo_means(t1), b = grid.geo_means(t2);
    return type == CorrelationType::pearson ? pearson(a, b) : spearman(a, b);
}

inline double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const double na = a.norm(), nb = b.norm();
    if (na == 0.0 || nb == 0.0) throw ValidationError("cosine similarity of a zero vector");
    return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

inline double euclidean_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return (a - b).norm(); }

/// Cosine similarity and Euclidean distance between task representations h(t).
inline std::pair<DistanceMatrix, DistanceMatrix> vector_distances(const ISCModel& model,
                                                                  const std::vector<std::string>& task_names) {
    if (task_names.size() != model.n_tasks) throw ValidationError("task name count does not match model");
    auto cos = DistanceMatrix::square(MetricId::cosine, Orientation::similarity, task_names);
    auto euc = DistanceMatrix::square(MetricId::euclidean, Orientation::distance, task_names);
    std::vector<Eigen::VectorXd> h;
    for (std::size_t t = 0; t < model.n_tasks; ++t) h.push_back(task_representation(model, t));
    for (std::size_t i = 0; i < h.size(); ++i)
        for (std::size_t j = i + 1; j < h.size(); ++j) {
            cos.set(i, j, cosine_similarity(h[i], h[j]));
            euc.set(i, j, euclidean_distance(h[i], h[j]));
        }
    return {std::move(cos), std::move(euc)};
}

/// Absolute Spearman correlation between the upper triangles of every pair of
/// matrices. A pair whose triangles have no rank variance gets NaN.
inline std::vector<std::vector<double>> rsa(const std::vector<DistanceMatrix>& matrices) {
    if (matrices.size() < 2) throw ValidationError("rsa needs at least two matrices");
    const std::size_t T = matrices.front().size();
    for (const auto& m : matrices) {
        if (m.size() != T) throw ValidationError("rsa: matrices cover different task counts");
        for (const auto& row : m.values)
            if (row.size() != T) throw ValidationError("rsa: matrix is not square");
    }
    std::vector<std::vector<double>> tri;
    for (const auto& m : matrices) tri.push_back(m.upper_triangle());
    const std::size_t k = matrices.size();
    std::vector<std::vector<double>> out(k, std::vector<double>(k, 1.0));
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = a + 1; b < k; ++b) {
            double v;
            try {
                v = std::abs(spearman(tri[a], tri[b]));
            } catch (const ValidationError&) {
                v = std::numeric_limits<double>::quiet_NaN();
            }
            out[a][b] = out[b][a] = v;
        }
    return out;
}

// --- output --------------------------------------------------------------------------

inline std::string distance_matrix_csv(const DistanceMatrix& d) {
    std::ostringstream out;
    out << "task";
    for (const auto& n : d.task_names) out << ',' << n;
    out << '\n';
    for (std::size_t i = 0; i < d.size(); ++i) {
        out << d.task_names[i];
        for (double v : d.values[i]) out << ',' << fmt_double(v);
        out << '\n';
    }
    return out.str();
}

inline std::string rsa_csv(const std::vector<DistanceMatrix>& matrices, const std::vector<std::vector<double>>& r) {
    std::ostringstream out;
    out << "metric_id";
    for (const auto& m : matrices) out << ',' << to_string(m.metric);
    out << '\n';
    for (std::size_t a = 0; a < matrices.size(); ++a) {
        out << to_string(matrices[a].metric);
        for (double v : r[a]) out << ',' << fmt_double(v);
        out << '\n';
    }
    return out.str();
}

}  // namespace amdkit
