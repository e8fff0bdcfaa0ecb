#pragma once

// Entropy-based summaries of mask distributions. All entropies are in bits,
// so a single unit's marginal entropy lies in [0, 1].

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "amd.hpp"
#include "errors.hpp"
#include "io.hpp"
#include "numeric.hpp"

namespace amdkit {

struct TaskRepresentationMetrics {
    double joint_entropy_bits = 0.0;
    std::vector<double> marginal_prob;
    std::vector<double> marginal_entropy_bits;
    std::vector<double> importance;
    double marginal_entropy_sum = 0.0;
    double distributedness = 0.0;
    double entropy_drop = 0.0;  // 1 - joint / sum of marginals; 0 when the sum is 0
};

// Computed from the log-weights shifted by their max, H = log2 S - sum q log2 q / S,
// which is exact for uniform distributions over 2^k masks and for point masses.
inline double joint_entropy(const MaskDistribution& dist) {
    dist.check_normalized();
    if (dist.size() == 0) return 0.0;
    const double top = *std::max_element(dist.log_weights.begin(), dist.log_weights.end());
    double s = 0.0, qlogq = 0.0;
    for (double lw : dist.log_weights) {
        const double q = std::exp(lw - top);
        if (q == 0.0) continue;
        s += q;
        qlogq += q * (lw - top);
    }
    return std::max(std::log2(s) - qlogq / (s * std::numbers::ln2), 0.0);
}

/// P(m_i = 1 | t, c) for each unit.
inline std::vector<double> marginals(const MaskDistribution& dist) {
    dist.check_normalized();
    std::vector<double> p(dist.width, 0.0);
    for (std::size_t k = 0; k < dist.size(); ++k) {
        const double w = dist.probability(k);
        for (unsigned i = 0; i < dist.width; ++i)
            if ((dist.support[k] >> i) & 1u) p[i] += w;
    }
    for (auto& v : p) v = std::clamp(v, 0.0, 1.0);
    return p;
}

inline TaskRepresentationMetrics metrics_bundle(const MaskDistribution& dist) {
    TaskRepresentationMetrics m;
    m.joint_entropy_bits = joint_entropy(dist);
    m.marginal_prob = marginals(dist);
    for (double p : m.marginal_prob) {
        const double h = binary_entropy(p);
        m.marginal_entropy_bits.push_back(h);
        m.importance.push_back(1.0 - h);
        m.marginal_entropy_sum += h;
    }
    m.distributedness = static_cast<double>(dist.width) - m.marginal_entropy_sum;
    m.entropy_drop = m.marginal_entropy_sum > 0.0 ? 1.0 - m.joint_entropy_bits / m.marginal_entropy_sum : 0.0;
    return m;
}

/// Dense probability table over all 2^d masks. Exact distributions are copied;
/// sampled ones get frequency estimates with a total pseudo-count of 1 spread
/// evenly, so no mask has zero mass.
inline std::vector<double> densify(const MaskDistribution& dist) {
    if (dist.width > 24) throw ValidationError("densify supports widths up to 24");
    const std::size_t n = std::size_t{1} << dist.width;
    std::vector<double> dense(n, 0.0);
    if (dist.is_exact()) {
        for (std::size_t k = 0; k < dist.size(); ++k) dense[dist.support[k]] = dist.probability(k);
        return dense;
    }
    const auto& prov = std::get<McmcProvenance>(dist.provenance);
    const double total = static_cast<double>(prov.n_samples) + 1.0;
    const double pseudo = 1.0 / static_cast<double>(n);
    for (auto& v : dense) v = pseudo / total;
    for (std::size_t k = 0; k < dist.size(); ++k)
        dense[dist.support[k]] += dist.probability(k) * static_cast<double>(prov.n_samples) / total;
    return dense;
}

struct TaskPosterior {
    unsigned width = 0;
    std::vector<double> prior;                // P(t | c)
    std::vector<double> mask_marginal;        // P(m | c), indexed by packed mask
    std::vector<std::vector<double>> full;    // full[m][t] = P(t | m, c)
    std::vector<double> unit_marginal;        // P(m_i = 1 | c)
    std::vector<std::vector<double>> unit_on;   // unit_on[i][t]  = P(t | m_i = 1, c)
    std::vector<std::vector<double>> unit_off;  // unit_off[i][t] = P(t | m_i = 0, c)
};

struct MIReport {
    double in_full = 0.0;
    std::vector<double> in_unit;
};

inline std::vector<double> uniform_prior(std::size_t n_tasks) {
    return std::vector<double>(n_tasks, 1.0 / static_cast<double>(n_tasks));
}

/// Bayes inversion P(t | m, c) = P(m | t, c) P(t | c) / sum_t' (...), plus the
/// per-unit form obtained by summing the full table over masks with m_i = v,
/// weighted by P(m | c) = sum_t P(m | t, c) P(t | c).
inline TaskPosterior reverse_task_posterior(const std::vector<MaskDistribution>& dists, std::vector<double> prior = {}) {
    if (dists.empty()) throw ValidationError("reverse_task_posterior: no distributions");
    const std::size_t n_tasks = dists.size();
    if (prior.empty()) prior = uniform_prior(n_tasks);
    if (prior.size() != n_tasks) throw ValidationError("prior length must equal the number of tasks");
    const double prior_sum = std::accumulate(prior.begin(), prior.end(), 0.0);
    if (std::abs(prior_sum - 1.0) > 1e-10 || std::any_of(prior.begin(), prior.end(), [](double p) { return p < 0.0; }))
        throw ValidationError("prior must be a probability vector");
    for (const auto& d : dists) {
        if (d.width != dists.front().width) throw ValidationError("reverse_task_posterior: mismatched mask widths");
        if (d.mode != dists.front().mode) throw ValidationError("reverse_task_posterior: mismatched likelihood modes");
    }

    TaskPosterior tp;
    tp.width = dists.front().width;
    tp.prior = prior;
    std::vector<std::vector<double>> dense;
    for (const auto& d : dists) dense.push_back(densify(d));
    const std::size_t n_masks = dense.front().size();

    tp.mask_marginal.assign(n_masks, 0.0);
    tp.full.assign(n_masks, std::vector<double>(n_tasks, 0.0));
    for (std::size_t m = 0; m < n_masks; ++m) {
        double z = 0.0;
        for (std::size_t t = 0; t < n_tasks; ++t) z += dense[t][m] * prior[t];
        tp.mask_marginal[m] = z;
        for (std::size_t t = 0; t < n_tasks; ++t) tp.full[m][t] = z > 0.0 ? dense[t][m] * prior[t] / z : prior[t];
    }

    const unsigned d = tp.width;
    tp.unit_marginal.assign(d, 0.0);
    tp.unit_on.assign(d, std::vector<double>(n_tasks, 0.0));
    tp.unit_off.assign(d, std::vector<double>(n_tasks, 0.0));
    for (std::size_t m = 0; m < n_masks; ++m) {
        const double w = tp.mask_marginal[m];
        for (unsigned i = 0; i < d; ++i) {
            auto& row = ((m >> i) & 1u) ? tp.unit_on[i] : tp.unit_off[i];
            if ((m >> i) & 1u) tp.unit_marginal[i] += w;
            for (std::size_t t = 0; t < n_tasks; ++t) row[t] += tp.full[m][t] * w;
        }
    }
    for (unsigned i = 0; i < d; ++i) {
        for (auto* row : {&tp.unit_on[i], &tp.unit_off[i]}) {
            const double z = std::accumulate(row->begin(), row->end(), 0.0);
            for (std::size_t t = 0; t < n_tasks; ++t) (*row)[t] = z > 0.0 ? (*row)[t] / z : prior[t];
        }
    }
    return tp;
}

inline double entropy_bits(const std::vector<double>& p) {
    double h = 0.0;
    for (double v : p) h -= plog2p(v);
    return std::max(h, 0.0);
}

/// I_n = 1 - H(t | .) / H(t | c) for full masks and for each unit.
inline MIReport normalized_mi(const TaskPosterior& tp) {
    const double h_prior = entropy_bits(tp.prior);
    if (!(h_prior > 0.0)) throw ValidationError("normalized_mi needs at least two tasks with positive prior");
    auto clip = [](double v) {
        if (v < -1e-12 || v > 1.0 + 1e-12) throw RuntimeError("normalized mutual information out of [0,1]");
        return std::clamp(v, 0.0, 1.0);
    };
    MIReport r;
    double h_cond = 0.0;
    for (std::size_t m = 0; m < tp.full.size(); ++m)
        if (tp.mask_marginal[m] > 0.0) h_cond += tp.mask_marginal[m] * entropy_bits(tp.full[m]);
    r.in_full = clip(1.0 - h_cond / h_prior);
    for (unsigned i = 0; i < tp.width; ++i) {
        const double on = tp.unit_marginal[i];
        const double h_unit = on * entropy_bits(tp.unit_on[i]) + (1.0 - on) * entropy_bits(tp.unit_off[i]);
        r.in_unit.push_back(clip(1.0 - h_unit / h_prior));
    }
    return r;
}

// --- output ---------------------------------------------------------------------

inline nlohmann::json metrics_json(const TaskRepresentationMetrics& m) {
    return {{"joint_entropy_bits", m.joint_entropy_bits},
            {"marginal_prob", m.marginal_prob},
            {"marginal_entropy_bits", m.marginal_entropy_bits},
            {"marginal_entropy_sum", m.marginal_entropy_sum},
            {"importance", m.importance},
            {"distributedness", m.distributedness},
            {"entropy_drop", m.entropy_drop}};
}

/// CSV: task,unit,marginal_prob,importance,In_unit.
inline std::string unit_table_csv(const std::vector<std::string>& task_names,
                                  const std::vector<TaskRepresentationMetrics>& metrics, const MIReport& mi) {
    std::ostringstream out;
    out << "task,unit,marginal_prob,importance,In_unit\n";
    for (std::size_t t = 0; t < metrics.size(); ++t)
        for (std::size_t i = 0; i < metrics[t].marginal_prob.size(); ++i)
            out << task_names.at(t) << ',' << i << ',' << fmt_double(metrics[t].marginal_prob[i]) << ','
                << fmt_double(metrics[t].importance[i]) << ',' << fmt_double(mi.in_unit.at(i)) << '\n';
    return out.str();
}

}  // namespace amdkit
