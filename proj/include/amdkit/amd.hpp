#pragma once

// Ablation mask distributions: P(mask | task, correct) under a uniform mask
// prior, with likelihood either the odds p/(1-p) of the smoothed geometric-mean
// accuracy p, or p itself ("standard Bayes"). All weights live in log space.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <variant>
#include <vector>

#include "correctness.hpp"
#include "datasets.hpp"
#include "errors.hpp"
#include "hash.hpp"
#include "io.hpp"
#include "isc.hpp"
#include "mask.hpp"
#include "numeric.hpp"
#include "rng.hpp"

namespace amdkit {

enum class LikelihoodMode { odds_ratio, standard_bayes };

inline const char* to_string(LikelihoodMode m) {
    return m == LikelihoodMode::odds_ratio ? "odds_ratio" : "standard_bayes";
}

inline LikelihoodMode parse_mode(const std::string& s) {
    if (s == "odds_ratio" || s == "odds") return LikelihoodMode::odds_ratio;
    if (s == "standard_bayes" || s == "standard") return LikelihoodMode::standard_bayes;
    throw ValidationError("unknown likelihood mode '" + s + "'");
}

/// Log-likelihood of an accuracy p in (0,1).
inline double log_likelihood(double p, LikelihoodMode mode) {
    if (!(p > 0.0 && p < 1.0)) throw ValidationError("accuracy must lie strictly inside (0,1)");
    return mode == LikelihoodMode::odds_ratio ? std::log(p) - std::log1p(-p) : std::log(p);
}

inline double log_likelihood(const CorrectnessEstimate& est, LikelihoodMode mode) {
    return log_likelihood(est.geo_mean(), mode);
}

/// Evaluates one (task, mask) pair on a trained model. Refuses a dataset whose
/// fingerprint differs from the one the model was trained on.
inline CorrectnessEstimate task_mask_accuracy(const ISCModel& model, const Dataset& ds, std::size_t task,
                                              const Mask& mask) {
    model.check_dataset(ds);
    return MaskEvaluator(model, ds).evaluate(task, mask);
}

// --- accuracy grid --------------------------------------------------------------

/// Correctness counts for every task on a shared, ascending set of masks.
/// Dense grids hold all 2^d masks so mask bits double as the index.
class AccuracyGrid {
public:
    AccuracyGrid() = default;
    AccuracyGrid(unsigned width, std::size_t n_tasks, std::vector<std::uint64_t> masks, std::uint64_t model_hash)
        : width_(width), model_hash_(model_hash), masks_(std::move(masks)) {
        std::sort(masks_.begin(), masks_.end());
        masks_.erase(std::unique(masks_.begin(), masks_.end()), masks_.end());
        cells_.assign(n_tasks, std::vector<CorrectnessEstimate>(masks_.size()));
    }

    static AccuracyGrid dense(unsigned width, std::size_t n_tasks, std::uint64_t model_hash = 0) {
        if (width > 30) throw ValidationError("dense grid width too large");
        std::vector<std::uint64_t> all(std::size_t{1} << width);
        for (std::size_t m = 0; m < all.size(); ++m) all[m] = m;
        return {width, n_tasks, std::move(all), model_hash};
    }

    unsigned width() const { return width_; }
    std::size_t n_tasks() const { return cells_.size(); }
    std::size_t n_masks() const { return masks_.size(); }
    bool is_dense() const { return width_ <= 30 && masks_.size() == (std::size_t{1} << width_); }
    std::uint64_t model_hash() const { return model_hash_; }
    const std::vector<std::uint64_t>& masks() const { return masks_; }

    std::size_t index_of(std::uint64_t mask) const {
        if (is_dense()) return static_cast<std::size_t>(mask);
        const auto it = std::lower_bound(masks_.begin(), masks_.end(), mask);
        if (it == masks_.end() || *it != mask) throw ValidationError("mask not in grid");
        return static_cast<std::size_t>(it - masks_.begin());
    }

    CorrectnessEstimate& at(std::size_t task, std::size_t index) { return cells_.at(task).at(index); }
    const CorrectnessEstimate& at(std::size_t task, std::size_t index) const { return cells_.at(task).at(index); }
    const CorrectnessEstimate& lookup(std::size_t task, std::uint64_t mask) const { return at(task, index_of(mask)); }

    /// Smoothed geometric-mean accuracy of one task across the grid's masks.
    std::vector<double> geo_means(std::size_t task) const {
        std::vector<double> out;
        out.reserve(masks_.size());
        for (const auto& c : cells_.at(task)) out.push_back(c.geo_mean());
        return out;
    }

    bool operator==(const AccuracyGrid&) const = default;

private:
    unsigned width_ = 0;
    std::uint64_t model_hash_ = 0;
    std::vector<std::uint64_t> masks_;
    std::vector<std::vector<CorrectnessEstimate>> cells_;  // [task][mask index]
};

/// Fills a grid for the given masks. Masks are split into contiguous blocks
/// across threads; each cell is written by exactly one thread.
inline AccuracyGrid evaluate_grid(const ISCModel& model, const Dataset& ds, std::vector<std::uint64_t> masks,
                                  unsigned n_threads = 0) {
    model.check_dataset(ds);
    const unsigned d = model.mask_width();
    AccuracyGrid grid(d, model.n_tasks, std::move(masks), model_hash(model));
    const MaskEvaluator eval(model, ds);
    if (n_threads == 0) n_threads = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t n = grid.n_masks();
    n_threads = static_cast<unsigned>(std::min<std::size_t>(n_threads, std::max<std::size_t>(n, 1)));
    auto work = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t k = lo; k < hi; ++k)
            for (std::size_t t = 0; t < model.n_tasks; ++t) grid.at(t, k) = eval.evaluate(t, Mask(d, grid.masks()[k]));
    };
    if (n_threads <= 1) {
        work(0, n);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < n_threads; ++w) pool.emplace_back(work, n * w / n_threads, n * (w + 1) / n_threads);
    }
    return grid;
}

inline AccuracyGrid evaluate_dense_grid(const ISCModel& model, const Dataset& ds, unsigned n_threads = 0) {
    const unsigned d = model.mask_width();
    if (d > 30) throw ValidationError("dense grid width too large");
    std::vector<std::uint64_t> all(std::size_t{1} << d);
    for (std::size_t m = 0; m < all.size(); ++m) all[m] = m;
    return evaluate_grid(model, ds, std::move(all), n_threads);
}

/// Cache layout: a "# amdkit-accuracy-grid/1 width=<d> tasks=<T> model=<hex>"
/// line, then CSV rows task,mask,pos_correct,pos_total,neg_correct,neg_total
/// with the mask as a d-character 0/1 string.
inline std::string grid_csv(const AccuracyGrid& g) {
    std::ostringstream out;
    out << "# amdkit-accuracy-grid/1 width=" << g.width() << " tasks=" << g.n_tasks() << " model=" << hex64(g.model_hash())
        << "\n";
    out << "task,mask,pos_correct,pos_total,neg_correct,neg_total\n";
    for (std::size_t t = 0; t < g.n_tasks(); ++t)
        for (std::size_t k = 0; k < g.n_masks(); ++k) {
            const auto& c = g.at(t, k);
            out << t << ',' << Mask(g.width(), g.masks()[k]).to_string() << ',' << c.pos_correct << ',' << c.pos_total
                << ',' << c.neg_correct << ',' << c.neg_total << '\n';
        }
    return out.str();
}

inline AccuracyGrid grid_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    unsigned width = 0;
    std::size_t tasks = 0;
    char model_hex[17] = {};
    if (std::sscanf(line.c_str(), "# amdkit-accuracy-grid/1 width=%u tasks=%zu model=%16s", &width, &tasks, model_hex) != 3)
        throw ValidationError("accuracy grid cache has unexpected header");
    std::getline(in, line);
    struct Row {
        std::size_t task;
        std::uint64_t mask;
        CorrectnessEstimate c;
    };
    std::vector<Row> rows;
    std::vector<std::uint64_t> masks;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell[6];
        for (auto& c : cell) std::getline(ls, c, ',');
        Row r{std::stoul(cell[0]), Mask::parse(cell[1]).bits,
              CorrectnessEstimate::from_counts(std::stoull(cell[2]), std::stoull(cell[3]), std::stoull(cell[4]),
                                               std::stoull(cell[5]))};
        if (r.task >= tasks) throw ValidationError("accuracy grid row has task out of range");
        if (r.task == 0) masks.push_back(r.mask);
        rows.push_back(r);
    }
    AccuracyGrid g(width, tasks, masks, std::stoull(model_hex, nullptr, 16));
    if (rows.size() != tasks * g.n_masks()) throw ValidationError("accuracy grid cache is incomplete");
    for (const auto& r : rows) g.at(r.task, g.index_of(r.mask)) = r.c;
    return g;
}

// --- mask distributions -------------------------------------------------------------

struct ExactProvenance {
    friend bool operator==(const ExactProvenance&, const ExactProvenance&) = default;
};

struct McmcProvenance {
    std::uint64_t n_samples = 0;
    std::uint64_t burn_in = 0;
    std::uint64_t seed = 0;
    double acceptance_rate = 0.0;
    friend bool operator==(const McmcProvenance&, const McmcProvenance&) = default;
};

using Provenance = std::variant<ExactProvenance, McmcProvenance>;

struct MaskDistribution {
    unsigned width = 0;
    std::vector<std::uint64_t> support;  // packed masks, ascending
    std::vector<double> log_weights;     // unnormalized, natural log
    double log_z = 0.0;
    Provenance provenance;
    std::size_t task = 0;
    LikelihoodMode mode = LikelihoodMode::odds_ratio;

    bool is_exact() const { return std::holds_alternative<ExactProvenance>(provenance); }
    std::size_t size() const { return support.size(); }
    double probability(std::size_t k) const { return std::exp(log_weights[k] - log_z); }

    std::vector<double> probabilities() const {
        std::vector<double> p(support.size());
        for (std::size_t k = 0; k < p.size(); ++k) p[k] = probability(k);
        return p;
    }

    /// Throws unless probabilities sum to 1 within tol.
    void check_normalized(double tol = 1e-10) const {
        if (support.size() != log_weights.size()) throw ValidationError("support/log_weights size mismatch");
        double s = 0.0;
        for (std::size_t k = 0; k < support.size(); ++k) s += probability(k);
        if (std::abs(s - 1.0) > tol) throw ValidationError("mask distribution is not normalized");
    }
};

/// Builds a normalized distribution from per-mask log weights.
inline MaskDistribution make_distribution(unsigned width, std::vector<std::uint64_t> support,
                                          std::vector<double> log_weights, Provenance prov, std::size_t task,
                                          LikelihoodMode mode) {
    MaskDistribution d;
    d.width = width;
    d.support = std::move(support);
    d.log_weights = std::move(log_weights);
    d.log_z = log_sum_exp(d.log_weights);
    d.provenance = prov;
    d.task = task;
    d.mode = mode;
    return d;
}

inline constexpr unsigned kDefaultExactLimit = 16;

/// Full enumeration from a dense accuracy grid.
inline MaskDistribution posterior_exact(const AccuracyGrid& grid, std::size_t task, LikelihoodMode mode,
                                        unsigned exact_limit = kDefaultExactLimit) {
    if (grid.width() > exact_limit)
        throw ValidationError("mask width " + std::to_string(grid.width()) + " exceeds exact limit " +
                              std::to_string(exact_limit) + "; use posterior_mcmc");
    if (!grid.is_dense()) throw ValidationError("posterior_exact needs a dense accuracy grid");
    std::vector<double> lw(grid.n_masks());
    for (std::size_t k = 0; k < lw.size(); ++k) lw[k] = log_likelihood(grid.at(task, k), mode);
    return make_distribution(grid.width(), grid.masks(), std::move(lw), ExactProvenance{}, task, mode);
}

inline MaskDistribution posterior_exact(const ISCModel& model, const Dataset& ds, std::size_t task, LikelihoodMode mode,
                                        unsigned exact_limit = kDefaultExactLimit) {
    if (model.mask_width() > exact_limit)
        throw ValidationError("mask width " + std::to_string(model.mask_width()) + " exceeds exact limit " +
                              std::to_string(exact_limit) + "; use posterior_mcmc");
    model.check_dataset(ds);
    const MaskEvaluator eval(model, ds);
    const unsigned d = model.mask_width();
    std::vector<std::uint64_t> support(std::size_t{1} << d);
    std::vector<double> lw(support.size());
    for (std::size_t m = 0; m < support.size(); ++m) {
        support[m] = m;
        lw[m] = log_likelihood(eval.evaluate(task, Mask(d, m)), mode);
    }
    return make_distribution(d, std::move(support), std::move(lw), ExactProvenance{}, task, mode);
}

struct McmcSettings {
    std::uint64_t n_samples = 200000;
    std::uint64_t burn_in = 10000;
    std::uint64_t seed = 7;
};

/// Single-bit-flip Metropolis chain over {0,1}^d started from the all-ones
/// mask. `log_lik(mask_bits)` is evaluated at most once per distinct mask.
/// The result is the empirical distribution of post-burn-in states.
template <typename LogLik>
MaskDistribution posterior_mcmc(LogLik&& log_lik, unsigned width, std::size_t task, LikelihoodMode mode,
                                const McmcSettings& s) {
    if (s.n_samples < 1) throw ValidationError("n_samples must be >= 1");
    if (width == 0 || width > kMaxPackedWidth) throw ValidationError("mask width must be in [1, 63]");
    std::unordered_map<std::uint64_t, double> cache;
    auto ll = [&](std::uint64_t m) {
        auto it = cache.find(m);
        if (it != cache.end()) return it->second;
        const double v = log_lik(m);
        cache.emplace(m, v);
        return v;
    };
    Rng rng(s.seed);
    std::uint64_t state = Mask::all_ones(width).bits;
    double state_ll = ll(state);
    std::unordered_map<std::uint64_t, std::uint64_t> counts;
    std::uint64_t accepted = 0;
    const std::uint64_t total = s.burn_in + s.n_samples;
    for (std::uint64_t step = 0; step < total; ++step) {
        const std::uint64_t proposal = state ^ (std::uint64_t{1} << rng.index(width));
        const double proposal_ll = ll(proposal);
        const double delta = proposal_ll - state_ll;
        if (delta >= 0.0 || std::log(rng.uniform()) < delta) {
            state = proposal;
            state_ll = proposal_ll;
            ++accepted;
        }
        if (step >= s.burn_in) ++counts[state];
    }
    std::vector<std::uint64_t> support;
    support.reserve(counts.size());
    for (const auto& [m, c] : counts) support.push_back(m);
    std::sort(support.begin(), support.end());
    std::vector<double> lw;
    lw.reserve(support.size());
    for (auto m : support) lw.push_back(std::log(static_cast<double>(counts[m])));
    McmcProvenance prov{s.n_samples, s.burn_in, s.seed, static_cast<double>(accepted) / static_cast<double>(total)};
    auto dist = make_distribution(width, std::move(support), std::move(lw), prov, task, mode);
    dist.log_z = std::log(static_cast<double>(s.n_samples));
    return dist;
}

inline MaskDistribution posterior_mcmc(const AccuracyGrid& grid, std::size_t task, LikelihoodMode mode,
                                       const McmcSettings& s) {
    return posterior_mcmc([&](std::uint64_t m) { return log_likelihood(grid.lookup(task, m), mode); }, grid.width(),
                          task, mode, s);
}

inline MaskDistribution posterior_mcmc(const ISCModel& model, const Dataset& ds, std::size_t task, LikelihoodMode mode,
                                       const McmcSettings& s) {
    model.check_dataset(ds);
    const MaskEvaluator eval(model, ds);
    const unsigned d = model.mask_width();
    return posterior_mcmc([&](std::uint64_t m) { return log_likelihood(eval.evaluate(task, Mask(d, m)), mode); }, d,
                          task, mode, s);
}

/// Posterior CSV: mask_bits,log_weight,probability.
inline std::string posterior_csv(const MaskDistribution& dist) {
    std::ostringstream out;
    out << "mask_bits,log_weight,probability\n";
    for (std::size_t k = 0; k < dist.size(); ++k)
        out << Mask(dist.width, dist.support[k]).to_string() << ',' << fmt_double(dist.log_weights[k]) << ','
            << fmt_double(dist.probability(k)) << '\n';
    return out.str();
}

}  // namespace amdkit
