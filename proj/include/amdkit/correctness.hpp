#pragma once

#include <cmath>
#include <cstdint>

#include "errors.hpp"

namespace amdkit {

/// Confusion counts for one (task, mask) pair and the beta-smoothed rates
/// derived from them. Smoothed rates are Beta(correct+1, incorrect+1) means,
/// so they never touch 0 or 1.
struct CorrectnessEstimate {
    std::uint64_t pos_correct = 0;
    std::uint64_t pos_total = 0;
    std::uint64_t neg_correct = 0;
    std::uint64_t neg_total = 0;

    static CorrectnessEstimate from_counts(std::uint64_t pc, std::uint64_t pt, std::uint64_t nc, std::uint64_t nt) {
        if (pc > pt || nc > nt) throw ValidationError("correct count exceeds total");
        return {pc, pt, nc, nt};
    }

    double sensitivity() const {
        return (static_cast<double>(pos_correct) + 1.0) / (static_cast<double>(pos_total) + 2.0);
    }
    double specificity() const {
        return (static_cast<double>(neg_correct) + 1.0) / (static_cast<double>(neg_total) + 2.0);
    }
    double geo_mean() const { return std::sqrt(sensitivity() * specificity()); }

    /// Unsmoothed geometric mean; exactly 0 when no positive is recovered.
    /// A class with no positives at all counts as fully sensitive.
    double raw_geo_mean() const {
        const double sens = pos_total ? static_cast<double>(pos_correct) / static_cast<double>(pos_total) : 1.0;
        const double spec = neg_total ? static_cast<double>(neg_correct) / static_cast<double>(neg_total) : 1.0;
        return std::sqrt(sens * spec);
    }

    friend bool operator==(const CorrectnessEstimate&, const CorrectnessEstimate&) = default;
};

}  // namespace amdkit
