#include <amdkit/mask.hpp>
#include <amdkit/rng.hpp>
#include <amdkit/transport.hpp>

#include "oracles.hpp"

#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

namespace amdkit {
namespace {

using oracle::reference_transport;
using oracle::enumerate_transport;

std::vector<double> random_simplex(Rng& rng, std::size_t n) {
    std::vector<double> p(n);
    for (auto& v : p) v = rng.uniform() + (rng.bernoulli(0.2) ? 0.0 : 0.05);
    const double s = std::accumulate(p.begin(), p.end(), 0.0);
    for (auto& v : p) v /= s;
    return p;
}

void expect_marginals(const TransportPlan& plan, const std::vector<double>& a, const std::vector<double>& b,
                      double tol = 1e-9) {
    const auto rs = plan.row_sums(), cs = plan.col_sums();
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(rs[i], a[i], tol);
    for (std::size_t j = 0; j < b.size(); ++j) EXPECT_NEAR(cs[j], b[j], tol);
    for (const auto& c : plan.cells) EXPECT_GE(c.mass, 0.0);
}

TEST(TransportSimplex, SingleCell) {
    const std::vector<double> a{1.0}, b{1.0};
    const auto plan = transport_simplex(std::span<const double>(a), std::span<const double>(b),
                                        [](std::size_t, std::size_t) { return 2.0; });
    EXPECT_EQ(plan.cost, 2.0);
    EXPECT_EQ(plan.cells.size(), 1u);
}

TEST(TransportSimplex, AntiDiagonalTwoByTwo) {
    // Uniform on {00,11} vs uniform on {01,10}: every coupling costs exactly 1.
    const std::vector<std::uint64_t> sp{0, 3}, sq{1, 2};
    const std::vector<double> a{0.5, 0.5}, b{0.5, 0.5};
    auto cost = [&](std::size_t i, std::size_t j) { return double(hamming(sp[i], sq[j])); };
    const auto plan = transport_simplex(std::span<const double>(a), std::span<const double>(b), cost);
    EXPECT_NEAR(plan.cost, 1.0, 1e-15);
    expect_marginals(plan, a, b);
}

TEST(TransportSimplex, MatchesReferenceLpOnRandomInstances) {
    Rng rng(2024);
    for (int rep = 0; rep < 300; ++rep) {
        const std::size_t n = 1 + rng.index(7), m = 1 + rng.index(7);
        const auto a = random_simplex(rng, n), b = random_simplex(rng, m);
        std::vector<std::vector<double>> c(n, std::vector<double>(m));
        const bool hamming_like = rng.bernoulli(0.5);
        for (auto& row : c)
            for (auto& v : row) v = hamming_like ? double(rng.index(5)) : rng.uniform(0, 3);
        const auto plan = transport_simplex(std::span<const double>(a), std::span<const double>(b),
                                            [&](std::size_t i, std::size_t j) { return c[i][j]; });
        EXPECT_NEAR(plan.cost, reference_transport(a, b, c), 1e-9) << "rep " << rep;
        expect_marginals(plan, a, b);
        double recomputed = 0;
        for (const auto& cell : plan.cells) recomputed += cell.mass * c[cell.row][cell.col];
        EXPECT_NEAR(recomputed, plan.cost, 1e-12);
    }
}

TEST(TransportSimplex, MatchesCouplingEnumerationOnSmallSupports) {
    Rng rng(77);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t n = 1 + rng.index(4), m = 1 + rng.index(4);
        const auto a = random_simplex(rng, n), b = random_simplex(rng, m);
        std::vector<std::vector<double>> c(n, std::vector<double>(m));
        for (auto& row : c)
            for (auto& v : row) v = double(rng.index(4));
        const auto plan = transport_simplex(std::span<const double>(a), std::span<const double>(b),
                                            [&](std::size_t i, std::size_t j) { return c[i][j]; });
        EXPECT_NEAR(plan.cost, enumerate_transport(a, b, c), 1e-9) << "rep " << rep;
    }
}

TEST(TransportSimplex, HeavilyDegenerateInputs) {
    // Equal masses everywhere make almost every basis degenerate.
    for (std::size_t n : {4u, 8u, 16u}) {
        const std::vector<double> a(n, 1.0 / double(n));
        auto cost = [&](std::size_t i, std::size_t j) { return double(hamming(i, (j * 5 + 3) % n)); };
        const auto plan = transport_simplex(std::span<const double>(a), std::span<const double>(a), cost);
        EXPECT_NEAR(plan.cost, 0.0, 1e-12) << n;  // a permutation of the same support
        expect_marginals(plan, a, a);
    }
}

TEST(TransportSimplex, LargerHammingCubeMatchesReference) {
    Rng rng(5);
    for (int rep = 0; rep < 5; ++rep) {
        const auto a = random_simplex(rng, 16), b = random_simplex(rng, 16);
        std::vector<std::vector<double>> c(16, std::vector<double>(16));
        for (std::size_t i = 0; i < 16; ++i)
            for (std::size_t j = 0; j < 16; ++j) c[i][j] = hamming(i, j);
        const auto plan = transport_simplex(std::span<const double>(a), std::span<const double>(b),
                                            [&](std::size_t i, std::size_t j) { return c[i][j]; });
        EXPECT_NEAR(plan.cost, reference_transport(a, b, c), 1e-9);
    }
}

TEST(TransportSimplex, RejectsBadMarginals) {
    const std::vector<double> a{0.5, 0.5}, b{0.7, 0.7}, neg{1.5, -0.5};
    auto c = [](std::size_t, std::size_t) { return 1.0; };
    EXPECT_THROW(transport_simplex(std::span<const double>(a), std::span<const double>(b), c), ValidationError);
    EXPECT_THROW(transport_simplex(std::span<const double>(neg), std::span<const double>(a), c), ValidationError);
}

TEST(Sinkhorn, ApproachesExactCostAtSmallEpsilon) {
    Rng rng(8);
    const auto a = random_simplex(rng, 8), b = random_simplex(rng, 8);
    auto cost = [](std::size_t i, std::size_t j) { return double(hamming(i, j)); };
    const double exact = transport_simplex(std::span<const double>(a), std::span<const double>(b), cost).cost;
    SinkhornSettings s;
    s.epsilon = 0.01;
    s.max_iterations = 20000;
    const auto plan = sinkhorn_transport(std::span<const double>(a), std::span<const double>(b), cost, s);
    EXPECT_NEAR(plan.cost, exact, 0.05);
    expect_marginals(plan, a, b, 1e-6);
}

}  // namespace
}  // namespace amdkit
