#include <amdkit/infotheory.hpp>

#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

namespace amdkit {
namespace {

// Exact distribution from probabilities indexed by packed mask (zeros dropped).
MaskDistribution dist_of(const std::vector<double>& p, LikelihoodMode mode = LikelihoodMode::odds_ratio) {
    const unsigned d = static_cast<unsigned>(std::log2(p.size()));
    std::vector<std::uint64_t> support;
    std::vector<double> lw;
    for (std::size_t m = 0; m < p.size(); ++m)
        if (p[m] > 0) {
            support.push_back(m);
            lw.push_back(std::log(p[m]));
        }
    return make_distribution(d, support, lw, ExactProvenance{}, 0, mode);
}

std::vector<double> point_mass(unsigned d, std::uint64_t at) {
    std::vector<double> p(std::size_t{1} << d, 0.0);
    p[at] = 1.0;
    return p;
}

// Packed order 00, 01, 10, 11.
const std::vector<double> kProduct{0.01, 0.09, 0.09, 0.81};

TEST(JointEntropy, UniformIsWidthBits) {
    for (unsigned d = 1; d <= 6; ++d)
        EXPECT_NEAR(joint_entropy(dist_of(std::vector<double>(std::size_t{1} << d, std::ldexp(1.0, -int(d))))), d, 1e-12);
}

TEST(JointEntropy, PointMassIsZero) { EXPECT_EQ(joint_entropy(dist_of(point_mass(3, 5))), 0.0); }

TEST(JointEntropy, TwoUnitExample) {
    double ref = 0;
    for (double p : kProduct) ref -= p * std::log2(p);
    EXPECT_NEAR(joint_entropy(dist_of(kProduct)), ref, 1e-12);
    EXPECT_NEAR(joint_entropy(dist_of(kProduct)), 0.938, 1e-3);
}

TEST(JointEntropy, RejectsUnnormalized) {
    auto d = dist_of(kProduct);
    d.log_z += 0.1;
    EXPECT_THROW(joint_entropy(d), ValidationError);
}

TEST(Marginals, Examples) {
    const auto m = marginals(dist_of(kProduct));
    EXPECT_NEAR(m[0], 0.9, 1e-12);
    EXPECT_NEAR(m[1], 0.9, 1e-12);
    for (double v : marginals(dist_of(point_mass(4, 15)))) EXPECT_EQ(v, 1.0);
    for (double v : marginals(dist_of(std::vector<double>(8, 0.125)))) EXPECT_NEAR(v, 0.5, 1e-15);
}

TEST(Marginals, UnitIndexFollowsBitPosition) {
    // Mass only on packed 1 = "10": unit 0 on, unit 1 off.
    const auto m = marginals(dist_of(point_mass(2, 1)));
    EXPECT_EQ(m[0], 1.0);
    EXPECT_EQ(m[1], 0.0);
}

TEST(MetricsBundle, ProductHasNoEntropyDrop) {
    const auto m = metrics_bundle(dist_of(kProduct));
    EXPECT_NEAR(m.entropy_drop, 0.0, 1e-9);
    EXPECT_NEAR(m.importance[0], 1.0 - (-0.9 * std::log2(0.9) - 0.1 * std::log2(0.1)), 1e-12);
}

TEST(MetricsBundle, XorFamily) {
    // odds 00:9, 01:1/9, 10:1/9, 11:9
    std::vector<double> odds{9, 1.0 / 9, 1.0 / 9, 9};
    const double z = std::accumulate(odds.begin(), odds.end(), 0.0);
    for (auto& v : odds) v /= z;
    const auto m = metrics_bundle(dist_of(odds));
    EXPECT_NEAR(m.marginal_prob[0], 0.5, 1e-12);
    EXPECT_NEAR(m.marginal_prob[1], 0.5, 1e-12);
    EXPECT_NEAR(m.marginal_entropy_sum, 2.0, 1e-12);
    EXPECT_NEAR(m.joint_entropy_bits, 1.095, 1e-3);
    EXPECT_NEAR(m.entropy_drop, 0.452, 1e-3);
    EXPECT_GT(m.entropy_drop, 0.4);
    EXPECT_NEAR(m.distributedness, 0.0, 1e-12);
}

TEST(MetricsBundle, PointMassConventions) {
    const auto m = metrics_bundle(dist_of(point_mass(5, 31)));
    for (double v : m.importance) EXPECT_EQ(v, 1.0);
    EXPECT_EQ(m.distributedness, 5.0);
    EXPECT_EQ(m.entropy_drop, 0.0);
}

TEST(MetricsBundle, InvariantsOnRandomDistributions) {
    Rng rng(99);
    for (int rep = 0; rep < 200; ++rep) {
        const unsigned d = 1 + unsigned(rng.index(6));
        std::vector<double> p(std::size_t{1} << d);
        for (auto& v : p) v = std::pow(rng.uniform(), 3.0);
        const double z = std::accumulate(p.begin(), p.end(), 0.0);
        for (auto& v : p) v /= z;
        const auto m = metrics_bundle(dist_of(p));
        EXPECT_LE(m.joint_entropy_bits, m.marginal_entropy_sum + 1e-9);
        EXPECT_NEAR(m.distributedness, d - m.marginal_entropy_sum, 1e-12);
        for (unsigned i = 0; i < d; ++i) {
            EXPECT_GE(m.marginal_entropy_bits[i], 0.0);
            EXPECT_LE(m.marginal_entropy_bits[i], 1.0);
            EXPECT_EQ(m.importance[i], 1.0 - m.marginal_entropy_bits[i]);
        }
        EXPECT_NEAR(m.entropy_drop, 1.0 - m.joint_entropy_bits / m.marginal_entropy_sum, 1e-12);
    }
}

TEST(Densify, SampledDistributionGetsPseudoCounts) {
    McmcSettings s;
    s.n_samples = 1000;
    s.burn_in = 0;
    const auto chain = posterior_mcmc([](std::uint64_t m) { return m == 3 ? 50.0 : 0.0; }, 2, 0,
                                      LikelihoodMode::odds_ratio, s);
    const auto dense = densify(chain);
    ASSERT_EQ(dense.size(), 4u);
    EXPECT_NEAR(std::accumulate(dense.begin(), dense.end(), 0.0), 1.0, 1e-12);
    for (double v : dense) EXPECT_GT(v, 0.0);
}

TEST(ReverseInference, DisjointPointMassesAreFullyInformative) {
    const auto tp = reverse_task_posterior({dist_of(point_mass(2, 3)), dist_of(point_mass(2, 0))});
    EXPECT_EQ(tp.full[3][0], 1.0);
    EXPECT_EQ(tp.full[0][1], 1.0);
    EXPECT_EQ(entropy_bits(tp.full[3]), 0.0);
    const auto mi = normalized_mi(tp);
    EXPECT_NEAR(mi.in_full, 1.0, 1e-12);
    for (double v : mi.in_unit) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(ReverseInference, IdenticalDistributionsCarryNoInformation) {
    const auto d = dist_of(kProduct);
    const auto tp = reverse_task_posterior({d, d, d});
    for (const auto& row : tp.full)
        for (double v : row) EXPECT_NEAR(v, 1.0 / 3, 1e-12);
    const auto mi = normalized_mi(tp);
    EXPECT_NEAR(mi.in_full, 0.0, 1e-12);
    for (double v : mi.in_unit) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(ReverseInference, OneUnitTwoTasksAgainstBruteForce) {
    // P(m=1|t1) = 0.9, P(m=1|t2) = 0.5, uniform prior.
    const auto tp = reverse_task_posterior({dist_of({0.1, 0.9}), dist_of({0.5, 0.5})});
    EXPECT_NEAR(tp.unit_on[0][0], 0.9 / 1.4, 1e-12);
    EXPECT_NEAR(tp.unit_on[0][0], 0.6429, 1e-4);
    EXPECT_NEAR(tp.full[1][0], 0.9 / 1.4, 1e-12);

    const double joint[2][2] = {{0.5 * 0.1, 0.5 * 0.9}, {0.5 * 0.5, 0.5 * 0.5}};  // [t][m]
    double h_cond = 0;
    for (int m = 0; m < 2; ++m) {
        const double pm = joint[0][m] + joint[1][m];
        for (int t = 0; t < 2; ++t) h_cond -= joint[t][m] * std::log2(joint[t][m] / pm);
    }
    const auto mi = normalized_mi(tp);
    EXPECT_NEAR(mi.in_unit[0], 1.0 - h_cond, 1e-12);
    EXPECT_NEAR(mi.in_full, 1.0 - h_cond, 1e-12);
}

TEST(ReverseInference, PointMassPriorPinsTheTask) {
    const auto tp = reverse_task_posterior({dist_of(kProduct), dist_of({0.25, 0.25, 0.25, 0.25})}, {0.0, 1.0});
    for (const auto& row : tp.full) {
        EXPECT_EQ(row[0], 0.0);
        EXPECT_EQ(row[1], 1.0);
    }
    EXPECT_THROW(normalized_mi(tp), ValidationError);
}

TEST(ReverseInference, RowsSumToOneAndBoundsHold) {
    Rng rng(17);
    for (int rep = 0; rep < 50; ++rep) {
        const unsigned d = 1 + unsigned(rng.index(4));
        const std::size_t T = 2 + rng.index(4);
        std::vector<MaskDistribution> dists;
        for (std::size_t t = 0; t < T; ++t) {
            std::vector<double> p(std::size_t{1} << d);
            for (auto& v : p) v = std::pow(rng.uniform(), 4.0) + 1e-6;
            const double z = std::accumulate(p.begin(), p.end(), 0.0);
            for (auto& v : p) v /= z;
            dists.push_back(dist_of(p));
        }
        std::vector<double> prior(T);
        for (auto& v : prior) v = rng.uniform(0.1, 1.0);
        const double z = std::accumulate(prior.begin(), prior.end(), 0.0);
        for (auto& v : prior) v /= z;
        const auto tp = reverse_task_posterior(dists, prior);
        for (const auto& row : tp.full) EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-10);
        for (unsigned i = 0; i < d; ++i) {
            EXPECT_NEAR(std::accumulate(tp.unit_on[i].begin(), tp.unit_on[i].end(), 0.0), 1.0, 1e-10);
            EXPECT_NEAR(std::accumulate(tp.unit_off[i].begin(), tp.unit_off[i].end(), 0.0), 1.0, 1e-10);
        }
        const auto mi = normalized_mi(tp);
        EXPECT_GE(mi.in_full, 0.0);
        EXPECT_LE(mi.in_full, 1.0);
        for (double v : mi.in_unit) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
}

TEST(ReverseInference, RejectsMismatchedInputs) {
    EXPECT_THROW(reverse_task_posterior({dist_of(kProduct), dist_of({0.5, 0.5})}), ValidationError);
    EXPECT_THROW(reverse_task_posterior({dist_of(kProduct), dist_of(kProduct, LikelihoodMode::standard_bayes)}),
                 ValidationError);
    EXPECT_THROW(reverse_task_posterior({dist_of(kProduct), dist_of(kProduct)}, {0.5, 0.6}), ValidationError);
}

TEST(Output, UnitTableAndJson) {
    const auto m = metrics_bundle(dist_of(kProduct));
    const auto j = metrics_json(m);
    EXPECT_TRUE(j.contains("entropy_drop"));
    EXPECT_EQ(j["importance"].size(), 2u);
    MIReport mi{0.5, {0.25, 0.75}};
    const auto csv = unit_table_csv({"A"}, {m}, mi);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "task,unit,marginal_prob,importance,In_unit");
    EXPECT_NE(csv.find("\nA,1,"), std::string::npos);
}

}  // namespace
}  // namespace amdkit
