#include <doctest.h>

#include <cmath>
#include <map>

#include "prefopt/dataset.hpp"
#include "prefopt/errors.hpp"
#include "prefopt/logspace.hpp"

using namespace prefopt;

namespace {

LatentRewardTable table_1x2(double r0, double r1) {
    return {PromptSpace{1, 2}, {r0, r1}};
}

} // namespace

TEST_CASE("sample_pair winner frequency follows the sigmoid of the reward gap") {
    struct Case {
        double gap;
        double expect;
    };
    const Case cases[] = {{0.0, 0.5}, {1.0, sigmoid(1.0)}, {50.0, 1.0}};
    for (const auto& c : cases) {
        LatentRewardTable t = table_1x2(c.gap, 0.0);
        Rng rng(31);
        int wins = 0;
        const int n = 10000;
        for (int i = 0; i < n; ++i)
            if (sample_pair(t, 0, 0, 1, rng).winner == 0)
                ++wins;
        double freq = static_cast<double>(wins) / n;
        if (c.gap == 50.0)
            CHECK(wins == n);
        else
            CHECK(std::fabs(freq - c.expect) <= 0.02);
    }
}

TEST_CASE("sample_pair frequencies within 3 standard errors over random gaps") {
    Rng gap_rng(32);
    const int n = 10000;
    for (int trial = 0; trial < 20; ++trial) {
        double gap = gap_rng.next_uniform(-3.0, 3.0);
        LatentRewardTable t = table_1x2(gap, 0.0);
        Rng rng(1000 + trial);
        int wins = 0;
        for (int i = 0; i < n; ++i)
            if (sample_pair(t, 0, 0, 1, rng).winner == 0)
                ++wins;
        double p = sigmoid(gap);
        double se = std::sqrt(p * (1.0 - p) / n);
        CHECK(std::fabs(static_cast<double>(wins) / n - p) <= 3.0 * se + 1e-9);
    }
}

TEST_CASE("sample_pair rejects identical candidates") {
    LatentRewardTable t = table_1x2(0.0, 0.0);
    Rng rng(33);
    CHECK_THROWS_AS(sample_pair(t, 0, 1, 1, rng), invalid_record_error);
}

TEST_CASE("two-candidate lists reduce to the pair sampler distribution") {
    LatentRewardTable t = table_1x2(1.0, 0.0);
    Rng rng(34);
    const int n = 10000;
    int first_top = 0;
    for (int i = 0; i < n; ++i) {
        const int cands[2] = {0, 1};
        if (sample_list(t, 0, cands, rng).ranking[0] == 0)
            ++first_top;
    }
    CHECK(std::fabs(static_cast<double>(first_top) / n - sigmoid(1.0)) <= 0.02);
}

TEST_CASE("equal rewards make all 3-item orderings equally likely") {
    LatentRewardTable t{PromptSpace{1, 3}, {0.7, 0.7, 0.7}};
    Rng rng(35);
    std::map<std::vector<int>, int> counts;
    const int n = 60000;
    const int cands[3] = {0, 1, 2};
    for (int i = 0; i < n; ++i)
        counts[sample_list(t, 0, cands, rng).ranking]++;
    REQUIRE(counts.size() == 6);
    for (const auto& [ranking, c] : counts)
        CHECK(std::fabs(static_cast<double>(c) / n - 1.0 / 6.0) <= 0.02);
}

TEST_CASE("ranking probability matches the Plackett-Luce product for rewards (2,1,0)") {
    LatentRewardTable t{PromptSpace{1, 3}, {2.0, 1.0, 0.0}};
    double p_closed = (std::exp(2.0) / (std::exp(2.0) + std::exp(1.0) + 1.0)) *
                      (std::exp(1.0) / (std::exp(1.0) + 1.0));
    Rng rng(36);
    const int n = 60000;
    const int cands[3] = {0, 1, 2};
    int hits = 0;
    for (int i = 0; i < n; ++i) {
        auto r = sample_list(t, 0, cands, rng).ranking;
        if (r[0] == 0 && r[1] == 1 && r[2] == 2)
            ++hits;
    }
    CHECK(std::fabs(static_cast<double>(hits) / n - p_closed) <= 0.02);
}

TEST_CASE("top-1 marginal of sample_list equals the reward softmax") {
    LatentRewardTable t{PromptSpace{1, 4}, {0.3, -0.5, 1.2, 0.0}};
    std::vector<double> logits = t.values;
    std::vector<double> lp(4);
    log_softmax(logits, lp);
    Rng rng(37);
    const int n = 40000;
    const int cands[4] = {0, 1, 2, 3};
    int top[4] = {0, 0, 0, 0};
    for (int i = 0; i < n; ++i)
        top[sample_list(t, 0, cands, rng).ranking[0]]++;
    for (int y = 0; y < 4; ++y) {
        double p = std::exp(lp[y]);
        double se = std::sqrt(p * (1.0 - p) / n);
        CHECK(std::fabs(static_cast<double>(top[y]) / n - p) <= 3.0 * se + 1e-9);
    }
}

TEST_CASE("sample_list rejects duplicates") {
    LatentRewardTable t{PromptSpace{1, 3}, {0.0, 0.0, 0.0}};
    Rng rng(38);
    const int dup[3] = {0, 1, 1};
    CHECK_THROWS_AS(sample_list(t, 0, dup, rng), invalid_record_error);
}

TEST_CASE("generate_dataset is deterministic and validates its spec") {
    GenSpec spec;
    spec.prompts = 5;
    spec.k = 4;
    spec.pairs_per_prompt = 3;
    spec.seed = 7;
    GenResult a = generate_dataset(spec);
    GenResult b = generate_dataset(spec);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i)
        CHECK(a.records[i] == b.records[i]);
    CHECK(a.records.size() == 15);

    GenSpec bad = spec;
    bad.pairs_per_prompt = 7; // k*(k-1)/2 = 6
    CHECK_THROWS_AS(generate_dataset(bad), config_error);
}

TEST_CASE("scored_pair generation attaches noisy latent-reward scores") {
    GenSpec spec;
    spec.prompts = 3;
    spec.k = 4;
    spec.pairs_per_prompt = 2;
    spec.variant = RecordVariant::ScoredPair;
    spec.score_noise_std = 0.0; // scores equal r* exactly
    spec.seed = 9;
    GenResult g = generate_dataset(spec);
    for (const auto& r : g.records) {
        CHECK(r.variant == RecordVariant::ScoredPair);
        CHECK(r.score_w == g.reward.at(r.prompt, r.winner));
        CHECK(r.score_l == g.reward.at(r.prompt, r.loser));
    }
}
