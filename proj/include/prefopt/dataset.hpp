#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "prefopt/records.hpp"
#include "prefopt/rng.hpp"

namespace prefopt {

// Ground-truth annotator reward; drives the Bradley-Terry / Plackett-Luce
// samplers and the win-rate proxy.
struct LatentRewardTable {
    PromptSpace space;
    std::vector<double> values; // row-major P*K

    double at(int x, int y) const { return values[static_cast<std::size_t>(x) * space.k + y]; }
    void validate() const;

    void save(const std::string& path) const;
    static LatentRewardTable load(const std::string& path);
};

// Winner is y_a with probability sigma(r*(x,y_a) - r*(x,y_b)).
PreferenceRecord sample_pair(const LatentRewardTable& reward, int x, int y_a, int y_b, Rng& rng);

// Plackett-Luce: repeatedly draw the next-ranked item from the softmax of
// r* over the remaining candidates.
PreferenceRecord sample_list(const LatentRewardTable& reward, int x,
                             std::span<const int> candidates, Rng& rng);

struct GenSpec {
    int prompts = 0;
    int k = 0;
    int pairs_per_prompt = 0; // record count per prompt for every variant
    RecordVariant variant = RecordVariant::Pair;
    int list_len = 3;             // List only
    double reward_scale = 1.0;    // r* ~ scale * N(0,1)
    double score_noise_std = 0.5; // ScoredPair: s = r* + std * N(0,1)
    std::uint64_t seed = 0;

    void validate() const;
};

struct GenResult {
    LatentRewardTable reward;
    std::vector<PreferenceRecord> records;
};

GenResult generate_dataset(const GenSpec& spec);

} // namespace prefopt
