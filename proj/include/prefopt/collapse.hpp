#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prefopt/dataset.hpp"
#include "prefopt/trainer.hpp"

namespace prefopt {

// Minimal linear-feature instance reproducing joint winner/loser probability
// decrease. One prompt, d = K. Winner and loser share feature directions
// through a designated sink response:
//   phi[y_w] = e_{y_w} + gamma * e_sink
//   phi[y_l] = e_{y_l} + gamma * phi[y_w]
//   phi[y]   = e_y     otherwise
// Along the DPO update direction phi[y_w] - phi[y_l] the winner's own logit
// velocity is (1+gamma^2)(1-gamma): for gamma > 1 the pairwise margin still
// grows (the loss keeps falling) while both pair probabilities decrease and
// the uncoupled responses absorb the mass. gamma = 0 decouples everything.
struct CouplingInstance {
    PromptSpace space;
    ModelPair models; // linear theta (copy of ref) and linear ref
    std::vector<PreferenceRecord> records;
    LatentRewardTable reward; // winner best, sink worst
    int winner = 0;
    int loser = 1;
    int sink = 2;
    double gamma = 0.0;
};

// Reference logits are N(0,1) draws from the seed (weights are solved from
// them through the feature map).
CouplingInstance build_coupling_instance(int k, double gamma, std::uint64_t seed);

// Monte-Carlo P(r*(x,Y_a) > r*(x,Y_b)) + 0.5 P(=) with Y_m ~ model_m(.|x),
// averaged over prompts. Each sample is evaluated in both argument orders on
// the same uniforms, so win_rate(a,b) + win_rate(b,a) = 1 exactly when both
// calls use the same seed and a power-of-two sample count.
double win_rate_proxy(const PolicyModel& model_a, const PolicyModel& model_b,
                      const LatentRewardTable& reward, int samples, Rng& rng);

// Exact E_{x,y~pi}[r*(x,y)] (no sampling).
double expected_reward(const PolicyModel& model, const LatentRewardTable& reward);

struct SweepConfig {
    int k = 8;
    double gamma = 1.5;
    std::vector<std::uint64_t> seeds = {0, 1, 2};
    std::vector<std::string> variants = {"c3dpo_log_l1", "c3dpo_log_l2", "c3dpo_i_l1",
                                         "c3dpo_i_l2"};
    std::vector<double> lambdas = {1e-3, 1e-2, 1e-1, 1.0};
    double beta = 1.0;
    double learning_rate = 0.05;
    int steps = 2000;
    int win_rate_samples = 4096;
    int jobs = 0; // 0 = all available threads
};

// One row per (variant, lambda, seed) plus a "dpo" baseline row per seed.
struct SweepRow {
    std::string variant;
    double lambda = 0.0;
    std::uint64_t seed = 0;
    double final_winner_ratio = 0.0;
    double final_loser_ratio = 0.0;
    double min_winner_ratio = 0.0;
    bool collapse = false;
    double expected_reward = 0.0;
    double win_rate_vs_dpo = 0.5;
};

std::vector<SweepRow> run_sweep(const SweepConfig& config);

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path);

} // namespace prefopt
