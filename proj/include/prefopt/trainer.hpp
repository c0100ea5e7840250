#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prefopt/batch.hpp"

namespace prefopt {

struct EarlyStopSpec {
    std::string metric = "loss"; // only "loss" is defined
    int patience = 50;           // steps without improvement > 1e-12
};

struct TrainConfig {
    LossSpec loss;
    double learning_rate = 0.1;
    int steps = 100;
    int batch_size = 0; // 0 = full batch
    std::uint64_t seed = 0;
    int log_interval = 10;
    double momentum = 0.0;
    std::optional<EarlyStopSpec> early_stop;
    Exec exec = Exec::Parallel;

    void validate() const;
};

struct TrackedPair {
    int pair_id = 0;
    int prompt = 0;
    int winner = 0;
    int loser = 0;
};

struct ReportRow {
    int step = 0;
    double loss = 0.0;
    double mean_residual = 0.0;
    int pair_id = 0;
    double prob_w = 0.0;
    double prob_l = 0.0;
    double rhat_w = 0.0;
    double rhat_l = 0.0;
};

struct TrainReport {
    std::vector<TrackedPair> pairs;
    std::vector<ReportRow> rows; // one row per tracked pair per logged step
    int final_step = 0;
    bool failed = false; // non-finite loss/gradient aborted the run
    std::string error;
    double wall_time_s = 0.0;

    std::span<const ReportRow> rows_at(int step) const;
    int last_logged_step() const;
};

// Gradient descent on theta; ref stays frozen. Deterministic given seed
// (and thread count for the parallel path). Rows are logged at step 0,
// every log_interval steps, and after the final update.
TrainReport train(ModelPair& pair, std::span<const PreferenceRecord> records,
                  const TrainConfig& config);

struct PairCollapseSummary {
    int pair_id = 0;
    double min_winner_ratio = 0.0;   // min over logged steps of prob_w / ref prob_w
    double final_winner_ratio = 0.0;
    double final_loser_ratio = 0.0;
    bool collapse = false; // final winner ratio < 1
};

std::vector<PairCollapseSummary> collapse_metrics(const TrainReport& report,
                                                  const PolicyModel& ref);

// CSV columns: step,loss,mean_residual,pair_id,prob_w,prob_l,rhat_w,rhat_l
void write_report_csv(const TrainReport& report, const std::string& path);
TrainReport read_report_csv(const std::string& path);

} // namespace prefopt
