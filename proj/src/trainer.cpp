#include "prefopt/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include "prefopt/errors.hpp"
#include "prefopt/logspace.hpp"
#include "prefopt/rng.hpp"

namespace prefopt {

void TrainConfig::validate() const {
    loss.validate();
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        throw config_error("learning_rate must be positive and finite");
    if (steps < 0)
        throw config_error("steps must be non-negative");
    if (batch_size < 0)
        throw config_error("batch_size must be non-negative (0 = full batch)");
    if (log_interval < 1)
        throw config_error("log_interval must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0))
        throw config_error("momentum must lie in [0, 1)");
    if (early_stop) {
        if (early_stop->metric != "loss")
            throw config_error("early_stop metric must be \"loss\"");
        if (early_stop->patience < 1)
            throw config_error("early_stop patience must be positive");
    }
}

std::span<const ReportRow> TrainReport::rows_at(int step) const {
    std::size_t lo = 0;
    while (lo < rows.size() && rows[lo].step != step)
        ++lo;
    std::size_t hi = lo;
    while (hi < rows.size() && rows[hi].step == step)
        ++hi;
    return {rows.data() + lo, hi - lo};
}

int TrainReport::last_logged_step() const { return rows.empty() ? 0 : rows.back().step; }

namespace {

std::vector<TrackedPair> find_tracked_pairs(std::span<const PreferenceRecord> records) {
    std::vector<TrackedPair> pairs;
    std::map<std::tuple<int, int, int>, int> seen;
    for (const auto& r : records) {
        int w = r.variant == RecordVariant::List ? r.ranking.front() : r.winner;
        int l = r.variant == RecordVariant::List ? r.ranking.back() : r.loser;
        auto key = std::make_tuple(r.prompt, w, l);
        if (seen.emplace(key, static_cast<int>(pairs.size())).second)
            pairs.push_back({static_cast<int>(pairs.size()), r.prompt, w, l});
    }
    return pairs;
}

bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x))
            return false;
    return true;
}

} // namespace

TrainReport train(ModelPair& pair, std::span<const PreferenceRecord> records,
                  const TrainConfig& config) {
    config.validate();
    if (records.empty())
        throw config_error("train: dataset is empty");
    const PromptSpace& space = pair.theta.space();
    for (const auto& r : records) {
        r.validate(&space);
        config.loss.check_compatible(r);
    }

    auto t0 = std::chrono::steady_clock::now();
    TrainReport report;
    report.pairs = find_tracked_pairs(records);

    const RefLogProbs ref_cache = RefLogProbs::compute(pair.ref);
    auto params = pair.theta.params();
    std::vector<double> grad(params.size(), 0.0);
    std::vector<double> velocity(params.size(), 0.0);

    const int n = static_cast<int>(records.size());
    const bool full_batch = config.batch_size == 0 || config.batch_size >= n;
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i)
        order[i] = i;
    Rng shuffle_rng = Rng::stream(config.seed, 2);
    int cursor = n; // forces a shuffle before the first minibatch

    const int k = space.k;
    std::vector<double> theta_row(k);
    auto log_rows = [&](int step, double loss, double mean_residual) {
        for (const auto& tp : report.pairs) {
            pair.theta.row_log_probs(tp.prompt, theta_row);
            auto ref_row = ref_cache.row(tp.prompt);
            ReportRow row;
            row.step = step;
            row.loss = loss;
            row.mean_residual = mean_residual;
            row.pair_id = tp.pair_id;
            row.prob_w = std::exp(theta_row[tp.winner]);
            row.prob_l = std::exp(theta_row[tp.loser]);
            row.rhat_w = config.loss.beta * (theta_row[tp.winner] - ref_row[tp.winner]);
            row.rhat_l = config.loss.beta * (theta_row[tp.loser] - ref_row[tp.loser]);
            report.rows.push_back(row);
        }
    };

    // initial state, step 0
    {
        BatchEval ev = batch_loss(pair, records, order, config.loss, config.exec, &ref_cache);
        log_rows(0, ev.mean_loss, ev.mean_residual);
    }

    double best_loss = std::numeric_limits<double>::infinity();
    std::vector<double> best_params(params.begin(), params.end());
    int best_step = 0;
    int stale = 0;

    std::vector<int> batch;
    int step = 0;
    for (; step < config.steps; ++step) {
        std::span<const int> batch_view;
        if (full_batch) {
            batch_view = order;
        } else {
            batch.clear();
            for (int i = 0; i < config.batch_size; ++i) {
                if (cursor >= n) {
                    for (int j = n - 1; j > 0; --j)
                        std::swap(order[j], order[shuffle_rng.next_index(j + 1)]);
                    cursor = 0;
                }
                batch.push_back(order[cursor++]);
            }
            batch_view = batch;
        }

        BatchEval ev =
            batch_loss_grad(pair, records, batch_view, config.loss, grad, config.exec, &ref_cache);
        if (!std::isfinite(ev.mean_loss) || !all_finite(grad)) {
            report.failed = true;
            report.error = "non-finite loss or gradient at step " + std::to_string(step);
            break;
        }

        if (step > 0 && step % config.log_interval == 0)
            log_rows(step, ev.mean_loss, ev.mean_residual);

        if (config.early_stop) {
            if (ev.mean_loss < best_loss - 1e-12) {
                best_loss = ev.mean_loss;
                best_params.assign(params.begin(), params.end());
                best_step = step;
                stale = 0;
            } else if (++stale >= config.early_stop->patience) {
                for (std::size_t j = 0; j < params.size(); ++j)
                    params[j] = best_params[j];
                report.final_step = best_step;
                break;
            }
        }

        for (std::size_t j = 0; j < params.size(); ++j) {
            velocity[j] = config.momentum * velocity[j] - config.learning_rate * grad[j];
            params[j] += velocity[j];
        }
    }

    const bool early_stopped = config.early_stop && step < config.steps && !report.failed;
    if (!early_stopped)
        report.final_step = report.failed ? step : config.steps;

    if (!report.failed && report.final_step > 0) {
        BatchEval ev = batch_loss(pair, records, order, config.loss, config.exec, &ref_cache);
        log_rows(report.final_step, ev.mean_loss, ev.mean_residual);
    }

    report.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

std::vector<PairCollapseSummary> collapse_metrics(const TrainReport& report,
                                                  const PolicyModel& ref) {
    std::vector<PairCollapseSummary> out;
    for (const auto& tp : report.pairs) {
        double ref_w = std::exp(ref.log_prob(tp.prompt, tp.winner));
        double ref_l = std::exp(ref.log_prob(tp.prompt, tp.loser));
        PairCollapseSummary s;
        s.pair_id = tp.pair_id;
        s.min_winner_ratio = std::numeric_limits<double>::infinity();
        for (const auto& row : report.rows) {
            if (row.pair_id != tp.pair_id)
                continue;
            double wr = row.prob_w / ref_w;
            s.min_winner_ratio = std::min(s.min_winner_ratio, wr);
            s.final_winner_ratio = wr;
            s.final_loser_ratio = row.prob_l / ref_l;
        }
        s.collapse = s.final_winner_ratio < 1.0;
        out.push_back(s);
    }
    return out;
}

// ------------------------------------------------------------------ csv i/o

namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

void write_report_csv(const TrainReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw config_error("cannot write " + path);
    out << "step,loss,mean_residual,pair_id,prob_w,prob_l,rhat_w,rhat_l\n";
    for (const auto& r : report.rows) {
        out << r.step << ',' << fmt17(r.loss) << ',' << fmt17(r.mean_residual) << ','
            << r.pair_id << ',' << fmt17(r.prob_w) << ',' << fmt17(r.prob_l) << ','
            << fmt17(r.rhat_w) << ',' << fmt17(r.rhat_l) << '\n';
    }
}

TrainReport read_report_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw config_error("cannot read " + path);
    TrainReport report;
    std::string line;
    if (!std::getline(in, line) || line.rfind("step,", 0) != 0)
        throw parse_error(path + ": missing CSV header");
    int max_pair = -1;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        ReportRow r;
        std::stringstream ss(line);
        std::string field;
        auto next = [&]() {
            if (!std::getline(ss, field, ','))
                throw parse_error(path + ": short CSV row");
            return field;
        };
        r.step = std::stoi(next());
        r.loss = std::stod(next());
        r.mean_residual = std::stod(next());
        r.pair_id = std::stoi(next());
        r.prob_w = std::stod(next());
        r.prob_l = std::stod(next());
        r.rhat_w = std::stod(next());
        r.rhat_l = std::stod(next());
        max_pair = std::max(max_pair, r.pair_id);
        report.rows.push_back(r);
    }
    for (int i = 0; i <= max_pair; ++i)
        report.pairs.push_back({i, 0, 0, 0});
    report.final_step = report.last_logged_step();
    return report;
}

} // namespace prefopt
