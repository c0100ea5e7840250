#include "prefopt/collapse.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <omp.h>

#include "prefopt/errors.hpp"

namespace prefopt {

CouplingInstance build_coupling_instance(int k, double gamma, std::uint64_t seed) {
    if (k < 3)
        throw config_error("coupling instance needs k >= 3 (no room for a sink response)");

    CouplingInstance inst;
    inst.space = PromptSpace{1, k};
    inst.gamma = gamma;
    inst.winner = 0;
    inst.loser = 1;
    inst.sink = 2;

    // Winner rides the sink direction, loser rides the whole winner vector:
    //   phi[w] = e_w + gamma * e_s
    //   phi[l] = e_l + gamma * phi[w]
    //   phi[y] = e_y otherwise
    // The DPO update direction is phi[w] - phi[l], and the winner's own
    // logit velocity along it is (1 + gamma^2)(1 - gamma): negative once
    // gamma > 1, so the pair margin keeps growing while both pair
    // probabilities sink and the untouched responses absorb the mass.
    std::vector<double> features(static_cast<std::size_t>(k) * k, 0.0);
    for (int y = 0; y < k; ++y)
        features[static_cast<std::size_t>(y) * k + y] = 1.0;
    features[static_cast<std::size_t>(inst.winner) * k + inst.sink] += gamma;
    features[static_cast<std::size_t>(inst.loser) * k + inst.winner] += gamma;
    features[static_cast<std::size_t>(inst.loser) * k + inst.sink] += gamma * gamma;

    // reference logits ~ N(0,1); weights solved through the (unit-diagonal
    // triangular) feature map so the realized logits are exactly those draws
    Rng rng = Rng::stream(seed, 0);
    std::vector<double> logits(k);
    for (double& z : logits)
        z = rng.next_normal();
    std::vector<double> weights(k);
    for (int y = 0; y < k; ++y)
        weights[y] = logits[y];
    weights[inst.winner] = logits[inst.winner] - gamma * weights[inst.sink];
    weights[inst.loser] = logits[inst.loser] - gamma * weights[inst.winner] -
                          gamma * gamma * weights[inst.sink];

    PolicyModel ref = PolicyModel::linear(inst.space, k, features, weights);
    inst.models = ModelPair::from_ref(ref);
    inst.records = {PreferenceRecord::pair(0, inst.winner, inst.loser)};

    // latent reward: winner best, sink worst, loser second
    inst.reward.space = inst.space;
    inst.reward.values.assign(static_cast<std::size_t>(k), 0.0);
    inst.reward.values[inst.winner] = 2.0;
    inst.reward.values[inst.loser] = 1.0;
    inst.reward.values[inst.sink] = -2.0;
    return inst;
}

namespace {

struct Cdf {
    std::vector<double> cum; // per prompt, k cumulative probabilities

    static Cdf build(const PolicyModel& m) {
        const int p = m.space().num_prompts;
        const int k = m.space().k;
        Cdf c;
        c.cum.resize(static_cast<std::size_t>(p) * k);
        std::vector<double> lp(k);
        for (int x = 0; x < p; ++x) {
            m.row_log_probs(x, lp);
            double acc = 0.0;
            for (int y = 0; y < k; ++y) {
                acc += std::exp(lp[y]);
                c.cum[static_cast<std::size_t>(x) * k + y] = acc;
            }
            c.cum[static_cast<std::size_t>(x + 1) * k - 1] = 1.0;
        }
        return c;
    }

    int draw(int x, int k, double u) const {
        const double* row = cum.data() + static_cast<std::size_t>(x) * k;
        for (int y = 0; y < k; ++y)
            if (u < row[y])
                return y;
        return k - 1;
    }
};

inline double half_if_tied(double a, double b) {
    if (a > b)
        return 1.0;
    if (a < b)
        return 0.0;
    return 0.5;
}

} // namespace

double win_rate_proxy(const PolicyModel& model_a, const PolicyModel& model_b,
                      const LatentRewardTable& reward, int samples, Rng& rng) {
    if (samples < 1)
        throw config_error("win_rate_proxy: samples must be positive");
    if (!(model_a.space() == reward.space) || !(model_b.space() == reward.space))
        throw config_error("win_rate_proxy: models and reward table disagree on the space");
    const int p = reward.space.num_prompts;
    const int k = reward.space.k;
    Cdf cdf_a = Cdf::build(model_a);
    Cdf cdf_b = Cdf::build(model_b);

    double acc = 0.0;
    for (int x = 0; x < p; ++x) {
        for (int i = 0; i < samples; ++i) {
            double u = rng.next_double();
            double v = rng.next_double();
            // both argument orders on the same uniforms: swapping the models
            // complements the estimate exactly
            double ra_u = reward.at(x, cdf_a.draw(x, k, u));
            double rb_v = reward.at(x, cdf_b.draw(x, k, v));
            double ra_v = reward.at(x, cdf_a.draw(x, k, v));
            double rb_u = reward.at(x, cdf_b.draw(x, k, u));
            acc += 0.5 * (half_if_tied(ra_u, rb_v) + half_if_tied(ra_v, rb_u));
        }
    }
    return acc / (static_cast<double>(p) * samples);
}

double expected_reward(const PolicyModel& model, const LatentRewardTable& reward) {
    if (!(model.space() == reward.space))
        throw config_error("expected_reward: model and reward table disagree on the space");
    const int p = reward.space.num_prompts;
    const int k = reward.space.k;
    std::vector<double> lp(k);
    double total = 0.0;
    for (int x = 0; x < p; ++x) {
        model.row_log_probs(x, lp);
        for (int y = 0; y < k; ++y)
            total += std::exp(lp[y]) * reward.at(x, y);
    }
    return total / p;
}

// ----------------------------------------------------------------- sweep

namespace {

struct RunSpec {
    std::string variant; // "dpo" or a c3dpo name
    double lambda = 0.0;
    std::uint64_t seed = 0;
};

TrainConfig sweep_train_config(const SweepConfig& cfg, const RunSpec& run) {
    TrainConfig tc;
    tc.loss = LossSpec::from_name(run.variant);
    tc.loss.beta = cfg.beta;
    if (tc.loss.constraint)
        tc.loss.constraint->lambda = run.lambda;
    tc.learning_rate = cfg.learning_rate;
    tc.steps = cfg.steps;
    tc.seed = run.seed;
    tc.log_interval = 10;
    tc.exec = Exec::Serial; // runs are parallel across the sweep instead
    return tc;
}

} // namespace

std::vector<SweepRow> run_sweep(const SweepConfig& config) {
    if (config.seeds.empty() || config.variants.empty() || config.lambdas.empty())
        throw config_error("sweep: seeds, variants and lambdas must be non-empty");

    const int n_seeds = static_cast<int>(config.seeds.size());

    // phase 1: DPO baselines, one per seed
    std::vector<PolicyModel> dpo_models;
    std::vector<SweepRow> baseline_rows(n_seeds);
    dpo_models.reserve(n_seeds);
    for (int s = 0; s < n_seeds; ++s)
        dpo_models.push_back(build_coupling_instance(config.k, config.gamma, config.seeds[s])
                                 .models.theta); // placeholder, replaced below

    #pragma omp parallel for schedule(dynamic) num_threads( \
        config.jobs > 0 ? config.jobs : omp_get_max_threads())
    for (int s = 0; s < n_seeds; ++s) {
        RunSpec run{"dpo", 0.0, config.seeds[s]};
        CouplingInstance inst = build_coupling_instance(config.k, config.gamma, config.seeds[s]);
        TrainReport rep = train(inst.models, inst.records, sweep_train_config(config, run));
        auto metrics = collapse_metrics(rep, inst.models.ref);
        SweepRow row;
        row.variant = "dpo";
        row.lambda = 0.0;
        row.seed = config.seeds[s];
        row.final_winner_ratio = metrics[0].final_winner_ratio;
        row.final_loser_ratio = metrics[0].final_loser_ratio;
        row.min_winner_ratio = metrics[0].min_winner_ratio;
        row.collapse = metrics[0].collapse;
        row.expected_reward = expected_reward(inst.models.theta, inst.reward);
        row.win_rate_vs_dpo = 0.5;
        baseline_rows[s] = row;
        dpo_models[s] = inst.models.theta;
    }

    // phase 2: constrained variants
    std::vector<RunSpec> runs;
    for (int s = 0; s < n_seeds; ++s)
        for (const auto& variant : config.variants)
            for (double lambda : config.lambdas)
                runs.push_back({variant, lambda, config.seeds[s]});

    std::vector<SweepRow> variant_rows(runs.size());
    #pragma omp parallel for schedule(dynamic) num_threads( \
        config.jobs > 0 ? config.jobs : omp_get_max_threads())
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(runs.size()); ++i) {
        const RunSpec& run = runs[i];
        int s = 0;
        while (config.seeds[s] != run.seed)
            ++s;
        CouplingInstance inst = build_coupling_instance(config.k, config.gamma, run.seed);
        TrainReport rep = train(inst.models, inst.records, sweep_train_config(config, run));
        auto metrics = collapse_metrics(rep, inst.models.ref);
        SweepRow row;
        row.variant = run.variant;
        row.lambda = run.lambda;
        row.seed = run.seed;
        row.final_winner_ratio = metrics[0].final_winner_ratio;
        row.final_loser_ratio = metrics[0].final_loser_ratio;
        row.min_winner_ratio = metrics[0].min_winner_ratio;
        row.collapse = metrics[0].collapse;
        row.expected_reward = expected_reward(inst.models.theta, inst.reward);
        Rng eval_rng = Rng::stream(run.seed, 777);
        row.win_rate_vs_dpo =
            win_rate_proxy(inst.models.theta, dpo_models[s], inst.reward,
                           config.win_rate_samples, eval_rng);
        variant_rows[i] = row;
    }

    std::vector<SweepRow> rows;
    rows.reserve(baseline_rows.size() + variant_rows.size());
    for (auto& r : baseline_rows)
        rows.push_back(std::move(r));
    for (auto& r : variant_rows)
        rows.push_back(std::move(r));
    return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw config_error("cannot write " + path);
    out << "variant,lambda,seed,final_winner_ratio,final_loser_ratio,min_winner_ratio,"
           "collapse,expected_reward,win_rate_vs_dpo\n";
    char buf[512];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%.17g,%llu,%.17g,%.17g,%.17g,%d,%.17g,%.17g\n",
                      r.variant.c_str(), r.lambda, static_cast<unsigned long long>(r.seed),
                      r.final_winner_ratio, r.final_loser_ratio, r.min_winner_ratio,
                      r.collapse ? 1 : 0, r.expected_reward, r.win_rate_vs_dpo);
        out << buf;
    }
}

} // namespace prefopt
