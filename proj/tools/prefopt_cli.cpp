// prefopt: preference-optimization lab CLI
//   gen     generate a synthetic preference dataset (Bradley-Terry /
//           Plackett-Luce draws from a latent reward)
//   train   gradient descent on a policy pair for any composed loss
//   verify  run the built-in verification battery, exit 0 iff all pass
//   sweep   collapse/mitigation experiment over (variant, lambda, seed)
//   report  summarize a finished run directory without re-running it

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "prefopt/collapse.hpp"
#include "prefopt/dataset.hpp"
#include "prefopt/errors.hpp"
#include "prefopt/trainer.hpp"
#include "prefopt/verify.hpp"

#ifndef PREFOPT_VERSION
#define PREFOPT_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace prefopt;

namespace {

json load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw config_error("cannot read config " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return json::parse(buf.str());
    } catch (const json::exception& e) {
        throw parse_error(path + ": " + e.what());
    }
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object())
        throw config_error(where + ": expected a JSON object");
    for (const auto& item : j.items())
        if (!allowed.count(item.key()))
            throw config_error(where + ": unknown key \"" + item.key() + "\"");
}

template <typename T> T get_or(const json& j, const std::string& key, T fallback) {
    if (!j.contains(key))
        return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw config_error("config key \"" + key + "\": " + e.what());
    }
}

template <typename T> T get_req(const json& j, const std::string& key) {
    if (!j.contains(key))
        throw config_error("config is missing required key \"" + key + "\"");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw config_error("config key \"" + key + "\": " + e.what());
    }
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw config_error("cannot write " + path);
    out << text;
}

void write_manifest(const std::string& dir, const std::string& command, const json& config,
                    std::uint64_t seed, double wall_s, const json& extra = json::object()) {
    json m;
    m["command"] = command;
    m["config"] = config;
    m["seed"] = seed;
    m["rng"] = kRngAlgorithm;
    m["version"] = PREFOPT_VERSION;
    m["wall_time_s"] = wall_s;
    for (const auto& item : extra.items())
        m[item.key()] = item.value();
    write_text(dir + "/manifest.json", m.dump(2) + "\n");
}

// ----------------------------------------------------------------- models

PolicyModel model_from_spec(const json& spec, std::uint64_t seed) {
    check_keys(spec, {"kind", "path", "num_prompts", "k", "feature_dim", "init", "init_scale",
                      "gamma"},
               "model");
    if (spec.contains("path"))
        return PolicyModel::load(spec.at("path").get<std::string>());
    std::string kind = get_req<std::string>(spec, "kind");
    if (kind == "coupling") {
        double gamma = get_or<double>(spec, "gamma", 1.5);
        int k = get_req<int>(spec, "k");
        return build_coupling_instance(k, gamma, seed).models.ref;
    }
    PromptSpace space{get_req<int>(spec, "num_prompts"), get_req<int>(spec, "k")};
    std::string init = get_or<std::string>(spec, "init", "normal");
    double scale = get_or<double>(spec, "init_scale", 1.0);
    Rng rng = Rng::stream(seed, 50);
    if (kind == "tabular") {
        std::vector<double> logits(static_cast<std::size_t>(space.num_prompts) * space.k, 0.0);
        if (init == "normal")
            for (double& v : logits)
                v = scale * rng.next_normal();
        else if (init != "zero")
            throw config_error("model init must be \"zero\" or \"normal\"");
        return PolicyModel::tabular(space, std::move(logits));
    }
    if (kind == "linear") {
        int d = get_req<int>(spec, "feature_dim");
        std::vector<double> features(static_cast<std::size_t>(space.num_prompts) * space.k * d);
        for (double& f : features)
            f = rng.next_normal();
        std::vector<double> weights(d, 0.0);
        if (init == "normal")
            for (double& w : weights)
                w = scale * rng.next_normal() / std::sqrt(static_cast<double>(d));
        else if (init != "zero")
            throw config_error("model init must be \"zero\" or \"normal\"");
        return PolicyModel::linear(space, d, std::move(features), std::move(weights));
    }
    throw config_error("model kind must be \"tabular\", \"linear\" or \"coupling\"");
}

// -------------------------------------------------------------------- gen

int cmd_gen(const std::string& config_path, const std::string& out_dir,
            const std::optional<std::uint64_t>& seed_override) {
    json cfg = load_config(config_path);
    check_keys(cfg,
               {"prompts", "k", "pairs_per_prompt", "variant", "seed", "list_len",
                "reward_scale", "score_noise_std"},
               "gen config");
    GenSpec spec;
    spec.prompts = get_req<int>(cfg, "prompts");
    spec.k = get_req<int>(cfg, "k");
    spec.pairs_per_prompt = get_req<int>(cfg, "pairs_per_prompt");
    spec.variant = variant_from_name(get_or<std::string>(cfg, "variant", "pair"));
    spec.list_len = get_or<int>(cfg, "list_len", 3);
    spec.reward_scale = get_or<double>(cfg, "reward_scale", 1.0);
    spec.score_noise_std = get_or<double>(cfg, "score_noise_std", 0.5);
    spec.seed = seed_override.value_or(get_or<std::uint64_t>(cfg, "seed", 0));

    auto t0 = std::chrono::steady_clock::now();
    GenResult result = generate_dataset(spec);
    fs::create_directories(out_dir);
    write_jsonl(result.records, out_dir + "/dataset.jsonl");
    result.reward.save(out_dir + "/reward_table.json");
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    json effective = cfg;
    effective["seed"] = spec.seed;
    json extra;
    extra["reward_table"] = "reward_table.json";
    extra["dataset"] = "dataset.jsonl";
    extra["records"] = result.records.size();
    write_manifest(out_dir, "gen", effective, spec.seed, wall, extra);
    std::cout << "wrote " << result.records.size() << " records to " << out_dir
              << "/dataset.jsonl\n";
    return 0;
}

// ------------------------------------------------------------------ train

LossSpec loss_from_config(const json& cfg) {
    LossSpec spec = LossSpec::from_name(get_req<std::string>(cfg, "loss"));
    if (cfg.contains("base")) {
        if (!spec.constraint)
            throw config_error("\"base\" is only meaningful for c3dpo losses");
        spec.base = preset_from_name(cfg.at("base").get<std::string>());
    }
    spec.beta = get_or<double>(cfg, "beta", 1.0);
    spec.epsilon = get_or<double>(cfg, "epsilon", 0.1);
    if (cfg.contains("lambda")) {
        if (!spec.constraint)
            throw config_error("\"lambda\" is only meaningful for c3dpo losses");
        spec.constraint->lambda = cfg.at("lambda").get<double>();
    }
    std::string red = get_or<std::string>(cfg, "penalty_reduction", "per_example");
    if (red == "per_example")
        spec.reduction = PenaltyReduction::PerExample;
    else if (red == "batch_mean")
        spec.reduction = PenaltyReduction::BatchMean;
    else
        throw config_error("penalty_reduction must be per_example or batch_mean");
    spec.validate();
    return spec;
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              const std::optional<std::uint64_t>& seed_override) {
    json cfg = load_config(config_path);
    check_keys(cfg,
               {"model", "dataset", "loss", "base", "beta", "epsilon", "lambda",
                "penalty_reduction", "learning_rate", "steps", "batch_size", "seed",
                "log_interval", "momentum", "early_stop", "exec"},
               "train config");

    TrainConfig tc;
    tc.loss = loss_from_config(cfg);
    tc.learning_rate = get_or<double>(cfg, "learning_rate", 0.1);
    tc.steps = get_req<int>(cfg, "steps");
    tc.batch_size = get_or<int>(cfg, "batch_size", 0);
    tc.seed = seed_override.value_or(get_or<std::uint64_t>(cfg, "seed", 0));
    tc.log_interval = get_or<int>(cfg, "log_interval", 10);
    tc.momentum = get_or<double>(cfg, "momentum", 0.0);
    if (cfg.contains("early_stop")) {
        const json& es = cfg.at("early_stop");
        check_keys(es, {"metric", "patience"}, "early_stop");
        tc.early_stop = EarlyStopSpec{get_or<std::string>(es, "metric", "loss"),
                                      get_req<int>(es, "patience")};
    }
    std::string exec = get_or<std::string>(cfg, "exec", "parallel");
    if (exec == "serial")
        tc.exec = Exec::Serial;
    else if (exec == "parallel")
        tc.exec = Exec::Parallel;
    else
        throw config_error("exec must be serial or parallel");
    tc.validate();

    PolicyModel ref = model_from_spec(get_req<json>(cfg, "model"), tc.seed);
    ModelPair pair = ModelPair::from_ref(ref); // theta starts at the reference
    std::vector<PreferenceRecord> records =
        read_jsonl(get_req<std::string>(cfg, "dataset"));

    TrainReport report = train(pair, records, tc);

    fs::create_directories(out_dir);
    write_report_csv(report, out_dir + "/metrics.csv");
    pair.theta.save(out_dir + "/model_final.json");
    pair.ref.save(out_dir + "/model_ref.json");
    json effective = cfg;
    effective["seed"] = tc.seed;
    json extra;
    extra["final_step"] = report.final_step;
    extra["failed"] = report.failed;
    if (report.failed)
        extra["error"] = report.error;
    write_manifest(out_dir, "train", effective, tc.seed, report.wall_time_s, extra);

    if (report.failed) {
        std::cerr << "training aborted: " << report.error << " (partial report written)\n";
        return 3;
    }
    auto final_rows = report.rows_at(report.final_step);
    std::cout << "finished at step " << report.final_step;
    if (!final_rows.empty())
        std::cout << ", loss " << final_rows[0].loss;
    std::cout << " -> " << out_dir << "/metrics.csv\n";
    return 0;
}

// ----------------------------------------------------------------- verify

int cmd_verify(const std::string& out_dir, std::uint64_t seed) {
    auto results = run_verification(seed);
    std::string report = verification_report_json(results);
    std::cout << report << "\n";
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_text(out_dir + "/verify.json", report + "\n");
    }
    return all_passed(results) ? 0 : 1;
}

// ------------------------------------------------------------------ sweep

int cmd_sweep(const std::string& config_path, const std::string& out_dir,
              const std::optional<std::uint64_t>& seed_override, int jobs) {
    json cfg = load_config(config_path);
    check_keys(cfg,
               {"k", "gamma", "seeds", "variants", "lambdas", "beta", "learning_rate", "steps",
                "win_rate_samples"},
               "sweep config");
    SweepConfig sc;
    sc.k = get_or<int>(cfg, "k", 8);
    sc.gamma = get_or<double>(cfg, "gamma", 1.5);
    sc.seeds = get_or<std::vector<std::uint64_t>>(cfg, "seeds", {0, 1, 2});
    if (seed_override)
        sc.seeds = {*seed_override};
    sc.variants = get_or<std::vector<std::string>>(
        cfg, "variants", {"c3dpo_log_l1", "c3dpo_log_l2", "c3dpo_i_l1", "c3dpo_i_l2"});
    sc.lambdas = get_or<std::vector<double>>(cfg, "lambdas", {1e-3, 1e-2, 1e-1, 1.0});
    sc.beta = get_or<double>(cfg, "beta", 1.0);
    sc.learning_rate = get_or<double>(cfg, "learning_rate", 0.05);
    sc.steps = get_or<int>(cfg, "steps", 2000);
    sc.win_rate_samples = get_or<int>(cfg, "win_rate_samples", 4096);
    sc.jobs = jobs;

    auto t0 = std::chrono::steady_clock::now();
    std::vector<SweepRow> rows = run_sweep(sc);
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    fs::create_directories(out_dir);
    write_sweep_csv(rows, out_dir + "/sweep.csv");
    write_manifest(out_dir, "sweep", cfg, sc.seeds.front(), wall,
                   {{"rows", rows.size()}});
    std::cout << "wrote " << rows.size() << " sweep rows to " << out_dir << "/sweep.csv\n";
    return 0;
}

// ----------------------------------------------------------------- report

int cmd_report(const std::string& run_dir) {
    if (!fs::exists(run_dir + "/manifest.json"))
        throw config_error("no manifest found in " + run_dir);
    json manifest = load_config(run_dir + "/manifest.json");
    std::string command = get_or<std::string>(manifest, "command", "?");
    std::cout << "run: " << command << " (version " << get_or<std::string>(manifest, "version", "?")
              << ", seed " << get_or<std::uint64_t>(manifest, "seed", 0) << ")\n";

    if (command != "train") {
        std::cout << manifest.dump(2) << "\n";
        return 0;
    }
    TrainReport report = read_report_csv(run_dir + "/metrics.csv");
    auto first = report.rows_at(0);
    auto last = report.rows_at(report.last_logged_step());
    if (first.empty() || last.empty())
        throw config_error("metrics.csv has no rows");

    std::ostringstream csv;
    csv << "pair_id,ref_prob_w,ref_prob_l,final_prob_w,final_prob_l,winner_ratio,loser_ratio,"
           "collapse\n";
    std::printf("%6s %12s %12s %12s %12s %9s\n", "pair", "ref_w", "final_w", "ref_l", "final_l",
                "collapse");
    for (std::size_t i = 0; i < first.size() && i < last.size(); ++i) {
        // theta starts at ref, so step-0 probabilities are the reference ones
        double wr = last[i].prob_w / first[i].prob_w;
        double lr = last[i].prob_l / first[i].prob_l;
        bool collapse = wr < 1.0;
        std::printf("%6d %12.6g %12.6g %12.6g %12.6g %9s\n", first[i].pair_id, first[i].prob_w,
                    last[i].prob_w, first[i].prob_l, last[i].prob_l, collapse ? "yes" : "no");
        char buf[256];
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n",
                      first[i].pair_id, first[i].prob_w, first[i].prob_l, last[i].prob_w,
                      last[i].prob_l, wr, lr, collapse ? 1 : 0);
        csv << buf;
    }
    std::printf("steps logged: %d, final loss %.10g, final mean residual %.10g\n",
                report.last_logged_step(), last[0].loss, last[0].mean_residual);
    write_text(run_dir + "/summary.csv", csv.str());
    std::cout << "wrote " << run_dir << "/summary.csv\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"preference-optimization lab"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    std::int64_t seed_flag = -1;
    int jobs = 0;

    auto add_common = [&](CLI::App* sub, bool needs_config) {
        auto* copt = sub->add_option("--config", config_path, "JSON config path");
        if (needs_config)
            copt->required();
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--seed", seed_flag, "seed override");
        sub->add_option("--jobs", jobs, "worker threads for sweeps");
    };

    auto* gen = app.add_subcommand("gen", "generate a synthetic preference dataset");
    add_common(gen, true);
    auto* train_cmd = app.add_subcommand("train", "train a policy against a dataset");
    add_common(train_cmd, true);
    auto* verify_cmd = app.add_subcommand("verify", "run the verification battery");
    add_common(verify_cmd, false);
    auto* sweep_cmd = app.add_subcommand("sweep", "collapse/mitigation sweep");
    add_common(sweep_cmd, true);
    auto* report_cmd = app.add_subcommand("report", "summarize a run directory");
    add_common(report_cmd, false);

    try {
        app.parse(argc, argv);
        std::optional<std::uint64_t> seed_override;
        if (seed_flag >= 0)
            seed_override = static_cast<std::uint64_t>(seed_flag);

        if (gen->parsed()) {
            if (out_dir.empty())
                throw config_error("gen needs --out");
            return cmd_gen(config_path, out_dir, seed_override);
        }
        if (train_cmd->parsed()) {
            if (out_dir.empty())
                throw config_error("train needs --out");
            return cmd_train(config_path, out_dir, seed_override);
        }
        if (verify_cmd->parsed())
            return cmd_verify(out_dir, seed_override.value_or(0));
        if (sweep_cmd->parsed()) {
            if (out_dir.empty())
                throw config_error("sweep needs --out");
            return cmd_sweep(config_path, out_dir, seed_override, jobs);
        }
        if (report_cmd->parsed()) {
            if (out_dir.empty())
                throw config_error("report needs --out (the run directory)");
            return cmd_report(out_dir);
        }
        return 2;
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const numerical_error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
