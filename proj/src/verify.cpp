#include "prefopt/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "prefopt/batch.hpp"
#include "prefopt/constraints.hpp"
#include "prefopt/errors.hpp"
#include "prefopt/losses.hpp"
#include "prefopt/oracle.hpp"
#include "prefopt/rng.hpp"

namespace prefopt {

namespace {

// ------------------------------------------------------- random instances

struct Instance {
    ModelPair pair;
    PreferenceRecord rec;
    double beta = 1.0;
    double eps = 0.1;
};

PolicyModel random_tabular(Rng& rng, PromptSpace space, const PolicyModel* base, double spread) {
    std::vector<double> logits(static_cast<std::size_t>(space.num_prompts) * space.k);
    for (std::size_t i = 0; i < logits.size(); ++i) {
        double b = base ? base->params()[i] : 0.0;
        logits[i] = b + spread * rng.next_normal();
    }
    return PolicyModel::tabular(space, std::move(logits));
}

// theta stays within O(min(1, 2/beta)) of ref in log-prob so the naive
// raw-ratio oracles remain in their accurate range.
Instance make_instance(Rng& rng, RecordVariant variant, bool linear, int list_len = 0) {
    Instance inst;
    inst.beta = std::exp(rng.next_uniform(std::log(0.01), std::log(10.0)));
    inst.eps = rng.next_uniform(0.01, 0.45);
    const double spread = std::min(1.0, 2.0 / inst.beta);
    int p = 1 + rng.next_index(3);
    int k = 2 + rng.next_index(5);
    if (variant == RecordVariant::List)
        k = std::max(k, list_len);
    PromptSpace space{p, k};

    if (!linear) {
        PolicyModel ref = random_tabular(rng, space, nullptr, 1.0);
        PolicyModel theta = random_tabular(rng, space, &ref, spread);
        inst.pair = ModelPair(std::move(theta), std::move(ref));
    } else {
        int d = 2 + rng.next_index(5);
        std::vector<double> features(static_cast<std::size_t>(p) * k * d);
        for (double& f : features)
            f = rng.next_normal();
        std::vector<double> w_ref(d), w_theta(d);
        const double w_scale = 1.0 / std::sqrt(static_cast<double>(d));
        for (int j = 0; j < d; ++j) {
            w_ref[j] = w_scale * rng.next_normal();
            w_theta[j] = w_ref[j] + spread * w_scale * rng.next_normal();
        }
        PolicyModel ref = PolicyModel::linear(space, d, features, w_ref);
        PolicyModel theta = PolicyModel::linear(space, d, std::move(features), w_theta);
        inst.pair = ModelPair(std::move(theta), std::move(ref));
    }

    int x = rng.next_index(p);
    if (variant == RecordVariant::List) {
        std::vector<int> ids(k);
        for (int y = 0; y < k; ++y)
            ids[y] = y;
        for (int i = 0; i < list_len; ++i)
            std::swap(ids[i], ids[i + rng.next_index(k - i)]);
        ids.resize(list_len);
        inst.rec = PreferenceRecord::list(x, std::move(ids));
    } else {
        int w = rng.next_index(k);
        int l = rng.next_index(k - 1);
        if (l >= w)
            ++l;
        if (variant == RecordVariant::Pair)
            inst.rec = PreferenceRecord::pair(x, w, l);
        else
            inst.rec = PreferenceRecord::scored_pair(x, w, rng.next_normal(), l,
                                                     rng.next_normal());
    }
    return inst;
}

// ---------------------------------------------------------- naive oracles
// Raw exponentiated probabilities and textbook formulas; the independent
// evaluation route the log-space implementation is checked against.

std::vector<double> naive_probs(const PolicyModel& m, int x) {
    std::vector<double> z(m.space().k);
    m.row_logits(x, z);
    double sum = 0.0;
    for (double& v : z) {
        v = std::exp(v);
        sum += v;
    }
    for (double& v : z)
        v /= sum;
    return z;
}

double naive_sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct PairRatios {
    double ratio_w = 0.0; // pi_theta(y_w)/pi_ref(y_w)
    double ratio_l = 0.0;
    double z = 0.0; // beta * log(ratio_w / ratio_l)
};

PairRatios naive_ratios(const Instance& inst) {
    auto pt = naive_probs(inst.pair.theta, inst.rec.prompt);
    auto pr = naive_probs(inst.pair.ref, inst.rec.prompt);
    PairRatios r;
    r.ratio_w = pt[inst.rec.winner] / pr[inst.rec.winner];
    r.ratio_l = pt[inst.rec.loser] / pr[inst.rec.loser];
    r.z = inst.beta * std::log(r.ratio_w / r.ratio_l);
    return r;
}

double rel_err(double a, double b) {
    double denom = std::max({std::fabs(a), std::fabs(b), 1e-300});
    return std::fabs(a - b) / denom;
}

// ------------------------------------------------------------- check infra

struct Outcome {
    bool pass = false;
    std::string detail;
};

CheckResult timed(const std::string& name, const std::function<Outcome()>& fn) {
    CheckResult r;
    r.name = name;
    auto t0 = std::chrono::steady_clock::now();
    try {
        Outcome o = fn();
        r.pass = o.pass;
        r.detail = o.detail;
    } catch (const std::exception& e) {
        r.pass = false;
        r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

// ----------------------------------------------------- equivalence checks

constexpr int kEquivInstances = 1000;
constexpr double kEquivTol = 1e-10;

Outcome equivalence_check(std::uint64_t seed, RecordVariant variant,
                          const std::function<double(const Instance&)>& impl,
                          const std::function<double(const Instance&)>& oracle,
                          const std::function<bool(const Instance&)>& accept) {
    Rng rng = Rng::stream(seed, 11);
    double worst = 0.0;
    for (int i = 0; i < kEquivInstances; ++i) {
        Instance inst;
        do {
            inst = make_instance(rng, variant, i % 2 == 1);
        } while (!accept(inst));
        worst = std::max(worst, rel_err(impl(inst), oracle(inst)));
    }
    Outcome o;
    o.pass = worst <= kEquivTol;
    o.detail = "max rel err " + fmt(worst) + " over " + std::to_string(kEquivInstances) +
               " instances (tol " + fmt(kEquivTol) + ")";
    return o;
}

bool z_in_range(const Instance& inst) {
    ClassProb cp = classifier_prob_pair(inst.pair, inst.beta, inst.rec);
    return std::fabs(cp.log_odds()) <= 4.0;
}

CheckResult check_equiv_dpo(std::uint64_t seed) {
    return timed("loss_equivalence_dpo", [seed] {
        return equivalence_check(
            seed, RecordVariant::Pair,
            [](const Instance& i) { return preset_loss(i.pair, i.beta, i.rec, Preset::DpoBt); },
            [](const Instance& i) {
                PairRatios r = naive_ratios(i);
                return -std::log(naive_sigmoid(r.z));
            },
            z_in_range);
    });
}

CheckResult check_equiv_cdpo(std::uint64_t seed) {
    return timed("loss_equivalence_cdpo", [seed] {
        return equivalence_check(
            seed, RecordVariant::Pair,
            [](const Instance& i) {
                return preset_loss(i.pair, i.beta, i.rec, Preset::Cdpo, i.eps);
            },
            [](const Instance& i) {
                PairRatios r = naive_ratios(i);
                return -(1.0 - i.eps) * std::log(naive_sigmoid(r.z)) -
                       i.eps * std::log(naive_sigmoid(-r.z));
            },
            z_in_range);
    });
}

CheckResult check_equiv_ipo(std::uint64_t seed) {
    return timed("loss_equivalence_ipo", [seed] {
        return equivalence_check(
            seed, RecordVariant::Pair,
            [](const Instance& i) { return preset_loss(i.pair, i.beta, i.rec, Preset::Ipo); },
            [](const Instance& i) {
                PairRatios r = naive_ratios(i);
                double log_rho = std::log(r.ratio_w / r.ratio_l);
                double d = log_rho - 1.0 / (2.0 * i.beta);
                return i.beta * i.beta * d * d;
            },
            [](const Instance& i) {
                ClassProb cp = classifier_prob_pair(i.pair, i.beta, i.rec);
                return std::fabs(cp.log_odds() - 0.5) >= 1e-2 &&
                       std::fabs(cp.log_odds()) <= 8.0;
            });
    });
}

CheckResult check_equiv_dpo_pl(std::uint64_t seed) {
    return timed("loss_equivalence_dpo_pl", [seed] {
        Rng len_rng = Rng::stream(seed, 12);
        double worst = 0.0;
        Rng rng = Rng::stream(seed, 13);
        for (int i = 0; i < kEquivInstances; ++i) {
            int n = 2 + len_rng.next_index(4); // N in {2,...,5}
            Instance inst = make_instance(rng, RecordVariant::List, i % 2 == 1, n);
            double impl = list_loss_pl(inst.pair, inst.beta, inst.rec);
            // Plackett-Luce product of suffix softmaxes over raw ratios
            auto pt = naive_probs(inst.pair.theta, inst.rec.prompt);
            auto pr = naive_probs(inst.pair.ref, inst.rec.prompt);
            std::vector<double> powed(n);
            for (int j = 0; j < n; ++j) {
                int y = inst.rec.ranking[j];
                powed[j] = std::pow(pt[y] / pr[y], inst.beta);
            }
            double product = 1.0;
            for (int start = 0; start + 1 < n; ++start) {
                double denom = 0.0;
                for (int j = start; j < n; ++j)
                    denom += powed[j];
                product *= powed[start] / denom;
            }
            worst = std::max(worst, rel_err(impl, -std::log(product)));
        }
        Outcome o;
        o.pass = worst <= kEquivTol;
        o.detail = "max rel err " + fmt(worst) + ", N in {2..5}";
        return o;
    });
}

CheckResult check_equiv_distilled(std::uint64_t seed) {
    return timed("loss_equivalence_distilled_dpo", [seed] {
        return equivalence_check(
            seed, RecordVariant::ScoredPair,
            [](const Instance& i) {
                return preset_loss(i.pair, i.beta, i.rec, Preset::DistilledDpo);
            },
            [](const Instance& i) {
                PairRatios r = naive_ratios(i);
                double d = i.beta * std::log(r.ratio_w / r.ratio_l) -
                           (i.rec.score_w - i.rec.score_l);
                return d * d;
            },
            [](const Instance& i) {
                ClassProb cp = classifier_prob_pair(i.pair, i.beta, i.rec);
                double ds = i.rec.score_w - i.rec.score_l;
                return std::fabs(cp.log_odds() - ds) >= 1e-2 && std::fabs(ds) <= 4.0 &&
                       std::fabs(cp.log_odds()) <= 8.0;
            });
    });
}

CheckResult check_equiv_rpo(std::uint64_t seed) {
    return timed("loss_equivalence_rpo", [seed] {
        return equivalence_check(
            seed, RecordVariant::ScoredPair,
            [](const Instance& i) { return preset_loss(i.pair, i.beta, i.rec, Preset::Rpo); },
            [](const Instance& i) {
                PairRatios r = naive_ratios(i);
                double b = i.rec.score_w - i.rec.score_l;
                double pw = naive_sigmoid(b), pl = naive_sigmoid(-b);
                double qw = naive_sigmoid(r.z), ql = naive_sigmoid(-r.z);
                double kl = pw * std::log(pw / qw) + pl * std::log(pl / ql);
                double entropy = -pw * std::log(pw) - pl * std::log(pl);
                return kl + entropy;
            },
            [](const Instance& i) {
                ClassProb cp = classifier_prob_pair(i.pair, i.beta, i.rec);
                return std::fabs(cp.log_odds()) <= 4.0 &&
                       std::fabs(i.rec.score_w - i.rec.score_l) <= 4.0;
            });
    });
}

// ------------------------------------------------------------ lemma check

CheckResult check_lemma(std::uint64_t seed) {
    return timed("lemma1_log_identity", [seed] {
        Rng rng = Rng::stream(seed, 21);
        double worst = 0.0;
        const double llo = std::log(1e-8), lhi = std::log(1e8);
        for (int i = 0; i < 10000; ++i) {
            double a = std::exp(rng.next_uniform(llo, lhi));
            double b = std::exp(rng.next_uniform(llo, lhi));
            worst = std::max(worst, check_lemma1(a, b));
        }
        worst = std::max(worst, check_lemma1(1.0, 1.0));
        worst = std::max(worst, check_lemma1(1e8, 1e-8));
        Outcome o;
        o.pass = worst <= 1e-12;
        o.detail = "max identity defect " + fmt(worst) + " over 10k pairs in [1e-8,1e8]^2";
        return o;
    });
}

// --------------------------------------------------------- gradient checks

double fd_rel_err(ModelPair& pair, const PreferenceRecord& rec, const LossSpec& spec) {
    auto params = pair.theta.params();
    std::vector<double> grad(params.size(), 0.0);
    record_loss_grad(pair, rec, spec, 1.0, grad);
    const double h = 1e-5;
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < params.size(); ++j) {
        double saved = params[j];
        params[j] = saved + h;
        double fp = record_loss(pair, rec, spec).loss;
        params[j] = saved - h;
        double fm = record_loss(pair, rec, spec).loss;
        params[j] = saved;
        double fd = (fp - fm) / (2.0 * h);
        num += (grad[j] - fd) * (grad[j] - fd);
        den += grad[j] * grad[j];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

CheckResult check_gradients(std::uint64_t seed) {
    return timed("gradient_finite_differences", [seed] {
        const int per_combo = 50;
        double worst = 0.0;
        int combos = 0;
        std::string worst_name;

        auto run_combo = [&](const std::string& name, RecordVariant variant,
                             const std::function<LossSpec(Rng&)>& make_spec, int list_len = 0) {
            Rng rng = Rng::stream(seed, 31 + combos);
            ++combos;
            for (bool linear : {false, true}) {
                int done = 0;
                while (done < per_combo) {
                    Instance inst = make_instance(rng, variant, linear, list_len);
                    LossSpec spec = make_spec(rng);
                    spec.beta = inst.beta;
                    spec.epsilon = inst.eps;
                    if (spec.base == Preset::Ipo || spec.base == Preset::DistilledDpo) {
                        ClassProb cp = classifier_prob_pair(inst.pair, inst.beta, inst.rec);
                        std::array<double, 2> labels =
                            make_labels(preset(spec.base, spec.epsilon).labels, inst.rec);
                        double t = std::log(labels[0]) - std::log(labels[1]);
                        if (std::fabs(cp.log_odds() - t) < 1e-2)
                            continue; // SLR gradient vanishes at the target
                    }
                    if (spec.constraint && spec.constraint->norm == PenaltyNorm::L1 &&
                        std::fabs(constraint_residual(inst.pair, inst.rec,
                                                      spec.constraint->phi)) < 1e-8)
                        continue; // L1 subgradient point, finite differences undefined
                    double err = fd_rel_err(inst.pair, inst.rec, spec);
                    if (err > worst) {
                        worst = err;
                        worst_name = name + (linear ? "/linear" : "/tabular");
                    }
                    ++done;
                }
            }
        };

        run_combo("dpo", RecordVariant::Pair, [](Rng&) { return LossSpec::from_name("dpo"); });
        run_combo("cdpo", RecordVariant::Pair, [](Rng&) { return LossSpec::from_name("cdpo"); });
        run_combo("ipo", RecordVariant::Pair, [](Rng&) { return LossSpec::from_name("ipo"); });
        run_combo(
            "dpo_pl", RecordVariant::List, [](Rng&) { return LossSpec::from_name("dpo_pl"); },
            4);
        run_combo("rpo", RecordVariant::ScoredPair,
                  [](Rng&) { return LossSpec::from_name("rpo"); });
        run_combo("distilled_dpo", RecordVariant::ScoredPair,
                  [](Rng&) { return LossSpec::from_name("distilled_dpo"); });
        for (const char* name : {"c3dpo_log_l1", "c3dpo_log_l2", "c3dpo_i_l1", "c3dpo_i_l2"}) {
            run_combo(name, RecordVariant::Pair, [name](Rng& rng) {
                LossSpec spec = LossSpec::from_name(name);
                spec.constraint->lambda = std::exp(rng.next_uniform(std::log(1e-3), 0.0));
                return spec;
            });
        }

        Outcome o;
        o.pass = worst <= 1e-6;
        o.detail = "max rel err " + fmt(worst) + " (worst: " + worst_name + "), 50 per combo";
        return o;
    });
}

// ------------------------------------------- eta line / under-specification

CheckResult check_eta_line(std::uint64_t seed) {
    (void)seed;
    return timed("eta_line_underspecification", [] {
        PairInstance inst{0.02, 0.01, 1.0, 1.0 / 11.0};
        double e = eta(inst);
        if (e != 20.0)
            return Outcome{false, "eta != 20 exactly (got " + fmt(e) + ")"};

        Remark3Report rep = verify_remark3(inst);
        if (!rep.cases[0].on_line)
            return Outcome{false, "(0.4, 0.02) not recognized on the eta line"};
        if (rep.cases[1].on_line || std::fabs(rep.cases[1].ratio - 5.0) > 5e-9)
            return Outcome{false, "(0.001, 0.0002) not flagged with ratio 5"};
        if (!rep.cases[2].on_line)
            return Outcome{false, "(0.004, 0.0002) not recognized on the eta line"};

        GridSolveOptions opts;
        opts.resolution = 1000;
        opts.near_opt_tol = 1e-6;
        GridSolveResult res = grid_solve_instance(inst, soft_label_kl_loss(inst), nullptr, opts);
        double qw_min = 1.0, qw_max = 0.0;
        double worst_ratio_dev = 0.0;
        for (const auto& pt : res.near_optimal) {
            qw_min = std::min(qw_min, pt.q_w);
            qw_max = std::max(qw_max, pt.q_w);
            worst_ratio_dev = std::max(worst_ratio_dev, std::fabs(pt.q_w / pt.q_l - e) / e);
        }
        double decades = std::log10(qw_max / qw_min);
        Outcome o;
        o.pass = decades >= 2.0 && worst_ratio_dev <= 0.02;
        o.detail = "near-optimal set spans " + fmt(decades) + " decades of q_w, ratio within " +
                   fmt(worst_ratio_dev * 100.0) + "% of eta (" + std::to_string(res.near_optimal.size()) +
                   " points)";
        return o;
    });
}

// --------------------------------------------------- proposition + identity

CheckResult check_proposition(std::uint64_t seed, PropositionReport& rep_out) {
    return timed("proposition_monotone_phi", [seed, &rep_out] {
        rep_out = verify_proposition(100, seed + 41);
        int viol = rep_out.violations;

        // uniqueness: with a tolerance tied to the squared grid spacing, the
        // constrained near-optimal set contracts linearly in the resolution
        int shrink_fail = 0;
        int tested = 0;
        Rng rng = Rng::stream(seed, 42);
        while (tested < 8) {
            PairInstance inst;
            inst.ref_w = rng.next_uniform(0.01, 0.3);
            inst.ref_l = rng.next_uniform(0.01, 0.3);
            inst.beta = rng.next_uniform(0.5, 2.0);
            inst.eps = rng.next_uniform(0.05, 0.4);
            for (const Phi& phi : {Phi::log(), Phi::identity()}) {
                AnalyticSolution an;
                try {
                    an = solve_constrained_analytic(inst, phi);
                } catch (const numerical_error&) {
                    continue; // crossing outside the feasible triangle
                }
                if (an.q_l < 1e-6 || an.q_w > 0.5)
                    continue;
                // local curvature of the loss along the curve, from the
                // analytic solution (independent of the grid path); m is the
                // log-coordinate slope -d log q_l / d log q_w
                double m = (phi(an.q_w * 1.000001) - phi(an.q_w)) /
                           (phi(an.q_l * 1.000001) - phi(an.q_l));
                if (!(m > 0.0) || m > 50.0)
                    continue;
                double curv = 0.5 * inst.eps * (1.0 - inst.eps) * inst.beta * inst.beta *
                              (1.0 + m) * (1.0 + m);
                PairLossFn loss = soft_label_kl_loss(inst);
                double diam[2];
                int res_levels[2] = {500, 1000};
                for (int lvl = 0; lvl < 2; ++lvl) {
                    GridSolveOptions opts;
                    opts.resolution = res_levels[lvl];
                    double spacing =
                        (std::log(opts.q_max) - std::log(opts.q_min)) / (opts.resolution - 1);
                    opts.near_opt_tol = curv * (10.0 * spacing) * (10.0 * spacing);
                    GridSolveResult res = grid_solve_instance(inst, loss, &phi, opts);
                    double lo = 1e300, hi = -1e300;
                    for (const auto& pt : res.near_optimal) {
                        lo = std::min(lo, std::log(pt.q_w));
                        hi = std::max(hi, std::log(pt.q_w));
                    }
                    diam[lvl] = hi - lo;
                }
                double spacing_fine = std::log(1e8 * (1.0 - 1e-8)) / 999.0;
                if (!(diam[1] <= 0.65 * diam[0] + 2.0 * spacing_fine))
                    ++shrink_fail;
                ++tested;
            }
        }

        Outcome o;
        o.pass = viol == 0 && shrink_fail == 0;
        o.detail = std::to_string(rep_out.trials) + " constrained solves, " +
                   std::to_string(viol) + " direction violations; near-optimal diameter halving " +
                   (shrink_fail == 0 ? "ok" : "FAILED") + " on " + std::to_string(tested) +
                   " instances";
        return o;
    });
}

CheckResult check_identity_conservation(const PropositionReport& rep) {
    return timed("identity_constraint_conservation", [&rep] {
        double worst_sum = 0.0;
        double worst_bound = -1e300;
        int count = 0;
        for (const auto& trial : rep.results) {
            if (trial.phi_name != "identity")
                continue;
            ++count;
            double target = trial.inst.ref_w + trial.inst.ref_l;
            worst_sum = std::max(worst_sum, std::fabs(trial.q_w + trial.q_l - target));
            worst_bound =
                std::max(worst_bound, (trial.q_w - trial.inst.ref_w) - trial.inst.ref_l);
        }
        Outcome o;
        o.pass = count > 0 && worst_sum <= 1e-10 && worst_bound <= 0.0;
        o.detail = "max |q_w+q_l - ref sum| " + fmt(worst_sum) +
                   ", max (q_w - ref_w) - ref_l " + fmt(worst_bound) + " over " +
                   std::to_string(count) + " instances";
        return o;
    });
}

} // namespace

std::vector<CheckResult> run_verification(std::uint64_t seed) {
    std::vector<CheckResult> results;
    results.push_back(check_equiv_dpo(seed));
    results.push_back(check_equiv_cdpo(seed));
    results.push_back(check_equiv_ipo(seed));
    results.push_back(check_equiv_dpo_pl(seed));
    results.push_back(check_equiv_distilled(seed));
    results.push_back(check_equiv_rpo(seed));
    results.push_back(check_lemma(seed));
    results.push_back(check_gradients(seed));
    results.push_back(check_eta_line(seed));
    PropositionReport prop;
    results.push_back(check_proposition(seed, prop));
    results.push_back(check_identity_conservation(prop));
    return results;
}

bool all_passed(const std::vector<CheckResult>& results) {
    for (const auto& r : results)
        if (!r.pass)
            return false;
    return true;
}

std::string verification_report_json(const std::vector<CheckResult>& results) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : results) {
        nlohmann::json j;
        j["check_name"] = r.name;
        j["status"] = r.pass ? "pass" : "fail";
        j["detail"] = r.detail;
        j["seconds"] = r.seconds;
        arr.push_back(std::move(j));
    }
    return arr.dump(2);
}

} // namespace prefopt
