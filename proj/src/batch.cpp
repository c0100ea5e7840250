#include "prefopt/batch.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include <omp.h>

#include "prefopt/errors.hpp"
#include "prefopt/logspace.hpp"

namespace prefopt {

// ---------------------------------------------------------------- loss spec

LossSpec LossSpec::from_name(const std::string& name) {
    LossSpec spec;
    if (name == "c3dpo_log_l1")
        spec.constraint = ConstraintSpec{PhiKind::Log, PenaltyNorm::L1, 2e-4};
    else if (name == "c3dpo_log_l2")
        spec.constraint = ConstraintSpec{PhiKind::Log, PenaltyNorm::L2, 2e-4};
    else if (name == "c3dpo_i_l1")
        spec.constraint = ConstraintSpec{PhiKind::Identity, PenaltyNorm::L1, 2e-4};
    else if (name == "c3dpo_i_l2")
        spec.constraint = ConstraintSpec{PhiKind::Identity, PenaltyNorm::L2, 2e-4};
    else
        spec.base = preset_from_name(name);
    return spec;
}

std::string LossSpec::name() const {
    if (!constraint)
        return preset_name(base);
    std::string n = "c3dpo_";
    n += constraint->phi == PhiKind::Log ? "log" : "i";
    n += constraint->norm == PenaltyNorm::L1 ? "_l1" : "_l2";
    return n;
}

RecordVariant LossSpec::record_variant() const { return preset(base, epsilon).variant; }

void LossSpec::check_compatible(const PreferenceRecord& record) const {
    RecordVariant want = record_variant();
    if (want == RecordVariant::List) {
        if (record.variant != RecordVariant::List)
            throw config_error("loss " + name() + " needs list records");
        return;
    }
    if (record.variant == RecordVariant::List)
        throw config_error("loss " + name() + " cannot consume list records");
    if (want == RecordVariant::ScoredPair && record.variant != RecordVariant::ScoredPair)
        throw config_error("loss " + name() + " needs scored_pair records");
}

void LossSpec::validate() const {
    if (!(beta > 0.0) || !std::isfinite(beta))
        throw config_error("beta must be positive and finite");
    preset(base, epsilon).labels.validate();
    if (constraint) {
        constraint->validate();
        if (record_variant() == RecordVariant::List)
            throw config_error("constraints require a pair-form base loss");
    }
}

RefLogProbs RefLogProbs::compute(const PolicyModel& ref) {
    RefLogProbs cache;
    cache.k = ref.space().k;
    cache.values.resize(static_cast<std::size_t>(ref.space().num_prompts) * cache.k);
    for (int x = 0; x < ref.space().num_prompts; ++x)
        ref.row_log_probs(x, {cache.values.data() + static_cast<std::size_t>(x) * cache.k,
                              static_cast<std::size_t>(cache.k)});
    return cache;
}

// ------------------------------------------------------------ record kernel

namespace {

inline double log_add_exp(double a, double b) {
    if (a < b)
        std::swap(a, b);
    return a + std::log1p(std::exp(b - a));
}

// Loss, diagnostics, and (optionally) coeff * d loss / d theta for one
// record. All probabilities enter through log-space implicit rewards.
RecordEval eval_record(const ModelPair& pair, const PreferenceRecord& record,
                       const LossSpec& spec, double coeff, std::span<double> grad,
                       const RefLogProbs* ref_cache, std::vector<double>& theta_lp,
                       std::vector<double>& ref_lp) {
    const int x = record.prompt;
    const int k = pair.theta.space().k;
    const double beta = spec.beta;
    const bool want_grad = !grad.empty();

    theta_lp.resize(k);
    pair.theta.row_log_probs(x, theta_lp);
    std::span<const double> ref_row;
    if (ref_cache) {
        ref_row = ref_cache->row(x);
    } else {
        ref_lp.resize(k);
        pair.ref.row_log_probs(x, ref_lp);
        ref_row = ref_lp;
    }

    RecordEval out;
    const ConstraintSpec* cons = spec.constraint ? &*spec.constraint : nullptr;
    const double lambda = cons ? cons->lambda : 0.0;

    PresetSpec ps = preset(spec.base, spec.epsilon);

    if (ps.variant == RecordVariant::List) {
        const auto& ranking = record.ranking;
        const int n = static_cast<int>(ranking.size());
        std::vector<double> h(n), lse(n);
        for (int i = 0; i < n; ++i)
            h[i] = beta * (theta_lp[ranking[i]] - ref_row[ranking[i]]);
        lse[n - 1] = h[n - 1];
        for (int i = n - 2; i >= 0; --i)
            lse[i] = log_add_exp(h[i], lse[i + 1]);
        for (int i = 0; i + 1 < n; ++i)
            out.base += lse[i] - h[i];
        out.loss = out.base;
        // collapse diagnostic over the (best, worst) endpoints
        out.residual = (theta_lp[ranking.front()] + theta_lp[ranking.back()]) -
                       (ref_row[ranking.front()] + ref_row[ranking.back()]);
        if (want_grad) {
            std::vector<double> c(n, 0.0);
            for (int i = 0; i < n; ++i) {
                int last = std::min(i, n - 2);
                double s = 0.0;
                for (int start = 0; start <= last; ++start)
                    s += std::exp(h[i] - lse[start]);
                if (i <= n - 2)
                    s -= 1.0;
                c[i] = coeff * beta * s;
            }
            pair.theta.accumulate_log_prob_grads(x, ranking, c, grad);
        }
        return out;
    }

    // pair-form losses
    const int w = record.winner;
    const int l = record.loser;
    const double h_w = beta * (theta_lp[w] - ref_row[w]);
    const double h_l = beta * (theta_lp[l] - ref_row[l]);
    const double z = h_w - h_l;

    std::array<double, 2> labels = make_labels(ps.labels, record);

    double dbase_dz = 0.0;
    if (ps.loss == LossKind::CrossEntropy) {
        out.base = -labels[0] * log_sigmoid(z) - labels[1] * log_sigmoid(-z);
        if (want_grad)
            dbase_dz = -labels[0] * sigmoid(-z) + labels[1] * sigmoid(z);
    } else {
        double t = std::log(labels[0]) - std::log(labels[1]);
        out.base = (z - t) * (z - t);
        if (want_grad)
            dbase_dz = 2.0 * (z - t);
    }

    // signed residual of the active (or default log) constraint
    const PhiKind phi = cons ? cons->phi : PhiKind::Log;
    double sig_a = 0.0; // conditional winner prob under theta, identity case
    if (phi == PhiKind::Log) {
        out.residual = (theta_lp[w] + theta_lp[l]) - (ref_row[w] + ref_row[l]);
    } else {
        double a_theta = theta_lp[w] - theta_lp[l];
        double a_ref = ref_row[w] - ref_row[l];
        out.residual = (theta_lp[w] - log_sigmoid(a_theta)) - (ref_row[w] - log_sigmoid(a_ref));
        sig_a = sigmoid(a_theta);
    }

    if (cons && lambda != 0.0) {
        out.penalty = penalty(out.residual, cons->norm);
        out.loss = out.base + lambda * out.penalty;
    } else {
        out.loss = out.base;
    }

    if (want_grad) {
        double c_w = coeff * dbase_dz * beta;
        double c_l = -coeff * dbase_dz * beta;
        if (cons && lambda != 0.0) {
            double pg = coeff * lambda * penalty_grad(out.residual, cons->norm);
            if (pg != 0.0) {
                if (phi == PhiKind::Log) {
                    c_w += pg;
                    c_l += pg;
                } else {
                    c_w += pg * sig_a;
                    c_l += pg * (1.0 - sig_a);
                }
            }
        }
        const int resp[2] = {w, l};
        const double coeffs[2] = {c_w, c_l};
        pair.theta.accumulate_log_prob_grads(x, resp, coeffs, grad);
    }
    return out;
}

BatchEval assemble(const LossSpec& spec, double sum_loss, double sum_base, double sum_residual,
                   double sum_penalty, std::size_t count) {
    BatchEval ev;
    const double n = static_cast<double>(count);
    ev.mean_base = sum_base / n;
    ev.mean_residual = sum_residual / n;
    ev.mean_penalty = sum_penalty / n;
    if (spec.constraint && spec.constraint->lambda != 0.0 &&
        spec.reduction == PenaltyReduction::BatchMean)
        ev.mean_loss = sum_base / n + spec.constraint->lambda * (sum_penalty / n);
    else
        ev.mean_loss = sum_loss / n;
    return ev;
}

} // namespace

RecordEval record_loss(const ModelPair& pair, const PreferenceRecord& record,
                       const LossSpec& spec) {
    spec.check_compatible(record);
    std::vector<double> theta_lp, ref_lp;
    return eval_record(pair, record, spec, 0.0, {}, nullptr, theta_lp, ref_lp);
}

RecordEval record_loss_grad(const ModelPair& pair, const PreferenceRecord& record,
                            const LossSpec& spec, double coeff, std::span<double> grad,
                            const RefLogProbs* ref_cache) {
    spec.check_compatible(record);
    std::vector<double> theta_lp, ref_lp;
    return eval_record(pair, record, spec, coeff, grad, ref_cache, theta_lp, ref_lp);
}

// -------------------------------------------------------------- batch paths

namespace {

BatchEval batch_impl(const ModelPair& pair, std::span<const PreferenceRecord> records,
                     std::span<const int> batch_indices, const LossSpec& spec,
                     std::span<double> grad, Exec exec, const RefLogProbs* ref_cache) {
    if (batch_indices.empty())
        throw config_error("empty batch");
    const std::size_t n_params = grad.size();
    for (double& g : grad)
        g = 0.0;

    double sum_loss = 0.0, sum_base = 0.0, sum_residual = 0.0, sum_penalty = 0.0;

    if (exec == Exec::Serial) {
        std::vector<double> theta_lp, ref_lp;
        for (int idx : batch_indices) {
            RecordEval ev =
                eval_record(pair, records[idx], spec, 1.0, grad, ref_cache, theta_lp, ref_lp);
            sum_loss += ev.loss;
            sum_base += ev.base;
            sum_residual += ev.residual;
            sum_penalty += ev.penalty;
        }
    } else {
        const int max_threads = omp_get_max_threads();
        std::vector<std::vector<double>> tgrad(max_threads);
        std::vector<double> tloss(max_threads, 0.0), tbase(max_threads, 0.0),
            tres(max_threads, 0.0), tpen(max_threads, 0.0);
        #pragma omp parallel
        {
            const int tid = omp_get_thread_num();
            if (n_params > 0)
                tgrad[tid].assign(n_params, 0.0);
            std::vector<double> theta_lp, ref_lp;
            #pragma omp for schedule(static)
            for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(batch_indices.size());
                 ++i) {
                RecordEval ev = eval_record(pair, records[batch_indices[i]], spec, 1.0,
                                            tgrad[tid], ref_cache, theta_lp, ref_lp);
                tloss[tid] += ev.loss;
                tbase[tid] += ev.base;
                tres[tid] += ev.residual;
                tpen[tid] += ev.penalty;
            }
        }
        // merge in thread order: deterministic for a fixed thread count
        for (int t = 0; t < max_threads; ++t) {
            sum_loss += tloss[t];
            sum_base += tbase[t];
            sum_residual += tres[t];
            sum_penalty += tpen[t];
            if (!tgrad[t].empty())
                for (std::size_t j = 0; j < n_params; ++j)
                    grad[j] += tgrad[t][j];
        }
    }

    const double inv_n = 1.0 / static_cast<double>(batch_indices.size());
    for (double& g : grad)
        g *= inv_n;
    return assemble(spec, sum_loss, sum_base, sum_residual, sum_penalty, batch_indices.size());
}

} // namespace

BatchEval batch_loss_grad(const ModelPair& pair, std::span<const PreferenceRecord> records,
                          std::span<const int> batch_indices, const LossSpec& spec,
                          std::span<double> grad, Exec exec, const RefLogProbs* ref_cache) {
    return batch_impl(pair, records, batch_indices, spec, grad, exec, ref_cache);
}

BatchEval batch_loss(const ModelPair& pair, std::span<const PreferenceRecord> records,
                     std::span<const int> batch_indices, const LossSpec& spec, Exec exec,
                     const RefLogProbs* ref_cache) {
    return batch_impl(pair, records, batch_indices, spec, {}, exec, ref_cache);
}

} // namespace prefopt
