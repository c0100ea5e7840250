#pragma once

#include <string>

#include "prefopt/losses.hpp"

namespace prefopt {

enum class PhiKind { Log, Identity };
enum class PenaltyNorm { L1, L2 };

// Penalized conservation law phi(pi(y_w)) + phi(pi(y_l)) = const between
// theta and ref. The four (phi, norm) combinations are the config names
// c3dpo_log_l1, c3dpo_log_l2, c3dpo_i_l1, c3dpo_i_l2; l1 means |r| and
// l2 means r^2 regardless of how any reference pseudo-code labels them.
struct ConstraintSpec {
    PhiKind phi = PhiKind::Log;
    PenaltyNorm norm = PenaltyNorm::L2;
    double lambda = 2e-4;

    void validate() const;
};

// [log pi_t(y_w) + log pi_t(y_l)] - [log pi_r(y_w) + log pi_r(y_l)];
// equals (rhat_w + rhat_l)/beta.
double residual_log(const ModelPair& pair, const PreferenceRecord& record);

// Log-space form of [pi_t(y_w) + pi_t(y_l)] - conservation: via
// log(a+b) = log a - log sigma(log a - log b), so raw probabilities are
// never materialized.
double residual_identity(const ModelPair& pair, const PreferenceRecord& record);

double constraint_residual(const ModelPair& pair, const PreferenceRecord& record, PhiKind phi);

// |log(a+b) - (log a - log sigma(log a - log b))| for a, b > 0.
double check_lemma1(double a, double b);

double penalty(double residual, PenaltyNorm norm);
// d penalty / d residual; the L1 subgradient at 0 is 0.
double penalty_grad(double residual, PenaltyNorm norm);

// base preset loss + lambda * penalty(residual_phi). lambda == 0 evaluates
// the base loss alone, bit-identical to the unconstrained preset.
double c3dpo_loss(const ModelPair& pair, double beta, const PreferenceRecord& record,
                  Preset base, double epsilon, const ConstraintSpec& cons);

// -log sigma(rhat_w - rhat_l) + (lambda/beta^2)(rhat_w + rhat_l)^2; the
// implicit-reward reading of the Log/L2 variant on a DPO base.
double implicit_reward_form(const ModelPair& pair, double beta, const PreferenceRecord& record,
                            double lambda);

} // namespace prefopt
