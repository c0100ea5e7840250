#include "prefopt/constraints.hpp"

#include <cmath>

#include "prefopt/errors.hpp"
#include "prefopt/logspace.hpp"

namespace prefopt {

void ConstraintSpec::validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw config_error("constraint lambda must be finite and non-negative");
}

namespace {

void require_pair_form(const PreferenceRecord& record) {
    if (record.variant == RecordVariant::List)
        throw unsupported_form_error("constraint residuals need a pair record");
}

} // namespace

double residual_log(const ModelPair& pair, const PreferenceRecord& record) {
    require_pair_form(record);
    const int x = record.prompt;
    return (pair.theta.log_prob(x, record.winner) + pair.theta.log_prob(x, record.loser)) -
           (pair.ref.log_prob(x, record.winner) + pair.ref.log_prob(x, record.loser));
}

double residual_identity(const ModelPair& pair, const PreferenceRecord& record) {
    require_pair_form(record);
    const int x = record.prompt;
    double tw = pair.theta.log_prob(x, record.winner);
    double tl = pair.theta.log_prob(x, record.loser);
    double rw = pair.ref.log_prob(x, record.winner);
    double rl = pair.ref.log_prob(x, record.loser);
    return (tw - log_sigmoid(tw - tl)) - (rw - log_sigmoid(rw - rl));
}

double constraint_residual(const ModelPair& pair, const PreferenceRecord& record, PhiKind phi) {
    return phi == PhiKind::Log ? residual_log(pair, record) : residual_identity(pair, record);
}

double check_lemma1(double a, double b) {
    if (!(a > 0.0) || !(b > 0.0))
        throw std::domain_error("check_lemma1 needs positive arguments");
    double direct = std::log(a + b);
    double via_lemma = std::log(a) - log_sigmoid(std::log(a) - std::log(b));
    return std::fabs(direct - via_lemma);
}

double penalty(double residual, PenaltyNorm norm) {
    return norm == PenaltyNorm::L1 ? std::fabs(residual) : residual * residual;
}

double penalty_grad(double residual, PenaltyNorm norm) {
    if (norm == PenaltyNorm::L2)
        return 2.0 * residual;
    if (residual > 0.0)
        return 1.0;
    if (residual < 0.0)
        return -1.0;
    return 0.0;
}

double c3dpo_loss(const ModelPair& pair, double beta, const PreferenceRecord& record,
                  Preset base, double epsilon, const ConstraintSpec& cons) {
    cons.validate();
    require_pair_form(record);
    if (preset(base, epsilon).variant == RecordVariant::List)
        throw unsupported_form_error("c3dpo base must be a pair preset");
    double base_loss = preset_loss(pair, beta, record, base, epsilon);
    if (cons.lambda == 0.0)
        return base_loss;
    double r = constraint_residual(pair, record, cons.phi);
    return base_loss + cons.lambda * penalty(r, cons.norm);
}

double implicit_reward_form(const ModelPair& pair, double beta, const PreferenceRecord& record,
                            double lambda) {
    require_pair_form(record);
    const int x = record.prompt;
    double rhat_w = implicit_reward(pair, beta, x, record.winner);
    double rhat_l = implicit_reward(pair, beta, x, record.loser);
    double sum = rhat_w + rhat_l;
    return -log_sigmoid(rhat_w - rhat_l) + lambda / (beta * beta) * sum * sum;
}

} // namespace prefopt
