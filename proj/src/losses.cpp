#include "prefopt/losses.hpp"

#include <cmath>
#include <set>

#include "prefopt/errors.hpp"
#include "prefopt/logspace.hpp"

namespace prefopt {

void LabelSpec::validate() const {
    if (kind == LabelKind::SoftEps && !(epsilon > 0.0 && epsilon < 0.5))
        throw config_error("SoftEps epsilon must lie in (0, 1/2)");
}

std::array<double, 2> make_labels(const LabelSpec& spec, const PreferenceRecord& record) {
    spec.validate();
    switch (spec.kind) {
    case LabelKind::Hard:
        return {1.0, 0.0};
    case LabelKind::SoftEps:
        return {1.0 - spec.epsilon, spec.epsilon};
    case LabelKind::Ipo:
        return {sigmoid(0.5), sigmoid(-0.5)};
    case LabelKind::ScoreDerived:
        if (record.variant != RecordVariant::ScoredPair)
            throw config_error("ScoreDerived labels need a scored_pair record");
        return {sigmoid(record.score_w - record.score_l),
                sigmoid(record.score_l - record.score_w)};
    }
    throw config_error("unreachable label kind");
}

// -------------------------------------------------------------- class probs

double ClassProb::log_p_w() const { return log_sigmoid(h[0] - h[1]); }
double ClassProb::log_p_l() const { return log_sigmoid(h[1] - h[0]); }
double ClassProb::p_w() const { return sigmoid(h[0] - h[1]); }
double ClassProb::p_l() const { return sigmoid(h[1] - h[0]); }

std::vector<double> ClassProb::log_probs() const {
    std::vector<double> out(h.size());
    log_softmax(h, out);
    return out;
}

std::vector<double> ClassProb::probs() const {
    std::vector<double> out = log_probs();
    for (double& v : out)
        v = std::exp(v);
    return out;
}

ClassProb classifier_prob_pair(const ModelPair& pair, double beta, const PreferenceRecord& record) {
    if (record.variant == RecordVariant::List)
        throw unsupported_form_error("classifier_prob_pair needs a pair record");
    record.validate(&pair.theta.space());
    return ClassProb{{implicit_reward(pair, beta, record.prompt, record.winner),
                      implicit_reward(pair, beta, record.prompt, record.loser)}};
}

ClassProb classifier_prob_list(const ModelPair& pair, double beta, int prompt,
                               std::span<const int> candidates) {
    if (candidates.size() < 2)
        throw invalid_record_error("classifier_prob_list: need at least 2 candidates");
    std::set<int> distinct(candidates.begin(), candidates.end());
    if (distinct.size() != candidates.size())
        throw invalid_record_error("classifier_prob_list: duplicate candidates");
    ClassProb cp;
    cp.h.reserve(candidates.size());
    for (int y : candidates)
        cp.h.push_back(implicit_reward(pair, beta, prompt, y));
    return cp;
}

// ------------------------------------------------------------------- losses

double target_entropy(std::span<const double> target) {
    double h = 0.0;
    for (double t : target)
        if (t > 0.0)
            h -= t * std::log(t);
    return h;
}

double ce_loss(const ClassProb& p_model, std::span<const double> target) {
    if (target.size() != p_model.h.size())
        throw config_error("ce_loss: dimension mismatch");
    if (p_model.is_pair()) {
        double z = p_model.h[0] - p_model.h[1];
        return -target[0] * log_sigmoid(z) - target[1] * log_sigmoid(-z);
    }
    std::vector<double> lp = p_model.log_probs();
    double loss = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i)
        loss -= target[i] * lp[i];
    return loss;
}

double ce_excess_loss(const ClassProb& p_model, std::span<const double> target) {
    return ce_loss(p_model, target) - target_entropy(target);
}

double slr_loss(const ClassProb& p_model, std::span<const double> target) {
    if (!p_model.is_pair())
        throw unsupported_form_error("slr_loss is defined for pairs only");
    if (target.size() != 2)
        throw config_error("slr_loss: dimension mismatch");
    if (!(target[1] > 0.0))
        throw std::domain_error("slr_loss needs soft labels (target_l > 0)");
    double diff = p_model.log_odds() - (std::log(target[0]) - std::log(target[1]));
    return diff * diff;
}

double list_loss_pl(const ModelPair& pair, double beta, const PreferenceRecord& record) {
    if (record.variant != RecordVariant::List)
        throw unsupported_form_error("list_loss_pl needs a list record");
    record.validate(&pair.theta.space());
    ClassProb cp = classifier_prob_list(pair, beta, record.prompt, record.ranking);
    const std::size_t n = cp.h.size();
    double loss = 0.0;
    for (std::size_t start = 0; start + 1 < n; ++start) {
        std::span<const double> suffix{cp.h.data() + start, n - start};
        loss += log_sum_exp(suffix) - cp.h[start];
    }
    return loss;
}

// ------------------------------------------------------------------ presets

PresetSpec preset(Preset name, double epsilon) {
    switch (name) {
    case Preset::DpoBt:
        return {{LabelKind::Hard, epsilon}, LossKind::CrossEntropy, RecordVariant::Pair};
    case Preset::Cdpo:
        return {{LabelKind::SoftEps, epsilon}, LossKind::CrossEntropy, RecordVariant::Pair};
    case Preset::Ipo:
        return {{LabelKind::Ipo, epsilon}, LossKind::SquaredLogRatio, RecordVariant::Pair};
    case Preset::DpoPl:
        return {{LabelKind::Hard, epsilon}, LossKind::CrossEntropy, RecordVariant::List};
    case Preset::Rpo:
        return {{LabelKind::ScoreDerived, epsilon}, LossKind::CrossEntropy,
                RecordVariant::ScoredPair};
    case Preset::DistilledDpo:
        return {{LabelKind::ScoreDerived, epsilon}, LossKind::SquaredLogRatio,
                RecordVariant::ScoredPair};
    }
    throw config_error("unknown preset");
}

const char* preset_name(Preset p) {
    switch (p) {
    case Preset::DpoBt: return "dpo";
    case Preset::Cdpo: return "cdpo";
    case Preset::Ipo: return "ipo";
    case Preset::DpoPl: return "dpo_pl";
    case Preset::Rpo: return "rpo";
    case Preset::DistilledDpo: return "distilled_dpo";
    }
    return "?";
}

Preset preset_from_name(const std::string& name) {
    if (name == "dpo") return Preset::DpoBt;
    if (name == "cdpo") return Preset::Cdpo;
    if (name == "ipo") return Preset::Ipo;
    if (name == "dpo_pl") return Preset::DpoPl;
    if (name == "rpo") return Preset::Rpo;
    if (name == "distilled_dpo") return Preset::DistilledDpo;
    throw config_error("unknown preset \"" + name + "\"");
}

double preset_loss(const ModelPair& pair, double beta, const PreferenceRecord& record,
                   Preset name, double epsilon) {
    PresetSpec spec = preset(name, epsilon);
    if (spec.variant == RecordVariant::List)
        return list_loss_pl(pair, beta, record);
    if (spec.variant == RecordVariant::ScoredPair && record.variant != RecordVariant::ScoredPair)
        throw unsupported_form_error(std::string(preset_name(name)) +
                                     " needs a scored_pair record");
    ClassProb cp = classifier_prob_pair(pair, beta, record);
    std::array<double, 2> labels = make_labels(spec.labels, record);
    if (spec.loss == LossKind::CrossEntropy)
        return ce_loss(cp, labels);
    return slr_loss(cp, labels);
}

} // namespace prefopt
