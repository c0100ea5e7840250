#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "prefopt/policy.hpp"
#include "prefopt/records.hpp"

namespace prefopt {

// ---------------------------------------------------------------- labels

enum class LabelKind { Hard, SoftEps, Ipo, ScoreDerived };

struct LabelSpec {
    LabelKind kind = LabelKind::Hard;
    double epsilon = 0.1; // SoftEps only, in (0, 1/2)

    void validate() const;
};

// Target class distribution (p_w, p_l) on the 2-simplex.
//   Hard          -> (1, 0)
//   SoftEps(eps)  -> (1-eps, eps)
//   Ipo           -> (sigma(1/2), sigma(-1/2))
//   ScoreDerived  -> softmax(score_w, score_l); needs a ScoredPair record
std::array<double, 2> make_labels(const LabelSpec& spec, const PreferenceRecord& record);

// -------------------------------------------------- classifier probabilities

// Class distribution a model pair implicitly assigns to the candidate
// responses: softmax of the implicit rewards h_y = beta*(log pi_theta -
// log pi_ref). Stored in log space; the per-prompt partition function
// cancels in h and never appears.
struct ClassProb {
    std::vector<double> h;

    bool is_pair() const { return h.size() == 2; }
    double log_odds() const { return h[0] - h[1]; } // pair: log(p_w/p_l), exact
    double log_p_w() const;
    double log_p_l() const;
    double p_w() const;
    double p_l() const;
    std::vector<double> log_probs() const;
    std::vector<double> probs() const;
};

ClassProb classifier_prob_pair(const ModelPair& pair, double beta, const PreferenceRecord& record);
ClassProb classifier_prob_list(const ModelPair& pair, double beta, int prompt,
                               std::span<const int> candidates);

// ------------------------------------------------------------------ losses

enum class LossKind { CrossEntropy, SquaredLogRatio };

// -sum_i target[i] * log p_model[i], evaluated from log-space class
// probabilities (log-sigmoid / log-sum-exp), never from exponentiated ones.
double ce_loss(const ClassProb& p_model, std::span<const double> target);

// ce_loss minus the target entropy, i.e. KL(target || model). Zero exactly
// at the optimum, which raw CE with soft labels is not.
double ce_excess_loss(const ClassProb& p_model, std::span<const double> target);

double target_entropy(std::span<const double> target);

// (log(p_w/p_l) - log(target_w/target_l))^2; pair form only.
double slr_loss(const ClassProb& p_model, std::span<const double> target);

// Plackett-Luce list loss: hard-label CE summed over suffix softmaxes.
double list_loss_pl(const ModelPair& pair, double beta, const PreferenceRecord& record);

// ------------------------------------------------------------------ presets

enum class Preset { DpoBt, Cdpo, Ipo, DpoPl, Rpo, DistilledDpo };

struct PresetSpec {
    LabelSpec labels;
    LossKind loss = LossKind::CrossEntropy;
    RecordVariant variant = RecordVariant::Pair;
};

PresetSpec preset(Preset name, double epsilon = 0.1);
Preset preset_from_name(const std::string& name);
const char* preset_name(Preset p);

// Single-record loss of a named preset.
double preset_loss(const ModelPair& pair, double beta, const PreferenceRecord& record,
                   Preset name, double epsilon = 0.1);

} // namespace prefopt
