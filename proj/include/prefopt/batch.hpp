#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prefopt/constraints.hpp"
#include "prefopt/losses.hpp"

namespace prefopt {

enum class PenaltyReduction { PerExample, BatchMean };
enum class Exec { Serial, Parallel };

// A fully composed training loss: preset + beta (+ optional constraint).
struct LossSpec {
    Preset base = Preset::DpoBt;
    double beta = 1.0;
    double epsilon = 0.1;
    std::optional<ConstraintSpec> constraint;
    PenaltyReduction reduction = PenaltyReduction::PerExample;

    // Accepts "dpo","cdpo","ipo","dpo_pl","rpo","distilled_dpo" and the
    // constrained variants "c3dpo_log_l1","c3dpo_log_l2","c3dpo_i_l1",
    // "c3dpo_i_l2" (DPO base unless overridden).
    static LossSpec from_name(const std::string& name);
    std::string name() const;

    RecordVariant record_variant() const;
    void check_compatible(const PreferenceRecord& record) const;
    void validate() const;
};

// Frozen per-prompt log-probabilities of the reference model; computed once
// per training run since ref never changes.
struct RefLogProbs {
    int k = 0;
    std::vector<double> values; // P*K

    static RefLogProbs compute(const PolicyModel& ref);
    std::span<const double> row(int x) const {
        return {values.data() + static_cast<std::size_t>(x) * k, static_cast<std::size_t>(k)};
    }
};

struct RecordEval {
    double loss = 0.0;     // per-example semantics: base + lambda*penalty
    double base = 0.0;     // base preset loss alone
    double residual = 0.0; // signed constraint residual (log residual if unconstrained)
    double penalty = 0.0;  // penalty(residual) under the configured norm, 0 if unconstrained
};

// Loss of one record under a composed spec.
RecordEval record_loss(const ModelPair& pair, const PreferenceRecord& record,
                       const LossSpec& spec);

// Adds coeff * d loss / d theta-params into grad. Returns the same values
// as record_loss.
RecordEval record_loss_grad(const ModelPair& pair, const PreferenceRecord& record,
                            const LossSpec& spec, double coeff, std::span<double> grad,
                            const RefLogProbs* ref_cache = nullptr);

struct BatchEval {
    double mean_loss = 0.0; // assembled per spec.reduction
    double mean_base = 0.0;
    double mean_residual = 0.0;
    double mean_penalty = 0.0;
};

// Mean loss and gradient over batch_indices into records. The parallel path
// accumulates into per-thread buffers merged in thread order under a static
// schedule, so results are deterministic for a fixed thread count.
BatchEval batch_loss_grad(const ModelPair& pair, std::span<const PreferenceRecord> records,
                          std::span<const int> batch_indices, const LossSpec& spec,
                          std::span<double> grad, Exec exec,
                          const RefLogProbs* ref_cache = nullptr);

// Loss-only variant (no gradient), same reduction semantics.
BatchEval batch_loss(const ModelPair& pair, std::span<const PreferenceRecord> records,
                     std::span<const int> batch_indices, const LossSpec& spec, Exec exec,
                     const RefLogProbs* ref_cache = nullptr);

} // namespace prefopt
