#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

namespace prefopt {

// Dense index spaces: prompts in [0, num_prompts), responses in [0, k).
struct PromptSpace {
    int num_prompts = 0;
    int k = 0;

    void validate() const;
    bool operator==(const PromptSpace&) const = default;
};

enum class ModelKind { Tabular, LinearFeature };

// Softmax policy pi(y|x) over a finite response set. Two parameterizations:
//   Tabular       - one free logit per (prompt, response)
//   LinearFeature - logit(x,y) = phi(x,y) . w with a fixed feature map and
//                   trainable weights shared across prompts/responses
// Probabilities are always strictly positive and sum to one per prompt by
// construction; nothing in the artifact ever stores raw probabilities.
class PolicyModel {
  public:
    PolicyModel() = default; // empty; assign before use

    static PolicyModel tabular(PromptSpace space, std::vector<double> logits);
    static PolicyModel tabular_zero(PromptSpace space);
    // probs: per-prompt rows that each sum to 1; logits are set to log(p).
    static PolicyModel tabular_from_probs(PromptSpace space, const std::vector<double>& probs);
    static PolicyModel linear(PromptSpace space, int feature_dim,
                              std::vector<double> features, std::vector<double> weights);

    ModelKind kind() const { return kind_; }
    const PromptSpace& space() const { return space_; }
    int feature_dim() const { return feature_dim_; }
    int param_count() const { return static_cast<int>(params_.size()); }

    std::span<double> params() { return params_; }
    std::span<const double> params() const { return params_; }
    std::span<const double> features() const { return features_; }

    double logit(int x, int y) const;
    void row_logits(int x, std::span<double> out) const;

    // log softmax(logits(x,.))[y] via the max-shifted log-sum-exp.
    double log_prob(int x, int y) const;
    void row_log_probs(int x, std::span<double> out) const;

    // d log pi(y|x) / d params, dense over the trainable parameter vector.
    std::vector<double> grad_log_prob(int x, int y) const;

    // grad += sum_i coeffs[i] * d log pi(responses[i]|x) / d params.
    // The shared workhorse behind every composed loss gradient.
    void accumulate_log_prob_grads(int x, std::span<const int> responses,
                                   std::span<const double> coeffs,
                                   std::span<double> grad) const;

    std::string to_json_string() const;
    static PolicyModel from_json_string(const std::string& text);
    void save(const std::string& path) const;
    static PolicyModel load(const std::string& path);

  private:
    void check_index(int x, int y) const;

    ModelKind kind_ = ModelKind::Tabular;
    PromptSpace space_;
    int feature_dim_ = 0;
    std::vector<double> params_;   // tabular: P*K logits, row-major; linear: weights
    std::vector<double> features_; // linear only: P*K*d, response-major
};

// Trainable policy plus its frozen reference. Only trainers mutate theta;
// ref is never touched after construction.
struct ModelPair {
    PolicyModel theta;
    PolicyModel ref;

    ModelPair() = default; // empty; assign before use
    ModelPair(PolicyModel theta_model, PolicyModel ref_model);
    static ModelPair from_ref(const PolicyModel& ref_model);
};

// beta * (log pi_theta(y|x) - log pi_ref(y|x))
double implicit_reward(const ModelPair& pair, double beta, int x, int y);

} // namespace prefopt
