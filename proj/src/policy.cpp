#include "prefopt/policy.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "prefopt/errors.hpp"
#include "prefopt/logspace.hpp"

namespace prefopt {

using nlohmann::json;

void PromptSpace::validate() const {
    if (num_prompts < 1)
        throw config_error("PromptSpace: num_prompts must be positive");
    if (k < 2)
        throw config_error("PromptSpace: k must be at least 2");
}

PolicyModel PolicyModel::tabular(PromptSpace space, std::vector<double> logits) {
    space.validate();
    if (logits.size() != static_cast<std::size_t>(space.num_prompts) * space.k)
        throw config_error("tabular logits size mismatch");
    PolicyModel m;
    m.kind_ = ModelKind::Tabular;
    m.space_ = space;
    m.params_ = std::move(logits);
    return m;
}

PolicyModel PolicyModel::tabular_zero(PromptSpace space) {
    space.validate();
    return tabular(space, std::vector<double>(static_cast<std::size_t>(space.num_prompts) * space.k, 0.0));
}

PolicyModel PolicyModel::tabular_from_probs(PromptSpace space, const std::vector<double>& probs) {
    space.validate();
    std::vector<double> logits(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (!(probs[i] > 0.0))
            throw config_error("tabular_from_probs: probabilities must be strictly positive");
        logits[i] = std::log(probs[i]);
    }
    return tabular(space, std::move(logits));
}

PolicyModel PolicyModel::linear(PromptSpace space, int feature_dim, std::vector<double> features,
                                std::vector<double> weights) {
    space.validate();
    if (feature_dim < 1)
        throw config_error("linear feature_dim must be positive");
    if (features.size() !=
        static_cast<std::size_t>(space.num_prompts) * space.k * feature_dim)
        throw config_error("linear features size mismatch");
    if (weights.size() != static_cast<std::size_t>(feature_dim))
        throw config_error("linear weights size mismatch");
    PolicyModel m;
    m.kind_ = ModelKind::LinearFeature;
    m.space_ = space;
    m.feature_dim_ = feature_dim;
    m.features_ = std::move(features);
    m.params_ = std::move(weights);
    return m;
}

void PolicyModel::check_index(int x, int y) const {
    if (x < 0 || x >= space_.num_prompts)
        throw std::out_of_range("prompt index out of range");
    if (y < 0 || y >= space_.k)
        throw std::out_of_range("response index out of range");
}

double PolicyModel::logit(int x, int y) const {
    check_index(x, y);
    if (kind_ == ModelKind::Tabular)
        return params_[static_cast<std::size_t>(x) * space_.k + y];
    const double* phi =
        features_.data() + (static_cast<std::size_t>(x) * space_.k + y) * feature_dim_;
    double z = 0.0;
    for (int j = 0; j < feature_dim_; ++j)
        z += phi[j] * params_[j];
    return z;
}

void PolicyModel::row_logits(int x, std::span<double> out) const {
    check_index(x, 0);
    if (kind_ == ModelKind::Tabular) {
        const double* row = params_.data() + static_cast<std::size_t>(x) * space_.k;
        for (int y = 0; y < space_.k; ++y)
            out[y] = row[y];
        return;
    }
    for (int y = 0; y < space_.k; ++y) {
        const double* phi =
            features_.data() + (static_cast<std::size_t>(x) * space_.k + y) * feature_dim_;
        double z = 0.0;
        for (int j = 0; j < feature_dim_; ++j)
            z += phi[j] * params_[j];
        out[y] = z;
    }
}

void PolicyModel::row_log_probs(int x, std::span<double> out) const {
    row_logits(x, out);
    double lse = log_sum_exp({out.data(), static_cast<std::size_t>(space_.k)});
    for (int y = 0; y < space_.k; ++y)
        out[y] -= lse;
}

double PolicyModel::log_prob(int x, int y) const {
    check_index(x, y);
    std::vector<double> lp(space_.k);
    row_log_probs(x, lp);
    return lp[y];
}

std::vector<double> PolicyModel::grad_log_prob(int x, int y) const {
    check_index(x, y);
    std::vector<double> grad(params_.size(), 0.0);
    const int resp[1] = {y};
    const double coeff[1] = {1.0};
    accumulate_log_prob_grads(x, resp, coeff, grad);
    return grad;
}

void PolicyModel::accumulate_log_prob_grads(int x, std::span<const int> responses,
                                            std::span<const double> coeffs,
                                            std::span<double> grad) const {
    const int k = space_.k;
    std::vector<double> lp(k);
    row_log_probs(x, lp);

    double coeff_sum = 0.0;
    for (double c : coeffs)
        coeff_sum += c;

    if (kind_ == ModelKind::Tabular) {
        double* row = grad.data() + static_cast<std::size_t>(x) * k;
        for (std::size_t i = 0; i < responses.size(); ++i) {
            check_index(x, responses[i]);
            row[responses[i]] += coeffs[i];
        }
        for (int y = 0; y < k; ++y)
            row[y] -= coeff_sum * std::exp(lp[y]);
        return;
    }

    const double* base = features_.data() + static_cast<std::size_t>(x) * k * feature_dim_;
    for (std::size_t i = 0; i < responses.size(); ++i) {
        check_index(x, responses[i]);
        const double* phi = base + static_cast<std::size_t>(responses[i]) * feature_dim_;
        for (int j = 0; j < feature_dim_; ++j)
            grad[j] += coeffs[i] * phi[j];
    }
    for (int y = 0; y < k; ++y) {
        double w = coeff_sum * std::exp(lp[y]);
        const double* phi = base + static_cast<std::size_t>(y) * feature_dim_;
        for (int j = 0; j < feature_dim_; ++j)
            grad[j] -= w * phi[j];
    }
}

// ------------------------------------------------------------- serialization

namespace {

json model_to_json(const PolicyModel& m) {
    json j;
    j["kind"] = m.kind() == ModelKind::Tabular ? "tabular" : "linear";
    j["num_prompts"] = m.space().num_prompts;
    j["k"] = m.space().k;
    const int k = m.space().k;
    if (m.kind() == ModelKind::Tabular) {
        json rows = json::array();
        auto params = m.params();
        for (int x = 0; x < m.space().num_prompts; ++x) {
            json row = json::array();
            for (int y = 0; y < k; ++y)
                row.push_back(params[static_cast<std::size_t>(x) * k + y]);
            rows.push_back(std::move(row));
        }
        j["logits"] = std::move(rows);
    } else {
        const int d = m.feature_dim();
        json feats = json::array();
        auto f = m.features();
        for (int x = 0; x < m.space().num_prompts; ++x) {
            json resp = json::array();
            for (int y = 0; y < k; ++y) {
                json vec = json::array();
                for (int jf = 0; jf < d; ++jf)
                    vec.push_back(f[(static_cast<std::size_t>(x) * k + y) * d + jf]);
                resp.push_back(std::move(vec));
            }
            feats.push_back(std::move(resp));
        }
        j["features"] = std::move(feats);
        json w = json::array();
        for (double v : m.params())
            w.push_back(v);
        j["weights"] = std::move(w);
    }
    return j;
}

PolicyModel model_from_json(const json& j) {
    if (!j.is_object())
        throw parse_error("model: expected a JSON object");
    for (const auto& item : j.items()) {
        const std::string& key = item.key();
        if (key != "kind" && key != "num_prompts" && key != "k" && key != "logits" &&
            key != "features" && key != "weights")
            throw parse_error("model: unknown field \"" + key + "\"");
    }
    std::string kind = j.at("kind").get<std::string>();
    PromptSpace space{j.at("num_prompts").get<int>(), j.at("k").get<int>()};
    if (kind == "tabular") {
        if (j.contains("features") || j.contains("weights"))
            throw parse_error("model: tabular model must not carry linear fields");
        std::vector<double> logits;
        for (const auto& row : j.at("logits"))
            for (const auto& v : row)
                logits.push_back(v.get<double>());
        return PolicyModel::tabular(space, std::move(logits));
    }
    if (kind == "linear") {
        if (j.contains("logits"))
            throw parse_error("model: linear model must not carry \"logits\"");
        const auto& feats = j.at("features");
        std::vector<double> f;
        int d = -1;
        for (const auto& resp : feats) {
            for (const auto& vec : resp) {
                if (d < 0)
                    d = static_cast<int>(vec.size());
                for (const auto& v : vec)
                    f.push_back(v.get<double>());
            }
        }
        std::vector<double> w = j.at("weights").get<std::vector<double>>();
        return PolicyModel::linear(space, d, std::move(f), std::move(w));
    }
    throw parse_error("model: unknown kind \"" + kind + "\"");
}

} // namespace

std::string PolicyModel::to_json_string() const { return model_to_json(*this).dump(); }

PolicyModel PolicyModel::from_json_string(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw parse_error(std::string("model: ") + e.what());
    }
    return model_from_json(j);
}

void PolicyModel::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw config_error("cannot write " + path);
    out << to_json_string() << "\n";
}

PolicyModel PolicyModel::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw config_error("cannot read " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return from_json_string(buf.str());
}

// --------------------------------------------------------------- model pair

ModelPair::ModelPair(PolicyModel theta_model, PolicyModel ref_model)
    : theta(std::move(theta_model)), ref(std::move(ref_model)) {
    if (!(theta.space() == ref.space()))
        throw config_error("ModelPair: theta and ref must share a PromptSpace");
}

ModelPair ModelPair::from_ref(const PolicyModel& ref_model) {
    return ModelPair(ref_model, ref_model);
}

double implicit_reward(const ModelPair& pair, double beta, int x, int y) {
    if (!(beta > 0.0))
        throw config_error("implicit_reward: beta must be positive");
    return beta * (pair.theta.log_prob(x, y) - pair.ref.log_prob(x, y));
}

} // namespace prefopt
