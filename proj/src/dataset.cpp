#include "prefopt/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "prefopt/errors.hpp"
#include "prefopt/logspace.hpp"

namespace prefopt {

using nlohmann::json;

void LatentRewardTable::validate() const {
    space.validate();
    if (values.size() != static_cast<std::size_t>(space.num_prompts) * space.k)
        throw config_error("LatentRewardTable size mismatch");
    for (double v : values)
        if (!std::isfinite(v))
            throw config_error("LatentRewardTable entries must be finite");
}

void LatentRewardTable::save(const std::string& path) const {
    json j;
    j["num_prompts"] = space.num_prompts;
    j["k"] = space.k;
    json rows = json::array();
    for (int x = 0; x < space.num_prompts; ++x) {
        json row = json::array();
        for (int y = 0; y < space.k; ++y)
            row.push_back(at(x, y));
        rows.push_back(std::move(row));
    }
    j["r_star"] = std::move(rows);
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw config_error("cannot write " + path);
    out << j.dump() << "\n";
}

LatentRewardTable LatentRewardTable::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw config_error("cannot read " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    json j = json::parse(buf.str());
    LatentRewardTable t;
    t.space = PromptSpace{j.at("num_prompts").get<int>(), j.at("k").get<int>()};
    for (const auto& row : j.at("r_star"))
        for (const auto& v : row)
            t.values.push_back(v.get<double>());
    t.validate();
    return t;
}

PreferenceRecord sample_pair(const LatentRewardTable& reward, int x, int y_a, int y_b, Rng& rng) {
    if (y_a == y_b)
        throw invalid_record_error("sample_pair: candidates must differ");
    double p_a = sigmoid(reward.at(x, y_a) - reward.at(x, y_b));
    bool a_wins = rng.next_double() < p_a;
    return PreferenceRecord::pair(x, a_wins ? y_a : y_b, a_wins ? y_b : y_a);
}

PreferenceRecord sample_list(const LatentRewardTable& reward, int x,
                             std::span<const int> candidates, Rng& rng) {
    if (candidates.size() < 2)
        throw invalid_record_error("sample_list: need at least 2 candidates");
    std::set<int> distinct(candidates.begin(), candidates.end());
    if (distinct.size() != candidates.size())
        throw invalid_record_error("sample_list: duplicate candidates");

    std::vector<int> remaining(candidates.begin(), candidates.end());
    std::vector<int> ranking;
    ranking.reserve(remaining.size());
    std::vector<double> logits;
    while (remaining.size() > 1) {
        logits.resize(remaining.size());
        for (std::size_t i = 0; i < remaining.size(); ++i)
            logits[i] = reward.at(x, remaining[i]);
        double lse = log_sum_exp(logits);
        double u = rng.next_double();
        double acc = 0.0;
        std::size_t pick = remaining.size() - 1;
        for (std::size_t i = 0; i < remaining.size(); ++i) {
            acc += std::exp(logits[i] - lse);
            if (u < acc) {
                pick = i;
                break;
            }
        }
        ranking.push_back(remaining[pick]);
        remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    ranking.push_back(remaining[0]);
    return PreferenceRecord::list(x, std::move(ranking));
}

void GenSpec::validate() const {
    PromptSpace{prompts, k}.validate();
    if (pairs_per_prompt < 1)
        throw config_error("gen: pairs_per_prompt must be positive");
    long max_pairs = static_cast<long>(k) * (k - 1) / 2;
    if (variant != RecordVariant::List && pairs_per_prompt > max_pairs)
        throw config_error("gen: pairs_per_prompt exceeds k*(k-1)/2 distinct pairs");
    if (variant == RecordVariant::List && (list_len < 2 || list_len > k))
        throw config_error("gen: list_len must be in [2, k]");
    if (!(reward_scale > 0.0) || !std::isfinite(reward_scale))
        throw config_error("gen: reward_scale must be positive");
    if (score_noise_std < 0.0 || !std::isfinite(score_noise_std))
        throw config_error("gen: score_noise_std must be non-negative");
}

GenResult generate_dataset(const GenSpec& spec) {
    spec.validate();
    GenResult out;
    out.reward.space = PromptSpace{spec.prompts, spec.k};
    out.reward.values.resize(static_cast<std::size_t>(spec.prompts) * spec.k);

    Rng reward_rng = Rng::stream(spec.seed, 0);
    for (double& v : out.reward.values)
        v = spec.reward_scale * reward_rng.next_normal();

    Rng rng = Rng::stream(spec.seed, 1);
    for (int x = 0; x < spec.prompts; ++x) {
        if (spec.variant == RecordVariant::List) {
            for (int n = 0; n < spec.pairs_per_prompt; ++n) {
                // candidates drawn without replacement via partial shuffle
                std::vector<int> ids(spec.k);
                for (int y = 0; y < spec.k; ++y)
                    ids[y] = y;
                for (int i = 0; i < spec.list_len; ++i) {
                    int j = i + rng.next_index(spec.k - i);
                    std::swap(ids[i], ids[j]);
                }
                ids.resize(spec.list_len);
                out.records.push_back(sample_list(out.reward, x, ids, rng));
            }
            continue;
        }
        // distinct unordered candidate pairs, uniform without replacement
        std::vector<std::pair<int, int>> all;
        for (int a = 0; a < spec.k; ++a)
            for (int b = a + 1; b < spec.k; ++b)
                all.emplace_back(a, b);
        for (int i = 0; i < spec.pairs_per_prompt; ++i) {
            int j = i + rng.next_index(static_cast<int>(all.size()) - i);
            std::swap(all[i], all[j]);
        }
        for (int i = 0; i < spec.pairs_per_prompt; ++i) {
            PreferenceRecord rec = sample_pair(out.reward, x, all[i].first, all[i].second, rng);
            if (spec.variant == RecordVariant::ScoredPair) {
                double s_w = out.reward.at(x, rec.winner) + spec.score_noise_std * rng.next_normal();
                double s_l = out.reward.at(x, rec.loser) + spec.score_noise_std * rng.next_normal();
                rec = PreferenceRecord::scored_pair(x, rec.winner, s_w, rec.loser, s_l);
            }
            out.records.push_back(std::move(rec));
        }
    }
    return out;
}

} // namespace prefopt
