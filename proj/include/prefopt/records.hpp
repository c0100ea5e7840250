#pragma once

#include <span>
#include <string>
#include <vector>

#include "prefopt/policy.hpp"

namespace prefopt {

enum class RecordVariant { Pair, List, ScoredPair };

const char* variant_name(RecordVariant v);
RecordVariant variant_from_name(const std::string& name);

// One preference observation: a winner/loser pair, a full ranking
// (best first), or a pair with auxiliary scores.
struct PreferenceRecord {
    RecordVariant variant = RecordVariant::Pair;
    int prompt = 0;
    int winner = -1;
    int loser = -1;
    std::vector<int> ranking; // List only
    double score_w = 0.0;     // ScoredPair only
    double score_l = 0.0;

    static PreferenceRecord pair(int prompt, int winner, int loser);
    static PreferenceRecord list(int prompt, std::vector<int> ranking);
    static PreferenceRecord scored_pair(int prompt, int winner, double score_w,
                                        int loser, double score_l);

    // Throws invalid_record_error; id range checks only when space is given.
    void validate(const PromptSpace* space = nullptr) const;

    bool operator==(const PreferenceRecord&) const = default;
};

// JSONL, one record per line, LF terminators. Keys per variant:
//   pair:        {"variant","prompt","winner","loser"}
//   list:        {"variant","prompt","ranking"}
//   scored_pair: {"variant","prompt","winner","loser","score_w","score_l"}
// Unknown keys are rejected; errors name the 1-based line.
std::vector<PreferenceRecord> read_jsonl(const std::string& path);
void write_jsonl(std::span<const PreferenceRecord> records, const std::string& path);

} // namespace prefopt
