#include "prefopt/records.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "prefopt/errors.hpp"

namespace prefopt {

using nlohmann::json;

const char* variant_name(RecordVariant v) {
    switch (v) {
    case RecordVariant::Pair: return "pair";
    case RecordVariant::List: return "list";
    case RecordVariant::ScoredPair: return "scored_pair";
    }
    return "?";
}

RecordVariant variant_from_name(const std::string& name) {
    if (name == "pair") return RecordVariant::Pair;
    if (name == "list") return RecordVariant::List;
    if (name == "scored_pair") return RecordVariant::ScoredPair;
    throw config_error("unknown record variant \"" + name + "\"");
}

PreferenceRecord PreferenceRecord::pair(int prompt, int winner, int loser) {
    PreferenceRecord r;
    r.variant = RecordVariant::Pair;
    r.prompt = prompt;
    r.winner = winner;
    r.loser = loser;
    r.validate();
    return r;
}

PreferenceRecord PreferenceRecord::list(int prompt, std::vector<int> ranking) {
    PreferenceRecord r;
    r.variant = RecordVariant::List;
    r.prompt = prompt;
    r.ranking = std::move(ranking);
    r.validate();
    return r;
}

PreferenceRecord PreferenceRecord::scored_pair(int prompt, int winner, double score_w, int loser,
                                               double score_l) {
    PreferenceRecord r;
    r.variant = RecordVariant::ScoredPair;
    r.prompt = prompt;
    r.winner = winner;
    r.loser = loser;
    r.score_w = score_w;
    r.score_l = score_l;
    r.validate();
    return r;
}

void PreferenceRecord::validate(const PromptSpace* space) const {
    auto check_id = [&](int y, const char* what) {
        if (y < 0)
            throw invalid_record_error(std::string(what) + " must be non-negative");
        if (space && y >= space->k)
            throw invalid_record_error(std::string(what) + " out of range");
    };
    if (prompt < 0 || (space && prompt >= space->num_prompts))
        throw invalid_record_error("prompt id out of range");
    if (variant == RecordVariant::List) {
        if (ranking.size() < 2)
            throw invalid_record_error("ranking needs at least 2 entries");
        if (space && ranking.size() > static_cast<std::size_t>(space->k))
            throw invalid_record_error("ranking longer than response set");
        std::set<int> seen;
        for (int y : ranking) {
            check_id(y, "ranking entry");
            if (!seen.insert(y).second)
                throw invalid_record_error("ranking entries must be distinct");
        }
        return;
    }
    check_id(winner, "winner");
    check_id(loser, "loser");
    if (winner == loser)
        throw invalid_record_error("winner and loser must differ");
}

// --------------------------------------------------------------------- jsonl

namespace {

json record_to_json(const PreferenceRecord& r) {
    json j;
    j["variant"] = variant_name(r.variant);
    j["prompt"] = r.prompt;
    switch (r.variant) {
    case RecordVariant::Pair:
        j["winner"] = r.winner;
        j["loser"] = r.loser;
        break;
    case RecordVariant::List:
        j["ranking"] = r.ranking;
        break;
    case RecordVariant::ScoredPair:
        j["winner"] = r.winner;
        j["loser"] = r.loser;
        j["score_w"] = r.score_w;
        j["score_l"] = r.score_l;
        break;
    }
    return j;
}

PreferenceRecord record_from_json(const json& j) {
    if (!j.is_object())
        throw parse_error("expected a JSON object");
    std::string variant = j.at("variant").get<std::string>();
    std::set<std::string> allowed = {"variant", "prompt"};
    if (variant == "pair") {
        allowed.insert({"winner", "loser"});
    } else if (variant == "list") {
        allowed.insert("ranking");
    } else if (variant == "scored_pair") {
        allowed.insert({"winner", "loser", "score_w", "score_l"});
    } else {
        throw parse_error("unknown variant \"" + variant + "\"");
    }
    for (const auto& item : j.items()) {
        if (!allowed.count(item.key()))
            throw parse_error("unknown field \"" + item.key() + "\" for variant " + variant);
    }
    PreferenceRecord r;
    r.variant = variant_from_name(variant);
    r.prompt = j.at("prompt").get<int>();
    if (r.variant == RecordVariant::List) {
        r.ranking = j.at("ranking").get<std::vector<int>>();
    } else {
        r.winner = j.at("winner").get<int>();
        r.loser = j.at("loser").get<int>();
        if (r.variant == RecordVariant::ScoredPair) {
            r.score_w = j.at("score_w").get<double>();
            r.score_l = j.at("score_l").get<double>();
        }
    }
    r.validate();
    return r;
}

} // namespace

std::vector<PreferenceRecord> read_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw config_error("cannot read " + path);
    std::vector<PreferenceRecord> records;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty())
            continue;
        try {
            json j = json::parse(line);
            records.push_back(record_from_json(j));
        } catch (const json::exception& e) {
            throw parse_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        } catch (const std::exception& e) {
            throw parse_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return records;
}

void write_jsonl(std::span<const PreferenceRecord> records, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw config_error("cannot write " + path);
    for (const auto& r : records)
        out << record_to_json(r).dump() << "\n";
}

} // namespace prefopt
