#include "compromise/corpus.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "compromise/diagnostics.hpp"
#include "compromise/random.hpp"

namespace compromise {

using nlohmann::json;

std::string to_string(Topic t) { return t == Topic::safe ? "safe" : "welcome"; }

Topic topic_from_string(const std::string& s) {
    if (s == "safe") return Topic::safe;
    if (s == "welcome") return Topic::welcome;
    throw Error("unknown topic '" + s + "' (expected safe|welcome)");
}

namespace {

std::string line_prefix(size_t line) { return "line " + std::to_string(line) + ": "; }

std::string required_text(const json& obj, const std::string& field, const std::string& where,
                          size_t line) {
    auto it = obj.find(field);
    if (it == obj.end() || it->is_null())
        throw Error(line_prefix(line) + "missing field '" + where + field + "'");
    if (!it->is_string())
        throw Error(line_prefix(line) + "field '" + where + field + "' must be a string");
    return it->get<std::string>();
}

Viewpoint parse_view(const json& obj, const std::string& slot, Polarity polarity, Topic topic,
                     size_t line) {
    if (!obj.is_object()) throw Error(line_prefix(line) + "field '" + slot + "' must be an object");
    const std::string where = slot + ".";
    Viewpoint v;
    v.place_description = required_text(obj, "place_description", where, line);
    v.reason = required_text(obj, "reason", where, line);
    v.suggestions = required_text(obj, "suggestions", where, line);
    v.polarity = polarity;
    v.topic = topic;
    if (auto it = obj.find("demographics"); it != obj.end() && !it->is_null()) {
        if (!it->is_object())
            throw Error(line_prefix(line) + "field '" + where + "demographics' must be an object");
        for (auto& [k, val] : it->items()) {
            v.demographics[k] = val.is_string() ? val.get<std::string>() : val.dump();
        }
    }
    return v;
}

json view_to_json(const Viewpoint& v) {
    json j = {{"place_description", v.place_description},
              {"reason", v.reason},
              {"suggestions", v.suggestions}};
    if (!v.demographics.empty()) j["demographics"] = v.demographics;
    return j;
}

}  // namespace

void validate(const ViewPair& pair) {
    if (pair.pair_id.empty()) throw Error("view pair has empty pair_id");
    for (const Viewpoint* v : {&pair.view_a, &pair.view_b}) {
        const char* slot = v == &pair.view_a ? "view_a" : "view_b";
        if (v->place_description.empty() || v->reason.empty() || v->suggestions.empty())
            throw Error(pair.pair_id + ": " + slot + " has an empty text field");
        if (v->topic != pair.topic)
            throw Error(pair.pair_id + ": " + slot + " topic differs from pair topic");
    }
    if (pair.view_a.polarity != Polarity::positive)
        throw Error(pair.pair_id + ": view_a must be the positive view");
    if (pair.view_b.polarity != Polarity::negative)
        throw Error(pair.pair_id + ": view_b must be the negative view");
}

std::vector<ViewPair> parse_view_pairs(const std::string& contents) {
    std::vector<ViewPair> out;
    std::set<std::string> seen;
    std::istringstream in(contents);
    std::string raw;
    size_t line = 0;
    while (std::getline(in, raw)) {
        ++line;
        if (raw.find_first_not_of(" \t\r") == std::string::npos) continue;
        json rec;
        try {
            rec = json::parse(raw);
        } catch (const json::parse_error& e) {
            throw Error(line_prefix(line) + "malformed record: " + e.what());
        }
        if (!rec.is_object()) throw Error(line_prefix(line) + "record must be a JSON object");
        if (auto it = rec.find("schema_version");
            it == rec.end() || !it->is_number_integer() || it->get<int>() != kViewPairSchemaVersion)
            throw Error(line_prefix(line) + "missing or unsupported 'schema_version' (expected " +
                        std::to_string(kViewPairSchemaVersion) + ")");
        ViewPair p;
        p.pair_id = required_text(rec, "pair_id", "", line);
        try {
            p.topic = topic_from_string(required_text(rec, "topic", "", line));
        } catch (const Error& e) {
            if (std::string(e.what()).rfind("line ", 0) == 0) throw;
            throw Error(line_prefix(line) + e.what());
        }
        for (const char* slot : {"view_a", "view_b"}) {
            if (!rec.contains(slot)) throw Error(line_prefix(line) + "missing field '" + slot + "'");
        }
        p.view_a = parse_view(rec["view_a"], "view_a", Polarity::positive, p.topic, line);
        p.view_b = parse_view(rec["view_b"], "view_b", Polarity::negative, p.topic, line);
        try {
            validate(p);
        } catch (const Error& e) {
            throw Error(line_prefix(line) + e.what());
        }
        if (!seen.insert(p.pair_id).second)
            throw Error(line_prefix(line) + "duplicate pair_id '" + p.pair_id + "'");
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<ViewPair> load_view_pairs(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open view-pair file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_view_pairs(ss.str());
}

std::string view_pair_to_line(const ViewPair& pair) {
    json j = {{"schema_version", kViewPairSchemaVersion},
              {"pair_id", pair.pair_id},
              {"topic", to_string(pair.topic)},
              {"view_a", view_to_json(pair.view_a)},
              {"view_b", view_to_json(pair.view_b)}};
    return j.dump();
}

void write_view_pairs(const std::filesystem::path& path, const std::vector<ViewPair>& pairs) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& p : pairs) out << view_pair_to_line(p) << '\n';
}

std::vector<RatedStoryPair> load_story_pairs(const std::filesystem::path& path,
                                             double rating_max) {
    if (!(rating_max > 0.0)) throw Error("rating_max must be positive");
    std::ifstream in(path);
    if (!in) throw Error("cannot open story-pair file " + path.string());
    std::vector<RatedStoryPair> out;
    std::string raw;
    size_t line = 0;
    while (std::getline(in, raw)) {
        ++line;
        if (raw.find_first_not_of(" \t\r") == std::string::npos) continue;
        json rec;
        try {
            rec = json::parse(raw);
        } catch (const json::parse_error& e) {
            throw Error(line_prefix(line) + "malformed record: " + e.what());
        }
        RatedStoryPair p;
        p.text_1 = required_text(rec, "text_1", "", line);
        p.text_2 = required_text(rec, "text_2", "", line);
        auto it = rec.find("empathy_rating");
        if (it == rec.end() || !it->is_number())
            throw Error(line_prefix(line) + "missing field 'empathy_rating'");
        p.empathy_rating = it->get<double>() / rating_max;
        if (!(p.empathy_rating >= 0.0 && p.empathy_rating <= 1.0))
            throw Error(line_prefix(line) + "empathy_rating outside [0, " +
                        std::to_string(rating_max) + "]");
        if (p.text_1.empty() || p.text_2.empty())
            throw Error(line_prefix(line) + "empty story text");
        out.push_back(std::move(p));
    }
    return out;
}

void write_story_pairs(const std::filesystem::path& path,
                       const std::vector<RatedStoryPair>& pairs) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& p : pairs) {
        json j = {{"schema_version", kStoryPairSchemaVersion},
                  {"text_1", p.text_1},
                  {"text_2", p.text_2},
                  {"empathy_rating", p.empathy_rating}};
        out << j.dump() << '\n';
    }
}

std::string render_view_text(const Viewpoint& v, bool include_demographics) {
    const bool pos = v.polarity == Polarity::positive;
    const char* stance;
    const char* goal;
    if (v.topic == Topic::safe) {
        stance = pos ? "I feel safe here because" : "I feel safety could be improved here because";
        goal = "safer";
    } else {
        stance = pos ? "I feel welcomed by others for who I am in this location because"
                     : "I feel excluded by others for who I am in this location because";
        goal = pos ? "more welcoming" : "less excluding and more welcoming";
    }
    std::string out = "I am writing about this place: " + v.place_description + " " + stance + " " +
                      v.reason + " Some ways this place could be modified to be " + goal +
                      " are: " + v.suggestions;
    if (include_demographics && !v.demographics.empty()) {
        out += " About me:";
        bool first = true;
        for (const auto& [k, val] : v.demographics) {
            out += first ? " " : ", ";
            out += k + ": " + val;
            first = false;
        }
        out += ".";
    }
    return out;
}

SplitAssignment split_dataset(const std::vector<std::string>& ids, std::array<double, 3> ratios,
                              std::uint64_t seed) {
    for (double r : ratios)
        if (!(r > 0.0)) throw Error("split ratios must be positive");
    if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9)
        throw Error("split ratios must sum to 1");
    std::vector<std::string> shuffled = ids;
    Rng rng(seed);
    seeded_shuffle(shuffled, rng);

    const double n = static_cast<double>(ids.size());
    // Small epsilon so products like 3000 * 0.05 are not floored to 149.
    const auto n_dev = static_cast<size_t>(std::floor(n * ratios[1] + 1e-9));
    const auto n_test = static_cast<size_t>(std::floor(n * ratios[2] + 1e-9));
    const size_t n_train = ids.size() - n_dev - n_test;

    SplitAssignment s;
    s.seed = seed;
    s.train.assign(shuffled.begin(), shuffled.begin() + n_train);
    s.dev.assign(shuffled.begin() + n_train, shuffled.begin() + n_train + n_dev);
    s.test.assign(shuffled.begin() + n_train + n_dev, shuffled.end());
    return s;
}

}  // namespace compromise
