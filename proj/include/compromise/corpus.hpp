#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace compromise {

enum class Polarity { positive, negative };
enum class Topic { safe, welcome };

std::string to_string(Topic t);
Topic topic_from_string(const std::string& s);

/// One person's account of a place: what it is, why they feel the way they
/// do, and what they would change.
struct Viewpoint {
    std::string place_description;
    std::string reason;
    std::string suggestions;
    Polarity polarity = Polarity::positive;
    Topic topic = Topic::safe;
    std::map<std::string, std::string> demographics;
};

/// A positive view (view_a) and a negative view (view_b) of the same kind of place.
struct ViewPair {
    std::string pair_id;
    Topic topic = Topic::safe;
    Viewpoint view_a;
    Viewpoint view_b;
};

struct RatedStoryPair {
    std::string text_1;
    std::string text_2;
    double empathy_rating = 0.0;  // normalized to [0, 1]
};

struct SplitAssignment {
    std::vector<std::string> train;
    std::vector<std::string> dev;
    std::vector<std::string> test;
    std::uint64_t seed = 0;
};

inline constexpr int kViewPairSchemaVersion = 1;
inline constexpr int kStoryPairSchemaVersion = 1;

/// Throws Error if a view pair violates its invariants.
void validate(const ViewPair& pair);

/// Reads a line-delimited view-pair file. Blank lines are skipped.
/// Errors cite the 1-based line number and, for missing fields, the field name.
std::vector<ViewPair> load_view_pairs(const std::filesystem::path& path);
std::vector<ViewPair> parse_view_pairs(const std::string& contents);
void write_view_pairs(const std::filesystem::path& path, const std::vector<ViewPair>& pairs);
std::string view_pair_to_line(const ViewPair& pair);

/// Reads rated story pairs; raw ratings are divided by `rating_max`
/// (the declared top of the annotation scale) and must land in [0, 1].
std::vector<RatedStoryPair> load_story_pairs(const std::filesystem::path& path,
                                             double rating_max = 1.0);
void write_story_pairs(const std::filesystem::path& path,
                       const std::vector<RatedStoryPair>& pairs);

/// Flattens a viewpoint into the first-person paragraph used in every prompt.
std::string render_view_text(const Viewpoint& v, bool include_demographics = false);

/// Seeded shuffle, then floor allocation for dev and test; the remainder goes to train.
SplitAssignment split_dataset(const std::vector<std::string>& ids,
                              std::array<double, 3> ratios, std::uint64_t seed);

}  // namespace compromise
