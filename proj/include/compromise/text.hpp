#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace compromise {

/// Lowercases and splits on every non-alphanumeric character.
/// Shared by ROUGE, the hashing encoder and the toy language model.
std::vector<std::string> word_tokens(std::string_view text);

std::string trim(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
bool starts_with_ci(std::string_view s, std::string_view prefix);

}  // namespace compromise
