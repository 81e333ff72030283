#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

// Text normalization shared by the deterministic mock backends. All rules are
// ASCII-only so results are identical on every platform and locale; bytes
// >= 0x80 pass through untouched.
namespace capreward::text {

// Lowercase, drop ASCII punctuation, collapse whitespace runs to one space,
// trim both ends.
std::string normalize(std::string_view s);

// normalize() then split on spaces.
std::vector<std::string> tokenize(std::string_view s);

// Tokens of `s` minus the grounding stopword list, first occurrence order,
// duplicates removed.
std::vector<std::string> content_tokens(std::string_view s);

bool is_stopword(std::string_view token);

// Split on . ; ! ? and newline, trim, drop empty pieces, keep the first max_n.
std::vector<std::string> split_sentences(std::string_view s, std::size_t max_n);

std::string trim(std::string_view s);

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace capreward::text
