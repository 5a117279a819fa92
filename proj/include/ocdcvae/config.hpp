#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ocdcvae {

// Ordered `key = value` pairs.
using KeyValues = std::vector<std::pair<std::string, std::string>>;

// Parses line-oriented `key = value` text; `#` starts a comment. Duplicate
// keys and malformed lines raise FormatError mentioning `source` and the line.
KeyValues parse_key_values(std::string_view text, std::string_view source);
KeyValues read_key_values_file(const std::string& path);
std::string format_key_values(const KeyValues& kv);

// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);
double parse_double(const std::string& key, const std::string& value);
std::uint64_t parse_u64(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);

}  // namespace ocdcvae
