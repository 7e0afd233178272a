#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace hamrater::util {

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

// ASCII lowercase; non-ASCII bytes pass through untouched.
std::string to_lower(std::string_view s);

// Lowercase, collapse whitespace runs to single spaces, trim both ends.
std::string normalize_ws(std::string_view s);

bool contains_ci(std::string_view haystack, std::string_view needle);

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string fnv1a64_hex(std::string_view data);

std::string iso8601_utc_now();

// Fixed-point rendering with a stable "C" locale, for deterministic output files.
std::string fmt_fixed(double v, int digits);
// Shortest round-trippable-ish rendering for CSV payloads ("%.10g").
std::string fmt_g(double v);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace hamrater::util
