#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace pmuplace {

/// 64-bit FNV-1a, hex encoded. Stable across platforms.
std::string fingerprint(std::string_view text);

/// Splits one global seed into independent per-job seeds (splitmix64 over a
/// counter), so adding jobs never changes earlier ones.
std::uint64_t derive_seed(std::uint64_t global_seed, std::uint64_t index);

/// "2,3" -> {2, 3}. Throws ValidationError on malformed input.
std::vector<int> parse_id_list(std::string_view text);
std::string format_id_list(const std::vector<int>& ids, char sep = ',');

/// "1:3" -> {1, 3}; a single number means lo == hi.
std::pair<int, int> parse_range(std::string_view text);

/// Locale-independent shortest round-trip formatting.
std::string format_double(double v);

} // namespace pmuplace
