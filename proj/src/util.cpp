#include "pmuplace/util.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

#include "pmuplace/errors.hpp"

namespace pmuplace {

std::string fingerprint(std::string_view text)
{
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::uint64_t derive_seed(std::uint64_t global_seed, std::uint64_t index)
{
    std::uint64_t z = global_seed + (index + 1) * 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

namespace {

int parse_int(std::string_view s, std::string_view whole)
{
    int v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
        throw ValidationError("malformed integer list '" + std::string(whole) + "'");
    return v;
}

} // namespace

std::vector<int> parse_id_list(std::string_view text)
{
    std::vector<int> ids;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t end = text.find(',', start);
        const std::string_view tok = text.substr(start, end == std::string_view::npos ? text.npos : end - start);
        ids.push_back(parse_int(tok, text));
        if (end == std::string_view::npos)
            break;
        start = end + 1;
    }
    return ids;
}

std::string format_id_list(const std::vector<int>& ids, char sep)
{
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i)
            out += sep;
        out += std::to_string(ids[i]);
    }
    return out;
}

std::pair<int, int> parse_range(std::string_view text)
{
    const std::size_t colon = text.find(':');
    if (colon == std::string_view::npos) {
        const int v = parse_int(text, text);
        return {v, v};
    }
    const int lo = parse_int(text.substr(0, colon), text);
    const int hi = parse_int(text.substr(colon + 1), text);
    if (lo > hi)
        throw ValidationError("empty range '" + std::string(text) + "'");
    return {lo, hi};
}

std::string format_double(double v)
{
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

} // namespace pmuplace
