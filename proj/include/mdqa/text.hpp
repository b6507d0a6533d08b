#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace mdqa::text {

bool is_space(char c) noexcept;

std::string_view trim(std::string_view s) noexcept;

/// Collapses every whitespace run to one space and strips both ends.
std::string collapse_whitespace(std::string_view s);

std::vector<std::string> split_lines(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Number of UTF-8 code points; malformed bytes count as one each.
std::size_t utf8_length(std::string_view s) noexcept;

/// Longest prefix holding at most `max_chars` code points, never splitting a
/// multi-byte sequence.
std::string_view utf8_prefix(std::string_view s, std::size_t max_chars) noexcept;

std::string to_lower_ascii(std::string_view s);

bool starts_with(std::string_view s, std::string_view prefix) noexcept;

}  // namespace mdqa::text
