#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace damqa::text {

constexpr bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

constexpr bool is_digit(char c) { return c >= '0' && c <= '9'; }

constexpr char to_lower(char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

std::string_view trim(std::string_view s);
std::string lower(std::string_view s);
bool iequals(std::string_view a, std::string_view b);

/// Code points of a UTF-8 string. Bytes that do not start a valid sequence
/// become single units (0xDC00 + byte), so every input decodes.
std::vector<char32_t> utf8_decode(std::string_view s);

std::vector<std::string> split_whitespace(std::string_view s);

}  // namespace damqa::text
