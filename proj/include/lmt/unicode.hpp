#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace lmt::unicode {

/// Decodes UTF-8; invalid sequences become U+FFFD.
std::u32string decode(std::string_view utf8);
std::string encode(std::u32string_view text);
void append(std::string& out, char32_t cp);

/// Splits into code points, each as its own UTF-8 string.
std::vector<std::string> split_code_points(std::string_view utf8);

std::string nfc(std::string_view utf8);

bool is_space(char32_t cp);
bool is_control(char32_t cp);
/// Unicode general category P* (includes the Devanagari danda and double danda).
bool is_punct(char32_t cp);
bool is_latin(char32_t cp);
char32_t to_lower(char32_t cp);

/// Lowercases Latin-script code points only.
std::string lower_latin(std::string_view utf8);

}  // namespace lmt::unicode
