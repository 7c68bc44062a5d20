#pragma once

#include <string>
#include <string_view>

namespace dlava::text {

// Decodes UTF-8 into code points. Invalid sequences decode to U+FFFD one byte
// at a time, so arbitrary bytes never throw.
std::u32string decode_utf8(std::string_view s);
std::string encode_utf8(std::u32string_view s);

std::string trim(std::string_view s);
std::string to_upper_ascii(std::string_view s);
std::string to_lower_ascii(std::string_view s);
// Runs of whitespace become one space.
std::string collapse_whitespace(std::string_view s);

}  // namespace dlava::text
