#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace biasaudit::text {

/// Lowercases ASCII and splits on every byte that is not an ASCII letter or
/// digit. Bytes >= 0x80 are kept inside words so UTF-8 letters survive.
std::vector<std::string> split_lower_alnum(std::string_view text);

/// Whitespace-delimited tokens with their surface form intact.
std::vector<std::string> split_whitespace(std::string_view text);

/// Strips leading and trailing ASCII punctuation.
std::string strip_punct(std::string_view token);

}  // namespace biasaudit::text
