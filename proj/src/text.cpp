#include "biasaudit/text.hpp"

#include <cctype>

namespace biasaudit::text {

std::vector<std::string> split_lower_alnum(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c >= 0x80) {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const auto start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

std::string strip_punct(std::string_view token) {
  const auto punct = [](char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; };
  while (!token.empty() && punct(token.front())) token.remove_prefix(1);
  while (!token.empty() && punct(token.back())) token.remove_suffix(1);
  return std::string(token);
}

}  // namespace biasaudit::text
