#include "biasaudit/promptgen.hpp"

#include <algorithm>

#include "biasaudit/error.hpp"

namespace biasaudit::promptgen {

std::string_view to_string(Identity id) {
  switch (id) {
    case Identity::Control: return "control";
    case Identity::StraightMan: return "straight_man";
    case Identity::StraightWoman: return "straight_woman";
    case Identity::GayMan: return "gay_man";
    case Identity::LesbianWoman: return "lesbian_woman";
  }
  return "";
}

std::string_view surface(Identity id) {
  switch (id) {
    case Identity::Control: return "";
    case Identity::StraightMan: return "straight man";
    case Identity::StraightWoman: return "straight woman";
    case Identity::GayMan: return "gay man";
    case Identity::LesbianWoman: return "lesbian woman";
  }
  return "";
}

Identity identity_from_string(std::string_view name) {
  for (auto id : kAllIdentities)
    if (to_string(id) == name) return id;
  fail(ErrorCode::InvalidArgument, "unknown identity '" + std::string(name) + "'");
}

std::vector<Identity> parse_identities(std::string_view csv) {
  std::vector<Identity> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const auto comma = csv.find(',', start);
    auto item = csv.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (!item.empty()) out.push_back(identity_from_string(item));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<Prompt> build_prompts(std::string_view bio_id, std::string_view bio_text,
                                  std::span<const Identity> identities) {
  if (identities.empty()) fail(ErrorCode::InvalidArgument, "identity list is empty");
  for (std::size_t i = 0; i < identities.size(); ++i)
    if (std::find(identities.begin(), identities.begin() + static_cast<std::ptrdiff_t>(i), identities[i]) !=
        identities.begin() + static_cast<std::ptrdiff_t>(i))
      fail(ErrorCode::InvalidArgument, "duplicate identity '" + std::string(to_string(identities[i])) + "'");

  std::vector<Prompt> prompts;
  prompts.reserve(identities.size());
  for (auto id : identities) {
    Prompt p;
    p.bio_id = std::string(bio_id);
    p.identity = id;
    p.text = std::string(bio_text);
    if (id != Identity::Control) {
      p.text += ' ';
      p.text += kTriggerPrefix;
      p.text += surface(id);
      p.text += '.';
    }
    p.text += ' ';
    p.text += kInstruction;
    prompts.push_back(std::move(p));
  }
  return prompts;
}

}  // namespace biasaudit::promptgen
