#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace grpopp {

// The seven diagnosis classes in canonical order. The order is also the
// deterministic tie-break order for majority voting.
enum class Label : std::size_t {
  AK = 0,
  BCC,
  Dermatitis,
  Melanoma,
  Psoriasis,
  Rosacea,
  SK,
};

inline constexpr std::size_t kNumLabels = 7;

inline constexpr std::array<Label, kNumLabels> kAllLabels = {
    Label::AK,        Label::BCC,     Label::Dermatitis, Label::Melanoma,
    Label::Psoriasis, Label::Rosacea, Label::SK};

constexpr std::size_t index_of(Label l) noexcept {
  return static_cast<std::size_t>(l);
}

constexpr Label label_at(std::size_t i) noexcept {
  return static_cast<Label>(i);
}

constexpr std::string_view short_name(Label l) noexcept {
  constexpr std::array<std::string_view, kNumLabels> names = {
      "AK", "BCC", "Dermatitis", "Melanoma", "Psoriasis", "Rosacea", "SK"};
  return names[index_of(l)];
}

constexpr std::string_view full_name(Label l) noexcept {
  constexpr std::array<std::string_view, kNumLabels> names = {
      "Actinic Keratosis", "Basal Cell Carcinoma", "Dermatitis", "Melanoma",
      "Psoriasis",         "Rosacea",              "Seborrheic Keratosis"};
  return names[index_of(l)];
}

namespace detail {

struct Alias {
  std::string_view key;  // lower-case
  Label label;
};

// Full names, canonical short names and the table abbreviations.
inline constexpr std::array<Alias, 23> kAliases = {{
    {"ak", Label::AK},
    {"actinic keratosis", Label::AK},
    {"bcc", Label::BCC},
    {"basal cell carcinoma", Label::BCC},
    {"derm", Label::Dermatitis},
    {"derm.", Label::Dermatitis},
    {"dermatitis", Label::Dermatitis},
    {"mel", Label::Melanoma},
    {"mel.", Label::Melanoma},
    {"melanoma", Label::Melanoma},
    {"psor", Label::Psoriasis},
    {"psor.", Label::Psoriasis},
    {"psoriasis", Label::Psoriasis},
    {"ros", Label::Rosacea},
    {"ros.", Label::Rosacea},
    {"rosacea", Label::Rosacea},
    {"sk", Label::SK},
    {"seborrheic keratosis", Label::SK},
    {"seborrhoeic keratosis", Label::SK},
    {"actinic keratoses", Label::AK},
    {"seborrheic keratoses", Label::SK},
    {"basal cell carcinomas", Label::BCC},
    {"melanomas", Label::Melanoma},
}};

inline std::string normalize_key(std::string_view text) {
  auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  auto last = text.find_last_not_of(" \t\r\n");
  std::string out;
  out.reserve(last - first + 1);
  bool prev_space = false;
  for (char c : text.substr(first, last - first + 1)) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!prev_space) out.push_back(' ');
      prev_space = true;
    } else {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
      prev_space = false;
    }
  }
  return out;
}

}  // namespace detail

// Case-insensitive alias lookup; surrounding whitespace is ignored and inner
// runs of whitespace collapse to one space.
inline std::optional<Label> parse_label(std::string_view text) {
  const std::string key = detail::normalize_key(text);
  for (const auto& a : detail::kAliases) {
    if (a.key == key) return a.label;
  }
  return std::nullopt;
}

inline std::string label_or_invalid(const std::optional<Label>& l) {
  return l ? std::string(short_name(*l)) : std::string("invalid");
}

}  // namespace grpopp
