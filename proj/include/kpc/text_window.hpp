#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "kpc/corpus.hpp"
#include "kpc/error.hpp"
#include "kpc/utf8.hpp"

namespace kpc {

struct Token {
  std::string text;
  std::size_t start = 0;  // code points
  std::size_t end = 0;
};

/// A window slot holds a token or PAD (`std::nullopt`).
using Slot = std::optional<std::string>;
inline const Slot kPad = std::nullopt;

struct WindowShape {
  std::size_t left = 0;
  std::size_t center = 0;
  std::size_t right = 0;

  std::size_t total() const { return left + center + right; }
  friend bool operator==(const WindowShape&, const WindowShape&) = default;
};

/// Fixed-size token triple around a keyphrase. PAD sits at the outer edge of
/// `left` and at the tail of `center` and `right`.
struct ContextWindow {
  std::vector<Slot> left;
  std::vector<Slot> center;
  std::vector<Slot> right;

  WindowShape shape() const { return {left.size(), center.size(), right.size()}; }

  /// left | center | right as one sequence.
  std::vector<Slot> flattened() const {
    std::vector<Slot> out(left);
    out.insert(out.end(), center.begin(), center.end());
    out.insert(out.end(), right.begin(), right.end());
    return out;
  }
};

struct LabeledWindow {
  ContextWindow window;
  Label label = Label::Material;
};

inline bool is_ascii_punct(char32_t cp) {
  return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) || (cp >= 0x5B && cp <= 0x60) ||
         (cp >= 0x7B && cp <= 0x7E);
}

/// Whitespace split, then leading and trailing ASCII punctuation are detached
/// one character per token. Internal punctuation stays ("copper-zinc").
inline std::vector<Token> tokenize(std::u32string_view text) {
  std::vector<Token> out;
  auto emit = [&](std::size_t b, std::size_t e) {
    out.push_back({utf8::encode(text.substr(b, e - b)), b, e});
  };
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && utf8::is_space(text[i])) ++i;
    if (i >= text.size()) break;
    std::size_t j = i;
    while (j < text.size() && !utf8::is_space(text[j])) ++j;

    std::size_t b = i;
    std::size_t e = j;
    while (b < e && is_ascii_punct(text[b])) {
      emit(b, b + 1);
      ++b;
    }
    std::size_t core_end = e;
    while (core_end > b && is_ascii_punct(text[core_end - 1])) --core_end;
    if (core_end > b) emit(b, core_end);
    for (std::size_t k = core_end; k < e; ++k) emit(k, k + 1);
    i = j;
  }
  return out;
}

inline std::vector<Token> tokenize(std::string_view utf8_text) {
  return tokenize(std::u32string_view(utf8::decode(utf8_text)));
}

inline void validate_shape(const WindowShape& shape) {
  if (shape.left == 0 || shape.center == 0 || shape.right == 0) {
    throw Error(ErrorKind::Config, "window sizes must be >= 1");
  }
}

/// Window from a pre-tokenized document. A token belongs to the center when its
/// interval intersects [start, end).
inline ContextWindow extract_window(const std::vector<Token>& tokens,
                                    const KeyphraseInstance& inst, const WindowShape& shape) {
  validate_shape(shape);
  std::size_t first_in = tokens.size();  // first overlapping or following token
  std::size_t after = tokens.size();     // first token entirely after the span
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    if (tokens[k].end > inst.start && first_in == tokens.size()) first_in = k;
    if (tokens[k].start >= inst.end) {
      after = k;
      break;
    }
  }
  if (first_in > after) first_in = after;

  ContextWindow w;
  w.left.assign(shape.left, kPad);
  w.center.assign(shape.center, kPad);
  w.right.assign(shape.right, kPad);

  for (std::size_t k = 0; k < shape.left && k < first_in; ++k) {
    w.left[shape.left - 1 - k] = tokens[first_in - 1 - k].text;
  }
  for (std::size_t k = 0; k < shape.center && first_in + k < after; ++k) {
    w.center[k] = tokens[first_in + k].text;
  }
  for (std::size_t k = 0; k < shape.right && after + k < tokens.size(); ++k) {
    w.right[k] = tokens[after + k].text;
  }
  return w;
}

inline ContextWindow extract_window(const Document& doc, const KeyphraseInstance& inst,
                                    const WindowShape& shape) {
  const KeyphraseInstance* own = doc.find(inst.id);
  if (own == nullptr || own->start != inst.start || own->end != inst.end) {
    throw Error(ErrorKind::InstanceNotInDocument, inst.id + " in " + doc.doc_id);
  }
  return extract_window(tokenize(std::u32string_view(doc.chars)), inst, shape);
}

inline nlohmann::ordered_json to_json(const ContextWindow& w) {
  auto slots = [](const std::vector<Slot>& v) {
    nlohmann::ordered_json a = nlohmann::ordered_json::array();
    for (const auto& s : v) {
      if (s) {
        a.push_back(*s);
      } else {
        a.push_back(nullptr);
      }
    }
    return a;
  };
  nlohmann::ordered_json j;
  j["left"] = slots(w.left);
  j["center"] = slots(w.center);
  j["right"] = slots(w.right);
  return j;
}

}  // namespace kpc
