#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "kpc/error.hpp"

namespace kpc {

/// Keyphrase class. The enumerator order is the fixed tie order M < P < T.
enum class Label : std::size_t { Material = 0, Process = 1, Task = 2 };

inline constexpr std::size_t kNumLabels = 3;
inline constexpr std::array<Label, kNumLabels> kAllLabels = {Label::Material, Label::Process,
                                                            Label::Task};

using ClassProbs = std::array<double, kNumLabels>;

constexpr std::size_t index_of(Label label) { return static_cast<std::size_t>(label); }

inline Label label_from_index(std::size_t i) {
  if (i >= kNumLabels) throw Error(ErrorKind::Config, "label index out of range");
  return static_cast<Label>(i);
}

/// Serialized names as used in standoff files.
inline std::string_view name_of(Label label) {
  switch (label) {
    case Label::Material: return "Material";
    case Label::Process: return "Process";
    case Label::Task: return "Task";
  }
  return "Material";
}

inline std::optional<Label> parse_label(std::string_view name) {
  for (Label l : kAllLabels) {
    if (name == name_of(l)) return l;
  }
  return std::nullopt;
}

/// Argmax with ties resolved towards the lowest label index.
inline Label argmax_label(const ClassProbs& probs) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < kNumLabels; ++k) {
    if (probs[k] > probs[best]) best = k;
  }
  return label_from_index(best);
}

}  // namespace kpc
