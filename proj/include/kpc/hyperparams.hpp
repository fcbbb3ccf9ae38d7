#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "kpc/error.hpp"
#include "kpc/random.hpp"
#include "kpc/text_window.hpp"

namespace kpc {

enum class Family { CharCnn, Stacker, AbLstm };

inline constexpr std::array<Family, 3> kAllFamilies = {Family::CharCnn, Family::Stacker,
                                                      Family::AbLstm};

inline std::string_view name_of(Family f) {
  switch (f) {
    case Family::CharCnn: return "cnn";
    case Family::Stacker: return "stacker";
    case Family::AbLstm: return "lstm";
  }
  return "cnn";
}

inline Family parse_family(std::string_view name) {
  for (Family f : kAllFamilies) {
    if (name == name_of(f)) return f;
  }
  throw Error(ErrorKind::Config, "unknown model family '" + std::string(name) + "'");
}

/// One sampled configuration. `left == right` for sampled configurations.
struct HyperParams {
  Family family = Family::CharCnn;
  std::size_t left = 3;
  std::size_t center = 4;
  std::size_t right = 3;
  std::size_t num_filters = 250;  // char-CNN filter count
  std::size_t filter_width = 5;   // char-CNN filter size, in characters
  std::size_t char_budget = 100;  // characters per context fed to the char-CNN
  std::string embedding;          // table name; unused by the char-CNN
  std::uint64_t seed = 0;

  WindowShape shape() const { return {left, center, right}; }
  friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

// Context lengths for left == right are drawn uniformly from this multiset.
inline constexpr std::array<std::size_t, 11> kContextLengthMultiset = {1, 2, 2, 3, 3, 3,
                                                                      4, 4, 4, 4, 5};
inline constexpr std::size_t kCenterLength = 4;
inline constexpr double kFilterCountMean = 250.0;
inline constexpr double kFilterCountStddev = 50.0;
inline constexpr std::array<std::size_t, 3> kFilterWidths = {3, 5, 7};

/// Draw order: context length, embedding name, then (char-CNN only) filter
/// count and width. The model seed is the next raw draw.
inline HyperParams sample_hyperparams(Rng& rng, Family family,
                                      std::span<const std::string> table_names = {}) {
  HyperParams hp;
  hp.family = family;
  const std::size_t ctx = kContextLengthMultiset[rng.below(kContextLengthMultiset.size())];
  hp.left = ctx;
  hp.right = ctx;
  hp.center = kCenterLength;
  if (!table_names.empty()) hp.embedding = table_names[rng.below(table_names.size())];
  if (family == Family::CharCnn) {
    const double m = std::round(rng.normal(kFilterCountMean, kFilterCountStddev));
    hp.num_filters = m < 1.0 ? 1 : static_cast<std::size_t>(m);
    hp.filter_width = kFilterWidths[rng.below(kFilterWidths.size())];
  }
  hp.seed = rng.next_u64();
  return hp;
}

inline void validate(const HyperParams& hp) {
  validate_shape(hp.shape());
  if (hp.num_filters == 0 || hp.filter_width == 0) {
    throw Error(ErrorKind::Config, "filter count and width must be >= 1");
  }
  if (hp.family == Family::CharCnn && hp.char_budget < hp.filter_width) {
    throw Error(ErrorKind::Config, "char budget smaller than filter width");
  }
  if (hp.family != Family::CharCnn && hp.embedding.empty()) {
    throw Error(ErrorKind::Config, std::string(name_of(hp.family)) + " needs an embedding table");
  }
}

inline nlohmann::ordered_json to_json(const HyperParams& hp) {
  nlohmann::ordered_json j;
  j["family"] = std::string(name_of(hp.family));
  j["left"] = hp.left;
  j["center"] = hp.center;
  j["right"] = hp.right;
  j["num_filters"] = hp.num_filters;
  j["filter_width"] = hp.filter_width;
  j["char_budget"] = hp.char_budget;
  j["embedding"] = hp.embedding;
  j["seed"] = hp.seed;
  return j;
}

inline HyperParams hyperparams_from_json(const nlohmann::json& j) {
  HyperParams hp;
  hp.family = parse_family(j.at("family").get<std::string>());
  hp.left = j.at("left").get<std::size_t>();
  hp.center = j.at("center").get<std::size_t>();
  hp.right = j.at("right").get<std::size_t>();
  hp.num_filters = j.at("num_filters").get<std::size_t>();
  hp.filter_width = j.at("filter_width").get<std::size_t>();
  hp.char_budget = j.at("char_budget").get<std::size_t>();
  hp.embedding = j.at("embedding").get<std::string>();
  hp.seed = j.at("seed").get<std::uint64_t>();
  return hp;
}

}  // namespace kpc
