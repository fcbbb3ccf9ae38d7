#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "kpc/kpc.hpp"

#ifndef KPC_FIXTURE_DIR
#error "KPC_FIXTURE_DIR must point at data/fixture"
#endif

namespace testing_support {

inline std::filesystem::path fixture_dir() { return KPC_FIXTURE_DIR; }

// Hand-counted from the fixture's .ann files (T lines per label).
inline constexpr kpc::ClassCounts kFixtureTrainCounts = {63, 48, 30};
inline constexpr kpc::ClassCounts kFixtureTestCounts = {28, 29, 12};

/// Fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("kpc-test-" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct ToySet {
  std::vector<kpc::LabeledWindow> data;
  std::shared_ptr<kpc::EmbeddingTable> table;
  kpc::EmbeddingRegistry registry;
};

/// `n` windows of shape (ctx, 4, ctx). Each class owns a disjoint set of
/// center words whose 8-d vectors scatter around a class centroid; context
/// words are shared and get unclustered vectors.
inline ToySet toy_set(std::size_t n, std::uint64_t seed, std::size_t ctx = 2, std::size_t dim = 8) {
  static const std::vector<std::vector<std::string>> center = {
      {"alloy", "oxide", "film", "powder", "crystal", "polymer", "wafer", "brass", "steel", "resin"},
      {"annealing", "sputtering", "milling", "diffraction", "sampling", "coating", "etching", "descent",
       "spectroscopy", "simulation"},
      {"prediction", "storage", "detection", "classification", "prevention", "delivery", "purification",
       "design", "monitoring", "recognition"}};
  static const std::vector<std::string> context = {"the", "of", "we", "using", "for", "a", "with", "by",
                                                   "on", "was", "is", "in", "to", "and", "this", "our"};
  kpc::Rng rng(seed);
  ToySet out;
  out.table = std::make_shared<kpc::EmbeddingTable>("toy", dim);
  std::vector<std::vector<double>> centroid(3, std::vector<double>(dim));
  for (auto& c : centroid) for (auto& x : c) x = rng.normal(0.0, 1.0);
  std::vector<double> v(dim);
  for (std::size_t c = 0; c < 3; ++c) {
    for (const auto& w : center[c]) {
      for (std::size_t k = 0; k < dim; ++k) v[k] = centroid[c][k] + rng.normal(0.0, 0.5);
      out.table->add(w, v);
    }
  }
  for (const auto& w : context) {
    for (auto& x : v) x = rng.normal(0.0, 1.0);
    out.table->add(w, v);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % 3;
    kpc::ContextWindow w;
    for (std::size_t k = 0; k < ctx; ++k) w.left.push_back(context[rng.below(context.size())]);
    const std::size_t len = 1 + rng.below(3);
    for (std::size_t k = 0; k < 4; ++k) {
      if (k < len) w.center.push_back(center[label][rng.below(center[label].size())]);
      else w.center.push_back(kpc::kPad);
    }
    for (std::size_t k = 0; k < ctx; ++k) w.right.push_back(context[rng.below(context.size())]);
    out.data.push_back({std::move(w), kpc::label_from_index(label)});
  }
  out.registry.emplace("toy", out.table);
  return out;
}

struct GoldAndPredictions {
  std::vector<kpc::InstanceRecord> gold;
  kpc::PredictionSet preds;
};

/// Materializes one instance per cell count; rows are gold, columns predicted.
inline GoldAndPredictions instances_for(const std::array<std::array<long, 3>, 3>& cm) {
  GoldAndPredictions out;
  std::size_t n = 0;
  for (std::size_t g = 0; g < 3; ++g) {
    for (std::size_t p = 0; p < 3; ++p) {
      for (long k = 0; k < cm[g][p]; ++k) {
        const std::string id = "T" + std::to_string(++n);
        const std::string doc = "doc" + std::to_string(n % 7);
        out.gold.push_back({doc, id, 0, 1, "w" + std::to_string(n % 5), kpc::label_from_index(g)});
        out.preds.push_back({{doc, id}, kpc::label_from_index(p), std::nullopt});
      }
    }
  }
  return out;
}

inline double accuracy(const kpc::TrainedModel& m, const ToySet& toy) {
  return kpc::training_accuracy(m, toy.data, toy.registry);
}

}  // namespace testing_support
