#pragma once

// Per-instance predictions and their JSON-lines file format:
// {"doc_id": ..., "instance_id": ..., "label": "Process", "probs": [m, p, t]}

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kpc/error.hpp"
#include "kpc/label.hpp"

namespace kpc {

struct InstanceKey {
  std::string doc_id;
  std::string instance_id;

  friend auto operator<=>(const InstanceKey&, const InstanceKey&) = default;
  std::string str() const { return doc_id + "/" + instance_id; }
};

struct Prediction {
  InstanceKey key;
  Label label = Label::Material;
  std::optional<ClassProbs> probs;
};

using PredictionSet = std::vector<Prediction>;

inline Prediction make_prediction(InstanceKey key, const ClassProbs& probs) {
  return {std::move(key), argmax_label(probs), probs};
}

inline nlohmann::ordered_json to_json(const Prediction& p) {
  nlohmann::ordered_json j;
  j["doc_id"] = p.key.doc_id;
  j["instance_id"] = p.key.instance_id;
  j["label"] = std::string(name_of(p.label));
  if (p.probs) j["probs"] = {(*p.probs)[0], (*p.probs)[1], (*p.probs)[2]};
  return j;
}

inline void write_predictions(std::ostream& out, const PredictionSet& set) {
  for (const auto& p : set) out << to_json(p).dump() << '\n';
}

inline void write_predictions(const std::filesystem::path& path, const PredictionSet& set) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  write_predictions(out, set);
}

inline PredictionSet read_predictions(std::istream& in) {
  PredictionSet out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Prediction p;
      p.key = {j.at("doc_id").get<std::string>(), j.at("instance_id").get<std::string>()};
      const auto label = parse_label(j.at("label").get<std::string>());
      if (!label) throw Error(ErrorKind::MalformedLine, "unknown label", line_no);
      p.label = *label;
      if (j.contains("probs") && !j["probs"].is_null()) {
        const auto v = j["probs"].get<std::vector<double>>();
        if (v.size() != kNumLabels) throw Error(ErrorKind::MalformedLine, "probs must have 3 entries", line_no);
        p.probs = ClassProbs{v[0], v[1], v[2]};
      }
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::MalformedLine, e.what(), line_no);
    }
  }
  return out;
}

inline PredictionSet read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  try {
    return read_predictions(in);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.message(), e.line());
  }
}

}  // namespace kpc
