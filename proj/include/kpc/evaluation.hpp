#pragma once

// Confusion matrix, per-class and micro F1, and confusion-group error listing.

#include <algorithm>
#include <array>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kpc/corpus.hpp"
#include "kpc/error.hpp"
#include "kpc/label.hpp"
#include "kpc/predictions.hpp"

namespace kpc {

/// Rows are gold, columns are predicted.
struct ConfusionMatrix {
  std::array<std::array<std::size_t, kNumLabels>, kNumLabels> counts{};

  std::size_t& at(Label gold, Label pred) { return counts[index_of(gold)][index_of(pred)]; }
  std::size_t at(Label gold, Label pred) const { return counts[index_of(gold)][index_of(pred)]; }

  std::size_t total() const {
    std::size_t t = 0;
    for (const auto& row : counts) for (auto c : row) t += c;
    return t;
  }
  std::size_t correct() const {
    std::size_t t = 0;
    for (std::size_t i = 0; i < kNumLabels; ++i) t += counts[i][i];
    return t;
  }
  std::size_t gold_count(Label l) const {
    std::size_t t = 0;
    for (auto c : counts[index_of(l)]) t += c;
    return t;
  }
  std::size_t predicted_count(Label l) const {
    std::size_t t = 0;
    for (const auto& row : counts) t += row[index_of(l)];
    return t;
  }
};

struct ClassScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct Scores {
  std::array<ClassScore, kNumLabels> per_class{};
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
};

namespace detail {

inline double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

inline std::map<InstanceKey, Label> index_predictions(const PredictionSet& preds) {
  std::map<InstanceKey, Label> out;
  for (const auto& p : preds) {
    if (!out.emplace(p.key, p.label).second) {
      throw Error(ErrorKind::DuplicateKey, "prediction listed twice for " + p.key.str());
    }
  }
  return out;
}

}  // namespace detail

/// Every gold instance needs exactly one prediction; extra predictions are an error.
inline ConfusionMatrix confusion(const std::vector<InstanceRecord>& gold, const PredictionSet& preds) {
  const auto by_key = detail::index_predictions(preds);
  std::set<InstanceKey> seen;
  ConfusionMatrix m;
  for (const auto& g : gold) {
    if (!g.label) throw Error(ErrorKind::UnlabeledInstance, g.doc_id + "/" + g.instance_id);
    InstanceKey key{g.doc_id, g.instance_id};
    if (!seen.insert(key).second) throw Error(ErrorKind::DuplicateKey, "gold instance listed twice: " + key.str());
    auto it = by_key.find(key);
    if (it == by_key.end()) throw Error(ErrorKind::MissingPrediction, key.str());
    ++m.at(*g.label, it->second);
  }
  for (const auto& [key, label] : by_key) {
    if (!seen.count(key)) throw Error(ErrorKind::UnknownInstance, key.str());
  }
  return m;
}

/// Micro F1 over single-label predictions equals accuracy; it is computed from
/// pooled counts anyway so the definition stays visible.
inline Scores scores(const ConfusionMatrix& m) {
  if (m.total() == 0) throw Error(ErrorKind::EmptyMatrix, "no instances scored");
  Scores s;
  double tp_sum = 0, fp_sum = 0, fn_sum = 0;
  for (Label l : kAllLabels) {
    const double tp = static_cast<double>(m.at(l, l));
    const double pred = static_cast<double>(m.predicted_count(l));
    const double gold = static_cast<double>(m.gold_count(l));
    auto& c = s.per_class[index_of(l)];
    c.precision = detail::safe_div(tp, pred);
    c.recall = detail::safe_div(tp, gold);
    c.f1 = detail::safe_div(2.0 * c.precision * c.recall, c.precision + c.recall);
    c.support = m.gold_count(l);
    tp_sum += tp;
    fp_sum += pred - tp;
    fn_sum += gold - tp;
  }
  const double p = detail::safe_div(tp_sum, tp_sum + fp_sum);
  const double r = detail::safe_div(tp_sum, tp_sum + fn_sum);
  s.micro_f1 = detail::safe_div(2.0 * p * r, p + r);
  for (const auto& c : s.per_class) s.macro_f1 += c.f1 / static_cast<double>(kNumLabels);
  return s;
}

struct SurfaceCount {
  std::string surface;
  std::size_t count = 0;
};

struct ConfusionGroup {
  Label gold;
  Label predicted;
  std::size_t size = 0;
  std::vector<SurfaceCount> surfaces;  // count desc, then surface asc
  std::vector<InstanceKey> instances;  // ordered like `surfaces`
};

/// Off-diagonal groups in (gold, predicted) index order; empty groups are omitted.
inline std::vector<ConfusionGroup> error_analysis(const std::vector<InstanceRecord>& gold,
                                                  const PredictionSet& preds) {
  confusion(gold, preds);  // same validation as the scorer
  const auto by_key = detail::index_predictions(preds);
  using Bucket = std::map<std::string, std::vector<InstanceKey>>;
  std::map<std::pair<std::size_t, std::size_t>, Bucket> buckets;
  for (const auto& g : gold) {
    InstanceKey key{g.doc_id, g.instance_id};
    const Label p = by_key.at(key);
    if (p == *g.label) continue;
    buckets[{index_of(*g.label), index_of(p)}][normalize_whitespace(g.surface)].push_back(std::move(key));
  }
  std::vector<ConfusionGroup> out;
  for (auto& [cell, bucket] : buckets) {
    std::vector<std::pair<std::string, std::vector<InstanceKey>>> entries(bucket.begin(), bucket.end());
    std::stable_sort(entries.begin(), entries.end(),
                     [](const auto& a, const auto& b) { return a.second.size() > b.second.size(); });
    ConfusionGroup grp{label_from_index(cell.first), label_from_index(cell.second), 0, {}, {}};
    for (auto& [surface, keys] : entries) {
      grp.surfaces.push_back({surface, keys.size()});
      grp.size += keys.size();
      for (auto& k : keys) grp.instances.push_back(std::move(k));
    }
    out.push_back(std::move(grp));
  }
  return out;
}

struct EvalReport {
  ConfusionMatrix matrix;
  Scores scores;
  std::vector<ConfusionGroup> errors;
};

inline EvalReport evaluate(const std::vector<InstanceRecord>& gold, const PredictionSet& preds) {
  EvalReport r;
  r.matrix = confusion(gold, preds);
  r.scores = scores(r.matrix);
  r.errors = error_analysis(gold, preds);
  return r;
}

inline nlohmann::ordered_json to_json(const EvalReport& r, std::size_t max_surfaces = 20) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json cm;
  for (Label g : kAllLabels) {
    nlohmann::ordered_json row;
    for (Label p : kAllLabels) row[std::string(name_of(p))] = r.matrix.at(g, p);
    cm[std::string(name_of(g))] = std::move(row);
  }
  j["confusion"] = std::move(cm);
  nlohmann::ordered_json per;
  for (Label l : kAllLabels) {
    const auto& c = r.scores.per_class[index_of(l)];
    per[std::string(name_of(l))] = {
        {"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}};
  }
  j["per_class"] = std::move(per);
  j["micro_f1"] = r.scores.micro_f1;
  j["macro_f1"] = r.scores.macro_f1;
  j["total"] = r.matrix.total();
  nlohmann::ordered_json errs = nlohmann::ordered_json::array();
  for (const auto& g : r.errors) {
    nlohmann::ordered_json e;
    e["gold"] = std::string(name_of(g.gold));
    e["predicted"] = std::string(name_of(g.predicted));
    e["size"] = g.size;
    nlohmann::ordered_json s = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < g.surfaces.size() && i < max_surfaces; ++i) {
      s.push_back({{"surface", g.surfaces[i].surface}, {"count", g.surfaces[i].count}});
    }
    e["surfaces"] = std::move(s);
    nlohmann::ordered_json inst = nlohmann::ordered_json::array();
    for (const auto& k : g.instances) inst.push_back({{"doc_id", k.doc_id}, {"instance_id", k.instance_id}});
    e["instances"] = std::move(inst);
    errs.push_back(std::move(e));
  }
  j["errors"] = std::move(errs);
  return j;
}

inline std::string format_table(const EvalReport& r) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-10s %9s %9s %9s\n", "gold\\pred", "Material", "Process", "Task");
  os << buf;
  for (Label g : kAllLabels) {
    std::snprintf(buf, sizeof buf, "%-10s %9zu %9zu %9zu\n", std::string(name_of(g)).c_str(),
                  r.matrix.at(g, Label::Material), r.matrix.at(g, Label::Process), r.matrix.at(g, Label::Task));
    os << buf;
  }
  os << '\n';
  std::snprintf(buf, sizeof buf, "%-10s %9s %9s %9s %9s\n", "class", "precision", "recall", "f1", "support");
  os << buf;
  for (Label l : kAllLabels) {
    const auto& c = r.scores.per_class[index_of(l)];
    std::snprintf(buf, sizeof buf, "%-10s %9.4f %9.4f %9.4f %9zu\n", std::string(name_of(l)).c_str(),
                  c.precision, c.recall, c.f1, c.support);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "\nmicro-F1 %.4f  macro-F1 %.4f  (n=%zu)\n", r.scores.micro_f1,
                r.scores.macro_f1, r.matrix.total());
  os << buf;
  return os.str();
}

}  // namespace kpc
