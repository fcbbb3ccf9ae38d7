#pragma once

// Hyperparameter-sampled populations and hard-label majority voting.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "kpc/corpus.hpp"
#include "kpc/error.hpp"
#include "kpc/hyperparams.hpp"
#include "kpc/model.hpp"
#include "kpc/predictions.hpp"
#include "kpc/random.hpp"
#include "kpc/text_window.hpp"

namespace kpc {

using ClassCounts = std::array<std::size_t, kNumLabels>;

// --- windows over datasets ------------------------------------------------------

struct KeyedWindow {
  InstanceKey key;
  ContextWindow window;
};

/// Windows for every instance, in dataset order. Each document is tokenized once.
inline std::vector<KeyedWindow> keyed_windows(const Dataset& data, const WindowShape& shape) {
  std::vector<KeyedWindow> out;
  out.reserve(data.instance_count());
  for (const auto& doc : data.documents) {
    const auto tokens = tokenize(std::u32string_view(doc.chars));
    for (const auto& inst : doc.instances) {
      out.push_back({{doc.doc_id, inst.id}, extract_window(tokens, inst, shape)});
    }
  }
  return out;
}

inline std::vector<LabeledWindow> labeled_windows(const Dataset& data, const WindowShape& shape) {
  std::vector<LabeledWindow> out;
  out.reserve(data.instance_count());
  for (const auto& doc : data.documents) {
    const auto tokens = tokenize(std::u32string_view(doc.chars));
    for (const auto& inst : doc.instances) {
      if (!inst.gold_label) throw Error(ErrorKind::UnlabeledInstance, doc.doc_id + "/" + inst.id);
      out.push_back({extract_window(tokens, inst, shape), *inst.gold_label});
    }
  }
  return out;
}

inline PredictionSet predict_dataset(const TrainedModel& model, const Dataset& data,
                                     const EmbeddingRegistry& tables) {
  PredictionSet out;
  for (auto& kw : keyed_windows(data, model.hyperparams().shape())) {
    out.push_back(make_prediction(std::move(kw.key), predict_proba(model, kw.window, tables)));
  }
  return out;
}

// --- populations ------------------------------------------------------------------

struct PopulationSpec {
  std::size_t n_cnn = 56;
  std::size_t n_stacker = 90;
  std::size_t n_lstm = 20;
  std::uint64_t master_seed = 0;

  std::size_t count(Family f) const {
    switch (f) {
      case Family::CharCnn: return n_cnn;
      case Family::Stacker: return n_stacker;
      case Family::AbLstm: return n_lstm;
    }
    return 0;
  }
  std::size_t total() const { return n_cnn + n_stacker + n_lstm; }
};

inline void validate(const PopulationSpec& spec) {
  if (spec.total() == 0) throw Error(ErrorKind::InvalidPopulation, "every family count is zero");
}

struct ModelSlot {
  Family family = Family::CharCnn;
  std::size_t index = 0;
  HyperParams hp;

  std::string id() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%03zu", index);
    return std::string(name_of(family)) + "-" + buf;
  }
};

/// Family order cnn, stacker, lstm. Slot i of a family draws from its own
/// stream, so growing one count never changes the other models.
inline std::vector<ModelSlot> plan_population(const PopulationSpec& spec,
                                              std::span<const std::string> table_names) {
  validate(spec);
  std::vector<ModelSlot> slots;
  for (Family f : kAllFamilies) {
    for (std::size_t i = 0; i < spec.count(f); ++i) {
      Rng rng(derive_seed(spec.master_seed, 1 + static_cast<std::uint64_t>(f), i));
      slots.push_back({f, i, sample_hyperparams(rng, f, table_names)});
    }
  }
  return slots;
}

/// Runs `job(i)` for i in [0, n) on up to `workers` threads. Failures are
/// captured per job and never stop the others.
inline std::vector<std::exception_ptr> run_pool(std::size_t n, std::size_t workers,
                                                const std::function<void(std::size_t)>& job) {
  std::vector<std::exception_ptr> failures(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        job(i);
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return failures;
}

inline std::string describe(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const std::exception& ex) {
    return ex.what();
  } catch (...) {
    return "unknown failure";
  }
}

/// One model per slot, in slot order. The first failure is rethrown with its
/// model id attached.
inline std::vector<TrainedModel> train_population(const PopulationSpec& spec, const Dataset& train_data,
                                                  const EmbeddingRegistry& tables,
                                                  const TrainConfig& config = {}, std::size_t workers = 1) {
  if (train_data.instance_count() == 0) throw Error(ErrorKind::EmptyTrainingSet, "population");
  std::vector<std::string> names;
  for (const auto& [name, table] : tables) names.push_back(name);
  const auto slots = plan_population(spec, names);
  std::vector<std::optional<TrainedModel>> models(slots.size());
  auto failures = run_pool(slots.size(), workers, [&](std::size_t i) {
    models[i].emplace(train(slots[i].hp, labeled_windows(train_data, slots[i].hp.shape()), tables, config));
  });
  std::vector<TrainedModel> out;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (failures[i]) {
      try {
        std::rethrow_exception(failures[i]);
      } catch (const Error& e) {
        throw Error(e.kind(), slots[i].id() + ": " + e.message(), e.line());
      }
    }
    out.push_back(std::move(*models[i]));
  }
  return out;
}

// --- voting -------------------------------------------------------------------------

struct Composition {
  std::set<Family> families;

  bool includes(Family f) const { return families.count(f) != 0; }

  std::string name() const {
    std::string s;
    if (includes(Family::Stacker)) s += 's';
    if (includes(Family::CharCnn)) s += 'c';
    if (includes(Family::AbLstm)) s += 'l';
    return s;
  }
};

/// Letters s (stackers), c (CNNs), l (AB-LSTMs) in any order, or the aliases
/// "stackers", "stackers+cnns" and "all".
inline Composition parse_composition(std::string_view text) {
  if (text == "stackers") text = "s";
  else if (text == "stackers+cnns") text = "sc";
  else if (text == "all") text = "scl";
  Composition c;
  for (char ch : text) {
    switch (ch) {
      case 's': c.families.insert(Family::Stacker); break;
      case 'c': c.families.insert(Family::CharCnn); break;
      case 'l': c.families.insert(Family::AbLstm); break;
      default: throw Error(ErrorKind::Config, "unknown composition '" + std::string(text) + "'");
    }
  }
  if (c.families.empty()) throw Error(ErrorKind::Config, "empty composition");
  return c;
}

struct Voter {
  std::string name;
  Family family = Family::CharCnn;
  PredictionSet predictions;
};

/// Classes ordered by training count (descending), then Material, Process, Task.
inline std::array<Label, kNumLabels> tie_order(const ClassCounts& priors) {
  std::array<Label, kNumLabels> order = kAllLabels;
  std::stable_sort(order.begin(), order.end(),
                   [&](Label a, Label b) { return priors[index_of(a)] > priors[index_of(b)]; });
  return order;
}

/// Most votes wins; equal counts go to whichever comes first in `order`.
inline Label vote(const ClassCounts& histogram, const std::array<Label, kNumLabels>& order) {
  Label best = order[0];
  for (Label l : order) {
    if (histogram[index_of(l)] > histogram[index_of(best)]) best = l;
  }
  return best;
}

struct VoteRow {
  InstanceKey key;
  ClassCounts histogram{};
  Label winner = Label::Material;
  std::size_t margin = 0;  // winner minus runner-up; 0 flags a tie
  bool tie = false;
};

namespace detail {

/// Histograms in key order over the participating voters.
inline std::map<InstanceKey, ClassCounts> tally(const std::vector<Voter>& voters, const Composition& comp,
                                                std::size_t& participants) {
  std::map<InstanceKey, ClassCounts> hist;
  std::vector<std::map<InstanceKey, Label>> indexed;
  for (const auto& v : voters) {
    if (!comp.includes(v.family)) continue;
    std::map<InstanceKey, Label> m;
    for (const auto& p : v.predictions) {
      if (!m.emplace(p.key, p.label).second) {
        throw Error(ErrorKind::DuplicateKey, v.name + " predicts " + p.key.str() + " twice");
      }
      hist.try_emplace(p.key, ClassCounts{});
    }
    indexed.push_back(std::move(m));
  }
  participants = indexed.size();
  if (participants == 0) {
    throw Error(ErrorKind::Config, "no voters match composition '" + comp.name() + "'");
  }
  std::size_t vi = 0;
  for (const auto& v : voters) {
    if (!comp.includes(v.family)) continue;
    const auto& m = indexed[vi++];
    for (auto& [key, h] : hist) {
      auto it = m.find(key);
      if (it == m.end()) throw Error(ErrorKind::MissingPrediction, v.name + " lacks " + key.str());
      ++h[index_of(it->second)];
    }
  }
  return hist;
}

}  // namespace detail

inline std::vector<VoteRow> vote_margin_report(const std::vector<Voter>& voters, const Composition& comp,
                                               const ClassCounts& priors) {
  std::size_t participants = 0;
  const auto hist = detail::tally(voters, comp, participants);
  const auto order = tie_order(priors);
  std::vector<VoteRow> rows;
  rows.reserve(hist.size());
  for (const auto& [key, h] : hist) {
    VoteRow r{key, h, vote(h, order), 0, false};
    std::array<std::size_t, kNumLabels> sorted = h;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    r.tie = sorted[0] == sorted[1];
    r.margin = r.tie ? 0 : sorted[0] - sorted[1];
    rows.push_back(std::move(r));
  }
  return rows;
}

/// Output is in key order, so it never depends on the order of `voters`.
inline PredictionSet majority_vote(const std::vector<Voter>& voters, const Composition& comp,
                                   const ClassCounts& priors) {
  PredictionSet out;
  for (auto& row : vote_margin_report(voters, comp, priors)) {
    out.push_back({std::move(row.key), row.winner, std::nullopt});
  }
  return out;
}

inline nlohmann::ordered_json to_json(const VoteRow& r) {
  nlohmann::ordered_json j;
  j["doc_id"] = r.key.doc_id;
  j["instance_id"] = r.key.instance_id;
  j["votes"] = r.histogram;
  j["label"] = std::string(name_of(r.winner));
  j["margin"] = r.margin;
  j["tie"] = r.tie;
  return j;
}

}  // namespace kpc
