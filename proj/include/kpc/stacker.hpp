#pragma once

// Stacked learner: five tree-ensemble base classifiers produce out-of-fold
// class-probability triples on the training data; an MLP meta-classifier is
// trained on those 15-d rows. At prediction time the base learners are the
// ones refit on all training data.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "kpc/embeddings.hpp"
#include "kpc/error.hpp"
#include "kpc/hyperparams.hpp"
#include "kpc/mlp.hpp"
#include "kpc/nn.hpp"
#include "kpc/random.hpp"
#include "kpc/trees.hpp"

namespace kpc {

enum class BaseKind { RandomForest, ExtraTrees, GradientBoosting };

inline std::string_view name_of(BaseKind k) {
  switch (k) {
    case BaseKind::RandomForest: return "random-forest";
    case BaseKind::ExtraTrees: return "extra-trees";
    case BaseKind::GradientBoosting: return "gradient-boosted-trees";
  }
  return "random-forest";
}

struct BaseLearnerSpec {
  std::string name;
  BaseKind kind = BaseKind::RandomForest;
  std::size_t estimators = 200;  // trees, or boosting rounds
  std::size_t max_depth = 0;     // 0 = unlimited
  double learning_rate = 0.1;    // boosting only

  friend bool operator==(const BaseLearnerSpec&, const BaseLearnerSpec&) = default;
};

/// Two forests, two extra-trees ensembles, one booster.
inline std::vector<BaseLearnerSpec> canonical_roster() {
  return {
      {"random-forest-A", BaseKind::RandomForest, 200, 0, 0.1},
      {"random-forest-B", BaseKind::RandomForest, 400, 0, 0.1},
      {"extra-trees-A", BaseKind::ExtraTrees, 200, 0, 0.1},
      {"extra-trees-B", BaseKind::ExtraTrees, 200, 20, 0.1},
      {"gradient-boosted-trees", BaseKind::GradientBoosting, 300, 6, 0.1},
  };
}

inline nlohmann::ordered_json to_json(const BaseLearnerSpec& s) {
  nlohmann::ordered_json j;
  j["name"] = s.name;
  j["kind"] = std::string(name_of(s.kind));
  j["estimators"] = s.estimators;
  j["max_depth"] = s.max_depth;
  j["learning_rate"] = s.learning_rate;
  return j;
}

inline BaseLearnerSpec base_spec_from_json(const nlohmann::json& j) {
  BaseLearnerSpec s;
  s.name = j.at("name").get<std::string>();
  const auto kind = j.at("kind").get<std::string>();
  if (kind == name_of(BaseKind::RandomForest)) {
    s.kind = BaseKind::RandomForest;
  } else if (kind == name_of(BaseKind::ExtraTrees)) {
    s.kind = BaseKind::ExtraTrees;
  } else if (kind == name_of(BaseKind::GradientBoosting)) {
    s.kind = BaseKind::GradientBoosting;
  } else {
    throw Error(ErrorKind::InvalidModel, "unknown base learner kind " + kind);
  }
  s.estimators = j.at("estimators").get<std::size_t>();
  s.max_depth = j.at("max_depth").get<std::size_t>();
  s.learning_rate = j.at("learning_rate").get<double>();
  return s;
}

class BaseLearner {
 public:
  explicit BaseLearner(BaseLearnerSpec spec) : spec_(std::move(spec)) {
    switch (spec_.kind) {
      case BaseKind::RandomForest:
        impl_ = trees::Forest(spec_.estimators, {spec_.max_depth, 0, 2, false}, true);
        break;
      case BaseKind::ExtraTrees:
        impl_ = trees::Forest(spec_.estimators, {spec_.max_depth, 0, 2, true}, false);
        break;
      case BaseKind::GradientBoosting: {
        trees::BoostingOptions opt;
        opt.rounds = spec_.estimators;
        opt.max_depth = spec_.max_depth;
        opt.learning_rate = spec_.learning_rate;
        impl_ = trees::Booster(opt);
        break;
      }
    }
  }

  const BaseLearnerSpec& spec() const { return spec_; }

  void fit(const trees::FeatureMatrix& X, const std::vector<int>& y,
           const std::vector<std::size_t>& rows, std::uint64_t seed) {
    std::visit([&](auto& m) { m.fit(X, y, rows, seed); }, impl_);
  }

  template <typename Row>
  ClassProbs predict_proba(const Row& x) const {
    return std::visit([&](const auto& m) { return m.predict_proba(x); }, impl_);
  }

  nlohmann::json to_json() const {
    return std::visit([](const auto& m) { return m.to_json(); }, impl_);
  }

  void load_json(const nlohmann::json& j) {
    std::visit([&](auto& m) { m.load_json(j); }, impl_);
  }

 private:
  BaseLearnerSpec spec_;
  std::variant<trees::Forest, trees::Booster> impl_;
};

/// Each class is shuffled, then instances are dealt round-robin over the folds.
inline std::vector<int> stratified_folds(const std::vector<int>& labels, std::size_t folds, Rng& rng) {
  std::vector<int> fold_of(labels.size(), -1);
  std::size_t position = 0;
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == static_cast<int>(c)) members.push_back(i);
    }
    rng.shuffle(members);
    for (std::size_t i : members) fold_of[i] = static_cast<int>(position++ % folds);
  }
  return fold_of;
}

/// Per-class holdout of round(fraction * class count) rows; at least one row overall.
inline std::vector<char> stratified_holdout(const std::vector<int>& labels, double fraction, Rng& rng) {
  std::vector<char> held(labels.size(), 0);
  std::size_t total = 0;
  std::size_t largest_class = 0, largest_size = 0;
  std::vector<std::vector<std::size_t>> members(kNumLabels);
  for (std::size_t i = 0; i < labels.size(); ++i) members[static_cast<std::size_t>(labels[i])].push_back(i);
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    rng.shuffle(members[c]);
    const auto take = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(members[c].size()) + 0.5));
    for (std::size_t k = 0; k < take && k < members[c].size(); ++k) held[members[c][k]] = 1;
    total += std::min(take, members[c].size());
    if (members[c].size() > largest_size) {
      largest_size = members[c].size();
      largest_class = c;
    }
  }
  if (total == 0 && largest_size > 0) held[members[largest_class][0]] = 1;
  return held;
}

struct MetaFeatures {
  Eigen::MatrixXd values;                         // rows x (3 * learners)
  std::vector<int> fold_of;                       // held-out fold of each row
  std::vector<std::vector<std::size_t>> trained_on;  // rows fitted for each fold
  std::vector<std::string> learner_names;
};

/// Concatenates per-learner probability triples into one meta row.
inline nn::Vector assemble_meta_row(const std::vector<ClassProbs>& per_learner) {
  nn::Vector row(static_cast<Eigen::Index>(per_learner.size() * kNumLabels));
  for (std::size_t l = 0; l < per_learner.size(); ++l) {
    for (std::size_t k = 0; k < kNumLabels; ++k) {
      row[static_cast<Eigen::Index>(l * kNumLabels + k)] = per_learner[l][k];
    }
  }
  return row;
}

inline MetaFeatures generate_oof(const std::vector<BaseLearnerSpec>& specs,
                                 const trees::FeatureMatrix& X, const std::vector<int>& y,
                                 std::size_t folds, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(X.rows());
  if (folds < 2) throw Error(ErrorKind::Config, "need at least 2 folds");
  if (n < folds || y.size() != n) {
    throw Error(ErrorKind::TooFewInstances,
                std::to_string(n) + " instances for " + std::to_string(folds) + " folds");
  }
  Rng rng(derive_seed(seed, 0xF01D));
  MetaFeatures meta;
  meta.fold_of = stratified_folds(y, folds, rng);
  meta.values = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n),
                                          static_cast<Eigen::Index>(specs.size() * kNumLabels),
                                          std::numeric_limits<double>::quiet_NaN());
  meta.trained_on.resize(folds);
  for (const auto& s : specs) meta.learner_names.push_back(s.name);

  for (std::size_t k = 0; k < folds; ++k) {
    std::vector<std::size_t> train_rows, held_rows;
    for (std::size_t i = 0; i < n; ++i) {
      (meta.fold_of[i] == static_cast<int>(k) ? held_rows : train_rows).push_back(i);
    }
    meta.trained_on[k] = train_rows;
    for (std::size_t l = 0; l < specs.size(); ++l) {
      BaseLearner learner(specs[l]);
      learner.fit(X, y, train_rows, derive_seed(seed, 0xBA5E + l, k));
      for (std::size_t i : held_rows) {
        const ClassProbs p = learner.predict_proba(X.row(static_cast<Eigen::Index>(i)));
        for (std::size_t c = 0; c < kNumLabels; ++c) {
          meta.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l * kNumLabels + c)) = p[c];
        }
      }
    }
  }
  return meta;
}

struct MetaConfig {
  std::size_t hidden = 100;
  std::size_t epochs = 100;
  double dev_fraction = 0.10;
  nn::Regimen regimen{100, 32, 0.03};  // epochs field ignored; `epochs` above rules
};

struct MetaFit {
  Mlp model;
  std::size_t chosen_epoch = 0;  // 1-based
  std::vector<double> dev_scores;  // dev micro-F1 after each epoch
  std::vector<char> dev_rows;
};

/// Trains for exactly `epochs` epochs and keeps the snapshot with the highest
/// dev micro-F1; ties go to the earliest epoch.
inline MetaFit train_meta(const Eigen::MatrixXd& meta, const std::vector<int>& labels,
                          const MetaConfig& config, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(meta.rows());
  if (n < 10 || labels.size() != n) {
    throw Error(ErrorKind::TooFewInstances, "meta-classifier needs at least 10 rows");
  }
  Rng rng(derive_seed(seed, 0x3E7A));
  const std::vector<char> dev = stratified_holdout(labels, config.dev_fraction, rng);
  std::vector<std::size_t> train_rows, dev_rows;
  for (std::size_t i = 0; i < n; ++i) (dev[i] ? dev_rows : train_rows).push_back(i);

  Mlp mlp(static_cast<std::size_t>(meta.cols()), config.hidden, rng);
  MetaFit fit{mlp, 0, {}, dev};
  double best = -1.0;
  nn::Adam adam(mlp.params(), config.regimen.learning_rate);
  const std::size_t batch = std::max<std::size_t>(config.regimen.batch_size, 1);
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(train_rows);
    for (std::size_t b = 0; b < train_rows.size(); b += batch) {
      const std::size_t e = std::min(train_rows.size(), b + batch);
      mlp.params().zero_grad();
      for (std::size_t k = b; k < e; ++k) {
        const std::size_t i = train_rows[k];
        mlp.accumulate_gradient(meta.row(static_cast<Eigen::Index>(i)).transpose(),
                                label_from_index(static_cast<std::size_t>(labels[i])));
      }
      mlp.params().scale_grad(1.0 / static_cast<double>(e - b));
      adam.step(mlp.params());
    }
    std::size_t correct = 0;
    for (std::size_t i : dev_rows) {
      const auto p = mlp.predict(meta.row(static_cast<Eigen::Index>(i)).transpose());
      if (index_of(argmax_label(p)) == static_cast<std::size_t>(labels[i])) ++correct;
    }
    const double score = static_cast<double>(correct) / static_cast<double>(dev_rows.size());
    fit.dev_scores.push_back(score);
    if (score > best) {
      best = score;
      fit.chosen_epoch = epoch;
      fit.model = mlp;
    }
  }
  return fit;
}

struct StackerConfig {
  std::vector<BaseLearnerSpec> roster = canonical_roster();
  std::size_t folds = 10;
  MetaConfig meta;
};

class StackerModel {
 public:
  StackerModel(std::vector<BaseLearner> bases, Mlp meta)
      : bases_(std::move(bases)), meta_(std::move(meta)) {}

  const std::vector<BaseLearner>& bases() const { return bases_; }
  std::vector<BaseLearner>& bases() { return bases_; }
  const Mlp& meta() const { return meta_; }
  Mlp& meta() { return meta_; }

  std::vector<ClassProbs> base_probs(const FeatureVector& x) const {
    std::vector<ClassProbs> out;
    for (const auto& b : bases_) out.push_back(b.predict_proba(x));
    return out;
  }

  ClassProbs predict_proba(const FeatureVector& x) const {
    return meta_.predict(assemble_meta_row(base_probs(x)));
  }

 private:
  std::vector<BaseLearner> bases_;
  Mlp meta_;
};

struct StackerFit {
  StackerModel model;
  MetaFeatures oof;
  std::size_t chosen_epoch = 0;
  double dev_score = 0.0;
};

inline trees::FeatureMatrix feature_matrix(const std::vector<LabeledWindow>& data,
                                           const EmbeddingTable& table, std::vector<int>& labels) {
  labels.clear();
  if (data.empty()) return {};
  const auto dim = static_cast<Eigen::Index>(data.front().window.shape().total() * table.dim());
  trees::FeatureMatrix X(static_cast<Eigen::Index>(data.size()), dim);
  for (std::size_t i = 0; i < data.size(); ++i) {
    X.row(static_cast<Eigen::Index>(i)) = embed_window(data[i].window, table).transpose();
    labels.push_back(static_cast<int>(index_of(data[i].label)));
  }
  return X;
}

inline StackerFit train_stacker(const HyperParams& hp, const std::vector<LabeledWindow>& data,
                                const EmbeddingTable& table, const StackerConfig& config) {
  if (data.empty()) throw Error(ErrorKind::EmptyTrainingSet, "stacker");
  std::vector<int> y;
  const trees::FeatureMatrix X = feature_matrix(data, table, y);
  MetaFeatures oof = generate_oof(config.roster, X, y, config.folds, hp.seed);
  MetaFit meta = train_meta(oof.values, y, config.meta, hp.seed);

  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<BaseLearner> bases;
  for (std::size_t l = 0; l < config.roster.size(); ++l) {
    BaseLearner learner(config.roster[l]);
    learner.fit(X, y, all, derive_seed(hp.seed, 0xF111 + l));
    bases.push_back(std::move(learner));
  }
  const double dev = meta.dev_scores.empty() ? 0.0 : meta.dev_scores[meta.chosen_epoch - 1];
  return {StackerModel(std::move(bases), std::move(meta.model)), std::move(oof), meta.chosen_epoch, dev};
}

}  // namespace kpc
