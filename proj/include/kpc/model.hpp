#pragma once

// Common contract over the three model families: train, predict_proba and a
// version-tagged JSON container for persistence.

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "kpc/ab_lstm.hpp"
#include "kpc/char_cnn.hpp"
#include "kpc/embeddings.hpp"
#include "kpc/error.hpp"
#include "kpc/hyperparams.hpp"
#include "kpc/predictions.hpp"
#include "kpc/stacker.hpp"

namespace kpc {

inline constexpr const char* kModelFormat = "kpc-model";
inline constexpr int kModelFormatVersion = 1;

struct TrainConfig {
  nn::Regimen cnn{15, 32, 0.005};
  nn::Regimen lstm{15, 32, 0.005};
  AbLstmShape lstm_shape;  // embed_dim is taken from the bound table
  StackerConfig stacker;
};

struct TrainingInfo {
  std::size_t train_size = 0;
  std::size_t epochs_run = 0;
  double final_loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> dev_score;          // stacker meta-classifier only
  std::optional<std::size_t> chosen_epoch;  // stacker meta-classifier only
};

using ModelBody = std::variant<CharCnn, StackerModel, AbLstm>;

class TrainedModel {
 public:
  TrainedModel(HyperParams hp, TrainingInfo info, ModelBody body)
      : hp_(std::move(hp)), info_(std::move(info)), body_(std::move(body)) {}

  Family family() const { return hp_.family; }
  const HyperParams& hyperparams() const { return hp_; }
  const TrainingInfo& info() const { return info_; }
  TrainingInfo& info() { return info_; }
  const ModelBody& body() const { return body_; }
  ModelBody& body() { return body_; }

 private:
  HyperParams hp_;
  TrainingInfo info_;
  ModelBody body_;
};

/// Simplex over (Material, Process, Task).
inline ClassProbs predict_proba(const TrainedModel& model, const ContextWindow& w,
                                const EmbeddingRegistry& tables) {
  if (!(w.shape() == model.hyperparams().shape())) {
    throw Error(ErrorKind::WindowSizeMismatch, "window does not match the model's (left, center, right)");
  }
  return std::visit(
      [&](const auto& body) -> ClassProbs {
        using T = std::decay_t<decltype(body)>;
        if constexpr (std::is_same_v<T, CharCnn>) {
          return body.predict(w);
        } else if constexpr (std::is_same_v<T, StackerModel>) {
          return body.predict_proba(embed_window(w, require_table(tables, model.hyperparams().embedding)));
        } else {
          return body.predict(embed_sequence(w, require_table(tables, model.hyperparams().embedding)));
        }
      },
      model.body());
}

inline double training_accuracy(const TrainedModel& model, const std::vector<LabeledWindow>& data,
                                const EmbeddingRegistry& tables) {
  if (data.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& ex : data) {
    if (argmax_label(predict_proba(model, ex.window, tables)) == ex.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

/// Deterministic in `hp.seed`; `data` windows must match `hp.shape()`.
inline TrainedModel train(const HyperParams& hp, const std::vector<LabeledWindow>& data,
                          const EmbeddingRegistry& tables, const TrainConfig& config = {}) {
  if (data.empty()) throw Error(ErrorKind::EmptyTrainingSet, std::string(name_of(hp.family)));
  validate(hp);
  for (const auto& ex : data) {
    if (!(ex.window.shape() == hp.shape())) {
      throw Error(ErrorKind::WindowSizeMismatch, "training window does not match hyperparameters");
    }
  }
  TrainingInfo info;
  info.train_size = data.size();
  std::optional<TrainedModel> model;
  switch (hp.family) {
    case Family::CharCnn: {
      auto fit = train_char_cnn(hp, data, config.cnn);
      info.epochs_run = fit.log.train_loss.size();
      info.final_loss = fit.log.train_loss.empty() ? 0.0 : fit.log.train_loss.back();
      model.emplace(hp, info, std::move(fit.net));
      break;
    }
    case Family::Stacker: {
      const auto& table = require_table(tables, hp.embedding);
      auto fit = train_stacker(hp, data, table, config.stacker);
      info.epochs_run = config.stacker.meta.epochs;
      info.dev_score = fit.dev_score;
      info.chosen_epoch = fit.chosen_epoch;
      model.emplace(hp, info, std::move(fit.model));
      break;
    }
    case Family::AbLstm: {
      const auto& table = require_table(tables, hp.embedding);
      auto fit = train_ab_lstm(hp, data, table, config.lstm_shape, config.lstm);
      info.epochs_run = fit.log.train_loss.size();
      info.final_loss = fit.log.train_loss.empty() ? 0.0 : fit.log.train_loss.back();
      model.emplace(hp, info, std::move(fit.net));
      break;
    }
  }
  model->info().train_accuracy = training_accuracy(*model, data, tables);
  return std::move(*model);
}

// --- persistence --------------------------------------------------------------

inline nlohmann::ordered_json to_json(const TrainingInfo& info) {
  nlohmann::ordered_json j;
  j["train_size"] = info.train_size;
  j["epochs_run"] = info.epochs_run;
  j["final_loss"] = info.final_loss;
  j["train_accuracy"] = info.train_accuracy;
  if (info.dev_score) j["dev_score"] = *info.dev_score;
  if (info.chosen_epoch) j["chosen_epoch"] = *info.chosen_epoch;
  return j;
}

inline TrainingInfo training_info_from_json(const nlohmann::json& j) {
  TrainingInfo info;
  info.train_size = j.at("train_size").get<std::size_t>();
  info.epochs_run = j.at("epochs_run").get<std::size_t>();
  info.final_loss = j.at("final_loss").get<double>();
  info.train_accuracy = j.at("train_accuracy").get<double>();
  if (j.contains("dev_score")) info.dev_score = j["dev_score"].get<double>();
  if (j.contains("chosen_epoch")) info.chosen_epoch = j["chosen_epoch"].get<std::size_t>();
  return info;
}

inline nlohmann::ordered_json to_json(const TrainedModel& model) {
  nlohmann::ordered_json j;
  j["format"] = kModelFormat;
  j["version"] = kModelFormatVersion;
  j["family"] = std::string(name_of(model.family()));
  j["hyperparams"] = to_json(model.hyperparams());
  j["training"] = to_json(model.info());
  nlohmann::ordered_json body;
  std::visit(
      [&](const auto& b) {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, CharCnn>) {
          const auto& s = b.shape();
          body["shape"] = {{"vocab", s.vocab},     {"char_dim", s.char_dim}, {"filters", s.filters},
                           {"width", s.width},     {"hidden", s.hidden},     {"budget", s.budget}};
          body["params"] = b.params().to_json();
        } else if constexpr (std::is_same_v<T, StackerModel>) {
          nlohmann::ordered_json bases = nlohmann::ordered_json::array();
          for (const auto& base : b.bases()) {
            nlohmann::ordered_json e;
            e["spec"] = to_json(base.spec());
            e["model"] = base.to_json();
            bases.push_back(std::move(e));
          }
          body["bases"] = std::move(bases);
          body["meta"] = {{"inputs", b.meta().inputs()}, {"hidden", b.meta().hidden()},
                          {"params", b.meta().params().to_json()}};
        } else {
          const auto& s = b.shape();
          body["shape"] = {{"embed_dim", s.embed_dim}, {"filters_per_width", s.filters_per_width},
                           {"widths", s.widths},       {"hidden", s.hidden},
                           {"dropout", s.dropout}};
          body["params"] = b.params().to_json();
        }
      },
      model.body());
  j["body"] = std::move(body);
  return j;
}

inline TrainedModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kModelFormat) {
      throw Error(ErrorKind::InvalidModel, "not a model file");
    }
    if (j.at("version").get<int>() != kModelFormatVersion) {
      throw Error(ErrorKind::InvalidModel, "unsupported model version");
    }
    HyperParams hp = hyperparams_from_json(j.at("hyperparams"));
    if (parse_family(j.at("family").get<std::string>()) != hp.family) {
      throw Error(ErrorKind::InvalidModel, "family tag disagrees with hyperparameters");
    }
    TrainingInfo info = training_info_from_json(j.at("training"));
    const auto& body = j.at("body");
    switch (hp.family) {
      case Family::CharCnn: {
        const auto& s = body.at("shape");
        CharCnnShape shape;
        shape.vocab = s.at("vocab").get<std::size_t>();
        shape.char_dim = s.at("char_dim").get<std::size_t>();
        shape.filters = s.at("filters").get<std::size_t>();
        shape.width = s.at("width").get<std::size_t>();
        shape.hidden = s.at("hidden").get<std::size_t>();
        shape.budget = s.at("budget").get<std::size_t>();
        CharCnn net(shape);
        net.params().load_json(body.at("params"));
        return {std::move(hp), std::move(info), std::move(net)};
      }
      case Family::Stacker: {
        std::vector<BaseLearner> bases;
        for (const auto& e : body.at("bases")) {
          BaseLearner learner(base_spec_from_json(e.at("spec")));
          learner.load_json(e.at("model"));
          bases.push_back(std::move(learner));
        }
        const auto& m = body.at("meta");
        Mlp meta(m.at("inputs").get<std::size_t>(), m.at("hidden").get<std::size_t>());
        meta.params().load_json(m.at("params"));
        return {std::move(hp), std::move(info), StackerModel(std::move(bases), std::move(meta))};
      }
      case Family::AbLstm: {
        const auto& s = body.at("shape");
        AbLstmShape shape;
        shape.embed_dim = s.at("embed_dim").get<std::size_t>();
        shape.filters_per_width = s.at("filters_per_width").get<std::size_t>();
        shape.widths = s.at("widths").get<std::vector<std::size_t>>();
        shape.hidden = s.at("hidden").get<std::size_t>();
        shape.dropout = s.at("dropout").get<double>();
        AbLstm net(shape);
        net.params().load_json(body.at("params"));
        return {std::move(hp), std::move(info), std::move(net)};
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidModel, e.what());
  }
  throw Error(ErrorKind::InvalidModel, "unknown family");
}

inline void save_model(const std::filesystem::path& path, const TrainedModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << to_json(model).dump() << '\n';
}

inline TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  try {
    return model_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidModel, path.string() + ": " + e.what());
  }
}

}  // namespace kpc
