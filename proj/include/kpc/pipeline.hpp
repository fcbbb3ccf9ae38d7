#pragma once

// Subcommand bodies behind the command-line tool. Every artifact is plain text:
// JSON for models, manifests and reports, JSON lines for instances and predictions.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kpc/corpus.hpp"
#include "kpc/embeddings.hpp"
#include "kpc/ensemble.hpp"
#include "kpc/error.hpp"
#include "kpc/evaluation.hpp"
#include "kpc/model.hpp"
#include "kpc/predictions.hpp"

namespace kpc {

namespace fs = std::filesystem;

inline constexpr const char* kManifestFormat = "kpc-manifest";
inline constexpr const char* kManifestFile = "manifest.json";

// --- configuration -----------------------------------------------------------------

struct RunConfig {
  std::optional<std::uint64_t> seed;
  std::vector<fs::path> train_dirs;
  std::vector<std::string> embeddings;  // NAME=PATH
  fs::path out_dir;
  PopulationSpec population;
  std::size_t workers = 1;
  TrainConfig train;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto comma = s.find(',', pos);
    const auto item = trim(s.substr(pos, comma == std::string_view::npos ? s.npos : comma - pos));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) {
    throw Error(ErrorKind::Config, "bad value '" + value + "' for " + key);
  }
  return out;
}

}  // namespace detail

/// Applies one `key = value` setting. Unknown keys are a configuration error.
inline void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  using detail::parse_number;
  auto& t = cfg.train;
  if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "train") for (auto& d : detail::split_list(value)) cfg.train_dirs.emplace_back(d);
  else if (key == "embeddings") for (auto& b : detail::split_list(value)) cfg.embeddings.push_back(b);
  else if (key == "out") cfg.out_dir = value;
  else if (key == "workers") cfg.workers = parse_number<std::size_t>(key, value);
  else if (key == "n_cnn") cfg.population.n_cnn = parse_number<std::size_t>(key, value);
  else if (key == "n_stacker") cfg.population.n_stacker = parse_number<std::size_t>(key, value);
  else if (key == "n_lstm") cfg.population.n_lstm = parse_number<std::size_t>(key, value);
  else if (key == "cnn.epochs") t.cnn.epochs = parse_number<std::size_t>(key, value);
  else if (key == "cnn.batch") t.cnn.batch_size = parse_number<std::size_t>(key, value);
  else if (key == "cnn.lr") t.cnn.learning_rate = parse_number<double>(key, value);
  else if (key == "lstm.epochs") t.lstm.epochs = parse_number<std::size_t>(key, value);
  else if (key == "lstm.batch") t.lstm.batch_size = parse_number<std::size_t>(key, value);
  else if (key == "lstm.lr") t.lstm.learning_rate = parse_number<double>(key, value);
  else if (key == "lstm.filters") t.lstm_shape.filters_per_width = parse_number<std::size_t>(key, value);
  else if (key == "lstm.hidden") t.lstm_shape.hidden = parse_number<std::size_t>(key, value);
  else if (key == "stacker.folds") t.stacker.folds = parse_number<std::size_t>(key, value);
  else if (key == "meta.epochs") t.stacker.meta.epochs = parse_number<std::size_t>(key, value);
  else if (key == "meta.lr") t.stacker.meta.regimen.learning_rate = parse_number<double>(key, value);
  else throw Error(ErrorKind::Config, "unknown setting '" + key + "'");
}

/// Flat `key = value` lines; `#` starts a comment.
inline RunConfig parse_run_config(std::string_view text, RunConfig cfg = {}) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::Config, "expected key = value", line_no);
    try {
      apply_setting(cfg, detail::trim(std::string_view(body).substr(0, eq)),
                    detail::trim(std::string_view(body).substr(eq + 1)));
    } catch (const Error& e) {
      throw Error(ErrorKind::Config, e.message(), line_no);
    }
  }
  return cfg;
}

inline RunConfig load_run_config(const fs::path& path, RunConfig cfg = {}) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Config, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), std::move(cfg));
}

/// Seed is mandatory and every referenced path must exist.
inline void validate_for_training(const RunConfig& cfg) {
  if (!cfg.seed) throw Error(ErrorKind::Config, "a seed is required");
  if (cfg.train_dirs.empty()) throw Error(ErrorKind::Config, "no training directory given");
  if (cfg.out_dir.empty()) throw Error(ErrorKind::Config, "no output directory given");
  for (const auto& d : cfg.train_dirs) {
    if (!fs::is_directory(d)) throw Error(ErrorKind::Config, "not a directory: " + d.string());
  }
  for (const auto& b : cfg.embeddings) {
    const auto [name, path] = parse_binding(b);
    if (!fs::is_regular_file(path)) throw Error(ErrorKind::Config, "no embedding file " + path.string());
  }
  validate(cfg.population);
  if (cfg.population.n_stacker + cfg.population.n_lstm > 0 && cfg.embeddings.empty()) {
    throw Error(ErrorKind::Config, "stackers and AB-LSTMs need at least one embedding table");
  }
}

inline EmbeddingRegistry load_registry(const std::vector<std::string>& bindings, std::ostream& log) {
  EmbeddingRegistry reg;
  for (const auto& b : bindings) {
    auto [name, path] = parse_binding(b);
    if (reg.count(name)) throw Error(ErrorKind::Config, "embedding '" + name + "' bound twice");
    auto table = std::make_shared<EmbeddingTable>(load_table(path, std::nullopt, name));
    for (const auto& w : table->warnings()) log << "warning: " << path.string() << ": " << w << '\n';
    reg.emplace(name, std::move(table));
  }
  return reg;
}

inline Dataset load_splits(const std::vector<fs::path>& dirs, const std::string& name) {
  std::vector<Dataset> parts;
  for (const auto& d : dirs) parts.push_back(load_dataset(d, d.filename().string()));
  return merge_datasets(parts, name);
}

inline std::string format_distribution(const ClassCounts& counts) {
  std::size_t total = 0;
  for (auto c : counts) total += c;
  std::ostringstream os;
  char buf[96];
  std::snprintf(buf, sizeof buf, "%-10s %8s %8s\n", "class", "count", "percent");
  os << buf;
  for (Label l : kAllLabels) {
    const double pct = total ? 100.0 * static_cast<double>(counts[index_of(l)]) / static_cast<double>(total) : 0.0;
    std::snprintf(buf, sizeof buf, "%-10s %8zu %7.1f%%\n", std::string(name_of(l)).c_str(), counts[index_of(l)], pct);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "%-10s %8zu\n", "total", total);
  os << buf;
  return os.str();
}

// --- ingest ------------------------------------------------------------------------

struct IngestOptions {
  std::vector<fs::path> dirs;
  fs::path out;
  std::optional<WindowShape> window_shape;  // with `windows_out`, also dump windows
  fs::path windows_out;
};

inline Dataset cmd_ingest(const IngestOptions& opt, std::ostream& log) {
  const Dataset data = load_splits(opt.dirs, "ingest");
  if (data.documents.empty()) log << "warning: no documents found\n";
  const auto records = to_records(data);
  {
    std::ofstream out(opt.out, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + opt.out.string());
    write_instance_dump(out, records);
  }
  log << data.documents.size() << " documents, " << records.size() << " instances\n";
  bool labeled = true;
  for (const auto& r : records) labeled = labeled && r.label.has_value();
  if (labeled) log << format_distribution(class_counts(data));
  if (opt.window_shape) {
    std::ofstream out(opt.windows_out, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + opt.windows_out.string());
    for (const auto& kw : keyed_windows(data, *opt.window_shape)) {
      nlohmann::ordered_json j;
      j["doc_id"] = kw.key.doc_id;
      j["instance_id"] = kw.key.instance_id;
      j["window"] = to_json(kw.window);
      out << j.dump() << '\n';
    }
  }
  return data;
}

// --- train -------------------------------------------------------------------------

inline nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["cnn"] = nn::to_json(c.cnn);
  j["lstm"] = nn::to_json(c.lstm);
  j["lstm_shape"] = {{"filters_per_width", c.lstm_shape.filters_per_width},
                     {"widths", c.lstm_shape.widths},
                     {"hidden", c.lstm_shape.hidden},
                     {"dropout", c.lstm_shape.dropout}};
  nlohmann::ordered_json roster = nlohmann::ordered_json::array();
  for (const auto& s : c.stacker.roster) roster.push_back(to_json(s));
  j["stacker"] = {{"folds", c.stacker.folds},
                  {"roster", std::move(roster)},
                  {"meta_hidden", c.stacker.meta.hidden},
                  {"meta_epochs", c.stacker.meta.epochs},
                  {"meta_lr", c.stacker.meta.regimen.learning_rate},
                  {"meta_batch", c.stacker.meta.regimen.batch_size},
                  {"dev_fraction", c.stacker.meta.dev_fraction}};
  return j;
}

inline nlohmann::ordered_json counts_json(const ClassCounts& counts) {
  nlohmann::ordered_json j;
  for (Label l : kAllLabels) j[std::string(name_of(l))] = counts[index_of(l)];
  return j;
}

inline ClassCounts counts_from_json(const nlohmann::json& j) {
  ClassCounts c{};
  for (Label l : kAllLabels) c[index_of(l)] = j.at(std::string(name_of(l))).get<std::size_t>();
  return c;
}

struct TrainSummary {
  std::size_t trained = 0;
  std::size_t reused = 0;
  std::size_t failed = 0;
};

/// Trains the population into `<out>/models/`. Models whose files already load
/// with matching hyperparameters are reused, so a rerun resumes where it stopped.
inline TrainSummary cmd_train(const RunConfig& cfg, std::ostream& log) {
  validate_for_training(cfg);
  const Dataset data = load_splits(cfg.train_dirs, "train");
  if (data.instance_count() == 0) throw Error(ErrorKind::EmptyTrainingSet, "no training instances");
  const auto registry = load_registry(cfg.embeddings, log);
  std::vector<std::string> names;
  for (const auto& [name, t] : registry) names.push_back(name);

  PopulationSpec spec = cfg.population;
  spec.master_seed = *cfg.seed;
  const auto slots = plan_population(spec, names);
  const fs::path model_dir = cfg.out_dir / "models";
  fs::create_directories(model_dir);

  std::vector<std::optional<TrainingInfo>> infos(slots.size());
  std::vector<char> reused(slots.size(), 0);
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const fs::path file = model_dir / (slots[i].id() + ".json");
    if (!fs::exists(file)) continue;
    try {
      auto m = load_model(file);
      if (m.hyperparams() == slots[i].hp) {
        infos[i] = m.info();
        reused[i] = 1;
      }
    } catch (const Error&) {
      // unreadable artifact: retrain it
    }
  }

  std::mutex log_mutex;
  auto failures = run_pool(slots.size(), cfg.workers, [&](std::size_t i) {
    if (reused[i]) return;
    const auto& slot = slots[i];
    auto model = train(slot.hp, labeled_windows(data, slot.hp.shape()), registry, cfg.train);
    save_model(model_dir / (slot.id() + ".json"), model);
    infos[i] = model.info();
    std::lock_guard lock(log_mutex);
    log << "trained " << slot.id() << " (train accuracy " << model.info().train_accuracy << ")\n";
  });

  TrainSummary summary;
  nlohmann::ordered_json manifest;
  manifest["format"] = kManifestFormat;
  manifest["version"] = 1;
  manifest["master_seed"] = *cfg.seed;
  manifest["population"] = {{"n_cnn", spec.n_cnn}, {"n_stacker", spec.n_stacker}, {"n_lstm", spec.n_lstm}};
  manifest["embeddings"] = names;
  manifest["train_size"] = data.instance_count();
  manifest["train_class_counts"] = counts_json(class_counts(data));
  manifest["config"] = to_json(cfg.train);
  nlohmann::ordered_json models = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < slots.size(); ++i) {
    nlohmann::ordered_json e;
    e["id"] = slots[i].id();
    e["family"] = std::string(name_of(slots[i].family));
    e["index"] = slots[i].index;
    e["file"] = "models/" + slots[i].id() + ".json";
    e["hyperparams"] = to_json(slots[i].hp);
    if (failures[i]) {
      e["status"] = "failed";
      e["error"] = describe(failures[i]);
      ++summary.failed;
      log << "failed " << slots[i].id() << ": " << describe(failures[i]) << '\n';
    } else {
      e["status"] = "ok";
      e["training"] = to_json(*infos[i]);
      ++(reused[i] ? summary.reused : summary.trained);
    }
    models.push_back(std::move(e));
  }
  manifest["models"] = std::move(models);
  std::ofstream out(cfg.out_dir / kManifestFile, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write manifest");
  out << manifest.dump(2) << '\n';
  log << summary.trained << " trained, " << summary.reused << " reused, " << summary.failed << " failed\n";
  return summary;
}

inline nlohmann::json read_manifest(const fs::path& run_dir) {
  const fs::path path = run_dir / kManifestFile;
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  try {
    auto j = nlohmann::json::parse(in);
    if (j.at("format").get<std::string>() != kManifestFormat) throw Error(ErrorKind::InvalidModel, "not a manifest");
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidModel, path.string() + ": " + e.what());
  }
}

// --- predict -----------------------------------------------------------------------

/// One `<id>.jsonl` per successfully trained model, in manifest order.
inline std::vector<fs::path> cmd_predict(const fs::path& run_dir, const std::vector<fs::path>& data_dirs,
                                         const std::vector<std::string>& embeddings, const fs::path& out_dir,
                                         std::ostream& log) {
  const auto manifest = read_manifest(run_dir);
  const Dataset data = load_splits(data_dirs, "predict");
  const auto registry = load_registry(embeddings, log);
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  for (const auto& e : manifest.at("models")) {
    if (e.at("status").get<std::string>() != "ok") continue;
    const auto id = e.at("id").get<std::string>();
    const auto model = load_model(run_dir / e.at("file").get<std::string>());
    const fs::path path = out_dir / (id + ".jsonl");
    write_predictions(path, predict_dataset(model, data, registry));
    written.push_back(path);
  }
  log << written.size() << " prediction files written to " << out_dir.string() << '\n';
  return written;
}

// --- vote --------------------------------------------------------------------------

/// The family is read from the `<family>-<index>` file name.
inline Voter load_voter(const fs::path& file) {
  const std::string stem = file.stem().string();
  const auto dash = stem.find('-');
  Voter v;
  v.name = stem;
  try {
    v.family = parse_family(stem.substr(0, dash));
  } catch (const Error&) {
    throw Error(ErrorKind::Config, "cannot tell the model family of " + file.string());
  }
  v.predictions = read_predictions(file);
  return v;
}

/// Prediction files directly in `dir`, sorted by name.
inline std::vector<fs::path> prediction_files(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

struct VoteOptions {
  std::vector<fs::path> inputs;  // files or directories of files
  Composition composition;
  ClassCounts priors{};
  fs::path out;
  fs::path margins_out;  // optional
};

inline ClassCounts priors_from_dump(const fs::path& dump) {
  ClassCounts c{};
  for (const auto& r : read_instance_dump(dump)) {
    if (!r.label) throw Error(ErrorKind::UnlabeledInstance, r.doc_id + "/" + r.instance_id);
    ++c[index_of(*r.label)];
  }
  return c;
}

inline ClassCounts priors_from_manifest(const fs::path& run_dir) {
  return counts_from_json(read_manifest(run_dir).at("train_class_counts"));
}

inline PredictionSet cmd_vote(const VoteOptions& opt, std::ostream& log) {
  std::vector<Voter> voters;
  for (const auto& in : opt.inputs) {
    if (fs::is_directory(in)) {
      for (const auto& f : prediction_files(in)) voters.push_back(load_voter(f));
    } else {
      voters.push_back(load_voter(in));
    }
  }
  const auto rows = vote_margin_report(voters, opt.composition, opt.priors);
  PredictionSet out;
  std::size_t ties = 0;
  for (const auto& r : rows) {
    out.push_back({r.key, r.winner, std::nullopt});
    ties += r.tie ? 1 : 0;
  }
  write_predictions(opt.out, out);
  if (!opt.margins_out.empty()) {
    std::ofstream m(opt.margins_out, std::ios::binary);
    if (!m) throw Error(ErrorKind::Io, "cannot write " + opt.margins_out.string());
    for (const auto& r : rows) m << to_json(r).dump() << '\n';
  }
  std::size_t used = 0;
  for (const auto& v : voters) used += opt.composition.includes(v.family) ? 1 : 0;
  log << "composition " << opt.composition.name() << ": " << used << " voters, " << rows.size()
      << " instances, " << ties << " ties\n";
  return out;
}

// --- score / report ---------------------------------------------------------------

inline EvalReport cmd_score(const fs::path& gold_dump, const fs::path& pred_file, const fs::path& report_out,
                            std::ostream& log) {
  const auto report = evaluate(read_instance_dump(gold_dump), read_predictions(pred_file));
  log << format_table(report);
  if (!report_out.empty()) {
    std::ofstream out(report_out, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + report_out.string());
    out << to_json(report).dump(2) << '\n';
  }
  return report;
}

/// Per-model micro-F1 with family mean and max, then the three voting
/// compositions, all against one gold dump.
inline nlohmann::ordered_json cmd_report(const fs::path& gold_dump, const fs::path& pred_dir,
                                         const ClassCounts& priors, std::ostream& log) {
  const auto gold = read_instance_dump(gold_dump);
  std::vector<Voter> voters;
  for (const auto& f : prediction_files(pred_dir)) voters.push_back(load_voter(f));
  if (voters.empty()) throw Error(ErrorKind::Config, "no prediction files in " + pred_dir.string());

  nlohmann::ordered_json j;
  nlohmann::ordered_json models = nlohmann::ordered_json::array();
  std::map<Family, std::vector<double>> by_family;
  for (const auto& v : voters) {
    const double f1 = scores(confusion(gold, v.predictions)).micro_f1;
    by_family[v.family].push_back(f1);
    models.push_back({{"id", v.name}, {"micro_f1", f1}});
  }
  j["models"] = std::move(models);

  char buf[128];
  log << "family      models     mean      max\n";
  nlohmann::ordered_json fam;
  for (Family f : kAllFamilies) {
    auto it = by_family.find(f);
    if (it == by_family.end()) continue;
    double sum = 0, best = 0;
    for (double x : it->second) {
      sum += x;
      best = std::max(best, x);
    }
    const double mean = sum / static_cast<double>(it->second.size());
    fam[std::string(name_of(f))] = {{"models", it->second.size()}, {"mean", mean}, {"max", best}};
    std::snprintf(buf, sizeof buf, "%-10s %7zu %8.4f %8.4f\n", std::string(name_of(f)).c_str(),
                  it->second.size(), mean, best);
    log << buf;
  }
  j["families"] = std::move(fam);

  log << "\ncomposition  voters  micro-F1\n";
  nlohmann::ordered_json votes;
  for (const char* name : {"s", "sc", "scl"}) {
    const auto comp = parse_composition(name);
    std::size_t n = 0;
    for (const auto& v : voters) n += comp.includes(v.family) ? 1 : 0;
    if (n == 0) continue;
    const auto report = evaluate(gold, majority_vote(voters, comp, priors));
    votes[name] = {{"voters", n}, {"micro_f1", report.scores.micro_f1}, {"report", to_json(report)}};
    std::snprintf(buf, sizeof buf, "%-12s %6zu %9.4f\n", name, n, report.scores.micro_f1);
    log << buf;
  }
  j["votes"] = std::move(votes);
  return j;
}

}  // namespace kpc
