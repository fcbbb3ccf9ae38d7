// kpc: ingest standoff corpora, train model populations, predict, vote, score.
//
//   kpc ingest  --data DIR [--data DIR ...] --out instances.jsonl
//   kpc train   --config run.cfg [--seed N] [--workers N] [--embeddings NAME=PATH ...]
//   kpc predict --run DIR --data DIR --embeddings NAME=PATH --out DIR
//   kpc vote    --in DIR|FILE ... --composition s|sc|scl --out FILE [--priors DUMP | --run DIR]
//   kpc score   --gold DUMP --pred FILE [--report FILE]
//   kpc report  --gold DUMP --pred-dir DIR [--priors DUMP | --run DIR] [--out FILE]
//
// Exit codes: 0 ok, 1 data error, 2 configuration error.

#include <exception>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kpc/kpc.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitData = 1;
constexpr int kExitConfig = 2;

kpc::WindowShape parse_shape(const std::string& text) {
  std::vector<std::size_t> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      parts.push_back(std::stoul(item));
    } catch (const std::exception&) {
      throw kpc::Error(kpc::ErrorKind::Config, "bad window shape '" + text + "'");
    }
  }
  if (parts.size() != 3) throw kpc::Error(kpc::ErrorKind::Config, "window shape is L,C,R");
  kpc::WindowShape s{parts[0], parts[1], parts[2]};
  kpc::validate_shape(s);
  return s;
}

kpc::ClassCounts resolve_priors(const std::string& dump, const std::string& run_dir) {
  if (!dump.empty()) return kpc::priors_from_dump(dump);
  if (!run_dir.empty()) return kpc::priors_from_manifest(run_dir);
  return {};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Keyphrase classifier: MATERIAL / PROCESS / TASK"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Parse standoff directories into an instance dump");
  std::vector<std::string> ingest_dirs;
  std::string ingest_out, windows_out, window_shape;
  ingest->add_option("--data", ingest_dirs, "Directory of .txt/.ann pairs")->required();
  ingest->add_option("--out", ingest_out, "Instance dump (JSON lines)")->required();
  ingest->add_option("--windows", windows_out, "Also dump context windows here");
  ingest->add_option("--shape", window_shape, "Window shape L,C,R for --windows")->default_val("3,4,3");

  // train
  auto* train = app.add_subcommand("train", "Train a model population");
  std::string config_path, train_out;
  std::vector<std::string> train_dirs, train_embeddings;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers, n_cnn, n_stacker, n_lstm;
  train->add_option("--config", config_path, "Flat key = value run configuration");
  train->add_option("--seed", seed, "Master seed (required here or in the config)");
  train->add_option("--workers", workers, "Parallel training workers");
  train->add_option("--embeddings", train_embeddings, "Embedding table NAME=PATH");
  train->add_option("--data", train_dirs, "Training directory");
  train->add_option("--out", train_out, "Run directory");
  train->add_option("--n-cnn", n_cnn, "Number of char-CNNs");
  train->add_option("--n-stacker", n_stacker, "Number of stackers");
  train->add_option("--n-lstm", n_lstm, "Number of AB-LSTMs");

  // predict
  auto* predict = app.add_subcommand("predict", "Write one prediction file per trained model");
  std::string run_dir, predict_out;
  std::vector<std::string> predict_dirs, predict_embeddings;
  predict->add_option("--run", run_dir, "Run directory written by train")->required();
  predict->add_option("--data", predict_dirs, "Directory to predict")->required();
  predict->add_option("--embeddings", predict_embeddings, "Embedding table NAME=PATH");
  predict->add_option("--out", predict_out, "Output directory")->required();

  // vote
  auto* vote = app.add_subcommand("vote", "Majority vote over prediction files");
  std::vector<std::string> vote_inputs;
  std::string composition = "scl", vote_out, margins_out, priors_dump, priors_run;
  vote->add_option("--in", vote_inputs, "Prediction file or directory")->required();
  vote->add_option("--composition", composition, "s, sc or scl (or any letters of s/c/l)");
  vote->add_option("--out", vote_out, "Voted prediction file")->required();
  vote->add_option("--margins", margins_out, "Per-instance vote histograms");
  vote->add_option("--priors", priors_dump, "Training instance dump for the tie order");
  vote->add_option("--run", priors_run, "Run directory whose manifest gives the tie order");

  // score
  auto* score = app.add_subcommand("score", "Score a prediction file against a gold dump");
  std::string gold, pred, report_out;
  score->add_option("--gold", gold, "Gold instance dump")->required();
  score->add_option("--pred", pred, "Prediction file")->required();
  score->add_option("--report", report_out, "Write the JSON report here");

  // report
  auto* report = app.add_subcommand("report", "Per-model and per-composition scores");
  std::string report_gold, pred_dir, report_priors, report_run, report_file;
  report->add_option("--gold", report_gold, "Gold instance dump")->required();
  report->add_option("--pred-dir", pred_dir, "Directory of per-model prediction files")->required();
  report->add_option("--priors", report_priors, "Training instance dump for the tie order");
  report->add_option("--run", report_run, "Run directory whose manifest gives the tie order");
  report->add_option("--out", report_file, "Write the JSON report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*ingest) {
      kpc::IngestOptions opt;
      for (const auto& d : ingest_dirs) opt.dirs.emplace_back(d);
      opt.out = ingest_out;
      if (!windows_out.empty()) {
        opt.window_shape = parse_shape(window_shape);
        opt.windows_out = windows_out;
      }
      kpc::cmd_ingest(opt, std::cout);
    } else if (*train) {
      kpc::RunConfig cfg;
      if (!config_path.empty()) cfg = kpc::load_run_config(config_path);
      if (seed) cfg.seed = *seed;
      if (workers) cfg.workers = *workers;
      if (n_cnn) cfg.population.n_cnn = *n_cnn;
      if (n_stacker) cfg.population.n_stacker = *n_stacker;
      if (n_lstm) cfg.population.n_lstm = *n_lstm;
      if (!train_dirs.empty()) {
        cfg.train_dirs.clear();
        for (const auto& d : train_dirs) cfg.train_dirs.emplace_back(d);
      }
      if (!train_embeddings.empty()) cfg.embeddings = train_embeddings;
      if (!train_out.empty()) cfg.out_dir = train_out;
      const auto summary = kpc::cmd_train(cfg, std::cout);
      if (summary.failed > 0) return kExitData;
    } else if (*predict) {
      std::vector<std::filesystem::path> dirs(predict_dirs.begin(), predict_dirs.end());
      kpc::cmd_predict(run_dir, dirs, predict_embeddings, predict_out, std::cout);
    } else if (*vote) {
      kpc::VoteOptions opt;
      opt.inputs.assign(vote_inputs.begin(), vote_inputs.end());
      opt.composition = kpc::parse_composition(composition);
      opt.priors = resolve_priors(priors_dump, priors_run);
      opt.out = vote_out;
      opt.margins_out = margins_out;
      kpc::cmd_vote(opt, std::cout);
    } else if (*score) {
      kpc::cmd_score(gold, pred, report_out, std::cout);
    } else if (*report) {
      const auto j = kpc::cmd_report(report_gold, pred_dir, resolve_priors(report_priors, report_run), std::cout);
      if (!report_file.empty()) {
        std::ofstream out(report_file, std::ios::binary);
        out << j.dump(2) << '\n';
      }
    }
  } catch (const kpc::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.is_config_error() ? kExitConfig : kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}
