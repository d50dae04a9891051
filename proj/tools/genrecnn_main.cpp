// Command-line front end: preprocess, train, evaluate, predict,
// analyze-filters, project-lda. Subcommands never mutate their inputs; all
// outputs land under --out-dir. GENRE_CNN_THREADS caps worker threads.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "genrecnn/analysis.hpp"
#include "genrecnn/dataset.hpp"
#include "genrecnn/dsp.hpp"
#include "genrecnn/errors.hpp"
#include "genrecnn/inference.hpp"
#include "genrecnn/model.hpp"
#include "genrecnn/parallel.hpp"
#include "genrecnn/trainer.hpp"
#include "genrecnn/wav.hpp"

namespace fs = std::filesystem;
using namespace genrecnn;

namespace {

constexpr int kExpectedSampleRate = 22050;

dsp::StftConfig standard_stft() { return dsp::StftConfig{}; }

dsp::MelFilterbank standard_filterbank() {
  const auto cfg = standard_stft();
  return dsp::build_mel_filterbank(64, cfg.window_len / 2 + 1,
                                   kExpectedSampleRate, 0.0,
                                   kExpectedSampleRate / 2.0);
}

struct PreprocessArgs {
  std::string audio_dir;
  std::string out_dir;
  std::string manifest;
  std::uint64_t seed = 42;
};

int run_preprocess(const PreprocessArgs& args) {
  const fs::path audio_root(args.audio_dir);
  const fs::path out_root(args.out_dir);
  if (!fs::is_directory(audio_root)) {
    throw ConfigError("audio dir '" + args.audio_dir + "' is not a directory");
  }
  fs::create_directories(out_root);

  struct Job {
    fs::path wav;
    fs::path cache;
    std::string id;
    int genre;
  };
  std::vector<Job> jobs;
  for (const auto& genre_entry : fs::directory_iterator(audio_root)) {
    if (!genre_entry.is_directory()) continue;
    const std::string genre = genre_entry.path().filename().string();
    const int genre_idx = data::genre_index(genre);  // throws on unknown dir
    for (const auto& file : fs::directory_iterator(genre_entry.path())) {
      if (!file.is_regular_file() || file.path().extension() != ".wav") {
        continue;
      }
      Job job;
      job.wav = file.path();
      job.id = file.path().stem().string();
      job.genre = genre_idx;
      job.cache = out_root / genre / (job.id + ".mels");
      jobs.push_back(std::move(job));
    }
  }
  if (jobs.empty()) {
    throw ConfigError("no <genre>/<track>.wav files under " + args.audio_dir);
  }
  std::sort(jobs.begin(), jobs.end(),
            [](const Job& a, const Job& b) { return a.wav < b.wav; });

  // Duplicate stems across genres would collide in the manifest.
  {
    std::vector<std::string> ids;
    for (const auto& j : jobs) ids.push_back(j.id);
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
      for (auto& j : jobs) {
        j.id = data::genre_name(j.genre) + "_" + j.id;
      }
    }
  }

  const auto stft = standard_stft();
  const auto fb = standard_filterbank();
  std::vector<std::string> failures(jobs.size());
  std::vector<std::uint8_t> recomputed(jobs.size(), 0);

  parallel_for(jobs.size(), [&](std::size_t i) {
    const Job& job = jobs[i];
    try {
      if (fs::exists(job.cache) &&
          fs::last_write_time(job.cache) >= fs::last_write_time(job.wav)) {
        return;  // cache is up to date
      }
      const dsp::AudioClip clip = dsp::load_wav(job.wav);
      if (clip.sample_rate != kExpectedSampleRate) {
        throw UnsupportedError(
            "sample rate " + std::to_string(clip.sample_rate) +
            " Hz (expected " + std::to_string(kExpectedSampleRate) +
            " Hz, no resampler): " + job.wav.string());
      }
      const dsp::MelSpectrogram spec = log_mel_spectrogram(clip, stft, fb);
      fs::create_directories(job.cache.parent_path());
      dsp::save_mel_cache(spec, job.cache);
      recomputed[i] = 1;
    } catch (const std::exception& e) {
      failures[i] = e.what();
    }
  });

  std::size_t n_failed = 0, n_computed = 0;
  std::vector<data::TrackRecord> records;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (!failures[i].empty()) {
      std::cerr << "error: " << jobs[i].wav.string() << ": " << failures[i]
                << "\n";
      ++n_failed;
      continue;
    }
    n_computed += recomputed[i];
    data::TrackRecord rec;
    rec.id = jobs[i].id;
    rec.feature_path = jobs[i].cache;
    rec.genre = jobs[i].genre;
    records.push_back(std::move(rec));
  }

  if (!records.empty()) {
    data::split_dataset(records, args.seed);
    const fs::path manifest = args.manifest.empty()
                                  ? out_root / "manifest.tsv"
                                  : fs::path(args.manifest);
    data::save_manifest(records, manifest);
    std::cout << "preprocessed " << records.size() << " tracks ("
              << n_computed << " recomputed, "
              << records.size() - n_computed << " cached), manifest at "
              << manifest.string() << "\n";
  }
  if (n_failed > 0) {
    std::cerr << n_failed << " file(s) failed\n";
    return 1;
  }
  return 0;
}

struct TrainArgs {
  std::string manifest;
  std::string out_dir;
  train::TrainConfig cfg;
};

int run_train(TrainArgs& args) {
  fs::create_directories(args.out_dir);
  const auto records = data::load_manifest(args.manifest);
  data::FeatureStore store;

  if (args.cfg.checkpoint_path.empty()) {
    args.cfg.checkpoint_path = fs::path(args.out_dir) / "checkpoint.gcnn";
  }
  if (args.cfg.log_csv_path.empty()) {
    args.cfg.log_csv_path = fs::path(args.out_dir) / "training_log.csv";
  }

  model::GenreCnn model(args.cfg.sgd.seed);
  model.hyper = args.cfg.sgd;
  const train::TrainResult result =
      train::train(model, records, store, args.cfg);

  model::save_checkpoint(result.best_model, args.cfg.checkpoint_path);
  std::printf("trained %zu steps over %zu epochs; best validation accuracy %.4f\n",
              result.steps_run, result.epochs_run,
              static_cast<double>(result.best_val_accuracy));
  std::printf("checkpoint: %s\nlog: %s\n",
              args.cfg.checkpoint_path.string().c_str(),
              args.cfg.log_csv_path.string().c_str());
  return 0;
}

struct EvaluateArgs {
  std::string manifest;
  std::string checkpoint;
  std::string split = "test";
  std::string out_dir;
  double overlap = 0.5;
};

int run_evaluate(const EvaluateArgs& args) {
  fs::create_directories(args.out_dir);
  const auto all = data::load_manifest(args.manifest);
  const auto records =
      data::records_in_split(all, data::split_from_name(args.split));
  if (records.empty()) {
    throw ConfigError("split '" + args.split + "' is empty");
  }
  const model::GenreCnn model = model::load_checkpoint(args.checkpoint);
  data::FeatureStore store;
  const train::EvalResult result =
      train::evaluate(model, records, store, args.overlap);

  const fs::path confusion = fs::path(args.out_dir) / "confusion.csv";
  train::write_confusion_csv(result.confusion, confusion);
  std::printf("%s accuracy: %.4f (%zu tracks evaluated, %zu skipped)\n",
              args.split.c_str(), result.accuracy,
              static_cast<std::size_t>(result.evaluated),
              static_cast<std::size_t>(result.skipped));
  std::printf("confusion matrix: %s\n", confusion.string().c_str());
  return 0;
}

struct PredictArgs {
  std::string manifest;
  std::string split;
  std::vector<std::string> features;
  std::string checkpoint;
  std::string out_dir;
  double overlap = 0.5;
};

int run_predict(const PredictArgs& args) {
  fs::create_directories(args.out_dir);
  const model::GenreCnn model = model::load_checkpoint(args.checkpoint);
  data::FeatureStore store;

  std::vector<data::TrackRecord> records;
  if (!args.manifest.empty()) {
    auto all = data::load_manifest(args.manifest);
    if (!args.split.empty()) {
      all = data::records_in_split(all, data::split_from_name(args.split));
    }
    records = std::move(all);
  }
  for (const auto& f : args.features) {
    data::TrackRecord rec;
    rec.feature_path = f;
    rec.id = fs::path(f).stem().string();
    rec.genre = 0;  // unknown; unused for prediction
    records.push_back(std::move(rec));
  }
  if (records.empty()) {
    throw ConfigError("predict: no inputs (use --manifest or feature files)");
  }

  std::vector<infer::TrackPrediction> predictions(records.size());
  parallel_for(records.size(), [&](std::size_t i) {
    const dsp::MelSpectrogram& spec = store.get(records[i].feature_path);
    predictions[i] =
        infer::predict_track(model, spec, args.overlap, records[i].id);
  });

  const fs::path out_path = fs::path(args.out_dir) / "predictions.tsv";
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + out_path.string());
  for (const auto& p : predictions) {
    std::string line = p.track_id + '\t' + data::genre_name(p.predicted);
    char buf[16];
    for (double prob : p.distribution.probs) {
      std::snprintf(buf, sizeof buf, "%.6f", prob);
      line += '\t';
      line += buf;
    }
    out << line << '\n';
    std::cout << line << '\n';
  }
  return 0;
}

struct AnalyzeArgs {
  std::string manifest;
  std::string checkpoint;
  std::string out_dir;
  std::string layer = "pool2";
  std::vector<std::string> neurons;
  double lambda_scale = 0.01;
  double lambda_abs = -1.0;
  double overlap = 0.9;
};

analysis::NeuronIndex parse_neuron(const std::string& text) {
  analysis::NeuronIndex n;
  if (std::sscanf(text.c_str(), "%zu,%zu,%zu", &n.channel, &n.row, &n.col) != 3) {
    throw ConfigError("bad neuron '" + text + "' (expected c,i,j)");
  }
  return n;
}

int run_analyze_filters(const AnalyzeArgs& args) {
  fs::create_directories(args.out_dir);
  const auto records = data::load_manifest(args.manifest);
  const model::GenreCnn model = model::load_checkpoint(args.checkpoint);
  data::FeatureStore store;
  const model::LayerId layer = model::layer_from_name(args.layer);

  analysis::LambdaPolicy policy;
  if (args.lambda_abs >= 0.0) {
    policy.relative = false;
    policy.value = args.lambda_abs;
  } else {
    policy.relative = true;
    policy.value = args.lambda_scale;
  }

  for (const auto& text : args.neurons) {
    const analysis::NeuronIndex neuron = parse_neuron(text);
    const analysis::EstimatedFilter est = analysis::estimate_filter(
        model, records, store, layer, neuron, policy, args.overlap);

    const std::string stem = args.layer + "_" + std::to_string(neuron.channel) +
                             "_" + std::to_string(neuron.row) + "_" +
                             std::to_string(neuron.col);
    const fs::path csv_path = fs::path(args.out_dir) / ("filter_" + stem + ".csv");
    std::ofstream csv(csv_path, std::ios::trunc);
    if (!csv) throw IoError("cannot write " + csv_path.string());
    char buf[32];
    for (std::size_t r = 0; r < est.field.height(); ++r) {
      for (std::size_t c = 0; c < est.field.width(); ++c) {
        if (c) csv << ',';
        std::snprintf(buf, sizeof buf, "%.9g",
                      est.coefficients[r * est.field.width() + c]);
        csv << buf;
      }
      csv << '\n';
    }

    std::size_t nonzero = 0;
    for (double c : est.coefficients) {
      if (c != 0.0) ++nonzero;
    }
    nlohmann::json sidecar{
        {"layer", args.layer},
        {"neuron",
         {{"channel", neuron.channel}, {"row", neuron.row}, {"col", neuron.col}}},
        {"lambda", est.fit.lambda},
        {"lambda_max", est.lambda_max},
        {"patch",
         {{"row_lo", est.field.row_lo},
          {"row_hi", est.field.row_hi},
          {"col_lo", est.field.col_lo},
          {"col_hi", est.field.col_hi}}},
        {"n_samples", est.n_samples},
        {"sweeps", est.fit.sweeps},
        {"converged", est.fit.converged},
        {"objective", est.fit.objective},
        {"intercept", est.fit.intercept},
        {"nonzero_coefficients", nonzero},
    };
    const fs::path json_path = fs::path(args.out_dir) / ("filter_" + stem + ".json");
    std::ofstream js(json_path, std::ios::trunc);
    if (!js) throw IoError("cannot write " + json_path.string());
    js << sidecar.dump(2) << '\n';

    std::printf("%s: %zu samples, lambda %.6g, %zu nonzero of %zu -> %s\n",
                stem.c_str(), est.n_samples, est.fit.lambda, nonzero,
                est.coefficients.size(), csv_path.string().c_str());
  }
  return 0;
}

struct ProjectArgs {
  std::string manifest;
  std::string checkpoint;
  std::string out_dir;
  double overlap = 0.9;
};

int run_project_lda(const ProjectArgs& args) {
  fs::create_directories(args.out_dir);
  const auto records = data::load_manifest(args.manifest);
  const model::GenreCnn model = model::load_checkpoint(args.checkpoint);
  data::FeatureStore store;

  const auto rows =
      analysis::project_last_layer(model, records, store, args.overlap);

  const fs::path out_path = fs::path(args.out_dir) / "lda_projection.csv";
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + out_path.string());
  out << "track_id,segment_start,c1,c2,c3,genre\n";
  char buf[32];
  for (const auto& row : rows) {
    out << row.track_id << ',' << row.segment_start;
    for (double c : row.components) {
      std::snprintf(buf, sizeof buf, "%.9g", c);
      out << ',' << buf;
    }
    out << ',' << data::genre_name(row.genre) << '\n';
  }
  std::printf("projected %zu test segments -> %s\n", rows.size(),
              out_path.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Music genre classification: log-mel features, a small CNN, "
               "averaged-segment prediction, and filter/LDA analysis"};
  app.require_subcommand(1);

  PreprocessArgs pre;
  auto* cmd_pre = app.add_subcommand(
      "preprocess", "Extract log-mel feature caches and write a manifest");
  cmd_pre->add_option("--audio-dir", pre.audio_dir,
                      "Directory of <genre>/<track>.wav files")
      ->required();
  cmd_pre->add_option("--out-dir", pre.out_dir, "Output directory for caches")
      ->required();
  cmd_pre->add_option("--manifest", pre.manifest,
                      "Manifest path (default: <out-dir>/manifest.tsv)");
  cmd_pre->add_option("--seed", pre.seed, "Split shuffle seed")
      ->capture_default_str();

  TrainArgs tr;
  auto* cmd_train = app.add_subcommand("train", "Train the genre CNN");
  cmd_train->add_option("--manifest", tr.manifest, "Manifest TSV")->required();
  cmd_train->add_option("--out-dir", tr.out_dir, "Output directory")
      ->required();
  cmd_train->add_option("--seed", tr.cfg.sgd.seed, "Master RNG seed")
      ->capture_default_str();
  cmd_train->add_option("--lr", tr.cfg.sgd.learning_rate, "Learning rate")
      ->capture_default_str();
  cmd_train->add_option("--momentum", tr.cfg.sgd.momentum, "SGD momentum")
      ->capture_default_str();
  cmd_train->add_option("--batch", tr.cfg.sgd.batch_size, "Mini-batch size")
      ->capture_default_str();
  cmd_train->add_option("--l2", tr.cfg.sgd.l2_lambda, "L2 weight decay")
      ->capture_default_str();
  cmd_train->add_option("--dropout", tr.cfg.sgd.dropout_rate_fc,
                        "Dropout rate on the 32-unit hidden layer")
      ->capture_default_str();
  cmd_train->add_option("--epochs", tr.cfg.max_epochs, "Maximum epochs")
      ->capture_default_str();
  cmd_train->add_option("--patience", tr.cfg.patience,
                        "Evaluations without improvement before stopping")
      ->capture_default_str();
  cmd_train->add_option("--eval-every", tr.cfg.eval_every,
                        "Steps between validation runs (0 = once per epoch)")
      ->capture_default_str();
  cmd_train->add_option("--val-overlap", tr.cfg.validation_overlap,
                        "Segment overlap for validation prediction")
      ->capture_default_str();

  EvaluateArgs ev;
  auto* cmd_eval = app.add_subcommand(
      "evaluate", "Track-level accuracy and confusion matrix for one split");
  cmd_eval->add_option("--manifest", ev.manifest, "Manifest TSV")->required();
  cmd_eval->add_option("--checkpoint", ev.checkpoint, "Model checkpoint")
      ->required();
  cmd_eval->add_option("--split", ev.split, "train, validation, or test")
      ->capture_default_str();
  cmd_eval->add_option("--out-dir", ev.out_dir, "Output directory")->required();
  cmd_eval->add_option("--overlap", ev.overlap, "Segment overlap")
      ->capture_default_str();

  PredictArgs pr;
  auto* cmd_pred = app.add_subcommand(
      "predict", "Per-track genre distribution via averaged segments");
  cmd_pred->add_option("--checkpoint", pr.checkpoint, "Model checkpoint")
      ->required();
  cmd_pred->add_option("--out-dir", pr.out_dir, "Output directory")->required();
  cmd_pred->add_option("--manifest", pr.manifest, "Manifest TSV");
  cmd_pred->add_option("--split", pr.split,
                       "Restrict manifest tracks to one split");
  cmd_pred->add_option("features", pr.features, "Feature cache files");
  cmd_pred->add_option("--overlap", pr.overlap, "Segment overlap")
      ->capture_default_str();

  AnalyzeArgs an;
  auto* cmd_an = app.add_subcommand(
      "analyze-filters", "Estimate learned filters by Lasso regression");
  cmd_an->add_option("--manifest", an.manifest, "Manifest TSV")->required();
  cmd_an->add_option("--checkpoint", an.checkpoint, "Model checkpoint")
      ->required();
  cmd_an->add_option("--out-dir", an.out_dir, "Output directory")->required();
  cmd_an->add_option("--layer", an.layer,
                     "Target layer (conv1, pool1, conv2, pool2, fc1)")
      ->capture_default_str();
  cmd_an->add_option("--neuron", an.neurons, "Neuron as c,i,j (repeatable)")
      ->required();
  cmd_an->add_option("--lambda-scale", an.lambda_scale,
                     "Lambda as a fraction of lambda_max")
      ->capture_default_str();
  cmd_an->add_option("--lambda", an.lambda_abs,
                     "Absolute lambda (overrides --lambda-scale)");
  cmd_an->add_option("--overlap", an.overlap, "Segment overlap")
      ->capture_default_str();

  ProjectArgs pj;
  auto* cmd_pj = app.add_subcommand(
      "project-lda",
      "Project test-split hidden activations onto train-split LDA directions");
  cmd_pj->add_option("--manifest", pj.manifest, "Manifest TSV")->required();
  cmd_pj->add_option("--checkpoint", pj.checkpoint, "Model checkpoint")
      ->required();
  cmd_pj->add_option("--out-dir", pj.out_dir, "Output directory")->required();
  cmd_pj->add_option("--overlap", pj.overlap, "Segment overlap")
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_pre->parsed()) return run_preprocess(pre);
    if (cmd_train->parsed()) return run_train(tr);
    if (cmd_eval->parsed()) return run_evaluate(ev);
    if (cmd_pred->parsed()) return run_predict(pr);
    if (cmd_an->parsed()) return run_analyze_filters(an);
    if (cmd_pj->parsed()) return run_project_lda(pj);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
