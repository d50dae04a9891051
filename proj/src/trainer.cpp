#include "genrecnn/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>

#include "genrecnn/errors.hpp"
#include "genrecnn/inference.hpp"
#include "genrecnn/parallel.hpp"

namespace genrecnn::train {

void TrainConfig::validate() const {
  sgd.validate();
  if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("train: patience must be >= 1");
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (const auto& row : counts) {
    for (std::uint64_t v : row) t += v;
  }
  return t;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t t = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) t += counts[i][i];
  return t;
}

double ConfusionMatrix::accuracy() const {
  const std::uint64_t n = total();
  return n == 0 ? 0.0
               : static_cast<double>(trace()) / static_cast<double>(n);
}

EvalResult evaluate(const model::GenreCnn& model,
                    const std::vector<data::TrackRecord>& records,
                    data::FeatureStore& store, double segment_overlap) {
  if (records.empty()) throw ConfigError("evaluate: empty split");

  struct TrackOutcome {
    int predicted = -1;  // -1: skipped
  };
  std::vector<TrackOutcome> outcomes(records.size());

  parallel_for(records.size(), [&](std::size_t i) {
    const auto& rec = records[i];
    const dsp::MelSpectrogram& spec = store.get(rec.feature_path);
    if (spec.n_frames() < data::kSegmentFrames) {
      std::cerr << "warning: track '" << rec.id << "' has only "
                << spec.n_frames() << " frames, skipping evaluation\n";
      return;
    }
    outcomes[i].predicted =
        infer::predict_track(model, spec, segment_overlap, rec.id).predicted;
  });

  EvalResult result;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (outcomes[i].predicted < 0) {
      ++result.skipped;
      continue;
    }
    ++result.evaluated;
    result.confusion.counts[static_cast<std::size_t>(records[i].genre)]
                           [static_cast<std::size_t>(outcomes[i].predicted)]++;
  }
  result.accuracy = result.confusion.accuracy();
  return result;
}

namespace {

/// One worker slot: forward/backward scratch reused across steps.
struct SampleScratch {
  model::ForwardCache cache;
  model::GradientSetT<float> grads;
  float loss = 0.0f;
};

std::string format_timestamp(std::chrono::system_clock::time_point tp) {
  const auto secs = std::chrono::time_point_cast<std::chrono::seconds>(tp);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      tp - secs)
                      .count();
  const std::time_t t = std::chrono::system_clock::to_time_t(secs);
  std::tm tm_utc;
  gmtime_r(&t, &tm_utc);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ",
                tm_utc.tm_year + 1900, tm_utc.tm_mon + 1, tm_utc.tm_mday,
                tm_utc.tm_hour, tm_utc.tm_min, tm_utc.tm_sec,
                static_cast<int>(ms));
  return buf;
}

}  // namespace

TrainResult train(model::GenreCnn& model,
                  const std::vector<data::TrackRecord>& records,
                  data::FeatureStore& store, const TrainConfig& cfg) {
  cfg.validate();
  const auto train_records = records_in_split(records, data::Split::kTrain);
  const auto val_records =
      records_in_split(records, data::Split::kValidation);
  if (train_records.empty()) throw ConfigError("train: empty train split");
  if (val_records.empty()) throw ConfigError("train: empty validation split");

  const std::size_t batch = cfg.sgd.batch_size;
  const std::size_t steps_per_epoch =
      (train_records.size() + batch - 1) / batch;
  const std::size_t eval_every =
      cfg.eval_every > 0 ? cfg.eval_every : steps_per_epoch;

  std::mt19937_64 master_rng(cfg.sgd.seed);

  TrainResult result;
  result.best_model = model;
  nn::SgdVelocity vel_conv1, vel_conv2, vel_fc1, vel_out;

  std::vector<std::size_t> order(train_records.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<SampleScratch> scratch(batch);
  std::vector<std::uint64_t> sample_seeds(batch);

  std::size_t step = 0;
  EarlyStopper stopper(cfg.patience);
  bool stop = false;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs && !stop; ++epoch) {
    std::shuffle(order.begin(), order.end(), master_rng);

    for (std::size_t chunk = 0; chunk < order.size() && !stop;
         chunk += batch) {
      const std::size_t b_n = std::min(batch, order.size() - chunk);
      ++step;

      // Per-sample seeds are drawn serially so segment choice and dropout
      // masks do not depend on the worker count.
      for (std::size_t i = 0; i < b_n; ++i) sample_seeds[i] = master_rng();

      parallel_for(b_n, [&](std::size_t i) {
        const auto& rec = train_records[order[chunk + i]];
        const dsp::MelSpectrogram& spec = store.get(rec.feature_path);
        std::mt19937_64 rng(sample_seeds[i]);
        const data::Segment seg = data::sample_training_segment(spec, rng);
        auto& s = scratch[i];
        model.forward(seg.values, /*training=*/true, rng, s.cache);
        s.loss = model.loss(s.cache, static_cast<std::size_t>(rec.genre));
        model.backward(s.cache, static_cast<std::size_t>(rec.genre), s.grads);
      });

      // Deterministic reduction in sample order.
      model.zero_grads();
      const float scale = 1.0f / static_cast<float>(b_n);
      double loss_sum = 0.0;
      for (std::size_t i = 0; i < b_n; ++i) {
        model.accumulate_gradients(scratch[i].grads, scale);
        loss_sum += static_cast<double>(scratch[i].loss);
      }

      nn::sgd_step(model.conv1, vel_conv1, cfg.sgd);
      nn::sgd_step(model.conv2, vel_conv2, cfg.sgd);
      nn::sgd_step(model.fc1, vel_fc1, cfg.sgd);
      nn::sgd_step(model.out, vel_out, cfg.sgd);

      LogEntry entry;
      entry.step = step;
      entry.epoch = epoch;
      entry.loss = static_cast<float>(loss_sum / static_cast<double>(b_n));
      entry.timestamp = std::chrono::system_clock::now();

      if (step % eval_every == 0) {
        const EvalResult val =
            evaluate(model, val_records, store, cfg.validation_overlap);
        entry.has_val = true;
        entry.val_accuracy = static_cast<float>(val.accuracy);

        const auto outcome = stopper.observe(entry.val_accuracy);
        if (outcome.improved) {
          result.best_val_accuracy = entry.val_accuracy;
          model.epochs_seen = static_cast<std::uint32_t>(epoch);
          model.best_val_accuracy = entry.val_accuracy;
          result.best_model = model;
          if (!cfg.checkpoint_path.empty()) {
            model::save_checkpoint(result.best_model, cfg.checkpoint_path);
          }
        } else if (outcome.stop) {
          stop = true;
        }
      }

      result.log.entries.push_back(entry);
      if (entry.has_val && !cfg.log_csv_path.empty()) {
        write_training_log_csv(result.log, cfg.log_csv_path);
      }
    }
  }

  result.steps_run = step;
  result.epochs_run = result.log.entries.empty()
                          ? 0
                          : result.log.entries.back().epoch;
  if (result.best_val_accuracy < 0.0f) {
    // No evaluation ever ran; keep the final weights.
    result.best_model = model;
  }
  if (!cfg.log_csv_path.empty()) {
    write_training_log_csv(result.log, cfg.log_csv_path);
  }
  return result;
}

void write_training_log_csv(const TrainingLog& log,
                            const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "step,epoch,loss,val_accuracy,timestamp\n";
  char buf[64];
  for (const auto& e : log.entries) {
    std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(e.loss));
    out << e.step << ',' << e.epoch << ',' << buf << ',';
    if (e.has_val) {
      std::snprintf(buf, sizeof buf, "%.9g",
                    static_cast<double>(e.val_accuracy));
      out << buf;
    }
    out << ',' << format_timestamp(e.timestamp) << '\n';
  }
  if (!out) throw IoError("write failure on " + path.string());
}

void write_confusion_csv(const ConfusionMatrix& cm,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& name : data::genre_names()) out << ',' << name;
  out << '\n';
  for (std::size_t i = 0; i < data::kNumGenres; ++i) {
    out << data::genre_names()[i];
    for (std::size_t j = 0; j < data::kNumGenres; ++j) {
      out << ',' << cm.counts[i][j];
    }
    out << '\n';
  }
  if (!out) throw IoError("write failure on " + path.string());
}

}  // namespace genrecnn::train
