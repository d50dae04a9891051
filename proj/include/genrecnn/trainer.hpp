#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "genrecnn/dataset.hpp"
#include "genrecnn/model.hpp"

namespace genrecnn::train {

struct TrainConfig {
  nn::SgdConfig sgd;
  std::size_t max_epochs = 100;
  // Validation evaluations without strict improvement before stopping.
  std::size_t patience = 10;
  // Steps between validation evaluations; 0 means once per epoch.
  std::size_t eval_every = 0;
  std::filesystem::path checkpoint_path;  // empty: keep best in memory only
  std::filesystem::path log_csv_path;     // empty: no CSV persistence
  double validation_overlap = 0.5;

  void validate() const;
};

struct LogEntry {
  std::size_t step = 0;   // 1-based
  std::size_t epoch = 0;  // 1-based
  float loss = 0.0f;      // mean data loss over the mini-batch
  bool has_val = false;
  float val_accuracy = 0.0f;
  std::chrono::system_clock::time_point timestamp;
};

struct TrainingLog {
  std::vector<LogEntry> entries;
};

/// Patience-based early stopping on validation accuracy. Only strict
/// improvement over the best seen value resets the counter.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience) : patience_(patience) {}

  struct Outcome {
    bool improved = false;
    bool stop = false;
  };

  Outcome observe(float accuracy) {
    if (accuracy > best_) {
      best_ = accuracy;
      bad_ = 0;
      return {true, false};
    }
    ++bad_;
    return {false, bad_ >= patience_};
  }

  float best() const { return best_; }

 private:
  std::size_t patience_;
  float best_ = -1.0f;
  std::size_t bad_ = 0;
};

/// 10x10 confusion counts; rows are true genres, columns predictions, both
/// in canonical genre order.
struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, data::kNumGenres>, data::kNumGenres>
      counts{};

  std::uint64_t total() const;
  std::uint64_t trace() const;
  double accuracy() const;  // trace / total; 0 when empty
};

struct EvalResult {
  double accuracy = 0.0;
  ConfusionMatrix confusion;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;  // tracks shorter than one segment
};

struct TrainResult {
  model::GenreCnn best_model;
  TrainingLog log;
  float best_val_accuracy = -1.0f;
  std::size_t steps_run = 0;
  std::size_t epochs_run = 0;
};

/// Track-level evaluation of one split: averaged-probability prediction per
/// track, confusion counts over evaluated tracks. Tracks shorter than one
/// segment are warned about and skipped.
EvalResult evaluate(const model::GenreCnn& model,
                    const std::vector<data::TrackRecord>& records,
                    data::FeatureStore& store, double segment_overlap = 0.5);

/// Mini-batch SGD over the train split: per epoch tracks are visited in
/// shuffled order without replacement, one random segment per track; every
/// eval_every steps validation track accuracy decides early stopping and
/// which checkpoint is kept. Returns the best-validation model.
TrainResult train(model::GenreCnn& model,
                  const std::vector<data::TrackRecord>& records,
                  data::FeatureStore& store, const TrainConfig& cfg);

void write_training_log_csv(const TrainingLog& log,
                            const std::filesystem::path& path);
void write_confusion_csv(const ConfusionMatrix& cm,
                         const std::filesystem::path& path);

}  // namespace genrecnn::train
