#pragma once

#include <array>
#include <string>

#include "genrecnn/dataset.hpp"
#include "genrecnn/model.hpp"

namespace genrecnn::infer {

/// Probability vector over the ten genres in canonical order. Held in double
/// so averaging over many segments stays exact to well below 1e-9.
struct GenreDistribution {
  std::array<double, data::kNumGenres> probs{};

  /// Index of the largest probability; the lowest index wins ties.
  int argmax() const;
};

struct TrackPrediction {
  std::string track_id;
  GenreDistribution distribution;
  int predicted = 0;
  std::size_t n_segments = 0;
};

/// Softmax output of one inference-mode forward pass over a 1x64x256 segment.
GenreDistribution predict_segment(const model::GenreCnn& model,
                                  const Tensor& segment);

/// Whole-track prediction: enumerate segments at the given overlap, average
/// the per-segment distributions, take the argmax.
TrackPrediction predict_track(const model::GenreCnn& model,
                              const dsp::MelSpectrogram& spec,
                              double overlap = 0.5,
                              const std::string& track_id = "");

}  // namespace genrecnn::infer
