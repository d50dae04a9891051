#include "genrecnn/inference.hpp"

#include <random>

namespace genrecnn::infer {

int GenreDistribution::argmax() const {
  int best = 0;
  for (int i = 1; i < static_cast<int>(probs.size()); ++i) {
    if (probs[static_cast<std::size_t>(i)] >
        probs[static_cast<std::size_t>(best)]) {
      best = i;
    }
  }
  return best;
}

GenreDistribution predict_segment(const model::GenreCnn& model,
                                  const Tensor& segment) {
  model::ForwardCache cache;
  std::mt19937_64 unused_rng(0);  // dropout is off in inference
  model.forward(segment, /*training=*/false, unused_rng, cache);
  GenreDistribution d;
  for (std::size_t k = 0; k < data::kNumGenres; ++k) {
    d.probs[k] = static_cast<double>(cache.probs[k]);
  }
  return d;
}

TrackPrediction predict_track(const model::GenreCnn& model,
                              const dsp::MelSpectrogram& spec, double overlap,
                              const std::string& track_id) {
  const auto starts = data::segment_starts(spec.n_frames(), overlap);

  std::array<double, data::kNumGenres> sum{};
  model::ForwardCache cache;
  std::mt19937_64 unused_rng(0);
  for (std::size_t s : starts) {
    const data::Segment seg = data::extract_segment(spec, s);
    model.forward(seg.values, /*training=*/false, unused_rng, cache);
    for (std::size_t k = 0; k < data::kNumGenres; ++k) {
      sum[k] += static_cast<double>(cache.probs[k]);
    }
  }

  TrackPrediction pred;
  pred.track_id = track_id;
  pred.n_segments = starts.size();
  const double inv = 1.0 / static_cast<double>(starts.size());
  for (std::size_t k = 0; k < data::kNumGenres; ++k) {
    pred.distribution.probs[k] = sum[k] * inv;
  }
  pred.predicted = pred.distribution.argmax();
  return pred;
}

}  // namespace genrecnn::infer
