#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include "genrecnn/dsp.hpp"
#include "genrecnn/tensor.hpp"

namespace genrecnn::data {

constexpr std::size_t kNumGenres = 10;
constexpr std::size_t kSegmentFrames = 256;

/// Canonical genre order; fixed so confusion-matrix axes and probability
/// vectors are reproducible.
const std::array<std::string, kNumGenres>& genre_names();
int genre_index(const std::string& name);  // throws DomainError if unknown
const std::string& genre_name(int index);

enum class Split { kTrain, kValidation, kTest };

const char* split_name(Split s);
Split split_from_name(const std::string& name);

/// One corpus entry: a cached feature file plus its label and split.
struct TrackRecord {
  std::string id;
  std::filesystem::path feature_path;
  int genre = -1;
  Split split = Split::kTrain;
};

/// A 256-frame window of a track's mel-spectrogram, shaped for the network.
struct Segment {
  Tensor values;  // [1 x 64 x 256]
  std::string source_track;
  std::size_t start_frame = 0;
};

/// Stratified split: within each genre, shuffle deterministically and cut at
/// the cumulative ratio boundaries (train : validation : test). Each genre
/// needs at least sum(ratios) tracks. Assignment is written into the records.
void split_dataset(std::vector<TrackRecord>& records,
                   const std::array<int, 3>& ratios, std::uint64_t seed);

inline void split_dataset(std::vector<TrackRecord>& records,
                          std::uint64_t seed) {
  split_dataset(records, {5, 2, 3}, seed);
}

/// One training segment with a uniformly random start over
/// [0, n_frames - 256].
Segment sample_training_segment(const dsp::MelSpectrogram& spec,
                                std::mt19937_64& rng);

/// Deterministic segment grid: hop = round(256 * (1 - overlap_fraction)),
/// clamped to at least 1 frame; starts run 0, hop, 2*hop, ... while
/// start + 256 <= n_frames.
std::vector<std::size_t> segment_starts(std::size_t n_frames,
                                        double overlap_fraction);
std::vector<Segment> enumerate_segments(const dsp::MelSpectrogram& spec,
                                        double overlap_fraction);

/// Copies 256 consecutive frames starting at start_frame into a 1x64x256
/// tensor.
Segment extract_segment(const dsp::MelSpectrogram& spec,
                        std::size_t start_frame);

/// Stacks segments into a [B x 1 x 64 x 256] batch, preserving order.
std::pair<Tensor, std::vector<int>> make_batch(
    const std::vector<Segment>& segments, const std::vector<int>& labels);

/// Manifest file: one record per line, tab-separated
/// (id, feature_path, genre, split).
void save_manifest(const std::vector<TrackRecord>& records,
                   const std::filesystem::path& path);
std::vector<TrackRecord> load_manifest(const std::filesystem::path& path);

std::vector<TrackRecord> records_in_split(const std::vector<TrackRecord>& all,
                                          Split split);

/// Lazy, thread-safe cache of loaded feature files keyed by path.
class FeatureStore {
 public:
  const dsp::MelSpectrogram& get(const std::filesystem::path& path);

 private:
  std::mutex mutex_;
  std::map<std::string, dsp::MelSpectrogram> cache_;
};

}  // namespace genrecnn::data
