#include "genrecnn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "genrecnn/errors.hpp"

namespace genrecnn::data {

const std::array<std::string, kNumGenres>& genre_names() {
  static const std::array<std::string, kNumGenres> names = {
      "blues", "classical", "country", "disco", "hiphop",
      "jazz",  "metal",     "pop",     "reggae", "rock"};
  return names;
}

int genre_index(const std::string& name) {
  const auto& names = genre_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<int>(i);
  }
  throw DomainError("unknown genre '" + name + "'");
}

const std::string& genre_name(int index) {
  if (index < 0 || index >= static_cast<int>(kNumGenres)) {
    throw DomainError("genre index " + std::to_string(index) + " out of range");
  }
  return genre_names()[static_cast<std::size_t>(index)];
}

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  throw DomainError("bad split");
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "validation") return Split::kValidation;
  if (name == "test") return Split::kTest;
  throw DomainError("unknown split '" + name + "'");
}

void split_dataset(std::vector<TrackRecord>& records,
                   const std::array<int, 3>& ratios, std::uint64_t seed) {
  long ratio_sum = 0;
  for (int r : ratios) {
    if (r < 0) throw ConfigError("split: negative ratio");
    ratio_sum += r;
  }
  if (ratio_sum <= 0) throw ConfigError("split: ratios sum to zero");

  // Group record indices by genre, in input order.
  std::array<std::vector<std::size_t>, kNumGenres> by_genre;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const int g = records[i].genre;
    if (g < 0 || g >= static_cast<int>(kNumGenres)) {
      throw ConfigError("split: record '" + records[i].id + "' has bad genre");
    }
    by_genre[static_cast<std::size_t>(g)].push_back(i);
  }

  std::mt19937_64 rng(seed);
  for (std::size_t g = 0; g < kNumGenres; ++g) {
    auto& idx = by_genre[g];
    if (idx.empty()) continue;
    if (static_cast<long>(idx.size()) < ratio_sum) {
      throw ConfigError("split: genre '" + genre_name(static_cast<int>(g)) +
                        "' has " + std::to_string(idx.size()) +
                        " tracks, need at least " + std::to_string(ratio_sum));
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    // Cumulative boundaries keep every split within one track of the exact
    // fraction.
    const double n = static_cast<double>(idx.size());
    const auto b1 = static_cast<std::size_t>(
        std::llround(n * static_cast<double>(ratios[0]) /
                     static_cast<double>(ratio_sum)));
    const auto b2 = static_cast<std::size_t>(
        std::llround(n * static_cast<double>(ratios[0] + ratios[1]) /
                     static_cast<double>(ratio_sum)));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      Split s = k < b1 ? Split::kTrain
                       : (k < b2 ? Split::kValidation : Split::kTest);
      records[idx[k]].split = s;
    }
  }
}

Segment extract_segment(const dsp::MelSpectrogram& spec,
                        std::size_t start_frame) {
  const std::size_t n_mels = spec.values.shape[0];
  const std::size_t n_frames = spec.n_frames();
  if (n_mels != 64) {
    throw ShapeError("segment: expected 64 mel bands, got " +
                     std::to_string(n_mels));
  }
  if (start_frame + kSegmentFrames > n_frames) {
    throw InsufficientInputError("segment: start " +
                                 std::to_string(start_frame) +
                                 " overruns " + std::to_string(n_frames) +
                                 " frames");
  }
  Segment seg;
  seg.start_frame = start_frame;
  seg.values.resize({1, n_mels, kSegmentFrames});
  for (std::size_t m = 0; m < n_mels; ++m) {
    const float* src = spec.values.ptr() + m * n_frames + start_frame;
    float* dst = seg.values.ptr() + m * kSegmentFrames;
    std::memcpy(dst, src, kSegmentFrames * sizeof(float));
  }
  return seg;
}

Segment sample_training_segment(const dsp::MelSpectrogram& spec,
                                std::mt19937_64& rng) {
  const std::size_t n_frames = spec.n_frames();
  if (n_frames < kSegmentFrames) {
    throw InsufficientInputError(
        "sample: spectrogram of " + std::to_string(n_frames) +
        " frames is shorter than a segment (" +
        std::to_string(kSegmentFrames) + ")");
  }
  std::uniform_int_distribution<std::size_t> dist(0,
                                                  n_frames - kSegmentFrames);
  return extract_segment(spec, dist(rng));
}

std::vector<std::size_t> segment_starts(std::size_t n_frames,
                                        double overlap_fraction) {
  if (overlap_fraction < 0.0 || overlap_fraction >= 1.0) {
    throw ConfigError("segment grid: overlap must be in [0, 1)");
  }
  if (n_frames < kSegmentFrames) {
    throw InsufficientInputError(
        "segment grid: " + std::to_string(n_frames) +
        " frames is shorter than a segment");
  }
  auto hop = static_cast<std::size_t>(std::llround(
      static_cast<double>(kSegmentFrames) * (1.0 - overlap_fraction)));
  if (hop == 0) hop = 1;
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + kSegmentFrames <= n_frames; s += hop) {
    starts.push_back(s);
  }
  return starts;
}

std::vector<Segment> enumerate_segments(const dsp::MelSpectrogram& spec,
                                        double overlap_fraction) {
  std::vector<Segment> out;
  for (std::size_t s : segment_starts(spec.n_frames(), overlap_fraction)) {
    out.push_back(extract_segment(spec, s));
  }
  return out;
}

std::pair<Tensor, std::vector<int>> make_batch(
    const std::vector<Segment>& segments, const std::vector<int>& labels) {
  if (segments.empty()) throw ConfigError("make_batch: empty batch");
  if (segments.size() != labels.size()) {
    throw ShapeError("make_batch: " + std::to_string(segments.size()) +
                     " segments vs " + std::to_string(labels.size()) +
                     " labels");
  }
  const auto& shape0 = segments[0].values.shape;
  Tensor batch({segments.size(), shape0[0], shape0[1], shape0[2]});
  const std::size_t stride = segments[0].values.size();
  for (std::size_t b = 0; b < segments.size(); ++b) {
    if (segments[b].values.shape != shape0) {
      throw ShapeError("make_batch: segment " + std::to_string(b) +
                       " has shape " + segments[b].values.shape_str());
    }
    std::memcpy(batch.ptr() + b * stride, segments[b].values.ptr(),
                stride * sizeof(float));
  }
  return {std::move(batch), labels};
}

void save_manifest(const std::vector<TrackRecord>& records,
                   const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& r : records) {
    out << r.id << '\t' << r.feature_path.string() << '\t'
        << genre_name(r.genre) << '\t' << split_name(r.split) << '\n';
  }
  if (!out) throw IoError("write failure on " + path.string());
}

std::vector<TrackRecord> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<TrackRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string id, feature, genre, split;
    if (!std::getline(fields, id, '\t') ||
        !std::getline(fields, feature, '\t') ||
        !std::getline(fields, genre, '\t') ||
        !std::getline(fields, split, '\t')) {
      throw FormatError("manifest: bad record at " + path.string() + ":" +
                        std::to_string(line_no));
    }
    TrackRecord r;
    r.id = id;
    r.feature_path = feature;
    r.genre = genre_index(genre);
    r.split = split_from_name(split);
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<TrackRecord> records_in_split(const std::vector<TrackRecord>& all,
                                          Split split) {
  std::vector<TrackRecord> out;
  for (const auto& r : all) {
    if (r.split == split) out.push_back(r);
  }
  return out;
}

const dsp::MelSpectrogram& FeatureStore::get(
    const std::filesystem::path& path) {
  const std::string key = path.string();
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = cache_.find(key);
  if (it == cache_.end()) {
    it = cache_.emplace(key, dsp::load_mel_cache(path)).first;
  }
  return it->second;
}

}  // namespace genrecnn::data
