#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "genrecnn/tensor.hpp"

namespace genrecnn::dsp {

/// Decoded mono waveform. Samples are dimensionless amplitudes with nominal
/// range [-1, 1].
struct AudioClip {
  std::vector<float> samples;
  int sample_rate = 0;
};

enum class WindowFunction { kHann, kRectangular };

/// Short-time analysis parameters. window_len samples per frame, hop_len
/// samples between frame starts (0 < hop_len <= window_len).
struct StftConfig {
  std::size_t window_len = 512;  // 23.2 ms at 22050 Hz
  std::size_t hop_len = 256;     // 50% overlap
  WindowFunction window = WindowFunction::kHann;
};

/// Triangular mel filterbank. weights is n_mels x n_freq_bins; row m is a
/// peak-1 triangle, linear in mel, so interior frequency bins see a partition
/// of unity across rows.
struct MelFilterbank {
  Tensor weights;                    // [n_mels x n_freq_bins]
  std::vector<double> center_freqs;  // Hz, one per filter
  double fmin = 0.0;
  double fmax = 0.0;

  std::size_t n_mels() const { return weights.shape[0]; }
  std::size_t n_freq_bins() const { return weights.shape[1]; }
};

/// Log-transformed mel energies, ln(1 + z). values is n_mels x n_frames.
struct MelSpectrogram {
  Tensor values;  // [n_mels x n_frames]
  std::size_t n_mels = 0;
  double frame_hop_seconds = 0.0;

  std::size_t n_frames() const {
    return values.rank() == 2 ? values.shape[1] : 0;
  }
};

/// HTK mel scale: 2595 * log10(1 + f / 700). Strictly increasing on f >= 0;
/// throws DomainError for negative frequencies.
double hz_to_mel(double f_hz);

/// Inverse of hz_to_mel.
double mel_to_hz(double mel);

/// Window samples for the given function, length n.
std::vector<double> make_window(WindowFunction fn, std::size_t n);

/// Power spectrogram: frame t covers samples [t*hop, t*hop + window_len),
/// each frame is windowed and transformed, entries are squared magnitudes of
/// the one-sided spectrum. Output shape is (window_len/2 + 1) x n_frames with
/// n_frames = floor((len - window_len)/hop) + 1; no padding, a trailing
/// partial window is dropped. Throws InsufficientInputError when the clip is
/// shorter than one window.
Tensor stft_power(const AudioClip& clip, const StftConfig& cfg);

/// Builds n_mels triangular filters with n_mels + 2 break points uniformly
/// spaced in mel between mel(fmin) and mel(fmax), evaluated at each FFT bin
/// frequency k * sample_rate / (2 * (n_freq_bins - 1)).
MelFilterbank build_mel_filterbank(std::size_t n_mels, std::size_t n_freq_bins,
                                   int sample_rate, double fmin, double fmax);

/// ln(1 + weights * stft_power(clip)). Requires clip.sample_rate > 0 and a
/// nonempty clip; errors from stft_power propagate.
MelSpectrogram log_mel_spectrogram(const AudioClip& clip, const StftConfig& cfg,
                                   const MelFilterbank& fb);

/// Feature-cache file: magic "MELS", version u32, n_mels u32, n_frames u32,
/// then n_mels*n_frames little-endian f32 values in mel-major (row-major)
/// order.
void save_mel_cache(const MelSpectrogram& spec,
                    const std::filesystem::path& path);
MelSpectrogram load_mel_cache(const std::filesystem::path& path);

}  // namespace genrecnn::dsp
