#include "genrecnn/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numbers>

#include "genrecnn/errors.hpp"

namespace genrecnn::dsp {

namespace {

bool is_pow2(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

/// In-place iterative radix-2 FFT, decimation in time.
void fft_pow2(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

/// O(n^2) DFT for non-power-of-two windows.
void dft_naive(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>(k) *
                         static_cast<double>(t) / static_cast<double>(n);
      acc += a[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  a = std::move(out);
}

}  // namespace

double hz_to_mel(double f_hz) {
  if (f_hz < 0.0) {
    throw DomainError("hz_to_mel: negative frequency " + std::to_string(f_hz));
  }
  return 2595.0 * std::log10(1.0 + f_hz / 700.0);
}

double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

std::vector<double> make_window(WindowFunction fn, std::size_t n) {
  std::vector<double> w(n, 1.0);
  if (fn == WindowFunction::kHann) {
    // Periodic Hann.
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi *
                                  static_cast<double>(i) /
                                  static_cast<double>(n));
    }
  }
  return w;
}

Tensor stft_power(const AudioClip& clip, const StftConfig& cfg) {
  if (cfg.window_len == 0 || cfg.hop_len == 0 ||
      cfg.hop_len > cfg.window_len) {
    throw ConfigError("stft: need 0 < hop_len <= window_len");
  }
  if (clip.samples.size() < cfg.window_len) {
    throw InsufficientInputError(
        "stft: clip of " + std::to_string(clip.samples.size()) +
        " samples is shorter than one window of " +
        std::to_string(cfg.window_len));
  }

  const std::size_t n = cfg.window_len;
  const std::size_t n_bins = n / 2 + 1;
  const std::size_t n_frames = (clip.samples.size() - n) / cfg.hop_len + 1;
  const std::vector<double> window = make_window(cfg.window, n);
  const bool pow2 = is_pow2(n);

  Tensor out({n_bins, n_frames});
  std::vector<std::complex<double>> frame(n);
  for (std::size_t t = 0; t < n_frames; ++t) {
    const float* src = clip.samples.data() + t * cfg.hop_len;
    for (std::size_t i = 0; i < n; ++i) {
      frame[i] = {static_cast<double>(src[i]) * window[i], 0.0};
    }
    if (pow2) {
      fft_pow2(frame);
    } else {
      dft_naive(frame);
    }
    for (std::size_t k = 0; k < n_bins; ++k) {
      out.at2(k, t) = static_cast<float>(std::norm(frame[k]));
    }
  }
  return out;
}

MelFilterbank build_mel_filterbank(std::size_t n_mels, std::size_t n_freq_bins,
                                   int sample_rate, double fmin, double fmax) {
  if (n_mels < 1) throw ConfigError("filterbank: n_mels must be >= 1");
  if (n_freq_bins < 2) throw ConfigError("filterbank: n_freq_bins must be >= 2");
  if (sample_rate <= 0) throw ConfigError("filterbank: bad sample rate");
  const double nyquist = sample_rate / 2.0;
  if (fmin < 0.0 || fmin >= fmax) {
    throw DomainError("filterbank: need 0 <= fmin < fmax");
  }
  if (fmax > nyquist) {
    throw DomainError("filterbank: fmax " + std::to_string(fmax) +
                      " exceeds Nyquist " + std::to_string(nyquist));
  }

  // n_mels + 2 break points uniformly spaced in mel.
  const double mel_lo = hz_to_mel(fmin);
  const double mel_hi = hz_to_mel(fmax);
  std::vector<double> mel_pts(n_mels + 2);
  for (std::size_t i = 0; i < mel_pts.size(); ++i) {
    mel_pts[i] = mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                              static_cast<double>(n_mels + 1);
  }

  // FFT bin frequencies for a window of 2 * (n_freq_bins - 1) samples.
  const double bin_hz =
      static_cast<double>(sample_rate) / (2.0 * static_cast<double>(n_freq_bins - 1));

  MelFilterbank fb;
  fb.fmin = fmin;
  fb.fmax = fmax;
  fb.weights.resize({n_mels, n_freq_bins});
  fb.weights.fill(0.0f);
  fb.center_freqs.resize(n_mels);

  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lo = mel_pts[m];
    const double center = mel_pts[m + 1];
    const double hi = mel_pts[m + 2];
    fb.center_freqs[m] = mel_to_hz(center);
    for (std::size_t k = 0; k < n_freq_bins; ++k) {
      const double mel_k = hz_to_mel(bin_hz * static_cast<double>(k));
      double w = 0.0;
      if (mel_k > lo && mel_k < hi) {
        w = mel_k <= center ? (mel_k - lo) / (center - lo)
                            : (hi - mel_k) / (hi - center);
      }
      fb.weights.at2(m, k) = static_cast<float>(w);
    }
  }
  return fb;
}

MelSpectrogram log_mel_spectrogram(const AudioClip& clip, const StftConfig& cfg,
                                   const MelFilterbank& fb) {
  if (clip.sample_rate <= 0) throw ConfigError("clip has no sample rate");
  const Tensor power = stft_power(clip, cfg);
  const std::size_t n_bins = power.shape[0];
  const std::size_t n_frames = power.shape[1];
  if (fb.n_freq_bins() != n_bins) {
    throw ShapeError("filterbank has " + std::to_string(fb.n_freq_bins()) +
                     " bins, spectrogram has " + std::to_string(n_bins));
  }

  MelSpectrogram spec;
  spec.n_mels = fb.n_mels();
  spec.frame_hop_seconds =
      static_cast<double>(cfg.hop_len) / static_cast<double>(clip.sample_rate);
  spec.values.resize({fb.n_mels(), n_frames});
  for (std::size_t m = 0; m < fb.n_mels(); ++m) {
    const float* wrow = fb.weights.ptr() + m * n_bins;
    for (std::size_t t = 0; t < n_frames; ++t) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n_bins; ++k) {
        acc += static_cast<double>(wrow[k]) *
               static_cast<double>(power.at2(k, t));
      }
      spec.values.at2(m, t) = static_cast<float>(std::log1p(acc));
    }
  }
  return spec;
}

namespace {

constexpr char kMelMagic[4] = {'M', 'E', 'L', 'S'};
constexpr std::uint32_t kMelVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32_stream(std::istream& in, const char* what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw FormatError(std::string("mel cache: truncated ") + what);
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_mel_cache(const MelSpectrogram& spec,
                    const std::filesystem::path& path) {
  check_rank(spec.values, 2, "mel cache");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kMelMagic, 4);
  write_u32(out, kMelVersion);
  write_u32(out, static_cast<std::uint32_t>(spec.values.shape[0]));
  write_u32(out, static_cast<std::uint32_t>(spec.values.shape[1]));
  // f32 payload is already little-endian in memory on supported targets.
  out.write(reinterpret_cast<const char*>(spec.values.ptr()),
            static_cast<std::streamsize>(spec.values.size() * sizeof(float)));
  if (!out) throw IoError("write failure on " + path.string());
}

MelSpectrogram load_mel_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMelMagic, 4) != 0) {
    throw FormatError("mel cache: bad magic in " + path.string());
  }
  const std::uint32_t version = read_u32_stream(in, "version");
  if (version != kMelVersion) {
    throw FormatError("mel cache: unsupported version " +
                      std::to_string(version));
  }
  const std::uint32_t n_mels = read_u32_stream(in, "n_mels");
  const std::uint32_t n_frames = read_u32_stream(in, "n_frames");
  MelSpectrogram spec;
  spec.n_mels = n_mels;
  spec.frame_hop_seconds = 256.0 / 22050.0;  // not stored in the cache format
  spec.values.resize({n_mels, n_frames});
  in.read(reinterpret_cast<char*>(spec.values.ptr()),
          static_cast<std::streamsize>(spec.values.size() * sizeof(float)));
  if (!in) throw FormatError("mel cache: truncated payload in " + path.string());
  return spec;
}

}  // namespace genrecnn::dsp
