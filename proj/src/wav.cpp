#include "genrecnn/wav.hpp"

#include <cstring>
#include <fstream>

#include "genrecnn/errors.hpp"

namespace genrecnn::dsp {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatIeeeFloat = 3;

std::uint32_t read_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

bool tag_is(const std::uint8_t* p, const char* tag) {
  return std::memcmp(p, tag, 4) == 0;
}

struct FmtChunk {
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t bits_per_sample = 0;
};

}  // namespace

AudioClip decode_wav(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 12 || !tag_is(bytes.data(), "RIFF") ||
      !tag_is(bytes.data() + 8, "WAVE")) {
    throw FormatError("not a RIFF/WAVE container");
  }

  FmtChunk fmt;
  bool have_fmt = false;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;

  // Walk the chunk list; unknown chunks are skipped (word-aligned).
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* hdr = bytes.data() + pos;
    const std::uint32_t chunk_size = read_u32(hdr + 4);
    pos += 8;
    if (pos + chunk_size > bytes.size()) {
      throw FormatError("chunk extends past end of file");
    }
    if (tag_is(hdr, "fmt ")) {
      if (chunk_size < 16) throw FormatError("fmt chunk too short");
      fmt.format = read_u16(bytes.data() + pos);
      fmt.channels = read_u16(bytes.data() + pos + 2);
      fmt.sample_rate = read_u32(bytes.data() + pos + 4);
      fmt.bits_per_sample = read_u16(bytes.data() + pos + 14);
      have_fmt = true;
    } else if (tag_is(hdr, "data")) {
      data = bytes.data() + pos;
      data_size = chunk_size;
    }
    pos += chunk_size + (chunk_size & 1);
  }

  if (!have_fmt) throw FormatError("missing fmt chunk");
  if (data == nullptr) throw FormatError("missing data chunk");
  if (fmt.sample_rate == 0) throw FormatError("zero sample rate");
  if (fmt.channels != 1 && fmt.channels != 2) {
    throw UnsupportedError("unsupported channel count " +
                           std::to_string(fmt.channels));
  }

  std::size_t bytes_per_sample;
  if (fmt.format == kFormatPcm && fmt.bits_per_sample == 16) {
    bytes_per_sample = 2;
  } else if (fmt.format == kFormatIeeeFloat && fmt.bits_per_sample == 32) {
    bytes_per_sample = 4;
  } else {
    throw UnsupportedError("unsupported codec: format " +
                           std::to_string(fmt.format) + ", " +
                           std::to_string(fmt.bits_per_sample) + " bits");
  }

  const std::size_t frame_bytes = bytes_per_sample * fmt.channels;
  if (data_size % frame_bytes != 0) {
    throw FormatError("data chunk size is not a whole number of frames");
  }
  const std::size_t n_frames = data_size / frame_bytes;

  auto sample_at = [&](std::size_t index) -> float {
    const std::uint8_t* p = data + index * bytes_per_sample;
    if (bytes_per_sample == 2) {
      const auto raw = static_cast<std::int16_t>(read_u16(p));
      return static_cast<float>(raw) / 32768.0f;
    }
    const std::uint32_t u = read_u32(p);
    float f;
    std::memcpy(&f, &u, sizeof f);
    return f;
  };

  AudioClip clip;
  clip.sample_rate = static_cast<int>(fmt.sample_rate);
  clip.samples.resize(n_frames);
  if (fmt.channels == 1) {
    for (std::size_t i = 0; i < n_frames; ++i) clip.samples[i] = sample_at(i);
  } else {
    for (std::size_t i = 0; i < n_frames; ++i) {
      clip.samples[i] = (sample_at(2 * i) + sample_at(2 * i + 1)) * 0.5f;
    }
  }
  return clip;
}

AudioClip load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on " + path.string());
  return decode_wav(bytes);
}

}  // namespace genrecnn::dsp
