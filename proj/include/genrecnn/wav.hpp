#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "genrecnn/dsp.hpp"

namespace genrecnn::dsp {

/// Decodes a RIFF/WAVE container into a mono clip. Accepts PCM 16-bit and
/// IEEE float 32-bit data, 1 or 2 channels; stereo is downmixed by per-sample
/// mean. 16-bit samples are scaled by 1/32768 so the range is [-1, 1).
/// Throws FormatError on a malformed container and UnsupportedError on any
/// other codec, bit depth, or channel count.
AudioClip decode_wav(const std::vector<std::uint8_t>& bytes);

/// Reads the whole file and decodes it. Throws IoError if unreadable.
AudioClip load_wav(const std::filesystem::path& path);

}  // namespace genrecnn::dsp
