#pragma once

// RirSet persistence: a multichannel 32-bit float RIFF/WAVE payload in
// mic-major channel order plus a JSON sidecar with geometry, sampling
// metadata and (optional) ground truth.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "echoplane/rirsim.hpp"

namespace echoplane {

struct WavData {
  double fs = 0.0;
  std::vector<std::vector<float>> channels;
};

/// IEEE float32, WAVE_FORMAT_EXTENSIBLE when more than two channels.
std::string encode_wav(const WavData& wav);
/// Accepts PCM 16/24/32-bit and IEEE float 32/64-bit, plain or extensible.
WavData decode_wav(std::string_view bytes);

void write_wav(const std::filesystem::path& path, const WavData& wav);
WavData read_wav(const std::filesystem::path& path);

std::string sidecar_json(const RirSet& set);
/// Builds a RirSet from WAV channels and a sidecar; throws Format on mismatch.
RirSet rirset_from_parts(WavData wav, std::string_view sidecar);

/// Geometry-only description used when ingesting external recordings:
/// {"center": [x,y,z], "mics": [[x,y,z], ...], "sources": [[x,y,z], ...], "c0": 343.1}
RirSet rirset_from_geometry(WavData wav, std::string_view geometry_json);

/// Writes `<stem>.wav` and `<stem>.json` next to each other.
void write_rirset(const RirSet& set, const std::filesystem::path& wav_path);
RirSet read_rirset(const std::filesystem::path& wav_path);
std::filesystem::path sidecar_path(const std::filesystem::path& wav_path);

/// Write to a temporary sibling and rename over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

/// 64-bit FNV-1a, hex encoded.
std::string content_hash(std::string_view bytes);

}  // namespace echoplane
