#ifndef AFS_WAV_HPP
#define AFS_WAV_HPP

#include "afs/audio.hpp"

#include <string>

namespace afs::wav {

enum class SampleFormat { Pcm16, Float32 };

// Reads RIFF/WAVE, PCM 16-bit or IEEE float 32-bit. Multi-channel input is
// downmixed to mono by averaging. Compressed variants are rejected with
// FormatError.
AudioBuffer read(const std::string& path);

void write(const std::string& path, const AudioBuffer& audio,
           SampleFormat fmt = SampleFormat::Float32);

} // namespace afs::wav

#endif
