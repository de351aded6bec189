// Copyright 2026 SeLG Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef SELG_WAV_IO_H_
#define SELG_WAV_IO_H_

#include <string>

#include "selg/audio_codec.h"

namespace selg {

// Reads a RIFF/WAV file. Accepts mono PCM16 (normalized to [-1, 1] by
// dividing by 32768) or IEEE float32. Throws std::runtime_error on malformed
// files and unsupported layouts.
Waveform read_wav(const std::string& path);

// Writes mono IEEE float32 WAV.
void write_wav(const std::string& path, const Waveform& w);

}  // namespace selg

#endif  // SELG_WAV_IO_H_
