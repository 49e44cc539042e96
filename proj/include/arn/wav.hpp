#pragma once

#include <string>
#include <vector>

namespace arn {

struct WavData {
    std::vector<double> samples;  // first channel
    double fs = 0.0;
};

// Mono IEEE float32 WAV.
void write_wav(const std::string& path, const std::vector<double>& samples, double fs);

// Reads PCM 16/24/32-bit or float32 WAV files.
WavData read_wav(const std::string& path);

}  // namespace arn
