#ifndef AFS_AUDIO_HPP
#define AFS_AUDIO_HPP

#include "afs/error.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace afs {

// Mono sample sequence. Samples are 32-bit floats nominally in [-1, 1];
// transforms accumulate in 64-bit and store back to 32-bit.
struct AudioBuffer {
    std::vector<float> samples;
    int sample_rate = 0;

    AudioBuffer() = default;
    AudioBuffer(std::vector<float> s, int rate) : samples(std::move(s)), sample_rate(rate) {}

    size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
    double duration_seconds() const {
        return sample_rate > 0 ? double(samples.size()) / sample_rate : 0.0;
    }
};

inline void require_valid(const AudioBuffer& a, const char* ctx) {
    if (a.empty()) raise(ErrorCode::EmptyAudio, std::string(ctx) + ": empty audio");
    if (a.sample_rate <= 0) raise(ErrorCode::InvalidConfig, std::string(ctx) + ": sample_rate must be > 0");
    for (float s : a.samples)
        if (!std::isfinite(s)) raise(ErrorCode::InvalidSignal, std::string(ctx) + ": non-finite sample");
}

} // namespace afs

#endif
