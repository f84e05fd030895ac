#pragma once

#include "afs/audio.hpp"
#include "afs/dsp.hpp"
#include "afs/error.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace afs::features {

// Time-major N x d feature matrix.
struct FeatureSequence {
    std::vector<float> frames; // n_frames * dim, row-major
    int n_frames = 0;
    int dim = 0;
    int frame_rate = 0; // Hz: 100 (mel), 50 (stem), 25 (pooled)
    int window_index = 0;
    int valid_frames = 0; // frames not attributable to zero padding

    const float* row(int t) const { return frames.data() + size_t(t) * dim; }
    float* row(int t) { return frames.data() + size_t(t) * dim; }
};

enum class PadPolicy { ZeroPadToFull };

struct WindowPlan {
    double window_seconds = 30.0;
    int max_windows = 20;
    PadPolicy pad_policy = PadPolicy::ZeroPadToFull;
};

struct Window {
    AudioBuffer audio; // always padded to the full window length
    int window_index = 0;
    int valid_samples = 0;
};

struct ChunkResult {
    std::vector<Window> windows;
    int64_t truncated_samples = 0; // audio dropped beyond max_windows
};

// Non-overlapping windowing with zero padding of the final partial window.
ChunkResult chunk_windows(const AudioBuffer& audio, const WindowPlan& plan);

// 2-layer 1-D convolution stem, kernel 3, second conv strided by 2, GELU after
// each layer: mel frames at 100 Hz in, features at 50 Hz out.
struct StemParams {
    int in_channels = 0;
    int width = 0;
    std::vector<float> w1, b1; // w1: width * in_channels * 3, b1: width
    std::vector<float> w2, b2; // w2: width * width * 3,       b2: width
};

StemParams make_stem(int in_channels, int width);
void init_identity(StemParams& stem);
void init_random(StemParams& stem, uint64_t seed);

FeatureSequence encoder_stem(const dsp::MelSpectrogram& mel, const StemParams& stem);

// Mean-pool adjacent frame pairs; a trailing odd frame is dropped.
FeatureSequence pool_stride2(const FeatureSequence& feats);

// 2-layer MLP with GELU projecting into the LM embedding width.
struct AdaptorParams {
    int d_in = 0, d_hidden = 0, d_out = 0;
    std::vector<float> w1, b1; // w1: d_hidden * d_in
    std::vector<float> w2, b2; // w2: d_out * d_hidden
};

AdaptorParams make_adaptor(int d_in, int d_hidden, int d_out);
void init_identity(AdaptorParams& proj); // exact pass-through (pad/truncate to d_out)
void init_random(AdaptorParams& proj, uint64_t seed);

FeatureSequence adapt(const FeatureSequence& feats, const AdaptorParams& proj);

// Frame arithmetic, kept as standalone functions so shape identities can be
// checked without running the convolutions.
int mel_frame_count(int64_t n_samples, int hop);         // ceil(n/hop)
int stem_frame_count(int mel_frames);                    // ceil(n/2)
int pooled_frame_count(int stem_frames);                 // floor(n/2)
int pooled_tokens_for_samples(int64_t n_samples, int sample_rate, int mel_hop,
                              const WindowPlan& plan);

struct FeatureConfig {
    int sample_rate = 16000;
    int n_mels = 128;
    double mel_window_seconds = 0.025;
    double mel_hop_seconds = 0.010;
    int stem_width = 32;
    int adaptor_hidden = 64;
    int d_lm = 32;
    WindowPlan plan;
};

// Full front-end: chunk -> mel -> stem -> pool -> adaptor, one sequence per window.
class FeatureExtractor {
  public:
    FeatureExtractor(const FeatureConfig& cfg, uint64_t seed);

    struct Output {
        std::vector<FeatureSequence> windows; // at 25 Hz, adapted
        int64_t truncated_samples = 0;
        std::vector<int> mel_frames, stem_frames, pooled_frames; // per window
    };
    Output extract(const AudioBuffer& audio) const;

    const FeatureConfig& config() const { return cfg_; }
    const StemParams& stem() const { return stem_; }
    const AdaptorParams& adaptor() const { return adaptor_; }

  private:
    FeatureConfig cfg_;
    StemParams stem_;
    AdaptorParams adaptor_;
    dsp::MelFilterbank bank_;
    int mel_window_ = 0, mel_hop_ = 0;
};

// Feature dump: {magic "AFFE", version u16, frame_rate u16, N u32, d u32}, f32 data.
void save_features(const std::string& path, const FeatureSequence& feats);
FeatureSequence load_features(const std::string& path);

} // namespace afs::features
