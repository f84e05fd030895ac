#pragma once

#include "afs/audio.hpp"
#include "afs/checkpoint.hpp"
#include "afs/nn/decoder.hpp"
#include "afs/rvq.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace afs::codec {

struct CodecConfig {
    int sample_rate = 44100;
    int window = 32; // STFT analysis/synthesis window
    int hop = 8;
    int initial_width = 384;
    std::vector<int> stage_widths = {768, 1536, 512}; // final entry = latent dim
    int blocks_per_stage = 3;
    int stage_stride = 8; // stride == kernel for every stage
    int dw_kernel = 7;    // ConvNeXt depthwise kernel
    int expand = 3;       // ConvNeXt pointwise expansion
    int rvq_levels = 72;
    int rvq_entries = 1024;

    int stages() const { return int(stage_widths.size()); }
    int channels() const { return 2 * (window / 2 + 1); } // log-magnitude + phase
    int latent_dim() const { return stage_widths.back(); }
    int compression() const {
        int c = hop;
        for (int s = 0; s < stages(); ++s) c *= stage_stride;
        return c;
    }
    double frames_per_second() const { return double(sample_rate) / compression(); }
    void validate() const;
};

CodecConfig paper_config(); // 384 / 768 / 1536 / 512, 72 levels
CodecConfig toy_config();   // 16 / 32 / 64 / 24, 8 levels, K=64

struct LatentSequence {
    nn::Mat<float> frames; // T x latent_dim
    double frames_per_second = 0.0;

    int count() const { return frames.rows; }
    int dim() const { return frames.cols; }
};

class Codec;

// Incremental decoder state: per-block causal left-context buffers plus the
// overlap-add carry. One state per audio session; single-owner.
class StreamState {
  public:
    StreamState(const Codec& codec, const rvq::CodebookSet& books);

    // Feed one code, receive exactly one compression unit of samples.
    std::vector<float> push(const rvq::RvqCode& code);
    int emitted_frames() const { return emitted_; }

  private:
    const Codec* codec_;
    const rvq::CodebookSet* books_;
    std::vector<nn::Mat<float>> history_; // (dw_kernel-1) x C per decoder block
    std::vector<int> history_valid_;      // filled rows per history buffer
    std::vector<float> ola_tail_;         // window - hop carry samples
    int64_t sample_pos_ = 0;
    int emitted_ = 0;

    friend class Codec;
};

struct TrainOptions {
    int steps = 500;
    nn::AdamConfig adam{.lr = 2e-3, .cosine_steps = 0};
    bool use_quantizer = false;    // straight-through hook (requires books)
    double commit_weight = 0.25;
    const rvq::CodebookSet* books = nullptr;
};

struct TrainResult {
    std::vector<double> loss_history; // training loss per step
};

class Codec {
  public:
    Codec(const CodecConfig& cfg, uint64_t seed);
    Codec(Codec&&) noexcept;
    Codec& operator=(Codec&&) noexcept;
    ~Codec();

    const CodecConfig& config() const { return cfg_; }
    nn::ParamStore<float>& params() { return store_; }
    const nn::ParamStore<float>& params() const { return store_; }

    // Analysis half: audio -> latent frames, strictly causal per 4096-sample unit.
    LatentSequence encode(const AudioBuffer& audio) const;

    std::vector<rvq::RvqCode> quantize(const LatentSequence& latents,
                                       const rvq::CodebookSet& books) const;

    // Synthesis half from codes (offline, full-sequence).
    AudioBuffer decode(const std::vector<rvq::RvqCode>& codes,
                       const rvq::CodebookSet& books) const;

    // Synthesis half from continuous latents (autoencoder path used in training).
    AudioBuffer decode_latents(const LatentSequence& latents) const;

    // The 34-channel analysis features feeding both the plain and the tape
    // encoder; exposed for the training graph and tests.
    nn::Mat<float> analysis_features(const AudioBuffer& audio) const;

    void save(const std::string& path) const;
    static Codec load(const std::string& path);

    // Bound parameter handles plus fixed DSP tables; defined alongside the
    // implementation.
    struct Plan;

  private:
    CodecConfig cfg_;
    nn::ParamStore<float> store_;
    std::unique_ptr<Plan> plan_;

    friend class StreamState;
    friend TrainResult train(Codec&, const std::vector<AudioBuffer>&, const TrainOptions&);
    friend double training_loss(Codec&, const AudioBuffer&);
};

// Mel-domain L1 reconstruction distance (128 mels, window 1024, hop 256).
double mel_recon_loss(const AudioBuffer& original, const AudioBuffer& reconstructed);

// Autoencoder training (mel loss); quantizer optionally bridged by a
// straight-through hook. Deterministic given the codec's initial state.
TrainResult train(Codec& codec, const std::vector<AudioBuffer>& clips,
                  const TrainOptions& opts);

// One forward pass of the training objective on a single clip (no update).
double training_loss(Codec& codec, const AudioBuffer& clip);

// Fit RVQ codebooks to the encoder's latents over a clip set.
rvq::CodebookSet fit_codebooks(const Codec& codec, const std::vector<AudioBuffer>& clips,
                               uint64_t seed);

// Token-stream file: {magic "AFRQ", version u16, sample_rate u32, L u16,
// K u32, frame count u64, frames x L u16 indices}.
struct CodeFile {
    int sample_rate = 0;
    int levels = 0;
    int entries = 0;
    std::vector<rvq::RvqCode> codes;
};

void save_codes(const std::string& path, const std::vector<rvq::RvqCode>& codes,
                int sample_rate, int levels, int entries);
CodeFile load_codes(const std::string& path);

} // namespace afs::codec
