#pragma once

#include "afs/audio.hpp"
#include "afs/bench.hpp"
#include "afs/checkpoint.hpp"
#include "afs/codec.hpp"
#include "afs/nn/decoder.hpp"
#include "afs/rvq.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace afs::tts {

// Byte-level text vocabulary: raw bytes 0-255 plus two specials.
inline constexpr int kPadToken = 256;
inline constexpr int kEosToken = 257;
inline constexpr int kVocab = 258;

std::vector<int> tokenize(const std::string& text);
// Specials drop out; out-of-vocabulary ids raise CorruptCode.
std::string detokenize(std::span<const int> tokens);

// Starting level of each unmasking group: contiguous, coarse-first, sizes
// differing by at most one. 72 levels / 4 steps -> {0, 18, 36, 54}.
std::vector<int> unmask_group_starts(int levels, int steps);

struct TtsConfig {
    nn::DecoderConfig decoder;
    int vocab = kVocab;
    int latent_dim = 512; // codec latent width D
    int rvq_levels = 72;
    int rvq_entries = 1024;
    int mixtures = 4;
    int mog_hidden = 256;
    int unmask_steps = 4;

    nn::MogConfig mog() const;
    void validate() const;
};

TtsConfig toy_tts_config(); // sized against codec::toy_config latents

class TtsModel {
  public:
    TtsModel(const TtsConfig& cfg, uint64_t seed);
    TtsModel(TtsModel&&) noexcept;
    TtsModel& operator=(TtsModel&&) noexcept;
    ~TtsModel();

    const TtsConfig& config() const { return cfg_; }
    nn::ParamStore<float>& params() { return store_; }
    const nn::ParamStore<float>& params() const { return store_; }

    void save(const std::string& path) const;
    static TtsModel load(const std::string& path);

    // Bound parameter handles; defined alongside the implementation.
    struct Plan;
    Plan& plan() const { return *plan_; }

  private:
    TtsConfig cfg_;
    nn::ParamStore<float> store_;
    std::unique_ptr<Plan> plan_;
};

// Sum of code embeddings over all levels for each frame (n x D); the
// decoder-side audio representation and the teacher-forcing target.
nn::Mat<float> code_latents(std::span<const rvq::RvqCode> codes, const rvq::CodebookSet& books);

// Extend a partially committed code: subtract the first `from_level`
// codewords from z, then greedily quantize the remainder over the open
// levels with the encoder's tie-breaking.
rvq::RvqCode requantize_from(std::span<const float> z, const rvq::CodebookSet& books,
                             const rvq::RvqCode& committed, int from_level);

// Full iterative unmasking of one frame: at each group boundary, evaluate
// the mixture head on [hidden ; committed-prefix embedding], draw a latent,
// and re-quantize the open levels around the committed ones.
rvq::RvqCode unmask_code(const TtsModel& model, std::span<const float> hidden,
                         const rvq::CodebookSet& books, double temperature, std::mt19937_64& rng);

// One aligned (speaker, text, codes) recording; one text token per frame.
struct Utterance {
    std::string speaker;
    std::string text;
    std::vector<rvq::RvqCode> codes;
};

struct TrainingSample {
    std::vector<int> tokens;
    std::vector<rvq::RvqCode> codes;
};

// Concatenate consecutive utterances until `target_seconds` of codes (at
// `frames_per_second`) accumulate or the span ends. A speaker change before
// that raises SpeakerMismatch.
TrainingSample build_training_sample(std::span<const Utterance> utts, double target_seconds,
                                     double frames_per_second);

// Uniform concatenation target in [1, 120] seconds.
double uniform_target_seconds(std::mt19937_64& rng);

// Teacher-forced mean NLL over one sample with a fixed committed-prefix size
// per position (no parameter update).
double teacher_forced_nll(TtsModel& model, const TrainingSample& sample,
                          const rvq::CodebookSet& books, std::span<const int> prefix_levels);

struct TtsTrainOptions {
    int steps = 2000;
    nn::AdamConfig adam{.lr = 1e-3, .cosine_steps = 0};
    uint64_t seed = 0;
    // Invoked with (completed steps, model) every checkpoint_every steps on
    // the single Adam trajectory; 0 disables.
    int checkpoint_every = 0;
    std::function<void(int, const TtsModel&)> on_checkpoint;
};

struct TtsTrainResult {
    std::vector<double> loss_history;
};

// Round-robin over samples; per position the committed-prefix size is drawn
// uniformly from the unmask group starts.
TtsTrainResult train(TtsModel& model, std::span<const TrainingSample> samples,
                     const rvq::CodebookSet& books, const TtsTrainOptions& opts);

// Deterministic objective: mean teacher-forced NLL over samples, averaged
// over every group-start prefix size.
double eval_nll(TtsModel& model, std::span<const TrainingSample> samples,
                const rvq::CodebookSet& books);

// Incremental synthesis: one text token in, one committed code out. The
// committed frame is fed back through the audio embedding, so the context
// the model sees is exactly what the codec will receive.
class Session {
  public:
    Session(const TtsModel& model, const rvq::CodebookSet& books, double temperature,
            uint64_t seed);

    rvq::RvqCode step(int text_token);
    void close();
    bool closed() const { return closed_; }
    int emitted() const { return emitted_; }

  private:
    const TtsModel* model_;
    const rvq::CodebookSet* books_;
    nn::InferenceDecoder dec_;
    double temperature_;
    std::mt19937_64 rng_;
    bool closed_ = false;
    int emitted_ = 0;
};

struct SynthResult {
    std::vector<bench::TokenEvent> events;
    std::vector<rvq::RvqCode> codes;
    AudioBuffer audio;
    uint64_t t0_ns = 0;
};

// Text to waveform through the streaming decoder; every frame is timestamped
// as it crosses each stage. Empty text yields an empty result.
SynthResult synthesize(const TtsModel& model, const codec::Codec& codec,
                       const rvq::CodebookSet& books, const std::string& text,
                       bench::Clock& clock, double temperature, uint64_t seed);

} // namespace afs::tts
