#pragma once

#include "afs/bench.hpp"
#include "afs/codec.hpp"
#include "afs/features.hpp"
#include "afs/tts.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace afs::config {

// One document steering every command, so a run is reproducible from
// (inputs, config, seed) alone. Defaults describe the full-scale system;
// desk-sized runs override fields through JSON. Unknown keys are rejected —
// a typo must fail loudly, not fall back to a default. Serialized sections
// carry a `paper_value` block recording the published full-scale value of
// each pinned key; the block is documentation and is ignored when loading.
struct RunConfig {
    uint64_t seed = 0;

    // Waveform-domain analysis/synthesis geometry.
    struct Dsp {
        int sample_rate = 44100;
        int stft_window = 32;
        int stft_hop = 8;
        bool operator==(const Dsp&) const = default;
    } dsp;

    // Recognition-side front end (16 kHz mel -> stem -> pool -> adaptor).
    struct Features {
        int sample_rate = 16000;
        int n_mels = 128;
        double window_seconds = 0.025;
        double hop_seconds = 0.010;
        double chunk_seconds = 30.0;
        int max_windows = 20;
        int stem_width = 32;
        int adaptor_hidden = 64;
        int d_lm = 32;
        bool operator==(const Features&) const = default;
    } features;

    // Convolutional codec body; the last stage width is the latent dim.
    struct Codec {
        int initial_width = 384;
        std::vector<int> stage_widths{768, 1536, 512};
        int blocks_per_stage = 3;
        int stage_stride = 8;
        int dw_kernel = 7;
        int expand = 3;
        bool operator==(const Codec&) const = default;
    } codec;

    struct Rvq {
        int levels = 72;
        int entries = 1024;
        int train_iterations = 25;
        bool operator==(const Rvq&) const = default;
    } rvq;

    // Optimizer and training-loop knobs for both trainable models.
    struct Nn {
        double codec_lr = 2e-3;
        double tts_lr = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.95;
        double epsilon = 1e-8;
        bool cosine_decay = false;
        int codec_steps = 500;
        int tts_steps = 2000;
        bool use_quantizer = false;
        double commit_weight = 0.25;
        bool operator==(const Nn&) const = default;
    } nn;

    struct Tts {
        int layers = 4;
        int heads = 4;
        int width = 128;
        int ffw = 512;
        int max_seq = 2048;
        int mixtures = 4;
        int mog_hidden = 256;
        int unmask_steps = 4;
        double temperature = 0.0;
        bool operator==(const Tts&) const = default;
    } tts;

    // Mock schedule for the latency harness, in integer nanoseconds.
    struct Bench {
        int tokens = 108;
        uint64_t first_gen_ns = 100'000'000;
        uint64_t gen_ns = 10'000'000;
        uint64_t audio_ns = 50'000'000;
        bool operator==(const Bench&) const = default;
    } bench;

    bool operator==(const RunConfig&) const = default;
};

// Strict parse: malformed JSON -> FormatError; unknown keys or wrongly typed
// values -> ConfigMismatch. Absent keys keep their defaults.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// Pretty-printed JSON including the `paper_value` documentation blocks.
// parse_run_config(format_run_config(c)) == c for every c.
std::string format_run_config(const RunConfig& cfg);
void save_run_config(const RunConfig& cfg, const std::string& path);

// Views onto the module-level config types.
codec::CodecConfig codec_config(const RunConfig& cfg);
codec::TrainOptions codec_train_options(const RunConfig& cfg);
features::FeatureConfig feature_config(const RunConfig& cfg);
tts::TtsConfig tts_config(const RunConfig& cfg);
tts::TtsTrainOptions tts_train_options(const RunConfig& cfg);
bench::MockOptions mock_options(const RunConfig& cfg);

} // namespace afs::config
