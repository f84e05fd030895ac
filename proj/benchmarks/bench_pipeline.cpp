// Microbenchmarks for the latency-critical units: the DSP front-end, the
// causal codec halves, the residual quantizer, and one streaming TTS step.
// Everything runs at desk-scale widths; the point is relative cost per
// emitted token, not absolute full-scale throughput.

#include "afs/codec.hpp"
#include "afs/dsp.hpp"
#include "afs/rvq.hpp"
#include "afs/tts.hpp"

#include <benchmark/benchmark.h>

#include <optional>
#include <random>
#include <vector>

namespace {

afs::AudioBuffer noise_clip(double seconds, int sample_rate, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(-0.5f, 0.5f);
    afs::AudioBuffer out;
    out.sample_rate = sample_rate;
    out.samples.resize(size_t(seconds * sample_rate));
    for (float& v : out.samples) v = u(rng);
    return out;
}

afs::rvq::CodebookSet random_books(int levels, int entries, int dim, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> n(0.0f, 1.0f);
    afs::rvq::CodebookSet books;
    books.levels = levels;
    books.entries = entries;
    books.dim = dim;
    books.codewords.resize(size_t(levels) * entries * dim);
    for (float& v : books.codewords) v = n(rng);
    return books;
}

std::vector<afs::rvq::RvqCode> random_codes(int n, int levels, int entries, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick(0, entries - 1);
    std::vector<afs::rvq::RvqCode> codes(static_cast<size_t>(n));
    for (auto& c : codes) {
        c.indices.resize(size_t(levels));
        for (auto& k : c.indices) k = uint16_t(pick(rng));
    }
    return codes;
}

} // namespace

static void BM_StftRoundTrip(benchmark::State& state) {
    const auto clip = noise_clip(1.0, 44100, 1);
    for (auto _ : state) {
        const auto frames = afs::dsp::stft(clip, 32, 8);
        const auto back = afs::dsp::istft(frames);
        benchmark::DoNotOptimize(back.samples.data());
    }
    state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(clip.samples.size()));
}
BENCHMARK(BM_StftRoundTrip)->Unit(benchmark::kMillisecond);

static void BM_MelFrontEnd(benchmark::State& state) {
    const auto clip = noise_clip(double(state.range(0)), 16000, 2);
    for (auto _ : state) {
        const auto mel = afs::dsp::mel_spectrogram(clip, 128, 0.025, 0.010);
        benchmark::DoNotOptimize(mel.data.data());
    }
    state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(clip.samples.size()));
}
BENCHMARK(BM_MelFrontEnd)->Arg(1)->Arg(5)->Unit(benchmark::kMillisecond);

static void BM_CodecEncode(benchmark::State& state) {
    const afs::codec::Codec codec(afs::codec::toy_config(), 3);
    const auto clip = noise_clip(1.0, 44100, 4);
    for (auto _ : state) {
        const auto latents = codec.encode(clip);
        benchmark::DoNotOptimize(latents.frames.v.data());
    }
    state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(clip.samples.size()));
}
BENCHMARK(BM_CodecEncode)->Unit(benchmark::kMillisecond);

static void BM_StreamDecodeToken(benchmark::State& state) {
    const afs::codec::Codec codec(afs::codec::toy_config(), 5);
    const auto books = random_books(codec.config().rvq_levels, codec.config().rvq_entries,
                                    codec.config().latent_dim(), 6);
    const auto codes = random_codes(64, books.levels, books.entries, 7);
    afs::codec::StreamState stream(codec, books);
    size_t next = 0;
    for (auto _ : state) {
        const auto chunk = stream.push(codes[next]);
        benchmark::DoNotOptimize(chunk.data());
        next = (next + 1) % codes.size();
    }
    // One iteration emits exactly one compression unit of audio.
    state.SetItemsProcessed(int64_t(state.iterations()) * codec.config().compression());
}
BENCHMARK(BM_StreamDecodeToken)->Unit(benchmark::kMicrosecond);

static void BM_RvqEncodeFrame(benchmark::State& state) {
    const auto books = random_books(8, 64, 24, 8);
    std::mt19937_64 rng(9);
    std::normal_distribution<float> n(0.0f, 1.0f);
    std::vector<float> z(24);
    for (float& v : z) v = n(rng);
    for (auto _ : state) {
        const auto code = afs::rvq::encode(z, books);
        benchmark::DoNotOptimize(code.indices.data());
    }
    state.SetItemsProcessed(int64_t(state.iterations()));
}
BENCHMARK(BM_RvqEncodeFrame)->Unit(benchmark::kMicrosecond);

static void BM_TtsSessionStep(benchmark::State& state) {
    const afs::tts::TtsConfig cfg = afs::tts::toy_tts_config();
    const afs::tts::TtsModel model(cfg, 10);
    const auto books = random_books(cfg.rvq_levels, cfg.rvq_entries, cfg.latent_dim, 11);
    const int capacity = cfg.decoder.max_seq / 2; // two positions per token

    std::optional<afs::tts::Session> session;
    session.emplace(model, books, 0.7, 12);
    int used = 0;
    for (auto _ : state) {
        if (used == capacity) {
            state.PauseTiming();
            session.emplace(model, books, 0.7, 12);
            used = 0;
            state.ResumeTiming();
        }
        const auto code = session->step('a');
        benchmark::DoNotOptimize(code.indices.data());
        ++used;
    }
    state.SetItemsProcessed(int64_t(state.iterations()));
}
BENCHMARK(BM_TtsSessionStep)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
