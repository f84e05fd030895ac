#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "afs/dsp.hpp"
#include "afs/wav.hpp"
#include "test_util.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <random>

using namespace afs;
using namespace afs::dsp;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::EmptyAudio; // sentinel: no throw
}

AudioBuffer noise(int n, int rate, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(-0.9f, 0.9f);
    std::vector<float> s(static_cast<size_t>(n));
    for (float& x : s) x = u(rng);
    return {std::move(s), rate};
}

} // namespace

TEST_CASE("periodic hann window") {
    const auto w = hann_window(32);
    REQUIRE(w.size() == 32);
    CHECK(w[0] == doctest::Approx(0.0));
    CHECK(w[16] == doctest::Approx(1.0)); // center of the periodic window
    for (double v : w) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    // Periodic symmetry: w[k] == w[N-k] for k >= 1.
    for (int k = 1; k < 32; ++k) CHECK(w[size_t(k)] == doctest::Approx(w[size_t(32 - k)]));
    // Squared COLA at hop N/4: shifted w^2 copies sum to the same constant
    // everywhere, which is what the 1/sum(w^2) normalization relies on.
    const int hop = 8;
    std::vector<double> acc(32, 0.0);
    for (int shift = -4; shift <= 4; ++shift)
        for (int i = 0; i < 32; ++i) {
            const int j = i - shift * hop;
            if (j >= 0 && j < 32) acc[size_t(i)] += w[size_t(j)] * w[size_t(j)];
        }
    for (int i = 12; i < 20; ++i) CHECK(acc[size_t(i)] == doctest::Approx(acc[12]));
}

TEST_CASE("stft shape and validation") {
    const auto audio = noise(100, 44100, 1);
    const auto frames = stft(audio, 32, 8);
    CHECK(frames.n_frames == 13); // ceil(100/8)
    CHECK(frames.bins() == 17);
    CHECK(frames.window_size == 32);
    CHECK(frames.hop == 8);
    CHECK(frames.sample_rate == 44100);
    CHECK(frames.data.size() == size_t(13) * 17);

    const auto odd_len = stft(noise(101, 44100, 2), 32, 8);
    CHECK(odd_len.n_frames == 13); // ceil(101/8)

    CHECK(code_of([&] { stft(audio, 8, 16); }) == ErrorCode::InvalidConfig); // hop > window
    CHECK(code_of([&] { stft(audio, 31, 8); }) == ErrorCode::InvalidConfig); // odd window
    CHECK(code_of([&] { stft(audio, 32, 0); }) == ErrorCode::InvalidConfig);
    CHECK(code_of([&] { stft(AudioBuffer{}, 32, 8); }) == ErrorCode::EmptyAudio);
}

TEST_CASE("stft/istft round trip is transparent away from the edges") {
    const int n = 4096;
    const auto audio = noise(n, 44100, 3);
    const auto frames = stft(audio, 32, 8);
    const auto back = istft(frames);
    REQUIRE(int(back.samples.size()) == frames.n_frames * 8);
    CHECK(back.sample_rate == 44100);

    double worst = 0.0;
    for (int i = 32; i < n - 32; ++i)
        worst = std::max(worst, std::abs(double(back.samples[size_t(i)]) -
                                         double(audio.samples[size_t(i)])));
    CHECK(worst <= 1e-6);
}

TEST_CASE("istft requires the COLA hop") {
    const auto audio = noise(256, 44100, 4);
    const auto frames = stft(audio, 32, 7); // analysis itself is fine
    CHECK(code_of([&] { istft(frames); }) == ErrorCode::InvalidConfig);

    // window divisible by 4*hop: 32 with hop 4 works too.
    const auto f4 = stft(audio, 32, 4);
    const auto back = istft(f4);
    CHECK(int(back.samples.size()) == f4.n_frames * 4);
}

TEST_CASE("mel scale conversions invert each other") {
    CHECK(hz_to_mel(0.0) == doctest::Approx(0.0));
    CHECK(hz_to_mel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)));
    for (double hz : {10.0, 440.0, 1000.0, 7999.0})
        CHECK(mel_to_hz(hz_to_mel(hz)) == doctest::Approx(hz).epsilon(1e-9));
    // Monotone increasing.
    CHECK(hz_to_mel(200.0) < hz_to_mel(300.0));
}

TEST_CASE("mel filterbank rows are triangular and cover the band") {
    const auto bank = make_mel_filterbank(40, 512, 16000);
    CHECK(bank.n_mels == 40);
    CHECK(bank.bins() == 257);
    for (int m = 0; m < 40; ++m) {
        double peak = 0.0, sum = 0.0;
        for (int b = 0; b < bank.bins(); ++b) {
            const double w = bank.row(m)[b];
            CHECK(w >= 0.0);
            CHECK(w <= 1.0 + 1e-12);
            peak = std::max(peak, w);
            sum += w;
        }
        CHECK(peak > 0.0); // no dead filter
        CHECK(sum > 0.0);
    }
    CHECK(code_of([&] { make_mel_filterbank(0, 512, 16000); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("mel spectrogram of a tone peaks at the right filter") {
    const int rate = 16000;
    const auto tone = AudioBuffer{testutil::make_tone(1000.0, 0.5, rate), rate};
    const auto mel = mel_spectrogram(tone, 64, 0.025, 0.010);
    REQUIRE(mel.n_mels == 64);
    REQUIRE(mel.n_frames > 10);

    // Find the strongest mel channel in a middle frame and map the 1 kHz
    // target through the same scale: they must agree within one filter.
    const auto bank = make_mel_filterbank(64, int(std::lround(0.025 * rate)), rate);
    const int t = mel.n_frames / 2;
    int argmax = 0;
    for (int m = 1; m < 64; ++m)
        if (mel.frame(t)[m] > mel.frame(t)[argmax]) argmax = m;

    // Expected filter: center frequencies are uniform in mel between 0 and
    // rate/2; filter m peaks at mel point m+1 of 66.
    const double mel_max = hz_to_mel(rate / 2.0);
    int expected = 0;
    double best = 1e18;
    for (int m = 0; m < 64; ++m) {
        const double center = mel_to_hz(mel_max * (m + 1) / 65.0);
        const double d = std::abs(center - 1000.0);
        if (d < best) {
            best = d;
            expected = m;
        }
    }
    CHECK(std::abs(argmax - expected) <= 1);
}

TEST_CASE("silence hits the log-mel floor") {
    AudioBuffer silence{std::vector<float>(1600, 0.0f), 16000};
    const auto mel = mel_spectrogram(silence, 16, 0.025, 0.010);
    for (float v : mel.data) CHECK(v == doctest::Approx(std::log10(kLogMelFloor)));
}

TEST_CASE("resample is bitwise identity at matching rates") {
    const auto audio = noise(1000, 44100, 5);
    const auto same = resample(audio, 44100);
    CHECK(same.samples == audio.samples);
    CHECK(same.sample_rate == 44100);
}

TEST_CASE("resample preserves a mid-band tone") {
    const int src = 44100, dst = 16000;
    const auto tone = AudioBuffer{testutil::make_tone(440.0, 0.5, src), src};
    const auto out = resample(tone, dst);
    CHECK(out.sample_rate == dst);
    CHECK(double(out.samples.size()) == doctest::Approx(0.5 * dst).epsilon(0.01));

    // Compare against the analytic tone away from the edges.
    double worst = 0.0;
    const int n = int(out.samples.size());
    for (int i = n / 4; i < 3 * n / 4; ++i) {
        const double want = 0.5 * std::sin(2.0 * M_PI * 440.0 * i / dst);
        worst = std::max(worst, std::abs(double(out.samples[size_t(i)]) - want));
    }
    CHECK(worst < 5e-3);

    CHECK(code_of([&] { resample(tone, 0); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("wav float32 round trip is bitwise") {
    const auto audio = noise(777, 22050, 6);
    const std::string path = testutil::scratch_path("f32.wav");
    wav::write(path, audio, wav::SampleFormat::Float32);
    const auto back = wav::read(path);
    CHECK(back.sample_rate == 22050);
    CHECK(back.samples == audio.samples);
}

TEST_CASE("wav pcm16 round trip is within one quantization step") {
    const auto audio = noise(500, 16000, 7);
    const std::string path = testutil::scratch_path("pcm16.wav");
    wav::write(path, audio, wav::SampleFormat::Pcm16);
    const auto back = wav::read(path);
    REQUIRE(back.samples.size() == audio.samples.size());
    for (size_t i = 0; i < audio.samples.size(); ++i)
        CHECK(std::abs(back.samples[i] - audio.samples[i]) <= 1.01f / 32768.0f);
}

TEST_CASE("stereo pcm16 input is downmixed by averaging") {
    // Hand-built 2-channel file: left +8192, right -4096 in every frame.
    const std::string path = testutil::scratch_path("stereo.wav");
    {
        const uint32_t n_frames = 10, byte_rate = 8000 * 2 * 2, data_bytes = n_frames * 4;
        std::ofstream out(path, std::ios::binary);
        auto u32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
        auto u16 = [&](uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
        out.write("RIFF", 4);
        u32(36 + data_bytes);
        out.write("WAVE", 4);
        out.write("fmt ", 4);
        u32(16);
        u16(1); // PCM
        u16(2); // stereo
        u32(8000);
        u32(byte_rate);
        u16(4); // block align
        u16(16);
        out.write("data", 4);
        u32(data_bytes);
        for (uint32_t i = 0; i < n_frames; ++i) {
            u16(uint16_t(8192));
            u16(uint16_t(int16_t(-4096)));
        }
    }
    const auto audio = wav::read(path);
    REQUIRE(audio.samples.size() == 10);
    CHECK(audio.sample_rate == 8000);
    const float want = (8192.0f / 32768.0f + -4096.0f / 32768.0f) / 2.0f;
    for (float s : audio.samples) CHECK(s == doctest::Approx(want).epsilon(1e-4));
}

TEST_CASE("wav reader rejects what it cannot parse") {
    const std::string garbage = testutil::scratch_path("garbage.wav");
    {
        std::ofstream out(garbage, std::ios::binary);
        out << "this is not a wav file at all";
    }
    CHECK(code_of([&] { wav::read(garbage); }) == ErrorCode::FormatError);
    CHECK(code_of([&] { wav::read(testutil::scratch_path("absent.wav")); }) ==
          ErrorCode::IoError);
    CHECK(code_of([&] { wav::write("/nonexistent_dir/out.wav", noise(10, 8000, 8)); }) ==
          ErrorCode::IoError);
}
