#include "afs/wav.hpp"
#include "afs/io.hpp"

#include <algorithm>
#include <cstring>

namespace afs::wav {

namespace {
constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatIeeeFloat = 3;
} // namespace

AudioBuffer read(const std::string& path) {
    io::Reader r(path);
    r.expect_magic("RIFF");
    r.u32(); // riff size, not trusted
    r.expect_magic("WAVE");

    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    bool have_fmt = false;
    std::vector<uint8_t> data;

    while (!r.at_eof()) {
        char id[4];
        r.bytes(id, 4);
        uint32_t size = r.u32();
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (size < 16) raise(ErrorCode::FormatError, "fmt chunk too small");
            format = r.u16();
            channels = r.u16();
            rate = r.u32();
            r.u32(); // byte rate
            r.u16(); // block align
            bits = r.u16();
            for (uint32_t i = 16; i < size; ++i) r.u8();
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            data.resize(size);
            if (size > 0) r.bytes(data.data(), size);
        } else {
            for (uint32_t i = 0; i < size; ++i) r.u8();
        }
        if (size % 2 == 1 && !r.at_eof()) r.u8(); // chunk padding
    }

    if (!have_fmt) raise(ErrorCode::FormatError, "missing fmt chunk: " + path);
    if (channels == 0 || rate == 0) raise(ErrorCode::FormatError, "bad fmt chunk: " + path);
    if (format == kFormatPcm) {
        if (bits != 16) raise(ErrorCode::FormatError, "only 16-bit PCM supported");
    } else if (format == kFormatIeeeFloat) {
        if (bits != 32) raise(ErrorCode::FormatError, "only 32-bit float supported");
    } else {
        raise(ErrorCode::FormatError, "unsupported WAV format code " + std::to_string(format));
    }

    const size_t bytes_per_sample = bits / 8;
    const size_t frame_bytes = bytes_per_sample * channels;
    const size_t frames = frame_bytes ? data.size() / frame_bytes : 0;

    AudioBuffer out;
    out.sample_rate = int(rate);
    out.samples.resize(frames);
    for (size_t f = 0; f < frames; ++f) {
        double acc = 0.0;
        for (size_t c = 0; c < channels; ++c) {
            const uint8_t* p = data.data() + f * frame_bytes + c * bytes_per_sample;
            if (format == kFormatPcm) {
                int16_t v = int16_t(uint16_t(p[0]) | (uint16_t(p[1]) << 8));
                acc += double(v) / 32768.0;
            } else {
                uint32_t u = uint32_t(p[0]) | (uint32_t(p[1]) << 8) | (uint32_t(p[2]) << 16) |
                             (uint32_t(p[3]) << 24);
                float v;
                std::memcpy(&v, &u, 4);
                acc += double(v);
            }
        }
        out.samples[f] = float(acc / channels);
    }
    return out;
}

void write(const std::string& path, const AudioBuffer& audio, SampleFormat fmt) {
    if (audio.sample_rate <= 0) raise(ErrorCode::InvalidConfig, "wav::write: bad sample rate");
    const uint32_t n = uint32_t(audio.samples.size());
    const uint16_t bits = fmt == SampleFormat::Pcm16 ? 16 : 32;
    const uint16_t code = fmt == SampleFormat::Pcm16 ? kFormatPcm : kFormatIeeeFloat;
    const uint32_t data_bytes = n * (bits / 8);

    io::Writer w(path);
    w.magic("RIFF");
    w.u32(4 + 8 + 16 + 8 + data_bytes);
    w.magic("WAVE");
    w.magic("fmt ");
    w.u32(16);
    w.u16(code);
    w.u16(1); // mono
    w.u32(uint32_t(audio.sample_rate));
    w.u32(uint32_t(audio.sample_rate) * (bits / 8));
    w.u16(bits / 8);
    w.u16(bits);
    w.magic("data");
    w.u32(data_bytes);
    if (fmt == SampleFormat::Pcm16) {
        for (float s : audio.samples) {
            // Same 1/32768 scale as the reader, so a round trip stays within
            // half a quantization step (full-scale positive clips to 32767).
            long v = std::lrint(double(s) * 32768.0);
            v = std::clamp(v, -32768l, 32767l);
            w.u16(uint16_t(int16_t(v)));
        }
    } else {
        w.f32s(audio.samples.data(), n);
    }
}

} // namespace afs::wav
