#include "afs/features.hpp"
#include "afs/io.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace afs::features {

namespace {

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

void fill_normal(std::vector<float>& v, std::mt19937_64& rng, double scale) {
    std::normal_distribution<double> dist(0.0, scale);
    for (float& x : v) x = float(dist(rng));
}

// 1-D conv over time, kernel 3, symmetric zero pad 1, optional stride, GELU.
// in: n x c_in row-major, w: c_out * c_in * 3, out: ceil-or-floor per stride.
std::vector<float> conv3(const std::vector<float>& in, int n, int c_in,
                         const std::vector<float>& w, const std::vector<float>& b,
                         int c_out, int stride) {
    const int n_out = stride == 1 ? n : (n - 1) / 2 + 1;
    std::vector<float> out(size_t(n_out) * c_out);
    for (int t = 0; t < n_out; ++t) {
        const int center = t * stride;
        for (int o = 0; o < c_out; ++o) {
            double acc = double(b[o]);
            for (int k = 0; k < 3; ++k) {
                const int src = center + k - 1;
                if (src < 0 || src >= n) continue;
                const float* x = in.data() + size_t(src) * c_in;
                const float* wk = w.data() + (size_t(o) * c_in) * 3 + k;
                for (int i = 0; i < c_in; ++i) acc += double(x[i]) * double(wk[size_t(i) * 3]);
            }
            out[size_t(t) * c_out + o] = float(gelu(acc));
        }
    }
    return out;
}

} // namespace

ChunkResult chunk_windows(const AudioBuffer& audio, const WindowPlan& plan) {
    require_valid(audio, "chunk_windows");
    if (plan.window_seconds <= 0.0 || plan.max_windows < 1)
        raise(ErrorCode::InvalidConfig, "chunk_windows: bad window plan");

    const int64_t ws = std::llround(plan.window_seconds * audio.sample_rate);
    const int64_t len = int64_t(audio.size());
    const int64_t n_windows_full = (len + ws - 1) / ws;
    const int64_t n_windows = std::min<int64_t>(n_windows_full, plan.max_windows);

    ChunkResult result;
    result.truncated_samples = std::max<int64_t>(0, len - n_windows * ws);
    result.windows.reserve(size_t(n_windows));
    for (int64_t wi = 0; wi < n_windows; ++wi) {
        Window win;
        win.window_index = int(wi);
        win.audio.sample_rate = audio.sample_rate;
        win.audio.samples.assign(size_t(ws), 0.0f);
        const int64_t begin = wi * ws;
        const int64_t valid = std::min(ws, len - begin);
        std::copy_n(audio.samples.begin() + begin, valid, win.audio.samples.begin());
        win.valid_samples = int(valid);
        result.windows.push_back(std::move(win));
    }
    return result;
}

StemParams make_stem(int in_channels, int width) {
    if (in_channels < 1 || width < 1)
        raise(ErrorCode::InvalidConfig, "make_stem: channels must be positive");
    StemParams s;
    s.in_channels = in_channels;
    s.width = width;
    s.w1.assign(size_t(width) * in_channels * 3, 0.0f);
    s.b1.assign(size_t(width), 0.0f);
    s.w2.assign(size_t(width) * width * 3, 0.0f);
    s.b2.assign(size_t(width), 0.0f);
    return s;
}

void init_identity(StemParams& stem) {
    std::fill(stem.w1.begin(), stem.w1.end(), 0.0f);
    std::fill(stem.b1.begin(), stem.b1.end(), 0.0f);
    std::fill(stem.w2.begin(), stem.w2.end(), 0.0f);
    std::fill(stem.b2.begin(), stem.b2.end(), 0.0f);
    const int m = std::min(stem.width, stem.in_channels);
    for (int o = 0; o < m; ++o) stem.w1[(size_t(o) * stem.in_channels + o) * 3 + 1] = 1.0f;
    for (int o = 0; o < stem.width; ++o) stem.w2[(size_t(o) * stem.width + o) * 3 + 1] = 1.0f;
}

void init_random(StemParams& stem, uint64_t seed) {
    std::mt19937_64 rng(seed);
    fill_normal(stem.w1, rng, 1.0 / std::sqrt(3.0 * stem.in_channels));
    fill_normal(stem.w2, rng, 1.0 / std::sqrt(3.0 * stem.width));
    std::fill(stem.b1.begin(), stem.b1.end(), 0.0f);
    std::fill(stem.b2.begin(), stem.b2.end(), 0.0f);
}

FeatureSequence encoder_stem(const dsp::MelSpectrogram& mel, const StemParams& stem) {
    if (mel.n_mels != stem.in_channels)
        raise(ErrorCode::ShapeMismatch, "encoder_stem: mel has " + std::to_string(mel.n_mels) +
                                            " channels, stem expects " +
                                            std::to_string(stem.in_channels));
    if (mel.n_frames < 1) raise(ErrorCode::EmptyInput, "encoder_stem: no mel frames");

    const std::vector<float> h = conv3(mel.data, mel.n_frames, mel.n_mels, stem.w1, stem.b1,
                                       stem.width, 1);
    FeatureSequence out;
    out.frames = conv3(h, mel.n_frames, stem.width, stem.w2, stem.b2, stem.width, 2);
    out.n_frames = stem_frame_count(mel.n_frames);
    out.dim = stem.width;
    out.frame_rate = 50;
    out.valid_frames = out.n_frames;
    return out;
}

FeatureSequence pool_stride2(const FeatureSequence& feats) {
    if (feats.n_frames == 0) raise(ErrorCode::EmptyInput, "pool_stride2: empty input");
    if (feats.frame_rate != 50)
        raise(ErrorCode::RateMismatch, "pool_stride2: expected 50 Hz input, got " +
                                           std::to_string(feats.frame_rate) + " Hz");

    FeatureSequence out;
    out.n_frames = pooled_frame_count(feats.n_frames);
    out.dim = feats.dim;
    out.frame_rate = 25;
    out.window_index = feats.window_index;
    out.frames.resize(size_t(out.n_frames) * out.dim);
    for (int t = 0; t < out.n_frames; ++t) {
        const float* a = feats.row(2 * t);
        const float* b = feats.row(2 * t + 1);
        float* o = out.row(t);
        for (int i = 0; i < out.dim; ++i) o[i] = (a[i] + b[i]) / 2.0f;
    }
    out.valid_frames = std::min(out.n_frames, pooled_frame_count(feats.valid_frames));
    return out;
}

AdaptorParams make_adaptor(int d_in, int d_hidden, int d_out) {
    if (d_in < 1 || d_hidden < 1 || d_out < 1)
        raise(ErrorCode::InvalidConfig, "make_adaptor: widths must be positive");
    AdaptorParams p;
    p.d_in = d_in;
    p.d_hidden = d_hidden;
    p.d_out = d_out;
    p.w1.assign(size_t(d_hidden) * d_in, 0.0f);
    p.b1.assign(size_t(d_hidden), 0.0f);
    p.w2.assign(size_t(d_out) * d_hidden, 0.0f);
    p.b2.assign(size_t(d_out), 0.0f);
    return p;
}

void init_identity(AdaptorParams& proj) {
    // gelu(x) - gelu(-x) == x, so a [I; -I] / [I, -I] pair passes the first
    // min(d_in, d_out) components straight through the nonlinearity.
    const int m = std::min(proj.d_in, proj.d_out);
    proj.d_hidden = 2 * m;
    proj.w1.assign(size_t(proj.d_hidden) * proj.d_in, 0.0f);
    proj.b1.assign(size_t(proj.d_hidden), 0.0f);
    proj.w2.assign(size_t(proj.d_out) * proj.d_hidden, 0.0f);
    proj.b2.assign(size_t(proj.d_out), 0.0f);
    for (int i = 0; i < m; ++i) {
        proj.w1[size_t(i) * proj.d_in + i] = 1.0f;
        proj.w1[size_t(m + i) * proj.d_in + i] = -1.0f;
        proj.w2[size_t(i) * proj.d_hidden + i] = 1.0f;
        proj.w2[size_t(i) * proj.d_hidden + m + i] = -1.0f;
    }
}

void init_random(AdaptorParams& proj, uint64_t seed) {
    std::mt19937_64 rng(seed);
    fill_normal(proj.w1, rng, 1.0 / std::sqrt(double(proj.d_in)));
    fill_normal(proj.w2, rng, 1.0 / std::sqrt(double(proj.d_hidden)));
    std::fill(proj.b1.begin(), proj.b1.end(), 0.0f);
    std::fill(proj.b2.begin(), proj.b2.end(), 0.0f);
}

FeatureSequence adapt(const FeatureSequence& feats, const AdaptorParams& proj) {
    if (feats.dim != proj.d_in)
        raise(ErrorCode::ShapeMismatch, "adapt: feature dim " + std::to_string(feats.dim) +
                                            " != adaptor input width " +
                                            std::to_string(proj.d_in));

    FeatureSequence out;
    out.n_frames = feats.n_frames;
    out.dim = proj.d_out;
    out.frame_rate = feats.frame_rate;
    out.window_index = feats.window_index;
    out.valid_frames = feats.valid_frames;
    out.frames.resize(size_t(out.n_frames) * out.dim);

    std::vector<double> hidden(size_t(proj.d_hidden));
    for (int t = 0; t < feats.n_frames; ++t) {
        const float* x = feats.row(t);
        for (int h = 0; h < proj.d_hidden; ++h) {
            double acc = double(proj.b1[h]);
            const float* wrow = proj.w1.data() + size_t(h) * proj.d_in;
            for (int i = 0; i < proj.d_in; ++i) acc += double(wrow[i]) * double(x[i]);
            hidden[h] = gelu(acc);
        }
        float* o = out.row(t);
        for (int j = 0; j < proj.d_out; ++j) {
            double acc = double(proj.b2[j]);
            const float* wrow = proj.w2.data() + size_t(j) * proj.d_hidden;
            for (int h = 0; h < proj.d_hidden; ++h) acc += double(wrow[h]) * hidden[h];
            o[j] = float(acc);
        }
    }
    return out;
}

int mel_frame_count(int64_t n_samples, int hop) {
    return int((n_samples + hop - 1) / hop);
}

int stem_frame_count(int mel_frames) { return (mel_frames + 1) / 2; }

int pooled_frame_count(int stem_frames) { return stem_frames / 2; }

int pooled_tokens_for_samples(int64_t n_samples, int sample_rate, int mel_hop,
                              const WindowPlan& plan) {
    if (n_samples <= 0) return 0;
    const int64_t ws = std::llround(plan.window_seconds * sample_rate);
    const int64_t n_windows = std::min<int64_t>((n_samples + ws - 1) / ws, plan.max_windows);
    // Every window is padded to the full length, so each contributes the same count.
    const int per_window = pooled_frame_count(stem_frame_count(mel_frame_count(ws, mel_hop)));
    return int(n_windows * per_window);
}

FeatureExtractor::FeatureExtractor(const FeatureConfig& cfg, uint64_t seed) : cfg_(cfg) {
    mel_window_ = int(std::lround(cfg.mel_window_seconds * cfg.sample_rate));
    mel_hop_ = int(std::lround(cfg.mel_hop_seconds * cfg.sample_rate));
    if (mel_window_ < 1 || mel_hop_ < 1)
        raise(ErrorCode::InvalidConfig, "FeatureExtractor: mel window under one sample");
    bank_ = dsp::make_mel_filterbank(cfg.n_mels, mel_window_, cfg.sample_rate);
    stem_ = make_stem(cfg.n_mels, cfg.stem_width);
    init_random(stem_, seed);
    adaptor_ = make_adaptor(cfg.stem_width, cfg.adaptor_hidden, cfg.d_lm);
    init_random(adaptor_, seed + 1);
}

FeatureExtractor::Output FeatureExtractor::extract(const AudioBuffer& audio) const {
    if (audio.sample_rate != cfg_.sample_rate)
        raise(ErrorCode::RateMismatch, "FeatureExtractor: audio at " +
                                           std::to_string(audio.sample_rate) + " Hz, expected " +
                                           std::to_string(cfg_.sample_rate));
    Output out;
    ChunkResult chunks = chunk_windows(audio, cfg_.plan);
    out.truncated_samples = chunks.truncated_samples;
    for (const Window& win : chunks.windows) {
        const dsp::MelSpectrogram mel =
            dsp::mel_spectrogram(win.audio, bank_, cfg_.mel_window_seconds, cfg_.mel_hop_seconds);
        FeatureSequence stem_out = encoder_stem(mel, stem_);
        stem_out.window_index = win.window_index;
        stem_out.valid_frames =
            std::min(stem_out.n_frames,
                     stem_frame_count(mel_frame_count(win.valid_samples, mel_hop_)));
        FeatureSequence pooled = pool_stride2(stem_out);
        out.mel_frames.push_back(mel.n_frames);
        out.stem_frames.push_back(stem_out.n_frames);
        out.pooled_frames.push_back(pooled.n_frames);
        out.windows.push_back(adapt(pooled, adaptor_));
    }
    return out;
}

void save_features(const std::string& path, const FeatureSequence& feats) {
    io::Writer w(path);
    w.magic("AFFE");
    w.u16(1);
    w.u16(uint16_t(feats.frame_rate));
    w.u32(uint32_t(feats.n_frames));
    w.u32(uint32_t(feats.dim));
    w.f32s(feats.frames.data(), feats.frames.size());
}

FeatureSequence load_features(const std::string& path) {
    io::Reader r(path);
    r.expect_magic("AFFE");
    const uint16_t version = r.u16();
    if (version != 1) raise(ErrorCode::FormatError, "AFFE: unsupported version");
    FeatureSequence f;
    f.frame_rate = r.u16();
    f.n_frames = int(r.u32());
    f.dim = int(r.u32());
    f.frames.resize(size_t(f.n_frames) * f.dim);
    r.f32s(f.frames.data(), f.frames.size());
    f.valid_frames = f.n_frames;
    return f;
}

} // namespace afs::features
