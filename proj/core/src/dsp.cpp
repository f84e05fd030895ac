#include "afs/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace afs::dsp {

namespace {

constexpr double kPi = std::numbers::pi;

// Reflect index into [0, len) without repeating the edge sample.
inline long reflect_index(long i, long len) {
    if (len == 1) return 0;
    const long period = 2 * (len - 1);
    i = i % period;
    if (i < 0) i += period;
    return i < len ? i : period - i;
}

double bessel_i0(double x) {
    double sum = 1.0, term = 1.0;
    const double q = x * x / 4.0;
    for (int k = 1; k < 64; ++k) {
        term *= q / (double(k) * k);
        sum += term;
        if (term < 1e-14 * sum) break;
    }
    return sum;
}

inline double sinc(double x) {
    if (x == 0.0) return 1.0;
    const double px = kPi * x;
    return std::sin(px) / px;
}

} // namespace

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> hann_window(int n) {
    std::vector<double> w(n);
    for (int i = 0; i < n; ++i)
        w[i] = 0.5 * (1.0 - std::cos(2.0 * kPi * i / n));
    return w;
}

MelFilterbank make_mel_filterbank(int n_mels, int n_fft, int sample_rate) {
    if (n_mels < 1 || n_fft < 2 || sample_rate <= 0)
        raise(ErrorCode::InvalidConfig, "mel filterbank: bad parameters");
    MelFilterbank fb;
    fb.n_mels = n_mels;
    fb.n_fft = n_fft;
    fb.sample_rate = sample_rate;
    const int bins = n_fft / 2 + 1;
    fb.weights.assign(size_t(n_mels) * bins, 0.0);

    const double mel_hi = hz_to_mel(sample_rate / 2.0);
    std::vector<double> edges(n_mels + 2);
    for (int i = 0; i < n_mels + 2; ++i)
        edges[i] = mel_to_hz(mel_hi * i / (n_mels + 1));

    for (int m = 0; m < n_mels; ++m) {
        const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
        for (int k = 0; k < bins; ++k) {
            const double f = double(k) * sample_rate / n_fft;
            double w = 0.0;
            if (f > lo && f < hi)
                w = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
            fb.weights[size_t(m) * bins + k] = std::max(0.0, w);
        }
    }
    return fb;
}

AudioBuffer resample(const AudioBuffer& audio, int target_rate) {
    require_valid(audio, "resample");
    if (target_rate <= 0) raise(ErrorCode::InvalidConfig, "resample: target_rate must be > 0");
    if (target_rate == audio.sample_rate) return audio;

    const long src = audio.sample_rate, dst = target_rate;
    const long g = std::gcd(src, dst);
    const long up = dst / g;   // L
    const long down = src / g; // M

    const int taps_per_phase = 32;
    const long proto_len = taps_per_phase * up;
    const double center = (proto_len - 1) / 2.0;
    const double beta = 8.0;
    const double cutoff = 0.9 * 0.5 / double(std::max(up, down)); // cycles per upsampled sample

    std::vector<double> proto(proto_len);
    const double i0b = bessel_i0(beta);
    for (long i = 0; i < proto_len; ++i) {
        const double t = (i - center) / center; // [-1, 1]
        const double win = bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - t * t))) / i0b;
        proto[i] = double(up) * 2.0 * cutoff * sinc(2.0 * cutoff * (i - center)) * win;
    }

    const uint64_t num = uint64_t(audio.samples.size()) * uint64_t(dst);
    const size_t out_len = size_t((num + uint64_t(src) / 2) / uint64_t(src)); // round half up
    const long delay = std::lround(center);

    AudioBuffer out;
    out.sample_rate = target_rate;
    out.samples.resize(out_len);
    const long in_len = long(audio.samples.size());
    for (size_t n = 0; n < out_len; ++n) {
        const long u = long(n) * down + delay;
        const long phase = u % up;
        const long base = u / up;
        double acc = 0.0;
        for (int m = 0; m < taps_per_phase; ++m) {
            const long j = phase + long(m) * up;
            const long idx = base - m;
            if (idx >= 0 && idx < in_len) acc += proto[j] * audio.samples[idx];
        }
        out.samples[n] = float(acc);
    }
    return out;
}

namespace {

// Tabulated cos/sin for the forward DFT, [bins][win] each.
struct DftTable {
    int win, bins;
    std::vector<double> cos_t, sin_t;
};

DftTable make_dft_table(int win) {
    DftTable t;
    t.win = win;
    t.bins = win / 2 + 1;
    t.cos_t.resize(size_t(t.bins) * win);
    t.sin_t.resize(size_t(t.bins) * win);
    for (int k = 0; k < t.bins; ++k)
        for (int j = 0; j < win; ++j) {
            const double ang = 2.0 * kPi * k * j / win;
            t.cos_t[size_t(k) * win + j] = std::cos(ang);
            t.sin_t[size_t(k) * win + j] = std::sin(ang);
        }
    return t;
}

} // namespace

StftFrames stft(const AudioBuffer& audio, int window_size, int hop) {
    require_valid(audio, "stft");
    if (hop < 1 || hop > window_size)
        raise(ErrorCode::InvalidConfig, "stft: need window_size >= hop >= 1");
    if (window_size % 2 != 0)
        raise(ErrorCode::InvalidConfig, "stft: window_size must be even");

    const long len = long(audio.samples.size());
    const int n_frames = int((len + hop - 1) / hop);
    const int bins = window_size / 2 + 1;
    const std::vector<double> w = hann_window(window_size);
    const DftTable tab = make_dft_table(window_size);

    StftFrames out;
    out.n_frames = n_frames;
    out.hop = hop;
    out.window_size = window_size;
    out.sample_rate = audio.sample_rate;
    out.data.assign(size_t(n_frames) * bins, {0.0, 0.0});

    std::vector<double> buf(window_size);
    for (int t = 0; t < n_frames; ++t) {
        const long start = long(t) * hop - window_size / 2;
        for (int j = 0; j < window_size; ++j)
            buf[j] = double(audio.samples[reflect_index(start + j, len)]) * w[j];
        std::complex<double>* X = out.frame(t);
        for (int k = 0; k < bins; ++k) {
            const double* ct = tab.cos_t.data() + size_t(k) * window_size;
            const double* st = tab.sin_t.data() + size_t(k) * window_size;
            double re = 0.0, im = 0.0;
            for (int j = 0; j < window_size; ++j) {
                re += buf[j] * ct[j];
                im -= buf[j] * st[j];
            }
            X[k] = {re, im};
        }
    }
    return out;
}

AudioBuffer istft(const StftFrames& frames) {
    const int win = frames.window_size, hop = frames.hop;
    if (win <= 0 || hop <= 0 || win % (4 * hop) != 0)
        raise(ErrorCode::InvalidConfig, "istft: window must be divisible by 4*hop (COLA)");
    const int bins = frames.bins();
    const int T = frames.n_frames;
    const std::vector<double> w = hann_window(win);
    const DftTable tab = make_dft_table(win);

    const long padded_len = T > 0 ? long(T - 1) * hop + win : 0;
    std::vector<double> acc(padded_len, 0.0), norm(padded_len, 0.0);
    std::vector<double> xw(win);

    for (int t = 0; t < T; ++t) {
        const std::complex<double>* X = frames.frame(t);
        for (int j = 0; j < win; ++j) xw[j] = X[0].real();
        for (int k = 1; k < bins - 1; ++k) {
            const double* ct = tab.cos_t.data() + size_t(k) * win;
            const double* st = tab.sin_t.data() + size_t(k) * win;
            const double re = X[k].real(), im = X[k].imag();
            for (int j = 0; j < win; ++j)
                xw[j] += 2.0 * (re * ct[j] - im * st[j]);
        }
        for (int j = 0; j < win; ++j) {
            xw[j] += X[bins - 1].real() * (j % 2 == 0 ? 1.0 : -1.0);
            xw[j] /= win;
        }
        const long base = long(t) * hop;
        for (int j = 0; j < win; ++j) {
            acc[base + j] += w[j] * xw[j];
            norm[base + j] += w[j] * w[j];
        }
    }

    AudioBuffer out;
    out.sample_rate = frames.sample_rate;
    const long out_len = long(T) * hop;
    out.samples.resize(out_len);
    for (long s = 0; s < out_len; ++s) {
        const long p = s + win / 2;
        double v = 0.0;
        if (p < padded_len && norm[p] > 1e-12) v = acc[p] / norm[p];
        out.samples[s] = float(v);
    }
    return out;
}

MelSpectrogram mel_spectrogram(const AudioBuffer& audio, const MelFilterbank& bank,
                               double window_seconds, double hop_seconds) {
    require_valid(audio, "mel_spectrogram");
    const int win = int(std::lround(window_seconds * audio.sample_rate));
    const int hop = int(std::lround(hop_seconds * audio.sample_rate));
    if (win < 1) raise(ErrorCode::InvalidConfig, "mel_spectrogram: window shorter than one sample");
    if (hop < 1) raise(ErrorCode::InvalidConfig, "mel_spectrogram: hop shorter than one sample");
    if (bank.n_fft != win)
        raise(ErrorCode::InvalidConfig, "mel_spectrogram: filterbank n_fft != window samples");

    StftFrames S = stft(audio, win, hop);
    const int bins = S.bins();

    MelSpectrogram out;
    out.n_frames = S.n_frames;
    out.n_mels = bank.n_mels;
    out.hop_seconds = hop_seconds;
    out.window_seconds = window_seconds;
    out.sample_rate = audio.sample_rate;
    out.log_scaled = true;
    out.data.resize(size_t(S.n_frames) * bank.n_mels);

    std::vector<double> power(bins);
    for (int t = 0; t < S.n_frames; ++t) {
        const std::complex<double>* X = S.frame(t);
        for (int k = 0; k < bins; ++k) power[k] = std::norm(X[k]);
        for (int m = 0; m < bank.n_mels; ++m) {
            const double* row = bank.row(m);
            double e = 0.0;
            for (int k = 0; k < bins; ++k) e += row[k] * power[k];
            out.data[size_t(t) * bank.n_mels + m] = float(std::log10(std::max(e, kLogMelFloor)));
        }
    }
    return out;
}

MelSpectrogram mel_spectrogram(const AudioBuffer& audio, int n_mels,
                               double window_seconds, double hop_seconds) {
    const int win = int(std::lround(window_seconds * audio.sample_rate));
    if (win < 1) raise(ErrorCode::InvalidConfig, "mel_spectrogram: window shorter than one sample");
    return mel_spectrogram(audio, make_mel_filterbank(n_mels, win, audio.sample_rate),
                           window_seconds, hop_seconds);
}

} // namespace afs::dsp
