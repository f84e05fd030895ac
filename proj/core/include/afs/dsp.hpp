#ifndef AFS_DSP_HPP
#define AFS_DSP_HPP

#include "afs/audio.hpp"

#include <complex>
#include <vector>

namespace afs::dsp {

// Complex spectra, one row per frame, window_size/2+1 bins each.
// Spectra are held in 64-bit; audio stays 32-bit.
struct StftFrames {
    std::vector<std::complex<double>> data; // n_frames * bins, row-major
    int n_frames = 0;
    int hop = 0;
    int window_size = 0;
    int sample_rate = 0;

    int bins() const { return window_size / 2 + 1; }
    const std::complex<double>* frame(int t) const { return data.data() + size_t(t) * bins(); }
    std::complex<double>* frame(int t) { return data.data() + size_t(t) * bins(); }
};

struct MelSpectrogram {
    std::vector<float> data; // n_frames * n_mels, row-major
    int n_frames = 0;
    int n_mels = 0;
    double hop_seconds = 0.0;
    double window_seconds = 0.0;
    int sample_rate = 0;
    bool log_scaled = true;

    const float* frame(int t) const { return data.data() + size_t(t) * n_mels; }
};

// Triangular filterbank on the HTK mel scale (2595*log10(1+f/700)),
// spanning 0..sample_rate/2, no area normalization.
struct MelFilterbank {
    int n_mels = 0;
    int n_fft = 0;
    int sample_rate = 0;
    std::vector<double> weights; // n_mels * (n_fft/2+1)

    int bins() const { return n_fft / 2 + 1; }
    const double* row(int m) const { return weights.data() + size_t(m) * bins(); }
};

MelFilterbank make_mel_filterbank(int n_mels, int n_fft, int sample_rate);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Periodic Hann window of length n.
std::vector<double> hann_window(int n);

// Band-limited rational resampler (polyphase windowed sinc, 32 taps per
// phase, Kaiser beta=8). Identity (bitwise) when rates already match.
AudioBuffer resample(const AudioBuffer& audio, int target_rate);

// Center-padded STFT: input is reflect-padded by window/2 on both sides, so
// frame count is ceil(len/hop). Hann analysis window, n_fft == window_size.
StftFrames stft(const AudioBuffer& audio, int window_size, int hop);

// Hann-windowed overlap-add inverse with 1/sum(w^2) normalization. Requires
// window_size divisible by 4*hop (COLA). Output length is n_frames*hop.
AudioBuffer istft(const StftFrames& frames);

MelSpectrogram mel_spectrogram(const AudioBuffer& audio, int n_mels,
                               double window_seconds, double hop_seconds);

// As above but with an explicit filterbank (the filterbank is configurable).
MelSpectrogram mel_spectrogram(const AudioBuffer& audio, const MelFilterbank& bank,
                               double window_seconds, double hop_seconds);

constexpr double kLogMelFloor = 1e-10;

} // namespace afs::dsp

#endif
