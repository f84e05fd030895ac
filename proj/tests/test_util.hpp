#pragma once

// Shared helpers for the unit tests: scratch directories, tone generators,
// and a small wrapper that extracts the error code of an afs::Error subclass.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace testutil {

// Creates (once per process) a unique scratch directory under the system
// temp dir and returns a path inside it.  Contents are left behind for
// post-mortem inspection; the OS temp cleaner reclaims them eventually.
inline std::filesystem::path scratch_dir() {
    static const std::filesystem::path root = [] {
        std::random_device rd;
        std::filesystem::path p =
            std::filesystem::temp_directory_path() /
            ("afstream_test_" + std::to_string(rd()));
        std::filesystem::create_directories(p);
        return p;
    }();
    return root;
}

inline std::string scratch_path(const std::string& name) {
    return (scratch_dir() / name).string();
}

// A mono sine tone with a short linear fade at both ends to avoid clicks.
inline std::vector<float> make_tone(double freq_hz, double seconds,
                                    int sample_rate, float amplitude = 0.5f) {
    const int n = static_cast<int>(std::lround(seconds * sample_rate));
    std::vector<float> out(static_cast<size_t>(n), 0.0f);
    const int fade = std::min(n / 20, 256);
    for (int i = 0; i < n; ++i) {
        double s = amplitude * std::sin(2.0 * M_PI * freq_hz * i / sample_rate);
        if (fade > 0) {
            if (i < fade) s *= static_cast<double>(i) / fade;
            if (n - 1 - i < fade) s *= static_cast<double>(n - 1 - i) / fade;
        }
        out[static_cast<size_t>(i)] = static_cast<float>(s);
    }
    return out;
}

}  // namespace testutil
