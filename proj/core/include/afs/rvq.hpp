#ifndef AFS_RVQ_HPP
#define AFS_RVQ_HPP

#include "afs/error.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace afs::rvq {

// Per-frame index vector over the quantizer levels, level 0 coarsest.
struct RvqCode {
    std::vector<uint16_t> indices;

    int levels() const { return int(indices.size()); }
    bool operator==(const RvqCode&) const = default;
};

// L x K x D codeword tensor. Immutable after training; encode/decode are
// thread-safe over shared const sets.
struct CodebookSet {
    int levels = 0;  // L
    int entries = 0; // K per level
    int dim = 0;     // D
    std::vector<float> codewords; // levels * entries * dim, row-major

    const float* codeword(int level, int k) const {
        return codewords.data() + (size_t(level) * entries + k) * dim;
    }
    float* codeword(int level, int k) {
        return codewords.data() + (size_t(level) * entries + k) * dim;
    }
};

// Greedy residual quantization; ties broken toward the lowest index.
RvqCode encode(std::span<const float> x, const CodebookSet& books);

// Index of the codeword closest (squared L2, ties toward the lowest index)
// to a 64-bit residual at one level. The primitive behind encode, exposed so
// constrained re-quantization elsewhere matches its tie-breaking exactly.
int nearest_codeword(std::span<const double> residual, const CodebookSet& books, int level);

// Sum of selected codewords over levels [0, up_to_level). up_to_level == -1
// means all levels. up_to_level == 0 is disallowed.
std::vector<float> decode(const RvqCode& code, const CodebookSet& books, int up_to_level = -1);

// Cumulative embedding for the first `unmasked_levels` levels; 0 levels gives
// the zero vector (used by the unmasking loop, where nothing is committed yet).
std::vector<float> partial_embedding(const RvqCode& code, const CodebookSet& books,
                                     int unmasked_levels);

struct TrainOptions {
    int iterations = 25;
    uint64_t seed = 0;
};

struct TrainStats {
    // mse_history[level][iteration]: mean squared residual error.
    std::vector<std::vector<double>> mse_history;
};

// Level-by-level k-means (k-means++ seeding) on the residuals left by
// previous levels. Dead codewords are reseeded to the farthest residual.
CodebookSet train(const std::vector<float>& samples, int count, int levels, int entries,
                  int dim, const TrainOptions& opts, TrainStats* stats = nullptr);

// Codebook container: magic "AFCB", version, L u16, K u32, D u32, f32 data.
void save_codebooks(const std::string& path, const CodebookSet& books);
CodebookSet load_codebooks(const std::string& path);

} // namespace afs::rvq

#endif
