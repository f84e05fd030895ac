#include "afs/rvq.hpp"
#include "afs/io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace afs::rvq {

namespace {

inline double sq_dist(const double* r, const float* c, int dim) {
    double d = 0.0;
    for (int i = 0; i < dim; ++i) {
        const double diff = r[i] - double(c[i]);
        d += diff * diff;
    }
    return d;
}

} // namespace

int nearest_codeword(std::span<const double> residual, const CodebookSet& books, int level) {
    if (int(residual.size()) != books.dim)
        raise(ErrorCode::ShapeMismatch, "rvq::nearest_codeword: residual dim mismatch");
    if (level < 0 || level >= books.levels)
        raise(ErrorCode::InvalidConfig, "rvq::nearest_codeword: level out of range");
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int k = 0; k < books.entries; ++k) {
        const double d = sq_dist(residual.data(), books.codeword(level, k), books.dim);
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    return best;
}

RvqCode encode(std::span<const float> x, const CodebookSet& books) {
    if (int(x.size()) != books.dim)
        raise(ErrorCode::ShapeMismatch, "rvq::encode: input dim " + std::to_string(x.size()) +
                                            " != codebook dim " + std::to_string(books.dim));
    for (float v : x)
        if (!std::isfinite(v)) raise(ErrorCode::InvalidSignal, "rvq::encode: non-finite input");

    std::vector<double> r(x.begin(), x.end());
    RvqCode code;
    code.indices.resize(books.levels);
    for (int l = 0; l < books.levels; ++l) {
        const int k = nearest_codeword(std::span<const double>(r), books, l);
        code.indices[l] = uint16_t(k);
        const float* c = books.codeword(l, k);
        for (int i = 0; i < books.dim; ++i) r[i] -= double(c[i]);
    }
    return code;
}

std::vector<float> decode(const RvqCode& code, const CodebookSet& books, int up_to_level) {
    if (up_to_level == -1) up_to_level = books.levels;
    if (up_to_level < 1 || up_to_level > books.levels)
        raise(ErrorCode::InvalidConfig, "rvq::decode: up_to_level out of [1, L]");
    if (code.levels() != books.levels)
        raise(ErrorCode::CorruptCode, "rvq::decode: code has wrong level count");

    std::vector<double> acc(books.dim, 0.0);
    for (int l = 0; l < up_to_level; ++l) {
        const int k = code.indices[l];
        if (k >= books.entries) raise(ErrorCode::CorruptCode, "rvq::decode: index out of range");
        const float* c = books.codeword(l, k);
        for (int i = 0; i < books.dim; ++i) acc[i] += double(c[i]);
    }
    return std::vector<float>(acc.begin(), acc.end());
}

std::vector<float> partial_embedding(const RvqCode& code, const CodebookSet& books,
                                     int unmasked_levels) {
    if (unmasked_levels == 0) return std::vector<float>(books.dim, 0.0f);
    return decode(code, books, unmasked_levels);
}

CodebookSet train(const std::vector<float>& samples, int count, int levels, int entries,
                  int dim, const TrainOptions& opts, TrainStats* stats) {
    if (levels < 1 || entries < 2 || dim < 1)
        raise(ErrorCode::InvalidConfig, "rvq::train: need L >= 1, K >= 2, D >= 1");
    if (count < entries)
        raise(ErrorCode::InsufficientData, "rvq::train: fewer samples than codebook entries");
    if (samples.size() != size_t(count) * dim)
        raise(ErrorCode::ShapeMismatch, "rvq::train: sample buffer size mismatch");

    std::mt19937_64 rng(opts.seed);
    CodebookSet books;
    books.levels = levels;
    books.entries = entries;
    books.dim = dim;
    books.codewords.assign(size_t(levels) * entries * dim, 0.0f);
    if (stats) stats->mse_history.assign(levels, {});

    // Residuals left after subtracting the levels trained so far.
    std::vector<double> residuals(samples.begin(), samples.end());
    std::vector<double> centroids(size_t(entries) * dim);
    std::vector<int> assign(count);
    std::vector<double> dist2(count);

    for (int l = 0; l < levels; ++l) {
        // k-means++ seeding.
        {
            std::uniform_int_distribution<int> pick(0, count - 1);
            const int first = pick(rng);
            std::copy_n(residuals.data() + size_t(first) * dim, dim, centroids.data());
            std::fill(dist2.begin(), dist2.end(), 0.0);
            for (int n = 0; n < count; ++n) {
                double d = 0.0;
                for (int i = 0; i < dim; ++i) {
                    const double diff = residuals[size_t(n) * dim + i] - centroids[i];
                    d += diff * diff;
                }
                dist2[n] = d;
            }
            for (int k = 1; k < entries; ++k) {
                double total = 0.0;
                for (int n = 0; n < count; ++n) total += dist2[n];
                int chosen;
                if (total <= 0.0) {
                    chosen = pick(rng);
                } else {
                    std::uniform_real_distribution<double> u(0.0, total);
                    double target = u(rng), run = 0.0;
                    chosen = count - 1;
                    for (int n = 0; n < count; ++n) {
                        run += dist2[n];
                        if (run >= target) {
                            chosen = n;
                            break;
                        }
                    }
                }
                double* ck = centroids.data() + size_t(k) * dim;
                std::copy_n(residuals.data() + size_t(chosen) * dim, dim, ck);
                for (int n = 0; n < count; ++n) {
                    double d = 0.0;
                    for (int i = 0; i < dim; ++i) {
                        const double diff = residuals[size_t(n) * dim + i] - ck[i];
                        d += diff * diff;
                    }
                    dist2[n] = std::min(dist2[n], d);
                }
            }
        }

        for (int iter = 0; iter < opts.iterations; ++iter) {
            // Assignment (tie -> lowest index) and MSE with current centroids.
            double mse = 0.0;
            for (int n = 0; n < count; ++n) {
                const double* r = residuals.data() + size_t(n) * dim;
                int best = 0;
                double best_d = std::numeric_limits<double>::infinity();
                for (int k = 0; k < entries; ++k) {
                    const double* c = centroids.data() + size_t(k) * dim;
                    double d = 0.0;
                    for (int i = 0; i < dim; ++i) {
                        const double diff = r[i] - c[i];
                        d += diff * diff;
                    }
                    if (d < best_d) {
                        best_d = d;
                        best = k;
                    }
                }
                assign[n] = best;
                dist2[n] = best_d;
                mse += best_d;
            }
            if (stats) stats->mse_history[l].push_back(mse / count);

            // Mean update.
            std::vector<double> sums(size_t(entries) * dim, 0.0);
            std::vector<int> sizes(entries, 0);
            for (int n = 0; n < count; ++n) {
                const double* r = residuals.data() + size_t(n) * dim;
                double* s = sums.data() + size_t(assign[n]) * dim;
                for (int i = 0; i < dim; ++i) s[i] += r[i];
                ++sizes[assign[n]];
            }
            for (int k = 0; k < entries; ++k) {
                if (sizes[k] == 0) continue;
                double* c = centroids.data() + size_t(k) * dim;
                const double* s = sums.data() + size_t(k) * dim;
                for (int i = 0; i < dim; ++i) c[i] = s[i] / sizes[k];
            }

            // Reseed dead codewords to the farthest residual.
            for (int k = 0; k < entries; ++k) {
                if (sizes[k] > 0) continue;
                int far = 0;
                double far_d = -1.0;
                for (int n = 0; n < count; ++n)
                    if (dist2[n] > far_d) {
                        far_d = dist2[n];
                        far = n;
                    }
                std::copy_n(residuals.data() + size_t(far) * dim, dim,
                            centroids.data() + size_t(k) * dim);
                dist2[far] = 0.0;
            }
        }

        // Freeze this level (with a duplicate-codeword nudge) and subtract it.
        float* level_out = books.codeword(l, 0);
        for (int k = 0; k < entries; ++k)
            for (int i = 0; i < dim; ++i)
                level_out[size_t(k) * dim + i] = float(centroids[size_t(k) * dim + i]);
        for (int k = 1; k < entries; ++k) {
            for (int j = 0; j < k; ++j) {
                const float* a = books.codeword(l, j);
                float* b = books.codeword(l, k);
                if (std::equal(a, a + dim, b)) {
                    b[0] = std::nextafter(b[0], std::numeric_limits<float>::max());
                    break;
                }
            }
        }
        for (int n = 0; n < count; ++n) {
            double* r = residuals.data() + size_t(n) * dim;
            const int k = nearest_codeword(std::span<const double>(r, books.dim), books, l);
            const float* c = books.codeword(l, k);
            for (int i = 0; i < dim; ++i) r[i] -= double(c[i]);
        }
    }
    return books;
}

void save_codebooks(const std::string& path, const CodebookSet& books) {
    io::Writer w(path);
    w.magic("AFCB");
    w.u16(1);
    w.u16(uint16_t(books.levels));
    w.u32(uint32_t(books.entries));
    w.u32(uint32_t(books.dim));
    w.f32s(books.codewords.data(), books.codewords.size());
}

CodebookSet load_codebooks(const std::string& path) {
    io::Reader r(path);
    r.expect_magic("AFCB");
    const uint16_t version = r.u16();
    if (version != 1) raise(ErrorCode::FormatError, "AFCB: unsupported version");
    CodebookSet books;
    books.levels = r.u16();
    books.entries = int(r.u32());
    books.dim = int(r.u32());
    if (books.levels < 1 || books.entries < 2 || books.dim < 1)
        raise(ErrorCode::FormatError, "AFCB: bad header");
    books.codewords.resize(size_t(books.levels) * books.entries * books.dim);
    r.f32s(books.codewords.data(), books.codewords.size());
    return books;
}

} // namespace afs::rvq
