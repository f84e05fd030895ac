#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "afs/rvq.hpp"
#include "test_util.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <random>

using namespace afs;
using namespace afs::rvq;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::EmptyAudio; // sentinel: no throw
}

CodebookSet random_books(int levels, int entries, int dim, uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> n(0.0f, float(scale));
    CodebookSet books;
    books.levels = levels;
    books.entries = entries;
    books.dim = dim;
    books.codewords.resize(size_t(levels) * entries * dim);
    for (float& v : books.codewords) v = n(rng);
    return books;
}

std::vector<float> random_vec(int dim, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<float> n(0.0f, float(scale));
    std::vector<float> x(static_cast<size_t>(dim));
    for (float& v : x) v = n(rng);
    return x;
}

double sq_dist(std::span<const float> a, std::span<const float> b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = double(a[i]) - double(b[i]);
        acc += d * d;
    }
    return acc;
}

} // namespace

TEST_CASE("single-level encode matches exhaustive nearest neighbour") {
    const auto books = random_books(1, 32, 6, 11);
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 200; ++trial) {
        const auto x = random_vec(6, rng, 1.5);
        const RvqCode code = encode(x, books);
        REQUIRE(code.levels() == 1);

        int best = 0;
        double best_d = sq_dist(x, std::span<const float>(books.codeword(0, 0), 6));
        for (int k = 1; k < 32; ++k) {
            const double d = sq_dist(x, std::span<const float>(books.codeword(0, k), 6));
            if (d < best_d) {
                best_d = d;
                best = k;
            }
        }
        CHECK(code.indices[0] == uint16_t(best));
    }
}

TEST_CASE("ties break toward the lowest index") {
    // Entries 3 and 7 are identical; the winner must be 3.
    auto books = random_books(1, 8, 4, 13);
    for (int d = 0; d < 4; ++d) books.codeword(0, 7)[d] = books.codeword(0, 3)[d];
    std::vector<float> x(books.codeword(0, 3), books.codeword(0, 3) + 4);
    CHECK(encode(x, books).indices[0] == 3);

    // The double-precision primitive agrees.
    std::vector<double> xd(x.begin(), x.end());
    CHECK(nearest_codeword(xd, books, 0) == 3);
}

TEST_CASE("decode sums the selected codewords level by level") {
    const auto books = random_books(3, 8, 5, 14);
    RvqCode code;
    code.indices = {2, 7, 0};
    const auto full = decode(code, books);
    REQUIRE(int(full.size()) == 5);
    for (int d = 0; d < 5; ++d) {
        const double want = double(books.codeword(0, 2)[d]) + double(books.codeword(1, 7)[d]) +
                            double(books.codeword(2, 0)[d]);
        CHECK(full[size_t(d)] == doctest::Approx(want).epsilon(1e-6));
    }

    // Prefixes: up_to_level == 1 is just the first codeword.
    const auto lvl1 = decode(code, books, 1);
    for (int d = 0; d < 5; ++d) CHECK(lvl1[size_t(d)] == books.codeword(0, 2)[d]);

    // partial_embedding(0) is the zero vector; L levels equals full decode.
    const auto zero = partial_embedding(code, books, 0);
    for (float v : zero) CHECK(v == 0.0f);
    CHECK(partial_embedding(code, books, 3) == full);
    CHECK(partial_embedding(code, books, 2) == decode(code, books, 2));
}

TEST_CASE("each extra level refines the trained approximation") {
    // Trained codebooks on clustered data: residual energy must shrink
    // monotonically as levels are added.
    std::mt19937_64 rng(15);
    const int dim = 6, count = 800;
    std::vector<float> samples;
    samples.reserve(size_t(count) * dim);
    std::normal_distribution<float> centers(0.0f, 4.0f);
    std::vector<float> c0(size_t(8) * dim);
    for (float& v : c0) v = centers(rng);
    std::normal_distribution<float> jitter(0.0f, 0.5f);
    std::uniform_int_distribution<int> pick(0, 7);
    for (int i = 0; i < count; ++i) {
        const int c = pick(rng);
        for (int d = 0; d < dim; ++d) samples.push_back(c0[size_t(c) * dim + d] + jitter(rng));
    }

    TrainOptions opts;
    opts.iterations = 12;
    opts.seed = 16;
    const auto books = train(samples, count, 4, 16, dim, opts);

    std::vector<double> err(5, 0.0); // err[l]: mean squared error using l levels
    for (int i = 0; i < count; ++i) {
        std::span<const float> x(samples.data() + size_t(i) * dim, size_t(dim));
        const RvqCode code = encode(x, books);
        for (int l = 1; l <= 4; ++l)
            err[size_t(l)] += sq_dist(x, decode(code, books, l));
    }
    for (int i = 0; i < count; ++i) {
        std::span<const float> x(samples.data() + size_t(i) * dim, size_t(dim));
        err[0] += sq_dist(x, std::vector<float>(size_t(dim), 0.0f));
    }
    for (int l = 1; l <= 4; ++l) CHECK(err[size_t(l)] <= err[size_t(l - 1)] + 1e-9);
    CHECK(err[4] < 0.5 * err[0]); // the quantizer actually explains the data
}

TEST_CASE("training reports per-level shrinking mse history") {
    std::mt19937_64 rng(17);
    std::vector<float> samples;
    for (int i = 0; i < 300; ++i) {
        const auto v = random_vec(4, rng, 2.0);
        samples.insert(samples.end(), v.begin(), v.end());
    }
    TrainOptions opts;
    opts.iterations = 8;
    opts.seed = 18;
    TrainStats stats;
    const auto books = train(samples, 300, 2, 8, 4, opts, &stats);
    CHECK(books.levels == 2);
    REQUIRE(stats.mse_history.size() == 2);
    for (const auto& hist : stats.mse_history) {
        REQUIRE(hist.size() == 8);
        // k-means never increases its objective between iterations.
        for (size_t i = 1; i < hist.size(); ++i) CHECK(hist[i] <= hist[i - 1] + 1e-9);
    }
}

TEST_CASE("re-quantization is idempotent on well-separated data") {
    // Data clustered at every residual scale: coarse centers, medium offsets,
    // fine offsets, each layer ~50x smaller than the previous one. Each level
    // then quantizes a well-separated layer, so a reconstruction lands deep
    // inside the same cell at every level and a second encode reproduces the
    // greedy path exactly.
    std::mt19937_64 rng(19);
    const int dim = 8;
    const double scales[3] = {50.0, 1.0, 0.02};
    std::vector<std::vector<float>> layer(3, std::vector<float>(size_t(16) * dim));
    for (int l = 0; l < 3; ++l) {
        std::normal_distribution<double> cn(0.0, scales[size_t(l)]);
        for (float& v : layer[size_t(l)]) v = float(cn(rng));
    }
    std::normal_distribution<double> jitter(0.0, 2e-4);
    std::uniform_int_distribution<int> pick(0, 15);
    const int count = 600;
    std::vector<float> samples;
    for (int i = 0; i < count; ++i) {
        const int a = pick(rng), b = pick(rng), c = pick(rng);
        for (int d = 0; d < dim; ++d)
            samples.push_back(layer[0][size_t(a) * dim + d] + layer[1][size_t(b) * dim + d] +
                              layer[2][size_t(c) * dim + d] + float(jitter(rng)));
    }
    TrainOptions opts;
    opts.iterations = 20;
    opts.seed = 20;
    const auto books = train(samples, count, 3, 16, dim, opts);

    int mismatches = 0;
    for (int i = 0; i < count; ++i) {
        std::span<const float> x(samples.data() + size_t(i) * dim, size_t(dim));
        const RvqCode once = encode(x, books);
        const RvqCode twice = encode(decode(once, books), books);
        if (!(once == twice)) ++mismatches;
    }
    CHECK(mismatches == 0);
}

TEST_CASE("codebook file round trips and rejects foreign bytes") {
    const auto books = random_books(3, 10, 7, 21);
    const std::string path = testutil::scratch_path("books.afcb");
    save_codebooks(path, books);
    const auto back = load_codebooks(path);
    CHECK(back.levels == 3);
    CHECK(back.entries == 10);
    CHECK(back.dim == 7);
    CHECK(back.codewords == books.codewords);

    const std::string bad = testutil::scratch_path("bad.afcb");
    {
        std::ofstream out(bad, std::ios::binary);
        out << "AFCQ anything else";
    }
    CHECK(code_of([&] { load_codebooks(bad); }) == ErrorCode::FormatError);
    CHECK(code_of([&] { load_codebooks(testutil::scratch_path("absent.afcb")); }) ==
          ErrorCode::IoError);

    // Truncated file: header promises more data than the file holds.
    const std::string trunc = testutil::scratch_path("trunc.afcb");
    {
        std::ifstream in(path, std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
        std::ofstream out(trunc, std::ios::binary);
        out.write(bytes.data(), std::streamsize(bytes.size() / 2));
    }
    CHECK(code_of([&] { load_codebooks(trunc); }) == ErrorCode::FormatError);
}

TEST_CASE("shape and range violations raise typed errors") {
    const auto books = random_books(2, 8, 4, 22);
    std::mt19937_64 rng(23);

    const auto wrong_dim = random_vec(5, rng);
    CHECK(code_of([&] { encode(wrong_dim, books); }) == ErrorCode::ShapeMismatch);

    std::vector<float> nan_vec(4, 0.0f);
    nan_vec[2] = std::numeric_limits<float>::quiet_NaN();
    CHECK(code_of([&] { encode(nan_vec, books); }) == ErrorCode::InvalidSignal);

    RvqCode code;
    code.indices = {1, 2};
    CHECK(code_of([&] { decode(code, books, 0); }) == ErrorCode::InvalidConfig);
    CHECK(code_of([&] { decode(code, books, 3); }) == ErrorCode::InvalidConfig);

    RvqCode short_code;
    short_code.indices = {1};
    CHECK(code_of([&] { decode(short_code, books); }) == ErrorCode::CorruptCode);

    RvqCode oob;
    oob.indices = {1, 300};
    CHECK(code_of([&] { decode(oob, books); }) == ErrorCode::CorruptCode);

    std::vector<double> residual(4, 0.0);
    CHECK(code_of([&] { nearest_codeword(residual, books, 2); }) == ErrorCode::InvalidConfig);
    std::vector<double> bad_res(3, 0.0);
    CHECK(code_of([&] { nearest_codeword(bad_res, books, 0); }) == ErrorCode::ShapeMismatch);

    std::vector<float> samples(40, 0.0f);
    CHECK(code_of([&] { train(samples, 10, 0, 4, 4, {}); }) == ErrorCode::InvalidConfig);
    CHECK(code_of([&] { train(samples, 10, 1, 16, 4, {}); }) == ErrorCode::InsufficientData);
    CHECK(code_of([&] { train(samples, 9, 1, 4, 4, {}); }) == ErrorCode::ShapeMismatch);
}
