// Acceptance gate for the streaming voice pipeline. Each criterion prints
// exactly one [PASS]/[FAIL] line with its measurements and elapsed time;
// the binary exits 0 only if every criterion holds. Criteria 1-6 carry a
// runtime budget that is part of the pass condition.

#include "afs/bench.hpp"
#include "afs/codec.hpp"
#include "afs/config.hpp"
#include "afs/dsp.hpp"
#include "afs/features.hpp"
#include "afs/nn/decoder.hpp"
#include "afs/nn/graph.hpp"
#include "afs/rvq.hpp"
#include "afs/tts.hpp"
#include "test_util.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace afs;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
    std::vector<std::string> notes; // printed indented under the result line
};

rvq::CodebookSet random_books(int levels, int entries, int dim, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> n(0.0f, 1.0f);
    rvq::CodebookSet books;
    books.levels = levels;
    books.entries = entries;
    books.dim = dim;
    books.codewords.resize(size_t(levels) * entries * dim);
    for (float& v : books.codewords) v = n(rng);
    return books;
}

// Clustered vectors: residual quantization is exact-recoverable on data that
// actually has multi-scale structure, which is what the codec latents have.
std::vector<float> blob_samples(int count, int dim, int n_centers, double center_scale,
                                double jitter, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> cn(0.0, center_scale), jn(0.0, jitter);
    std::vector<std::vector<double>> centers(static_cast<size_t>(n_centers),
                                             std::vector<double>(static_cast<size_t>(dim)));
    for (auto& c : centers)
        for (double& v : c) v = cn(rng);
    std::uniform_int_distribution<int> pick(0, n_centers - 1);
    std::vector<float> out(size_t(count) * dim);
    for (int i = 0; i < count; ++i) {
        const auto& c = centers[size_t(pick(rng))];
        for (int d = 0; d < dim; ++d) out[size_t(i) * dim + d] = float(c[size_t(d)] + jn(rng));
    }
    return out;
}

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), pattern, a, b, c);
    return buf;
}

// ---- 1. frame-rate identities ----------------------------------------------

Outcome c1_frame_rates() {
    Outcome o;
    const codec::CodecConfig ccfg = codec::paper_config();
    const int compression = ccfg.compression();
    const double fps = ccfg.frames_per_second();

    const int mel = features::mel_frame_count(int64_t(30) * 16000, 160);
    const int stem = features::stem_frame_count(mel);
    const int pooled = features::pooled_frame_count(stem);

    o.pass = compression == 4096 && fps == 44100.0 / 4096.0 && std::abs(fps - 10.8) <= 0.05 &&
             mel == 3000 && stem == 1500 && pooled == 750;
    std::ostringstream d;
    d << "compression " << compression << ", latent rate " << fmt("%.4f", fps)
      << " Hz (|delta to 10.8| = " << fmt("%.4f", std::abs(fps - 10.8)) << " <= 0.05), 30 s -> "
      << mel << " mel -> " << stem << " @50 Hz -> " << pooled << " pooled";
    o.detail = d.str();
    return o;
}

// ---- 2. residual quantizer correctness --------------------------------------

Outcome c2_rvq() {
    Outcome o;

    // Greedy L=1 against an exhaustive scan: 1000 vectors, K=64, D=8.
    const auto flat_books = random_books(1, 64, 8, 201);
    std::mt19937_64 rng(202);
    std::normal_distribution<float> n(0.0f, 1.5f);
    int brute_mismatches = 0;
    for (int t = 0; t < 1000; ++t) {
        std::vector<float> x(8);
        for (float& v : x) v = n(rng);
        const int got = int(rvq::encode(x, flat_books).indices[0]);
        int best = 0;
        double best_d = 1e300;
        for (int k = 0; k < 64; ++k) {
            const float* c = flat_books.codeword(0, k);
            double acc = 0.0;
            for (int d = 0; d < 8; ++d) {
                const double diff = double(x[size_t(d)]) - double(c[d]);
                acc += diff * diff;
            }
            if (acc < best_d) {
                best_d = acc;
                best = k;
            }
        }
        if (got != best) ++brute_mismatches;
    }

    // Train L=8 toy codebooks on clustered data; reconstruction error must
    // fall monotonically as levels commit.
    const int dim = 8;
    const auto train_data = blob_samples(4096, dim, 16, 6.0, 0.5, 203);
    rvq::TrainOptions topts;
    topts.iterations = 12;
    topts.seed = 204;
    const auto books = rvq::train(train_data, 4096, 8, 64, dim, topts);

    const auto held_out = blob_samples(512, dim, 16, 6.0, 0.5, 203); // same centers (same seed)
    std::vector<double> err(9, 0.0);
    for (int i = 0; i < 512; ++i) {
        std::span<const float> x(held_out.data() + size_t(i) * dim, size_t(dim));
        const rvq::RvqCode code = rvq::encode(x, books);
        for (int l = 0; l <= 8; ++l) {
            const std::vector<float> approx = rvq::partial_embedding(code, books, l);
            double acc = 0.0;
            for (int d = 0; d < dim; ++d) {
                const double diff = double(x[size_t(d)]) - double(approx[size_t(d)]);
                acc += diff * diff;
            }
            err[size_t(l)] += acc / 512.0;
        }
    }
    bool monotone = true;
    for (int l = 0; l < 8; ++l)
        if (err[size_t(l + 1)] > err[size_t(l)] + 1e-12) monotone = false;

    // Re-quantization idempotence: quantizing a reconstruction returns the
    // exact same code, 1000 vectors, zero mismatches. Uses data clustered at
    // every residual scale (coarse centers, medium offsets, fine offsets,
    // each layer ~50x smaller) so each level quantizes a well-separated
    // layer and reconstructions land deep inside their original cells.
    std::mt19937_64 hrng(205);
    const double hscales[3] = {50.0, 1.0, 0.02};
    std::vector<std::vector<float>> hlayer(3, std::vector<float>(size_t(16) * dim));
    for (int l = 0; l < 3; ++l) {
        std::normal_distribution<double> cn(0.0, hscales[size_t(l)]);
        for (float& v : hlayer[size_t(l)]) v = float(cn(hrng));
    }
    std::normal_distribution<double> hjit(0.0, 2e-4);
    std::uniform_int_distribution<int> hpick(0, 15);
    std::vector<float> probe;
    for (int i = 0; i < 1000; ++i) {
        const int a = hpick(hrng), b = hpick(hrng), c = hpick(hrng);
        for (int d = 0; d < dim; ++d)
            probe.push_back(hlayer[0][size_t(a) * dim + d] + hlayer[1][size_t(b) * dim + d] +
                            hlayer[2][size_t(c) * dim + d] + float(hjit(hrng)));
    }
    rvq::TrainOptions hopts;
    hopts.iterations = 20;
    hopts.seed = 206;
    const auto hbooks = rvq::train(probe, 1000, 3, 16, dim, hopts);
    int idem_mismatches = 0;
    for (int i = 0; i < 1000; ++i) {
        std::span<const float> x(probe.data() + size_t(i) * dim, size_t(dim));
        const rvq::RvqCode code = rvq::encode(x, hbooks);
        const std::vector<float> recon = rvq::decode(code, hbooks);
        if (rvq::encode(recon, hbooks).indices != code.indices) ++idem_mismatches;
    }

    o.pass = brute_mismatches == 0 && monotone && idem_mismatches == 0;
    std::ostringstream d;
    d << "brute-force mismatches " << brute_mismatches << "/1000, level error "
      << fmt("%.3f", err[0]) << " -> " << fmt("%.5f", err[8])
      << (monotone ? " (monotone)" : " (NOT monotone)") << ", idempotence mismatches "
      << idem_mismatches << "/1000";
    o.detail = d.str();
    return o;
}

// ---- 3. causality and streaming equivalence ---------------------------------

Outcome c3_streaming() {
    Outcome o;
    const codec::Codec codec(codec::toy_config(), 301);
    const int unit = codec.config().compression();

    // Perturb the tail only: every latent frame before the cut is bitwise
    // unchanged, so one token can never hear the future.
    std::mt19937_64 rng(302);
    std::uniform_real_distribution<float> u(-0.5f, 0.5f);
    AudioBuffer a;
    a.sample_rate = codec.config().sample_rate;
    a.samples.resize(size_t(8) * unit);
    for (float& v : a.samples) v = u(rng);
    AudioBuffer b = a;
    for (size_t i = size_t(4) * unit; i < b.samples.size(); ++i)
        b.samples[i] = -0.75f * b.samples[i] + 0.1f;

    const codec::LatentSequence ea = codec.encode(a);
    const codec::LatentSequence eb = codec.encode(b);
    const int dim = codec.config().latent_dim();
    bool prefix_identical = ea.count() == 8 && eb.count() == 8;
    for (int t = 0; t < 4 && prefix_identical; ++t)
        prefix_identical = std::memcmp(ea.frames.row(t), eb.frames.row(t),
                                       size_t(dim) * sizeof(float)) == 0;
    bool suffix_changed = false;
    for (int t = 4; t < 8 && !suffix_changed; ++t)
        suffix_changed = std::memcmp(ea.frames.row(t), eb.frames.row(t),
                                     size_t(dim) * sizeof(float)) != 0;

    // Streaming decode against the offline decode over 50 random sequences.
    const auto books = random_books(codec.config().rvq_levels, codec.config().rvq_entries,
                                    dim, 303);
    std::uniform_int_distribution<int> len_pick(4, 10);
    std::uniform_int_distribution<int> idx_pick(0, codec.config().rvq_entries - 1);
    double max_diff = 0.0;
    bool sizes_ok = true;
    for (int trial = 0; trial < 50; ++trial) {
        const int len = len_pick(rng);
        std::vector<rvq::RvqCode> codes(static_cast<size_t>(len));
        for (auto& c : codes) {
            c.indices.resize(size_t(codec.config().rvq_levels));
            for (auto& k : c.indices) k = uint16_t(idx_pick(rng));
        }
        const AudioBuffer offline = codec.decode(codes, books);
        codec::StreamState stream(codec, books);
        std::vector<float> streamed;
        for (const auto& c : codes) {
            const std::vector<float> chunk = stream.push(c);
            streamed.insert(streamed.end(), chunk.begin(), chunk.end());
        }
        if (streamed.size() != offline.samples.size()) sizes_ok = false;
        for (size_t i = 0; i < streamed.size() && sizes_ok; ++i)
            max_diff = std::max(max_diff,
                                std::abs(double(streamed[i]) - double(offline.samples[i])));
    }

    o.pass = prefix_identical && suffix_changed && sizes_ok && max_diff <= 1e-5;
    std::ostringstream d;
    d << "prefix frames bitwise " << (prefix_identical ? "identical" : "CHANGED")
      << ", tail frames " << (suffix_changed ? "respond" : "FROZEN")
      << ", streaming vs offline max |diff| " << fmt("%.2e", max_diff) << " over 50 sequences";
    o.detail = d.str();
    return o;
}

// ---- 4. stft/istft round trip ------------------------------------------------

Outcome c4_stft() {
    Outcome o;
    std::mt19937_64 rng(401);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    double max_err = 0.0;
    for (int trial = 0; trial < 3; ++trial) {
        const int n = 4096 + trial * 777;
        AudioBuffer audio;
        audio.sample_rate = 44100;
        audio.samples.resize(size_t(n));
        for (float& v : audio.samples) v = u(rng);

        const dsp::StftFrames frames = dsp::stft(audio, 32, 8);
        const AudioBuffer back = dsp::istft(frames);
        for (int i = 32; i < n - 32; ++i)
            max_err = std::max(max_err, std::abs(double(back.samples[size_t(i)]) -
                                                 double(audio.samples[size_t(i)])));
    }
    o.pass = max_err <= 1e-6;
    o.detail = "window 32 hop 8 Hann, interior max |err| " + fmt("%.2e", max_err) + " <= 1e-6";
    return o;
}

// ---- 5. gradient fidelity -----------------------------------------------------

// Central differences against one reverse pass; returns the worst relative
// error over `probes` randomly sampled parameter coordinates.
double max_rel_grad_error(nn::ParamStore<double>& store,
                          const std::function<nn::Graph<double>::Ref(nn::Graph<double>&)>& build, int probes,
                          uint64_t seed) {
    store.zero_grads();
    {
        nn::Graph<double> g;
        g.backward(build(g));
    }
    std::vector<nn::ParamTensor<double>*> tensors;
    for (nn::ParamTensor<double>& p : store) tensors.push_back(&p);

    auto forward = [&]() {
        nn::Graph<double> g;
        return g.val(build(g)).at(0, 0);
    };

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<size_t> pick_t(0, tensors.size() - 1);
    double worst = 0.0;
    for (int probe = 0; probe < probes; ++probe) {
        nn::ParamTensor<double>* p = tensors[pick_t(rng)];
        std::uniform_int_distribution<size_t> pick_i(0, p->value.size() - 1);
        const size_t i = pick_i(rng);
        const double x0 = p->value.v[i];
        const double h = 1e-5 * std::max(1.0, std::abs(x0));
        p->value.v[i] = x0 + h;
        const double fp = forward();
        p->value.v[i] = x0 - h;
        const double fm = forward();
        p->value.v[i] = x0;
        const double fd = (fp - fm) / (2.0 * h);
        const double analytic = p->grad.v[i];
        worst = std::max(worst, std::abs(fd - analytic) /
                                    std::max({std::abs(fd), std::abs(analytic), 1e-8}));
    }
    return worst;
}

Outcome c5_gradients() {
    Outcome o;
    std::mt19937_64 rng(501);
    auto fill = [&rng](nn::Mat<double>& m, double lo, double hi) {
        std::uniform_real_distribution<double> u(lo, hi);
        for (double& v : m.v) v = u(rng);
    };

    nn::MogConfig mc;
    mc.mixtures = 3;
    mc.dim = 4;
    mc.hidden = 10;
    mc.in_width = 12;

    // Standalone mixture NLL head.
    double worst_head;
    {
        nn::ParamStore<double> store;
        auto hp = nn::make_mog_head(store, mc);
        nn::init_mog_head(hp, mc, 502);
        nn::Mat<double> in(6, mc.in_width), targets(6, mc.dim);
        fill(in, -1.0, 1.0);
        fill(targets, -1.0, 1.0);
        worst_head = max_rel_grad_error(
            store,
            [&](nn::Graph<double>& g) {
                auto mog = nn::mog_head_forward(g, g.input(in), hp, mc);
                return g.mean(nn::mog_nll_graph(g, mog, g.input(targets), mc));
            },
            100, 503);
    }

    // Full toy decoder feeding the head, trained objective end to end.
    double worst_composite;
    {
        nn::DecoderConfig dc;
        dc.layers = 2;
        dc.heads = 2;
        dc.width = 8;
        dc.ffw = 16;
        dc.max_seq = 16;
        mc.in_width = dc.width + mc.dim;

        nn::ParamStore<double> store;
        auto dp = nn::make_decoder_params(store, dc);
        auto hp = nn::make_mog_head(store, mc);
        nn::init_decoder(dp, dc, 504);
        nn::init_mog_head(hp, mc, 505);

        const int T = 5;
        nn::Mat<double> emb(T, dc.width), committed(T, mc.dim), targets(T, mc.dim);
        fill(emb, -1.0, 1.0);
        fill(committed, -1.0, 1.0);
        fill(targets, -1.0, 1.0);
        worst_composite = max_rel_grad_error(
            store,
            [&](nn::Graph<double>& g) {
                nn::Graph<double>::Ref h = nn::decoder_forward(g, g.input(emb), dp, dc);
                nn::Graph<double>::Ref in = g.concat_cols(h, g.input(committed));
                auto mog = nn::mog_head_forward(g, in, hp, mc);
                return g.mean(nn::mog_nll_graph(g, mog, g.input(targets), mc));
            },
            100, 506);
    }

    o.pass = worst_head <= 1e-3 && worst_composite <= 1e-3;
    o.detail = "64-bit central differences, 100 probes each: mixture head max rel " +
               fmt("%.2e", worst_head) + ", decoder+head composite max rel " +
               fmt("%.2e", worst_composite) + " (<= 1e-3)";
    return o;
}

// ---- 6. toy training sanity ----------------------------------------------------

Outcome c6_training() {
    Outcome o;

    // Codec half: 500 steps over 100 synthetic tones must at least halve the
    // log-mel reconstruction loss measured from initialization.
    std::mt19937_64 rng(601);
    std::uniform_real_distribution<double> freq(150.0, 1200.0);
    std::vector<AudioBuffer> tones;
    tones.reserve(100);
    for (int i = 0; i < 100; ++i)
        tones.push_back({testutil::make_tone(freq(rng), 0.25, 44100, 0.4f), 44100});

    codec::CodecConfig ccfg;
    ccfg.initial_width = 8;
    ccfg.stage_widths = {8, 8, 12};
    ccfg.blocks_per_stage = 1;
    ccfg.expand = 2;
    ccfg.rvq_levels = 4;
    ccfg.rvq_entries = 16;
    codec::Codec cdc(ccfg, 602);

    auto mean_loss = [&tones](codec::Codec& c) {
        double acc = 0.0;
        for (const AudioBuffer& t : tones) acc += codec::training_loss(c, t);
        return acc / double(tones.size());
    };
    const double codec_before = mean_loss(cdc);
    codec::TrainOptions copts;
    copts.steps = 500;
    copts.adam.lr = 4e-3;
    codec::train(cdc, tones, copts);
    const double codec_after = mean_loss(cdc);
    const double codec_drop = (codec_before - codec_after) / codec_before;

    // TTS half: overfit five fixed pairs, then resynthesize them greedily.
    tts::TtsConfig tcfg;
    tcfg.decoder.layers = 2;
    tcfg.decoder.heads = 2;
    tcfg.decoder.width = 32;
    tcfg.decoder.ffw = 64;
    tcfg.decoder.max_seq = 32;
    tcfg.latent_dim = 8;
    tcfg.rvq_levels = 4;
    tcfg.rvq_entries = 8;
    tcfg.mixtures = 2;
    tcfg.mog_hidden = 24;
    tcfg.unmask_steps = 2;

    const auto books = random_books(4, 8, 8, 603);
    std::mt19937_64 code_rng(604);
    std::uniform_int_distribution<int> idx(0, 7);
    const char* texts[5] = {"stream", "codec", "tone", "nice", "audio"};
    std::vector<tts::TrainingSample> pairs(5);
    for (int i = 0; i < 5; ++i) {
        pairs[size_t(i)].tokens = tts::tokenize(texts[i]);
        pairs[size_t(i)].codes.resize(pairs[size_t(i)].tokens.size());
        for (auto& c : pairs[size_t(i)].codes) {
            c.indices.resize(4);
            for (auto& k : c.indices) k = uint16_t(idx(code_rng));
        }
    }

    tts::TtsModel model(tcfg, 605);
    const double nll_before = tts::eval_nll(model, pairs, books);
    tts::TtsTrainOptions topts;
    topts.steps = 1500;
    topts.adam.lr = 3e-3;
    topts.seed = 606;
    tts::train(model, pairs, books, topts);
    const double nll_after = tts::eval_nll(model, pairs, books);
    const double nll_drop = (nll_before - nll_after) / std::abs(nll_before);

    int level0_hits = 0, level0_total = 0;
    for (const auto& pair : pairs) {
        tts::Session session(model, books, 0.0, 607);
        for (size_t t = 0; t < pair.tokens.size(); ++t) {
            const rvq::RvqCode emitted = session.step(pair.tokens[t]);
            if (emitted.indices[0] == pair.codes[t].indices[0]) ++level0_hits;
            ++level0_total;
        }
    }
    const double recovery = double(level0_hits) / double(level0_total);

    o.pass = codec_drop >= 0.5 && nll_drop >= 0.8 && recovery >= 0.9;
    std::ostringstream d;
    d << "codec mel loss " << fmt("%.4f -> %.4f", codec_before, codec_after) << " ("
      << fmt("%.0f%%", 100.0 * codec_drop) << " drop, need >= 50%), tts nll "
      << fmt("%.3f -> %.3f", nll_before, nll_after) << " (" << fmt("%.0f%%", 100.0 * nll_drop)
      << " drop, need >= 80%), level-0 recovery " << level0_hits << "/" << level0_total << " ("
      << fmt("%.0f%%", 100.0 * recovery) << ", need >= 90%)";
    o.detail = d.str();
    return o;
}

// ---- 7. latency harness exactness ----------------------------------------------

Outcome c7_latency() {
    Outcome o;
    const config::RunConfig rc; // published defaults: 108 tokens, 100/10/50 ms
    bench::SimClock clock;
    const uint64_t t0 = clock.now_ns();
    const auto events = bench::mock_events(config::mock_options(rc), clock);
    const auto report = bench::analyze(events, t0, 4096, 44100);

    const double expected_audio = 108.0 * 4096.0 / 44100.0;
    const bool ttft_exact = report.ttft_ns == 150'000'000;
    const bool itl_exact = report.itl_mean_ns == 60'000'000 &&
                           report.itl_p50_ns == 60'000'000 && report.itl_p95_ns == 60'000'000;
    const bool audio_exact = std::abs(report.audio_seconds_out - expected_audio) <= 1e-9;

    o.pass = ttft_exact && itl_exact && audio_exact;
    std::ostringstream d;
    d << "ttft " << report.ttft_ns << " ns (== 0.15 s), itl mean/p50/p95 " << report.itl_mean_ns
      << "/" << report.itl_p50_ns << "/" << report.itl_p95_ns << " ns (== 0.06 s), "
      << "audio out " << fmt("%.9f", report.audio_seconds_out) << " s (108*4096/44100, |err| <= 1e-9)";
    o.detail = d.str();
    o.notes.push_back("published full-scale wall-clock totals (5.94 s generation, 0.02 s codec, "
                      "6.68 s end-to-end) are hardware-bound and are NOT reproduction targets;");
    o.notes.push_back("this harness reproduces their definitions (TTFT, ITL, stage totals), "
                      "not their magnitudes.");
    return o;
}

// ---- 8. interleaving invariant ---------------------------------------------------

Outcome c8_interleaving() {
    Outcome o;
    codec::CodecConfig ccfg;
    ccfg.initial_width = 8;
    ccfg.stage_widths = {8, 8, 12};
    ccfg.blocks_per_stage = 1;
    ccfg.expand = 2;
    ccfg.rvq_levels = 4;
    ccfg.rvq_entries = 16;
    const codec::Codec codec(ccfg, 801);
    const auto books = random_books(4, 16, 12, 802);

    tts::TtsConfig tcfg;
    tcfg.decoder.layers = 2;
    tcfg.decoder.heads = 2;
    tcfg.decoder.width = 16;
    tcfg.decoder.ffw = 32;
    tcfg.decoder.max_seq = 544; // two positions per token, up to 256 tokens
    tcfg.latent_dim = 12;
    tcfg.rvq_levels = 4;
    tcfg.rvq_entries = 16;
    tcfg.mixtures = 2;
    tcfg.mog_hidden = 12;
    tcfg.unmask_steps = 2;
    const tts::TtsModel model(tcfg, 803);

    std::mt19937_64 rng(804);
    std::uniform_int_distribution<int> len_pick(1, 256);
    int failures = 0;
    int64_t total_tokens = 0;
    for (int session = 0; session < 100; ++session) {
        const int len = len_pick(rng);
        std::string text(size_t(len), ' ');
        for (int i = 0; i < len; ++i) text[size_t(i)] = char('a' + (i * 7 + session) % 26);

        bench::SimClock clock;
        const tts::SynthResult res =
            synthesize(model, codec, books, text, clock, 0.7, uint64_t(session));
        total_tokens += len;
        if (res.codes.size() != size_t(len) ||
            res.audio.samples.size() != size_t(len) * 4096)
            ++failures;
    }

    o.pass = failures == 0;
    std::ostringstream d;
    d << "100 seeded sessions, lengths 1..256 (" << total_tokens
      << " tokens total): audio tokens == text tokens and samples == tokens*4096 in "
      << (100 - failures) << "/100";
    o.detail = d.str();
    return o;
}

// ---- 9. desk-scale substitution statement ----------------------------------------

Outcome c9_statement() {
    Outcome o;
    o.pass = true;
    o.detail = "out-of-scope results stated explicitly below";
    o.notes.push_back("NOT reproduced at desk scale: the published full-scale SEED test-en "
                      "WER of 2.02 and speaker similarity of 0.61,");
    o.notes.push_back("the full-scale speech-understanding benchmark suites, and the "
                      "644M-parameter / 100k-hour training runs.");
    o.notes.push_back("Criteria 1-8 substitute property-based acceptance on desk-scale "
                      "models: exact frame arithmetic, quantizer and");
    o.notes.push_back("gradient correctness, causal streaming equivalence, training-dynamics "
                      "sanity, and latency-definition exactness.");
    return o;
}

} // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        double budget_seconds; // 0 = no stated budget
        Outcome (*fn)();
    };
    const Criterion criteria[] = {
        {1, "frame-rate identities", 1.0, c1_frame_rates},
        {2, "residual quantizer correctness", 10.0, c2_rvq},
        {3, "causality and streaming equivalence", 30.0, c3_streaming},
        {4, "stft/istft round trip", 5.0, c4_stft},
        {5, "gradient fidelity", 60.0, c5_gradients},
        {6, "toy training sanity", 600.0, c6_training},
        {7, "latency harness exactness", 0.0, c7_latency},
        {8, "interleaving invariant", 0.0, c8_interleaving},
        {9, "desk-scale substitution statement", 0.0, c9_statement},
    };

    bool all_pass = true;
    for (const Criterion& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.fn();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_budget = c.budget_seconds <= 0.0 || elapsed <= c.budget_seconds;
        const bool pass = o.pass && in_budget;
        all_pass = all_pass && pass;

        std::printf("[%s] %d. %s: %s (%.2f s", pass ? "PASS" : "FAIL", c.id, c.name,
                    o.detail.c_str(), elapsed);
        if (c.budget_seconds > 0.0)
            std::printf(", budget %.0f s%s", c.budget_seconds, in_budget ? "" : " EXCEEDED");
        std::printf(")\n");
        for (const std::string& note : o.notes) std::printf("        %s\n", note.c_str());
    }

    std::printf("%s\n", all_pass ? "acceptance: all 9 criteria passed"
                                 : "acceptance: FAILURES reported above");
    return all_pass ? 0 : 1;
}
