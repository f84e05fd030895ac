#include <cstdio>
#include "afs/codec.hpp"

#include "afs/dsp.hpp"
#include "afs/io.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace afs::codec {

namespace {

using nn::Mat;
using GraphF = nn::Graph<float>;
using Ref = GraphF::Ref;
using PT = nn::ParamTensor<float>;

constexpr float kLnEps = 1e-5f;
constexpr double kPi = std::numbers::pi;

// Reflect index into [0, len) without repeating the edge sample. Mirrors the
// centered-frame padding used by the mel spectrogram so the training target
// and the differentiable mel branch see identical framing.
inline long reflect_index(long i, long len) {
    if (len == 1) return 0;
    const long period = 2 * (len - 1);
    i = i % period;
    if (i < 0) i += period;
    return i < len ? i : period - i;
}

// Row-count change without touching the storage; row-major layout makes the
// stride-S fold/unfold a pure reinterpretation.
Mat<float> reshaped(Mat<float> m, int rows, int cols) {
    Mat<float> out;
    out.rows = rows;
    out.cols = cols;
    out.v = std::move(m.v);
    return out;
}

Mat<float> affine_rows(const Mat<float>& x, const Mat<float>& w, const Mat<float>& b) {
    Mat<float> y(x.rows, w.rows);
    for (int r = 0; r < x.rows; ++r)
        nn::detail::affine_row<float>({x.row(r), size_t(x.cols)}, w, b, {y.row(r), size_t(y.cols)});
    return y;
}

void gelu_inplace(Mat<float>& x) {
    for (float& v : x.v) v = nn::detail::gelu_fwd(v);
}

// Depthwise causal conv over rows. `hist`/`hist_valid` supply left context in
// streaming; positions before the start of the stream are dropped, matching
// the zero-pad skip of the offline path bit for bit.
Mat<float> dwconv_plain(const Mat<float>& x, const Mat<float>& w, const Mat<float>& b,
                        const Mat<float>* hist, int hist_valid) {
    const int K = w.rows, C = x.cols;
    Mat<float> y(x.rows, C);
    for (int t = 0; t < x.rows; ++t) {
        float* yr = y.row(t);
        std::copy_n(b.row(0), C, yr);
        for (int k = 0; k < K; ++k) {
            const int src = t - K + 1 + k;
            const float* xr = nullptr;
            if (src >= 0) {
                xr = x.row(src);
            } else if (hist && src >= -hist_valid) {
                xr = hist->row(K - 1 + src);
            } else {
                continue;
            }
            const float* wr = w.row(k);
            for (int c = 0; c < C; ++c) yr[c] += wr[c] * xr[c];
        }
    }
    return y;
}

// Slide the last K-1 frames of [hist; x] into hist (newest in the last row).
void update_history(Mat<float>& hist, int& valid, const Mat<float>& x) {
    const int K1 = hist.rows;
    Mat<float> next(K1, hist.cols);
    for (int i = 0; i < K1; ++i) {
        const int off = x.rows - K1 + i; // frame offset relative to chunk start
        if (off >= 0) {
            std::copy_n(x.row(off), x.cols, next.row(i));
        } else if (off >= -valid) {
            std::copy_n(hist.row(K1 + off), hist.cols, next.row(i));
        }
    }
    hist = std::move(next);
    valid = std::min(K1, valid + x.rows);
}

void layernorm_rows(Mat<float>& x, const Mat<float>& gain, const Mat<float>& bias) {
    for (int r = 0; r < x.rows; ++r)
        nn::detail::layernorm_row<float>({x.row(r), size_t(x.cols)}, gain, bias, kLnEps);
}

} // namespace

// Parameter handles resolved at construction plus the fixed DSP tables shared
// by analysis, synthesis, and the training graph.
struct Codec::Plan {
    struct Block {
        PT *dw_w, *dw_b, *ln_g, *ln_b, *pw1_w, *pw1_b, *pw2_w, *pw2_b;
    };

    PT *in_w = nullptr, *in_b = nullptr;
    PT *out_w = nullptr, *out_b = nullptr;
    std::vector<std::vector<Block>> enc_blocks, dec_blocks; // [stage][block]
    std::vector<PT*> down_w, down_b, up_w, up_b;

    std::vector<double> hann;             // shared analysis/synthesis window
    std::vector<double> dft_cos, dft_sin; // bins x window analysis tables
    Mat<float> synth_re, synth_im;        // bins x window inverse-DFT rows
    std::vector<float> inv_norm_edge;     // onset samples s < window - hop
    std::vector<float> inv_norm_steady;   // by s % hop once every frame overlaps
};

namespace {

// Per-sample reciprocal of the summed squared synthesis window. Zero where no
// window energy lands (sample 0 under a periodic Hann), so output there is 0.
float inv_norm_at(const Codec::Plan& p, const CodecConfig& cfg, int64_t s) {
    const int edge = cfg.window - cfg.hop;
    if (s < edge) return p.inv_norm_edge[size_t(s)];
    return p.inv_norm_steady[size_t(s % cfg.hop)];
}

// One ConvNeXt block: depthwise causal conv, layernorm, pointwise expand,
// GELU, pointwise project, residual. Streaming passes per-block history.
Mat<float> convnext_plain(const Mat<float>& x, const Codec::Plan::Block& blk,
                          Mat<float>* hist, int* hist_valid) {
    Mat<float> t = dwconv_plain(x, blk.dw_w->value, blk.dw_b->value, hist,
                                hist ? *hist_valid : 0);
    if (hist) update_history(*hist, *hist_valid, x);
    layernorm_rows(t, blk.ln_g->value, blk.ln_b->value);
    Mat<float> h = affine_rows(t, blk.pw1_w->value, blk.pw1_b->value);
    gelu_inplace(h);
    Mat<float> y = affine_rows(h, blk.pw2_w->value, blk.pw2_b->value);
    for (size_t i = 0; i < y.v.size(); ++i) y.v[i] += x.v[i];
    return y;
}

Mat<float> encode_plain(const CodecConfig& cfg, const Codec::Plan& p, const Mat<float>& feats) {
    Mat<float> h = affine_rows(feats, p.in_w->value, p.in_b->value);
    for (int s = 0; s < cfg.stages(); ++s) {
        for (const auto& blk : p.enc_blocks[s]) h = convnext_plain(h, blk, nullptr, nullptr);
        const int S = cfg.stage_stride;
        h = reshaped(std::move(h), h.rows / S, h.cols * S);
        h = affine_rows(h, p.down_w[s]->value, p.down_b[s]->value);
    }
    return h;
}

// Latents -> windowed synthesis frames (rows at the hop grid). Streaming
// passes the per-block history set so chunk boundaries are seamless.
Mat<float> decoder_frames(const CodecConfig& cfg, const Codec::Plan& p, const Mat<float>& latents,
                          std::vector<Mat<float>>* hists, std::vector<int>* hist_valid) {
    Mat<float> h = latents;
    int hidx = 0;
    for (int s = 0; s < cfg.stages(); ++s) {
        h = affine_rows(h, p.up_w[s]->value, p.up_b[s]->value);
        const int S = cfg.stage_stride;
        h = reshaped(std::move(h), h.rows * S, h.cols / S);
        for (const auto& blk : p.dec_blocks[s]) {
            Mat<float>* hm = hists ? &(*hists)[hidx] : nullptr;
            int* hv = hist_valid ? &(*hist_valid)[hidx] : nullptr;
            h = convnext_plain(h, blk, hm, hv);
            ++hidx;
        }
    }
    Mat<float> head = affine_rows(h, p.out_w->value, p.out_b->value);

    const int T = head.rows, bins = cfg.window / 2 + 1, W = cfg.window;
    Mat<float> re(T, bins), im(T, bins);
    for (int t = 0; t < T; ++t) {
        const float* hr = head.row(t);
        for (int k = 0; k < bins; ++k) {
            const float mag = std::expm1(hr[k]);
            const float ph = hr[bins + k];
            re.at(t, k) = mag * std::cos(ph);
            im.at(t, k) = mag * std::sin(ph);
        }
    }
    Mat<float> xa(T, W), xb(T, W);
    nn::detail::gemm_nn(re.data(), p.synth_re.data(), xa.data(), T, bins, W);
    nn::detail::gemm_nn(im.data(), p.synth_im.data(), xb.data(), T, bins, W);
    for (size_t i = 0; i < xa.v.size(); ++i) xa.v[i] += xb.v[i];
    for (int t = 0; t < T; ++t) {
        float* fr = xa.row(t);
        for (int j = 0; j < W; ++j) fr[j] *= float(p.hann[j]);
    }
    return xa;
}

// Overlap-add one chunk of frames. `tail` carries the window - hop samples
// reaching past the chunk; `base` is the absolute index of its first sample.
// Emits exactly rows * hop normalized samples.
std::vector<float> ola_chunk(const CodecConfig& cfg, const Codec::Plan& p,
                             const Mat<float>& frames, int64_t base, std::vector<float>& tail) {
    const int W = cfg.window, hop = cfg.hop;
    const int carry = W - hop;
    const size_t emit = size_t(frames.rows) * hop;
    std::vector<float> acc(emit + carry, 0.0f);
    for (int j = 0; j < carry; ++j) acc[j] += tail[j];
    for (int t = 0; t < frames.rows; ++t) {
        const float* fr = frames.row(t);
        float* dst = acc.data() + size_t(t) * hop;
        for (int j = 0; j < W; ++j) dst[j] += fr[j];
    }
    std::vector<float> out(emit);
    for (size_t i = 0; i < emit; ++i) out[i] = acc[i] * inv_norm_at(p, cfg, base + int64_t(i));
    std::copy_n(acc.data() + emit, carry, tail.begin());
    return out;
}

Ref pref(GraphF& g, PT* p) { return g.param(p->value, &p->grad); }

Ref blocks_graph(GraphF& g, Ref x, const std::vector<Codec::Plan::Block>& blocks) {
    for (const auto& blk : blocks) {
        Ref t = g.causal_dwconv(x, pref(g, blk.dw_w), pref(g, blk.dw_b));
        t = g.layernorm(t, pref(g, blk.ln_g), pref(g, blk.ln_b), kLnEps);
        t = g.affine(t, pref(g, blk.pw1_w), pref(g, blk.pw1_b));
        t = g.gelu(t);
        t = g.affine(t, pref(g, blk.pw2_w), pref(g, blk.pw2_b));
        x = g.add(x, t);
    }
    return x;
}

Ref encoder_graph(GraphF& g, Ref feats, const CodecConfig& cfg, const Codec::Plan& p) {
    Ref h = g.affine(feats, pref(g, p.in_w), pref(g, p.in_b));
    for (int s = 0; s < cfg.stages(); ++s) {
        h = blocks_graph(g, h, p.enc_blocks[s]);
        const int S = cfg.stage_stride;
        h = g.reshape(h, g.val(h).rows / S, g.val(h).cols * S);
        h = g.affine(h, pref(g, p.down_w[s]), pref(g, p.down_b[s]));
    }
    return h;
}

// Latents -> normalized waveform (1 x n_samples) on the tape. Mirrors the
// plain decoder op for op so training optimizes exactly what inference runs.
Ref decoder_graph(GraphF& g, Ref z, const CodecConfig& cfg, const Codec::Plan& p) {
    Ref h = z;
    for (int s = 0; s < cfg.stages(); ++s) {
        h = g.affine(h, pref(g, p.up_w[s]), pref(g, p.up_b[s]));
        const int S = cfg.stage_stride;
        h = g.reshape(h, g.val(h).rows * S, g.val(h).cols / S);
        h = blocks_graph(g, h, p.dec_blocks[s]);
    }
    Ref head = g.affine(h, pref(g, p.out_w), pref(g, p.out_b));

    const int bins = cfg.window / 2 + 1, W = cfg.window;
    const int T = g.val(head).rows;
    Ref mag = g.expm1(g.slice_cols(head, 0, bins));
    Ref ph = g.slice_cols(head, bins, 2 * bins);
    Ref re = g.mul(mag, g.cos(ph));
    Ref im = g.mul(mag, g.sin(ph));
    Ref xa = g.matmul(re, g.input(p.synth_re));
    Ref xb = g.matmul(im, g.input(p.synth_im));
    Mat<float> win_row(1, W);
    for (int j = 0; j < W; ++j) win_row.at(0, j) = float(p.hann[j]);
    Ref xw = g.mul(g.add(xa, xb), g.input(std::move(win_row)));

    const int n = T * cfg.hop;
    Ref wave = g.overlap_add(xw, cfg.hop, n);
    Mat<float> inv(1, n);
    for (int i = 0; i < n; ++i) inv.at(0, i) = inv_norm_at(p, cfg, i);
    return g.mul(wave, g.input(std::move(inv)));
}

// Fixed tables for the differentiable mel branch at one padded clip length,
// plus per-clip training targets computed by the reference mel pipeline.
struct MelPlan {
    int frames = 0;
    int win = 1024, hop = 256, n_mels = 128;
    std::vector<int64_t> frame_map; // frames*win gather indices (reflect pad)
    Mat<float> window_row;          // 1 x win
    Mat<float> dft_re, dft_im;      // win x bins
    Mat<float> mel_w;               // bins x n_mels
};

MelPlan make_mel_plan(int64_t n_samples, int sample_rate) {
    MelPlan mp;
    mp.frames = int((n_samples + mp.hop - 1) / mp.hop);
    const int bins = mp.win / 2 + 1;

    mp.frame_map.resize(size_t(mp.frames) * mp.win);
    for (int f = 0; f < mp.frames; ++f) {
        const long start = long(f) * mp.hop - mp.win / 2;
        for (int j = 0; j < mp.win; ++j)
            mp.frame_map[size_t(f) * mp.win + j] = reflect_index(start + j, long(n_samples));
    }
    const std::vector<double> w = dsp::hann_window(mp.win);
    mp.window_row = Mat<float>(1, mp.win);
    for (int j = 0; j < mp.win; ++j) mp.window_row.at(0, j) = float(w[j]);

    mp.dft_re = Mat<float>(mp.win, bins);
    mp.dft_im = Mat<float>(mp.win, bins);
    for (int n = 0; n < mp.win; ++n)
        for (int k = 0; k < bins; ++k) {
            const double a = 2.0 * kPi * double(k) * double(n) / mp.win;
            mp.dft_re.at(n, k) = float(std::cos(a));
            mp.dft_im.at(n, k) = float(-std::sin(a));
        }
    const dsp::MelFilterbank bank = dsp::make_mel_filterbank(mp.n_mels, mp.win, sample_rate);
    mp.mel_w = Mat<float>(bins, mp.n_mels);
    for (int m = 0; m < mp.n_mels; ++m)
        for (int k = 0; k < bins; ++k) mp.mel_w.at(k, m) = float(bank.row(m)[k]);
    return mp;
}

// log10 mel energies of the waveform node, framed like the reference mel.
Ref mel_graph(GraphF& g, Ref wave, const MelPlan& mp) {
    Ref frames = g.gather_flat(wave, mp.frame_map, mp.frames, mp.win);
    Ref xw = g.mul(frames, g.input(mp.window_row));
    Ref re = g.matmul(xw, g.input(mp.dft_re));
    Ref im = g.matmul(xw, g.input(mp.dft_im));
    Ref power = g.add(g.mul(re, re), g.mul(im, im));
    Ref mel = g.matmul(power, g.input(mp.mel_w));
    Ref floored = g.max_const(mel, float(dsp::kLogMelFloor));
    return g.scale(g.log(floored), float(1.0 / std::numbers::ln10));
}

AudioBuffer padded_to_units(const AudioBuffer& clip, int unit) {
    const size_t n = clip.size();
    const size_t padded = (n + unit - 1) / unit * unit;
    AudioBuffer out;
    out.sample_rate = clip.sample_rate;
    out.samples.assign(padded, 0.0f);
    std::copy(clip.samples.begin(), clip.samples.end(), out.samples.begin());
    return out;
}

Mat<float> target_logmel(const AudioBuffer& padded, const MelPlan& mp) {
    const double wsec = double(mp.win) / padded.sample_rate;
    const double hsec = double(mp.hop) / padded.sample_rate;
    const dsp::MelSpectrogram ref = dsp::mel_spectrogram(padded, mp.n_mels, wsec, hsec);
    Mat<float> t(ref.n_frames, ref.n_mels);
    std::copy(ref.data.begin(), ref.data.end(), t.v.begin());
    return t;
}

// One forward (and optionally backward + Adam) pass of the mel objective.
double objective_step(Codec::Plan& p, nn::ParamStore<float>& store, const CodecConfig& cfg,
                      const Mat<float>& feats, const MelPlan& mp, const Mat<float>& target,
                      const TrainOptions* update, int step_index) {
    GraphF g;
    Ref z = encoder_graph(g, g.input(feats), cfg, p);
    Ref dec_in = z;
    Ref commit = -1;
    if (update && update->use_quantizer) {
        const Mat<float>& zv = g.val(z);
        Mat<float> zq(zv.rows, zv.cols);
        for (int r = 0; r < zv.rows; ++r) {
            const rvq::RvqCode code =
                rvq::encode({zv.row(r), size_t(zv.cols)}, *update->books);
            const std::vector<float> q = rvq::decode(code, *update->books);
            std::copy(q.begin(), q.end(), zq.row(r));
        }
        Ref stopgrad = g.input(zq); // constant: the commit term only moves z
        Ref d = g.sub(z, stopgrad);
        commit = g.mean(g.mul(d, d));
        dec_in = g.straight_through(std::move(zq), z);
    }
    Ref wave = decoder_graph(g, dec_in, cfg, p);
    Ref lm = mel_graph(g, wave, mp);
    Ref loss = g.mean(g.abs(g.sub(lm, g.input(target))));
    if (commit >= 0) loss = g.add(loss, g.scale(commit, float(update->commit_weight)));

    const double value = double(g.val(loss).at(0, 0));
    if (update) {
        store.zero_grads();
        g.backward(loss);
        store.adam_step(update->adam, step_index + 1);
    }
    return value;
}

} // namespace

void CodecConfig::validate() const {
    if (sample_rate <= 0) raise(ErrorCode::InvalidConfig, "codec: sample_rate must be > 0");
    if (window < 2 || window % 2 != 0)
        raise(ErrorCode::InvalidConfig, "codec: window must be even and >= 2");
    if (hop < 1 || hop > window || window % hop != 0)
        raise(ErrorCode::InvalidConfig, "codec: window must be a multiple of hop");
    if (initial_width < 1) raise(ErrorCode::InvalidConfig, "codec: initial_width must be >= 1");
    if (stage_widths.empty()) raise(ErrorCode::InvalidConfig, "codec: need at least one stage");
    for (int w : stage_widths)
        if (w < 1) raise(ErrorCode::InvalidConfig, "codec: stage widths must be >= 1");
    if (blocks_per_stage < 0) raise(ErrorCode::InvalidConfig, "codec: blocks_per_stage < 0");
    if (stage_stride < 1) raise(ErrorCode::InvalidConfig, "codec: stage_stride must be >= 1");
    if (dw_kernel < 1) raise(ErrorCode::InvalidConfig, "codec: dw_kernel must be >= 1");
    if (expand < 1) raise(ErrorCode::InvalidConfig, "codec: expand must be >= 1");
    if (rvq_levels < 1) raise(ErrorCode::InvalidConfig, "codec: rvq_levels must be >= 1");
    if (rvq_entries < 2 || rvq_entries > 65536)
        raise(ErrorCode::InvalidConfig, "codec: rvq_entries must be in [2, 65536]");
}

CodecConfig paper_config() { return CodecConfig{}; }

CodecConfig toy_config() {
    CodecConfig cfg;
    cfg.initial_width = 16;
    cfg.stage_widths = {32, 64, 24};
    cfg.rvq_levels = 8;
    cfg.rvq_entries = 64;
    return cfg;
}

Codec::Codec(const CodecConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    plan_ = std::make_unique<Plan>();
    Plan& p = *plan_;
    std::mt19937_64 rng(seed);

    const int ch = cfg_.channels();
    const int S = cfg_.stage_stride;
    const int total_blocks = std::max(1, cfg_.stages() * cfg_.blocks_per_stage);
    const double resid = 1.0 / std::sqrt(2.0 * total_blocks);

    auto make_block = [&](const std::string& prefix, int width) {
        Plan::Block b;
        b.dw_w = &store_.add(prefix + ".dw.w", cfg_.dw_kernel, width);
        b.dw_b = &store_.add(prefix + ".dw.b", 1, width);
        b.ln_g = &store_.add(prefix + ".ln.g", 1, width);
        b.ln_b = &store_.add(prefix + ".ln.b", 1, width);
        b.pw1_w = &store_.add(prefix + ".pw1.w", cfg_.expand * width, width);
        b.pw1_b = &store_.add(prefix + ".pw1.b", 1, cfg_.expand * width);
        b.pw2_w = &store_.add(prefix + ".pw2.w", width, cfg_.expand * width);
        b.pw2_b = &store_.add(prefix + ".pw2.b", 1, width);
        nn::init_normal(*b.dw_w, rng, 1.0 / std::sqrt(double(cfg_.dw_kernel)));
        nn::init_constant(*b.ln_g, 1.0);
        nn::init_normal(*b.pw1_w, rng, 1.0 / std::sqrt(double(width)));
        nn::init_normal(*b.pw2_w, rng, resid / std::sqrt(double(cfg_.expand * width)));
        return b;
    };

    p.in_w = &store_.add("enc.in.w", cfg_.initial_width, ch);
    p.in_b = &store_.add("enc.in.b", 1, cfg_.initial_width);
    nn::init_normal(*p.in_w, rng, 1.0 / std::sqrt(double(ch)));

    int width = cfg_.initial_width;
    for (int s = 0; s < cfg_.stages(); ++s) {
        std::vector<Plan::Block> blocks;
        for (int k = 0; k < cfg_.blocks_per_stage; ++k)
            blocks.push_back(make_block("enc.s" + std::to_string(s) + ".blk" + std::to_string(k),
                                        width));
        p.enc_blocks.push_back(std::move(blocks));
        const int out = cfg_.stage_widths[s];
        PT& dw = store_.add("enc.s" + std::to_string(s) + ".down.w", out, S * width);
        PT& db = store_.add("enc.s" + std::to_string(s) + ".down.b", 1, out);
        nn::init_normal(dw, rng, 1.0 / std::sqrt(double(S * width)));
        p.down_w.push_back(&dw);
        p.down_b.push_back(&db);
        width = out;
    }

    for (int s = 0; s < cfg_.stages(); ++s) {
        const int in_w = s == 0 ? cfg_.latent_dim() : cfg_.stage_widths[cfg_.stages() - 1 - s];
        const int out_w =
            s < cfg_.stages() - 1 ? cfg_.stage_widths[cfg_.stages() - 2 - s] : cfg_.initial_width;
        PT& uw = store_.add("dec.s" + std::to_string(s) + ".up.w", S * out_w, in_w);
        PT& ub = store_.add("dec.s" + std::to_string(s) + ".up.b", 1, S * out_w);
        nn::init_normal(uw, rng, 1.0 / std::sqrt(double(in_w)));
        p.up_w.push_back(&uw);
        p.up_b.push_back(&ub);
        std::vector<Plan::Block> blocks;
        for (int k = 0; k < cfg_.blocks_per_stage; ++k)
            blocks.push_back(make_block("dec.s" + std::to_string(s) + ".blk" + std::to_string(k),
                                        out_w));
        p.dec_blocks.push_back(std::move(blocks));
    }

    // The head gets a random init: a zero head is a flat plateau of the
    // log-mel objective (zero magnitude kills every gradient path through the
    // power spectrum), so a fresh codec must start off it to be trainable.
    // Zero embeddings still decode to exact silence because every bias in the
    // stack starts at zero.
    p.out_w = &store_.add("dec.out.w", ch, cfg_.initial_width);
    p.out_b = &store_.add("dec.out.b", 1, ch);
    nn::init_normal(*p.out_w, rng, 1.0 / std::sqrt(double(cfg_.initial_width)));

    const int W = cfg_.window, bins = W / 2 + 1;
    p.hann = dsp::hann_window(W);
    p.dft_cos.resize(size_t(bins) * W);
    p.dft_sin.resize(size_t(bins) * W);
    p.synth_re = Mat<float>(bins, W);
    p.synth_im = Mat<float>(bins, W);
    for (int k = 0; k < bins; ++k) {
        const bool half = k == 0 || k == W / 2; // DC/Nyquist carry no conjugate twin
        for (int n = 0; n < W; ++n) {
            const double a = 2.0 * kPi * double(k) * double(n) / W;
            p.dft_cos[size_t(k) * W + n] = std::cos(a);
            p.dft_sin[size_t(k) * W + n] = std::sin(a);
            p.synth_re.at(k, n) = float((half ? 1.0 : 2.0) * std::cos(a) / W);
            p.synth_im.at(k, n) = half ? 0.0f : float(-2.0 * std::sin(a) / W);
        }
    }

    // Squared-window overlap normalization. Once s >= window - hop every
    // overlapping frame exists; before that only frames with non-negative
    // index contribute, giving per-sample onset norms.
    const int edge = W - cfg_.hop;
    p.inv_norm_edge.resize(edge);
    for (int s = 0; s < edge; ++s) {
        double nrm = 0.0;
        for (int o = s % cfg_.hop; o <= s; o += cfg_.hop) nrm += p.hann[o] * p.hann[o];
        p.inv_norm_edge[s] = nrm > 0.0 ? float(1.0 / nrm) : 0.0f;
    }
    p.inv_norm_steady.resize(cfg_.hop);
    for (int r = 0; r < cfg_.hop; ++r) {
        double nrm = 0.0;
        for (int o = r; o < W; o += cfg_.hop) nrm += p.hann[o] * p.hann[o];
        p.inv_norm_steady[r] = nrm > 0.0 ? float(1.0 / nrm) : 0.0f;
    }
}

Codec::Codec(Codec&&) noexcept = default;
Codec& Codec::operator=(Codec&&) noexcept = default;
Codec::~Codec() = default;

Mat<float> Codec::analysis_features(const AudioBuffer& audio) const {
    require_valid(audio, "codec encode");
    if (audio.sample_rate != cfg_.sample_rate)
        raise(ErrorCode::RateMismatch,
              "codec encode: expected " + std::to_string(cfg_.sample_rate) + " Hz, got " +
                  std::to_string(audio.sample_rate));

    const Plan& p = *plan_;
    const int W = cfg_.window, bins = W / 2 + 1, hop = cfg_.hop;
    const int64_t len = int64_t(audio.size());
    const int unit = cfg_.compression();
    const int64_t padded = (len + unit - 1) / unit * unit;
    const int tf = int(padded / hop);

    // Right-aligned causal frames: frame t covers [(t+1)*hop - W, (t+1)*hop),
    // so no feature ever reads a sample at or beyond its own frame boundary.
    Mat<float> feat(tf, cfg_.channels());
    std::vector<double> buf(W);
    for (int t = 0; t < tf; ++t) {
        const int64_t start = int64_t(t + 1) * hop - W;
        for (int j = 0; j < W; ++j) {
            const int64_t s = start + j;
            buf[j] = s >= 0 && s < len ? double(audio.samples[size_t(s)]) * p.hann[j] : 0.0;
        }
        float* fr = feat.row(t);
        for (int k = 0; k < bins; ++k) {
            const double* ct = p.dft_cos.data() + size_t(k) * W;
            const double* st = p.dft_sin.data() + size_t(k) * W;
            double re = 0.0, im = 0.0;
            for (int j = 0; j < W; ++j) {
                re += buf[j] * ct[j];
                im -= buf[j] * st[j];
            }
            fr[k] = float(std::log1p(std::hypot(re, im)));
            fr[bins + k] = float(std::atan2(im, re));
        }
    }
    return feat;
}

LatentSequence Codec::encode(const AudioBuffer& audio) const {
    const Mat<float> feats = analysis_features(audio);
    LatentSequence out;
    out.frames = encode_plain(cfg_, *plan_, feats);
    out.frames_per_second = cfg_.frames_per_second();
    return out;
}

std::vector<rvq::RvqCode> Codec::quantize(const LatentSequence& latents,
                                          const rvq::CodebookSet& books) const {
    if (latents.count() == 0) raise(ErrorCode::EmptyInput, "quantize: no latent frames");
    if (latents.dim() != cfg_.latent_dim())
        raise(ErrorCode::ShapeMismatch, "quantize: latent dim " + std::to_string(latents.dim()) +
                                            " != config " + std::to_string(cfg_.latent_dim()));
    std::vector<rvq::RvqCode> codes;
    codes.reserve(size_t(latents.count()));
    for (int t = 0; t < latents.count(); ++t)
        codes.push_back(rvq::encode({latents.frames.row(t), size_t(latents.dim())}, books));
    return codes;
}

AudioBuffer Codec::decode(const std::vector<rvq::RvqCode>& codes,
                          const rvq::CodebookSet& books) const {
    if (codes.empty()) raise(ErrorCode::EmptyInput, "decode: no codes");
    Mat<float> lat(int(codes.size()), books.dim);
    for (size_t i = 0; i < codes.size(); ++i) {
        const std::vector<float> v = rvq::decode(codes[i], books);
        std::copy(v.begin(), v.end(), lat.row(int(i)));
    }
    LatentSequence seq;
    seq.frames = std::move(lat);
    seq.frames_per_second = cfg_.frames_per_second();
    return decode_latents(seq);
}

AudioBuffer Codec::decode_latents(const LatentSequence& latents) const {
    if (latents.count() == 0) raise(ErrorCode::EmptyInput, "decode: no latent frames");
    if (latents.dim() != cfg_.latent_dim())
        raise(ErrorCode::ShapeMismatch, "decode: latent dim " + std::to_string(latents.dim()) +
                                            " != config " + std::to_string(cfg_.latent_dim()));
    const Mat<float> frames = decoder_frames(cfg_, *plan_, latents.frames, nullptr, nullptr);
    std::vector<float> tail(size_t(cfg_.window - cfg_.hop), 0.0f);
    AudioBuffer out;
    out.sample_rate = cfg_.sample_rate;
    out.samples = ola_chunk(cfg_, *plan_, frames, 0, tail);
    return out;
}

void Codec::save(const std::string& path) const {
    ckpt::Checkpoint ck;
    ck.meta["kind"] = "codec";
    ck.meta["sample_rate"] = std::to_string(cfg_.sample_rate);
    ck.meta["window"] = std::to_string(cfg_.window);
    ck.meta["hop"] = std::to_string(cfg_.hop);
    ck.meta["initial_width"] = std::to_string(cfg_.initial_width);
    std::string widths;
    for (size_t i = 0; i < cfg_.stage_widths.size(); ++i) {
        if (i) widths += ',';
        widths += std::to_string(cfg_.stage_widths[i]);
    }
    ck.meta["stage_widths"] = widths;
    ck.meta["blocks_per_stage"] = std::to_string(cfg_.blocks_per_stage);
    ck.meta["stage_stride"] = std::to_string(cfg_.stage_stride);
    ck.meta["dw_kernel"] = std::to_string(cfg_.dw_kernel);
    ck.meta["expand"] = std::to_string(cfg_.expand);
    ck.meta["rvq_levels"] = std::to_string(cfg_.rvq_levels);
    ck.meta["rvq_entries"] = std::to_string(cfg_.rvq_entries);
    store_.to_checkpoint(ck);
    ck.save(path);
}

namespace {

int meta_int(const ckpt::Checkpoint& ck, const std::string& key) {
    auto it = ck.meta.find(key);
    if (it == ck.meta.end())
        raise(ErrorCode::ConfigMismatch, "checkpoint: missing meta '" + key + "'");
    return std::stoi(it->second);
}

} // namespace

Codec Codec::load(const std::string& path) {
    const ckpt::Checkpoint ck = ckpt::Checkpoint::load(path);
    ck.require_meta("kind", "codec");
    CodecConfig cfg;
    cfg.sample_rate = meta_int(ck, "sample_rate");
    cfg.window = meta_int(ck, "window");
    cfg.hop = meta_int(ck, "hop");
    cfg.initial_width = meta_int(ck, "initial_width");
    cfg.blocks_per_stage = meta_int(ck, "blocks_per_stage");
    cfg.stage_stride = meta_int(ck, "stage_stride");
    cfg.dw_kernel = meta_int(ck, "dw_kernel");
    cfg.expand = meta_int(ck, "expand");
    cfg.rvq_levels = meta_int(ck, "rvq_levels");
    cfg.rvq_entries = meta_int(ck, "rvq_entries");
    auto it = ck.meta.find("stage_widths");
    if (it == ck.meta.end())
        raise(ErrorCode::ConfigMismatch, "checkpoint: missing meta 'stage_widths'");
    cfg.stage_widths.clear();
    std::stringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ',')) cfg.stage_widths.push_back(std::stoi(tok));

    Codec codec(cfg, 0);
    codec.store_.from_checkpoint(ck);
    return codec;
}

StreamState::StreamState(const Codec& codec, const rvq::CodebookSet& books)
    : codec_(&codec), books_(&books) {
    if (books.dim != codec.cfg_.latent_dim())
        raise(ErrorCode::ConfigMismatch,
              "stream: codebook dim " + std::to_string(books.dim) + " != codec latent dim " +
                  std::to_string(codec.cfg_.latent_dim()));
    const CodecConfig& cfg = codec.cfg_;
    for (int s = 0; s < cfg.stages(); ++s) {
        const int w =
            s < cfg.stages() - 1 ? cfg.stage_widths[cfg.stages() - 2 - s] : cfg.initial_width;
        for (int k = 0; k < cfg.blocks_per_stage; ++k) {
            history_.emplace_back(cfg.dw_kernel - 1, w);
            history_valid_.push_back(0);
        }
    }
    ola_tail_.assign(size_t(cfg.window - cfg.hop), 0.0f);
}

std::vector<float> StreamState::push(const rvq::RvqCode& code) {
    const CodecConfig& cfg = codec_->cfg_;
    const std::vector<float> latent = rvq::decode(code, *books_);
    Mat<float> lat(1, int(latent.size()));
    std::copy(latent.begin(), latent.end(), lat.row(0));

    const Mat<float> frames =
        decoder_frames(cfg, *codec_->plan_, lat, &history_, &history_valid_);
    std::vector<float> out = ola_chunk(cfg, *codec_->plan_, frames, sample_pos_, ola_tail_);
    sample_pos_ += int64_t(out.size());
    ++emitted_;
    return out;
}

double mel_recon_loss(const AudioBuffer& original, const AudioBuffer& reconstructed) {
    require_valid(original, "mel_recon_loss");
    require_valid(reconstructed, "mel_recon_loss");
    if (original.sample_rate != reconstructed.sample_rate)
        raise(ErrorCode::RateMismatch, "mel_recon_loss: sample rates differ");
    if (original.size() != reconstructed.size())
        raise(ErrorCode::ShapeMismatch, "mel_recon_loss: lengths differ");
    const double wsec = 1024.0 / original.sample_rate;
    const double hsec = 256.0 / original.sample_rate;
    const dsp::MelSpectrogram a = dsp::mel_spectrogram(original, 128, wsec, hsec);
    const dsp::MelSpectrogram b = dsp::mel_spectrogram(reconstructed, 128, wsec, hsec);
    double acc = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) acc += std::abs(double(a.data[i]) - b.data[i]);
    return acc / double(a.data.size());
}

TrainResult train(Codec& codec, const std::vector<AudioBuffer>& clips, const TrainOptions& opts) {
    if (clips.empty()) raise(ErrorCode::EmptyInput, "train: no clips");
    if (opts.steps < 1) raise(ErrorCode::InvalidConfig, "train: steps must be >= 1");
    if (opts.use_quantizer && opts.books == nullptr)
        raise(ErrorCode::InvalidConfig, "train: quantizer hook needs codebooks");

    const int unit = codec.config().compression();
    std::vector<Mat<float>> feats, targets;
    std::vector<MelPlan> plans;
    std::vector<size_t> plan_of;
    std::vector<size_t> plan_len;
    for (const AudioBuffer& clip : clips) {
        const AudioBuffer padded = padded_to_units(clip, unit);
        size_t pi = 0;
        for (; pi < plan_len.size(); ++pi)
            if (plan_len[pi] == padded.size()) break;
        if (pi == plan_len.size()) {
            plan_len.push_back(padded.size());
            plans.push_back(make_mel_plan(int64_t(padded.size()), padded.sample_rate));
        }
        plan_of.push_back(pi);
        feats.push_back(codec.analysis_features(clip));
        targets.push_back(target_logmel(padded, plans[pi]));
    }

    TrainResult res;
    res.loss_history.reserve(size_t(opts.steps));
    for (int step = 0; step < opts.steps; ++step) {
        const size_t i = size_t(step) % clips.size();
        res.loss_history.push_back(objective_step(*codec.plan_, codec.store_, codec.config(),
                                                  feats[i], plans[plan_of[i]], targets[i], &opts,
                                                  step));
    }
    return res;
}

double training_loss(Codec& codec, const AudioBuffer& clip) {
    const AudioBuffer padded = padded_to_units(clip, codec.config().compression());
    const MelPlan mp = make_mel_plan(int64_t(padded.size()), padded.sample_rate);
    const Mat<float> feats = codec.analysis_features(clip);
    const Mat<float> target = target_logmel(padded, mp);
    return objective_step(*codec.plan_, codec.store_, codec.config(), feats, mp, target, nullptr,
                          0);
}

rvq::CodebookSet fit_codebooks(const Codec& codec, const std::vector<AudioBuffer>& clips,
                               uint64_t seed) {
    if (clips.empty()) raise(ErrorCode::EmptyInput, "fit_codebooks: no clips");
    const int dim = codec.config().latent_dim();
    std::vector<float> samples;
    int count = 0;
    for (const AudioBuffer& clip : clips) {
        const LatentSequence lat = codec.encode(clip);
        samples.insert(samples.end(), lat.frames.v.begin(), lat.frames.v.end());
        count += lat.count();
    }
    rvq::TrainOptions opts;
    opts.seed = seed;
    return rvq::train(samples, count, codec.config().rvq_levels, codec.config().rvq_entries, dim,
                      opts);
}

void save_codes(const std::string& path, const std::vector<rvq::RvqCode>& codes, int sample_rate,
                int levels, int entries) {
    if (levels < 1 || levels > 65535)
        raise(ErrorCode::InvalidConfig, "save_codes: levels must be in [1, 65535]");
    if (entries < 1 || entries > 65536)
        raise(ErrorCode::InvalidConfig, "save_codes: entries must be in [1, 65536]");
    for (const rvq::RvqCode& c : codes) {
        if (c.levels() != levels)
            raise(ErrorCode::ShapeMismatch, "save_codes: code level count mismatch");
        for (uint16_t idx : c.indices)
            if (int(idx) >= entries)
                raise(ErrorCode::CorruptCode, "save_codes: index out of range");
    }
    io::Writer w(path);
    w.magic("AFRQ");
    w.u16(1);
    w.u32(uint32_t(sample_rate));
    w.u16(uint16_t(levels));
    w.u32(uint32_t(entries));
    w.u64(codes.size());
    for (const rvq::RvqCode& c : codes)
        for (uint16_t idx : c.indices) w.u16(idx);
    w.close();
}

CodeFile load_codes(const std::string& path) {
    io::Reader r(path);
    r.expect_magic("AFRQ");
    const uint16_t version = r.u16();
    if (version != 1)
        raise(ErrorCode::FormatError, "code file: unsupported version " + std::to_string(version));
    CodeFile out;
    out.sample_rate = int(r.u32());
    out.levels = int(r.u16());
    out.entries = int(r.u32());
    if (out.levels < 1) raise(ErrorCode::FormatError, "code file: levels must be >= 1");
    if (out.entries < 1 || out.entries > 65536)
        raise(ErrorCode::FormatError, "code file: entries out of range");
    const uint64_t count = r.u64();
    if (count > (uint64_t(1) << 32))
        raise(ErrorCode::FormatError, "code file: implausible frame count");
    out.codes.resize(size_t(count));
    for (uint64_t i = 0; i < count; ++i) {
        rvq::RvqCode& c = out.codes[size_t(i)];
        c.indices.resize(size_t(out.levels));
        for (int l = 0; l < out.levels; ++l) {
            const uint16_t idx = r.u16();
            if (int(idx) >= out.entries)
                raise(ErrorCode::FormatError, "code file: index out of range");
            c.indices[l] = idx;
        }
    }
    return out;
}

} // namespace afs::codec
