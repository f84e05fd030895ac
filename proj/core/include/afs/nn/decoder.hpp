#pragma once

#include "afs/nn/graph.hpp"
#include "afs/nn/params.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace afs::nn {

struct DecoderConfig {
    int layers = 4;
    int heads = 4;
    int width = 128;
    int ffw = 512;
    int max_seq = 2048;
    double ln_eps = 1e-5;

    void validate() const {
        if (layers < 1 || heads < 1 || width < 1 || ffw < 1 || max_seq < 1)
            raise(ErrorCode::InvalidConfig, "decoder config: all sizes must be positive");
        if (width % heads != 0)
            raise(ErrorCode::InvalidConfig, "decoder config: width not divisible by heads");
        if ((width / heads) % 2 != 0)
            raise(ErrorCode::InvalidConfig, "decoder config: head dim must be even for rotary");
    }
};

template <typename T>
struct DecoderParams {
    struct Layer {
        ParamTensor<T>*ln1_g, *ln1_b, *wq, *bq, *wk, *bk, *wv, *bv, *wo, *bo;
        ParamTensor<T>*ln2_g, *ln2_b, *w1, *b1, *w2, *b2;
    };
    std::vector<Layer> layers;
    ParamTensor<T>*lnf_g = nullptr, *lnf_b = nullptr;
};

template <typename T>
DecoderParams<T> make_decoder_params(ParamStore<T>& store, const DecoderConfig& cfg,
                                     const std::string& prefix = "dec.") {
    cfg.validate();
    DecoderParams<T> p;
    const int w = cfg.width;
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string lp = prefix + "l" + std::to_string(l) + ".";
        typename DecoderParams<T>::Layer layer;
        layer.ln1_g = &store.add(lp + "ln1.g", 1, w);
        layer.ln1_b = &store.add(lp + "ln1.b", 1, w);
        layer.wq = &store.add(lp + "wq", w, w);
        layer.bq = &store.add(lp + "bq", 1, w);
        layer.wk = &store.add(lp + "wk", w, w);
        layer.bk = &store.add(lp + "bk", 1, w);
        layer.wv = &store.add(lp + "wv", w, w);
        layer.bv = &store.add(lp + "bv", 1, w);
        layer.wo = &store.add(lp + "wo", w, w);
        layer.bo = &store.add(lp + "bo", 1, w);
        layer.ln2_g = &store.add(lp + "ln2.g", 1, w);
        layer.ln2_b = &store.add(lp + "ln2.b", 1, w);
        layer.w1 = &store.add(lp + "w1", cfg.ffw, w);
        layer.b1 = &store.add(lp + "b1", 1, cfg.ffw);
        layer.w2 = &store.add(lp + "w2", w, cfg.ffw);
        layer.b2 = &store.add(lp + "b2", 1, w);
        p.layers.push_back(layer);
    }
    p.lnf_g = &store.add(prefix + "lnf.g", 1, w);
    p.lnf_b = &store.add(prefix + "lnf.b", 1, w);
    return p;
}

template <typename T>
void init_decoder(DecoderParams<T>& p, const DecoderConfig& cfg, uint64_t seed) {
    std::mt19937_64 rng(seed);
    const double attn_sd = 1.0 / std::sqrt(double(cfg.width));
    const double ffw_sd = 1.0 / std::sqrt(double(cfg.ffw));
    for (auto& layer : p.layers) {
        init_constant(*layer.ln1_g, 1.0);
        init_normal(*layer.wq, rng, attn_sd);
        init_normal(*layer.wk, rng, attn_sd);
        init_normal(*layer.wv, rng, attn_sd);
        init_normal(*layer.wo, rng, attn_sd / std::sqrt(2.0 * cfg.layers));
        init_constant(*layer.ln2_g, 1.0);
        init_normal(*layer.w1, rng, attn_sd);
        init_normal(*layer.w2, rng, ffw_sd / std::sqrt(2.0 * cfg.layers));
    }
    init_constant(*p.lnf_g, 1.0);
}

// Graph-side refs for one parameter tensor.
template <typename T>
typename Graph<T>::Ref pref(Graph<T>& g, ParamTensor<T>* p) {
    return g.param(p->value, &p->grad);
}

// Full-sequence causal decoder forward on the tape. x: T_seq x width
// (already embedded). Returns the final-layernormed hidden sequence.
template <typename T>
typename Graph<T>::Ref decoder_forward(Graph<T>& g, typename Graph<T>::Ref x,
                                       DecoderParams<T>& p, const DecoderConfig& cfg,
                                       int pos0 = 0) {
    using Ref = typename Graph<T>::Ref;
    cfg.validate();
    const int seq = g.val(x).rows;
    if (seq > cfg.max_seq)
        raise(ErrorCode::SequenceTooLong, "decoder: sequence of " + std::to_string(seq) +
                                              " exceeds max " + std::to_string(cfg.max_seq));
    if (g.val(x).cols != cfg.width)
        raise(ErrorCode::ShapeMismatch, "decoder: input width mismatch");

    const int hd = cfg.width / cfg.heads;
    Ref h = x;
    for (auto& layer : p.layers) {
        Ref a = g.layernorm(h, pref(g, layer.ln1_g), pref(g, layer.ln1_b), T(cfg.ln_eps));
        Ref q = g.affine(a, pref(g, layer.wq), pref(g, layer.bq));
        Ref k = g.affine(a, pref(g, layer.wk), pref(g, layer.bk));
        Ref v = g.affine(a, pref(g, layer.wv), pref(g, layer.bv));
        std::vector<Ref> heads;
        for (int hh = 0; hh < cfg.heads; ++hh) {
            Ref qh = g.rope(g.slice_cols(q, hh * hd, (hh + 1) * hd), pos0);
            Ref kh = g.rope(g.slice_cols(k, hh * hd, (hh + 1) * hd), pos0);
            Ref vh = g.slice_cols(v, hh * hd, (hh + 1) * hd);
            Ref scores = g.scale(g.matmul_nt(qh, kh), T(1) / T(std::sqrt(double(hd))));
            Ref probs = g.causal_softmax(scores, 0);
            heads.push_back(g.matmul(probs, vh));
        }
        Ref attn = g.concat_cols(std::span<const Ref>(heads.data(), heads.size()));
        h = g.add(h, g.affine(attn, pref(g, layer.wo), pref(g, layer.bo)));
        Ref a2 = g.layernorm(h, pref(g, layer.ln2_g), pref(g, layer.ln2_b), T(cfg.ln_eps));
        Ref f1 = g.gelu(g.affine(a2, pref(g, layer.w1), pref(g, layer.b1)));
        h = g.add(h, g.affine(f1, pref(g, layer.w2), pref(g, layer.b2)));
    }
    return g.layernorm(h, pref(g, p.lnf_g), pref(g, p.lnf_b), T(cfg.ln_eps));
}

// ---------------------------------------------------------------------------
// Mixture-of-Gaussians head: 3-layer MLP over [hidden ; committed-embedding],
// emitting mixture logits, means, and diagonal log-variances.

struct MogConfig {
    int mixtures = 4;   // M
    int dim = 8;        // D, the cumulative-embedding dimension
    int hidden = 128;   // MLP hidden width
    int in_width = 0;   // decoder width + dim
    double logvar_floor = std::log(1e-4);

    int out_width() const { return mixtures + 2 * mixtures * dim; }
    void validate() const {
        if (mixtures < 1 || dim < 1 || hidden < 1 || in_width < 1)
            raise(ErrorCode::InvalidConfig, "mog config: all sizes must be positive");
    }
};

template <typename T>
struct MogHeadParams {
    ParamTensor<T>*w1, *b1, *w2, *b2, *w3, *b3;
};

template <typename T>
MogHeadParams<T> make_mog_head(ParamStore<T>& store, const MogConfig& cfg,
                               const std::string& prefix = "head.") {
    cfg.validate();
    MogHeadParams<T> p;
    p.w1 = &store.add(prefix + "w1", cfg.hidden, cfg.in_width);
    p.b1 = &store.add(prefix + "b1", 1, cfg.hidden);
    p.w2 = &store.add(prefix + "w2", cfg.hidden, cfg.hidden);
    p.b2 = &store.add(prefix + "b2", 1, cfg.hidden);
    p.w3 = &store.add(prefix + "w3", cfg.out_width(), cfg.hidden);
    p.b3 = &store.add(prefix + "b3", 1, cfg.out_width());
    return p;
}

template <typename T>
void init_mog_head(MogHeadParams<T>& p, const MogConfig& cfg, uint64_t seed) {
    std::mt19937_64 rng(seed);
    init_normal(*p.w1, rng, 1.0 / std::sqrt(double(cfg.in_width)));
    init_normal(*p.w2, rng, 1.0 / std::sqrt(double(cfg.hidden)));
    init_normal(*p.w3, rng, 0.01 / std::sqrt(double(cfg.hidden)));
}

template <typename T>
struct MogRefs {
    typename Graph<T>::Ref logits;  // N x M
    typename Graph<T>::Ref means;   // N x (M*D)
    typename Graph<T>::Ref logvars; // N x (M*D), already floored
};

template <typename T>
MogRefs<T> mog_head_forward(Graph<T>& g, typename Graph<T>::Ref in, MogHeadParams<T>& p,
                            const MogConfig& cfg) {
    using Ref = typename Graph<T>::Ref;
    if (g.val(in).cols != cfg.in_width)
        raise(ErrorCode::ShapeMismatch, "mog head: input width " +
                                            std::to_string(g.val(in).cols) + ", expected " +
                                            std::to_string(cfg.in_width));
    Ref h1 = g.gelu(g.affine(in, pref(g, p.w1), pref(g, p.b1)));
    Ref h2 = g.gelu(g.affine(h1, pref(g, p.w2), pref(g, p.b2)));
    Ref out = g.affine(h2, pref(g, p.w3), pref(g, p.b3));
    const int M = cfg.mixtures, D = cfg.dim;
    MogRefs<T> refs;
    refs.logits = g.slice_cols(out, 0, M);
    refs.means = g.slice_cols(out, M, M + M * D);
    refs.logvars = g.max_const(g.slice_cols(out, M + M * D, M + 2 * M * D),
                               T(cfg.logvar_floor));
    return refs;
}

// Per-position negative log-likelihood, N x 1: -log sum_m w_m N(t; mu_m, diag).
template <typename T>
typename Graph<T>::Ref mog_nll_graph(Graph<T>& g, const MogRefs<T>& mog,
                                     typename Graph<T>::Ref targets, const MogConfig& cfg) {
    using Ref = typename Graph<T>::Ref;
    const int N = g.val(mog.logits).rows;
    const int M = cfg.mixtures, D = cfg.dim;
    if (g.val(targets).rows != N || g.val(targets).cols != D)
        raise(ErrorCode::ShapeMismatch, "mog nll: target shape mismatch");
    for (Ref r : {mog.logits, mog.means, mog.logvars})
        for (const T& x : g.val(r).v)
            if (!std::isfinite(double(x)))
                raise(ErrorCode::InvalidSignal, "mog nll: non-finite mixture parameters");

    Ref logw = g.log_softmax_rows(mog.logits);             // N x M
    Ref mu = g.reshape(mog.means, N * M, D);               // (N*M) x D
    Ref lv = g.reshape(mog.logvars, N * M, D);             // (N*M) x D
    Ref t = g.repeat_rows(targets, M);                     // (N*M) x D
    Ref diff = g.sub(t, mu);
    Ref quad = g.mul(g.mul(diff, diff), g.exp(g.neg(lv))); // (t-mu)^2 / var
    Ref s = g.rowsum(g.add(lv, quad));                     // (N*M) x 1
    Ref logp = g.add_const(g.scale(s, T(-0.5)),
                           T(-0.5 * D * std::log(2.0 * std::numbers::pi)));
    Ref comp = g.add(logw, g.reshape(logp, N, M));         // N x M
    return g.neg(g.logsumexp_rows(comp));                  // N x 1
}

// ---------------------------------------------------------------------------
// Plain (non-tape) float paths for inference.

struct MogParams {
    std::vector<float> logits;  // M
    std::vector<float> means;   // M*D row-major
    std::vector<float> logvars; // M*D, floored
};

namespace detail {

template <typename T>
void affine_row(std::span<const T> x, const Mat<T>& w, const Mat<T>& b, std::span<T> y) {
    for (int o = 0; o < w.rows; ++o) {
        T acc = b.at(0, o);
        const T* wr = w.row(o);
        for (int i = 0; i < w.cols; ++i) acc += wr[i] * x[i];
        y[o] = acc;
    }
}

template <typename T>
void layernorm_row(std::span<T> x, const Mat<T>& gain, const Mat<T>& bias, T eps) {
    const int C = int(x.size());
    T mu = T(0);
    for (T v : x) mu += v;
    mu /= T(C);
    T var = T(0);
    for (T v : x) {
        const T d = v - mu;
        var += d * d;
    }
    var /= T(C);
    const T rstd = T(1) / std::sqrt(var + eps);
    for (int c = 0; c < C; ++c) x[c] = gain.at(0, c) * (x[c] - mu) * rstd + bias.at(0, c);
}

inline void rope_row(std::span<float> x, int pos, double base = 10000.0) {
    const int pairs = int(x.size()) / 2;
    for (int i = 0; i < pairs; ++i) {
        const double theta = double(pos) * std::pow(base, -2.0 * i / double(x.size()));
        const float c = float(std::cos(theta)), s = float(std::sin(theta));
        const float x0 = x[2 * i], x1 = x[2 * i + 1];
        x[2 * i] = x0 * c - x1 * s;
        x[2 * i + 1] = x0 * s + x1 * c;
    }
}

} // namespace detail

// Single-position MoG head evaluation; in = [hidden ; committed embedding].
inline MogParams mog_head_eval(std::span<const float> in, const MogHeadParams<float>& p,
                               const MogConfig& cfg) {
    if (int(in.size()) != cfg.in_width)
        raise(ErrorCode::ShapeMismatch, "mog head: input width mismatch");
    std::vector<float> h1(cfg.hidden), h2(cfg.hidden), out(cfg.out_width());
    detail::affine_row<float>(in, p.w1->value, p.b1->value, h1);
    for (float& v : h1) v = float(detail::gelu_fwd(double(v)));
    detail::affine_row<float>(h1, p.w2->value, p.b2->value, h2);
    for (float& v : h2) v = float(detail::gelu_fwd(double(v)));
    detail::affine_row<float>(h2, p.w3->value, p.b3->value, out);

    const int M = cfg.mixtures, D = cfg.dim;
    MogParams mp;
    mp.logits.assign(out.begin(), out.begin() + M);
    mp.means.assign(out.begin() + M, out.begin() + M + M * D);
    mp.logvars.assign(out.begin() + M + M * D, out.end());
    for (float& lv : mp.logvars) lv = std::max(lv, float(cfg.logvar_floor));
    return mp;
}

// Plain NLL of one position (used by tests as the graph oracle).
inline double mog_nll(const MogParams& mp, std::span<const float> target, const MogConfig& cfg) {
    const int M = cfg.mixtures, D = cfg.dim;
    if (int(target.size()) != D) raise(ErrorCode::ShapeMismatch, "mog nll: target dim mismatch");
    for (float v : mp.logits)
        if (!std::isfinite(v)) raise(ErrorCode::InvalidSignal, "mog nll: non-finite logits");
    for (float v : mp.means)
        if (!std::isfinite(v)) raise(ErrorCode::InvalidSignal, "mog nll: non-finite means");
    for (float v : mp.logvars)
        if (!std::isfinite(v)) raise(ErrorCode::InvalidSignal, "mog nll: non-finite variances");

    double mx = -std::numeric_limits<double>::infinity();
    std::vector<double> comp(M);
    double lse_w = 0.0;
    {
        double wmax = mp.logits[0];
        for (int m = 1; m < M; ++m) wmax = std::max(wmax, double(mp.logits[m]));
        double acc = 0.0;
        for (int m = 0; m < M; ++m) acc += std::exp(double(mp.logits[m]) - wmax);
        lse_w = wmax + std::log(acc);
    }
    for (int m = 0; m < M; ++m) {
        double s = 0.0;
        for (int d = 0; d < D; ++d) {
            const double lv = mp.logvars[size_t(m) * D + d];
            const double diff = double(target[d]) - double(mp.means[size_t(m) * D + d]);
            s += lv + diff * diff * std::exp(-lv);
        }
        comp[m] = (double(mp.logits[m]) - lse_w) - 0.5 * s -
                  0.5 * D * std::log(2.0 * std::numbers::pi);
        mx = std::max(mx, comp[m]);
    }
    double acc = 0.0;
    for (int m = 0; m < M; ++m) acc += std::exp(comp[m] - mx);
    return -(mx + std::log(acc));
}

// Draw a cumulative embedding. temperature 0 selects the argmax mixture's
// mean; otherwise the mixture is drawn from softmax(logits/t) and the
// Gaussian noise is scaled by t.
inline std::vector<float> mog_sample(const MogParams& mp, double temperature,
                                     std::mt19937_64& rng, const MogConfig& cfg) {
    const int M = cfg.mixtures, D = cfg.dim;
    int m = 0;
    if (temperature <= 0.0) {
        for (int i = 1; i < M; ++i)
            if (mp.logits[i] > mp.logits[m]) m = i;
    } else {
        std::vector<double> probs(M);
        double mx = double(mp.logits[0]) / temperature;
        for (int i = 1; i < M; ++i) mx = std::max(mx, double(mp.logits[i]) / temperature);
        double acc = 0.0;
        for (int i = 0; i < M; ++i) {
            probs[i] = std::exp(double(mp.logits[i]) / temperature - mx);
            acc += probs[i];
        }
        std::uniform_real_distribution<double> u(0.0, acc);
        double target = u(rng), run = 0.0;
        m = M - 1;
        for (int i = 0; i < M; ++i) {
            run += probs[i];
            if (run >= target) {
                m = i;
                break;
            }
        }
    }
    std::vector<float> out(D);
    if (temperature <= 0.0) {
        for (int d = 0; d < D; ++d) out[d] = mp.means[size_t(m) * D + d];
        return out;
    }
    std::normal_distribution<double> n(0.0, 1.0);
    for (int d = 0; d < D; ++d) {
        const double sigma = std::exp(0.5 * double(mp.logvars[size_t(m) * D + d]));
        out[d] = float(double(mp.means[size_t(m) * D + d]) + temperature * sigma * n(rng));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Incremental decoder with per-layer KV caches for token-by-token inference.
// Matches decoder_forward on the same parameters to float precision.

class InferenceDecoder {
  public:
    InferenceDecoder(const DecoderConfig& cfg, const DecoderParams<float>& p)
        : cfg_(cfg), p_(p) {
        cfg_.validate();
        kcache_.resize(cfg.layers);
        vcache_.resize(cfg.layers);
    }

    void reset() {
        for (auto& c : kcache_) c.clear();
        for (auto& c : vcache_) c.clear();
        pos_ = 0;
    }

    int position() const { return pos_; }

    // Feed one embedded token (width floats); returns the hidden state.
    std::vector<float> step(std::span<const float> x) {
        if (int(x.size()) != cfg_.width)
            raise(ErrorCode::ShapeMismatch, "inference decoder: input width mismatch");
        if (pos_ >= cfg_.max_seq)
            raise(ErrorCode::SequenceTooLong, "inference decoder: context full at " +
                                                  std::to_string(cfg_.max_seq));
        const int W = cfg_.width, hd = W / cfg_.heads;
        std::vector<float> h(x.begin(), x.end());
        std::vector<float> a(W), q(W), k(W), v(W), attn(W), o(W), f1(cfg_.ffw), f2(W);
        for (int l = 0; l < cfg_.layers; ++l) {
            const auto& lp = p_.layers[l];
            a = h;
            detail::layernorm_row<float>(a, lp.ln1_g->value, lp.ln1_b->value,
                                         float(cfg_.ln_eps));
            detail::affine_row<float>(a, lp.wq->value, lp.bq->value, q);
            detail::affine_row<float>(a, lp.wk->value, lp.bk->value, k);
            detail::affine_row<float>(a, lp.wv->value, lp.bv->value, v);
            for (int hh = 0; hh < cfg_.heads; ++hh) {
                detail::rope_row(std::span<float>(q.data() + hh * hd, hd), pos_);
                detail::rope_row(std::span<float>(k.data() + hh * hd, hd), pos_);
            }
            kcache_[l].insert(kcache_[l].end(), k.begin(), k.end());
            vcache_[l].insert(vcache_[l].end(), v.begin(), v.end());
            const int n_keys = pos_ + 1;
            const float inv_sqrt = 1.0f / float(std::sqrt(double(hd)));
            std::vector<float> scores(n_keys);
            for (int hh = 0; hh < cfg_.heads; ++hh) {
                const float* qh = q.data() + hh * hd;
                for (int t = 0; t < n_keys; ++t) {
                    const float* kh = kcache_[l].data() + size_t(t) * W + hh * hd;
                    float acc = 0.0f;
                    for (int i = 0; i < hd; ++i) acc += qh[i] * kh[i];
                    scores[t] = acc * inv_sqrt;
                }
                float mx = scores[0];
                for (int t = 1; t < n_keys; ++t) mx = std::max(mx, scores[t]);
                float z = 0.0f;
                for (int t = 0; t < n_keys; ++t) {
                    scores[t] = std::exp(scores[t] - mx);
                    z += scores[t];
                }
                float* oh = attn.data() + hh * hd;
                std::fill(oh, oh + hd, 0.0f);
                for (int t = 0; t < n_keys; ++t) {
                    const float p = scores[t] / z;
                    const float* vh = vcache_[l].data() + size_t(t) * W + hh * hd;
                    for (int i = 0; i < hd; ++i) oh[i] += p * vh[i];
                }
            }
            detail::affine_row<float>(attn, lp.wo->value, lp.bo->value, o);
            for (int i = 0; i < W; ++i) h[i] += o[i];
            a = h;
            detail::layernorm_row<float>(a, lp.ln2_g->value, lp.ln2_b->value,
                                         float(cfg_.ln_eps));
            detail::affine_row<float>(a, lp.w1->value, lp.b1->value, f1);
            for (float& vv : f1) vv = float(detail::gelu_fwd(double(vv)));
            detail::affine_row<float>(f1, lp.w2->value, lp.b2->value, f2);
            for (int i = 0; i < W; ++i) h[i] += f2[i];
        }
        detail::layernorm_row<float>(h, p_.lnf_g->value, p_.lnf_b->value, float(cfg_.ln_eps));
        ++pos_;
        return h;
    }

  private:
    DecoderConfig cfg_;
    const DecoderParams<float>& p_;
    std::vector<std::vector<float>> kcache_, vcache_;
    int pos_ = 0;
};

} // namespace afs::nn
