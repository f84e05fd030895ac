#include "afs/tts.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace afs::tts {

namespace {

using nn::Mat;
using GraphF = nn::Graph<float>;
using Ref = GraphF::Ref;
using PT = nn::ParamTensor<float>;

} // namespace

struct TtsModel::Plan {
    nn::DecoderParams<float> dec;
    nn::MogHeadParams<float> head;
    PT *text_emb = nullptr; // vocab x width
    PT *audio_w = nullptr;  // width x D
    PT *audio_b = nullptr;  // 1 x width
};

std::vector<int> tokenize(const std::string& text) {
    std::vector<int> out;
    out.reserve(text.size());
    for (unsigned char c : text) out.push_back(int(c));
    return out;
}

std::string detokenize(std::span<const int> tokens) {
    std::string out;
    out.reserve(tokens.size());
    for (int t : tokens) {
        if (t < 0 || t >= kVocab)
            raise(ErrorCode::CorruptCode, "detokenize: token " + std::to_string(t) +
                                              " outside vocabulary");
        if (t < 256) out.push_back(char(static_cast<unsigned char>(t)));
    }
    return out;
}

std::vector<int> unmask_group_starts(int levels, int steps) {
    if (levels < 1) raise(ErrorCode::InvalidConfig, "unmask: levels must be >= 1");
    if (steps < 1) raise(ErrorCode::InvalidConfig, "unmask: steps must be >= 1");
    const int base = levels / steps, rem = levels % steps;
    std::vector<int> starts(size_t(steps), 0);
    int at = 0;
    for (int s = 0; s < steps; ++s) {
        starts[size_t(s)] = at;
        at += base + (s < rem ? 1 : 0); // larger groups on the coarse side
    }
    return starts;
}

nn::MogConfig TtsConfig::mog() const {
    nn::MogConfig m;
    m.mixtures = mixtures;
    m.dim = latent_dim;
    m.hidden = mog_hidden;
    m.in_width = decoder.width + latent_dim;
    return m;
}

void TtsConfig::validate() const {
    decoder.validate();
    if (vocab < 2) raise(ErrorCode::InvalidConfig, "tts: vocab must be >= 2");
    if (latent_dim < 1) raise(ErrorCode::InvalidConfig, "tts: latent_dim must be >= 1");
    if (rvq_levels < 1) raise(ErrorCode::InvalidConfig, "tts: rvq_levels must be >= 1");
    if (rvq_entries < 2 || rvq_entries > 65536)
        raise(ErrorCode::InvalidConfig, "tts: rvq_entries must be in [2, 65536]");
    if (unmask_steps < 1 || unmask_steps > rvq_levels)
        raise(ErrorCode::InvalidConfig, "tts: unmask_steps must be in [1, rvq_levels]");
    mog().validate();
}

TtsConfig toy_tts_config() {
    TtsConfig cfg;
    cfg.decoder.layers = 2;
    cfg.decoder.heads = 4;
    cfg.decoder.width = 64;
    cfg.decoder.ffw = 256;
    cfg.decoder.max_seq = 1024;
    cfg.latent_dim = 24;
    cfg.rvq_levels = 8;
    cfg.rvq_entries = 64;
    cfg.mixtures = 4;
    cfg.mog_hidden = 64;
    return cfg;
}

TtsModel::TtsModel(const TtsConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    plan_ = std::make_unique<Plan>();
    Plan& p = *plan_;
    p.dec = nn::make_decoder_params<float>(store_, cfg_.decoder);
    nn::init_decoder(p.dec, cfg_.decoder, seed);
    p.head = nn::make_mog_head<float>(store_, cfg_.mog());
    nn::init_mog_head(p.head, cfg_.mog(), seed + 1);
    p.text_emb = &store_.add("text.emb", cfg_.vocab, cfg_.decoder.width);
    p.audio_w = &store_.add("audio.w", cfg_.decoder.width, cfg_.latent_dim);
    p.audio_b = &store_.add("audio.b", 1, cfg_.decoder.width);
    std::mt19937_64 rng(seed + 2);
    nn::init_normal(*p.text_emb, rng, 1.0 / std::sqrt(double(cfg_.decoder.width)));
    nn::init_normal(*p.audio_w, rng, 1.0 / std::sqrt(double(cfg_.latent_dim)));
}

TtsModel::TtsModel(TtsModel&&) noexcept = default;
TtsModel& TtsModel::operator=(TtsModel&&) noexcept = default;
TtsModel::~TtsModel() = default;

void TtsModel::save(const std::string& path) const {
    ckpt::Checkpoint ck;
    ck.meta["kind"] = "tts";
    ck.meta["vocab"] = std::to_string(cfg_.vocab);
    ck.meta["latent_dim"] = std::to_string(cfg_.latent_dim);
    ck.meta["rvq_levels"] = std::to_string(cfg_.rvq_levels);
    ck.meta["rvq_entries"] = std::to_string(cfg_.rvq_entries);
    ck.meta["mixtures"] = std::to_string(cfg_.mixtures);
    ck.meta["mog_hidden"] = std::to_string(cfg_.mog_hidden);
    ck.meta["unmask_steps"] = std::to_string(cfg_.unmask_steps);
    ck.meta["layers"] = std::to_string(cfg_.decoder.layers);
    ck.meta["heads"] = std::to_string(cfg_.decoder.heads);
    ck.meta["width"] = std::to_string(cfg_.decoder.width);
    ck.meta["ffw"] = std::to_string(cfg_.decoder.ffw);
    ck.meta["max_seq"] = std::to_string(cfg_.decoder.max_seq);
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

TtsModel TtsModel::load(const std::string& path) {
    const ckpt::Checkpoint ck = ckpt::Checkpoint::load(path);
    ck.require_meta("kind", "tts");
    TtsConfig cfg;
    cfg.vocab = meta_int(ck, "vocab");
    cfg.latent_dim = meta_int(ck, "latent_dim");
    cfg.rvq_levels = meta_int(ck, "rvq_levels");
    cfg.rvq_entries = meta_int(ck, "rvq_entries");
    cfg.mixtures = meta_int(ck, "mixtures");
    cfg.mog_hidden = meta_int(ck, "mog_hidden");
    cfg.unmask_steps = meta_int(ck, "unmask_steps");
    cfg.decoder.layers = meta_int(ck, "layers");
    cfg.decoder.heads = meta_int(ck, "heads");
    cfg.decoder.width = meta_int(ck, "width");
    cfg.decoder.ffw = meta_int(ck, "ffw");
    cfg.decoder.max_seq = meta_int(ck, "max_seq");
    TtsModel model(cfg, 0);
    model.store_.from_checkpoint(ck);
    return model;
}

Mat<float> code_latents(std::span<const rvq::RvqCode> codes, const rvq::CodebookSet& books) {
    if (codes.empty()) raise(ErrorCode::EmptyInput, "code_latents: no codes");
    Mat<float> out(int(codes.size()), books.dim);
    for (size_t i = 0; i < codes.size(); ++i) {
        const std::vector<float> z = rvq::decode(codes[i], books);
        std::copy(z.begin(), z.end(), out.row(int(i)));
    }
    return out;
}

rvq::RvqCode requantize_from(std::span<const float> z, const rvq::CodebookSet& books,
                             const rvq::RvqCode& committed, int from_level) {
    if (int(z.size()) != books.dim)
        raise(ErrorCode::ShapeMismatch, "requantize: latent dim mismatch");
    if (committed.levels() != books.levels)
        raise(ErrorCode::CorruptCode, "requantize: code level count mismatch");
    if (from_level < 0 || from_level > books.levels)
        raise(ErrorCode::InvalidConfig, "requantize: from_level out of range");
    for (float v : z)
        if (!std::isfinite(v)) raise(ErrorCode::InvalidSignal, "requantize: non-finite latent");

    std::vector<double> r(z.begin(), z.end());
    for (int l = 0; l < from_level; ++l) {
        const int k = committed.indices[size_t(l)];
        if (k >= books.entries) raise(ErrorCode::CorruptCode, "requantize: index out of range");
        const float* c = books.codeword(l, k);
        for (int i = 0; i < books.dim; ++i) r[size_t(i)] -= double(c[i]);
    }
    rvq::RvqCode out = committed;
    for (int l = from_level; l < books.levels; ++l) {
        const int k = rvq::nearest_codeword(r, books, l);
        out.indices[size_t(l)] = uint16_t(k);
        const float* c = books.codeword(l, k);
        for (int i = 0; i < books.dim; ++i) r[size_t(i)] -= double(c[i]);
    }
    return out;
}

rvq::RvqCode unmask_code(const TtsModel& model, std::span<const float> hidden,
                         const rvq::CodebookSet& books, double temperature,
                         std::mt19937_64& rng) {
    const TtsConfig& cfg = model.config();
    if (int(hidden.size()) != cfg.decoder.width)
        raise(ErrorCode::ShapeMismatch, "unmask: hidden width mismatch");
    if (books.levels != cfg.rvq_levels || books.dim != cfg.latent_dim)
        raise(ErrorCode::ConfigMismatch, "unmask: codebooks do not match the model");

    const nn::MogConfig mog = cfg.mog();
    const std::vector<int> starts = unmask_group_starts(cfg.rvq_levels, cfg.unmask_steps);

    rvq::RvqCode code;
    code.indices.assign(size_t(cfg.rvq_levels), 0);
    std::vector<float> in(size_t(mog.in_width));
    std::copy(hidden.begin(), hidden.end(), in.begin());
    for (int s = 0; s < cfg.unmask_steps; ++s) {
        const int u = starts[size_t(s)];
        const std::vector<float> pe = rvq::partial_embedding(code, books, u);
        std::copy(pe.begin(), pe.end(), in.begin() + cfg.decoder.width);
        const nn::MogParams mp = nn::mog_head_eval(in, model.plan().head, mog);
        const std::vector<float> z = nn::mog_sample(mp, temperature, rng, mog);
        code = requantize_from(z, books, code, u);
    }
    return code;
}

TrainingSample build_training_sample(std::span<const Utterance> utts, double target_seconds,
                                     double frames_per_second) {
    if (utts.empty()) raise(ErrorCode::EmptyInput, "training sample: no utterances");
    if (target_seconds <= 0.0)
        raise(ErrorCode::InvalidConfig, "training sample: target_seconds must be > 0");
    if (frames_per_second <= 0.0)
        raise(ErrorCode::InvalidConfig, "training sample: frames_per_second must be > 0");

    TrainingSample out;
    const std::string& speaker = utts[0].speaker;
    double seconds = 0.0;
    for (const Utterance& u : utts) {
        if (seconds >= target_seconds) break;
        if (u.speaker != speaker)
            raise(ErrorCode::SpeakerMismatch, "training sample: '" + u.speaker +
                                                  "' mixed into '" + speaker + "'");
        const std::vector<int> toks = tokenize(u.text);
        if (toks.size() != u.codes.size())
            raise(ErrorCode::ShapeMismatch, "training sample: " + std::to_string(toks.size()) +
                                                " tokens vs " + std::to_string(u.codes.size()) +
                                                " frames");
        out.tokens.insert(out.tokens.end(), toks.begin(), toks.end());
        out.codes.insert(out.codes.end(), u.codes.begin(), u.codes.end());
        seconds += double(u.codes.size()) / frames_per_second;
    }
    if (out.tokens.empty()) raise(ErrorCode::EmptyInput, "training sample: no frames gathered");
    return out;
}

double uniform_target_seconds(std::mt19937_64& rng) {
    return std::uniform_real_distribution<double>(1.0, 120.0)(rng);
}

namespace {

// One tape pass of the interleaved teacher-forced objective; optionally
// updates the parameters.
double tts_objective(TtsModel& model, const TrainingSample& sample,
                     const rvq::CodebookSet& books, std::span<const int> prefix_levels,
                     const TtsTrainOptions* update, int step_index) {
    const TtsConfig& cfg = model.config();
    TtsModel::Plan& p = model.plan();
    const int n = int(sample.tokens.size());
    if (n == 0) raise(ErrorCode::EmptyInput, "tts loss: empty sample");
    if (sample.codes.size() != size_t(n))
        raise(ErrorCode::ShapeMismatch, "tts loss: " + std::to_string(n) + " tokens vs " +
                                            std::to_string(sample.codes.size()) + " frames");
    if (int(prefix_levels.size()) != n)
        raise(ErrorCode::ShapeMismatch, "tts loss: prefix_levels size mismatch");
    if (books.levels != cfg.rvq_levels || books.dim != cfg.latent_dim)
        raise(ErrorCode::ConfigMismatch, "tts loss: codebooks do not match the model");
    for (int t : sample.tokens)
        if (t < 0 || t >= cfg.vocab)
            raise(ErrorCode::CorruptCode, "tts loss: token out of vocabulary");
    if (2 * n > cfg.decoder.max_seq)
        raise(ErrorCode::SequenceTooLong, "tts loss: interleaved length " + std::to_string(2 * n) +
                                              " exceeds max_seq " +
                                              std::to_string(cfg.decoder.max_seq));

    const Mat<float> latents = code_latents(sample.codes, books);
    Mat<float> prefixes(n, cfg.latent_dim);
    for (int i = 0; i < n; ++i) {
        const int u = prefix_levels[size_t(i)];
        if (u < 0 || u > cfg.rvq_levels)
            raise(ErrorCode::InvalidConfig, "tts loss: prefix level out of range");
        const std::vector<float> pe = rvq::partial_embedding(sample.codes[size_t(i)], books, u);
        std::copy(pe.begin(), pe.end(), prefixes.row(i));
    }

    GraphF g;
    Ref lat = g.input(latents);
    Ref temb = g.gather_rows(nn::pref(g, p.text_emb), sample.tokens);
    Ref aemb = g.affine(lat, nn::pref(g, p.audio_w), nn::pref(g, p.audio_b));

    // Interleave [t0, a0, t1, a1, ...]: audio frame i is predicted from the
    // hidden state over its own text token at position 2i.
    std::vector<int> perm(size_t(2 * n));
    for (int i = 0; i < n; ++i) {
        perm[size_t(2 * i)] = i;
        perm[size_t(2 * i + 1)] = n + i;
    }
    Ref x = g.gather_rows(g.concat_rows(temb, aemb), perm);
    Ref hidden = nn::decoder_forward<float>(g, x, p.dec, cfg.decoder, 0);
    std::vector<int> evens(size_t(n), 0);
    for (int i = 0; i < n; ++i) evens[size_t(i)] = 2 * i;
    Ref cond = g.gather_rows(hidden, evens);

    const nn::MogConfig mog = cfg.mog();
    Ref head_in = g.concat_cols(cond, g.input(prefixes));
    const nn::MogRefs<float> refs = nn::mog_head_forward<float>(g, head_in, p.head, mog);
    Ref loss = g.mean(nn::mog_nll_graph<float>(g, refs, lat, mog));

    const double value = double(g.val(loss).at(0, 0));
    if (update) {
        model.params().zero_grads();
        g.backward(loss);
        model.params().adam_step(update->adam, step_index + 1);
    }
    return value;
}

} // namespace

double teacher_forced_nll(TtsModel& model, const TrainingSample& sample,
                          const rvq::CodebookSet& books, std::span<const int> prefix_levels) {
    return tts_objective(model, sample, books, prefix_levels, nullptr, 0);
}

TtsTrainResult train(TtsModel& model, std::span<const TrainingSample> samples,
                     const rvq::CodebookSet& books, const TtsTrainOptions& opts) {
    if (samples.empty()) raise(ErrorCode::EmptyInput, "tts train: no samples");
    if (opts.steps < 1) raise(ErrorCode::InvalidConfig, "tts train: steps must be >= 1");
    const std::vector<int> starts =
        unmask_group_starts(model.config().rvq_levels, model.config().unmask_steps);
    std::mt19937_64 rng(opts.seed);
    std::uniform_int_distribution<int> pick(0, int(starts.size()) - 1);

    TtsTrainResult res;
    res.loss_history.reserve(size_t(opts.steps));
    std::vector<int> prefix;
    for (int step = 0; step < opts.steps; ++step) {
        const TrainingSample& sample = samples[size_t(step) % samples.size()];
        prefix.resize(sample.tokens.size());
        for (int& u : prefix) u = starts[size_t(pick(rng))];
        res.loss_history.push_back(tts_objective(model, sample, books, prefix, &opts, step));
        if (opts.checkpoint_every > 0 && opts.on_checkpoint &&
            (step + 1) % opts.checkpoint_every == 0)
            opts.on_checkpoint(step + 1, model);
    }
    return res;
}

double eval_nll(TtsModel& model, std::span<const TrainingSample> samples,
                const rvq::CodebookSet& books) {
    if (samples.empty()) raise(ErrorCode::EmptyInput, "tts eval: no samples");
    const std::vector<int> starts =
        unmask_group_starts(model.config().rvq_levels, model.config().unmask_steps);
    double acc = 0.0;
    int terms = 0;
    std::vector<int> prefix;
    for (const TrainingSample& sample : samples)
        for (int u : starts) {
            prefix.assign(sample.tokens.size(), u);
            acc += teacher_forced_nll(model, sample, books, prefix);
            ++terms;
        }
    return acc / double(terms);
}

Session::Session(const TtsModel& model, const rvq::CodebookSet& books, double temperature,
                 uint64_t seed)
    : model_(&model),
      books_(&books),
      dec_(model.config().decoder, model.plan().dec),
      temperature_(temperature),
      rng_(seed) {
    if (books.levels != model.config().rvq_levels || books.dim != model.config().latent_dim)
        raise(ErrorCode::ConfigMismatch, "session: codebooks do not match the model");
}

rvq::RvqCode Session::step(int text_token) {
    if (closed_) raise(ErrorCode::SessionClosed, "session: step after close");
    const TtsConfig& cfg = model_->config();
    if (text_token < 0 || text_token >= cfg.vocab)
        raise(ErrorCode::CorruptCode, "session: token " + std::to_string(text_token) +
                                          " outside vocabulary");

    const TtsModel::Plan& p = model_->plan();
    const int width = cfg.decoder.width;
    const std::vector<float> hidden =
        dec_.step({p.text_emb->value.row(text_token), size_t(width)});
    rvq::RvqCode code = unmask_code(*model_, hidden, *books_, temperature_, rng_);

    // Feed the committed frame back so generation conditions on exactly what
    // the codec receives.
    const std::vector<float> z = rvq::decode(code, *books_);
    std::vector<float> aemb(size_t(width), 0.0f);
    nn::detail::affine_row<float>(z, p.audio_w->value, p.audio_b->value, aemb);
    dec_.step(aemb);
    ++emitted_;
    return code;
}

void Session::close() { closed_ = true; }

SynthResult synthesize(const TtsModel& model, const codec::Codec& codec,
                       const rvq::CodebookSet& books, const std::string& text,
                       bench::Clock& clock, double temperature, uint64_t seed) {
    const TtsConfig& cfg = model.config();
    if (books.dim != codec.config().latent_dim())
        raise(ErrorCode::ConfigMismatch, "synthesize: codebooks do not match the codec");
    if (cfg.latent_dim != books.dim || cfg.rvq_levels != books.levels)
        raise(ErrorCode::ConfigMismatch, "synthesize: codebooks do not match the model");
    if (cfg.rvq_entries != books.entries)
        raise(ErrorCode::ConfigMismatch, "synthesize: codebook entry count mismatch");

    SynthResult res;
    res.t0_ns = clock.now_ns();
    res.audio.sample_rate = codec.config().sample_rate;
    const std::vector<int> tokens = tokenize(text);
    if (tokens.empty()) return res;

    Session session(model, books, temperature, seed);
    codec::StreamState stream(codec, books);
    for (size_t i = 0; i < tokens.size(); ++i) {
        res.events.push_back({bench::EventKind::Text, int(i), clock.now_ns()});
        rvq::RvqCode code = session.step(tokens[i]);
        res.events.push_back({bench::EventKind::Gen, int(i), clock.now_ns()});
        const std::vector<float> samples = stream.push(code);
        res.events.push_back({bench::EventKind::Audio, int(i), clock.now_ns()});
        res.audio.samples.insert(res.audio.samples.end(), samples.begin(), samples.end());
        res.codes.push_back(std::move(code));
    }
    session.close();
    return res;
}

} // namespace afs::tts
