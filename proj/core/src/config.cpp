#include "afs/config.hpp"

#include "afs/error.hpp"

#include "json.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>

namespace afs::config {

namespace {

using json = nlohmann::ordered_json;

// Strict view of one JSON object: every present key must be declared, and
// typed reads report the fully qualified key on failure. The `paper_value`
// block is documentation and is skipped.
class Section {
  public:
    Section(const json& j, std::string name, std::initializer_list<const char*> keys)
        : j_(j), name_(std::move(name)) {
        if (!j_.is_object())
            raise(ErrorCode::ConfigMismatch, "config: '" + name_ + "' must be an object");
        for (const auto& item : j_.items()) {
            const std::string& k = item.key();
            if (k == "paper_value") continue;
            bool known = false;
            for (const char* want : keys)
                if (k == want) { known = true; break; }
            if (!known)
                raise(ErrorCode::ConfigMismatch, "config: unknown key '" + name_ + "." + k + "'");
        }
    }

    template <typename T>
    void read(const char* key, T& out) const {
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->get<T>();
        } catch (const json::exception&) {
            raise(ErrorCode::ConfigMismatch, "config: bad value for '" + name_ + "." + key + "'");
        }
    }

  private:
    const json& j_;
    std::string name_;
};

} // namespace

RunConfig parse_run_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        raise(ErrorCode::FormatError, std::string("config: ") + e.what());
    }
    if (!j.is_object())
        raise(ErrorCode::FormatError, "config: top level must be an object");

    RunConfig c;
    Section top(j, "config",
                {"seed", "dsp", "features", "codec", "rvq", "nn", "tts", "bench"});
    top.read("seed", c.seed);

    if (j.contains("dsp")) {
        Section s(j["dsp"], "dsp", {"sample_rate", "stft_window", "stft_hop"});
        s.read("sample_rate", c.dsp.sample_rate);
        s.read("stft_window", c.dsp.stft_window);
        s.read("stft_hop", c.dsp.stft_hop);
    }
    if (j.contains("features")) {
        Section s(j["features"], "features",
                  {"sample_rate", "n_mels", "window_seconds", "hop_seconds",
                   "chunk_seconds", "max_windows", "stem_width", "adaptor_hidden",
                   "d_lm"});
        s.read("sample_rate", c.features.sample_rate);
        s.read("n_mels", c.features.n_mels);
        s.read("window_seconds", c.features.window_seconds);
        s.read("hop_seconds", c.features.hop_seconds);
        s.read("chunk_seconds", c.features.chunk_seconds);
        s.read("max_windows", c.features.max_windows);
        s.read("stem_width", c.features.stem_width);
        s.read("adaptor_hidden", c.features.adaptor_hidden);
        s.read("d_lm", c.features.d_lm);
    }
    if (j.contains("codec")) {
        Section s(j["codec"], "codec",
                  {"initial_width", "stage_widths", "blocks_per_stage", "stage_stride",
                   "dw_kernel", "expand"});
        s.read("initial_width", c.codec.initial_width);
        s.read("stage_widths", c.codec.stage_widths);
        s.read("blocks_per_stage", c.codec.blocks_per_stage);
        s.read("stage_stride", c.codec.stage_stride);
        s.read("dw_kernel", c.codec.dw_kernel);
        s.read("expand", c.codec.expand);
    }
    if (j.contains("rvq")) {
        Section s(j["rvq"], "rvq", {"levels", "entries", "train_iterations"});
        s.read("levels", c.rvq.levels);
        s.read("entries", c.rvq.entries);
        s.read("train_iterations", c.rvq.train_iterations);
    }
    if (j.contains("nn")) {
        Section s(j["nn"], "nn",
                  {"codec_lr", "tts_lr", "beta1", "beta2", "epsilon", "cosine_decay",
                   "codec_steps", "tts_steps", "use_quantizer", "commit_weight"});
        s.read("codec_lr", c.nn.codec_lr);
        s.read("tts_lr", c.nn.tts_lr);
        s.read("beta1", c.nn.beta1);
        s.read("beta2", c.nn.beta2);
        s.read("epsilon", c.nn.epsilon);
        s.read("cosine_decay", c.nn.cosine_decay);
        s.read("codec_steps", c.nn.codec_steps);
        s.read("tts_steps", c.nn.tts_steps);
        s.read("use_quantizer", c.nn.use_quantizer);
        s.read("commit_weight", c.nn.commit_weight);
    }
    if (j.contains("tts")) {
        Section s(j["tts"], "tts",
                  {"layers", "heads", "width", "ffw", "max_seq", "mixtures",
                   "mog_hidden", "unmask_steps", "temperature"});
        s.read("layers", c.tts.layers);
        s.read("heads", c.tts.heads);
        s.read("width", c.tts.width);
        s.read("ffw", c.tts.ffw);
        s.read("max_seq", c.tts.max_seq);
        s.read("mixtures", c.tts.mixtures);
        s.read("mog_hidden", c.tts.mog_hidden);
        s.read("unmask_steps", c.tts.unmask_steps);
        s.read("temperature", c.tts.temperature);
    }
    if (j.contains("bench")) {
        Section s(j["bench"], "bench",
                  {"tokens", "first_gen_ns", "gen_ns", "audio_ns"});
        s.read("tokens", c.bench.tokens);
        s.read("first_gen_ns", c.bench.first_gen_ns);
        s.read("gen_ns", c.bench.gen_ns);
        s.read("audio_ns", c.bench.audio_ns);
    }
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorCode::IoError, "config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str());
}

std::string format_run_config(const RunConfig& c) {
    json j;
    j["seed"] = c.seed;

    json dsp;
    dsp["sample_rate"] = c.dsp.sample_rate;
    dsp["stft_window"] = c.dsp.stft_window;
    dsp["stft_hop"] = c.dsp.stft_hop;
    dsp["paper_value"] = {{"sample_rate", 44100}, {"stft_window", 32}, {"stft_hop", 8}};
    j["dsp"] = dsp;

    json feat;
    feat["sample_rate"] = c.features.sample_rate;
    feat["n_mels"] = c.features.n_mels;
    feat["window_seconds"] = c.features.window_seconds;
    feat["hop_seconds"] = c.features.hop_seconds;
    feat["chunk_seconds"] = c.features.chunk_seconds;
    feat["max_windows"] = c.features.max_windows;
    feat["stem_width"] = c.features.stem_width;
    feat["adaptor_hidden"] = c.features.adaptor_hidden;
    feat["d_lm"] = c.features.d_lm;
    feat["paper_value"] = {{"sample_rate", 16000},     {"n_mels", 128},
                           {"window_seconds", 0.025},  {"hop_seconds", 0.010},
                           {"chunk_seconds", 30.0},    {"stem_width", 1280}};
    j["features"] = feat;

    json codec;
    codec["initial_width"] = c.codec.initial_width;
    codec["stage_widths"] = c.codec.stage_widths;
    codec["blocks_per_stage"] = c.codec.blocks_per_stage;
    codec["stage_stride"] = c.codec.stage_stride;
    codec["dw_kernel"] = c.codec.dw_kernel;
    codec["expand"] = c.codec.expand;
    codec["paper_value"] = {{"initial_width", 384},
                            {"stage_widths", {768, 1536, 512}},
                            {"blocks_per_stage", 3},
                            {"stage_stride", 8}};
    j["codec"] = codec;

    json rvq;
    rvq["levels"] = c.rvq.levels;
    rvq["entries"] = c.rvq.entries;
    rvq["train_iterations"] = c.rvq.train_iterations;
    rvq["paper_value"] = {{"levels", 72}};
    j["rvq"] = rvq;

    json nn;
    nn["codec_lr"] = c.nn.codec_lr;
    nn["tts_lr"] = c.nn.tts_lr;
    nn["beta1"] = c.nn.beta1;
    nn["beta2"] = c.nn.beta2;
    nn["epsilon"] = c.nn.epsilon;
    nn["cosine_decay"] = c.nn.cosine_decay;
    nn["codec_steps"] = c.nn.codec_steps;
    nn["tts_steps"] = c.nn.tts_steps;
    nn["use_quantizer"] = c.nn.use_quantizer;
    nn["commit_weight"] = c.nn.commit_weight;
    j["nn"] = nn;

    json tts;
    tts["layers"] = c.tts.layers;
    tts["heads"] = c.tts.heads;
    tts["width"] = c.tts.width;
    tts["ffw"] = c.tts.ffw;
    tts["max_seq"] = c.tts.max_seq;
    tts["mixtures"] = c.tts.mixtures;
    tts["mog_hidden"] = c.tts.mog_hidden;
    tts["unmask_steps"] = c.tts.unmask_steps;
    tts["temperature"] = c.tts.temperature;
    tts["paper_value"] = {{"unmask_steps", 4}};
    j["tts"] = tts;

    json bench;
    bench["tokens"] = c.bench.tokens;
    bench["first_gen_ns"] = c.bench.first_gen_ns;
    bench["gen_ns"] = c.bench.gen_ns;
    bench["audio_ns"] = c.bench.audio_ns;
    // Published latency targets the default mock schedule is calibrated to.
    bench["paper_value"] = {{"ttft_seconds", 0.15},
                            {"itl_seconds", 0.06},
                            {"clip_seconds", 10.0},
                            {"token_gen_seconds", 5.94},
                            {"waveform_seconds", 0.02},
                            {"total_seconds", 6.68}};
    j["bench"] = bench;

    return j.dump(2) + "\n";
}

void save_run_config(const RunConfig& c, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) raise(ErrorCode::IoError, "config: cannot write " + path);
    out << format_run_config(c);
    if (!out) raise(ErrorCode::IoError, "config: write failed for " + path);
}

codec::CodecConfig codec_config(const RunConfig& c) {
    codec::CodecConfig k;
    k.sample_rate = c.dsp.sample_rate;
    k.window = c.dsp.stft_window;
    k.hop = c.dsp.stft_hop;
    k.initial_width = c.codec.initial_width;
    k.stage_widths = c.codec.stage_widths;
    k.blocks_per_stage = c.codec.blocks_per_stage;
    k.stage_stride = c.codec.stage_stride;
    k.dw_kernel = c.codec.dw_kernel;
    k.expand = c.codec.expand;
    k.rvq_levels = c.rvq.levels;
    k.rvq_entries = c.rvq.entries;
    return k;
}

codec::TrainOptions codec_train_options(const RunConfig& c) {
    codec::TrainOptions o;
    o.steps = c.nn.codec_steps;
    o.adam.lr = c.nn.codec_lr;
    o.adam.beta1 = c.nn.beta1;
    o.adam.beta2 = c.nn.beta2;
    o.adam.eps = c.nn.epsilon;
    o.adam.cosine_steps = c.nn.cosine_decay ? c.nn.codec_steps : 0;
    o.use_quantizer = c.nn.use_quantizer;
    o.commit_weight = c.nn.commit_weight;
    return o;
}

features::FeatureConfig feature_config(const RunConfig& c) {
    features::FeatureConfig f;
    f.sample_rate = c.features.sample_rate;
    f.n_mels = c.features.n_mels;
    f.mel_window_seconds = c.features.window_seconds;
    f.mel_hop_seconds = c.features.hop_seconds;
    f.stem_width = c.features.stem_width;
    f.adaptor_hidden = c.features.adaptor_hidden;
    f.d_lm = c.features.d_lm;
    f.plan.window_seconds = c.features.chunk_seconds;
    f.plan.max_windows = c.features.max_windows;
    return f;
}

tts::TtsConfig tts_config(const RunConfig& c) {
    tts::TtsConfig t;
    t.decoder.layers = c.tts.layers;
    t.decoder.heads = c.tts.heads;
    t.decoder.width = c.tts.width;
    t.decoder.ffw = c.tts.ffw;
    t.decoder.max_seq = c.tts.max_seq;
    t.latent_dim = c.codec.stage_widths.empty() ? 0 : c.codec.stage_widths.back();
    t.rvq_levels = c.rvq.levels;
    t.rvq_entries = c.rvq.entries;
    t.mixtures = c.tts.mixtures;
    t.mog_hidden = c.tts.mog_hidden;
    t.unmask_steps = c.tts.unmask_steps;
    return t;
}

tts::TtsTrainOptions tts_train_options(const RunConfig& c) {
    tts::TtsTrainOptions o;
    o.steps = c.nn.tts_steps;
    o.adam.lr = c.nn.tts_lr;
    o.adam.beta1 = c.nn.beta1;
    o.adam.beta2 = c.nn.beta2;
    o.adam.eps = c.nn.epsilon;
    o.adam.cosine_steps = c.nn.cosine_decay ? c.nn.tts_steps : 0;
    o.seed = c.seed;
    return o;
}

bench::MockOptions mock_options(const RunConfig& c) {
    bench::MockOptions m;
    m.tokens = c.bench.tokens;
    m.first_gen_ns = c.bench.first_gen_ns;
    m.gen_ns = c.bench.gen_ns;
    m.audio_ns = c.bench.audio_ns;
    return m;
}

} // namespace afs::config
