// afstream — operator surface for the voice pipeline: codec train/encode/
// decode, TTS train/synth, feature extraction, and the latency bench.
//
// Conventions shared by every subcommand:
//   * --out names a directory; fixed filenames inside it. The effective
//     config (defaults merged with --config and --seed) is echoed there as
//     effective_config.json and is itself loadable via --config.
//   * exit codes: 0 ok, 1 runtime error, 2 format error, 3 config mismatch.
//   * all randomness flows from the config seed; no environment variables.

#include "afs/bench.hpp"
#include "afs/codec.hpp"
#include "afs/config.hpp"
#include "afs/dsp.hpp"
#include "afs/error.hpp"
#include "afs/features.hpp"
#include "afs/rvq.hpp"
#include "afs/tts.hpp"
#include "afs/wav.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

using afs::ErrorCode;
using afs::raise;

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::FormatError:
        case ErrorCode::CorruptCode:
            return 2;
        case ErrorCode::ConfigMismatch:
        case ErrorCode::InvalidConfig:
            return 3;
        default:
            return 1;
    }
}

// Options every subcommand shares. seed_set tracks whether --seed was given
// so a config-file seed is not clobbered by the default.
struct Common {
    std::string config_path;
    std::string out_dir;
    uint64_t seed = 0;
    bool json = false;

    CLI::Option* seed_opt = nullptr;

    void attach(CLI::App* cmd, bool with_json = false) {
        cmd->add_option("--config", config_path, "JSON run config (defaults merged)")
            ->check(CLI::ExistingFile);
        cmd->add_option("--out", out_dir, "output directory");
        seed_opt = cmd->add_option("--seed", seed, "override the config seed");
        if (with_json) cmd->add_flag("--json", json, "machine-readable report");
    }

    afs::config::RunConfig effective() const {
        afs::config::RunConfig cfg;
        if (!config_path.empty()) cfg = afs::config::load_run_config(config_path);
        if (seed_opt != nullptr && seed_opt->count() > 0) cfg.seed = seed;
        return cfg;
    }

    // Creates the output directory and echoes the merged config into it.
    fs::path prepare_out(const afs::config::RunConfig& cfg) const {
        if (out_dir.empty()) raise(ErrorCode::InvalidConfig, "--out is required");
        fs::create_directories(out_dir);
        afs::config::save_run_config(cfg, (fs::path(out_dir) / "effective_config.json").string());
        return fs::path(out_dir);
    }
};

std::vector<std::string> sorted_files(const std::string& dir, const std::string& ext) {
    if (!fs::is_directory(dir)) raise(ErrorCode::IoError, "not a directory: " + dir);
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ext)
            paths.push_back(entry.path().string());
    std::sort(paths.begin(), paths.end());
    return paths;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorCode::IoError, "cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    std::string text = buf.str();
    // Editors append a final newline; it is not part of the utterance.
    if (!text.empty() && text.back() == '\n') text.pop_back();
    if (!text.empty() && text.back() == '\r') text.pop_back();
    return text;
}

void write_loss_curve(const fs::path& path, const std::vector<double>& losses) {
    std::ofstream out(path);
    if (!out) raise(ErrorCode::IoError, "cannot write " + path.string());
    out.precision(10);
    for (size_t i = 0; i < losses.size(); ++i) out << i << " " << losses[i] << "\n";
}

void print_loss_curve(const std::vector<double>& losses) {
    if (losses.empty()) return;
    const int n = int(losses.size());
    const int stride = std::max(1, n / 10);
    for (int i = 0; i < n; i += stride)
        std::cout << "step " << i << " loss " << losses[size_t(i)] << "\n";
    std::cout << "step " << (n - 1) << " loss " << losses[size_t(n - 1)] << " (final)\n";
}

void check_books(const afs::rvq::CodebookSet& books, const afs::codec::Codec& codec) {
    if (books.dim != codec.config().latent_dim())
        raise(ErrorCode::ConfigMismatch, "codebook dim " + std::to_string(books.dim) +
                                             " != codec latent dim " +
                                             std::to_string(codec.config().latent_dim()));
}

void print_report(const afs::bench::LatencyReport& r, bool json) {
    if (!json) {
        std::cout << afs::bench::format_report(r);
        return;
    }
    std::cout << "{\n"
              << "  \"text_tokens\": " << r.text_tokens << ",\n"
              << "  \"gen_tokens\": " << r.gen_tokens << ",\n"
              << "  \"audio_chunks\": " << r.audio_chunks << ",\n"
              << "  \"ttft_ns\": " << r.ttft_ns << ",\n"
              << "  \"itl_mean_ns\": " << r.itl_mean_ns << ",\n"
              << "  \"itl_p50_ns\": " << r.itl_p50_ns << ",\n"
              << "  \"itl_p95_ns\": " << r.itl_p95_ns << ",\n"
              << "  \"token_gen_ns\": " << r.token_gen_ns << ",\n"
              << "  \"waveform_ns\": " << r.waveform_ns << ",\n"
              << "  \"total_ns\": " << r.total_ns << ",\n"
              << "  \"audio_seconds_out\": " << r.audio_seconds_out << ",\n"
              << "  \"realtime_factor\": " << r.realtime_factor << ",\n"
              << "  \"degenerate\": " << (r.degenerate ? "true" : "false") << "\n"
              << "}\n";
}

// ---- codec subcommands ----------------------------------------------------

int run_codec_train(const Common& common, const std::string& data_dir) {
    const auto cfg = common.effective();
    const fs::path out = common.prepare_out(cfg);

    const auto paths = sorted_files(data_dir, ".wav");
    if (paths.empty()) raise(ErrorCode::EmptyInput, "no .wav files in " + data_dir);
    std::vector<afs::AudioBuffer> clips;
    clips.reserve(paths.size());
    for (const auto& p : paths) clips.push_back(afs::wav::read(p));

    afs::codec::Codec codec(afs::config::codec_config(cfg), cfg.seed);
    auto opts = afs::config::codec_train_options(cfg);
    afs::rvq::CodebookSet books;
    if (opts.use_quantizer) {
        // The straight-through hook needs codebooks; fit them on the
        // untrained encoder, then refit on the trained one below.
        books = afs::codec::fit_codebooks(codec, clips, cfg.seed);
        opts.books = &books;
    }
    const auto result = afs::codec::train(codec, clips, opts);
    print_loss_curve(result.loss_history);
    write_loss_curve(out / "loss.txt", result.loss_history);

    codec.save((out / "codec.ckpt").string());
    const auto fitted = afs::codec::fit_codebooks(codec, clips, cfg.seed);
    afs::rvq::save_codebooks((out / "codebooks.afcb").string(), fitted);
    std::cout << "wrote " << (out / "codec.ckpt").string() << " and "
              << (out / "codebooks.afcb").string() << "\n";
    return 0;
}

int run_codec_encode(const Common& common, const std::string& in_path,
                     const std::string& ckpt, const std::string& books_path) {
    const auto cfg = common.effective();
    const fs::path out = common.prepare_out(cfg);

    auto codec = afs::codec::Codec::load(ckpt);
    const auto books = afs::rvq::load_codebooks(books_path);
    check_books(books, codec);

    afs::AudioBuffer audio = afs::wav::read(in_path);
    if (audio.sample_rate != codec.config().sample_rate)
        audio = afs::dsp::resample(audio, codec.config().sample_rate);

    const auto latents = codec.encode(audio);
    const auto codes = codec.quantize(latents, books);
    afs::codec::save_codes((out / "codes.afrq").string(), codes,
                           codec.config().sample_rate, books.levels, books.entries);
    std::cout << "frames " << codes.size() << " levels " << books.levels << " rate "
              << latents.frames_per_second << " Hz\n"
              << "wrote " << (out / "codes.afrq").string() << "\n";
    return 0;
}

int run_codec_decode(const Common& common, const std::string& in_path,
                     const std::string& ckpt, const std::string& books_path) {
    const auto cfg = common.effective();
    const fs::path out = common.prepare_out(cfg);

    const auto file = afs::codec::load_codes(in_path);
    auto codec = afs::codec::Codec::load(ckpt);
    const auto books = afs::rvq::load_codebooks(books_path);
    check_books(books, codec);
    if (file.sample_rate != codec.config().sample_rate)
        raise(ErrorCode::ConfigMismatch, "token stream rate " + std::to_string(file.sample_rate) +
                                             " != codec rate " +
                                             std::to_string(codec.config().sample_rate));
    if (file.levels != books.levels || file.entries != books.entries)
        raise(ErrorCode::ConfigMismatch, "token stream levels/entries do not match codebooks");

    const afs::AudioBuffer audio = codec.decode(file.codes, books);
    afs::wav::write((out / "decoded.wav").string(), audio);
    std::cout << "samples " << audio.samples.size() << " at " << audio.sample_rate << " Hz\n"
              << "wrote " << (out / "decoded.wav").string() << "\n";
    return 0;
}

// ---- tts subcommands ------------------------------------------------------

// Pairs <stem>.txt / <stem>.afrq in the data directory; byte count of the
// text must equal the frame count of the token stream.
std::vector<afs::tts::TrainingSample> load_pairs(const std::string& data_dir,
                                                 const afs::tts::TtsConfig& tcfg) {
    std::vector<afs::tts::TrainingSample> samples;
    for (const auto& txt : sorted_files(data_dir, ".txt")) {
        fs::path codes_path = fs::path(txt);
        codes_path.replace_extension(".afrq");
        if (!fs::exists(codes_path)) continue;
        const std::string text = read_text_file(txt);
        const auto file = afs::codec::load_codes(codes_path.string());
        if (file.levels != tcfg.rvq_levels || file.entries != tcfg.rvq_entries)
            raise(ErrorCode::ConfigMismatch, codes_path.string() + ": levels/entries mismatch");
        afs::tts::TrainingSample s;
        s.tokens = afs::tts::tokenize(text);
        s.codes = file.codes;
        if (s.tokens.size() != s.codes.size())
            raise(ErrorCode::ShapeMismatch,
                  txt + ": " + std::to_string(s.tokens.size()) + " text bytes vs " +
                      std::to_string(s.codes.size()) + " frames");
        samples.push_back(std::move(s));
    }
    if (samples.empty())
        raise(ErrorCode::EmptyInput, "no .txt/.afrq pairs in " + data_dir);
    return samples;
}

int run_tts_train(const Common& common, const std::string& data_dir,
                  const std::string& books_path) {
    const auto cfg = common.effective();
    const fs::path out = common.prepare_out(cfg);

    const auto books = afs::rvq::load_codebooks(books_path);
    const auto tcfg = afs::config::tts_config(cfg);
    const auto samples = load_pairs(data_dir, tcfg);

    afs::tts::TtsModel model(tcfg, cfg.seed);
    auto opts = afs::config::tts_train_options(cfg);
    opts.checkpoint_every = std::max(1, opts.steps / 4);
    opts.on_checkpoint = [&out](int step, const afs::tts::TtsModel& m) {
        m.save((out / ("tts_step" + std::to_string(step) + ".ckpt")).string());
    };
    const auto result = afs::tts::train(model, samples, books, opts);
    print_loss_curve(result.loss_history);
    write_loss_curve(out / "loss.txt", result.loss_history);

    model.save((out / "tts.ckpt").string());
    std::cout << "wrote " << (out / "tts.ckpt").string() << "\n";
    return 0;
}

int run_tts_synth(const Common& common, const std::string& text, const std::string& tts_ckpt,
                  const std::string& codec_ckpt, const std::string& books_path) {
    const auto cfg = common.effective();
    const fs::path out = common.prepare_out(cfg);

    const auto model = afs::tts::TtsModel::load(tts_ckpt);
    const auto codec = afs::codec::Codec::load(codec_ckpt);
    const auto books = afs::rvq::load_codebooks(books_path);

    afs::bench::SystemClock clock;
    const auto result = afs::tts::synthesize(model, codec, books, text, clock,
                                             cfg.tts.temperature, cfg.seed);
    afs::wav::write((out / "synth.wav").string(), result.audio);
    afs::bench::write_events((out / "events.log").string(), result.events,
                             result.t0_ns);
    std::cout << "tokens " << result.codes.size() << " samples "
              << result.audio.samples.size() << "\n";
    if (!result.events.empty()) {
        const auto report = afs::bench::analyze(result.events, result.t0_ns,
                                                codec.config().compression(),
                                                codec.config().sample_rate);
        print_report(report, common.json);
    }
    std::cout << "wrote " << (out / "synth.wav").string() << "\n";
    return 0;
}

// ---- features -------------------------------------------------------------

int run_features(const Common& common, const std::string& in_path) {
    const auto cfg = common.effective();
    const fs::path out = common.prepare_out(cfg);

    const afs::AudioBuffer audio = afs::wav::read(in_path);
    const afs::features::FeatureExtractor fx(afs::config::feature_config(cfg), cfg.seed);
    const auto result = fx.extract(audio);

    std::cout << "windows " << result.windows.size() << "\n";
    for (size_t w = 0; w < result.windows.size(); ++w) {
        std::cout << "window " << w << ": mel " << result.mel_frames[w] << " stem "
                  << result.stem_frames[w] << " pooled " << result.pooled_frames[w]
                  << " valid " << result.windows[w].valid_frames << "\n";
        std::ostringstream name;
        name << "features_" << w << ".affe";
        afs::features::save_features((out / name.str()).string(), result.windows[w]);
    }
    if (result.truncated_samples > 0)
        std::cout << "truncated " << result.truncated_samples << " samples\n";
    std::cout << "wrote " << result.windows.size() << " feature dumps to " << out.string()
              << "\n";
    return 0;
}

// ---- bench ----------------------------------------------------------------

int run_bench(const Common& common, bool mock, const std::string& replay,
              const std::string& tts_ckpt, const std::string& codec_ckpt,
              const std::string& books_path) {
    const auto cfg = common.effective();
    const int samples_per_code = afs::config::codec_config(cfg).compression();
    const int rate = cfg.dsp.sample_rate;

    if (!replay.empty()) {
        const auto log = afs::bench::read_events(replay);
        const auto report = afs::bench::analyze(log.events, log.t0_ns, samples_per_code, rate);
        print_report(report, common.json);
        return 0;
    }

    if (mock) {
        afs::bench::SimClock clock;
        const uint64_t t0 = clock.now_ns();
        const auto events = afs::bench::mock_events(afs::config::mock_options(cfg), clock);
        const auto report = afs::bench::analyze(events, t0, samples_per_code, rate);
        print_report(report, common.json);
        if (!common.out_dir.empty()) {
            const fs::path out = common.prepare_out(cfg);
            afs::bench::write_events((out / "events.log").string(), events, t0);
            std::cout << "wrote " << (out / "events.log").string() << "\n";
        }
        return 0;
    }

    if (tts_ckpt.empty() || codec_ckpt.empty() || books_path.empty())
        raise(ErrorCode::ConfigMismatch,
              "bench needs --mock, --replay, or --tts/--codec/--codebooks checkpoints");

    const auto model = afs::tts::TtsModel::load(tts_ckpt);
    const auto codec = afs::codec::Codec::load(codec_ckpt);
    const auto books = afs::rvq::load_codebooks(books_path);

    // Text sized to the configured token budget (~10 s of audio by default).
    std::string text;
    while (int(text.size()) < cfg.bench.tokens) text += "benchmark utterance ";
    text.resize(size_t(cfg.bench.tokens));

    afs::bench::SystemClock clock;
    const auto result = afs::tts::synthesize(model, codec, books, text, clock,
                                             cfg.tts.temperature, cfg.seed);
    const auto report = afs::bench::analyze(result.events, result.t0_ns,
                                            codec.config().compression(),
                                            codec.config().sample_rate);
    print_report(report, common.json);
    if (!common.out_dir.empty()) {
        const fs::path out = common.prepare_out(cfg);
        afs::bench::write_events((out / "events.log").string(), result.events,
                                 result.t0_ns);
        afs::wav::write((out / "synth.wav").string(), result.audio);
        std::cout << "wrote " << (out / "events.log").string() << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"afstream: streaming voice codec, TTS, features, and latency bench"};
    app.require_subcommand(1);

    int rc = 0;
    const auto run = [&rc](auto&& fn) {
        return [&rc, fn = std::forward<decltype(fn)>(fn)]() { rc = fn(); };
    };

    // codec
    auto* codec_cmd = app.add_subcommand("codec", "neural audio codec");
    codec_cmd->require_subcommand(1);

    auto* ct = codec_cmd->add_subcommand("train", "train the autoencoder and fit codebooks");
    Common ct_common;
    std::string ct_data;
    ct->add_option("--data", ct_data, "directory of training .wav files")->required();
    ct_common.attach(ct);
    ct->callback(run([&] { return run_codec_train(ct_common, ct_data); }));

    auto* ce = codec_cmd->add_subcommand("encode", "WAV -> AFRQ token stream");
    Common ce_common;
    std::string ce_in, ce_ckpt, ce_books;
    ce->add_option("--in", ce_in, "input WAV")->required()->check(CLI::ExistingFile);
    ce->add_option("--checkpoint", ce_ckpt, "codec checkpoint")->required();
    ce->add_option("--codebooks", ce_books, "AFCB codebooks")->required();
    ce_common.attach(ce);
    ce->callback(run([&] { return run_codec_encode(ce_common, ce_in, ce_ckpt, ce_books); }));

    auto* cd = codec_cmd->add_subcommand("decode", "AFRQ token stream -> WAV");
    Common cd_common;
    std::string cd_in, cd_ckpt, cd_books;
    cd->add_option("--in", cd_in, "input AFRQ")->required()->check(CLI::ExistingFile);
    cd->add_option("--checkpoint", cd_ckpt, "codec checkpoint")->required();
    cd->add_option("--codebooks", cd_books, "AFCB codebooks")->required();
    cd_common.attach(cd);
    cd->callback(run([&] { return run_codec_decode(cd_common, cd_in, cd_ckpt, cd_books); }));

    // tts
    auto* tts_cmd = app.add_subcommand("tts", "streaming text-to-speech");
    tts_cmd->require_subcommand(1);

    auto* tt = tts_cmd->add_subcommand("train", "teacher-forced training on .txt/.afrq pairs");
    Common tt_common;
    std::string tt_data, tt_books;
    tt->add_option("--data", tt_data, "directory of <stem>.txt/<stem>.afrq pairs")->required();
    tt->add_option("--codebooks", tt_books, "AFCB codebooks")->required();
    tt_common.attach(tt);
    tt->callback(run([&] { return run_tts_train(tt_common, tt_data, tt_books); }));

    auto* ts = tts_cmd->add_subcommand("synth", "text -> WAV + event log");
    Common ts_common;
    std::string ts_text, ts_ckpt, ts_codec, ts_books;
    ts->add_option("--text", ts_text, "utterance text (byte tokens)")->required();
    ts->add_option("--tts", ts_ckpt, "TTS checkpoint")->required();
    ts->add_option("--codec", ts_codec, "codec checkpoint")->required();
    ts->add_option("--codebooks", ts_books, "AFCB codebooks")->required();
    ts_common.attach(ts, /*with_json=*/true);
    ts->callback(run([&] { return run_tts_synth(ts_common, ts_text, ts_ckpt, ts_codec, ts_books); }));

    // features
    auto* fe = app.add_subcommand("features", "WAV -> AFFE feature dumps");
    Common fe_common;
    std::string fe_in;
    fe->add_option("--in", fe_in, "input WAV")->required()->check(CLI::ExistingFile);
    fe_common.attach(fe);
    fe->callback(run([&] { return run_features(fe_common, fe_in); }));

    // bench
    auto* be = app.add_subcommand("bench", "latency report (live, mock, or replay)");
    Common be_common;
    bool be_mock = false;
    std::string be_replay, be_tts, be_codec, be_books;
    be->add_flag("--mock", be_mock, "simulated clock with the configured schedule");
    be->add_option("--replay", be_replay, "re-analyze a saved event log")
        ->check(CLI::ExistingFile);
    be->add_option("--tts", be_tts, "TTS checkpoint (live run)");
    be->add_option("--codec", be_codec, "codec checkpoint (live run)");
    be->add_option("--codebooks", be_books, "AFCB codebooks (live run)");
    be_common.attach(be, /*with_json=*/true);
    be->callback(run([&] {
        return run_bench(be_common, be_mock, be_replay, be_tts, be_codec, be_books);
    }));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const afs::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}
