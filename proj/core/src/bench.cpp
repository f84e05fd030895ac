#include "afs/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

namespace afs::bench {

const char* event_kind_name(EventKind k) {
    switch (k) {
        case EventKind::Text: return "text";
        case EventKind::Gen: return "gen";
        case EventKind::Audio: return "audio";
    }
    return "unknown";
}

EventKind event_kind_from(const std::string& name) {
    if (name == "text") return EventKind::Text;
    if (name == "gen") return EventKind::Gen;
    if (name == "audio") return EventKind::Audio;
    raise(ErrorCode::FormatError, "event log: unknown kind '" + name + "'");
}

uint64_t SystemClock::now_ns() {
    const auto t = std::chrono::steady_clock::now().time_since_epoch();
    return uint64_t(std::chrono::duration_cast<std::chrono::nanoseconds>(t).count());
}

namespace {

// Nearest-rank percentile over a sorted sample: value at rank
// ceil(p/100 * n), 1-based.
uint64_t percentile(const std::vector<uint64_t>& sorted, int p) {
    const size_t n = sorted.size();
    size_t rank = (size_t(p) * n + 99) / 100; // ceil without floating point
    if (rank < 1) rank = 1;
    return sorted[rank - 1];
}

} // namespace

LatencyReport analyze(const std::vector<TokenEvent>& events, uint64_t t0_ns,
                      int samples_per_code, int sample_rate) {
    if (samples_per_code < 1 || sample_rate < 1)
        raise(ErrorCode::InvalidConfig, "analyze: samples_per_code and sample_rate must be >= 1");
    if (events.empty()) raise(ErrorCode::EmptyStream, "analyze: no events");

    std::vector<uint64_t> text_ts, gen_ts, audio_ts;
    uint64_t last = t0_ns;
    for (const TokenEvent& e : events) {
        if (e.timestamp_ns < t0_ns)
            raise(ErrorCode::InvalidSignal, "analyze: event before stream start");
        switch (e.kind) {
            case EventKind::Text: text_ts.push_back(e.timestamp_ns); break;
            case EventKind::Gen: gen_ts.push_back(e.timestamp_ns); break;
            case EventKind::Audio: audio_ts.push_back(e.timestamp_ns); break;
        }
        last = std::max(last, e.timestamp_ns);
    }
    if (audio_ts.empty()) raise(ErrorCode::EmptyStream, "analyze: no audio events");
    for (const auto* seq : {&text_ts, &gen_ts, &audio_ts})
        for (size_t i = 1; i < seq->size(); ++i)
            if ((*seq)[i] < (*seq)[i - 1])
                raise(ErrorCode::InvalidSignal, "analyze: timestamps not monotonic");

    LatencyReport r;
    r.text_tokens = int(text_ts.size());
    r.gen_tokens = int(gen_ts.size());
    r.audio_chunks = int(audio_ts.size());
    r.ttft_ns = audio_ts.front() - t0_ns;
    r.total_ns = last - t0_ns;

    std::vector<uint64_t> gaps;
    gaps.reserve(audio_ts.size());
    for (size_t i = 1; i < audio_ts.size(); ++i) gaps.push_back(audio_ts[i] - audio_ts[i - 1]);
    r.degenerate = gaps.empty();
    if (!gaps.empty()) {
        uint64_t sum = 0;
        for (uint64_t g : gaps) sum += g;
        r.itl_mean_ns = sum / gaps.size();
        std::sort(gaps.begin(), gaps.end());
        r.itl_p50_ns = percentile(gaps, 50);
        r.itl_p95_ns = percentile(gaps, 95);
    }

    // Phase attribution pairs events of equal index.
    const size_t paired_gen = std::min(text_ts.size(), gen_ts.size());
    for (size_t i = 0; i < paired_gen; ++i)
        if (gen_ts[i] >= text_ts[i]) r.token_gen_ns += gen_ts[i] - text_ts[i];
    const size_t paired_audio = std::min(gen_ts.size(), audio_ts.size());
    for (size_t i = 0; i < paired_audio; ++i)
        if (audio_ts[i] >= gen_ts[i]) r.waveform_ns += audio_ts[i] - gen_ts[i];

    r.audio_seconds_out =
        double(int64_t(r.audio_chunks) * int64_t(samples_per_code)) / double(sample_rate);
    if (r.total_ns > 0) r.realtime_factor = r.audio_seconds_out / (double(r.total_ns) * 1e-9);
    return r;
}

std::vector<TokenEvent> mock_events(const MockOptions& opts, SimClock& clock) {
    if (opts.tokens < 1) raise(ErrorCode::InvalidConfig, "mock: tokens must be >= 1");
    std::vector<TokenEvent> events;
    events.reserve(size_t(opts.tokens) * 3);
    for (int i = 0; i < opts.tokens; ++i) {
        events.push_back({EventKind::Text, i, clock.now_ns()});
        clock.advance(i == 0 ? opts.first_gen_ns : opts.gen_ns);
        events.push_back({EventKind::Gen, i, clock.now_ns()});
        clock.advance(opts.audio_ns);
        events.push_back({EventKind::Audio, i, clock.now_ns()});
    }
    return events;
}

void write_events(const std::string& path, const std::vector<TokenEvent>& events, uint64_t t0_ns) {
    std::ofstream out(path);
    if (!out) raise(ErrorCode::IoError, "cannot open '" + path + "' for writing");
    out << "t0 " << t0_ns << "\n";
    for (const TokenEvent& e : events)
        out << event_kind_name(e.kind) << ' ' << e.index << ' ' << e.timestamp_ns << "\n";
    if (!out) raise(ErrorCode::IoError, "short write to '" + path + "'");
}

EventLog read_events(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(ErrorCode::IoError, "cannot open '" + path + "'");
    EventLog log;
    std::string line;
    bool have_t0 = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string head;
        ls >> head;
        if (!have_t0) {
            if (head != "t0") raise(ErrorCode::FormatError, "event log: missing t0 header");
            if (!(ls >> log.t0_ns)) raise(ErrorCode::FormatError, "event log: bad t0 value");
            have_t0 = true;
            continue;
        }
        TokenEvent e;
        e.kind = event_kind_from(head);
        if (!(ls >> e.index >> e.timestamp_ns))
            raise(ErrorCode::FormatError, "event log: bad event line '" + line + "'");
        log.events.push_back(e);
    }
    if (!have_t0) raise(ErrorCode::FormatError, "event log: empty file");
    return log;
}

std::string format_report(const LatencyReport& r) {
    std::ostringstream out;
    out << "text_tokens=" << r.text_tokens << "\n";
    out << "gen_tokens=" << r.gen_tokens << "\n";
    out << "audio_chunks=" << r.audio_chunks << "\n";
    out << "ttft_ns=" << r.ttft_ns << "\n";
    out << "itl_mean_ns=" << r.itl_mean_ns << "\n";
    out << "itl_p50_ns=" << r.itl_p50_ns << "\n";
    out << "itl_p95_ns=" << r.itl_p95_ns << "\n";
    out << "token_gen_ns=" << r.token_gen_ns << "\n";
    out << "waveform_ns=" << r.waveform_ns << "\n";
    out << "total_ns=" << r.total_ns << "\n";
    out << "audio_seconds_out=" << r.audio_seconds_out << "\n";
    out << "realtime_factor=" << r.realtime_factor << "\n";
    out << "degenerate=" << (r.degenerate ? 1 : 0) << "\n";
    return out.str();
}

} // namespace afs::bench
