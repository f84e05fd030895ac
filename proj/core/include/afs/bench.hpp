#pragma once

#include "afs/error.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace afs::bench {

// Timeline phases of one synthesized frame: the text token going in, the
// code coming out of the model, and the waveform chunk leaving the codec.
enum class EventKind { Text, Gen, Audio };

const char* event_kind_name(EventKind k);
EventKind event_kind_from(const std::string& name); // FormatError on unknown

// One timeline entry; `index` counts events of the same kind from zero.
struct TokenEvent {
    EventKind kind = EventKind::Text;
    int index = 0;
    uint64_t timestamp_ns = 0;

    bool operator==(const TokenEvent&) const = default;
};

// Injected time source so the harness runs against synthetic schedules.
class Clock {
  public:
    virtual ~Clock() = default;
    virtual uint64_t now_ns() = 0;
};

class SystemClock final : public Clock {
  public:
    uint64_t now_ns() override;
};

// Manually advanced clock for tests and --mock runs.
class SimClock final : public Clock {
  public:
    explicit SimClock(uint64_t start_ns = 0) : now_(start_ns) {}
    uint64_t now_ns() override { return now_; }
    void advance(uint64_t ns) { now_ += ns; }

  private:
    uint64_t now_;
};

// Latency digest. Every duration is computed in integer nanoseconds; seconds
// appear only in the derived audio/realtime figures.
struct LatencyReport {
    int text_tokens = 0;
    int gen_tokens = 0;
    int audio_chunks = 0;
    uint64_t ttft_ns = 0;      // first audio chunk relative to t0
    uint64_t itl_mean_ns = 0;  // mean gap between consecutive audio chunks
    uint64_t itl_p50_ns = 0;   // nearest-rank percentiles over the gaps
    uint64_t itl_p95_ns = 0;
    uint64_t token_gen_ns = 0; // sum of gen[i] - text[i]
    uint64_t waveform_ns = 0;  // sum of audio[i] - gen[i]
    uint64_t total_ns = 0;     // last event relative to t0
    double audio_seconds_out = 0.0;
    double realtime_factor = 0.0;  // audio seconds per wall second
    bool degenerate = false;       // fewer than two audio chunks: no gaps
};

// Digest an event stream. `samples_per_code` and `sample_rate` convert chunk
// counts into audio seconds. Raises EmptyStream when no audio was produced.
LatencyReport analyze(const std::vector<TokenEvent>& events, uint64_t t0_ns,
                      int samples_per_code, int sample_rate);

// Model-free schedule with fixed per-stage costs, driving a SimClock. The
// first code pays `first_gen_ns`; every later one pays `gen_ns`; each chunk
// of waveform costs `audio_ns`.
struct MockOptions {
    int tokens = 108;
    uint64_t first_gen_ns = 100'000'000;
    uint64_t gen_ns = 10'000'000;
    uint64_t audio_ns = 50'000'000;
};

std::vector<TokenEvent> mock_events(const MockOptions& opts, SimClock& clock);

// Plain-text event log: "t0 <ns>" then one "<kind> <index> <ns>" per line.
struct EventLog {
    uint64_t t0_ns = 0;
    std::vector<TokenEvent> events;
};

void write_events(const std::string& path, const std::vector<TokenEvent>& events, uint64_t t0_ns);
EventLog read_events(const std::string& path);

// key=value lines, one metric per line, stable order.
std::string format_report(const LatencyReport& r);

} // namespace afs::bench
