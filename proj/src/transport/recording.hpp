#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "transport/clock.hpp"
#include "transport/stream.hpp"

namespace pif::transport {

// .pifrec files are JSON Lines: one session header, one header per stream,
// then sample records in arrival order.
struct SessionHeader {
    std::string wall_clock_start; // ISO 8601 UTC
    std::map<std::string, std::string> meta;
    bool operator==(const SessionHeader &) const = default;
};

struct RecordedSample {
    std::size_t stream = 0; // index into Recording::streams
    Sample sample;
    bool operator==(const RecordedSample &) const = default;
};

struct Recording {
    SessionHeader header;
    std::vector<StreamInfo> streams;
    std::vector<RecordedSample> samples;

    std::optional<std::size_t> stream_index(const std::string &id_or_name) const;
    std::vector<Sample> samples_of(const std::string &id_or_name) const;
    std::size_t add_stream(const StreamInfo &info);
};

struct Corruption {
    std::uint64_t byte_offset = 0;
    std::size_t line = 0;
    std::string message;
};

struct LoadResult {
    Recording recording; // everything before the first corrupt record
    std::optional<Corruption> corruption;
};

LoadResult parse_recording(std::istream &in);
LoadResult load_recording(const std::filesystem::path &path);
// Like load_recording but throws a Corrupt error naming the byte offset.
Recording read_recording(const std::filesystem::path &path);

std::string wall_clock_now_iso();

// Appends records to a stream and checks every write. A failed write
// (e.g. disk full) raises an Io error.
class RecordingWriter {
public:
    RecordingWriter(std::ostream &out, const SessionHeader &header, const std::vector<StreamInfo> &streams);
    void write(std::size_t stream, const Sample &s);
    void flush();

private:
    void line(const std::string &s);
    std::ostream &out_;
    std::vector<StreamInfo> streams_;
};

void save_recording(const std::filesystem::path &path, const Recording &rec);
void write_recording(std::ostream &out, const Recording &rec);

struct StreamSummary {
    std::string source_id;
    std::uint64_t samples = 0;
    std::uint64_t overflow = 0;
};

struct RecordingSummary {
    std::filesystem::path path;
    std::vector<StreamSummary> streams;
    std::uint64_t total_samples() const;
    std::uint64_t total_overflow() const;
};

// Consumes a set of inlets into a .pifrec file, either by explicit poll()
// calls or on its own thread between start() and stop().
class Recorder {
public:
    Recorder(const std::filesystem::path &sink, std::vector<Inlet> inlets, std::map<std::string, std::string> meta = {});
    ~Recorder();
    Recorder(const Recorder &) = delete;
    Recorder &operator=(const Recorder &) = delete;

    // Drains what is available on every inlet; waits up to `timeout` when
    // nothing is. Returns the number of samples written.
    std::size_t poll(std::chrono::duration<double> timeout = std::chrono::duration<double>(0));
    bool all_exhausted() const;

    void start();
    // Stops the background thread, drains remaining samples, flushes.
    RecordingSummary stop();
    RecordingSummary summary() const;
    // Slows the consumer down; used to exercise overflow accounting.
    void set_poll_delay(std::chrono::duration<double> d) { delay_ = d; }

private:
    std::filesystem::path path_;
    std::ofstream file_;
    std::vector<Inlet> inlets_;
    std::unique_ptr<RecordingWriter> writer_;
    std::vector<std::uint64_t> written_;
    std::thread thread_;
    std::atomic<bool> running_{false};
    std::chrono::duration<double> delay_{0};
    mutable std::mutex mu_;
};

enum class ReplaySpeed { Realtime, Max };

// Shifts every timestamp so the earliest sample lands on `base`.
Recording rebase(const Recording &rec, double base);

// Registers one outlet per recorded stream and re-emits the samples.
class Replayer {
public:
    Replayer(const Recording &rec, Registry &registry);
    std::vector<StreamInfo> streams() const;
    // Blocks until every sample has been pushed. Realtime mode sleeps to
    // preserve inter-sample deltas relative to the clock at call time.
    void run(ReplaySpeed speed, const ClockFn &clock = local_clock);
    // Makes a running run() return early; safe from any thread.
    void cancel() { cancelled_ = true; }
    void close();

private:
    Recording rec_;
    std::vector<Outlet> outlets_;
    std::atomic<bool> cancelled_{false};
};

} // namespace pif::transport
