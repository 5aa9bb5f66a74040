#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "common/error.hpp"

namespace pif::transport {

enum class StreamKind { Signal, Marker };

std::string_view kind_name(StreamKind k);
StreamKind parse_kind(std::string_view s);

struct StreamInfo {
    std::string name;
    StreamKind kind = StreamKind::Signal;
    int channel_count = 1;
    double nominal_rate = 0.0; // Hz, 0 = irregular
    std::vector<std::string> channel_labels;
    std::string source_id;

    // Forces marker streams to one channel at irregular rate, fills missing
    // labels with ch0..chN and the source id with the name, then validates.
    StreamInfo normalized() const;
    void validate() const;

    bool operator==(const StreamInfo &) const = default;
};

struct Sample {
    double timestamp = 0.0;
    std::vector<double> values; // signal streams
    std::string marker;         // marker streams

    static Sample signal(double t, std::vector<double> v) { return {t, std::move(v), {}}; }
    static Sample label(double t, std::string m) { return {t, {}, std::move(m)}; }
    bool operator==(const Sample &) const = default;
};

// Seconds on the process-wide monotonic clock.
double local_clock();

constexpr std::size_t kDefaultInletCapacity = 1 << 16;

// Bounded per-inlet buffer. A full queue drops the incoming sample and
// counts it; the producer never waits.
class SampleQueue {
public:
    explicit SampleQueue(std::size_t capacity) : capacity_(capacity ? capacity : 1) {}

    void push(const Sample &s);
    std::vector<Sample> pull(std::size_t max_n, std::chrono::duration<double> timeout);
    void close();

    bool closed() const;
    bool exhausted() const; // closed and drained
    std::uint64_t overflow() const;
    std::uint64_t delivered() const;
    std::size_t size() const;

private:
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<Sample> items_;
    std::size_t capacity_;
    std::uint64_t overflow_ = 0;
    std::uint64_t delivered_ = 0;
    bool closed_ = false;
};

class Registry;
struct Channel;

class Outlet {
public:
    Outlet() = default;
    Outlet(Outlet &&) noexcept = default;
    Outlet &operator=(Outlet &&) noexcept;
    ~Outlet();

    const StreamInfo &info() const;
    void push(const Sample &s);
    void push(double t, std::vector<double> values) { push(Sample::signal(t, std::move(values))); }
    void push_marker(double t, std::string label) { push(Sample::label(t, std::move(label))); }
    // Unregisters the stream; inlets drain what is queued and then report
    // exhausted().
    void close();
    bool is_open() const { return channel_ != nullptr; }

private:
    friend class Registry;
    Outlet(std::shared_ptr<Channel> ch, Registry *reg) : channel_(std::move(ch)), registry_(reg) {}
    std::shared_ptr<Channel> channel_;
    Registry *registry_ = nullptr;
};

// Consumer end. Owns its queue; the keepalive lets a network client tie the
// lifetime of its reader thread to the inlet.
class Inlet {
public:
    Inlet() = default;
    Inlet(StreamInfo info, std::shared_ptr<SampleQueue> q, std::shared_ptr<void> keepalive = {})
        : info_(std::move(info)), queue_(std::move(q)), keepalive_(std::move(keepalive)) {}

    const StreamInfo &info() const { return info_; }
    std::vector<Sample> pull(std::size_t max_n, std::chrono::duration<double> timeout = std::chrono::duration<double>(0));
    bool exhausted() const { return queue_->exhausted(); }
    std::uint64_t overflow() const { return queue_->overflow(); }
    std::uint64_t delivered() const { return queue_->delivered(); }
    bool valid() const { return queue_ != nullptr; }

private:
    StreamInfo info_;
    std::shared_ptr<SampleQueue> queue_;
    std::shared_ptr<void> keepalive_;
};

// In-process stream registry. Thread-safe.
class Registry {
public:
    Registry() = default;
    Registry(const Registry &) = delete;
    Registry &operator=(const Registry &) = delete;
    ~Registry();

    Outlet open_outlet(const StreamInfo &info);
    // Subscribes to a stream by source id, falling back to the name.
    Inlet open_inlet(const std::string &id_or_name, std::size_t capacity = kDefaultInletCapacity);
    std::vector<StreamInfo> list() const;
    std::optional<StreamInfo> find(const std::string &id_or_name) const;

private:
    friend class Outlet;
    void unregister(const std::string &source_id);
    std::shared_ptr<Channel> lookup(const std::string &id_or_name) const;

    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<Channel>> channels_;
};

// Checks arity and timestamp order of `s` against the stream; throws
// InvalidArgument on violation. Shared by local and remote outlets.
void check_sample(const StreamInfo &info, const Sample &s, std::optional<double> last_timestamp);

} // namespace pif::transport
