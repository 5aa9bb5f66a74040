#pragma once

#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace pif::transport {

struct ClockOffset {
    std::string remote_stream;
    double offset = 0.0;      // remote clock minus local clock, seconds
    double uncertainty = 0.0; // half the interquartile range of the per-exchange estimates
    double measured_at = 0.0; // local clock
    int exchanges = 0;
};

struct PingExchange {
    double t_send = 0.0;   // local
    double t_remote = 0.0; // remote stamp in the reply
    double t_recv = 0.0;   // local
};

constexpr int kMinExchanges = 5;

// Pure estimator over completed exchanges. Throws Timeout when fewer than
// kMinExchanges completed. Assumes symmetric latency; a path whose outbound
// and return delays differ biases the result by half the difference.
ClockOffset offset_from_exchanges(const std::vector<PingExchange> &ex, std::string remote_stream = {});

// One ping: returns the remote stamp, or nullopt on timeout.
using PingFn = std::function<std::optional<double>()>;
using ClockFn = std::function<double()>;

ClockOffset estimate_offset(const PingFn &ping, const ClockFn &local, int exchanges = 8,
                            std::string remote_stream = {});

// Deterministic in-memory network for offset tests: a virtual local clock,
// a remote clock at a fixed shift, and per-direction latencies drawn from
// caller-supplied samplers.
class SimulatedLink {
public:
    using Latency = std::function<double(std::mt19937_64 &)>;

    SimulatedLink(double remote_shift, Latency outbound, Latency inbound, std::uint64_t seed = 1);

    double local_now() const { return now_; }
    double remote_now() const { return now_ + shift_; }
    // Probability that an exchange is lost (reply never arrives).
    void set_loss(double p) { loss_ = p; }

    std::optional<double> ping();
    PingFn ping_fn() { return [this] { return ping(); }; }
    ClockFn clock_fn() const { return [this] { return now_; }; }

private:
    double now_ = 1000.0;
    double shift_;
    Latency out_, in_;
    double loss_ = 0.0;
    std::mt19937_64 rng_;
};

} // namespace pif::transport
