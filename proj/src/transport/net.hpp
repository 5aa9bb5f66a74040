#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "transport/clock.hpp"
#include "transport/stream.hpp"

namespace pif::transport {

constexpr std::uint16_t kDefaultPort = 16571;

// Serves a Registry over TCP. Frames are a 4-byte big-endian length
// followed by one JSON object. Requests: list, publish (then push frames),
// subscribe (then sample frames flow back), ping.
class Hub {
public:
    // Port 0 binds an ephemeral port; see port(). `clock` stamps pong
    // replies (tests inject a shifted clock).
    Hub(Registry &registry, const std::string &host = "127.0.0.1", std::uint16_t port = kDefaultPort,
        ClockFn clock = local_clock);
    ~Hub();
    Hub(const Hub &) = delete;
    Hub &operator=(const Hub &) = delete;

    std::uint16_t port() const;
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

std::vector<StreamInfo> remote_list(const std::string &host, std::uint16_t port);

// Producer connected to a hub. Validates locally before sending.
class RemoteOutlet {
public:
    RemoteOutlet(const std::string &host, std::uint16_t port, const StreamInfo &info);
    ~RemoteOutlet();
    RemoteOutlet(RemoteOutlet &&) noexcept;
    RemoteOutlet &operator=(RemoteOutlet &&) noexcept;

    const StreamInfo &info() const;
    void push(const Sample &s);
    void close();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Subscribes to a stream on a hub. Samples arrive on a reader thread into a
// bounded local queue; the inlet reports exhausted() once the publisher
// closes or the connection drops.
Inlet remote_inlet(const std::string &host, std::uint16_t port, const std::string &id_or_name,
                   std::size_t capacity = kDefaultInletCapacity);

// Ping-pong clock offset against a hub's clock. Each ping waits at most
// `timeout`.
ClockOffset remote_offset(const std::string &host, std::uint16_t port, int exchanges = 8,
                          double timeout_s = 1.0, const ClockFn &local = local_clock);

} // namespace pif::transport
