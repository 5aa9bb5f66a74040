#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "session/session.hpp"

namespace pif::session {

// WebSocket front end for one SessionCore. One reader at a time: a second
// connection receives an error message and is closed. On connect the reader
// receives the current page. Installs the core's listener.
class WsServer {
public:
    // Port 0 binds an ephemeral port. Throws a Network error when the
    // address cannot be bound.
    WsServer(SessionCore &core, const std::string &host, std::uint16_t port);
    ~WsServer();
    WsServer(const WsServer &) = delete;
    WsServer &operator=(const WsServer &) = delete;

    std::uint16_t port() const;
    void stop();

    struct Impl; // shared with connection handlers

private:
    std::shared_ptr<Impl> impl_;
};

// Minimal blocking client, used by tests and the CLI.
class WsClient {
public:
    WsClient(const std::string &host, std::uint16_t port);
    ~WsClient();
    void send(const std::string &text);
    // Next text frame; throws Timeout after `timeout_s`, Network when the
    // server closed the connection.
    std::string receive(double timeout_s = 5.0);
    void close();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace pif::session
