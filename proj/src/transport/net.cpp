#include "transport/net.hpp"

#include <poll.h>

#include <array>
#include <atomic>
#include <list>
#include <mutex>
#include <optional>
#include <thread>

#include <boost/asio.hpp>

#include "transport/codec.hpp"

namespace pif::transport {

namespace asio = boost::asio;
using tcp = asio::ip::tcp;

namespace {

constexpr std::uint32_t kMaxFrame = 16u << 20;

void write_frame(tcp::socket &sock, const json &j)
{
    std::string body = j.dump();
    std::uint32_t n = static_cast<std::uint32_t>(body.size());
    std::array<unsigned char, 4> len{static_cast<unsigned char>(n >> 24), static_cast<unsigned char>(n >> 16),
                                     static_cast<unsigned char>(n >> 8), static_cast<unsigned char>(n)};
    std::array<asio::const_buffer, 2> bufs{asio::buffer(len), asio::buffer(body)};
    boost::system::error_code ec;
    asio::write(sock, bufs, ec);
    if (ec)
        throw network_error("disconnected peer: " + ec.message());
}

// nullopt on orderly shutdown by the peer.
std::optional<json> read_frame(tcp::socket &sock)
{
    std::array<unsigned char, 4> len{};
    boost::system::error_code ec;
    asio::read(sock, asio::buffer(len), ec);
    if (ec == asio::error::eof || ec == asio::error::connection_reset || ec == asio::error::operation_aborted ||
        ec == asio::error::bad_descriptor)
        return std::nullopt;
    if (ec)
        throw network_error("read failed: " + ec.message());
    std::uint32_t n = (std::uint32_t(len[0]) << 24) | (std::uint32_t(len[1]) << 16) | (std::uint32_t(len[2]) << 8) |
                      std::uint32_t(len[3]);
    if (n > kMaxFrame)
        throw network_error("frame of " + std::to_string(n) + " bytes exceeds limit");
    std::string body(n, '\0');
    asio::read(sock, asio::buffer(body), ec);
    if (ec)
        return std::nullopt;
    try {
        return json::parse(body);
    } catch (const json::exception &e) {
        throw network_error(std::string("malformed frame: ") + e.what());
    }
}

bool wait_readable(tcp::socket &sock, double timeout_s)
{
    pollfd p{sock.native_handle(), POLLIN, 0};
    int ms = static_cast<int>(timeout_s * 1000.0);
    return ::poll(&p, 1, ms) > 0;
}

tcp::socket connect_to(asio::io_context &io, const std::string &host, std::uint16_t port)
{
    tcp::socket sock(io);
    boost::system::error_code ec;
    tcp::resolver r(io);
    auto eps = r.resolve(host, std::to_string(port), ec);
    if (!ec)
        asio::connect(sock, eps, ec);
    if (ec)
        throw network_error("cannot connect to " + host + ":" + std::to_string(port) + ": " + ec.message());
    sock.set_option(tcp::no_delay(true));
    return sock;
}

json expect_reply(tcp::socket &sock)
{
    auto reply = read_frame(sock);
    if (!reply)
        throw network_error("disconnected peer");
    if (reply->value("op", "") == "error")
        throw invalid_argument(reply->value("message", "remote error"));
    return *reply;
}

json error_frame(const std::string &msg)
{
    return json{{"op", "error"}, {"message", msg}};
}

} // namespace

// Hub -------------------------------------------------------------------------

struct Connection {
    explicit Connection(tcp::socket s) : sock(std::move(s)) {}
    tcp::socket sock;
    std::mutex write_mu;
    std::thread reader;
    std::thread pump;
    std::atomic<bool> stop{false};
    std::atomic<bool> finished{false};

    void send(const json &j)
    {
        std::lock_guard lk(write_mu);
        write_frame(sock, j);
    }

    void shutdown()
    {
        stop = true;
        boost::system::error_code ec;
        sock.shutdown(tcp::socket::shutdown_both, ec);
    }
};

struct Hub::Impl {
    Registry &registry;
    ClockFn clock;
    asio::io_context io;
    tcp::acceptor acceptor;
    std::thread accept_thread;
    std::mutex mu;
    std::list<std::shared_ptr<Connection>> conns;
    std::atomic<bool> stopping{false};
    std::uint16_t bound_port = 0;

    Impl(Registry &r, const std::string &host, std::uint16_t port, ClockFn c)
        : registry(r), clock(std::move(c)), acceptor(io)
    {
        boost::system::error_code ec;
        auto addr = asio::ip::make_address(host, ec);
        if (ec)
            throw invalid_argument("bad hub address '" + host + "'");
        tcp::endpoint ep(addr, port);
        acceptor.open(ep.protocol(), ec);
        if (!ec)
            acceptor.set_option(tcp::acceptor::reuse_address(true), ec);
        if (!ec)
            acceptor.bind(ep, ec);
        if (!ec)
            acceptor.listen(asio::socket_base::max_listen_connections, ec);
        if (ec)
            throw network_error("cannot bind " + host + ":" + std::to_string(port) + ": " + ec.message());
        bound_port = acceptor.local_endpoint().port();
        accept_thread = std::thread([this] { accept_loop(); });
    }

    void accept_loop()
    {
        while (!stopping) {
            tcp::socket sock(io);
            boost::system::error_code ec;
            acceptor.accept(sock, ec);
            if (stopping)
                break;
            if (ec)
                continue;
            sock.set_option(tcp::no_delay(true), ec);
            auto c = std::make_shared<Connection>(std::move(sock));
            std::lock_guard lk(mu);
            reap();
            conns.push_back(c);
            c->reader = std::thread([this, c] { serve(*c); });
        }
    }

    void reap()
    {
        for (auto it = conns.begin(); it != conns.end();) {
            if ((*it)->finished) {
                if ((*it)->reader.joinable())
                    (*it)->reader.join();
                it = conns.erase(it);
            } else {
                ++it;
            }
        }
    }

    void serve(Connection &c)
    {
        std::optional<Outlet> outlet;
        try {
            while (!c.stop) {
                auto frame = read_frame(c.sock);
                if (!frame)
                    break;
                std::string op = frame->value("op", "");
                try {
                    if (op == "ping") {
                        c.send({{"op", "pong"}, {"id", frame->value("id", 0)}, {"t", clock()}});
                    } else if (op == "list") {
                        json arr = json::array();
                        for (const StreamInfo &s : registry.list())
                            arr.push_back(info_to_json(s));
                        c.send({{"op", "streams"}, {"streams", arr}});
                    } else if (op == "publish") {
                        if (outlet)
                            throw state_error("connection already publishes a stream");
                        outlet = registry.open_outlet(info_from_json(frame->at("info")));
                        c.send({{"op", "ok"}, {"info", info_to_json(outlet->info())}});
                    } else if (op == "push") {
                        if (!outlet)
                            throw state_error("push before publish");
                        outlet->push(sample_from_json(*frame, outlet->info()));
                    } else if (op == "close") {
                        outlet.reset();
                    } else if (op == "subscribe") {
                        if (c.pump.joinable())
                            throw state_error("connection already subscribed");
                        auto cap = frame->value("capacity", static_cast<std::size_t>(kDefaultInletCapacity));
                        Inlet in = registry.open_inlet(frame->value("stream", ""), cap);
                        c.send({{"op", "ok"}, {"info", info_to_json(in.info())}});
                        c.pump = std::thread([&c, in]() mutable { pump(c, in); });
                    } else {
                        throw invalid_argument("unknown op '" + op + "'");
                    }
                } catch (const Error &e) {
                    if (e.category() == Error::Category::Network)
                        throw;
                    c.send(error_frame(e.what()));
                } catch (const std::exception &e) {
                    c.send(error_frame(e.what()));
                }
            }
        } catch (const std::exception &) {
        }
        outlet.reset();
        c.shutdown();
        if (c.pump.joinable())
            c.pump.join();
        c.finished = true;
    }

    static void pump(Connection &c, Inlet in)
    {
        try {
            while (!c.stop) {
                auto batch = in.pull(512, std::chrono::milliseconds(20));
                for (const Sample &s : batch) {
                    json j{{"op", "sample"}};
                    sample_to_json(s, j);
                    c.send(j);
                }
                if (batch.empty() && in.exhausted()) {
                    c.send({{"op", "eos"}});
                    break;
                }
            }
        } catch (const std::exception &) {
            c.stop = true;
        }
    }

    void stop()
    {
        if (stopping.exchange(true))
            return;
        boost::system::error_code ec;
        // Wake the blocking accept with a throwaway connection.
        try {
            asio::io_context tmp;
            tcp::socket s(tmp);
            s.connect(tcp::endpoint(acceptor.local_endpoint().address(), bound_port), ec);
        } catch (...) {
        }
        if (accept_thread.joinable())
            accept_thread.join();
        acceptor.close(ec);
        std::lock_guard lk(mu);
        for (auto &c : conns)
            c->shutdown();
        for (auto &c : conns)
            if (c->reader.joinable())
                c->reader.join();
        conns.clear();
    }
};

Hub::Hub(Registry &registry, const std::string &host, std::uint16_t port, ClockFn clock)
    : impl_(std::make_unique<Impl>(registry, host, port, std::move(clock)))
{
}

Hub::~Hub() { stop(); }

std::uint16_t Hub::port() const { return impl_->bound_port; }

void Hub::stop()
{
    if (impl_)
        impl_->stop();
}

// Clients ---------------------------------------------------------------------

std::vector<StreamInfo> remote_list(const std::string &host, std::uint16_t port)
{
    asio::io_context io;
    tcp::socket sock = connect_to(io, host, port);
    write_frame(sock, {{"op", "list"}});
    json reply = expect_reply(sock);
    std::vector<StreamInfo> out;
    for (const json &j : reply.at("streams"))
        out.push_back(info_from_json(j));
    return out;
}

struct RemoteOutlet::Impl {
    asio::io_context io;
    tcp::socket sock{io};
    StreamInfo info;
    std::optional<double> last_t;
    bool open = false;
};

RemoteOutlet::RemoteOutlet(const std::string &host, std::uint16_t port, const StreamInfo &info)
    : impl_(std::make_unique<Impl>())
{
    StreamInfo n = info.normalized();
    impl_->sock = connect_to(impl_->io, host, port);
    write_frame(impl_->sock, {{"op", "publish"}, {"info", info_to_json(n)}});
    json reply = expect_reply(impl_->sock);
    impl_->info = info_from_json(reply.at("info"));
    impl_->open = true;
}

RemoteOutlet::~RemoteOutlet()
{
    try {
        close();
    } catch (...) {
    }
}

RemoteOutlet::RemoteOutlet(RemoteOutlet &&) noexcept = default;
RemoteOutlet &RemoteOutlet::operator=(RemoteOutlet &&) noexcept = default;

const StreamInfo &RemoteOutlet::info() const { return impl_->info; }

void RemoteOutlet::push(const Sample &s)
{
    if (!impl_ || !impl_->open)
        throw state_error("push on a closed outlet");
    check_sample(impl_->info, s, impl_->last_t);
    json j{{"op", "push"}};
    sample_to_json(s, j);
    write_frame(impl_->sock, j);
    impl_->last_t = s.timestamp;
}

void RemoteOutlet::close()
{
    if (!impl_ || !impl_->open)
        return;
    impl_->open = false;
    try {
        write_frame(impl_->sock, {{"op", "close"}});
    } catch (const Error &) {
    }
    boost::system::error_code ec;
    impl_->sock.shutdown(tcp::socket::shutdown_both, ec);
    impl_->sock.close(ec);
}

namespace {

struct RemoteSubscription {
    asio::io_context io;
    tcp::socket sock{io};
    std::thread reader;

    ~RemoteSubscription()
    {
        boost::system::error_code ec;
        sock.shutdown(tcp::socket::shutdown_both, ec);
        if (reader.joinable())
            reader.join();
        sock.close(ec);
    }
};

} // namespace

Inlet remote_inlet(const std::string &host, std::uint16_t port, const std::string &id_or_name, std::size_t capacity)
{
    auto sub = std::make_shared<RemoteSubscription>();
    sub->sock = connect_to(sub->io, host, port);
    write_frame(sub->sock, {{"op", "subscribe"}, {"stream", id_or_name}, {"capacity", capacity}});
    json reply = expect_reply(sub->sock);
    StreamInfo info = info_from_json(reply.at("info"));
    auto q = std::make_shared<SampleQueue>(capacity);
    sub->reader = std::thread([s = sub.get(), q, info] {
        try {
            while (auto frame = read_frame(s->sock)) {
                std::string op = frame->value("op", "");
                if (op == "eos")
                    break;
                if (op == "sample")
                    q->push(sample_from_json(*frame, info));
            }
        } catch (const std::exception &) {
        }
        q->close();
    });
    return Inlet(info, q, sub);
}

ClockOffset remote_offset(const std::string &host, std::uint16_t port, int exchanges, double timeout_s,
                          const ClockFn &local)
{
    asio::io_context io;
    tcp::socket sock = connect_to(io, host, port);
    int next_id = 0;
    PingFn ping = [&]() -> std::optional<double> {
        int id = ++next_id;
        write_frame(sock, {{"op", "ping"}, {"id", id}});
        double deadline = local_clock() + timeout_s;
        while (true) {
            double left = deadline - local_clock();
            if (left <= 0 || !wait_readable(sock, left))
                return std::nullopt;
            auto frame = read_frame(sock);
            if (!frame)
                return std::nullopt;
            if (frame->value("op", "") == "pong" && frame->value("id", -1) == id)
                return frame->at("t").get<double>();
        }
    };
    return estimate_offset(ping, local, exchanges, host + ":" + std::to_string(port));
}

} // namespace pif::transport
