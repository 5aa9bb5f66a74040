#include "session/ws.hpp"

#include <deque>
#include <set>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "common/error.hpp"

namespace pif::session {

namespace beast = boost::beast;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

struct Conn;

} // namespace

struct WsServer::Impl : std::enable_shared_from_this<WsServer::Impl> {
    explicit Impl(SessionCore &c) : core(c) {}

    SessionCore &core;
    net::io_context ioc;
    tcp::acceptor acceptor{ioc};
    std::thread thread;
    std::shared_ptr<Conn> reader;
    std::set<std::shared_ptr<Conn>> conns;
    std::uint16_t port = 0;
    bool stopped = false;

    void accept();
};

namespace {

struct Conn : std::enable_shared_from_this<Conn> {
    Conn(tcp::socket s, std::shared_ptr<WsServer::Impl> srv) : ws(std::move(s)), srv(std::move(srv)) {}

    websocket::stream<beast::tcp_stream> ws;
    std::shared_ptr<WsServer::Impl> srv;
    beast::flat_buffer buf;
    std::deque<std::string> out;
    bool closing = false;

    void run()
    {
        ws.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws.async_accept([self = shared_from_this()](beast::error_code ec) { self->on_accept(ec); });
    }

    void on_accept(beast::error_code ec)
    {
        if (ec) {
            srv->conns.erase(shared_from_this());
            return;
        }
        if (srv->reader) {
            closing = true;
            send(encode_error("another reader is already connected"));
            return;
        }
        srv->reader = shared_from_this();
        send(srv->core.page_message());
        read();
    }

    void read()
    {
        ws.async_read(buf, [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
    }

    void drop()
    {
        if (srv->reader.get() == this)
            srv->reader.reset();
        srv->conns.erase(shared_from_this());
    }

    void on_read(beast::error_code ec)
    {
        if (ec) {
            drop();
            return;
        }
        std::string text = beast::buffers_to_string(buf.data());
        buf.consume(buf.size());
        try {
            srv->core.post_action(decode_client(text));
        } catch (const Error &e) {
            send(encode_error(e.what()));
        }
        read();
    }

    void send(std::string m)
    {
        out.push_back(std::move(m));
        if (out.size() == 1)
            write();
    }

    void write()
    {
        ws.text(true);
        ws.async_write(net::buffer(out.front()),
                       [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_write(ec); });
    }

    void on_write(beast::error_code ec)
    {
        if (ec) {
            out.clear();
            drop();
            return;
        }
        out.pop_front();
        if (!out.empty())
            write();
        else if (closing)
            ws.async_close(websocket::close_reason(websocket::close_code::policy_error, "single-reader session"),
                           [self = shared_from_this()](beast::error_code) { self->drop(); });
    }
};

} // namespace

void WsServer::Impl::accept()
{
    acceptor.async_accept([self = shared_from_this()](beast::error_code ec, tcp::socket s) {
        if (ec || self->stopped)
            return;
        auto c = std::make_shared<Conn>(std::move(s), self);
        self->conns.insert(c);
        c->run();
        self->accept();
    });
}

WsServer::WsServer(SessionCore &core, const std::string &host, std::uint16_t port)
    : impl_(std::make_shared<Impl>(core))
{
    try {
        tcp::endpoint ep(net::ip::make_address(host), port);
        impl_->acceptor.open(ep.protocol());
        impl_->acceptor.set_option(net::socket_base::reuse_address(true));
        impl_->acceptor.bind(ep);
        impl_->acceptor.listen();
        impl_->port = impl_->acceptor.local_endpoint().port();
    } catch (const boost::system::system_error &e) {
        throw network_error("cannot serve on " + host + ":" + std::to_string(port) + ": " + e.code().message());
    }
    std::weak_ptr<Impl> weak = impl_;
    core.set_listener([weak](const std::string &msg) {
        if (auto i = weak.lock())
            net::post(i->ioc, [i, msg] {
                if (i->reader)
                    i->reader->send(msg);
            });
    });
    impl_->accept();
    impl_->thread = std::thread([i = impl_] { i->ioc.run(); });
}

WsServer::~WsServer() { stop(); }

std::uint16_t WsServer::port() const { return impl_->port; }

void WsServer::stop()
{
    if (!impl_->thread.joinable())
        return;
    net::post(impl_->ioc, [i = impl_] {
        i->stopped = true;
        beast::error_code ec;
        i->acceptor.close(ec);
        for (const auto &c : i->conns)
            beast::get_lowest_layer(c->ws).socket().close(ec);
        i->conns.clear();
        i->reader.reset();
        i->ioc.stop();
    });
    impl_->thread.join();
    // Queued handlers own references to the server; run them out.
    impl_->ioc.restart();
    impl_->ioc.poll();
}

// Client ----------------------------------------------------------------------------

struct WsClient::Impl {
    net::io_context ioc;
    websocket::stream<tcp::socket> ws{ioc};
    beast::flat_buffer buf;
};

WsClient::WsClient(const std::string &host, std::uint16_t port) : impl_(std::make_unique<Impl>())
{
    try {
        tcp::resolver resolver(impl_->ioc);
        net::connect(impl_->ws.next_layer(), resolver.resolve(host, std::to_string(port)));
        impl_->ws.handshake(host + ":" + std::to_string(port), "/");
        impl_->ws.text(true);
    } catch (const boost::system::system_error &e) {
        throw network_error("cannot connect to " + host + ":" + std::to_string(port) + ": " + e.code().message());
    }
}

WsClient::~WsClient() { close(); }

void WsClient::send(const std::string &text)
{
    beast::error_code ec;
    impl_->ws.write(net::buffer(text), ec);
    if (ec)
        throw network_error("send failed: " + ec.message());
}

std::string WsClient::receive(double timeout_s)
{
    bool done = false;
    beast::error_code ec;
    impl_->ws.async_read(impl_->buf, [&](beast::error_code e, std::size_t) {
        ec = e;
        done = true;
    });
    impl_->ioc.restart();
    impl_->ioc.run_for(std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::duration<double>(timeout_s)));
    if (!done) {
        beast::error_code ignored;
        impl_->ws.next_layer().cancel(ignored);
        impl_->ioc.restart();
        impl_->ioc.run();
        throw timeout_error("no message within " + std::to_string(timeout_s) + " s");
    }
    if (ec) {
        const auto &r = impl_->ws.reason().reason;
        std::string why = ec == websocket::error::closed ? "closed by server (" + std::string(r.data(), r.size()) + ")"
                                                         : ec.message();
        throw network_error(why);
    }
    std::string s = beast::buffers_to_string(impl_->buf.data());
    impl_->buf.consume(impl_->buf.size());
    return s;
}

void WsClient::close()
{
    if (!impl_ || !impl_->ws.is_open())
        return;
    beast::error_code ec;
    impl_->ws.close(websocket::close_code::normal, ec);
}

} // namespace pif::session
