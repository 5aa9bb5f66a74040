#include "transport/stream.hpp"

#include <algorithm>
#include <cmath>

namespace pif::transport {

std::string_view kind_name(StreamKind k)
{
    return k == StreamKind::Marker ? "marker" : "signal";
}

StreamKind parse_kind(std::string_view s)
{
    if (s == "marker")
        return StreamKind::Marker;
    if (s == "signal")
        return StreamKind::Signal;
    throw invalid_argument("unknown stream kind '" + std::string(s) + "'");
}

StreamInfo StreamInfo::normalized() const
{
    StreamInfo out = *this;
    if (out.kind == StreamKind::Marker) {
        out.channel_count = 1;
        out.nominal_rate = 0.0;
        if (out.channel_labels.size() != 1)
            out.channel_labels = {"label"};
    }
    if (out.channel_labels.empty() && out.channel_count > 0)
        for (int i = 0; i < out.channel_count; ++i)
            out.channel_labels.push_back("ch" + std::to_string(i));
    if (out.source_id.empty())
        out.source_id = out.name;
    out.validate();
    return out;
}

void StreamInfo::validate() const
{
    if (name.empty())
        throw invalid_argument("stream name is empty");
    if (source_id.empty())
        throw invalid_argument("stream '" + name + "': empty source_id");
    if (channel_count < 1)
        throw invalid_argument("stream '" + name + "': channel_count must be positive");
    if (!std::isfinite(nominal_rate) || nominal_rate < 0)
        throw invalid_argument("stream '" + name + "': nominal_rate must be >= 0");
    if (kind == StreamKind::Marker && (channel_count != 1 || nominal_rate != 0.0))
        throw invalid_argument("stream '" + name + "': marker streams have one channel and rate 0");
    if (channel_labels.size() != static_cast<std::size_t>(channel_count))
        throw invalid_argument("stream '" + name + "': " + std::to_string(channel_labels.size()) +
                               " channel labels for " + std::to_string(channel_count) + " channels");
}

double local_clock()
{
    using namespace std::chrono;
    return duration<double>(steady_clock::now().time_since_epoch()).count();
}

void check_sample(const StreamInfo &info, const Sample &s, std::optional<double> last_timestamp)
{
    if (!std::isfinite(s.timestamp))
        throw invalid_argument("stream '" + info.source_id + "': non-finite timestamp");
    if (info.kind == StreamKind::Signal) {
        if (s.values.size() != static_cast<std::size_t>(info.channel_count))
            throw invalid_argument("stream '" + info.source_id + "': arity mismatch (" +
                                   std::to_string(s.values.size()) + " values for " +
                                   std::to_string(info.channel_count) + " channels)");
        if (!s.marker.empty())
            throw invalid_argument("stream '" + info.source_id + "': label on a signal stream");
    } else if (!s.values.empty()) {
        throw invalid_argument("stream '" + info.source_id + "': numeric values on a marker stream");
    }
    if (last_timestamp && s.timestamp < *last_timestamp)
        throw invalid_argument("stream '" + info.source_id + "': timestamp regression");
}

// SampleQueue -----------------------------------------------------------------

void SampleQueue::push(const Sample &s)
{
    {
        std::lock_guard lk(mu_);
        if (closed_)
            return;
        if (items_.size() >= capacity_) {
            ++overflow_;
            return;
        }
        items_.push_back(s);
    }
    cv_.notify_one();
}

std::vector<Sample> SampleQueue::pull(std::size_t max_n, std::chrono::duration<double> timeout)
{
    std::unique_lock lk(mu_);
    if (items_.empty() && !closed_ && timeout.count() > 0)
        cv_.wait_for(lk, timeout, [&] { return !items_.empty() || closed_; });
    std::size_t n = std::min(max_n, items_.size());
    std::vector<Sample> out(std::make_move_iterator(items_.begin()), std::make_move_iterator(items_.begin() + n));
    items_.erase(items_.begin(), items_.begin() + n);
    delivered_ += n;
    return out;
}

void SampleQueue::close()
{
    {
        std::lock_guard lk(mu_);
        closed_ = true;
    }
    cv_.notify_all();
}

bool SampleQueue::closed() const
{
    std::lock_guard lk(mu_);
    return closed_;
}

bool SampleQueue::exhausted() const
{
    std::lock_guard lk(mu_);
    return closed_ && items_.empty();
}

std::uint64_t SampleQueue::overflow() const
{
    std::lock_guard lk(mu_);
    return overflow_;
}

std::uint64_t SampleQueue::delivered() const
{
    std::lock_guard lk(mu_);
    return delivered_;
}

std::size_t SampleQueue::size() const
{
    std::lock_guard lk(mu_);
    return items_.size();
}

// Channel / Outlet ------------------------------------------------------------

struct Channel {
    StreamInfo info;
    std::mutex mu;
    std::vector<std::weak_ptr<SampleQueue>> subscribers;
    std::optional<double> last_timestamp;
    bool closed = false;
};

Outlet &Outlet::operator=(Outlet &&o) noexcept
{
    if (this != &o) {
        close();
        channel_ = std::move(o.channel_);
        registry_ = o.registry_;
    }
    return *this;
}

Outlet::~Outlet() { close(); }

const StreamInfo &Outlet::info() const
{
    if (!channel_)
        throw state_error("outlet is closed");
    return channel_->info;
}

void Outlet::push(const Sample &s)
{
    if (!channel_)
        throw state_error("push on a closed outlet");
    std::vector<std::shared_ptr<SampleQueue>> subs;
    {
        std::lock_guard lk(channel_->mu);
        check_sample(channel_->info, s, channel_->last_timestamp);
        channel_->last_timestamp = s.timestamp;
        auto &v = channel_->subscribers;
        for (auto it = v.begin(); it != v.end();) {
            if (auto q = it->lock()) {
                subs.push_back(std::move(q));
                ++it;
            } else {
                it = v.erase(it);
            }
        }
    }
    for (auto &q : subs)
        q->push(s);
}

void Outlet::close()
{
    if (!channel_)
        return;
    std::vector<std::weak_ptr<SampleQueue>> subs;
    {
        std::lock_guard lk(channel_->mu);
        channel_->closed = true;
        subs.swap(channel_->subscribers);
    }
    for (auto &w : subs)
        if (auto q = w.lock())
            q->close();
    if (registry_)
        registry_->unregister(channel_->info.source_id);
    channel_.reset();
}

// Inlet -----------------------------------------------------------------------

std::vector<Sample> Inlet::pull(std::size_t max_n, std::chrono::duration<double> timeout)
{
    if (!queue_)
        throw state_error("pull on an unconnected inlet");
    return queue_->pull(max_n, timeout);
}

// Registry --------------------------------------------------------------------

Registry::~Registry()
{
    std::lock_guard lk(mu_);
    channels_.clear();
}

Outlet Registry::open_outlet(const StreamInfo &info)
{
    auto ch = std::make_shared<Channel>();
    ch->info = info.normalized();
    std::lock_guard lk(mu_);
    if (channels_.count(ch->info.source_id))
        throw invalid_argument("duplicate source_id '" + ch->info.source_id + "'");
    channels_[ch->info.source_id] = ch;
    return Outlet(ch, this);
}

std::shared_ptr<Channel> Registry::lookup(const std::string &id_or_name) const
{
    auto it = channels_.find(id_or_name);
    if (it != channels_.end())
        return it->second;
    for (const auto &[id, ch] : channels_)
        if (ch->info.name == id_or_name)
            return ch;
    return nullptr;
}

Inlet Registry::open_inlet(const std::string &id_or_name, std::size_t capacity)
{
    std::shared_ptr<Channel> ch;
    {
        std::lock_guard lk(mu_);
        ch = lookup(id_or_name);
    }
    if (!ch)
        throw invalid_argument("no stream named '" + id_or_name + "'");
    auto q = std::make_shared<SampleQueue>(capacity);
    {
        std::lock_guard lk(ch->mu);
        if (ch->closed)
            q->close();
        else
            ch->subscribers.push_back(q);
    }
    return Inlet(ch->info, q);
}

std::vector<StreamInfo> Registry::list() const
{
    std::lock_guard lk(mu_);
    std::vector<StreamInfo> out;
    for (const auto &[id, ch] : channels_)
        out.push_back(ch->info);
    return out;
}

std::optional<StreamInfo> Registry::find(const std::string &id_or_name) const
{
    std::lock_guard lk(mu_);
    if (auto ch = lookup(id_or_name))
        return ch->info;
    return std::nullopt;
}

void Registry::unregister(const std::string &source_id)
{
    std::lock_guard lk(mu_);
    channels_.erase(source_id);
}

} // namespace pif::transport
