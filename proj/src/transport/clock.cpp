#include "transport/clock.hpp"

#include <algorithm>

#include "common/error.hpp"

namespace pif::transport {

namespace {

// Linear interpolation between order statistics (the usual "type 7" rule).
double quantile(std::vector<double> v, double q)
{
    std::sort(v.begin(), v.end());
    double pos = q * static_cast<double>(v.size() - 1);
    auto lo = static_cast<std::size_t>(pos);
    std::size_t hi = std::min(lo + 1, v.size() - 1);
    double frac = pos - static_cast<double>(lo);
    return v[lo] + (v[hi] - v[lo]) * frac;
}

} // namespace

ClockOffset offset_from_exchanges(const std::vector<PingExchange> &ex, std::string remote_stream)
{
    if (ex.size() < static_cast<std::size_t>(kMinExchanges))
        throw timeout_error("clock offset: " + std::to_string(ex.size()) + " exchanges completed, need " +
                            std::to_string(kMinExchanges));
    std::vector<double> est;
    est.reserve(ex.size());
    for (const PingExchange &e : ex)
        est.push_back(e.t_remote - 0.5 * (e.t_send + e.t_recv));
    ClockOffset out;
    out.remote_stream = std::move(remote_stream);
    out.offset = quantile(est, 0.5);
    out.uncertainty = 0.5 * (quantile(est, 0.75) - quantile(est, 0.25));
    out.measured_at = ex.back().t_recv;
    out.exchanges = static_cast<int>(ex.size());
    return out;
}

ClockOffset estimate_offset(const PingFn &ping, const ClockFn &local, int exchanges, std::string remote_stream)
{
    if (exchanges < kMinExchanges)
        throw invalid_argument("clock offset needs at least " + std::to_string(kMinExchanges) + " exchanges");
    std::vector<PingExchange> done;
    for (int i = 0; i < exchanges; ++i) {
        PingExchange e;
        e.t_send = local();
        auto remote = ping();
        e.t_recv = local();
        if (!remote)
            continue;
        e.t_remote = *remote;
        done.push_back(e);
    }
    return offset_from_exchanges(done, std::move(remote_stream));
}

SimulatedLink::SimulatedLink(double remote_shift, Latency outbound, Latency inbound, std::uint64_t seed)
    : shift_(remote_shift), out_(std::move(outbound)), in_(std::move(inbound)), rng_(seed)
{
}

std::optional<double> SimulatedLink::ping()
{
    now_ += out_(rng_);
    double stamp = remote_now();
    now_ += in_(rng_);
    if (loss_ > 0 && std::uniform_real_distribution<double>(0, 1)(rng_) < loss_)
        return std::nullopt;
    return stamp;
}

} // namespace pif::transport
