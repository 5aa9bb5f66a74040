#include "pipeline/stream.hpp"

#include <algorithm>

#include "common/error.hpp"
#include "json.hpp"
#include "transport/codec.hpp"

namespace pif::pipeline {

using nlohmann::json;
using transport::Sample;

WindowStream::WindowStream(StreamNames names) : names_(std::move(names)) {}

std::vector<ClosedWindow> WindowStream::feed(const std::string &data)
{
    std::vector<ClosedWindow> out;
    partial_ += data;
    std::size_t start = 0;
    for (std::size_t nl; (nl = partial_.find('\n', start)) != std::string::npos; start = nl + 1) {
        std::string line = partial_.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        auto w = feed_line(line);
        std::move(w.begin(), w.end(), std::back_inserter(out));
    }
    partial_.erase(0, start);
    return out;
}

std::vector<ClosedWindow> WindowStream::feed_line(const std::string &line)
{
    if (finished_)
        throw state_error("window stream already finished");
    ++line_no_;
    if (line.empty())
        return {};
    auto bad = [&](const std::string &why) {
        return Error(Error::Category::Corrupt, "line " + std::to_string(line_no_) + ": " + why);
    };
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception &) {
        throw bad("malformed record");
    }
    try {
        std::string type = j.at("type").get<std::string>();
        if (!have_header_) {
            if (type != "session" || j.value("format", "") != "pifrec")
                throw bad("missing session header");
            if (j.contains("meta") && j["meta"].contains("subject") && j["meta"]["subject"].is_string())
                subject_ = j["meta"]["subject"].get<std::string>();
            have_header_ = true;
            return {};
        }
        if (type == "stream") {
            transport::StreamInfo info = transport::info_from_json(j.at("info"));
            std::size_t idx = meta_.add_stream(info);
            const std::pair<const std::string *, Signal> known[] = {{&names_.eda, Signal::Eda},
                                                                    {&names_.breathing, Signal::Breathing},
                                                                    {&names_.gaze, Signal::Gaze},
                                                                    {&names_.head, Signal::Head}};
            for (const auto &[name, sig] : known)
                if (info.name == *name && info.kind == transport::StreamKind::Signal)
                    signal_of_[idx] = sig;
            return {};
        }
        if (type != "sample")
            throw bad("unknown record type '" + type + "'");
        auto idx = meta_.stream_index(j.at("stream").get<std::string>());
        if (!idx)
            throw bad("sample for undeclared stream");
        Sample s = transport::sample_from_json(j, meta_.streams[*idx]);
        if (auto it = last_t_.find(*idx); it != last_t_.end() && s.timestamp < it->second)
            throw bad("timestamp regression");
        last_t_[*idx] = s.timestamp;
        t_max_ = std::max(t_max_, s.timestamp);
        if (meta_.streams[*idx].name == names_.markers)
            on_marker(s);
        else if (signal_of_.count(*idx) && s.timestamp >= floor_)
            buf_[*idx].push_back(std::move(s));
    } catch (const json::exception &e) {
        throw bad(std::string("bad record: ") + e.what());
    } catch (const Error &e) {
        if (e.category() == Error::Category::Corrupt)
            throw;
        throw bad(e.what());
    }
    return release(false);
}

void WindowStream::on_marker(const Sample &m)
{
    const std::string &l = m.marker;
    auto open = [&]() -> Pending * {
        return !pending_.empty() && !pending_.back().t1 ? &pending_.back() : nullptr;
    };
    if (l.rfind("SUBJECT:", 0) == 0 && subject_.empty()) {
        subject_ = l.substr(8);
    } else if (l.rfind("STORY:", 0) == 0) {
        if (Pending *p = open())
            p->t1 = m.timestamp;
        pending_.push_back({l.substr(6), std::nullopt, std::nullopt, m.timestamp, std::nullopt});
    } else if (l.rfind("END:", 0) == 0) {
        if (Pending *p = open(); p && p->story == l.substr(4))
            p->t1 = m.timestamp;
    } else if (l.rfind("LABEL:", 0) == 0) {
        if (Pending *p = open())
            p->label = l.substr(6);
    } else if (l.rfind("TRUTH:", 0) == 0) {
        if (Pending *p = open())
            p->truth = l.substr(6);
    }
}

std::vector<ClosedWindow> WindowStream::release(bool all)
{
    std::vector<ClosedWindow> out;
    while (!pending_.empty()) {
        Pending &p = pending_.front();
        if (!p.t1) {
            if (!all)
                break;
            p.t1 = t_max_ + 1e-9;
        }
        double t1 = *p.t1;
        if (!all)
            for (const auto &[idx, sig] : signal_of_)
                if (auto it = last_t_.find(idx); it == last_t_.end() || it->second < t1)
                    return out;
        ClosedWindow w;
        w.subject = subject_;
        w.truth = p.truth;
        w.labeled.story = p.story;
        w.labeled.label = p.label ? p.label : std::optional<std::string>(p.story);
        w.labeled.window.t0 = p.t0;
        w.labeled.window.t1 = t1;
        w.labeled.window.eda_rate = w.labeled.window.breathing_rate = 512.0;
        for (const auto &[idx, sig] : signal_of_) {
            double rate = meta_.streams[idx].nominal_rate;
            if (sig == Signal::Eda && rate > 0)
                w.labeled.window.eda_rate = rate;
            if (sig == Signal::Breathing && rate > 0)
                w.labeled.window.breathing_rate = rate;
            for (const Sample &s : buf_[idx])
                if (s.timestamp >= p.t0 && s.timestamp < t1)
                    append_sample(w.labeled.window, sig, s);
        }
        if (t1 > p.t0)
            out.push_back(std::move(w));
        floor_ = std::max(floor_, t1);
        pending_.erase(pending_.begin());
        double keep = pending_.empty() ? floor_ : std::min(floor_, pending_.front().t0);
        for (auto &[idx, v] : buf_)
            v.erase(v.begin(), std::lower_bound(v.begin(), v.end(), keep,
                                                [](const Sample &s, double t) { return s.timestamp < t; }));
    }
    return out;
}

std::vector<ClosedWindow> WindowStream::finish()
{
    std::vector<ClosedWindow> out;
    if (!partial_.empty()) {
        std::string rest;
        std::swap(rest, partial_);
        out = feed_line(rest);
    }
    auto more = release(true);
    std::move(more.begin(), more.end(), std::back_inserter(out));
    finished_ = true;
    return out;
}

} // namespace pif::pipeline
