#include "director/director.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "common/error.hpp"
#include "json.hpp"
#include "story/expr.hpp"

namespace pif::director {

using story::EngineEvent;
using story::EngineEventKind;

void KeyStats::add(double v)
{
    if (count == 0) {
        min = max = v;
    } else {
        min = std::min(min, v);
        max = std::max(max, v);
    }
    sum += v;
    ++count;
}

std::optional<double> KeyStats::mean() const
{
    if (count == 0)
        return std::nullopt;
    return sum / static_cast<double>(count);
}

std::string_view policy_name(Policy p)
{
    switch (p) {
    case Policy::Biofeedback: return "biofeedback";
    case Policy::Neuroadaptive: return "neuroadaptive";
    case Policy::Empowering: return "empowering";
    case Policy::Covert: return "covert";
    }
    return "?";
}

Policy parse_policy(std::string_view s)
{
    for (Policy p : {Policy::Biofeedback, Policy::Neuroadaptive, Policy::Empowering, Policy::Covert})
        if (policy_name(p) == s)
            return p;
    throw invalid_argument("unknown policy '" + std::string(s) + "'");
}

PolicyView policy_view(Policy p)
{
    switch (p) {
    case Policy::Biofeedback: return {true, true, true};
    case Policy::Neuroadaptive: return {false, true, false};
    case Policy::Empowering: return {false, false, true};
    case Policy::Covert: return {false, false, false};
    }
    return {};
}

namespace {

std::string lower(std::string s)
{
    for (char &c : s)
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

} // namespace

std::optional<std::string> marker_label(const EngineEvent &e)
{
    switch (e.kind) {
    case EngineEventKind::StoryStarted: return "STORY:" + e.story;
    case EngineEventKind::KnotEntered: return "KNOT:" + e.knot;
    case EngineEventKind::PageShown: return "PAGE:" + std::to_string(e.page);
    case EngineEventKind::TagOpened: return "TAG_START:" + e.tag;
    case EngineEventKind::TagClosed: return "TAG_STOP:" + e.tag;
    case EngineEventKind::BranchTaken: return "BRANCH:" + e.target;
    default: return std::nullopt;
    }
}

std::optional<EngineEvent> event_from_marker(const std::string &label)
{
    auto colon = label.find(':');
    if (colon == std::string::npos)
        return std::nullopt;
    std::string kind = label.substr(0, colon), arg = label.substr(colon + 1);
    EngineEvent e;
    if (kind == "STORY") {
        e.kind = EngineEventKind::StoryStarted;
        e.story = arg;
    } else if (kind == "KNOT") {
        e.kind = EngineEventKind::KnotEntered;
        e.knot = arg;
    } else if (kind == "PAGE") {
        e.kind = EngineEventKind::PageShown;
        try {
            e.page = static_cast<std::size_t>(std::stoul(arg));
        } catch (const std::exception &) {
            return std::nullopt;
        }
    } else if (kind == "TAG_START") {
        e.kind = EngineEventKind::TagOpened;
        e.tag = arg;
    } else if (kind == "TAG_STOP") {
        e.kind = EngineEventKind::TagClosed;
        e.tag = arg;
    } else if (kind == "BRANCH") {
        e.kind = EngineEventKind::BranchTaken;
        e.target = arg;
    } else {
        return std::nullopt;
    }
    return e;
}

std::string global_variable(const std::string &key)
{
    return story::is_phys_name(key) ? key : std::string(story::kPhysPrefix) + key;
}

// Director ------------------------------------------------------------------------

Director::Director(DirectorConfig cfg) : cfg_(std::move(cfg))
{
    if (cfg_.policy == Policy::Covert && !cfg_.allow_covert)
        throw invalid_argument("covert policy refused: it influences readers without their awareness; "
                               "enable it explicitly if you have consent to do so");
    if (cfg_.global == GlobalMode::WindowMean && cfg_.window == 0)
        throw invalid_argument("sliding window must hold at least one update");
}

void Director::diag(double t, std::string msg)
{
    diags_.push_back({t, std::move(msg)});
}

Mutations Director::on_marker(const EngineEvent &e, double t)
{
    std::lock_guard lock(mu_);
    return marker_locked(e, t);
}

Mutations Director::on_engine_event(const EngineEvent &e)
{
    std::lock_guard lock(mu_);
    double t = cfg_.clock ? cfg_.clock() : last_t_;
    return marker_locked(e, t);
}

Mutations Director::marker_locked(const EngineEvent &e, double t)
{
    last_t_ = std::max(last_t_, t);
    if (auto label = marker_label(e)) {
        markers_.push_back({t, *label});
        if (sink_)
            sink_(t, *label);
    }
    Mutations out;
    if (e.kind == EngineEventKind::StoryStarted) {
        // A story started mid-session sees the state gathered so far.
        for (const auto &[name, v] : vars_)
            out.push_back({name, v});
    } else if (e.kind == EngineEventKind::TagOpened) {
        std::string key = lower(e.tag);
        Accumulator &a = acc_[key];
        a.tag = e.tag;
        if (a.open) {
            diag(t, "tag " + e.tag + " opened while already open");
            return out;
        }
        if (cfg_.reset_on_enter.count(key) || cfg_.reset_on_enter.count(e.tag))
            a.keys.clear();
        a.open = true;
        a.opened_at = t;
    } else if (e.kind == EngineEventKind::TagClosed) {
        auto it = acc_.find(lower(e.tag));
        if (it == acc_.end() || !it->second.open) {
            diag(t, "tag " + e.tag + " closed without being opened; ignored");
            return out;
        }
        Accumulator &a = it->second;
        a.open = false;
        a.closed_at = t;
        a.visits.push_back({a.opened_at, t});
        bool any = false;
        for (const auto &[k, st] : a.keys)
            if (auto m = st.mean()) {
                std::string name = story::tag_scoped_variable(k, a.tag);
                vars_[name] = *m;
                out.push_back({name, *m});
                any = true;
            }
        if (!any)
            diag(t, "tag " + e.tag + " closed with no state updates; nothing written");
    }
    return out;
}

Mutations Director::on_state(const StateUpdate &u)
{
    std::lock_guard lock(mu_);
    last_t_ = std::max(last_t_, u.t);
    Mutations out;
    for (const auto &[raw_key, v] : u.values) {
        if (!std::isfinite(v)) {
            diag(u.t, "non-finite value for " + raw_key + " from " + (u.source.empty() ? "?" : u.source) + " rejected");
            continue;
        }
        std::string key = story::is_phys_name(raw_key) ? raw_key.substr(story::kPhysPrefix.size()) : raw_key;
        double g = v;
        if (cfg_.global == GlobalMode::WindowMean) {
            auto &w = windows_[key];
            w.push_back(v);
            while (w.size() > cfg_.window)
                w.pop_front();
            double s = 0;
            for (double x : w)
                s += x;
            g = s / static_cast<double>(w.size());
        }
        std::string name = global_variable(key);
        vars_[name] = g;
        out.push_back({name, g});
        for (auto &[tag, a] : acc_)
            if (a.open)
                a.keys[key].add(v);
    }
    return out;
}

int Director::compare(const std::string &tag_a, const std::string &tag_b, const std::string &key) const
{
    std::lock_guard lock(mu_);
    auto mean_of = [&](const std::string &tag) {
        auto it = acc_.find(lower(tag));
        if (it == acc_.end())
            throw state_error("tag " + tag + " was never visited");
        if (it->second.open)
            throw state_error("tag " + tag + " is still open");
        auto k = it->second.keys.find(story::is_phys_name(key) ? key.substr(story::kPhysPrefix.size()) : key);
        if (k == it->second.keys.end() || k->second.count == 0)
            throw state_error("tag " + tag + " has no updates for " + key);
        return *k->second.mean();
    };
    double a = mean_of(tag_a), b = mean_of(tag_b);
    return a < b ? -1 : a > b ? 1 : 0;
}

std::map<std::string, double> Director::variables() const
{
    std::lock_guard lock(mu_);
    return vars_;
}

std::map<std::string, Accumulator> Director::accumulators() const
{
    std::lock_guard lock(mu_);
    return acc_;
}

std::vector<Diagnostic> Director::diagnostics() const
{
    std::lock_guard lock(mu_);
    return diags_;
}

std::vector<std::pair<double, std::string>> Director::markers() const
{
    std::lock_guard lock(mu_);
    return markers_;
}

std::map<std::string, double> Director::displayable() const
{
    if (!policy_view(cfg_.policy).show_values)
        return {};
    return variables();
}

void Director::set_marker_sink(std::function<void(double, const std::string &)> sink)
{
    std::lock_guard lock(mu_);
    sink_ = std::move(sink);
}

// Event log -----------------------------------------------------------------------

double entry_time(const LogEntry &e)
{
    return std::visit([](const auto &x) { return x.t; }, e);
}

std::vector<LogEntry> merge_log(std::vector<LogEntry> entries)
{
    std::stable_sort(entries.begin(), entries.end(), [](const LogEntry &a, const LogEntry &b) {
        double ta = entry_time(a), tb = entry_time(b);
        if (ta != tb)
            return ta < tb;
        return a.index() < b.index(); // markers (index 0) first
    });
    return entries;
}

void replay_log(Director &d, const std::vector<LogEntry> &log)
{
    for (const LogEntry &e : merge_log(log)) {
        if (const auto *m = std::get_if<MarkerEntry>(&e))
            d.on_marker(m->event, m->t);
        else
            d.on_state(std::get<StateUpdate>(e));
    }
}

std::string log_to_jsonl(const std::vector<LogEntry> &log)
{
    std::ostringstream os;
    for (const LogEntry &e : log) {
        nlohmann::json j;
        if (const auto *m = std::get_if<MarkerEntry>(&e)) {
            auto label = marker_label(m->event);
            if (!label)
                continue;
            j = {{"t", m->t}, {"marker", *label}};
        } else {
            const auto &s = std::get<StateUpdate>(e);
            nlohmann::json vals = nlohmann::json::array();
            for (const auto &[k, v] : s.values)
                vals.push_back({k, v});
            j = {{"t", s.t}, {"state", vals}, {"source", s.source}};
        }
        os << j.dump() << '\n';
    }
    return os.str();
}

std::vector<LogEntry> log_from_jsonl(const std::string &text)
{
    std::vector<LogEntry> out;
    std::istringstream is(text);
    std::string line;
    std::size_t n = 0;
    while (std::getline(is, line)) {
        ++n;
        if (line.empty())
            continue;
        try {
            auto j = nlohmann::json::parse(line);
            double t = j.at("t").get<double>();
            if (j.contains("marker")) {
                auto e = event_from_marker(j["marker"].get<std::string>());
                if (!e)
                    throw validation_error("unknown marker " + j["marker"].dump());
                out.push_back(MarkerEntry{t, *e});
            } else {
                StateUpdate s;
                s.t = t;
                s.source = j.value("source", "");
                for (const auto &kv : j.at("state"))
                    s.values.push_back({kv.at(0).get<std::string>(), kv.at(1).get<double>()});
                out.push_back(s);
            }
        } catch (const nlohmann::json::exception &e) {
            throw validation_error("event log line " + std::to_string(n) + ": " + e.what());
        } catch (const Error &e) {
            throw validation_error("event log line " + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

std::vector<LogEntry> log_from_recording(const transport::Recording &rec, const std::set<std::string> &keys,
                                         const std::string &marker_stream)
{
    std::vector<LogEntry> out;
    auto mi = rec.stream_index(marker_stream);
    for (const transport::RecordedSample &rs : rec.samples) {
        const transport::StreamInfo &info = rec.streams[rs.stream];
        if (mi && rs.stream == *mi) {
            if (auto e = event_from_marker(rs.sample.marker))
                out.push_back(MarkerEntry{rs.sample.timestamp, *e});
        } else if (info.kind == transport::StreamKind::Signal) {
            StateUpdate s;
            s.t = rs.sample.timestamp;
            s.source = info.source_id;
            for (std::size_t c = 0; c < rs.sample.values.size() && c < info.channel_labels.size(); ++c)
                if (keys.empty() || keys.count(info.channel_labels[c]))
                    s.values.push_back({info.channel_labels[c], rs.sample.values[c]});
            if (!s.values.empty())
                out.push_back(std::move(s));
        }
    }
    return merge_log(std::move(out));
}

} // namespace pif::director
