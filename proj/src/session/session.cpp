#include "session/session.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "common/error.hpp"
#include "json.hpp"

namespace pif::session {

using nlohmann::json;

std::string_view action_name(ReaderAction::Kind k)
{
    switch (k) {
    case ReaderAction::Kind::Advance: return "advance";
    case ReaderAction::Kind::Choose: return "choose";
    case ReaderAction::Kind::Sim: return "sim";
    case ReaderAction::Kind::Stop: return "stop";
    }
    return "?";
}

// Protocol -----------------------------------------------------------------------

namespace {

json state_object(const std::map<std::string, double> &values)
{
    json o = json::object();
    for (const auto &[k, v] : values)
        o[k] = v;
    return o;
}

json action_json(const ReaderAction &a)
{
    json j{{"type", action_name(a.kind)}};
    if (a.kind == ReaderAction::Kind::Choose)
        j["index"] = a.index;
    for (const auto &[k, v] : a.values)
        j[k] = v;
    return j;
}

} // namespace

std::string encode_page(const PageView &p)
{
    return json{{"type", "page"},
                {"knot", p.knot},
                {"page_index", p.page_index},
                {"text", p.text},
                {"choices", p.choices},
                {"displayable_state", state_object(p.displayable_state)}}
        .dump();
}

std::string encode_state(const std::map<std::string, double> &values)
{
    json j = state_object(values);
    j["type"] = "state";
    return j.dump();
}

std::string encode_end() { return json{{"type", "end"}}.dump(); }

std::string encode_rejected(ReaderAction::Kind action, const std::string &reason)
{
    return json{{"type", "rejected"}, {"action", action_name(action)}, {"reason", reason}}.dump();
}

std::string encode_error(const std::string &message) { return json{{"type", "error"}, {"message", message}}.dump(); }

ReaderAction decode_client(const std::string &text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception &) {
        throw validation_error("message is not JSON");
    }
    if (!j.is_object() || !j.contains("type") || !j["type"].is_string())
        throw validation_error("message needs a string \"type\"");
    std::string type = j["type"];
    if (type == "advance") {
        if (j.size() != 1)
            throw validation_error("advance takes no fields");
        return ReaderAction::advance();
    }
    if (type == "choose") {
        if (j.size() != 2 || !j.contains("index") || !j["index"].is_number_integer() || j["index"].get<long long>() < 0)
            throw validation_error("choose needs a non-negative integer \"index\"");
        return ReaderAction::choose(j["index"].get<std::size_t>());
    }
    if (type == "sim") {
        std::vector<std::pair<std::string, double>> values;
        for (const auto &[k, v] : j.items()) {
            if (k == "type")
                continue;
            if (!v.is_number() || !std::isfinite(v.get<double>()))
                throw validation_error("sim value for '" + k + "' must be a finite number");
            values.emplace_back(k, v.get<double>());
        }
        if (values.empty())
            throw validation_error("sim needs at least one key");
        return ReaderAction::sim(std::move(values));
    }
    throw validation_error("unknown message type '" + type + "'");
}

// Reader-event log ------------------------------------------------------------------

std::string reader_log_to_jsonl(const std::vector<ReaderLogEntry> &log)
{
    std::string out;
    for (const ReaderLogEntry &e : log) {
        json j{{"t", e.t}, {"action", action_json(e.action)}, {"applied", e.applied}, {"accepted", e.accepted}};
        if (!e.reason.empty())
            j["reason"] = e.reason;
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::vector<ReaderLogEntry> reader_log_from_jsonl(const std::string &text)
{
    std::vector<ReaderLogEntry> out;
    std::istringstream in(text);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        try {
            json j = json::parse(line);
            ReaderLogEntry e;
            e.t = j.at("t").get<double>();
            const json &a = j.at("action");
            std::string type = a.at("type").get<std::string>();
            if (type == "stop")
                e.action.kind = ReaderAction::Kind::Stop;
            else
                e.action = decode_client(a.dump());
            e.applied = j.at("applied").get<std::map<std::string, std::uint64_t>>();
            e.accepted = j.at("accepted").get<bool>();
            e.reason = j.value("reason", "");
            out.push_back(std::move(e));
        } catch (const json::exception &ex) {
            throw validation_error("reader log line " + std::to_string(n) + ": " + ex.what());
        } catch (const Error &ex) {
            throw validation_error("reader log line " + std::to_string(n) + ": " + ex.what());
        }
    }
    return out;
}

director::StateUpdate update_from_sample(const transport::StreamInfo &info, const transport::Sample &s,
                                         const std::set<std::string> &keys)
{
    director::StateUpdate u;
    u.t = s.timestamp;
    u.source = info.source_id;
    if (info.kind != transport::StreamKind::Signal)
        return u;
    for (std::size_t c = 0; c < s.values.size() && c < info.channel_labels.size(); ++c)
        if (keys.empty() || keys.count(info.channel_labels[c]))
            u.values.emplace_back(info.channel_labels[c], s.values[c]);
    return u;
}

std::map<std::string, std::vector<director::StateUpdate>>
updates_from_recording(const transport::Recording &rec, const std::set<std::string> &keys)
{
    std::map<std::string, std::vector<director::StateUpdate>> out;
    for (const auto &rs : rec.samples) {
        director::StateUpdate u = update_from_sample(rec.streams.at(rs.stream), rs.sample, keys);
        if (!u.values.empty())
            out[u.source].push_back(std::move(u));
    }
    return out;
}

// Core ----------------------------------------------------------------------------

SessionCore::SessionCore(std::shared_ptr<const story::StoryGraph> graph, CoreConfig cfg)
    : graph_(std::move(graph)), cfg_(std::move(cfg)), director_([this] {
          director::DirectorConfig d = cfg_.director;
          d.clock = [this] { return now_; };
          return d;
      }())
{
    if (!graph_)
        throw invalid_argument("session needs a story");
    if (!cfg_.clock)
        cfg_.clock = transport::local_clock;
    if (!(cfg_.debounce >= 0))
        throw invalid_argument("debounce must be >= 0");
}

SessionCore::~SessionCore()
{
    try {
        stop();
    } catch (...) {
    }
}

void SessionCore::set_listener(Listener l) { listener_ = std::move(l); }
void SessionCore::set_state_hook(StateHook h) { state_hook_ = std::move(h); }
void SessionCore::set_sim_handler(SimHandler h) { sim_handler_ = std::move(h); }
void SessionCore::set_marker_sink(std::function<void(double, const std::string &)> sink)
{
    director_.set_marker_sink(std::move(sink));
}

void SessionCore::emit(const std::string &msg)
{
    if (listener_)
        listener_(msg);
}

void SessionCore::take(story::Transition tr)
{
    state_ = std::move(tr.state);
    for (auto &e : tr.events)
        events_.push_back(std::move(e));
}

PageView SessionCore::page_locked() const
{
    PageView p;
    p.displayable_state = director_.displayable();
    if (!started_)
        return p;
    if (state_.finished) {
        p.ended = true;
        return p;
    }
    p.knot = state_.current_knot().name;
    p.page_index = state_.page;
    p.text = story::render_page(state_);
    if (state_.awaiting_choice)
        p.choices = state_.choice_labels();
    return p;
}

void SessionCore::begin(double t)
{
    std::string msg;
    {
        std::lock_guard lock(mu_);
        if (started_)
            throw state_error("session already started");
        now_ = t;
        take(story::start(graph_, {}, &director_));
        started_ = true;
        msg = encode_page(page_locked());
    }
    emit(msg);
}

bool SessionCore::apply_action(const ReaderAction &a, double t)
{
    std::vector<std::string> out;
    bool accepted = true;
    {
        std::lock_guard lock(mu_);
        if (!started_)
            throw state_error("session not started");
        now_ = std::max(now_, t);
        std::string reason;
        bool moved = false;
        try {
            switch (a.kind) {
            case ReaderAction::Kind::Stop:
                break;
            case ReaderAction::Kind::Sim:
                if (!sim_handler_)
                    reason = "simulator input is not active";
                else
                    sim_handler_(a.values);
                break;
            case ReaderAction::Kind::Advance:
                if (state_.finished)
                    reason = "story has finished";
                else if (last_advance_ && t - *last_advance_ < cfg_.debounce)
                    reason = "debounce";
                else {
                    take(state_.at_end ? story::finish(state_, &director_)
                                       : story::advance(state_, story::ReaderEvent::next_page(), &director_));
                    last_advance_ = t;
                    moved = true;
                }
                break;
            case ReaderAction::Kind::Choose:
                take(story::advance(state_, story::ReaderEvent::choose(a.index), &director_));
                moved = true;
                break;
            }
        } catch (const Error &e) { // illegal reader event or rejected steering
            reason = e.what();
        }
        accepted = reason.empty();
        log_.push_back({t, a, applied_, accepted, reason});
        if (!accepted)
            out.push_back(encode_rejected(a.kind, reason));
        else if (moved) {
            out.push_back(state_.finished ? encode_end() : encode_page(page_locked()));
            sent_state_ = director_.displayable();
        }
    }
    for (const auto &m : out)
        emit(m);
    return accepted;
}

void SessionCore::apply_state(const director::StateUpdate &u)
{
    {
        std::lock_guard lock(mu_);
        director::Mutations m = director_.on_state(u);
        for (const auto &[k, v] : m)
            story::set_phys(state_, k, v);
        ++applied_[u.source];
        if (!m.empty())
            state_dirty_ = true;
    }
    if (state_hook_)
        state_hook_(u, cfg_.clock());
}

void SessionCore::flush_state(double now, bool force)
{
    std::string msg;
    {
        std::lock_guard lock(mu_);
        if (!state_dirty_ || (!force && now - last_state_sent_ < cfg_.state_interval))
            return;
        state_dirty_ = false;
        std::map<std::string, double> d = director_.displayable();
        if (d == sent_state_)
            return;
        sent_state_ = d;
        last_state_sent_ = now;
        msg = encode_state(d);
    }
    emit(msg);
}

void SessionCore::start()
{
    begin(cfg_.clock());
    std::lock_guard q(qmu_);
    stopping_ = false;
    thread_ = std::thread([this] { loop(); });
}

void SessionCore::stop()
{
    {
        std::lock_guard q(qmu_);
        if (!thread_.joinable())
            return;
        stopping_ = true;
    }
    qcv_.notify_all();
    thread_.join();
}

void SessionCore::post_action(ReaderAction a)
{
    {
        std::lock_guard q(qmu_);
        queue_.push_back({std::move(a), cfg_.clock(), ++posted_});
    }
    qcv_.notify_one();
}

void SessionCore::post_state(director::StateUpdate u)
{
    {
        std::lock_guard q(qmu_);
        queue_.push_back({std::move(u), 0.0, ++posted_});
    }
    qcv_.notify_one();
}

void SessionCore::sync()
{
    std::unique_lock q(qmu_);
    std::uint64_t target = posted_;
    done_cv_.wait(q, [&] { return processed_ >= target || !thread_.joinable(); });
}

void SessionCore::loop()
{
    for (;;) {
        Item item;
        {
            std::unique_lock q(qmu_);
            if (queue_.empty() && !stopping_) {
                bool dirty;
                {
                    std::lock_guard lock(mu_);
                    dirty = state_dirty_;
                }
                if (dirty)
                    qcv_.wait_for(q, std::chrono::duration<double>(cfg_.state_interval));
                else
                    qcv_.wait(q, [&] { return !queue_.empty() || stopping_; });
            }
            if (queue_.empty()) {
                if (stopping_)
                    break;
                q.unlock();
                flush_state(cfg_.clock(), false);
                continue;
            }
            item = std::move(queue_.front());
            queue_.pop_front();
        }
        try {
            if (auto *a = std::get_if<ReaderAction>(&item.payload))
                apply_action(*a, item.t);
            else
                apply_state(std::get<director::StateUpdate>(item.payload));
        } catch (const std::exception &e) {
            emit(encode_error(e.what()));
        }
        flush_state(cfg_.clock(), false);
        {
            std::lock_guard q(qmu_);
            processed_ = item.seq;
        }
        done_cv_.notify_all();
    }
    flush_state(cfg_.clock(), true);
    done_cv_.notify_all();
}

story::SessionState SessionCore::state() const
{
    std::lock_guard lock(mu_);
    return state_;
}

PageView SessionCore::page() const
{
    std::lock_guard lock(mu_);
    return page_locked();
}

std::string SessionCore::page_message() const
{
    PageView p = page();
    return p.ended ? encode_end() : encode_page(p);
}

std::vector<story::EngineEvent> SessionCore::events() const
{
    std::lock_guard lock(mu_);
    return events_;
}

std::vector<ReaderLogEntry> SessionCore::reader_log() const
{
    std::lock_guard lock(mu_);
    return log_;
}

std::map<std::string, double> SessionCore::director_variables() const { return director_.variables(); }

std::vector<director::Diagnostic> SessionCore::diagnostics() const { return director_.diagnostics(); }

std::map<std::string, std::uint64_t> SessionCore::applied() const
{
    std::lock_guard lock(mu_);
    return applied_;
}

bool SessionCore::finished() const
{
    std::lock_guard lock(mu_);
    return state_.finished;
}

// Replay ----------------------------------------------------------------------------

ReplayResult replay_session(std::shared_ptr<const story::StoryGraph> graph, CoreConfig cfg,
                            const std::map<std::string, std::vector<director::StateUpdate>> &inputs,
                            const std::vector<ReaderLogEntry> &reader_log)
{
    SessionCore core(std::move(graph), std::move(cfg));
    core.set_sim_handler([](const auto &) {});
    core.begin(reader_log.empty() ? 0.0 : reader_log.front().t);
    std::map<std::string, std::size_t> done;
    for (const ReaderLogEntry &e : reader_log) {
        std::vector<const director::StateUpdate *> batch;
        for (const auto &[src, n] : e.applied) {
            auto it = inputs.find(src);
            std::size_t have = it == inputs.end() ? 0 : it->second.size();
            if (n > have)
                throw validation_error("reader log expects " + std::to_string(n) + " updates from '" + src +
                                       "', input has " + std::to_string(have));
            for (std::size_t i = done[src]; i < n; ++i)
                batch.push_back(&it->second[i]);
            done[src] = std::max<std::size_t>(done[src], n);
        }
        std::stable_sort(batch.begin(), batch.end(), [](auto *a, auto *b) { return a->t < b->t; });
        for (const auto *u : batch)
            core.apply_state(*u);
        core.apply_action(e.action, e.t);
    }
    return {core.state(), core.events(), core.director_variables(), core.reader_log()};
}

std::shared_ptr<const story::StoryGraph> load_story(const std::string &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw io_error("cannot open story '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    story::ParseResult r = story::parse({ss.str(), path});
    if (!r.ok()) {
        std::string msg;
        for (const auto &d : r.errors)
            msg += (msg.empty() ? "" : "\n") + story::format_diagnostic(d, path);
        throw validation_error(msg);
    }
    return std::make_shared<const story::StoryGraph>(std::move(*r.graph));
}

} // namespace pif::session
