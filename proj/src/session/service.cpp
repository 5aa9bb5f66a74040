#include "session/service.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "common/error.hpp"
#include "json.hpp"
#include "session/ws.hpp"
#include "transport/net.hpp"

namespace pif::session {

using transport::Sample;
using transport::StreamInfo;
using transport::StreamKind;

namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw io_error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::pair<std::string, std::uint16_t> split_host_port(const std::string &s)
{
    auto colon = s.rfind(':');
    if (colon == std::string::npos || colon == 0)
        throw invalid_argument("expected host:port, got '" + s + "'");
    int port = 0;
    try {
        port = std::stoi(s.substr(colon + 1));
    } catch (const std::exception &) {
        port = -1;
    }
    if (port <= 0 || port > 65535)
        throw invalid_argument("bad port in '" + s + "'");
    return {s.substr(0, colon), static_cast<std::uint16_t>(port)};
}

void sleep_for_s(double s)
{
    if (s > 0)
        std::this_thread::sleep_for(std::chrono::duration<double>(s));
}

} // namespace

// Config -------------------------------------------------------------------------------

void SessionConfig::validate(bool require_source) const
{
    if (story_path.empty())
        throw validation_error("session config: no story");
    if (!fs::exists(story_path))
        throw validation_error("session config: story '" + story_path + "' does not exist");
    int sources = int(live.has_value()) + int(replay.has_value()) + int(simulator.has_value());
    if (sources > 1 || (require_source && sources != 1))
        throw validation_error("session config: exactly one input source (live, replay or simulator) is required");
    if (live)
        split_host_port(*live);
    if (replay && !fs::exists(*replay))
        throw validation_error("session config: replay file '" + *replay + "' does not exist");
    if (simulator && !simulator->empty() && !fs::exists(*simulator))
        throw validation_error("session config: scenario '" + *simulator + "' does not exist");
    for (const auto &[construct, path] : models)
        if (!fs::exists(path))
            throw validation_error("session config: model for '" + construct + "' ('" + path + "') does not exist");
    if (policy == director::Policy::Covert && !allow_covert)
        throw validation_error("session config: covert policy refused (set allow_covert to enable)");
    if (!(debounce >= 0) || !(sim_rate > 0) || !(model_window > 0) || !(model_cadence > 0) || window == 0)
        throw validation_error("session config: rates, windows and debounce must be positive");
}

SessionConfig SessionConfig::from_json(const std::string &text, const std::string &base_dir)
{
    auto resolve = [&](const std::string &p) {
        if (p.empty() || base_dir.empty() || fs::path(p).is_absolute())
            return p;
        return (fs::path(base_dir) / p).string();
    };
    SessionConfig c;
    try {
        nlohmann::json j = nlohmann::json::parse(text);
        static const std::set<std::string> known{"story",      "input",    "models",        "policy",
                                                 "allow_covert", "global", "window",        "reset_on_enter",
                                                 "ui",         "record",   "reader_log",    "debounce",
                                                 "sim_rate",   "model_window", "model_cadence", "state_keys"};
        for (const auto &[k, v] : j.items())
            if (!known.count(k))
                throw validation_error("session config: unknown key '" + k + "'");
        c.story_path = resolve(j.at("story").get<std::string>());
        if (j.contains("input")) {
            const auto &in = j["input"];
            if (in.contains("live"))
                c.live = in["live"].get<std::string>();
            if (in.contains("replay"))
                c.replay = resolve(in["replay"].get<std::string>());
            if (in.contains("simulator"))
                c.simulator = resolve(in["simulator"].get<std::string>());
        }
        if (j.contains("models"))
            for (const auto &[k, v] : j["models"].items())
                c.models[k] = resolve(v.get<std::string>());
        if (j.contains("policy"))
            c.policy = director::parse_policy(j["policy"].get<std::string>());
        c.allow_covert = j.value("allow_covert", false);
        std::string global = j.value("global", "latest");
        if (global == "latest")
            c.global = director::GlobalMode::Latest;
        else if (global == "window_mean")
            c.global = director::GlobalMode::WindowMean;
        else
            throw validation_error("session config: global must be latest or window_mean");
        c.window = j.value("window", std::size_t{5});
        c.reset_on_enter = j.value("reset_on_enter", std::set<std::string>{});
        if (j.contains("ui")) {
            c.ui_host = j["ui"].value("host", c.ui_host);
            c.ui_port = j["ui"].value("port", c.ui_port);
        }
        if (j.contains("record"))
            c.record = resolve(j["record"].get<std::string>());
        if (j.contains("reader_log"))
            c.reader_log = resolve(j["reader_log"].get<std::string>());
        c.debounce = j.value("debounce", c.debounce);
        c.sim_rate = j.value("sim_rate", c.sim_rate);
        c.model_window = j.value("model_window", c.model_window);
        c.model_cadence = j.value("model_cadence", c.model_cadence);
        c.state_keys = j.value("state_keys", std::set<std::string>{});
    } catch (const nlohmann::json::exception &e) {
        throw validation_error(std::string("session config: ") + e.what());
    }
    return c;
}

std::set<std::string> default_state_keys()
{
    std::set<std::string> keys{"arousal", "valence", "difficulty"};
    for (const auto &n : features::default_registry())
        keys.insert(n);
    return keys;
}

std::vector<classify::Model> load_models(const std::map<std::string, std::string> &paths)
{
    std::vector<classify::Model> out;
    for (const auto &[construct, path] : paths) {
        classify::Model m = classify::load_model(path);
        if (m.registry != features::default_registry())
            throw validation_error("model '" + path + "' was trained on a different feature registry");
        if (m.construct.empty())
            m.construct = construct;
        out.push_back(std::move(m));
    }
    return out;
}

// Estimator -------------------------------------------------------------------------

ModelEstimator::ModelEstimator(std::vector<classify::Model> models, transport::Registry &registry, double window,
                               double cadence, pipeline::StreamNames names)
    : models_(std::move(models)), registry_(registry), window_(window), cadence_(cadence), names_(std::move(names))
{
    if (models_.empty())
        throw invalid_argument("estimator needs at least one model");
    if (!(window_ > 0) || !(cadence_ > 0))
        throw invalid_argument("estimator window and cadence must be positive");
    for (const std::string &n : {names_.eda, names_.breathing})
        if (auto info = registry_.find(n))
            rates_[n] = info->nominal_rate;
}

ModelEstimator::~ModelEstimator() { stop(); }

std::vector<std::string> ModelEstimator::constructs() const
{
    std::vector<std::string> out;
    for (const auto &m : models_)
        out.push_back(m.construct);
    return out;
}

std::optional<std::vector<double>> ModelEstimator::feed(const std::string &stream, const Sample &s)
{
    if (stream != names_.eda && stream != names_.breathing && stream != names_.gaze && stream != names_.head)
        return std::nullopt;
    auto &b = buf_[stream];
    b.push_back(s);
    double t = s.timestamp;
    if (!first_)
        first_ = t;
    for (auto &[name, q] : buf_)
        while (!q.empty() && q.front().timestamp < t - window_ - 1.0)
            q.pop_front();
    if (t - *first_ < window_ || (next_ && t < *next_))
        return std::nullopt;
    next_ = t + cadence_;
    return estimate(t);
}

std::optional<std::vector<double>> ModelEstimator::estimate(double t_end)
{
    features::PhysioWindow w;
    w.t0 = t_end - window_;
    w.t1 = t_end;
    if (rates_.count(names_.eda))
        w.eda_rate = rates_[names_.eda];
    if (rates_.count(names_.breathing))
        w.breathing_rate = rates_[names_.breathing];
    auto add = [&](const std::string &name, pipeline::Signal which) {
        for (const Sample &s : buf_[name])
            if (s.timestamp >= w.t0 && s.timestamp < w.t1)
                pipeline::append_sample(w, which, s);
    };
    add(names_.eda, pipeline::Signal::Eda);
    add(names_.breathing, pipeline::Signal::Breathing);
    add(names_.gaze, pipeline::Signal::Gaze);
    add(names_.head, pipeline::Signal::Head);
    features::FeatureVector fv = features::extract(w);
    std::vector<double> out;
    for (const auto &m : models_)
        out.push_back(classify::predict(m, fv.values, {}, classify::RankMode::Quantile).posterior_a);
    return out;
}

void ModelEstimator::start()
{
    if (running_)
        return;
    out_ = registry_.open_outlet(StreamInfo{"pif-estimates", StreamKind::Signal, static_cast<int>(models_.size()),
                                            1.0 / cadence_, constructs(), "pif-estimates"}
                                     .normalized());
    for (const std::string &n : {names_.eda, names_.breathing, names_.gaze, names_.head})
        if (registry_.find(n))
            inlets_.push_back(registry_.open_inlet(n));
    running_ = true;
    thread_ = std::thread([this] { run(); });
}

void ModelEstimator::run()
{
    while (running_) {
        bool any = false, all_done = !inlets_.empty();
        for (auto &in : inlets_) {
            for (const Sample &s : in.pull(4096)) {
                any = true;
                if (auto est = feed(in.info().name, s))
                    out_.push(s.timestamp, *est);
            }
            all_done = all_done && in.exhausted();
        }
        if (all_done)
            break;
        if (!any)
            sleep_for_s(0.005);
    }
}

void ModelEstimator::stop()
{
    running_ = false;
    if (thread_.joinable())
        thread_.join();
    out_.close();
}

// Simulator source ---------------------------------------------------------------------

SimulatorSource::SimulatorSource(transport::Registry &registry, std::optional<sim::Scenario> scenario, double rate,
                                 transport::ClockFn clock)
    : registry_(registry), scenario_(std::move(scenario)), rate_(rate), clock_(std::move(clock))
{
    if (!(rate_ > 0))
        throw invalid_argument("simulator rate must be positive");
    if (scenario_)
        scenario_->validate();
}

SimulatorSource::~SimulatorSource() { stop(); }

void SimulatorSource::steer(const std::vector<std::pair<std::string, double>> &values)
{
    std::lock_guard lock(mu_);
    for (const auto &[k, v] : values) {
        if (k != "arousal" && k != "valence" && k != "difficulty")
            throw validation_error("simulator has no key '" + k + "'");
        if (!(v >= 0 && v <= 1))
            throw validation_error("simulator value for '" + k + "' must be in [0, 1]");
    }
    for (const auto &[k, v] : values)
        overrides_[k] = v;
}

sim::Truth SimulatorSource::current() const
{
    std::lock_guard lock(mu_);
    sim::Truth t;
    if (scenario_) {
        double elapsed = clock_() - t0_, start = scenario_->gap;
        for (const auto &seg : scenario_->segments) {
            if (elapsed >= start && elapsed < start + seg.duration)
                t = seg.truth;
            start += seg.duration + scenario_->gap;
        }
    }
    if (auto it = overrides_.find("arousal"); it != overrides_.end())
        t.arousal = it->second;
    if (auto it = overrides_.find("valence"); it != overrides_.end())
        t.valence = it->second;
    if (auto it = overrides_.find("difficulty"); it != overrides_.end())
        t.difficulty = it->second;
    return t;
}

void SimulatorSource::start()
{
    if (running_)
        return;
    out_ = registry_.open_outlet(StreamInfo{"pif-sim-state", StreamKind::Signal, 3, rate_,
                                            {"arousal", "valence", "difficulty"}, "pif-sim-state"}
                                     .normalized());
    t0_ = clock_();
    running_ = true;
    thread_ = std::thread([this] { run(); });
}

void SimulatorSource::run()
{
    double period = 1.0 / rate_, next = clock_();
    while (running_) {
        double now = clock_();
        if (now < next) {
            sleep_for_s(std::min(next - now, 0.05));
            continue;
        }
        sim::Truth t = current();
        out_.push(now, {t.arousal, t.valence, t.difficulty});
        next += period;
        if (next < now)
            next = now + period;
    }
}

void SimulatorSource::stop()
{
    running_ = false;
    if (thread_.joinable())
        thread_.join();
    out_.close();
}

// Session ------------------------------------------------------------------------------

Session::Session(SessionConfig cfg, transport::ClockFn clock) : cfg_(std::move(cfg)), clock_(std::move(clock))
{
    cfg_.validate();
    graph_ = load_story(cfg_.story_path);
    models_ = load_models(cfg_.models);
    if (cfg_.state_keys.empty())
        cfg_.state_keys = default_state_keys();
}

Session::~Session()
{
    try {
        stop();
    } catch (...) {
    }
}

std::uint16_t Session::ui_port() const { return ws_ ? ws_->port() : 0; }

void Session::pump(transport::Inlet inlet)
{
    while (running_) {
        for (const Sample &s : inlet.pull(1024, std::chrono::milliseconds(50))) {
            director::StateUpdate u = update_from_sample(inlet.info(), s, cfg_.state_keys);
            if (!u.values.empty())
                core_->post_state(std::move(u));
        }
        if (inlet.exhausted())
            break;
    }
}

void Session::start()
{
    if (started_)
        throw state_error("session already started");
    started_ = true;

    CoreConfig cc;
    cc.director.policy = cfg_.policy;
    cc.director.allow_covert = cfg_.allow_covert;
    cc.director.global = cfg_.global;
    cc.director.window = cfg_.window;
    cc.director.reset_on_enter = cfg_.reset_on_enter;
    cc.debounce = cfg_.debounce;
    cc.clock = clock_;
    core_ = std::make_unique<SessionCore>(graph_, cc);

    markers_ = registry_.open_outlet(
        StreamInfo{"pif-markers", StreamKind::Marker, 1, 0, {}, "pif-session-markers"}.normalized());
    core_->set_marker_sink([this](double t, const std::string &label) { markers_.push_marker(t, label); });

    running_ = true;
    std::function<void()> launch;
    if (cfg_.simulator) {
        std::optional<sim::Scenario> sc;
        if (!cfg_.simulator->empty())
            sc = sim::scenario_from_json(read_file(*cfg_.simulator));
        sim_ = std::make_unique<SimulatorSource>(registry_, sc, cfg_.sim_rate, clock_);
        core_->set_sim_handler([this](const auto &v) { sim_->steer(v); });
        sim_->start(); // the outlet must exist before pumps subscribe
    } else if (cfg_.replay) {
        transport::Recording rec = transport::read_recording(*cfg_.replay);
        transport::Recording signals;
        signals.header = rec.header;
        std::map<std::size_t, std::size_t> remap;
        for (std::size_t i = 0; i < rec.streams.size(); ++i)
            if (rec.streams[i].kind == StreamKind::Signal)
                remap[i] = signals.add_stream(rec.streams[i]);
        for (const auto &rs : rec.samples)
            if (auto it = remap.find(rs.stream); it != remap.end())
                signals.samples.push_back({it->second, rs.sample});
        replayer_ = std::make_unique<transport::Replayer>(signals, registry_);
        launch = [this] {
            threads_.emplace_back([this] {
                try {
                    replayer_->run(transport::ReplaySpeed::Realtime, clock_);
                } catch (...) {
                }
                replayer_->close();
            });
        };
    } else if (cfg_.live) {
        auto [host, port] = split_host_port(*cfg_.live);
        for (const StreamInfo &info : transport::remote_list(host, port)) {
            if (info.kind != StreamKind::Signal)
                continue;
            transport::Inlet in = transport::remote_inlet(host, port, info.source_id);
            bridged_.push_back(registry_.open_outlet(info));
            transport::Outlet *out = &bridged_.back();
            threads_.emplace_back([this, in, out]() mutable {
                while (running_) {
                    for (const Sample &s : in.pull(1024, std::chrono::milliseconds(50)))
                        out->push(s);
                    if (in.exhausted())
                        break;
                }
                out->close();
            });
        }
    }
    if (!models_.empty()) {
        estimator_ = std::make_unique<ModelEstimator>(models_, registry_, cfg_.model_window, cfg_.model_cadence);
        estimator_->start();
    }

    for (const StreamInfo &info : registry_.list()) {
        if (info.kind != StreamKind::Signal)
            continue;
        bool relevant = false;
        for (const auto &l : info.channel_labels)
            relevant = relevant || cfg_.state_keys.count(l);
        if (relevant)
            threads_.emplace_back([this, in = registry_.open_inlet(info.source_id)]() mutable { pump(std::move(in)); });
    }
    if (cfg_.record) {
        std::vector<transport::Inlet> inlets;
        for (const StreamInfo &info : registry_.list())
            inlets.push_back(registry_.open_inlet(info.source_id));
        recorder_ = std::make_unique<transport::Recorder>(
            *cfg_.record, std::move(inlets), std::map<std::string, std::string>{{"story", cfg_.story_path}});
        recorder_->start();
    }

    ws_ = std::make_unique<WsServer>(*core_, cfg_.ui_host, cfg_.ui_port);
    core_->start();
    if (launch)
        launch();
}

void Session::stop()
{
    if (!started_ || !running_.exchange(false))
        return;
    if (sim_)
        sim_->stop();
    if (estimator_)
        estimator_->stop();
    if (replayer_)
        replayer_->cancel();
    for (auto &t : threads_)
        if (t.joinable())
            t.join();
    threads_.clear();
    core_->post_action({ReaderAction::Kind::Stop, 0, {}});
    core_->stop();
    if (ws_)
        ws_->stop();
    markers_.close();
    for (auto &o : bridged_)
        o.close();
    if (recorder_)
        recorder_->stop();
    if (cfg_.reader_log) {
        std::ofstream out(*cfg_.reader_log, std::ios::binary);
        out << reader_log_to_jsonl(core_->reader_log());
        if (!out)
            throw io_error("cannot write reader log '" + *cfg_.reader_log + "'");
    }
}

} // namespace pif::session
