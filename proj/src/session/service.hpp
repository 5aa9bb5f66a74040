#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <mutex>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "classify/classify.hpp"
#include "pipeline/windows.hpp"
#include "session/session.hpp"
#include "sim/sim.hpp"
#include "transport/stream.hpp"

namespace pif::session {

struct SessionConfig {
    std::string story_path;

    // Input source: at most one of these. A live source is a transport hub
    // ("host:port"); a replay source a .pifrec file; a simulator source is
    // steerable and optionally follows a scenario file ("" = neutral).
    std::optional<std::string> live;
    std::optional<std::string> replay;
    std::optional<std::string> simulator;

    std::map<std::string, std::string> models; // construct -> model file
    director::Policy policy = director::Policy::Neuroadaptive;
    bool allow_covert = false;
    director::GlobalMode global = director::GlobalMode::Latest;
    std::size_t window = 5;
    std::set<std::string> reset_on_enter;

    std::string ui_host = "127.0.0.1";
    std::uint16_t ui_port = 8080; // 0 = ephemeral
    std::optional<std::string> record;     // .pifrec sink for every stream the session sees
    std::optional<std::string> reader_log; // JSONL sink for reader actions

    double debounce = 2.0;
    double sim_rate = 4.0;        // Hz, simulator state stream
    double model_window = 70.0;   // s of raw signal per estimate
    double model_cadence = 1.0;   // s between estimates
    std::set<std::string> state_keys; // channel labels consumed as state; empty = default_state_keys()

    // Exactly one input source (unless `require_source` is false) and every
    // referenced file present.
    void validate(bool require_source = true) const;
    // Keys as above; relative paths resolve against `base_dir`.
    static SessionConfig from_json(const std::string &text, const std::string &base_dir = {});
};

// Construct names plus every registry feature.
std::set<std::string> default_state_keys();

// Loads each model and checks that its registry matches the extractor's.
std::vector<classify::Model> load_models(const std::map<std::string, std::string> &paths);

// Estimates each model's construct from a sliding window of raw signals,
// once per `cadence` of sample time, and publishes the posterior of class A
// on a "pif-estimates" stream (one channel per construct).
class ModelEstimator {
public:
    ModelEstimator(std::vector<classify::Model> models, transport::Registry &registry, double window, double cadence,
                   pipeline::StreamNames names = {});
    ~ModelEstimator();
    void start();
    void stop();
    // Feeds samples directly (no inlets); returns the estimate if one is due.
    std::optional<std::vector<double>> feed(const std::string &stream, const transport::Sample &s);
    std::vector<std::string> constructs() const;

private:
    std::optional<std::vector<double>> estimate(double t_end);
    void run();

    std::vector<classify::Model> models_;
    transport::Registry &registry_;
    double window_, cadence_;
    pipeline::StreamNames names_;
    std::map<std::string, std::deque<transport::Sample>> buf_;
    std::map<std::string, double> rates_;
    std::optional<double> first_, next_;
    transport::Outlet out_;
    std::vector<transport::Inlet> inlets_;
    std::thread thread_;
    std::atomic<bool> running_{false};
};

// Publishes a steerable ground-truth state stream ("pif-sim-state" with
// arousal, valence, difficulty) in real time.
class SimulatorSource {
public:
    SimulatorSource(transport::Registry &registry, std::optional<sim::Scenario> scenario, double rate,
                    transport::ClockFn clock = transport::local_clock);
    ~SimulatorSource();
    void start();
    void stop();
    // Overrides the scenario for the given keys from now on.
    void steer(const std::vector<std::pair<std::string, double>> &values);
    sim::Truth current() const;

private:
    void run();

    transport::Registry &registry_;
    std::optional<sim::Scenario> scenario_;
    double rate_;
    transport::ClockFn clock_;
    transport::Outlet out_;
    mutable std::mutex mu_;
    std::map<std::string, double> overrides_;
    double t0_ = 0.0;
    std::thread thread_;
    std::atomic<bool> running_{false};
};

class WsServer;

// A running session: sources publish into a local registry, pumps turn
// state-bearing streams into Director updates, the WebSocket server carries
// the reader protocol, and an optional recorder captures every stream.
class Session {
public:
    explicit Session(SessionConfig cfg, transport::ClockFn clock = transport::local_clock);
    ~Session();
    Session(const Session &) = delete;
    Session &operator=(const Session &) = delete;

    void start();
    // Stops sources and pumps, drains the loop, flushes recording and log.
    void stop();

    std::uint16_t ui_port() const;
    SessionCore &core() { return *core_; }
    transport::Registry &registry() { return registry_; }
    SimulatorSource *simulator() { return sim_.get(); }
    const SessionConfig &config() const { return cfg_; }

private:
    void pump(transport::Inlet inlet);

    SessionConfig cfg_;
    transport::ClockFn clock_;
    std::shared_ptr<const story::StoryGraph> graph_;
    std::vector<classify::Model> models_;
    transport::Registry registry_;
    std::unique_ptr<SessionCore> core_;
    std::unique_ptr<WsServer> ws_;
    std::unique_ptr<SimulatorSource> sim_;
    std::unique_ptr<ModelEstimator> estimator_;
    std::unique_ptr<transport::Replayer> replayer_;
    std::unique_ptr<transport::Recorder> recorder_;
    transport::Outlet markers_;
    std::deque<transport::Outlet> bridged_; // stable addresses for bridge threads
    std::vector<std::thread> threads_;
    std::atomic<bool> running_{false};
    bool started_ = false;
};

} // namespace pif::session
