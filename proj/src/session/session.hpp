#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "director/director.hpp"
#include "story/graph.hpp"
#include "story/runtime.hpp"
#include "transport/clock.hpp"
#include "transport/recording.hpp"

namespace pif::session {

// Protocol ---------------------------------------------------------------------
//
// Text frames carrying one JSON object with a "type" field.
//   server -> client: page {knot, page_index, text, choices[], displayable_state}
//                     state {<key>: <value>, ...}
//                     end {}
//                     rejected {action, reason}
//                     error {message}
//   client -> server: advance {}
//                     choose {index}
//                     sim {<key>: <value>, ...}

struct ReaderAction {
    enum class Kind { Advance, Choose, Sim, Stop };
    Kind kind = Kind::Advance;
    std::size_t index = 0;                               // Choose
    std::vector<std::pair<std::string, double>> values;  // Sim

    static ReaderAction advance() { return {Kind::Advance, 0, {}}; }
    static ReaderAction choose(std::size_t i) { return {Kind::Choose, i, {}}; }
    static ReaderAction sim(std::vector<std::pair<std::string, double>> v) { return {Kind::Sim, 0, std::move(v)}; }
    bool operator==(const ReaderAction &) const = default;
};

std::string_view action_name(ReaderAction::Kind k);

struct PageView {
    std::string knot;
    std::size_t page_index = 0;
    std::string text;
    std::vector<std::string> choices; // empty unless a choice is required
    std::map<std::string, double> displayable_state;
    bool ended = false;
};

std::string encode_page(const PageView &p);
std::string encode_state(const std::map<std::string, double> &values);
std::string encode_end();
std::string encode_rejected(ReaderAction::Kind action, const std::string &reason);
std::string encode_error(const std::string &message);
// Throws a Validation error on anything that is not a well-formed client
// message.
ReaderAction decode_client(const std::string &text);

// Reader-event log ----------------------------------------------------------------

// One processed reader action: session time, how many state updates from
// each source had been applied before it, and the outcome.
struct ReaderLogEntry {
    double t = 0.0;
    ReaderAction action;
    std::map<std::string, std::uint64_t> applied;
    bool accepted = true;
    std::string reason;
    bool operator==(const ReaderLogEntry &) const = default;
};

std::string reader_log_to_jsonl(const std::vector<ReaderLogEntry> &log);
std::vector<ReaderLogEntry> reader_log_from_jsonl(const std::string &text);

// One state update per signal sample, keyed by source id. Channel labels
// become keys; `keys` (if not empty) restricts which.
std::map<std::string, std::vector<director::StateUpdate>>
updates_from_recording(const transport::Recording &rec, const std::set<std::string> &keys = {});

director::StateUpdate update_from_sample(const transport::StreamInfo &info, const transport::Sample &s,
                                         const std::set<std::string> &keys = {});

// Core -----------------------------------------------------------------------------

struct CoreConfig {
    director::DirectorConfig director;
    double debounce = 2.0;             // s between accepted advances
    double state_interval = 0.1;       // s, minimum spacing of outgoing state messages
    transport::ClockFn clock = transport::local_clock;
};

// A story session: runtime state plus Director. Every mutation runs on one
// loop thread fed by a queue; producers may post from any thread. The same
// processing steps are available synchronously for replay and headless use.
class SessionCore {
public:
    using Listener = std::function<void(const std::string &message)>;
    using StateHook = std::function<void(const director::StateUpdate &u, double visible_at)>;
    using SimHandler = std::function<void(const std::vector<std::pair<std::string, double>> &)>;

    SessionCore(std::shared_ptr<const story::StoryGraph> graph, CoreConfig cfg = {});
    ~SessionCore();
    SessionCore(const SessionCore &) = delete;
    SessionCore &operator=(const SessionCore &) = delete;

    // Hooks are installed before start() (or before the first synchronous
    // call) and run on the processing thread.
    void set_listener(Listener l);
    void set_state_hook(StateHook h);
    // Without a handler, sim actions are rejected.
    void set_sim_handler(SimHandler h);
    void set_marker_sink(std::function<void(double, const std::string &)> sink);

    // Starts the story (synchronously) and the loop thread.
    void start();
    // Processes everything already queued, then joins the loop.
    void stop();

    void post_action(ReaderAction a);
    void post_state(director::StateUpdate u);
    // Blocks until every item posted before the call has been processed.
    void sync();

    // Synchronous processing, for use without the loop thread.
    void begin(double t);
    bool apply_action(const ReaderAction &a, double t);
    void apply_state(const director::StateUpdate &u);

    // Snapshots; safe from any thread.
    story::SessionState state() const;
    PageView page() const;
    std::string page_message() const;
    std::vector<story::EngineEvent> events() const;
    std::vector<ReaderLogEntry> reader_log() const;
    std::map<std::string, double> director_variables() const;
    std::vector<director::Diagnostic> diagnostics() const;
    std::map<std::string, std::uint64_t> applied() const;
    bool finished() const;

private:
    struct Item {
        std::variant<ReaderAction, director::StateUpdate> payload;
        double t = 0.0;
        std::uint64_t seq = 0;
    };

    void loop();
    void flush_state(double now, bool force);
    void emit(const std::string &msg);
    PageView page_locked() const;
    void take(story::Transition tr);

    std::shared_ptr<const story::StoryGraph> graph_;
    CoreConfig cfg_;
    director::Director director_;

    mutable std::mutex mu_; // guards everything below except the queue
    story::SessionState state_;
    std::vector<story::EngineEvent> events_;
    std::vector<ReaderLogEntry> log_;
    std::map<std::string, std::uint64_t> applied_;
    std::optional<double> last_advance_;
    double now_ = 0.0;
    bool started_ = false;
    std::map<std::string, double> sent_state_;
    double last_state_sent_ = -1e300;
    bool state_dirty_ = false;

    Listener listener_;
    StateHook state_hook_;
    SimHandler sim_handler_;

    std::mutex qmu_;
    std::condition_variable qcv_, done_cv_;
    std::deque<Item> queue_;
    std::uint64_t posted_ = 0, processed_ = 0;
    bool stopping_ = false;
    std::thread thread_;
};

struct ReplayResult {
    story::SessionState state;
    std::vector<story::EngineEvent> events;
    std::map<std::string, double> variables;
    std::vector<ReaderLogEntry> log;
};

// Re-runs a session from its inputs: before each logged reader action the
// logged number of updates from each source is applied (merged by
// timestamp), then the action at its logged time.
ReplayResult replay_session(std::shared_ptr<const story::StoryGraph> graph, CoreConfig cfg,
                            const std::map<std::string, std::vector<director::StateUpdate>> &inputs,
                            const std::vector<ReaderLogEntry> &reader_log);

// Story loading --------------------------------------------------------------------

// Parses a story file; a parse failure raises a Validation error whose
// message lists the diagnostics in lint format.
std::shared_ptr<const story::StoryGraph> load_story(const std::string &path);

} // namespace pif::session
