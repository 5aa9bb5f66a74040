#pragma once

#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "story/runtime.hpp"
#include "transport/recording.hpp"

namespace pif::director {

using Mutations = std::vector<std::pair<std::string, double>>;

struct StateUpdate {
    double t = 0.0;
    std::vector<std::pair<std::string, double>> values;
    std::string source;
    bool operator==(const StateUpdate &) const = default;
};

struct KeyStats {
    double sum = 0.0;
    std::size_t count = 0;
    double min = 0.0, max = 0.0;
    void add(double v);
    std::optional<double> mean() const;
};

struct Accumulator {
    std::string tag;
    bool open = false;
    std::map<std::string, KeyStats> keys;
    double opened_at = 0.0, closed_at = 0.0; // latest visit
    std::vector<std::pair<double, double>> visits; // closed [open, close] intervals
};

enum class GlobalMode { Latest, WindowMean };

// The four quadrants of the taxonomy. Covert is refused unless the
// configuration explicitly allows it.
enum class Policy { Biofeedback, Neuroadaptive, Empowering, Covert };

std::string_view policy_name(Policy p);
Policy parse_policy(std::string_view s);

struct PolicyView {
    bool show_values = false;     // state panel with live phys_ values
    bool notice_measuring = false; // reader told physiology is recorded
    bool notice_adapting = false;  // reader told the story reacts to it
};

PolicyView policy_view(Policy p);

struct DirectorConfig {
    GlobalMode global = GlobalMode::Latest;
    std::size_t window = 5;
    Policy policy = Policy::Neuroadaptive;
    bool allow_covert = false;
    std::set<std::string> reset_on_enter; // tags whose accumulator restarts on each visit
    // Time source for events arriving through the story observer; defaults
    // to the latest timestamp seen.
    std::function<double()> clock;
};

struct Diagnostic {
    double t = 0.0;
    std::string message;
};

// Transport marker label for an engine event, if it has one.
std::optional<std::string> marker_label(const story::EngineEvent &e);
// Inverse of marker_label for the marker kinds that drive accumulators.
std::optional<story::EngineEvent> event_from_marker(const std::string &label);

std::string global_variable(const std::string &key);

class Director : public story::EventObserver {
public:
    explicit Director(DirectorConfig cfg = {});

    Mutations on_marker(const story::EngineEvent &e, double t);
    Mutations on_state(const StateUpdate &u);
    Mutations on_engine_event(const story::EngineEvent &e) override;

    // -1, 0, 1 as mean(tag_a) is below, equal to, above mean(tag_b).
    int compare(const std::string &tag_a, const std::string &tag_b, const std::string &key) const;

    std::map<std::string, double> variables() const;
    std::map<std::string, Accumulator> accumulators() const;
    std::vector<Diagnostic> diagnostics() const;
    std::vector<std::pair<double, std::string>> markers() const;
    // Variables the reader UI may show under the current policy.
    std::map<std::string, double> displayable() const;
    const DirectorConfig &config() const { return cfg_; }

    // Called with each emitted transport marker (under the director's lock).
    void set_marker_sink(std::function<void(double, const std::string &)> sink);

private:
    Mutations marker_locked(const story::EngineEvent &e, double t);
    void diag(double t, std::string msg);

    DirectorConfig cfg_;
    mutable std::mutex mu_;
    double last_t_ = 0.0;
    std::map<std::string, double> vars_;
    std::map<std::string, Accumulator> acc_; // keyed by lower-cased tag
    std::map<std::string, std::deque<double>> windows_;
    std::vector<Diagnostic> diags_;
    std::vector<std::pair<double, std::string>> markers_;
    std::function<void(double, const std::string &)> sink_;
};

// Event log -----------------------------------------------------------------------

struct MarkerEntry {
    double t = 0.0;
    story::EngineEvent event;
};

using LogEntry = std::variant<MarkerEntry, StateUpdate>;

double entry_time(const LogEntry &e);

// Stable merge by timestamp; at equal timestamps markers precede states.
std::vector<LogEntry> merge_log(std::vector<LogEntry> entries);

// Applies a log (merged first) to a fresh director.
void replay_log(Director &d, const std::vector<LogEntry> &log);

// JSON Lines: {"t":..,"marker":"TAG_START:x"} or {"t":..,"state":[[key,value],..],"source":".."}.
std::string log_to_jsonl(const std::vector<LogEntry> &log);
std::vector<LogEntry> log_from_jsonl(const std::string &text);

// Markers from the marker stream plus signal channels whose labels are in
// `keys` (every signal channel when `keys` is empty).
std::vector<LogEntry> log_from_recording(const transport::Recording &rec, const std::set<std::string> &keys = {},
                                         const std::string &marker_stream = "pif-markers");

} // namespace pif::director
