#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "story/graph.hpp"

namespace pif::story {

enum class EngineEventKind {
    StoryStarted,
    KnotEntered,
    PageShown,
    TagOpened,
    TagClosed,
    ChoicePresented,
    BranchTaken,
    TieBroken,
    RuleFallback,
    EvalFailed,
    StoryEnded,
};

std::string_view event_kind_name(EngineEventKind k);

enum class BranchKind { Manual, Automatic, Divert };

struct EngineEvent {
    EngineEventKind kind = EngineEventKind::PageShown;
    std::string story;
    std::string knot;
    std::size_t page = 0;
    std::string tag;
    std::vector<std::string> labels; // ChoicePresented
    std::string target;              // BranchTaken
    BranchKind branch = BranchKind::Manual;
    std::string detail;

    bool operator==(const EngineEvent &) const = default;
};

// One-line rendering used in logs and replay comparisons.
std::string describe(const EngineEvent &e);

struct ReaderEvent {
    enum class Kind { NextPage, Choose };
    Kind kind = Kind::NextPage;
    std::size_t index = 0;

    static ReaderEvent next_page() { return {Kind::NextPage, 0}; }
    static ReaderEvent choose(std::size_t i) { return {Kind::Choose, i}; }
    bool operator==(const ReaderEvent &) const = default;
};

class IllegalEvent : public Error {
public:
    explicit IllegalEvent(const std::string &msg) : Error(Category::State, msg) {}
};

struct SessionState {
    std::shared_ptr<const StoryGraph> graph;
    std::string story_id;
    std::size_t knot = 0;
    std::size_t page = 0;
    VariableStore variables;
    std::vector<std::string> open_tags;          // innermost last
    std::vector<std::size_t> available_choices;  // indices into the knot's choices while awaiting a choice
    bool awaiting_choice = false;
    bool at_end = false;   // final page shown; only finish() is legal
    bool finished = false; // finish() called

    const Knot &current_knot() const { return graph->knots[knot]; }
    std::vector<std::string> choice_labels() const;
};

// Receives engine events synchronously while a transition is computed and
// may answer with `phys_*` writes that take effect before the transition
// continues (so a tag closed on the choice page is visible to the rule that
// resolves the choice). The Director implements this.
class EventObserver {
public:
    virtual ~EventObserver() = default;
    virtual std::vector<std::pair<std::string, double>> on_engine_event(const EngineEvent &e) = 0;
};

struct Transition {
    SessionState state;
    std::vector<EngineEvent> events;
};

Transition start(std::shared_ptr<const StoryGraph> graph, std::string story_id = {}, EventObserver *observer = nullptr);

// Deterministic given (state, event) and a deterministic observer. Throws
// IllegalEvent when the event is not legal in `state`.
Transition advance(const SessionState &state, const ReaderEvent &event, EventObserver *observer = nullptr);

// Closes any context tags still open and ends the story. Legal in any
// unfinished state.
Transition finish(const SessionState &state, EventObserver *observer = nullptr);

// Display text of the current page with inline conditions resolved.
std::string render_page(const SessionState &state);

// Writes a Director-owned variable. Rejects names outside the phys_ prefix.
void set_phys(SessionState &state, const std::string &name, double value);

} // namespace pif::story
