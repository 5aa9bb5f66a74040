#include "story/runtime.hpp"

#include <cmath>
#include <sstream>

namespace pif::story {

std::string_view event_kind_name(EngineEventKind k)
{
    switch (k) {
    case EngineEventKind::StoryStarted: return "StoryStarted";
    case EngineEventKind::KnotEntered: return "KnotEntered";
    case EngineEventKind::PageShown: return "PageShown";
    case EngineEventKind::TagOpened: return "TagOpened";
    case EngineEventKind::TagClosed: return "TagClosed";
    case EngineEventKind::ChoicePresented: return "ChoicePresented";
    case EngineEventKind::BranchTaken: return "BranchTaken";
    case EngineEventKind::TieBroken: return "TieBroken";
    case EngineEventKind::RuleFallback: return "RuleFallback";
    case EngineEventKind::EvalFailed: return "EvalFailed";
    case EngineEventKind::StoryEnded: return "StoryEnded";
    }
    return "?";
}

std::string describe(const EngineEvent &e)
{
    std::ostringstream os;
    os << event_kind_name(e.kind);
    switch (e.kind) {
    case EngineEventKind::StoryStarted: os << ' ' << e.story; break;
    case EngineEventKind::KnotEntered: os << ' ' << e.knot; break;
    case EngineEventKind::PageShown: os << ' ' << e.story << '/' << e.knot << '/' << e.page; break;
    case EngineEventKind::TagOpened:
    case EngineEventKind::TagClosed: os << ' ' << e.tag; break;
    case EngineEventKind::ChoicePresented:
        for (std::size_t i = 0; i < e.labels.size(); ++i)
            os << (i ? " | " : " ") << e.labels[i];
        break;
    case EngineEventKind::BranchTaken:
        os << ' ' << e.target << (e.branch == BranchKind::Automatic ? " (auto)" : e.branch == BranchKind::Divert ? " (divert)" : "");
        break;
    default:
        if (!e.detail.empty())
            os << ' ' << e.detail;
        break;
    }
    return os.str();
}

std::vector<std::string> SessionState::choice_labels() const
{
    std::vector<std::string> out;
    for (std::size_t i : available_choices)
        out.push_back(current_knot().choices[i].label);
    return out;
}

void set_phys(SessionState &state, const std::string &name, double value)
{
    if (!is_phys_name(name))
        throw invalid_argument("only phys_ variables can be written from outside the story: '" + name + "'");
    if (!std::isfinite(value))
        throw invalid_argument("non-finite value for '" + name + "'");
    state.variables[name] = value;
}

namespace {

class Stepper {
public:
    Stepper(SessionState state, EventObserver *observer) : s_(std::move(state)), observer_(observer) {}

    void emit(EngineEvent e)
    {
        if (e.story.empty())
            e.story = s_.story_id;
        if (observer_)
            for (auto &[name, value] : observer_->on_engine_event(e))
                set_phys(s_, name, value);
        events_.push_back(std::move(e));
    }

    void emit_simple(EngineEventKind kind, std::string detail = {})
    {
        EngineEvent e;
        e.kind = kind;
        e.knot = s_.current_knot().name;
        e.detail = std::move(detail);
        emit(std::move(e));
    }

    void enter_knot(std::size_t knot)
    {
        s_.knot = knot;
        EngineEvent e;
        e.kind = EngineEventKind::KnotEntered;
        e.knot = s_.current_knot().name;
        emit(std::move(e));
        enter_page(0);
    }

    void enter_page(std::size_t page)
    {
        const Knot &k = s_.current_knot();
        s_.page = page;
        s_.awaiting_choice = false;
        s_.available_choices.clear();
        for (const TagSpan &span : k.tag_spans) {
            if (span.start_page != page)
                continue;
            s_.open_tags.push_back(span.tag);
            EngineEvent e;
            e.kind = EngineEventKind::TagOpened;
            e.knot = k.name;
            e.page = page;
            e.tag = span.tag;
            emit(std::move(e));
        }
        for (const PageItem &it : k.pages[page].items) {
            const auto *a = std::get_if<Assignment>(&it);
            if (!a)
                continue;
            try {
                s_.variables[a->name] = a->value.eval(s_.variables);
            } catch (const EvalError &err) {
                emit_simple(EngineEventKind::EvalFailed, "~ " + a->name + ": " + err.what());
            }
        }
        EngineEvent shown;
        shown.kind = EngineEventKind::PageShown;
        shown.knot = k.name;
        shown.page = page;
        emit(std::move(shown));

        if (page + 1 < k.pages.size())
            return;
        if (k.terminal()) {
            s_.at_end = true;
            return;
        }
        if (k.has_auto_choice() || k.divert)
            return;
        for (std::size_t i = 0; i < k.choices.size(); ++i) {
            const Choice &c = k.choices[i];
            bool available = true;
            if (c.condition) {
                try {
                    available = std::get<bool>(c.condition->eval(s_.variables));
                } catch (const EvalError &err) {
                    emit_simple(EngineEventKind::EvalFailed, "choice '" + c.label + "': " + err.what());
                    available = false;
                }
            }
            if (available)
                s_.available_choices.push_back(i);
        }
        if (s_.available_choices.empty()) {
            s_.at_end = true;
            return;
        }
        s_.awaiting_choice = true;
        EngineEvent e;
        e.kind = EngineEventKind::ChoicePresented;
        e.knot = k.name;
        e.page = page;
        e.labels = s_.choice_labels();
        emit(std::move(e));
    }

    void leave_page()
    {
        const Knot &k = s_.current_knot();
        for (auto it = k.tag_spans.rbegin(); it != k.tag_spans.rend(); ++it) {
            if (it->end_page != s_.page)
                continue;
            close_tag(it->tag);
        }
    }

    void close_tag(const std::string &tag)
    {
        std::erase(s_.open_tags, tag);
        EngineEvent e;
        e.kind = EngineEventKind::TagClosed;
        e.knot = s_.current_knot().name;
        e.page = s_.page;
        e.tag = tag;
        emit(std::move(e));
    }

    void branch(const std::string &target, BranchKind kind)
    {
        EngineEvent e;
        e.kind = EngineEventKind::BranchTaken;
        e.knot = s_.current_knot().name;
        e.target = target;
        e.branch = kind;
        emit(std::move(e));
        if (target == kEndTarget) {
            end_story();
            return;
        }
        enter_knot(*s_.graph->knot_index(target));
    }

    void end_story()
    {
        while (!s_.open_tags.empty())
            close_tag(s_.open_tags.back());
        s_.awaiting_choice = false;
        s_.available_choices.clear();
        s_.at_end = true;
        s_.finished = true;
        emit_simple(EngineEventKind::StoryEnded);
    }

    std::string resolve_auto(const Choice &c)
    {
        const AutoRule &rule = *c.auto_rule;
        std::vector<std::optional<double>> values;
        std::string missing;
        for (const Operand &op : rule.operands) {
            auto it = s_.variables.find(op.variable());
            if (it != s_.variables.end() && std::holds_alternative<double>(it->second)) {
                values.push_back(std::get<double>(it->second));
            } else {
                values.push_back(std::nullopt);
                missing += (missing.empty() ? "" : ", ") + op.to_string();
            }
        }
        if (rule.mode == RuleMode::Threshold) {
            if (!values[0]) {
                emit_simple(EngineEventKind::RuleFallback, "operand " + missing + " has no value; taking first target");
                return c.targets[0];
            }
            return *values[0] >= *rule.threshold ? c.targets[0] : c.targets[1];
        }
        std::optional<std::size_t> best;
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (!values[i])
                continue;
            if (!best)
                best = i;
            else if (rule.mode == RuleMode::Argmax ? *values[i] > *values[*best] : *values[i] < *values[*best])
                best = i;
        }
        if (!missing.empty())
            emit_simple(EngineEventKind::RuleFallback,
                        "operands without value ignored: " + missing + (best ? "" : "; taking first target"));
        if (!best)
            return c.targets[0];
        std::vector<std::string> tied;
        for (std::size_t i = 0; i < values.size(); ++i)
            if (values[i] && *values[i] == *values[*best])
                tied.push_back(c.targets[i]);
        if (tied.size() > 1) {
            std::string detail;
            for (const std::string &t : tied)
                detail += (detail.empty() ? "" : ", ") + t;
            emit_simple(EngineEventKind::TieBroken, detail + " -> " + c.targets[*best]);
        }
        return c.targets[*best];
    }

    SessionState &state() { return s_; }
    Transition done() { return {std::move(s_), std::move(events_)}; }

private:
    SessionState s_;
    EventObserver *observer_;
    std::vector<EngineEvent> events_;
};

} // namespace

Transition start(std::shared_ptr<const StoryGraph> graph, std::string story_id, EventObserver *observer)
{
    if (!graph)
        throw invalid_argument("start: null story graph");
    auto entry = graph->knot_index(graph->entry_knot);
    if (!entry)
        throw invalid_argument("start: entry knot '" + graph->entry_knot + "' does not exist");
    SessionState s;
    s.graph = std::move(graph);
    s.story_id = story_id.empty() ? s.graph->origin : std::move(story_id);
    for (const VariableDecl &v : s.graph->variables)
        s.variables[v.name] = v.initial;
    Stepper st(std::move(s), observer);
    EngineEvent e;
    e.kind = EngineEventKind::StoryStarted;
    st.emit(std::move(e));
    st.enter_knot(*entry);
    return st.done();
}

Transition advance(const SessionState &state, const ReaderEvent &event, EventObserver *observer)
{
    if (!state.graph)
        throw IllegalEvent("session not started");
    if (state.finished)
        throw IllegalEvent("story has finished");
    const Knot &k = state.current_knot();
    Stepper st(state, observer);

    if (event.kind == ReaderEvent::Kind::Choose) {
        if (!state.awaiting_choice)
            throw IllegalEvent("no choices are displayed");
        if (event.index >= state.available_choices.size())
            throw IllegalEvent("choice " + std::to_string(event.index) + " out of range (" +
                               std::to_string(state.available_choices.size()) + " choices displayed)");
        const Choice &c = k.choices[state.available_choices[event.index]];
        st.leave_page();
        st.branch(c.targets[0], BranchKind::Manual);
        return st.done();
    }

    if (state.awaiting_choice)
        throw IllegalEvent("a choice is required on this page");
    if (state.at_end)
        throw IllegalEvent("next_page at the final page");
    st.leave_page();
    if (state.page + 1 < k.pages.size()) {
        st.enter_page(state.page + 1);
        return st.done();
    }
    if (k.has_auto_choice()) {
        std::string target = st.resolve_auto(k.choices.front());
        st.branch(target, BranchKind::Automatic);
    } else {
        st.branch(*k.divert, BranchKind::Divert);
    }
    return st.done();
}

Transition finish(const SessionState &state, EventObserver *observer)
{
    if (!state.graph)
        throw IllegalEvent("session not started");
    if (state.finished)
        throw IllegalEvent("story has finished");
    Stepper st(state, observer);
    st.end_story();
    return st.done();
}

std::string render_page(const SessionState &state)
{
    const Page &page = state.current_knot().pages[state.page];
    std::string out;
    bool first = true;
    for (const PageItem &it : page.items) {
        const auto *line = std::get_if<TextLine>(&it);
        if (!line)
            continue;
        if (!first)
            out += '\n';
        first = false;
        for (const TextSegment &seg : line->segments) {
            switch (seg.kind) {
            case TextSegment::Kind::Literal:
                out += seg.text;
                break;
            case TextSegment::Kind::Print:
                try {
                    out += to_string(seg.expr.eval(state.variables));
                } catch (const EvalError &) {
                }
                break;
            case TextSegment::Kind::Conditional: {
                bool cond = false;
                try {
                    cond = std::get<bool>(seg.expr.eval(state.variables));
                } catch (const EvalError &) {
                }
                out += cond ? seg.then_text : seg.else_text;
                break;
            }
            }
        }
    }
    return out;
}

} // namespace pif::story
