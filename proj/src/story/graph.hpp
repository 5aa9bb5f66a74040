#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "story/expr.hpp"

namespace pif::story {

enum class Severity { Info, Warning, Error };

std::string_view severity_name(Severity s);

struct Diagnostic {
    Severity severity = Severity::Error;
    SourcePos pos;
    std::string message;
};

// `path:line:col: severity: message`
std::string format_diagnostic(const Diagnostic &d, const std::string &origin);

struct StorySource {
    std::string text;
    std::string origin = "<inline>";
};

struct VariableDecl {
    std::string name;
    Value initial;
    SourcePos pos;
};

// One piece of a display line: literal text, `{expr}` (prints the value)
// or `{cond: then | else}`.
struct TextSegment {
    enum class Kind { Literal, Print, Conditional };
    Kind kind = Kind::Literal;
    std::string text;      // Literal
    Expr expr;             // Print / Conditional condition
    std::string then_text; // Conditional
    std::string else_text;
};

struct TextLine {
    std::vector<TextSegment> segments;
    SourcePos pos;
};

struct Assignment {
    std::string name;
    Expr value;
    SourcePos pos;
};

using PageItem = std::variant<TextLine, Assignment>;

struct Page {
    std::vector<PageItem> items;
    SourcePos pos;
};

struct TagSpan {
    std::string tag;
    std::size_t start_page = 0;
    std::size_t end_page = 0;
    SourcePos open_pos;
    SourcePos close_pos;
};

enum class RuleMode { Argmax, Argmin, Threshold };

std::string_view rule_mode_name(RuleMode m);

struct Operand {
    std::string key;
    std::string tag; // empty: plain variable

    // Name of the variable the operand reads.
    std::string variable() const { return tag.empty() ? key : tag_scoped_variable(key, tag); }
    std::string to_string() const { return tag.empty() ? key : key + "@" + tag; }
    bool operator==(const Operand &) const = default;
};

// Argmax/argmin pick the target paired with the extreme operand; threshold
// picks the first target when the operand is >= threshold, else the second.
struct AutoRule {
    RuleMode mode = RuleMode::Argmax;
    std::vector<Operand> operands;
    std::optional<double> threshold;
};

struct Choice {
    std::string label;
    // One target for manual choices; one per operand (argmax/argmin) or two
    // (threshold) for automatic choices.
    std::vector<std::string> targets;
    std::optional<Expr> condition;
    std::optional<AutoRule> auto_rule;
    SourcePos pos;

    bool automatic() const { return auto_rule.has_value(); }
};

inline constexpr const char *kEndTarget = "END";

struct Knot {
    std::string name;
    std::vector<Page> pages;
    std::vector<Choice> choices;
    std::optional<std::string> divert; // "END" terminates explicitly
    SourcePos divert_pos;
    std::vector<TagSpan> tag_spans; // ordered by opening position
    SourcePos pos;

    bool has_auto_choice() const { return !choices.empty() && choices.front().automatic(); }
    // Knot that ends the story once its last page is shown.
    bool terminal() const { return choices.empty() && (!divert || *divert == kEndTarget); }
};

struct StoryGraph {
    std::string origin = "<inline>";
    std::vector<VariableDecl> variables;
    std::vector<Knot> knots;
    std::string entry_knot;
    bool explicit_entry = false;
    std::vector<std::string> tags; // every context tag that is opened, first-use order

    const Knot *find_knot(std::string_view name) const;
    std::optional<std::size_t> knot_index(std::string_view name) const;
    const VariableDecl *find_variable(std::string_view name) const;

    // Successor knot names of a knot (choice and divert targets, END excluded).
    std::vector<std::string> successors(const Knot &k) const;
};

// Equality ignoring source positions and origin.
bool structurally_equal(const StoryGraph &a, const StoryGraph &b);

struct ParseResult {
    std::optional<StoryGraph> graph;
    std::vector<Diagnostic> errors;

    bool ok() const { return graph.has_value(); }
};

ParseResult parse(const StorySource &source);

// Canonical source text for a graph; parse(print(g)) is structurally equal
// to g.
std::string print(const StoryGraph &graph);

// Authoring diagnostics. Never fails.
std::vector<Diagnostic> lint(const StoryGraph &graph);

} // namespace pif::story
