#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "story/graph.hpp"

namespace pif::story {

std::string_view severity_name(Severity s)
{
    switch (s) {
    case Severity::Info: return "info";
    case Severity::Warning: return "warning";
    case Severity::Error: return "error";
    }
    return "error";
}

std::string format_diagnostic(const Diagnostic &d, const std::string &origin)
{
    std::ostringstream os;
    os << origin << ':' << d.pos.line << ':' << d.pos.col << ": " << severity_name(d.severity) << ": " << d.message;
    return os.str();
}

std::string_view rule_mode_name(RuleMode m)
{
    switch (m) {
    case RuleMode::Argmax: return "argmax";
    case RuleMode::Argmin: return "argmin";
    case RuleMode::Threshold: return "threshold";
    }
    return "argmax";
}

const Knot *StoryGraph::find_knot(std::string_view name) const
{
    for (const Knot &k : knots)
        if (k.name == name)
            return &k;
    return nullptr;
}

std::optional<std::size_t> StoryGraph::knot_index(std::string_view name) const
{
    for (std::size_t i = 0; i < knots.size(); ++i)
        if (knots[i].name == name)
            return i;
    return std::nullopt;
}

const VariableDecl *StoryGraph::find_variable(std::string_view name) const
{
    for (const VariableDecl &v : variables)
        if (v.name == name)
            return &v;
    return nullptr;
}

std::vector<std::string> StoryGraph::successors(const Knot &k) const
{
    std::vector<std::string> out;
    for (const Choice &c : k.choices)
        for (const std::string &t : c.targets)
            if (t != kEndTarget)
                out.push_back(t);
    if (k.divert && *k.divert != kEndTarget)
        out.push_back(*k.divert);
    return out;
}

namespace {

std::string_view trim(std::string_view s)
{
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
        s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
        s.remove_suffix(1);
    return s;
}

bool is_identifier(std::string_view s)
{
    if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_'))
        return false;
    return std::all_of(s.begin(), s.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

int leading_ws(std::string_view s)
{
    int n = 0;
    while (n < static_cast<int>(s.size()) && std::isspace(static_cast<unsigned char>(s[n])))
        ++n;
    return n;
}

class Parser {
public:
    explicit Parser(const StorySource &src) : src_(src) { graph_.origin = src.origin; }

    ParseResult run()
    {
        if (trim(src_.text).empty()) {
            error({1, 1}, "empty story");
            return finish();
        }
        split_lines();
        for (std::size_t i = 0; i < lines_.size(); ++i)
            parse_line(static_cast<int>(i) + 1, lines_[i]);
        close_knot();
        resolve();
        return finish();
    }

private:
    struct PendingTag {
        std::string tag;
        SourcePos pos;
        std::size_t span_index;
        bool started = false;
    };

    void split_lines()
    {
        std::string_view text = src_.text;
        if (text.substr(0, 3) == "\xEF\xBB\xBF")
            text.remove_prefix(3);
        std::size_t start = 0;
        while (start <= text.size()) {
            std::size_t nl = text.find('\n', start);
            std::string_view line = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
            if (!line.empty() && line.back() == '\r')
                line.remove_suffix(1);
            lines_.push_back(line);
            if (nl == std::string_view::npos)
                break;
            start = nl + 1;
        }
    }

    void error(SourcePos pos, std::string msg) { errors_.push_back({Severity::Error, pos, std::move(msg)}); }

    ParseResult finish()
    {
        ParseResult r;
        if (errors_.empty())
            r.graph = std::move(graph_);
        std::stable_sort(errors_.begin(), errors_.end(), [](const Diagnostic &a, const Diagnostic &b) {
            return a.pos.line != b.pos.line ? a.pos.line < b.pos.line : a.pos.col < b.pos.col;
        });
        r.errors = std::move(errors_);
        return r;
    }

    void parse_line(int lineno, std::string_view raw)
    {
        std::string_view line = trim(raw);
        int col = leading_ws(raw) + 1;
        SourcePos pos{lineno, col};
        if (line.empty() || line.substr(0, 2) == "//")
            return;

        if (line.substr(0, 2) == "==") {
            parse_knot_header(pos, line);
            return;
        }
        if (line.substr(0, 4) == "VAR " || line == "VAR") {
            if (current_)
                error(pos, "VAR declarations must precede the first knot");
            else
                parse_var(pos, line);
            return;
        }
        if (!current_) {
            if (line.substr(0, 2) == "->") {
                std::string_view target = trim(line.substr(2));
                if (!is_identifier(target)) {
                    error(pos, "expected a knot name after '->'");
                } else if (graph_.explicit_entry) {
                    error(pos, "duplicate entry divert");
                } else {
                    graph_.entry_knot = std::string(target);
                    graph_.explicit_entry = true;
                    entry_pos_ = pos;
                }
                return;
            }
            error(pos, "content outside of a knot");
            return;
        }

        if (line.substr(0, 2) == "##") {
            parse_tag(pos, line);
            return;
        }
        if (line.find_first_not_of('-') == std::string_view::npos && line.size() >= 3) {
            page_break(pos);
            return;
        }
        if (line.front() == '*') {
            parse_choice(pos, line);
            return;
        }
        if (line.substr(0, 2) == "->") {
            parse_divert(pos, line);
            return;
        }
        if (line.front() == '~') {
            parse_assignment(pos, line);
            return;
        }
        parse_text(pos, line);
    }

    // ---- knots -------------------------------------------------------

    void parse_knot_header(SourcePos pos, std::string_view line)
    {
        close_knot();
        std::string_view name = line;
        while (!name.empty() && name.front() == '=')
            name.remove_prefix(1);
        while (!name.empty() && name.back() == '=')
            name.remove_suffix(1);
        name = trim(name);
        if (!is_identifier(name)) {
            error(pos, "malformed knot header; expected '== name =='");
            name = "<invalid>";
        }
        if (name == kEndTarget)
            error(pos, "'END' is reserved and cannot name a knot");
        if (knot_names_.count(std::string(name)))
            error(pos, "duplicate knot name '" + std::string(name) + "'");
        knot_names_.insert(std::string(name));
        Knot k;
        k.name = std::string(name);
        k.pos = pos;
        k.pages.push_back(Page{{}, pos});
        graph_.knots.push_back(std::move(k));
        current_ = &graph_.knots.back();
        last_text_page_.reset();
        tag_stack_.clear();
        closed_body_ = false;
    }

    void close_knot()
    {
        if (!current_)
            return;
        for (const PendingTag &t : tag_stack_)
            error(t.pos, "unbalanced context tag '" + t.tag + "': opened but never closed in knot '" + current_->name + "'");
        tag_stack_.clear();
        bool has_text = false;
        for (const Page &p : current_->pages)
            for (const PageItem &it : p.items)
                has_text |= std::holds_alternative<TextLine>(it);
        if (!has_text)
            error(current_->pos, "knot '" + current_->name + "' has no text");
        else if (!page_has_text(current_->pages.back()))
            error(current_->pages.back().pos, "empty page at end of knot '" + current_->name + "'");
        current_ = nullptr;
    }

    static bool page_has_text(const Page &p)
    {
        return std::any_of(p.items.begin(), p.items.end(),
                           [](const PageItem &it) { return std::holds_alternative<TextLine>(it); });
    }

    bool body_closed(SourcePos pos)
    {
        if (closed_body_) {
            error(pos, "content after choices or divert in knot '" + current_->name + "'");
            return true;
        }
        return false;
    }

    void page_break(SourcePos pos)
    {
        if (body_closed(pos))
            return;
        if (!page_has_text(current_->pages.back())) {
            error(pos, "empty page");
            return;
        }
        current_->pages.push_back(Page{{}, pos});
    }

    // ---- tags --------------------------------------------------------

    void parse_tag(SourcePos pos, std::string_view line)
    {
        std::string_view body = line.substr(2);
        bool start = false;
        std::string_view tag;
        if (body.size() > 6 && body.substr(body.size() - 6) == "_START") {
            start = true;
            tag = body.substr(0, body.size() - 6);
        } else if (body.size() > 5 && body.substr(body.size() - 5) == "_STOP") {
            tag = body.substr(0, body.size() - 5);
        } else {
            error(pos, "malformed context tag; expected '##NAME_START' or '##NAME_STOP'");
            return;
        }
        if (!is_identifier(tag)) {
            error(pos, "malformed context tag name '" + std::string(tag) + "'");
            return;
        }
        if (body_closed(pos))
            return;
        std::string name(tag);
        if (start) {
            for (const PendingTag &t : tag_stack_)
                if (t.tag == name) {
                    error(pos, "context tag '" + name + "' is already open");
                    return;
                }
            TagSpan span;
            span.tag = name;
            span.open_pos = pos;
            current_->tag_spans.push_back(span);
            tag_stack_.push_back({name, pos, current_->tag_spans.size() - 1});
            if (std::find(graph_.tags.begin(), graph_.tags.end(), name) == graph_.tags.end())
                graph_.tags.push_back(name);
            return;
        }
        if (tag_stack_.empty()) {
            error(pos, "unbalanced context tag '" + name + "': closed but never opened");
            return;
        }
        if (tag_stack_.back().tag != name) {
            bool open = std::any_of(tag_stack_.begin(), tag_stack_.end(), [&](const PendingTag &t) { return t.tag == name; });
            if (open)
                error(pos, "context tag '" + name + "' closed while '" + tag_stack_.back().tag + "' is still open (tags must nest)");
            else
                error(pos, "unbalanced context tag '" + name + "': closed but never opened");
            return;
        }
        PendingTag t = tag_stack_.back();
        tag_stack_.pop_back();
        TagSpan &span = current_->tag_spans[t.span_index];
        if (!t.started) {
            error(pos, "context tag '" + name + "' encloses no text");
            return;
        }
        span.end_page = *last_text_page_;
        span.close_pos = pos;
    }

    // ---- text --------------------------------------------------------

    void add_text(TextLine line)
    {
        std::size_t page = current_->pages.size() - 1;
        for (PendingTag &t : tag_stack_) {
            if (!t.started) {
                t.started = true;
                current_->tag_spans[t.span_index].start_page = page;
            }
        }
        last_text_page_ = page;
        current_->pages.back().items.emplace_back(std::move(line));
    }

    void parse_text(SourcePos pos, std::string_view line)
    {
        if (body_closed(pos))
            return;
        TextLine tl;
        tl.pos = pos;
        std::string literal;
        std::size_t i = 0;
        while (i < line.size()) {
            char c = line[i];
            if (c == '{') {
                std::size_t close = line.find('}', i);
                if (close == std::string_view::npos) {
                    error({pos.line, pos.col + static_cast<int>(i)}, "unterminated '{' in text");
                    return;
                }
                if (!literal.empty()) {
                    tl.segments.push_back({TextSegment::Kind::Literal, literal, {}, {}, {}});
                    literal.clear();
                }
                std::string_view inner = line.substr(i + 1, close - i - 1);
                SourcePos ipos{pos.line, pos.col + static_cast<int>(i) + 1};
                TextSegment seg;
                std::size_t colon = inner.find(':');
                if (colon == std::string_view::npos) {
                    seg.kind = TextSegment::Kind::Print;
                    if (!parse_checked(inner, ipos, std::nullopt, seg.expr))
                        return;
                } else {
                    seg.kind = TextSegment::Kind::Conditional;
                    if (!parse_checked(inner.substr(0, colon), ipos, ValueType::Boolean, seg.expr))
                        return;
                    std::string_view rest = inner.substr(colon + 1);
                    std::size_t bar = rest.find('|');
                    seg.then_text = std::string(trim(rest.substr(0, bar)));
                    if (bar != std::string_view::npos)
                        seg.else_text = std::string(trim(rest.substr(bar + 1)));
                }
                tl.segments.push_back(std::move(seg));
                i = close + 1;
                continue;
            }
            if (c == '}') {
                error({pos.line, pos.col + static_cast<int>(i)}, "unmatched '}' in text");
                return;
            }
            literal.push_back(c);
            ++i;
        }
        if (!literal.empty())
            tl.segments.push_back({TextSegment::Kind::Literal, literal, {}, {}, {}});
        add_text(std::move(tl));
    }

    void parse_assignment(SourcePos pos, std::string_view line)
    {
        if (body_closed(pos))
            return;
        std::string_view body = trim(line.substr(1));
        std::size_t eq = body.find('=');
        if (eq == std::string_view::npos || (eq + 1 < body.size() && body[eq + 1] == '=')) {
            error(pos, "expected '~ name = expression'");
            return;
        }
        std::string name(trim(body.substr(0, eq)));
        if (!is_identifier(name)) {
            error(pos, "expected a variable name before '='");
            return;
        }
        if (is_phys_name(name)) {
            error(pos, "stories cannot assign to '" + name + "': the phys_ prefix is reserved for the Director");
            return;
        }
        Assignment a;
        a.name = name;
        a.pos = pos;
        std::string_view rhs = body.substr(eq + 1);
        int offset = static_cast<int>(line.size() - body.size()) + static_cast<int>(eq) + 1;
        if (!parse_unchecked(rhs, {pos.line, pos.col + offset}, a.value))
            return;
        current_->pages.back().items.emplace_back(std::move(a));
    }

    // ---- choices and diverts ----------------------------------------

    void parse_divert(SourcePos pos, std::string_view line)
    {
        if (closed_body_) {
            error(pos, current_->choices.empty() ? "a knot may have only one divert"
                                                 : "a knot cannot have both choices and a divert");
            return;
        }
        std::string_view target = trim(line.substr(2));
        if (!is_identifier(target)) {
            error(pos, "expected a knot name after '->'");
            return;
        }
        check_open_tags(pos);
        current_->divert = std::string(target);
        current_->divert_pos = pos;
        closed_body_ = true;
    }

    void check_open_tags(SourcePos pos)
    {
        for (const PendingTag &t : tag_stack_)
            error(t.pos, "unbalanced context tag '" + t.tag + "': still open at the end of knot '" + current_->name +
                             "' (line " + std::to_string(pos.line) + ")");
        tag_stack_.clear();
    }

    bool parse_targets(SourcePos pos, std::string_view text, std::vector<std::string> &out)
    {
        text = trim(text);
        if (text.substr(0, 2) != "->") {
            error(pos, "expected '->' followed by a target knot");
            return false;
        }
        text.remove_prefix(2);
        std::size_t start = 0;
        while (start <= text.size()) {
            std::size_t comma = text.find(',', start);
            std::string_view t = trim(text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
            if (!is_identifier(t)) {
                error(pos, "expected a knot name after '->'");
                return false;
            }
            out.emplace_back(t);
            if (comma == std::string_view::npos)
                break;
            start = comma + 1;
        }
        return true;
    }

    void parse_choice(SourcePos pos, std::string_view line)
    {
        if (current_->divert) {
            error(pos, "a knot cannot have both choices and a divert");
            return;
        }
        if (!closed_body_) {
            check_open_tags(pos);
            if (!page_has_text(current_->pages.back())) {
                error(pos, "choices must follow text");
                return;
            }
        }
        closed_body_ = true;
        std::string_view rest = trim(line.substr(1));
        int base = pos.col + static_cast<int>(line.size() - rest.size());
        Choice c;
        c.pos = pos;
        bool automatic = rest.substr(0, 4) == "auto" && (rest.size() == 4 || !std::isalnum(static_cast<unsigned char>(rest[4])));
        if (automatic) {
            rest = trim(rest.substr(4));
            base = pos.col + static_cast<int>(line.size() - rest.size());
            if (rest.empty() || rest.front() != '{') {
                error(pos, "expected '{rule}' after '*auto'");
                return;
            }
            std::size_t close = rest.find('}');
            if (close == std::string_view::npos) {
                error(pos, "unterminated '{' in automatic choice");
                return;
            }
            AutoRule rule;
            if (!parse_rule(rest.substr(1, close - 1), {pos.line, base + 1}, rule))
                return;
            if (!parse_targets(pos, rest.substr(close + 1), c.targets))
                return;
            std::size_t want = rule.mode == RuleMode::Threshold ? 2 : rule.operands.size();
            if (c.targets.size() != want) {
                error(pos, "automatic choice '" + std::string(rule_mode_name(rule.mode)) + "' needs " + std::to_string(want) +
                               " targets, got " + std::to_string(c.targets.size()));
                return;
            }
            if (!current_->choices.empty()) {
                error(pos, current_->has_auto_choice() ? "a knot may have only one automatic choice"
                                                       : "a knot cannot mix manual and automatic choices");
                return;
            }
            c.auto_rule = std::move(rule);
            current_->choices.push_back(std::move(c));
            return;
        }

        if (current_->has_auto_choice()) {
            error(pos, "a knot cannot mix manual and automatic choices");
            return;
        }
        if (!rest.empty() && rest.front() == '{') {
            std::size_t close = rest.find('}');
            if (close == std::string_view::npos) {
                error(pos, "unterminated '{' in choice condition");
                return;
            }
            Expr cond;
            if (!parse_checked(rest.substr(1, close - 1), {pos.line, base + 1}, ValueType::Boolean, cond))
                return;
            c.condition = cond;
            rest = trim(rest.substr(close + 1));
        }
        if (rest.empty() || rest.front() != '[') {
            error(pos, "expected '[label]' in choice");
            return;
        }
        std::size_t rb = rest.find(']');
        if (rb == std::string_view::npos) {
            error(pos, "unterminated '[' in choice");
            return;
        }
        c.label = std::string(trim(rest.substr(1, rb - 1)));
        if (c.label.empty()) {
            error(pos, "manual choices need a label; use '*auto' for automatic choices");
            return;
        }
        if (!parse_targets(pos, rest.substr(rb + 1), c.targets))
            return;
        if (c.targets.size() != 1) {
            error(pos, "a manual choice has exactly one target");
            return;
        }
        current_->choices.push_back(std::move(c));
    }

    bool parse_rule(std::string_view text, SourcePos pos, AutoRule &rule)
    {
        text = trim(text);
        std::size_t sp = 0;
        while (sp < text.size() && std::isalpha(static_cast<unsigned char>(text[sp])))
            ++sp;
        std::string_view mode = text.substr(0, sp);
        if (mode == "argmax")
            rule.mode = RuleMode::Argmax;
        else if (mode == "argmin")
            rule.mode = RuleMode::Argmin;
        else if (mode == "threshold")
            rule.mode = RuleMode::Threshold;
        else {
            error(pos, "unknown rule '" + std::string(mode) + "'; expected argmax, argmin or threshold");
            return false;
        }
        std::string_view args = trim(text.substr(sp));
        std::vector<std::string_view> parts;
        if (rule.mode == RuleMode::Threshold) {
            std::size_t s = args.find_first_of(" \t,");
            if (s == std::string_view::npos) {
                error(pos, "threshold rules need exactly one operand and a threshold value");
                return false;
            }
            parts.push_back(trim(args.substr(0, s)));
            std::string_view value = trim(args.substr(s));
            if (!value.empty() && value.front() == ',')
                value = trim(value.substr(1));
            auto parsed = parse_expr(value, pos);
            const Expr *e = std::get_if<Expr>(&parsed);
            bool constant = e && e->referenced_names().empty();
            if (!constant) {
                error(pos, "threshold value must be a number");
                return false;
            }
            try {
                Value v = e->eval({});
                if (!std::holds_alternative<double>(v))
                    throw EvalError("not a number");
                rule.threshold = std::get<double>(v);
            } catch (const EvalError &) {
                error(pos, "threshold value must be a number");
                return false;
            }
        } else {
            std::size_t start = 0;
            while (start <= args.size()) {
                std::size_t comma = args.find(',', start);
                parts.push_back(trim(args.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
                if (comma == std::string_view::npos)
                    break;
                start = comma + 1;
            }
        }
        for (std::string_view p : parts) {
            Operand op;
            std::size_t at = p.find('@');
            op.key = std::string(p.substr(0, at));
            if (at != std::string_view::npos)
                op.tag = std::string(p.substr(at + 1));
            if (!is_identifier(op.key) || (at != std::string_view::npos && !is_identifier(op.tag))) {
                error(pos, "malformed rule operand '" + std::string(p) + "'; expected name or key@TAG");
                return false;
            }
            if (op.tag.empty() && !is_phys_name(op.key)) {
                const VariableDecl *decl = find_decl(op.key);
                if (!decl) {
                    error(pos, "undeclared variable '" + op.key + "'");
                    return false;
                }
                if (type_of(decl->initial) != ValueType::Number) {
                    error(pos, "rule operand '" + op.key + "' must be numeric");
                    return false;
                }
            }
            rule.operands.push_back(std::move(op));
        }
        if (rule.mode != RuleMode::Threshold && rule.operands.size() < 2) {
            error(pos, std::string(rule_mode_name(rule.mode)) + " needs at least 2 operands");
            return false;
        }
        if (rule.mode == RuleMode::Threshold && rule.operands.size() != 1) {
            error(pos, "threshold rules need exactly one operand and a threshold value");
            return false;
        }
        return true;
    }

    // ---- variables and expressions -----------------------------------

    const VariableDecl *find_decl(std::string_view name) const
    {
        for (const VariableDecl &d : graph_.variables)
            if (d.name == name)
                return &d;
        return nullptr;
    }

    std::optional<ValueType> lookup(const std::string &name) const
    {
        if (is_phys_name(name))
            return ValueType::Number;
        if (const VariableDecl *d = find_decl(name))
            return type_of(d->initial);
        return std::nullopt;
    }

    bool parse_unchecked(std::string_view text, SourcePos pos, Expr &out)
    {
        auto parsed = parse_expr(text, pos);
        if (auto *err = std::get_if<ExprParseError>(&parsed)) {
            error(err->pos, err->message);
            return false;
        }
        out = std::get<Expr>(parsed);
        return true;
    }

    bool parse_checked(std::string_view text, SourcePos pos, std::optional<ValueType> want, Expr &out)
    {
        if (!parse_unchecked(text, pos, out))
            return false;
        try {
            ValueType t = out.type_check([this](const std::string &n) { return lookup(n); });
            if (want && t != *want) {
                error(pos, "expected a " + std::string(type_name(*want)) + " expression, got " + std::string(type_name(t)));
                return false;
            }
        } catch (const EvalError &e) {
            error(pos, e.what());
            return false;
        }
        return true;
    }

    void parse_var(SourcePos pos, std::string_view line)
    {
        std::string_view body = trim(line.substr(3));
        std::size_t eq = body.find('=');
        if (eq == std::string_view::npos) {
            error(pos, "expected 'VAR name = value'");
            return;
        }
        std::string name(trim(body.substr(0, eq)));
        if (!is_identifier(name)) {
            error(pos, "malformed variable name '" + name + "'");
            return;
        }
        if (is_phys_name(name)) {
            error(pos, "variable '" + name + "' uses the phys_ prefix reserved for the Director");
            return;
        }
        if (find_decl(name)) {
            error(pos, "duplicate variable '" + name + "'");
            return;
        }
        int offset = static_cast<int>(line.size() - body.size()) + static_cast<int>(eq) + 1;
        Expr e;
        if (!parse_unchecked(body.substr(eq + 1), {pos.line, pos.col + offset}, e))
            return;
        if (!e.referenced_names().empty()) {
            error(pos, "initial value of '" + name + "' must be a constant");
            return;
        }
        try {
            graph_.variables.push_back({name, e.eval({}), pos});
        } catch (const EvalError &err) {
            error(pos, err.what());
        }
    }

    // ---- cross-references --------------------------------------------

    void resolve()
    {
        if (graph_.knots.empty()) {
            if (errors_.empty())
                error({1, 1}, "story has no knots");
            return;
        }
        if (!graph_.explicit_entry)
            graph_.entry_knot = graph_.knots.front().name;
        else if (!knot_names_.count(graph_.entry_knot))
            error(entry_pos_, "unknown divert target '" + graph_.entry_knot + "'");

        for (const Knot &k : graph_.knots) {
            for (const Choice &c : k.choices)
                for (const std::string &t : c.targets)
                    if (t != kEndTarget && !knot_names_.count(t))
                        error(c.pos, "unknown divert target '" + t + "'");
            if (k.divert && *k.divert != kEndTarget && !knot_names_.count(*k.divert))
                error(k.divert_pos, "unknown divert target '" + *k.divert + "'");
        }

        // Assignment types are checked once every VAR is known.
        for (Knot &k : graph_.knots)
            for (Page &p : k.pages)
                for (PageItem &it : p.items)
                    if (auto *a = std::get_if<Assignment>(&it)) {
                        const VariableDecl *d = find_decl(a->name);
                        if (!d) {
                            error(a->pos, "undeclared variable '" + a->name + "'");
                            continue;
                        }
                        try {
                            ValueType t = a->value.type_check([this](const std::string &n) { return lookup(n); });
                            if (t != type_of(d->initial))
                                error(a->pos, "cannot assign a " + std::string(type_name(t)) + " to " +
                                                  std::string(type_name(type_of(d->initial))) + " variable '" + a->name + "'");
                        } catch (const EvalError &e) {
                            error(a->pos, e.what());
                        }
                    }
    }

    const StorySource &src_;
    std::vector<std::string_view> lines_;
    StoryGraph graph_;
    std::vector<Diagnostic> errors_;
    std::set<std::string> knot_names_;
    Knot *current_ = nullptr;
    std::vector<PendingTag> tag_stack_;
    std::optional<std::size_t> last_text_page_;
    bool closed_body_ = false;
    SourcePos entry_pos_;
};

} // namespace

ParseResult parse(const StorySource &source)
{
    Parser p(source);
    return p.run();
}

} // namespace pif::story
