#include <sstream>

#include "story/graph.hpp"

namespace pif::story {

namespace {

void print_line(const TextLine &line, std::ostream &os)
{
    for (const TextSegment &s : line.segments) {
        switch (s.kind) {
        case TextSegment::Kind::Literal:
            os << s.text;
            break;
        case TextSegment::Kind::Print:
            os << '{' << s.expr.to_string() << '}';
            break;
        case TextSegment::Kind::Conditional:
            os << '{' << s.expr.to_string() << ": " << s.then_text;
            if (!s.else_text.empty())
                os << " | " << s.else_text;
            os << '}';
            break;
        }
    }
    os << '\n';
}

void print_choice(const Choice &c, std::ostream &os)
{
    if (c.auto_rule) {
        const AutoRule &r = *c.auto_rule;
        os << "*auto {" << rule_mode_name(r.mode) << ' ';
        for (std::size_t i = 0; i < r.operands.size(); ++i)
            os << (i ? ", " : "") << r.operands[i].to_string();
        if (r.threshold)
            os << ' ' << format_number(*r.threshold);
        os << "} ->";
    } else {
        os << "* ";
        if (c.condition)
            os << '{' << c.condition->to_string() << "} ";
        os << '[' << c.label << "] ->";
    }
    for (std::size_t i = 0; i < c.targets.size(); ++i)
        os << (i ? ", " : " ") << c.targets[i];
    os << '\n';
}

void print_knot(const Knot &k, std::ostream &os)
{
    os << "== " << k.name << " ==\n";
    for (std::size_t p = 0; p < k.pages.size(); ++p) {
        if (p > 0)
            os << "---\n";
        const Page &page = k.pages[p];
        std::size_t first_text = page.items.size(), last_text = 0;
        for (std::size_t i = 0; i < page.items.size(); ++i)
            if (std::holds_alternative<TextLine>(page.items[i])) {
                first_text = std::min(first_text, i);
                last_text = i;
            }
        for (std::size_t i = 0; i < page.items.size(); ++i) {
            if (i == first_text)
                for (const TagSpan &s : k.tag_spans)
                    if (s.start_page == p)
                        os << "##" << s.tag << "_START\n";
            if (const auto *t = std::get_if<TextLine>(&page.items[i]))
                print_line(*t, os);
            else {
                const auto &a = std::get<Assignment>(page.items[i]);
                os << "~ " << a.name << " = " << a.value.to_string() << '\n';
            }
            if (i == last_text && first_text < page.items.size())
                for (auto it = k.tag_spans.rbegin(); it != k.tag_spans.rend(); ++it)
                    if (it->end_page == p)
                        os << "##" << it->tag << "_STOP\n";
        }
    }
    for (const Choice &c : k.choices)
        print_choice(c, os);
    if (k.divert)
        os << "-> " << *k.divert << '\n';
}

bool items_equal(const PageItem &a, const PageItem &b)
{
    if (a.index() != b.index())
        return false;
    if (const auto *ta = std::get_if<TextLine>(&a)) {
        const auto &tb = std::get<TextLine>(b);
        if (ta->segments.size() != tb.segments.size())
            return false;
        for (std::size_t i = 0; i < ta->segments.size(); ++i) {
            const TextSegment &x = ta->segments[i], &y = tb.segments[i];
            if (x.kind != y.kind || x.text != y.text || !(x.expr == y.expr) || x.then_text != y.then_text ||
                x.else_text != y.else_text)
                return false;
        }
        return true;
    }
    const auto &aa = std::get<Assignment>(a);
    const auto &ab = std::get<Assignment>(b);
    return aa.name == ab.name && aa.value == ab.value;
}

bool choices_equal(const Choice &a, const Choice &b)
{
    if (a.label != b.label || a.targets != b.targets || a.condition.has_value() != b.condition.has_value() ||
        a.auto_rule.has_value() != b.auto_rule.has_value())
        return false;
    if (a.condition && !(*a.condition == *b.condition))
        return false;
    if (a.auto_rule) {
        const AutoRule &x = *a.auto_rule, &y = *b.auto_rule;
        return x.mode == y.mode && x.operands == y.operands && x.threshold == y.threshold;
    }
    return true;
}

bool knots_equal(const Knot &a, const Knot &b)
{
    if (a.name != b.name || a.divert != b.divert || a.pages.size() != b.pages.size() ||
        a.choices.size() != b.choices.size() || a.tag_spans.size() != b.tag_spans.size())
        return false;
    for (std::size_t p = 0; p < a.pages.size(); ++p) {
        const auto &ia = a.pages[p].items, &ib = b.pages[p].items;
        if (ia.size() != ib.size())
            return false;
        for (std::size_t i = 0; i < ia.size(); ++i)
            if (!items_equal(ia[i], ib[i]))
                return false;
    }
    for (std::size_t i = 0; i < a.choices.size(); ++i)
        if (!choices_equal(a.choices[i], b.choices[i]))
            return false;
    for (std::size_t i = 0; i < a.tag_spans.size(); ++i) {
        const TagSpan &x = a.tag_spans[i], &y = b.tag_spans[i];
        if (x.tag != y.tag || x.start_page != y.start_page || x.end_page != y.end_page)
            return false;
    }
    return true;
}

} // namespace

std::string print(const StoryGraph &graph)
{
    std::ostringstream os;
    for (const VariableDecl &v : graph.variables)
        os << "VAR " << v.name << " = " << to_string(v.initial) << '\n';
    if (graph.explicit_entry)
        os << "-> " << graph.entry_knot << '\n';
    for (const Knot &k : graph.knots) {
        os << '\n';
        print_knot(k, os);
    }
    return os.str();
}

bool structurally_equal(const StoryGraph &a, const StoryGraph &b)
{
    if (a.entry_knot != b.entry_knot || a.tags != b.tags || a.variables.size() != b.variables.size() ||
        a.knots.size() != b.knots.size())
        return false;
    for (std::size_t i = 0; i < a.variables.size(); ++i)
        if (a.variables[i].name != b.variables[i].name || a.variables[i].initial != b.variables[i].initial)
            return false;
    for (std::size_t i = 0; i < a.knots.size(); ++i)
        if (!knots_equal(a.knots[i], b.knots[i]))
            return false;
    return true;
}

} // namespace pif::story
