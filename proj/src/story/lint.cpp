#include <algorithm>
#include <cctype>
#include <deque>
#include <set>

#include "story/graph.hpp"

namespace pif::story {

namespace {

std::string lower(std::string_view s)
{
    std::string out(s);
    for (char &c : out)
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

void collect_reads(const StoryGraph &g, std::set<std::string> &names)
{
    auto add = [&](const Expr &e) {
        for (const std::string &n : e.referenced_names())
            names.insert(n);
    };
    for (const Knot &k : g.knots) {
        for (const Page &p : k.pages)
            for (const PageItem &it : p.items) {
                if (const auto *t = std::get_if<TextLine>(&it)) {
                    for (const TextSegment &s : t->segments)
                        if (s.kind != TextSegment::Kind::Literal)
                            add(s.expr);
                } else {
                    add(std::get<Assignment>(it).value);
                }
            }
        for (const Choice &c : k.choices) {
            if (c.condition)
                add(*c.condition);
            if (c.auto_rule)
                for (const Operand &op : c.auto_rule->operands)
                    names.insert(op.variable());
        }
    }
}

} // namespace

std::vector<Diagnostic> lint(const StoryGraph &g)
{
    std::vector<Diagnostic> out;
    if (g.knots.empty())
        return out;

    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < g.knots.size(); ++i)
        index[g.knots[i].name] = i;

    // Reachability from the entry knot.
    std::vector<bool> reachable(g.knots.size(), false);
    if (auto it = index.find(g.entry_knot); it != index.end()) {
        std::deque<std::size_t> queue{it->second};
        reachable[it->second] = true;
        while (!queue.empty()) {
            std::size_t k = queue.front();
            queue.pop_front();
            for (const std::string &s : g.successors(g.knots[k])) {
                auto t = index.find(s);
                if (t != index.end() && !reachable[t->second]) {
                    reachable[t->second] = true;
                    queue.push_back(t->second);
                }
            }
        }
    }
    for (std::size_t i = 0; i < g.knots.size(); ++i)
        if (!reachable[i])
            out.push_back({Severity::Warning, g.knots[i].pos, "unreachable knot '" + g.knots[i].name + "'"});

    // A knot can terminate if an ending is reachable from it: fixed point
    // over the reverse edges.
    std::vector<bool> terminates(g.knots.size(), false);
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t i = 0; i < g.knots.size(); ++i) {
            if (terminates[i])
                continue;
            const Knot &k = g.knots[i];
            bool ok = k.terminal();
            for (const Choice &c : k.choices)
                for (const std::string &t : c.targets)
                    ok = ok || t == kEndTarget || (index.count(t) && terminates[index[t]]);
            if (k.divert && index.count(*k.divert))
                ok = ok || terminates[index[*k.divert]];
            if (ok) {
                terminates[i] = true;
                changed = true;
            }
        }
    }
    for (std::size_t i = 0; i < g.knots.size(); ++i)
        if (reachable[i] && !terminates[i])
            out.push_back({Severity::Warning, g.knots[i].pos, "knot '" + g.knots[i].name + "' has no path to an ending"});

    // Tags: opened but never read, and rules reading tags that are never
    // opened.
    std::set<std::string> reads;
    collect_reads(g, reads);
    std::set<std::string> opened;
    for (const Knot &k : g.knots)
        for (const TagSpan &s : k.tag_spans) {
            std::string tag = lower(s.tag);
            if (!opened.insert(tag).second)
                continue;
            std::string prefix = std::string(kPhysPrefix) + tag + "_";
            bool used = std::any_of(reads.begin(), reads.end(),
                                    [&](const std::string &n) { return n.compare(0, prefix.size(), prefix) == 0; });
            if (!used)
                out.push_back({Severity::Info, s.open_pos,
                               "context tag '" + s.tag + "' is recorded but never used by a rule or condition"});
        }
    for (const Knot &k : g.knots)
        for (const Choice &c : k.choices)
            if (c.auto_rule)
                for (const Operand &op : c.auto_rule->operands)
                    if (!op.tag.empty() && !opened.count(lower(op.tag)))
                        out.push_back({Severity::Warning, c.pos,
                                       "rule operand '" + op.to_string() + "' reads context tag '" + op.tag +
                                           "' which is never opened"});

    std::stable_sort(out.begin(), out.end(), [](const Diagnostic &a, const Diagnostic &b) {
        return a.pos.line != b.pos.line ? a.pos.line < b.pos.line : a.pos.col < b.pos.col;
    });
    return out;
}

} // namespace pif::story
