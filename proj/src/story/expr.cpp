#include "story/expr.hpp"

#include <charconv>
#include <cctype>
#include <cmath>

namespace pif::story {

std::string format_number(double v)
{
    if (std::isfinite(v) && v == std::floor(v) && std::fabs(v) < 1e15) {
        char buf[32];
        auto res = std::to_chars(buf, buf + sizeof buf, static_cast<long long>(v));
        return std::string(buf, res.ptr);
    }
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string to_string(const Value &v)
{
    if (const bool *b = std::get_if<bool>(&v))
        return *b ? "true" : "false";
    return format_number(std::get<double>(v));
}

std::string_view type_name(ValueType t)
{
    return t == ValueType::Boolean ? "boolean" : "number";
}

std::string tag_scoped_variable(std::string_view key, std::string_view tag)
{
    std::string k(key);
    if (is_phys_name(k))
        k.erase(0, kPhysPrefix.size());
    std::string t;
    for (char c : tag)
        t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return std::string(kPhysPrefix) + t + "_" + k;
}

std::string_view op_symbol(BinaryOp op)
{
    switch (op) {
    case BinaryOp::Add: return "+";
    case BinaryOp::Sub: return "-";
    case BinaryOp::Mul: return "*";
    case BinaryOp::Div: return "/";
    case BinaryOp::Mod: return "%";
    case BinaryOp::Lt: return "<";
    case BinaryOp::Le: return "<=";
    case BinaryOp::Gt: return ">";
    case BinaryOp::Ge: return ">=";
    case BinaryOp::Eq: return "==";
    case BinaryOp::Ne: return "!=";
    case BinaryOp::And: return "and";
    case BinaryOp::Or: return "or";
    }
    return "?";
}

Expr Expr::number(double v, SourcePos pos)
{
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprNode::Kind::Number;
    n->number = v;
    n->pos = pos;
    return Expr(n);
}

Expr Expr::boolean(bool v, SourcePos pos)
{
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprNode::Kind::Boolean;
    n->boolean = v;
    n->pos = pos;
    return Expr(n);
}

Expr Expr::variable(std::string name, SourcePos pos)
{
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprNode::Kind::Variable;
    n->name = std::move(name);
    n->pos = pos;
    return Expr(n);
}

Expr Expr::unary(UnaryOp op, Expr operand, SourcePos pos)
{
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprNode::Kind::Unary;
    n->unary = op;
    n->lhs = operand.root_;
    n->pos = pos;
    return Expr(n);
}

Expr Expr::binary(BinaryOp op, Expr lhs, Expr rhs, SourcePos pos)
{
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprNode::Kind::Binary;
    n->binary = op;
    n->lhs = lhs.root_;
    n->rhs = rhs.root_;
    n->pos = pos;
    return Expr(n);
}

namespace {

double as_number(const Value &v, std::string_view what)
{
    if (const double *d = std::get_if<double>(&v))
        return *d;
    throw EvalError(std::string(what) + " expects a number, got boolean");
}

bool as_bool(const Value &v, std::string_view what)
{
    if (const bool *b = std::get_if<bool>(&v))
        return *b;
    throw EvalError(std::string(what) + " expects a boolean, got number");
}

Value eval_node(const ExprNode &n, const VariableStore &vars)
{
    switch (n.kind) {
    case ExprNode::Kind::Number:
        return n.number;
    case ExprNode::Kind::Boolean:
        return n.boolean;
    case ExprNode::Kind::Variable: {
        auto it = vars.find(n.name);
        if (it == vars.end())
            throw EvalError("unbound variable '" + n.name + "'");
        return it->second;
    }
    case ExprNode::Kind::Unary: {
        Value v = eval_node(*n.lhs, vars);
        if (n.unary == UnaryOp::Not)
            return !as_bool(v, "not");
        return -as_number(v, "unary -");
    }
    case ExprNode::Kind::Binary: {
        // and/or are strict: both sides are evaluated.
        Value l = eval_node(*n.lhs, vars);
        Value r = eval_node(*n.rhs, vars);
        std::string_view sym = op_symbol(n.binary);
        switch (n.binary) {
        case BinaryOp::And: return as_bool(l, sym) && as_bool(r, sym);
        case BinaryOp::Or: return as_bool(l, sym) || as_bool(r, sym);
        default: break;
        }
        double a = as_number(l, sym);
        double b = as_number(r, sym);
        switch (n.binary) {
        case BinaryOp::Add: return a + b;
        case BinaryOp::Sub: return a - b;
        case BinaryOp::Mul: return a * b;
        case BinaryOp::Div:
            if (b == 0.0)
                throw EvalError("division by zero");
            return a / b;
        case BinaryOp::Mod:
            if (b == 0.0)
                throw EvalError("modulo by zero");
            return std::fmod(a, b);
        case BinaryOp::Lt: return a < b;
        case BinaryOp::Le: return a <= b;
        case BinaryOp::Gt: return a > b;
        case BinaryOp::Ge: return a >= b;
        case BinaryOp::Eq: return a == b;
        case BinaryOp::Ne: return a != b;
        default: break;
        }
    }
    }
    throw EvalError("malformed expression");
}

void collect_names(const ExprNode &n, std::set<std::string> &out)
{
    if (n.kind == ExprNode::Kind::Variable)
        out.insert(n.name);
    if (n.lhs)
        collect_names(*n.lhs, out);
    if (n.rhs)
        collect_names(*n.rhs, out);
}

void print_node(const ExprNode &n, std::string &out, bool nested)
{
    switch (n.kind) {
    case ExprNode::Kind::Number:
        out += format_number(n.number);
        return;
    case ExprNode::Kind::Boolean:
        out += n.boolean ? "true" : "false";
        return;
    case ExprNode::Kind::Variable:
        out += n.name;
        return;
    case ExprNode::Kind::Unary:
        out += n.unary == UnaryOp::Not ? "not " : "-";
        print_node(*n.lhs, out, true);
        return;
    case ExprNode::Kind::Binary:
        if (nested)
            out += '(';
        print_node(*n.lhs, out, true);
        out += ' ';
        out += op_symbol(n.binary);
        out += ' ';
        print_node(*n.rhs, out, true);
        if (nested)
            out += ')';
        return;
    }
}

// Pratt parser over a single-line expression.
class ExprParser {
public:
    ExprParser(std::string_view text, SourcePos origin) : text_(text), origin_(origin) {}

    Expr parse_all()
    {
        Expr e = parse_binary(0);
        skip_ws();
        if (i_ < text_.size())
            fail("unexpected '" + std::string(1, text_[i_]) + "' in expression");
        return e;
    }

    [[noreturn]] void fail(const std::string &msg) { throw ExprParseError{msg, here()}; }

private:
    SourcePos here() const { return {origin_.line, origin_.col + static_cast<int>(i_)}; }

    void skip_ws()
    {
        while (i_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[i_])))
            ++i_;
    }

    bool starts_with(std::string_view s) const { return text_.substr(i_, s.size()) == s; }

    static bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

    bool keyword_at(std::string_view kw) const
    {
        return starts_with(kw) && (i_ + kw.size() >= text_.size() || !ident_char(text_[i_ + kw.size()]));
    }

    struct OpInfo {
        BinaryOp op;
        int prec;
        size_t len;
    };

    std::optional<OpInfo> peek_op()
    {
        skip_ws();
        if (i_ >= text_.size())
            return std::nullopt;
        if (keyword_at("or") || starts_with("||"))
            return OpInfo{BinaryOp::Or, 1, 2};
        if (keyword_at("and"))
            return OpInfo{BinaryOp::And, 2, 3};
        if (starts_with("&&"))
            return OpInfo{BinaryOp::And, 2, 2};
        if (starts_with("=="))
            return OpInfo{BinaryOp::Eq, 3, 2};
        if (starts_with("!="))
            return OpInfo{BinaryOp::Ne, 3, 2};
        if (starts_with("<="))
            return OpInfo{BinaryOp::Le, 4, 2};
        if (starts_with(">="))
            return OpInfo{BinaryOp::Ge, 4, 2};
        switch (text_[i_]) {
        case '<': return OpInfo{BinaryOp::Lt, 4, 1};
        case '>': return OpInfo{BinaryOp::Gt, 4, 1};
        case '+': return OpInfo{BinaryOp::Add, 5, 1};
        case '-': return OpInfo{BinaryOp::Sub, 5, 1};
        case '*': return OpInfo{BinaryOp::Mul, 6, 1};
        case '/': return OpInfo{BinaryOp::Div, 6, 1};
        case '%': return OpInfo{BinaryOp::Mod, 6, 1};
        default: return std::nullopt;
        }
    }

    Expr parse_binary(int min_prec)
    {
        Expr lhs = parse_unary();
        for (;;) {
            std::optional<OpInfo> op = peek_op();
            if (!op || op->prec <= min_prec)
                return lhs;
            SourcePos pos = here();
            i_ += op->len;
            // Comparisons do not chain: `a < b < c` is a type error anyway,
            // but parsing it left-associatively keeps messages sensible.
            Expr rhs = parse_binary(op->prec);
            lhs = Expr::binary(op->op, lhs, rhs, pos);
        }
    }

    Expr parse_unary()
    {
        skip_ws();
        SourcePos pos = here();
        if (i_ < text_.size() && text_[i_] == '-') {
            ++i_;
            return Expr::unary(UnaryOp::Negate, parse_unary(), pos);
        }
        if (i_ < text_.size() && text_[i_] == '!' && !starts_with("!=")) {
            ++i_;
            return Expr::unary(UnaryOp::Not, parse_unary(), pos);
        }
        if (keyword_at("not")) {
            i_ += 3;
            return Expr::unary(UnaryOp::Not, parse_unary(), pos);
        }
        return parse_primary();
    }

    Expr parse_primary()
    {
        skip_ws();
        SourcePos pos = here();
        if (i_ >= text_.size())
            fail("expected an expression");
        char c = text_[i_];
        if (c == '(') {
            ++i_;
            Expr inner = parse_binary(0);
            skip_ws();
            if (i_ >= text_.size() || text_[i_] != ')')
                fail("expected ')'");
            ++i_;
            return inner;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            size_t start = i_;
            while (i_ < text_.size() && (std::isdigit(static_cast<unsigned char>(text_[i_])) || text_[i_] == '.'))
                ++i_;
            if (i_ < text_.size() && (text_[i_] == 'e' || text_[i_] == 'E')) {
                size_t save = i_++;
                if (i_ < text_.size() && (text_[i_] == '+' || text_[i_] == '-'))
                    ++i_;
                if (i_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[i_]))) {
                    while (i_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[i_])))
                        ++i_;
                } else {
                    i_ = save;
                }
            }
            double v = 0;
            auto res = std::from_chars(text_.data() + start, text_.data() + i_, v);
            if (res.ec != std::errc() || res.ptr != text_.data() + i_)
                fail("malformed number '" + std::string(text_.substr(start, i_ - start)) + "'");
            return Expr::number(v, pos);
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            size_t start = i_;
            while (i_ < text_.size() && ident_char(text_[i_]))
                ++i_;
            std::string name(text_.substr(start, i_ - start));
            if (name == "true")
                return Expr::boolean(true, pos);
            if (name == "false")
                return Expr::boolean(false, pos);
            if (name == "and" || name == "or" || name == "not")
                fail("unexpected keyword '" + name + "'");
            if (i_ < text_.size() && text_[i_] == '@') {
                ++i_;
                size_t tstart = i_;
                while (i_ < text_.size() && ident_char(text_[i_]))
                    ++i_;
                if (i_ == tstart)
                    fail("expected a tag name after '@'");
                name = tag_scoped_variable(name, text_.substr(tstart, i_ - tstart));
            }
            return Expr::variable(std::move(name), pos);
        }
        fail("unexpected '" + std::string(1, c) + "' in expression");
    }

    std::string_view text_;
    SourcePos origin_;
    size_t i_ = 0;
};

} // namespace

Value Expr::eval(const VariableStore &vars) const
{
    if (!root_)
        throw EvalError("empty expression");
    return eval_node(*root_, vars);
}

std::set<std::string> Expr::referenced_names() const
{
    std::set<std::string> out;
    if (root_)
        collect_names(*root_, out);
    return out;
}

std::string Expr::to_string() const
{
    std::string out;
    if (root_)
        print_node(*root_, out, false);
    return out;
}

bool structurally_equal(const ExprNode &a, const ExprNode &b)
{
    if (a.kind != b.kind)
        return false;
    switch (a.kind) {
    case ExprNode::Kind::Number: return a.number == b.number;
    case ExprNode::Kind::Boolean: return a.boolean == b.boolean;
    case ExprNode::Kind::Variable: return a.name == b.name;
    case ExprNode::Kind::Unary: return a.unary == b.unary && structurally_equal(*a.lhs, *b.lhs);
    case ExprNode::Kind::Binary:
        return a.binary == b.binary && structurally_equal(*a.lhs, *b.lhs) && structurally_equal(*a.rhs, *b.rhs);
    }
    return false;
}

bool Expr::operator==(const Expr &other) const
{
    if (!root_ || !other.root_)
        return !root_ && !other.root_;
    return structurally_equal(*root_, *other.root_);
}

std::variant<Expr, ExprParseError> parse_expr(std::string_view text, SourcePos origin)
{
    try {
        ExprParser p(text, origin);
        return p.parse_all();
    } catch (const ExprParseError &e) {
        return e;
    }
}

} // namespace pif::story
