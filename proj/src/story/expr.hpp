#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "common/error.hpp"

namespace pif::story {

struct SourcePos {
    int line = 0;
    int col = 0;
    bool operator==(const SourcePos &) const = default;
};

using Value = std::variant<double, bool>;
using VariableStore = std::map<std::string, Value>;

enum class ValueType { Number, Boolean };

std::string to_string(const Value &v);
// Shortest representation that parses back to the same double.
std::string format_number(double v);
std::string_view type_name(ValueType t);
inline ValueType type_of(const Value &v) { return std::holds_alternative<bool>(v) ? ValueType::Boolean : ValueType::Number; }

// Variables written by the Director live under this prefix; stories may read
// but never assign them.
inline constexpr std::string_view kPhysPrefix = "phys_";
inline bool is_phys_name(std::string_view name) { return name.substr(0, kPhysPrefix.size()) == kPhysPrefix; }

// `key@TAG` resolves to the tag-scoped variable `phys_<tag>_<key>`; a key that
// already carries the prefix is not prefixed twice.
std::string tag_scoped_variable(std::string_view key, std::string_view tag);

class EvalError : public Error {
public:
    explicit EvalError(const std::string &msg) : Error(Category::Validation, msg) {}
};

enum class UnaryOp { Negate, Not };
enum class BinaryOp { Add, Sub, Mul, Div, Mod, Lt, Le, Gt, Ge, Eq, Ne, And, Or };

std::string_view op_symbol(BinaryOp op);

struct ExprNode;
using ExprPtr = std::shared_ptr<const ExprNode>;

struct ExprNode {
    enum class Kind { Number, Boolean, Variable, Unary, Binary };
    Kind kind = Kind::Number;
    double number = 0.0;
    bool boolean = false;
    std::string name; // Variable
    UnaryOp unary = UnaryOp::Negate;
    BinaryOp binary = BinaryOp::Add;
    ExprPtr lhs, rhs; // Unary uses lhs only
    SourcePos pos;
};

// Immutable expression tree. Evaluation is side-effect free and thread safe.
class Expr {
public:
    Expr() = default;
    explicit Expr(ExprPtr root) : root_(std::move(root)) {}

    static Expr number(double v, SourcePos pos = {});
    static Expr boolean(bool v, SourcePos pos = {});
    static Expr variable(std::string name, SourcePos pos = {});
    static Expr unary(UnaryOp op, Expr operand, SourcePos pos = {});
    static Expr binary(BinaryOp op, Expr lhs, Expr rhs, SourcePos pos = {});

    bool empty() const { return !root_; }
    const ExprNode &root() const { return *root_; }

    Value eval(const VariableStore &vars) const;

    // Static type; `lookup` returns the declared type of a name or nullopt
    // when the name is unknown. Throws EvalError on unknown names or
    // operand type mismatches.
    template <class Lookup>
    ValueType type_check(Lookup &&lookup) const { return check(*root_, lookup); }

    std::set<std::string> referenced_names() const;
    std::string to_string() const;

    bool operator==(const Expr &other) const;

private:
    template <class Lookup>
    static ValueType check(const ExprNode &n, Lookup &lookup);

    ExprPtr root_;
};

// Parses an expression. `origin` positions are added to the offsets within
// `text` so diagnostics point into the enclosing document.
struct ExprParseError {
    std::string message;
    SourcePos pos;
};

std::variant<Expr, ExprParseError> parse_expr(std::string_view text, SourcePos origin = {1, 1});

bool structurally_equal(const ExprNode &a, const ExprNode &b);

template <class Lookup>
ValueType Expr::check(const ExprNode &n, Lookup &lookup)
{
    switch (n.kind) {
    case ExprNode::Kind::Number:
        return ValueType::Number;
    case ExprNode::Kind::Boolean:
        return ValueType::Boolean;
    case ExprNode::Kind::Variable: {
        std::optional<ValueType> t = lookup(n.name);
        if (!t)
            throw EvalError("undeclared variable '" + n.name + "'");
        return *t;
    }
    case ExprNode::Kind::Unary: {
        ValueType t = check(*n.lhs, lookup);
        ValueType want = n.unary == UnaryOp::Not ? ValueType::Boolean : ValueType::Number;
        if (t != want)
            throw EvalError("operator '" + std::string(n.unary == UnaryOp::Not ? "not" : "-") + "' expects " +
                            std::string(type_name(want)));
        return want;
    }
    case ExprNode::Kind::Binary: {
        ValueType l = check(*n.lhs, lookup);
        ValueType r = check(*n.rhs, lookup);
        switch (n.binary) {
        case BinaryOp::And:
        case BinaryOp::Or:
            if (l != ValueType::Boolean || r != ValueType::Boolean)
                throw EvalError("operator '" + std::string(op_symbol(n.binary)) + "' expects boolean operands");
            return ValueType::Boolean;
        case BinaryOp::Eq:
        case BinaryOp::Ne:
        case BinaryOp::Lt:
        case BinaryOp::Le:
        case BinaryOp::Gt:
        case BinaryOp::Ge:
            if (l != ValueType::Number || r != ValueType::Number)
                throw EvalError("comparison '" + std::string(op_symbol(n.binary)) + "' expects numeric operands");
            return ValueType::Boolean;
        default:
            if (l != ValueType::Number || r != ValueType::Number)
                throw EvalError("operator '" + std::string(op_symbol(n.binary)) + "' expects numeric operands");
            return ValueType::Number;
        }
    }
    }
    return ValueType::Number;
}

} // namespace pif::story
