#include "doctest.h"

#include "story/expr.hpp"

using namespace pif::story;

namespace {

Expr must_parse(std::string_view text)
{
    auto r = parse_expr(text);
    REQUIRE_MESSAGE(std::holds_alternative<Expr>(r), text);
    return std::get<Expr>(r);
}

} // namespace

TEST_CASE("expr: precedence")
{
    CHECK(std::get<double>(must_parse("1 + 2 * 3").eval({})) == 7.0);
    CHECK(std::get<double>(must_parse("(1 + 2) * 3").eval({})) == 9.0);
    CHECK(std::get<double>(must_parse("10 - 4 - 3").eval({})) == 3.0);
    CHECK(std::get<double>(must_parse("-2 * 3").eval({})) == -6.0);
    CHECK(std::get<bool>(must_parse("1 < 2 and not (3 < 2)").eval({})));
    CHECK(std::get<bool>(must_parse("false or 2 >= 2").eval({})));
}

TEST_CASE("expr: comparison between contexts")
{
    VariableStore vars{{"phys_dungeon_arousal", 0.8}, {"phys_forest_arousal", 0.2}};
    Expr e = must_parse("phys_dungeon_arousal > phys_forest_arousal");
    CHECK(std::get<bool>(e.eval(vars)));
    // key@TAG is sugar for the tag-scoped variable.
    Expr sugar = must_parse("arousal@DUNGEON > arousal@FOREST");
    CHECK(sugar == e);
}

TEST_CASE("expr: unbound variable is named")
{
    Expr e = must_parse("foo + 1");
    try {
        e.eval({});
        FAIL("expected EvalError");
    } catch (const EvalError &err) {
        CHECK(std::string(err.what()).find("'foo'") != std::string::npos);
    }
}

TEST_CASE("expr: strict typing")
{
    VariableStore vars{{"flag", true}, {"x", 1.0}};
    CHECK_THROWS_AS(must_parse("flag + 1").eval(vars), EvalError);
    CHECK_THROWS_AS(must_parse("x and true").eval(vars), EvalError);
    CHECK_THROWS_AS(must_parse("flag == true").eval(vars), EvalError);
    CHECK_THROWS_AS(must_parse("x / 0").eval(vars), EvalError);

    auto lookup = [](const std::string &n) -> std::optional<ValueType> {
        if (n == "flag")
            return ValueType::Boolean;
        if (n == "x")
            return ValueType::Number;
        return std::nullopt;
    };
    CHECK(must_parse("x > 2 or flag").type_check(lookup) == ValueType::Boolean);
    CHECK(must_parse("x * 2").type_check(lookup) == ValueType::Number);
    CHECK_THROWS_AS(must_parse("y > 2").type_check(lookup), EvalError);
    CHECK_THROWS_AS(must_parse("not x").type_check(lookup), EvalError);
}

TEST_CASE("expr: syntax errors carry a column")
{
    auto r = parse_expr("1 + * 2", {4, 10});
    REQUIRE(std::holds_alternative<ExprParseError>(r));
    const auto &err = std::get<ExprParseError>(r);
    CHECK(err.pos.line == 4);
    CHECK(err.pos.col == 14);
    CHECK(std::holds_alternative<ExprParseError>(parse_expr("(1 + 2")));
    CHECK(std::holds_alternative<ExprParseError>(parse_expr("1 2")));
    CHECK(std::holds_alternative<ExprParseError>(parse_expr("")));
}

TEST_CASE("expr: print then parse is structurally identical")
{
    for (const char *text : {"1 + 2 * 3", "(a + b) * -c", "not (x < 2) and y >= 1.5 or z != 0", "a % 3 == 1",
                             "v@CAT - v@DOG", "0.1 + 1e-3"}) {
        Expr e = must_parse(text);
        Expr again = must_parse(e.to_string());
        CHECK_MESSAGE(e == again, text << " -> " << e.to_string());
    }
}
