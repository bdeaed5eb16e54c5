#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "qbsde/expression.hpp"

using qbsde::Expression;
using qbsde::ExpressionError;

TEST(Expression, Arithmetic) {
    EXPECT_DOUBLE_EQ(Expression::parse("1 + 2 * 3")(0), 7.0);
    EXPECT_DOUBLE_EQ(Expression::parse("(1 + 2) * 3")(0), 9.0);
    EXPECT_DOUBLE_EQ(Expression::parse("8 / 4 / 2")(0), 1.0);
    EXPECT_DOUBLE_EQ(Expression::parse("10 - 4 - 3")(0), 3.0);
    EXPECT_DOUBLE_EQ(Expression::parse(".5 + 1e-1")(0), 0.6);
    EXPECT_DOUBLE_EQ(Expression::parse("2.5e2")(0), 250.0);
}

TEST(Expression, PowerBindsTighterThanMinusAndIsRightAssociative) {
    EXPECT_DOUBLE_EQ(Expression::parse("-x^2")(3.0), -9.0);
    EXPECT_DOUBLE_EQ(Expression::parse("2^3^2")(0), 512.0);
    EXPECT_DOUBLE_EQ(Expression::parse("2^-1")(0), 0.5);
    EXPECT_DOUBLE_EQ(Expression::parse("--x")(2.0), 2.0);
}

TEST(Expression, VariablesAndFunctions) {
    const Expression e = Expression::parse("sin(x) + cos(t) * exp(-x^2 / 2)");
    EXPECT_TRUE(e.uses_x());
    EXPECT_TRUE(e.uses_t());
    EXPECT_DOUBLE_EQ(e(0.3, 0.7), std::sin(0.3) + std::cos(0.7) * std::exp(-0.045));
    EXPECT_DOUBLE_EQ(Expression::parse("sign(x)")(-2.0), -1.0);
    EXPECT_DOUBLE_EQ(Expression::parse("sign(x)")(0.0), 0.0);
    EXPECT_DOUBLE_EQ(Expression::parse("abs(x) + sqrt(4) + log(exp(1)) + tanh(0)")(-1.0), 4.0);
    EXPECT_DOUBLE_EQ(Expression::parse("pi")(0), std::numbers::pi);
    EXPECT_FALSE(Expression::parse("3").uses_x());
    EXPECT_EQ(Expression::parse(" x ").source(), " x ");
}

TEST(Expression, ErrorsCarryPosition) {
    const auto position = [](const char* s) {
        try {
            Expression::parse(s);
        } catch (const ExpressionError& e) {
            return static_cast<long>(e.position());
        }
        return -1L;
    };
    EXPECT_EQ(position("1 +"), 3);
    EXPECT_EQ(position("foo(x)"), 0);
    EXPECT_EQ(position("x )"), 2);
    EXPECT_EQ(position("sin x"), 4);
    EXPECT_EQ(position("(x"), 2);
    EXPECT_EQ(position(""), 0);
    EXPECT_EQ(position("x y"), 2);
    EXPECT_THROW(Expression::parse("2 $ 3"), std::invalid_argument);
}

TEST(Expression, DefaultIsNan) { EXPECT_TRUE(std::isnan(Expression{}(1.0))); }
