#include <gtest/gtest.h>

#include "kcone/expr.hpp"
#include "test_util.hpp"

using namespace kcone;

namespace {

double eval(const std::string& s, std::vector<double> vars = {}, std::map<std::string, double> params = {}) {
  return parse_expression(s, static_cast<int>(vars.size()), params).eval(vars);
}

std::size_t error_position(const std::string& s, int n_vars = 0) {
  try {
    parse_expression(s, n_vars);
  } catch (const Error& e) {
    return e.position();
  }
  return Error::npos;
}

}  // namespace

TEST(Expression, FieldExamples) {
  EXPECT_EQ(eval("x2", {1, 2}), 2.0);
  EXPECT_EQ(eval("-x1", {1, 2}), -1.0);
  EXPECT_EQ(eval("x1 - x2^3", {2, 1}), 1.0);
  EXPECT_EQ(eval("hill(x3, 1, 4) - b*x1", {0.5, 0, 1}, {{"b", 1.0}}), 0.0);
}

TEST(Expression, PrecedenceAndAssociativity) {
  EXPECT_EQ(eval("2+3*4^2"), 50.0);
  EXPECT_EQ(eval("2^3^2"), 512.0);
  EXPECT_EQ(eval("-2^2"), -4.0);
  EXPECT_EQ(eval("(-2)^2"), 4.0);
  EXPECT_EQ(eval("2^-1"), 0.5);
  EXPECT_EQ(eval("8/4/2"), 1.0);
  EXPECT_EQ(eval("10-4-3"), 3.0);
  EXPECT_EQ(eval("--3"), 3.0);
  EXPECT_EQ(eval("1.5e2 + .5"), 150.5);
}

TEST(Expression, Functions) {
  EXPECT_EQ(eval("min(3, -1) + max(2, 5)"), 4.0);
  EXPECT_EQ(eval("abs(-2.5)"), 2.5);
  EXPECT_DOUBLE_EQ(eval("exp(1)"), std::exp(1.0));
  EXPECT_DOUBLE_EQ(eval("sin(0.3)^2 + cos(0.3)^2"), 1.0);
  EXPECT_DOUBLE_EQ(eval("tanh(0.7)"), std::tanh(0.7));
  EXPECT_EQ(eval("hill(2, 2, 3)"), 0.5);
  EXPECT_EQ(eval("pwl(0.5, 0, 1)"), 0.5);
  EXPECT_EQ(eval("pwl(-1, 0, 1)"), 0.0);
  EXPECT_EQ(eval("pwl(3, 0, 1)"), 1.0);
  EXPECT_EQ(eval("pwl(0.25, 1, 0)"), 0.75);  // decreasing ramp
}

TEST(Expression, SyntaxErrorsCarryPositions) {
  EXPECT_EQ(error_position("2+"), 2u);
  EXPECT_EQ(error_position("(1+2"), 4u);
  EXPECT_EQ(error_position("3*/4"), 2u);
  EXPECT_EQ(error_position("1 2"), 2u);
  EXPECT_EQ(error_position("sin(1,)"), 6u);
  EXPECT_EQ(error_position("2 $ 3"), 2u);
  EXPECT_EQ(error_position("1e+"), 2u);
  EXPECT_THROW_CODE(parse_expression("2+", 0), Errc::SyntaxError);
}

TEST(Expression, IdentifierAndArityErrors) {
  EXPECT_THROW_CODE(parse_expression("y + 1", 2), Errc::UnknownIdentifier);
  EXPECT_THROW_CODE(parse_expression("x3", 2), Errc::UnknownIdentifier);
  EXPECT_THROW_CODE(parse_expression("x0", 2), Errc::UnknownIdentifier);
  EXPECT_THROW_CODE(parse_expression("foo(1)", 2), Errc::UnknownIdentifier);
  EXPECT_THROW_CODE(parse_expression("hill(1, 2)", 0), Errc::ArityMismatch);
  EXPECT_THROW_CODE(parse_expression("sin()", 0), Errc::ArityMismatch);
  EXPECT_EQ(error_position("1 + zeta", 1), 4u);
}

TEST(Expression, DeepNestingSpillsStack) {
  std::string s;
  for (int i = 0; i < 100; ++i) s += "(1+";
  s += "0";
  for (int i = 0; i < 100; ++i) s += ")";
  EXPECT_EQ(eval(s), 100.0);
  std::string sum = "1";
  for (int i = 0; i < 80; ++i) sum = "1+(" + sum + ")";
  EXPECT_EQ(eval(sum), 81.0);
}
