#pragma once

#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>

namespace qbsde {

/// Parse failure; position is the 0-based character offset in the source.
class ExpressionError : public std::invalid_argument {
public:
    ExpressionError(const std::string& what, std::size_t position)
        : std::invalid_argument(what), position_(position) {}
    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

/// Arithmetic in x and t; grammar in docs/expressions.md.
///
///   expr   := term (('+' | '-') term)*
///   term   := unary (('*' | '/') unary)*
///   unary  := ('+' | '-') unary | power
///   power  := atom ('^' unary)?
///   atom   := number | 'x' | 't' | 'pi' | name '(' expr ')' | '(' expr ')'
///
/// `^` is right associative and binds tighter than unary minus on its left,
/// so -x^2 = -(x^2). Functions: exp log sin cos tanh sqrt abs sign.
class Expression {
public:
    static Expression parse(std::string_view source);

    double operator()(double x, double t = 0.0) const noexcept;
    const std::string& source() const noexcept { return source_; }
    bool uses_t() const noexcept { return uses_t_; }
    bool uses_x() const noexcept { return uses_x_; }

    struct Node;

private:
    std::string source_;
    std::shared_ptr<const Node> root_;
    bool uses_t_ = false;
    bool uses_x_ = false;
};

}  // namespace qbsde
