#pragma once

#include <memory>
#include <stdexcept>
#include <string>

namespace qsd {

// Arithmetic expressions in one variable x, parsed from text.  Trees are
// immutable once built, so evaluation is safe from any number of threads.
class Expr;
using ExprPtr = std::shared_ptr<const Expr>;

class Expr {
public:
    virtual ~Expr() = default;
    virtual double eval(double x) const = 0;
    virtual ExprPtr derivative() const = 0;
    virtual std::string to_string() const = 0;
    // Binding strength used when to_string decides on parentheses.
    virtual int precedence() const = 0;
    virtual bool is_constant(double* value = nullptr) const { (void)value; return false; }

    bool is_literal_zero() const {
        double v;
        return is_constant(&v) && v == 0.0;
    }
};

struct ParseError : std::runtime_error {
    int line;
    int column;
    ParseError(const std::string& msg, int line_, int col_)
        : std::runtime_error(msg), line(line_), column(col_) {}
};

// Parses an expression over the variable x with operators + - * / ^,
// functions exp, log, sin, cos, sqrt, abs, min, max, and numeric literals.
// line/column offsets are used for error reporting when the expression is
// embedded in a larger file.
ExprPtr parse_expression(const std::string& text, int line = 1, int column = 1);

// Constant-folding and algebraic-identity simplification.
ExprPtr simplify(const ExprPtr& e);

ExprPtr make_constant(double v);

}  // namespace qsd
