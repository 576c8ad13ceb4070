#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dynlab {

/// Compiled arithmetic expression over variables x1..xn.
///
/// Grammar: numbers, x1..xn, + - * / ^, sin, cos, tanh, exp, abs and
/// parentheses. '^' is right-associative; unary minus binds tighter than
/// '^''s left operand. Parse and evaluation errors carry byte offsets.
class Expression {
public:
    /// Parses `text`; throws ExpressionError on bad syntax.
    static Expression parse(const std::string& text);

    /// Evaluates at `point` (size must cover the highest variable index).
    /// Throws ExpressionError on unknown variable index or division by zero.
    double eval(std::span<const double> point) const;

    /// Highest variable index referenced (0 when the expression is constant).
    int max_variable() const { return max_var_; }

    const std::string& text() const { return text_; }

private:
    enum class Op : std::uint8_t {
        kConst, kVar, kAdd, kSub, kMul, kDiv, kPow, kNeg,
        kSin, kCos, kTanh, kExp, kAbs,
    };
    struct Instr {
        Op op;
        double value;       // kConst
        int var;            // kVar (0-based)
        std::uint32_t pos;  // byte offset, for evaluation errors
    };

    std::vector<Instr> code_;
    std::string text_;
    int max_var_ = 0;

    friend class ExpressionParser;
};

}  // namespace dynlab
