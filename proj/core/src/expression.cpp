#include "dynlab/expression.hpp"

#include <cctype>
#include <charconv>
#include <cmath>

#include "dynlab/errors.hpp"

namespace dynlab {

namespace {

bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

}  // namespace

class ExpressionParser {
public:
    explicit ExpressionParser(const std::string& text) : text_(text) {}

    Expression run() {
        Expression out;
        out.text_ = text_;
        code_ = &out.code_;
        parse_sum();
        skip_ws();
        if (pos_ != text_.size()) {
            throw ExpressionError("unexpected trailing input", pos_);
        }
        if (code_->empty()) {
            throw ExpressionError("empty expression", 0);
        }
        out.max_var_ = max_var_;
        return out;
    }

private:
    using Op = Expression::Op;

    void emit(Op op, std::size_t at, double value = 0.0, int var = 0) {
        code_->push_back({op, value, var, static_cast<std::uint32_t>(at)});
    }

    void skip_ws() {
        while (pos_ < text_.size() &&
               std::isspace(static_cast<unsigned char>(text_[pos_]))) {
            ++pos_;
        }
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    char peek() {
        skip_ws();
        return pos_ < text_.size() ? text_[pos_] : '\0';
    }

    void parse_sum() {
        parse_product();
        for (;;) {
            std::size_t at = pos_;
            if (accept('+')) {
                parse_product();
                emit(Op::kAdd, at);
            } else if (accept('-')) {
                parse_product();
                emit(Op::kSub, at);
            } else {
                return;
            }
        }
    }

    void parse_product() {
        parse_unary();
        for (;;) {
            std::size_t at = pos_;
            if (accept('*')) {
                parse_unary();
                emit(Op::kMul, at);
            } else if (accept('/')) {
                parse_unary();
                emit(Op::kDiv, at);
            } else {
                return;
            }
        }
    }

    void parse_unary() {
        std::size_t at = pos_;
        if (accept('-')) {
            parse_unary();
            emit(Op::kNeg, at);
            return;
        }
        if (accept('+')) {
            parse_unary();
            return;
        }
        parse_power();
    }

    void parse_power() {
        parse_primary();
        std::size_t at = pos_;
        if (accept('^')) {
            parse_unary();  // right-associative; allows 2^-3
            emit(Op::kPow, at);
        }
    }

    void parse_primary() {
        skip_ws();
        if (pos_ >= text_.size()) {
            throw ExpressionError("unexpected end of expression", pos_);
        }
        char c = text_[pos_];
        if (c == '(') {
            ++pos_;
            parse_sum();
            if (!accept(')')) {
                throw ExpressionError("missing ')'", pos_);
            }
            return;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            parse_number();
            return;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            parse_ident();
            return;
        }
        throw ExpressionError(std::string("unexpected character '") + c + "'",
                              pos_);
    }

    void parse_number() {
        std::size_t at = pos_;
        const char* begin = text_.data() + pos_;
        const char* end = text_.data() + text_.size();
        double value = 0.0;
        auto res = std::from_chars(begin, end, value);
        if (res.ec != std::errc{}) {
            throw ExpressionError("bad numeric literal", at);
        }
        pos_ = static_cast<std::size_t>(res.ptr - text_.data());
        emit(Op::kConst, at, value);
    }

    void parse_ident() {
        std::size_t at = pos_;
        std::size_t end = pos_;
        while (end < text_.size() && ident_char(text_[end])) ++end;
        std::string name = text_.substr(pos_, end - pos_);
        pos_ = end;

        if (name.size() >= 2 && name[0] == 'x') {
            bool digits = true;
            for (std::size_t i = 1; i < name.size(); ++i) {
                if (!std::isdigit(static_cast<unsigned char>(name[i]))) {
                    digits = false;
                    break;
                }
            }
            if (digits) {
                int index = std::stoi(name.substr(1));
                if (index < 1) {
                    throw ExpressionError("variable index must be >= 1", at);
                }
                max_var_ = std::max(max_var_, index);
                emit(Op::kVar, at, 0.0, index - 1);
                return;
            }
        }

        Op op;
        if (name == "sin") op = Op::kSin;
        else if (name == "cos") op = Op::kCos;
        else if (name == "tanh") op = Op::kTanh;
        else if (name == "exp") op = Op::kExp;
        else if (name == "abs") op = Op::kAbs;
        else throw ExpressionError("unknown identifier '" + name + "'", at);

        if (!accept('(')) {
            throw ExpressionError("expected '(' after '" + name + "'", pos_);
        }
        parse_sum();
        if (peek() == ',') {
            throw ExpressionError("'" + name + "' takes one argument", pos_);
        }
        if (!accept(')')) {
            throw ExpressionError("missing ')'", pos_);
        }
        emit(op, at);
    }

    const std::string& text_;
    std::size_t pos_ = 0;
    int max_var_ = 0;
    std::vector<Expression::Instr>* code_ = nullptr;
};

Expression Expression::parse(const std::string& text) {
    return ExpressionParser(text).run();
}

double Expression::eval(std::span<const double> point) const {
    double stack[64];
    int top = -1;
    for (const Instr& in : code_) {
        switch (in.op) {
            case Op::kConst:
                if (top + 1 >= 64) {
                    throw ExpressionError("expression too deeply nested", in.pos);
                }
                stack[++top] = in.value;
                break;
            case Op::kVar:
                if (top + 1 >= 64) {
                    throw ExpressionError("expression too deeply nested", in.pos);
                }
                if (in.var >= static_cast<int>(point.size())) {
                    throw ExpressionError(
                        "variable x" + std::to_string(in.var + 1) +
                            " exceeds point dimension",
                        in.pos);
                }
                stack[++top] = point[in.var];
                break;
            case Op::kAdd: stack[top - 1] += stack[top]; --top; break;
            case Op::kSub: stack[top - 1] -= stack[top]; --top; break;
            case Op::kMul: stack[top - 1] *= stack[top]; --top; break;
            case Op::kDiv:
                if (stack[top] == 0.0) {
                    throw ExpressionError("division by zero", in.pos);
                }
                stack[top - 1] /= stack[top];
                --top;
                break;
            case Op::kPow:
                stack[top - 1] = std::pow(stack[top - 1], stack[top]);
                --top;
                break;
            case Op::kNeg: stack[top] = -stack[top]; break;
            case Op::kSin: stack[top] = std::sin(stack[top]); break;
            case Op::kCos: stack[top] = std::cos(stack[top]); break;
            case Op::kTanh: stack[top] = std::tanh(stack[top]); break;
            case Op::kExp: stack[top] = std::exp(stack[top]); break;
            case Op::kAbs: stack[top] = std::abs(stack[top]); break;
        }
    }
    return stack[0];
}

}  // namespace dynlab
