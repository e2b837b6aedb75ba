#include "qsd/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <utility>
#include <vector>

namespace qsd {

namespace {

class Constant : public Expr {
public:
    explicit Constant(double v) : value_(v) {}
    double eval(double) const override { return value_; }
    ExprPtr derivative() const override { return std::make_shared<Constant>(0.0); }
    std::string to_string() const override {
        if (value_ < 0) return "(" + format(value_) + ")";
        return format(value_);
    }
    int precedence() const override { return 100; }
    bool is_constant(double* value) const override {
        if (value) *value = value_;
        return true;
    }

private:
    static std::string format(double v) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return buf;
    }
    double value_;
};

class Variable : public Expr {
public:
    double eval(double x) const override { return x; }
    ExprPtr derivative() const override { return std::make_shared<Constant>(1.0); }
    std::string to_string() const override { return "x"; }
    int precedence() const override { return 100; }
};

class Negate : public Expr {
public:
    explicit Negate(ExprPtr a) : a_(std::move(a)) {}
    double eval(double x) const override { return -a_->eval(x); }
    ExprPtr derivative() const override { return std::make_shared<Negate>(a_->derivative()); }
    std::string to_string() const override {
        return "-" + wrap(a_, precedence());
    }
    int precedence() const override { return 30; }
    static std::string wrap(const ExprPtr& e, int prec) {
        if (e->precedence() < prec) return "(" + e->to_string() + ")";
        return e->to_string();
    }
    ExprPtr a_;
};

enum class BinOp { Add, Sub, Mul, Div, Pow };

class Binary : public Expr {
public:
    Binary(BinOp op, ExprPtr a, ExprPtr b) : op_(op), a_(std::move(a)), b_(std::move(b)) {}

    double eval(double x) const override {
        const double a = a_->eval(x);
        const double b = b_->eval(x);
        switch (op_) {
            case BinOp::Add: return a + b;
            case BinOp::Sub: return a - b;
            case BinOp::Mul: return a * b;
            case BinOp::Div: return a / b;
            case BinOp::Pow: return std::pow(a, b);
        }
        return 0.0;
    }

    ExprPtr derivative() const override;

    std::string to_string() const override {
        const int p = precedence();
        std::string lhs = a_->precedence() < p ? "(" + a_->to_string() + ")" : a_->to_string();
        // Right operand needs parens at equal precedence for - / ^ asymmetry.
        int rp = (op_ == BinOp::Sub || op_ == BinOp::Div) ? p + 1 : p;
        if (op_ == BinOp::Pow) rp = p;  // ^ is right-assoc; a^(b^c) prints naturally
        std::string rhs = b_->precedence() < rp ? "(" + b_->to_string() + ")" : b_->to_string();
        return lhs + op_str() + rhs;
    }

    int precedence() const override {
        switch (op_) {
            case BinOp::Add:
            case BinOp::Sub: return 10;
            case BinOp::Mul:
            case BinOp::Div: return 20;
            case BinOp::Pow: return 40;
        }
        return 0;
    }

    const char* op_str() const {
        switch (op_) {
            case BinOp::Add: return "+";
            case BinOp::Sub: return "-";
            case BinOp::Mul: return "*";
            case BinOp::Div: return "/";
            case BinOp::Pow: return "^";
        }
        return "?";
    }

    BinOp op_;
    ExprPtr a_, b_;
};

enum class Fn { Exp, Log, Sin, Cos, Sqrt, Abs, Min, Max };

class Call : public Expr {
public:
    Call(Fn fn, ExprPtr a, ExprPtr b = nullptr) : fn_(fn), a_(std::move(a)), b_(std::move(b)) {}

    double eval(double x) const override {
        const double a = a_->eval(x);
        switch (fn_) {
            case Fn::Exp: return std::exp(a);
            case Fn::Log: return std::log(a);
            case Fn::Sin: return std::sin(a);
            case Fn::Cos: return std::cos(a);
            case Fn::Sqrt: return std::sqrt(a);
            case Fn::Abs: return std::fabs(a);
            case Fn::Min: return std::fmin(a, b_->eval(x));
            case Fn::Max: return std::fmax(a, b_->eval(x));
        }
        return 0.0;
    }

    ExprPtr derivative() const override;

    std::string to_string() const override {
        std::string s = name();
        s += "(" + a_->to_string();
        if (b_) s += "," + b_->to_string();
        return s + ")";
    }

    int precedence() const override { return 100; }

    const char* name() const {
        switch (fn_) {
            case Fn::Exp: return "exp";
            case Fn::Log: return "log";
            case Fn::Sin: return "sin";
            case Fn::Cos: return "cos";
            case Fn::Sqrt: return "sqrt";
            case Fn::Abs: return "abs";
            case Fn::Min: return "min";
            case Fn::Max: return "max";
        }
        return "?";
    }

    Fn fn_;
    ExprPtr a_, b_;
};

ExprPtr cnst(double v) { return std::make_shared<Constant>(v); }
ExprPtr bin(BinOp op, ExprPtr a, ExprPtr b) {
    return std::make_shared<Binary>(op, std::move(a), std::move(b));
}
ExprPtr add(ExprPtr a, ExprPtr b) { return bin(BinOp::Add, std::move(a), std::move(b)); }
ExprPtr sub(ExprPtr a, ExprPtr b) { return bin(BinOp::Sub, std::move(a), std::move(b)); }
ExprPtr mul(ExprPtr a, ExprPtr b) { return bin(BinOp::Mul, std::move(a), std::move(b)); }
ExprPtr divi(ExprPtr a, ExprPtr b) { return bin(BinOp::Div, std::move(a), std::move(b)); }
ExprPtr powe(ExprPtr a, ExprPtr b) { return bin(BinOp::Pow, std::move(a), std::move(b)); }
ExprPtr call(Fn f, ExprPtr a, ExprPtr b = nullptr) {
    return std::make_shared<Call>(f, std::move(a), std::move(b));
}

ExprPtr Binary::derivative() const {
    ExprPtr da = a_->derivative();
    ExprPtr db = b_->derivative();
    switch (op_) {
        case BinOp::Add: return simplify(add(da, db));
        case BinOp::Sub: return simplify(sub(da, db));
        case BinOp::Mul: return simplify(add(mul(da, b_), mul(a_, db)));
        case BinOp::Div:
            return simplify(divi(sub(mul(da, b_), mul(a_, db)), mul(b_, b_)));
        case BinOp::Pow: {
            double p;
            if (b_->is_constant(&p)) {
                // d/dx a^p = p a^(p-1) a'
                return simplify(mul(mul(cnst(p), powe(a_, cnst(p - 1.0))), da));
            }
            // General a^b = exp(b log a):  a^b (b' log a + b a'/a)
            ExprPtr t = add(mul(db, call(Fn::Log, a_)), divi(mul(b_, da), a_));
            return simplify(mul(powe(a_, b_), t));
        }
    }
    return cnst(0.0);
}

ExprPtr Call::derivative() const {
    ExprPtr da = a_->derivative();
    switch (fn_) {
        case Fn::Exp: return simplify(mul(call(Fn::Exp, a_), da));
        case Fn::Log: return simplify(divi(da, a_));
        case Fn::Sin: return simplify(mul(call(Fn::Cos, a_), da));
        case Fn::Cos: return simplify(std::make_shared<Negate>(mul(call(Fn::Sin, a_), da)));
        case Fn::Sqrt: return simplify(divi(da, mul(cnst(2.0), call(Fn::Sqrt, a_))));
        case Fn::Abs:
            // sign(a) a'; the subgradient at 0 is irrelevant on validation grids
            return simplify(mul(divi(a_, call(Fn::Abs, a_)), da));
        case Fn::Min:
        case Fn::Max: {
            // Piecewise: derivative of the active branch.  Encoded without a
            // dedicated node: min'(a,b) = (a<b) ? a' : b' is not expressible,
            // so use 0.5*(a'+b') +/- 0.5*sign(a-b)*(b'-a').
            ExprPtr db = b_->derivative();
            ExprPtr diff = sub(a_, b_);
            ExprPtr sgn = divi(diff, call(Fn::Abs, diff));
            ExprPtr mean = mul(cnst(0.5), add(da, db));
            ExprPtr half_gap = mul(cnst(0.5), mul(sgn, sub(da, db)));
            if (fn_ == Fn::Min) return simplify(sub(mean, half_gap));
            return simplify(add(mean, half_gap));
        }
    }
    return cnst(0.0);
}

// ---------------------------------------------------------------------------
// Tokenizer / recursive-descent parser
// ---------------------------------------------------------------------------

struct Token {
    enum Kind { Number, Ident, Op, LParen, RParen, Comma, End } kind;
    std::string text;
    double number = 0.0;
    int column = 0;
};

class Lexer {
public:
    Lexer(const std::string& s, int line, int col0) : s_(s), line_(line), col0_(col0) {}

    Token next() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
        Token t;
        t.column = col0_ + static_cast<int>(pos_);
        if (pos_ >= s_.size()) {
            t.kind = Token::End;
            return t;
        }
        const char c = s_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            const char* begin = s_.c_str() + pos_;
            char* end = nullptr;
            t.number = std::strtod(begin, &end);
            if (end == begin) fail("malformed number", t.column);
            t.kind = Token::Number;
            t.text.assign(begin, end);
            pos_ += static_cast<size_t>(end - begin);
            return t;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            size_t start = pos_;
            while (pos_ < s_.size() &&
                   (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
                ++pos_;
            t.kind = Token::Ident;
            t.text = s_.substr(start, pos_ - start);
            return t;
        }
        switch (c) {
            case '+': case '-': case '*': case '/': case '^':
                t.kind = Token::Op;
                t.text = std::string(1, c);
                ++pos_;
                return t;
            case '(': t.kind = Token::LParen; ++pos_; return t;
            case ')': t.kind = Token::RParen; ++pos_; return t;
            case ',': t.kind = Token::Comma; ++pos_; return t;
            default:
                fail(std::string("unexpected character '") + c + "'", t.column);
        }
        return t;  // unreachable
    }

    [[noreturn]] void fail(const std::string& msg, int col) const {
        throw ParseError(msg, line_, col);
    }

    int line() const { return line_; }

private:
    const std::string& s_;
    size_t pos_ = 0;
    int line_;
    int col0_;
};

class Parser {
public:
    Parser(const std::string& s, int line, int col) : lex_(s, line, col) { advance(); }

    ExprPtr parse() {
        ExprPtr e = parse_sum();
        if (cur_.kind != Token::End)
            throw ParseError("unexpected trailing input '" + cur_.text + "'", lex_.line(), cur_.column);
        return e;
    }

private:
    void advance() { cur_ = lex_.next(); }

    ExprPtr parse_sum() {
        ExprPtr e = parse_product();
        while (cur_.kind == Token::Op && (cur_.text == "+" || cur_.text == "-")) {
            const bool plus = cur_.text == "+";
            advance();
            ExprPtr rhs = parse_product();
            e = plus ? add(e, rhs) : sub(e, rhs);
        }
        return e;
    }

    ExprPtr parse_product() {
        ExprPtr e = parse_unary();
        while (cur_.kind == Token::Op && (cur_.text == "*" || cur_.text == "/")) {
            const bool times = cur_.text == "*";
            advance();
            ExprPtr rhs = parse_unary();
            e = times ? mul(e, rhs) : divi(e, rhs);
        }
        return e;
    }

    ExprPtr parse_unary() {
        if (cur_.kind == Token::Op && cur_.text == "-") {
            advance();
            return std::make_shared<Negate>(parse_unary());
        }
        if (cur_.kind == Token::Op && cur_.text == "+") {
            advance();
            return parse_unary();
        }
        return parse_power();
    }

    ExprPtr parse_power() {
        ExprPtr base = parse_atom();
        if (cur_.kind == Token::Op && cur_.text == "^") {
            advance();
            // right associative; exponent may carry a unary minus
            ExprPtr expo = parse_unary_for_power();
            return powe(base, expo);
        }
        return base;
    }

    ExprPtr parse_unary_for_power() {
        if (cur_.kind == Token::Op && cur_.text == "-") {
            advance();
            return std::make_shared<Negate>(parse_unary_for_power());
        }
        return parse_power();
    }

    ExprPtr parse_atom() {
        if (cur_.kind == Token::Number) {
            ExprPtr e = cnst(cur_.number);
            advance();
            return e;
        }
        if (cur_.kind == Token::Ident) {
            const std::string name = cur_.text;
            const int col = cur_.column;
            advance();
            if (name == "x") return std::make_shared<Variable>();
            if (name == "pi") return cnst(3.14159265358979323846);
            if (name == "e") return cnst(2.71828182845904523536);
            if (cur_.kind != Token::LParen)
                throw ParseError("unknown identifier '" + name + "'", lex_.line(), col);
            advance();
            ExprPtr a = parse_sum(), b = nullptr;
            Fn fn;
            bool two = false;
            if (name == "exp") fn = Fn::Exp;
            else if (name == "log") fn = Fn::Log;
            else if (name == "sin") fn = Fn::Sin;
            else if (name == "cos") fn = Fn::Cos;
            else if (name == "sqrt") fn = Fn::Sqrt;
            else if (name == "abs") fn = Fn::Abs;
            else if (name == "min") { fn = Fn::Min; two = true; }
            else if (name == "max") { fn = Fn::Max; two = true; }
            else throw ParseError("unknown function '" + name + "'", lex_.line(), col);
            if (two) {
                if (cur_.kind != Token::Comma)
                    throw ParseError(name + " takes two arguments", lex_.line(), cur_.column);
                advance();
                b = parse_sum();
            }
            if (cur_.kind != Token::RParen)
                throw ParseError("expected ')'", lex_.line(), cur_.column);
            advance();
            return call(fn, a, b);
        }
        if (cur_.kind == Token::LParen) {
            advance();
            ExprPtr e = parse_sum();
            if (cur_.kind != Token::RParen)
                throw ParseError("expected ')'", lex_.line(), cur_.column);
            advance();
            return e;
        }
        throw ParseError("expected expression", lex_.line(), cur_.column);
    }

    Lexer lex_;
    Token cur_;
};

}  // namespace

ExprPtr make_constant(double v) { return cnst(v); }

ExprPtr parse_expression(const std::string& text, int line, int column) {
    Parser p(text, line, column);
    return simplify(p.parse());
}

ExprPtr simplify(const ExprPtr& e) {
    double v;
    if (e->is_constant(&v)) return e;

    if (auto n = dynamic_cast<const Negate*>(e.get())) {
        ExprPtr a = simplify(n->a_);
        double av;
        if (a->is_constant(&av)) return cnst(-av);
        if (auto inner = dynamic_cast<const Negate*>(a.get())) return inner->a_;
        if (a.get() == n->a_.get()) return e;
        return std::make_shared<Negate>(a);
    }

    if (auto b = dynamic_cast<const Binary*>(e.get())) {
        ExprPtr l = simplify(b->a_);
        ExprPtr r = simplify(b->b_);
        double lv, rv;
        const bool lc = l->is_constant(&lv);
        const bool rc = r->is_constant(&rv);
        if (lc && rc) {
            Binary folded(b->op_, l, r);
            return cnst(folded.eval(0.0));
        }
        switch (b->op_) {
            case BinOp::Add:
                if (lc && lv == 0.0) return r;
                if (rc && rv == 0.0) return l;
                break;
            case BinOp::Sub:
                if (rc && rv == 0.0) return l;
                if (lc && lv == 0.0) return simplify(std::make_shared<Negate>(r));
                break;
            case BinOp::Mul:
                if ((lc && lv == 0.0) || (rc && rv == 0.0)) return cnst(0.0);
                if (lc && lv == 1.0) return r;
                if (rc && rv == 1.0) return l;
                break;
            case BinOp::Div:
                if (lc && lv == 0.0) return cnst(0.0);
                if (rc && rv == 1.0) return l;
                break;
            case BinOp::Pow:
                if (rc && rv == 1.0) return l;
                if (rc && rv == 0.0) return cnst(1.0);
                break;
        }
        if (l.get() == b->a_.get() && r.get() == b->b_.get()) return e;
        return bin(b->op_, l, r);
    }

    if (auto c = dynamic_cast<const Call*>(e.get())) {
        ExprPtr a = simplify(c->a_);
        ExprPtr b2 = c->b_ ? simplify(c->b_) : nullptr;
        double av, bv;
        if (a->is_constant(&av) && (!b2 || b2->is_constant(&bv))) {
            Call folded(c->fn_, a, b2);
            return cnst(folded.eval(0.0));
        }
        if (a.get() == c->a_.get() && b2.get() == c->b_.get()) return e;
        return std::make_shared<Call>(c->fn_, a, b2);
    }

    return e;
}

}  // namespace qsd
