#pragma once

// Coefficient expressions: a small recursive-descent parser producing an AST,
// a printer, and a compiled postfix program for fast evaluation in the
// simulation and ODE inner loops.

#include "qsd/error.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace qsd {

class ParseError : public Error {
public:
    ParseError(std::size_t offset, std::vector<std::string> expected, const std::string& detail)
        : Error(ErrorKind::ParseError, format(offset, expected, detail)),
          offset_(offset),
          expected_(std::move(expected)) {}

    std::size_t offset() const noexcept { return offset_; }
    const std::vector<std::string>& expected() const noexcept { return expected_; }

private:
    static std::string format(std::size_t offset, const std::vector<std::string>& expected,
                              const std::string& detail) {
        std::string s = "at byte " + std::to_string(offset) + ": " + detail;
        if (!expected.empty()) {
            s += " (expected one of:";
            for (const auto& e : expected) s += " " + e;
            s += ")";
        }
        return s;
    }

    std::size_t offset_;
    std::vector<std::string> expected_;
};

enum class Func { Exp, Log, Sqrt, Sin, Cos, Tanh, Abs, Min, Max };

namespace detail {

struct FuncInfo {
    std::string_view name;
    Func func;
    int arity;
};

inline constexpr std::array<FuncInfo, 9> kFunctions{{
    {"exp", Func::Exp, 1},
    {"log", Func::Log, 1},
    {"sqrt", Func::Sqrt, 1},
    {"sin", Func::Sin, 1},
    {"cos", Func::Cos, 1},
    {"tanh", Func::Tanh, 1},
    {"abs", Func::Abs, 1},
    {"min", Func::Min, 2},
    {"max", Func::Max, 2},
}};

inline const FuncInfo& func_info(Func f) {
    for (const auto& info : kFunctions)
        if (info.func == f) return info;
    return kFunctions[0];
}

inline std::string shortest(double v) {
    std::array<char, 64> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    (void)ec;
    return std::string(buf.data(), end);
}

[[noreturn]] inline void domain_error(std::string_view what, double x) {
    throw Error(ErrorKind::EvalError, std::string(what) + " undefined at argument " + shortest(x));
}

inline double apply1(Func f, double a) {
    switch (f) {
        case Func::Exp: return std::exp(a);
        case Func::Log:
            if (!(a > 0.0)) domain_error("log", a);
            return std::log(a);
        case Func::Sqrt:
            if (a < 0.0) domain_error("sqrt", a);
            return std::sqrt(a);
        case Func::Sin: return std::sin(a);
        case Func::Cos: return std::cos(a);
        case Func::Tanh: return std::tanh(a);
        case Func::Abs: return std::fabs(a);
        default: return a;
    }
}

inline double apply2(Func f, double a, double b) {
    return f == Func::Min ? std::min(a, b) : std::max(a, b);
}

}  // namespace detail

/// Abstract syntax tree of a coefficient expression in the single variable x.
class Expr {
public:
    enum class Kind { Number, Variable, Constant, Negate, Add, Sub, Mul, Div, Pow, Call };

    struct Node {
        Kind kind = Kind::Number;
        double value = 0.0;       // Number and Constant
        std::string name;         // Constant name
        Func func = Func::Exp;    // Call
        std::vector<int> args;    // children, indices into nodes
    };

    const std::vector<Node>& nodes() const noexcept { return nodes_; }
    int root() const noexcept { return root_; }

    double eval(double x) const { return eval_node(root_, x); }

    bool depends_on_x() const { return depends(root_); }

    /// Fully parenthesized rendering; `parse(print())` reproduces the tree.
    std::string print() const { return print_node(root_); }

private:
    friend class ExprParser;

    int add(Node n) {
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    double eval_node(int i, double x) const {
        const Node& n = nodes_[static_cast<std::size_t>(i)];
        auto arg = [&](std::size_t k) { return eval_node(n.args[k], x); };
        switch (n.kind) {
            case Kind::Number:
            case Kind::Constant: return n.value;
            case Kind::Variable: return x;
            case Kind::Negate: return -arg(0);
            case Kind::Add: return arg(0) + arg(1);
            case Kind::Sub: return arg(0) - arg(1);
            case Kind::Mul: return arg(0) * arg(1);
            case Kind::Div: {
                double d = arg(1);
                if (d == 0.0) detail::domain_error("division", d);
                return arg(0) / d;
            }
            case Kind::Pow: {
                double r = std::pow(arg(0), arg(1));
                if (std::isnan(r)) detail::domain_error("power", x);
                return r;
            }
            case Kind::Call:
                if (n.args.size() == 1) return detail::apply1(n.func, arg(0));
                return detail::apply2(n.func, arg(0), arg(1));
        }
        return 0.0;
    }

    bool depends(int i) const {
        const Node& n = nodes_[static_cast<std::size_t>(i)];
        if (n.kind == Kind::Variable) return true;
        for (int c : n.args)
            if (depends(c)) return true;
        return false;
    }

    std::string print_node(int i) const {
        const Node& n = nodes_[static_cast<std::size_t>(i)];
        auto sub = [&](std::size_t k) { return print_node(n.args[k]); };
        switch (n.kind) {
            case Kind::Number: return detail::shortest(n.value);
            case Kind::Constant: return n.name;
            case Kind::Variable: return "x";
            case Kind::Negate: return "(-" + sub(0) + ")";
            case Kind::Add: return "(" + sub(0) + " + " + sub(1) + ")";
            case Kind::Sub: return "(" + sub(0) + " - " + sub(1) + ")";
            case Kind::Mul: return "(" + sub(0) + " * " + sub(1) + ")";
            case Kind::Div: return "(" + sub(0) + " / " + sub(1) + ")";
            case Kind::Pow: return "(" + sub(0) + " ^ " + sub(1) + ")";
            case Kind::Call: {
                std::string s(detail::func_info(n.func).name);
                s += "(" + sub(0);
                if (n.args.size() == 2) s += ", " + sub(1);
                return s + ")";
            }
        }
        return {};
    }

    std::vector<Node> nodes_;
    int root_ = -1;
};

/// Recursive-descent parser.
///
///   expr  := term (("+"|"-") term)*
///   term  := unary (("*"|"/") unary)*
///   unary := "-" unary | power
///   power := atom ("^" unary)?
///   atom  := NUMBER | "x" | IDENT "(" expr ("," expr)? ")" | CONST | "(" expr ")"
///
/// `^` binds tighter than unary minus and is right-associative, so `-x^2` is
/// `-(x^2)` and `2^-x^2` is `2^(-(x^2))`.
class ExprParser {
public:
    explicit ExprParser(std::string_view src) : src_(src) {}

    Expr parse() {
        Expr e;
        expr_ = &e;
        e.root_ = parse_expr();
        skip_ws();
        if (pos_ != src_.size()) fail({"+", "-", "*", "/", "^", "end of input"}, "unexpected trailing input");
        return e;
    }

private:
    void skip_ws() {
        while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t' || src_[pos_] == '\n' ||
                                      src_[pos_] == '\r'))
            ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    [[noreturn]] void fail(std::vector<std::string> expected, const std::string& detail) const {
        throw ParseError(pos_, std::move(expected), detail);
    }

    int binary(Expr::Kind k, int lhs, int rhs) {
        Expr::Node n;
        n.kind = k;
        n.args = {lhs, rhs};
        return expr_->add(std::move(n));
    }

    int parse_expr() {
        int lhs = parse_term();
        for (;;) {
            if (accept('+')) lhs = binary(Expr::Kind::Add, lhs, parse_term());
            else if (accept('-')) lhs = binary(Expr::Kind::Sub, lhs, parse_term());
            else return lhs;
        }
    }

    int parse_term() {
        int lhs = parse_unary();
        for (;;) {
            if (accept('*')) lhs = binary(Expr::Kind::Mul, lhs, parse_unary());
            else if (accept('/')) lhs = binary(Expr::Kind::Div, lhs, parse_unary());
            else return lhs;
        }
    }

    int parse_unary() {
        if (accept('-')) {
            Expr::Node n;
            n.kind = Expr::Kind::Negate;
            n.args = {parse_unary()};
            return expr_->add(std::move(n));
        }
        return parse_power();
    }

    int parse_power() {
        int base = parse_atom();
        if (accept('^')) return binary(Expr::Kind::Pow, base, parse_unary());
        return base;
    }

    int parse_atom() {
        skip_ws();
        static const std::vector<std::string> kAtomStart{"NUMBER", "x", "function", "constant", "("};
        if (pos_ >= src_.size()) fail(kAtomStart, "unexpected end of input");
        char c = src_[pos_];
        if (c == '(') {
            ++pos_;
            int inner = parse_expr();
            if (!accept(')')) fail({")"}, "unbalanced parenthesis");
            return inner;
        }
        if ((c >= '0' && c <= '9') || c == '.') return parse_number();
        if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_') return parse_ident();
        fail(kAtomStart, std::string("unexpected character '") + c + "'");
    }

    int parse_number() {
        std::size_t start = pos_;
        auto digits = [&] {
            std::size_t n = 0;
            while (pos_ < src_.size() && src_[pos_] >= '0' && src_[pos_] <= '9') ++pos_, ++n;
            return n;
        };
        std::size_t n = digits();
        if (pos_ < src_.size() && src_[pos_] == '.') {
            ++pos_;
            n += digits();
        }
        if (n == 0) {
            pos_ = start;
            fail({"digit"}, "malformed number");
        }
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            std::size_t save = pos_;
            ++pos_;
            if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
            // An exponent marker without digits is left for the identifier rule.
            if (digits() == 0) pos_ = save;
        }
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(src_.data() + start, src_.data() + pos_, v);
        if (ec != std::errc() || ptr != src_.data() + pos_) {
            pos_ = start;
            fail({"NUMBER"}, "malformed number");
        }
        Expr::Node node;
        node.kind = Expr::Kind::Number;
        node.value = v;
        return expr_->add(std::move(node));
    }

    int parse_ident() {
        std::size_t start = pos_;
        while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
            ++pos_;
        std::string_view id = src_.substr(start, pos_ - start);
        Expr::Node node;
        if (id == "x") {
            node.kind = Expr::Kind::Variable;
            return expr_->add(std::move(node));
        }
        if (id == "pi" || id == "e" || id == "inf") {
            node.kind = Expr::Kind::Constant;
            node.name = std::string(id);
            node.value = id == "pi" ? std::numbers::pi
                         : id == "e" ? std::numbers::e
                                     : std::numeric_limits<double>::infinity();
            return expr_->add(std::move(node));
        }
        for (const auto& info : detail::kFunctions) {
            if (info.name != id) continue;
            if (!accept('(')) fail({"("}, "function '" + std::string(id) + "' requires arguments");
            node.kind = Expr::Kind::Call;
            node.func = info.func;
            node.args.push_back(parse_expr());
            if (info.arity == 2) {
                if (!accept(',')) fail({","}, "function '" + std::string(id) + "' takes two arguments");
                node.args.push_back(parse_expr());
            }
            if (!accept(')')) fail({")"}, "unterminated argument list");
            return expr_->add(std::move(node));
        }
        pos_ = start;
        std::vector<std::string> expected{"x", "pi", "e", "inf"};
        for (const auto& info : detail::kFunctions) expected.emplace_back(info.name);
        fail(std::move(expected), "unknown identifier '" + std::string(id) + "'");
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    Expr* expr_ = nullptr;
};

inline Expr parse_expr(std::string_view src) { return ExprParser(src).parse(); }

/// Postfix program compiled from an Expr with x-free subtrees folded.
class CompiledExpr {
public:
    explicit CompiledExpr(const Expr& e) { emit(e, e.root()); }

    double operator()(double x) const {
        std::array<double, kMaxStack> st;
        std::size_t sp = 0;
        for (const Instr& in : code_) {
            switch (in.op) {
                case Op::Push: st[sp++] = in.value; break;
                case Op::LoadX: st[sp++] = x; break;
                case Op::Neg: st[sp - 1] = -st[sp - 1]; break;
                case Op::Add: --sp; st[sp - 1] += st[sp]; break;
                case Op::Sub: --sp; st[sp - 1] -= st[sp]; break;
                case Op::Mul: --sp; st[sp - 1] *= st[sp]; break;
                case Op::Div:
                    --sp;
                    if (st[sp] == 0.0) detail::domain_error("division", x);
                    st[sp - 1] /= st[sp];
                    break;
                case Op::Pow: {
                    --sp;
                    double r = std::pow(st[sp - 1], st[sp]);
                    if (std::isnan(r)) detail::domain_error("power", x);
                    st[sp - 1] = r;
                    break;
                }
                case Op::Call1: st[sp - 1] = detail::apply1(in.func, st[sp - 1]); break;
                case Op::Call2: --sp; st[sp - 1] = detail::apply2(in.func, st[sp - 1], st[sp]); break;
            }
        }
        return st[0];
    }

    /// Value of an x-independent expression, if it is one.
    std::optional<double> constant() const {
        if (code_.size() == 1 && code_[0].op == Op::Push) return code_[0].value;
        return std::nullopt;
    }

private:
    static constexpr std::size_t kMaxStack = 64;
    enum class Op { Push, LoadX, Neg, Add, Sub, Mul, Div, Pow, Call1, Call2 };
    struct Instr {
        Op op;
        double value = 0.0;
        Func func = Func::Exp;
    };

    std::size_t emit(const Expr& e, int i) {
        const auto& n = e.nodes()[static_cast<std::size_t>(i)];
        if (n.kind != Expr::Kind::Variable && !depends(e, i)) {
            try {
                code_.push_back({Op::Push, eval_sub(e, i), Func::Exp});
                return 1;
            } catch (const Error&) {
                // Undefined constant subexpression: keep it so evaluation reports it.
            }
        }
        std::size_t depth = 0;
        switch (n.kind) {
            case Expr::Kind::Number:
            case Expr::Kind::Constant: code_.push_back({Op::Push, n.value, Func::Exp}); return 1;
            case Expr::Kind::Variable: code_.push_back({Op::LoadX, 0.0, Func::Exp}); return 1;
            case Expr::Kind::Negate:
                depth = emit(e, n.args[0]);
                code_.push_back({Op::Neg, 0.0, Func::Exp});
                return depth;
            case Expr::Kind::Call:
                if (n.args.size() == 1) {
                    depth = emit(e, n.args[0]);
                    code_.push_back({Op::Call1, 0.0, n.func});
                    return depth;
                }
                break;
            default: break;
        }
        std::size_t d0 = emit(e, n.args[0]);
        std::size_t d1 = emit(e, n.args[1]);
        depth = std::max(d0, d1 + 1);
        if (depth > kMaxStack) throw Error(ErrorKind::ParseError, "expression nests too deeply");
        Op op = Op::Add;
        switch (n.kind) {
            case Expr::Kind::Add: op = Op::Add; break;
            case Expr::Kind::Sub: op = Op::Sub; break;
            case Expr::Kind::Mul: op = Op::Mul; break;
            case Expr::Kind::Div: op = Op::Div; break;
            case Expr::Kind::Pow: op = Op::Pow; break;
            default: op = Op::Call2; break;
        }
        code_.push_back({op, 0.0, n.func});
        return depth;
    }

    static bool depends(const Expr& e, int i) {
        const auto& n = e.nodes()[static_cast<std::size_t>(i)];
        if (n.kind == Expr::Kind::Variable) return true;
        for (int c : n.args)
            if (depends(e, c)) return true;
        return false;
    }

    static double eval_sub(const Expr& e, int i) {
        Expr::Node const& n = e.nodes()[static_cast<std::size_t>(i)];
        auto arg = [&](std::size_t k) { return eval_sub(e, n.args[k]); };
        switch (n.kind) {
            case Expr::Kind::Number:
            case Expr::Kind::Constant: return n.value;
            case Expr::Kind::Negate: return -arg(0);
            case Expr::Kind::Add: return arg(0) + arg(1);
            case Expr::Kind::Sub: return arg(0) - arg(1);
            case Expr::Kind::Mul: return arg(0) * arg(1);
            case Expr::Kind::Div: {
                double d = arg(1);
                if (d == 0.0) detail::domain_error("division", d);
                return arg(0) / d;
            }
            case Expr::Kind::Pow: {
                double r = std::pow(arg(0), arg(1));
                if (std::isnan(r)) detail::domain_error("power", 0.0);
                return r;
            }
            case Expr::Kind::Call:
                if (n.args.size() == 1) return detail::apply1(n.func, arg(0));
                return detail::apply2(n.func, arg(0), arg(1));
            case Expr::Kind::Variable: break;
        }
        return 0.0;
    }

    std::vector<Instr> code_;
};

}  // namespace qsd
