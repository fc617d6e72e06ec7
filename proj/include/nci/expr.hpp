// A small expression language for user-supplied fields:
//
//   expr   := term (("+" | "-") term)*
//   term   := factor (("*" | "/") factor)*
//   factor := "-"? power
//   power  := atom ("^" int)?
//   atom   := number | name | name "(" expr ("," expr)? ")" | "(" expr ")"
//
// Exponents are integer literals (optionally negative). Evaluation carries a
// forward-mode gradient, so derivatives are exact.
#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nci/dual.hpp"
#include "nci/errors.hpp"

namespace nci::expr {

enum class NodeKind { Number, Variable, Negate, Add, Sub, Mul, Div, Pow, Call };
enum class Func { Sin, Cos, Tan, Exp, Log, Sqrt, Atan2 };

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
    NodeKind kind;
    std::size_t offset = 0; ///< byte offset of the node's first token
    double number = 0.0;
    std::string text; ///< number lexeme or variable name
    std::size_t slot = 0; ///< variable index into the declared-name list
    int exponent = 0;
    Func func = Func::Sin;
    std::vector<NodePtr> children;
};

inline const char* func_name(Func f) {
    switch (f) {
    case Func::Sin: return "sin";
    case Func::Cos: return "cos";
    case Func::Tan: return "tan";
    case Func::Exp: return "exp";
    case Func::Log: return "log";
    case Func::Sqrt: return "sqrt";
    case Func::Atan2: return "atan2";
    }
    return "?";
}

inline bool lookup_func(std::string_view name, Func& out) {
    static const std::pair<const char*, Func> table[] = {
        {"sin", Func::Sin}, {"cos", Func::Cos},   {"tan", Func::Tan},     {"exp", Func::Exp},
        {"log", Func::Log}, {"sqrt", Func::Sqrt}, {"atan2", Func::Atan2},
    };
    for (const auto& [n, f] : table)
        if (name == n) {
            out = f;
            return true;
        }
    return false;
}

namespace detail {

class Parser {
  public:
    Parser(std::string_view src, const std::vector<std::string>& declared) : src_(src), declared_(declared) {}

    NodePtr parse() {
        NodePtr root = expr();
        skip_ws();
        if (pos_ != src_.size()) fail("unexpected character", {"+", "-", "*", "/", "^", "end of input"});
        return root;
    }

  private:
    std::string_view src_;
    const std::vector<std::string>& declared_;
    std::size_t pos_ = 0;

    [[noreturn]] void fail(const std::string& msg, std::vector<std::string> expected) const {
        throw ParseError(msg, std::min(pos_, src_.size()), std::move(expected));
    }

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    static NodePtr make(NodeKind k, std::size_t offset, std::vector<NodePtr> children = {}) {
        auto n = std::make_shared<Node>();
        n->kind = k;
        n->offset = offset;
        n->children = std::move(children);
        return n;
    }

    NodePtr expr() {
        skip_ws();
        const std::size_t start = pos_;
        NodePtr lhs = term();
        for (;;) {
            skip_ws();
            if (accept('+')) {
                lhs = make(NodeKind::Add, start, {lhs, term()});
            } else if (accept('-')) {
                lhs = make(NodeKind::Sub, start, {lhs, term()});
            } else {
                return lhs;
            }
        }
    }

    NodePtr term() {
        skip_ws();
        const std::size_t start = pos_;
        NodePtr lhs = factor();
        for (;;) {
            if (accept('*')) {
                lhs = make(NodeKind::Mul, start, {lhs, factor()});
            } else if (accept('/')) {
                lhs = make(NodeKind::Div, start, {lhs, factor()});
            } else {
                return lhs;
            }
        }
    }

    NodePtr factor() {
        skip_ws();
        const std::size_t start = pos_;
        if (accept('-')) return make(NodeKind::Negate, start, {power()});
        return power();
    }

    NodePtr power() {
        skip_ws();
        const std::size_t start = pos_;
        NodePtr base = atom();
        if (accept('^')) {
            skip_ws();
            const std::size_t exp_start = pos_;
            bool negative = false;
            if (pos_ < src_.size() && src_[pos_] == '-') {
                negative = true;
                ++pos_;
            }
            std::size_t digits = 0;
            long value = 0;
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                value = value * 10 + (src_[pos_] - '0');
                if (value > 1000) {
                    pos_ = exp_start;
                    fail("exponent too large", {"integer <= 1000"});
                }
                ++pos_;
                ++digits;
            }
            if (digits == 0) fail("expected integer exponent", {"integer"});
            auto n = std::make_shared<Node>();
            n->kind = NodeKind::Pow;
            n->offset = start;
            n->exponent = static_cast<int>(negative ? -value : value);
            n->text = std::string(src_.substr(exp_start, pos_ - exp_start));
            n->children = {base};
            return n;
        }
        return base;
    }

    NodePtr atom() {
        skip_ws();
        const std::size_t start = pos_;
        if (pos_ >= src_.size()) fail("unexpected end of input", {"number", "name", "("});
        const char c = src_[pos_];
        if (c == '(') {
            ++pos_;
            NodePtr inner = expr();
            if (!accept(')')) fail("expected ')'", {")"});
            return inner;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            while (pos_ < src_.size() &&
                   (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
                ++pos_;
            const std::string name(src_.substr(start, pos_ - start));
            skip_ws();
            if (pos_ < src_.size() && src_[pos_] == '(') {
                Func f;
                if (!lookup_func(name, f)) {
                    pos_ = start;
                    fail("unknown function '" + name + "'", {"sin", "cos", "tan", "exp", "log", "sqrt", "atan2"});
                }
                ++pos_;
                std::vector<NodePtr> args{expr()};
                if (accept(',')) args.push_back(expr());
                if (!accept(')')) fail("expected ')'", {")", ","});
                const std::size_t arity = f == Func::Atan2 ? 2 : 1;
                if (args.size() != arity) {
                    pos_ = start;
                    fail(std::string(func_name(f)) + " takes " + std::to_string(arity) + " argument(s)", {});
                }
                auto n = std::make_shared<Node>();
                n->kind = NodeKind::Call;
                n->offset = start;
                n->func = f;
                n->text = name;
                n->children = std::move(args);
                return n;
            }
            Func dummy;
            if (lookup_func(name, dummy)) {
                pos_ = start;
                fail("function '" + name + "' used without arguments", {"("});
            }
            const auto it = std::find(declared_.begin(), declared_.end(), name);
            if (it == declared_.end()) throw UndeclaredVariable(name, start);
            auto n = std::make_shared<Node>();
            n->kind = NodeKind::Variable;
            n->offset = start;
            n->text = name;
            n->slot = static_cast<std::size_t>(it - declared_.begin());
            return n;
        }
        fail("unexpected character", {"number", "name", "(", "-"});
    }

    NodePtr number() {
        const std::size_t start = pos_;
        std::size_t digits = 0;
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_, ++digits;
        if (pos_ < src_.size() && src_[pos_] == '.') {
            ++pos_;
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_, ++digits;
        }
        if (digits == 0) fail("malformed number", {"digit"});
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            std::size_t save = pos_;
            ++pos_;
            if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
            std::size_t exp_digits = 0;
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_, ++exp_digits;
            if (exp_digits == 0) {
                pos_ = save + 1;
                fail("malformed exponent in number", {"digit"});
            }
        }
        auto n = std::make_shared<Node>();
        n->kind = NodeKind::Number;
        n->offset = start;
        n->text = std::string(src_.substr(start, pos_ - start));
        n->number = std::strtod(n->text.c_str(), nullptr);
        if (!std::isfinite(n->number)) fail("number out of range", {});
        return n;
    }
};

inline int precedence(const Node& n) {
    switch (n.kind) {
    case NodeKind::Add:
    case NodeKind::Sub: return 1;
    case NodeKind::Mul:
    case NodeKind::Div: return 2;
    case NodeKind::Negate: return 3;
    case NodeKind::Pow: return 4;
    default: return 5;
    }
}

inline void print(const Node& n, std::string& out);

inline void print_child(const Node& child, int min_prec, std::string& out) {
    if (precedence(child) < min_prec) {
        out += '(';
        print(child, out);
        out += ')';
    } else {
        print(child, out);
    }
}

inline void print(const Node& n, std::string& out) {
    switch (n.kind) {
    case NodeKind::Number:
    case NodeKind::Variable: out += n.text; break;
    case NodeKind::Negate:
        out += '-';
        print_child(*n.children[0], 4, out);
        break;
    case NodeKind::Add:
    case NodeKind::Sub:
        print_child(*n.children[0], 1, out);
        out += n.kind == NodeKind::Add ? " + " : " - ";
        print_child(*n.children[1], 2, out);
        break;
    case NodeKind::Mul:
    case NodeKind::Div:
        print_child(*n.children[0], 2, out);
        out += n.kind == NodeKind::Mul ? "*" : "/";
        print_child(*n.children[1], 3, out);
        break;
    case NodeKind::Pow:
        print_child(*n.children[0], 5, out);
        out += '^';
        out += n.text;
        break;
    case NodeKind::Call:
        out += func_name(n.func);
        out += '(';
        print(*n.children[0], out);
        if (n.children.size() > 1) {
            out += ", ";
            print(*n.children[1], out);
        }
        out += ')';
        break;
    }
}

inline int depth(const Node& n) {
    int d = 0;
    for (const auto& c : n.children) d = std::max(d, depth(*c));
    return d + 1;
}

inline bool same_tree(const Node& a, const Node& b) {
    if (a.kind != b.kind || a.children.size() != b.children.size()) return false;
    switch (a.kind) {
    case NodeKind::Number:
        if (a.number != b.number) return false;
        break;
    case NodeKind::Variable:
        if (a.text != b.text) return false;
        break;
    case NodeKind::Pow:
        if (a.exponent != b.exponent) return false;
        break;
    case NodeKind::Call:
        if (a.func != b.func) return false;
        break;
    default: break;
    }
    for (std::size_t i = 0; i < a.children.size(); ++i)
        if (!same_tree(*a.children[i], *b.children[i])) return false;
    return true;
}

inline Dual eval(const Node& n, std::span<const Dual> env) {
    switch (n.kind) {
    case NodeKind::Number: return Dual(n.number);
    case NodeKind::Variable: return env[n.slot];
    case NodeKind::Negate: return -eval(*n.children[0], env);
    case NodeKind::Add: return eval(*n.children[0], env) + eval(*n.children[1], env);
    case NodeKind::Sub: return eval(*n.children[0], env) - eval(*n.children[1], env);
    case NodeKind::Mul: return eval(*n.children[0], env) * eval(*n.children[1], env);
    case NodeKind::Div: {
        const Dual num = eval(*n.children[0], env);
        const Dual den = eval(*n.children[1], env);
        if (den.v == 0.0) throw DomainError("division by zero", n.offset);
        return num / den;
    }
    case NodeKind::Pow: {
        const Dual base = eval(*n.children[0], env);
        if (n.exponent < 0 && base.v == 0.0) throw DomainError("negative power of zero", n.offset);
        return ipow(base, n.exponent);
    }
    case NodeKind::Call: {
        const Dual a = eval(*n.children[0], env);
        switch (n.func) {
        case Func::Sin: return sin(a);
        case Func::Cos: return cos(a);
        case Func::Tan:
            if (std::cos(a.v) == 0.0) throw DomainError("tan at a pole", n.offset);
            return tan(a);
        case Func::Exp: return exp(a);
        case Func::Log:
            if (!(a.v > 0.0)) throw DomainError("log of non-positive value", n.offset);
            return log(a);
        case Func::Sqrt:
            if (a.v < 0.0) throw DomainError("sqrt of negative value", n.offset);
            if (a.v == 0.0 && !a.g.empty()) throw DomainError("sqrt is not differentiable at 0", n.offset);
            return sqrt(a);
        case Func::Atan2: {
            const Dual b = eval(*n.children[1], env);
            if (a.v == 0.0 && b.v == 0.0) throw DomainError("atan2(0, 0) is undefined", n.offset);
            return atan2(a, b);
        }
        }
    }
    }
    throw DomainError("unknown node", n.offset);
}

} // namespace detail

/// Immutable parsed expression. Variables are bound by position in the
/// declared-name list given at parse time.
class Expression {
  public:
    /// Parses `src`; every identifier must be a declared name or a function.
    static Expression parse(std::string_view src, std::vector<std::string> declared) {
        Expression e;
        e.source_ = std::string(src);
        e.declared_ = std::move(declared);
        detail::Parser p(e.source_, e.declared_);
        e.root_ = p.parse();
        return e;
    }

    const Node& root() const { return *root_; }
    const std::string& source() const noexcept { return source_; }
    const std::vector<std::string>& declared() const noexcept { return declared_; }

    /// Canonical text: minimal parentheses, single spaces around + and -.
    std::string to_string() const {
        std::string out;
        detail::print(*root_, out);
        return out;
    }

    int depth() const { return detail::depth(*root_); }

    bool uses(std::string_view name) const {
        bool found = false;
        visit(*root_, [&](const Node& n) {
            if (n.kind == NodeKind::Variable && n.text == name) found = true;
        });
        return found;
    }

    /// Evaluates with one Dual per declared name (in declaration order).
    Dual eval(std::span<const Dual> env) const {
        if (env.size() != declared_.size()) throw InvalidArgument("Expression::eval: environment size mismatch");
        return detail::eval(*root_, env);
    }

    /// Value and exact gradient with respect to `coordinates`; every other
    /// declared name must appear in `params`.
    std::pair<double, Vector> eval_grad(const std::vector<std::string>& coordinates, std::span<const double> x,
                                        const std::map<std::string, double>& params = {}) const {
        if (x.size() != coordinates.size()) throw InvalidArgument("eval_grad: point has wrong dimension");
        std::vector<Dual> env;
        env.reserve(declared_.size());
        for (const auto& name : declared_) {
            const auto it = std::find(coordinates.begin(), coordinates.end(), name);
            if (it != coordinates.end()) {
                const auto k = static_cast<std::size_t>(it - coordinates.begin());
                env.push_back(Dual::variable(x[k], k, coordinates.size()));
            } else if (auto p = params.find(name); p != params.end()) {
                env.emplace_back(p->second);
            } else {
                throw InvalidArgument("eval_grad: no value bound for '" + name + "'");
            }
        }
        const Dual d = detail::eval(*root_, env);
        return {d.v, d.gradient(coordinates.size())};
    }

    friend bool same_structure(const Expression& a, const Expression& b) {
        return detail::same_tree(*a.root_, *b.root_);
    }

  private:
    template <typename F>
    static void visit(const Node& n, F&& f) {
        f(n);
        for (const auto& c : n.children) visit(*c, f);
    }

    std::string source_;
    std::vector<std::string> declared_;
    NodePtr root_;
};

/// Free-function form of Expression::parse.
inline Expression parse(std::string_view src, std::vector<std::string> declared) {
    return Expression::parse(src, std::move(declared));
}

} // namespace nci::expr
