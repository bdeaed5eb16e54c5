#include "qbsde/expression.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <numbers>
#include <vector>

namespace qbsde {

struct Expression::Node {
    enum class Kind { kNumber, kX, kT, kAdd, kSub, kMul, kDiv, kPow, kNeg, kCall } kind;
    double value = 0.0;
    double (*fn)(double) = nullptr;
    std::shared_ptr<const Node> lhs, rhs;

    double eval(double x, double t) const noexcept {
        switch (kind) {
            case Kind::kNumber: return value;
            case Kind::kX: return x;
            case Kind::kT: return t;
            case Kind::kAdd: return lhs->eval(x, t) + rhs->eval(x, t);
            case Kind::kSub: return lhs->eval(x, t) - rhs->eval(x, t);
            case Kind::kMul: return lhs->eval(x, t) * rhs->eval(x, t);
            case Kind::kDiv: return lhs->eval(x, t) / rhs->eval(x, t);
            case Kind::kPow: return std::pow(lhs->eval(x, t), rhs->eval(x, t));
            case Kind::kNeg: return -lhs->eval(x, t);
            case Kind::kCall: return fn(lhs->eval(x, t));
        }
        return 0.0;
    }
};

namespace {

using Node = Expression::Node;
using NodePtr = std::shared_ptr<const Node>;

double sign(double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); }

struct Function {
    std::string_view name;
    double (*fn)(double);
};

const Function kFunctions[] = {
    {"exp", [](double v) { return std::exp(v); }},   {"log", [](double v) { return std::log(v); }},
    {"sin", [](double v) { return std::sin(v); }},   {"cos", [](double v) { return std::cos(v); }},
    {"tanh", [](double v) { return std::tanh(v); }}, {"sqrt", [](double v) { return std::sqrt(v); }},
    {"abs", [](double v) { return std::abs(v); }},   {"sign", sign},
};

NodePtr leaf(Node::Kind kind, double value = 0.0) {
    auto n = std::make_shared<Node>();
    n->kind = kind;
    n->value = value;
    return n;
}

NodePtr binary(Node::Kind kind, NodePtr l, NodePtr r) {
    auto n = std::make_shared<Node>();
    n->kind = kind;
    n->lhs = std::move(l);
    n->rhs = std::move(r);
    return n;
}

class Parser {
public:
    explicit Parser(std::string_view s) : s_(s) {}

    NodePtr parse() {
        NodePtr root = expr();
        skip();
        if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
        return root;
    }

    bool uses_x = false;
    bool uses_t = false;

private:
    [[noreturn]] void fail(const std::string& what) const {
        throw ExpressionError("expression '" + std::string(s_) + "': " + what + " at position " +
                                  std::to_string(pos_),
                              pos_);
    }

    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    NodePtr expr() {
        NodePtr l = term();
        for (;;) {
            if (accept('+')) l = binary(Node::Kind::kAdd, l, term());
            else if (accept('-')) l = binary(Node::Kind::kSub, l, term());
            else return l;
        }
    }

    NodePtr term() {
        NodePtr l = unary();
        for (;;) {
            if (accept('*')) l = binary(Node::Kind::kMul, l, unary());
            else if (accept('/')) l = binary(Node::Kind::kDiv, l, unary());
            else return l;
        }
    }

    NodePtr unary() {
        if (accept('-')) return binary(Node::Kind::kNeg, unary(), nullptr);
        if (accept('+')) return unary();
        return power();
    }

    NodePtr power() {
        NodePtr base = atom();
        if (accept('^')) return binary(Node::Kind::kPow, base, unary());
        return base;
    }

    NodePtr atom() {
        skip();
        if (pos_ >= s_.size()) fail("unexpected end");
        const char c = s_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c))) {
            const std::size_t start = pos_;
            while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
            const std::string_view name = s_.substr(start, pos_ - start);
            if (name == "x") {
                uses_x = true;
                return leaf(Node::Kind::kX);
            }
            if (name == "t") {
                uses_t = true;
                return leaf(Node::Kind::kT);
            }
            if (name == "pi") return leaf(Node::Kind::kNumber, std::numbers::pi);
            for (const auto& f : kFunctions) {
                if (f.name != name) continue;
                if (!accept('(')) fail("expected '(' after " + std::string(name));
                auto n = std::make_shared<Node>();
                n->kind = Node::Kind::kCall;
                n->fn = f.fn;
                n->lhs = expr();
                if (!accept(')')) fail("expected ')'");
                return n;
            }
            pos_ = start;
            fail("unknown name '" + std::string(name) + "'");
        }
        if (accept('(')) {
            NodePtr inner = expr();
            if (!accept(')')) fail("expected ')'");
            return inner;
        }
        fail("unexpected '" + std::string(1, c) + "'");
    }

    NodePtr number() {
        double v = 0.0;
        const char* begin = s_.data() + pos_;
        const auto [end, ec] = std::from_chars(begin, s_.data() + s_.size(), v);
        if (ec != std::errc()) fail("malformed number");
        pos_ += static_cast<std::size_t>(end - begin);
        return leaf(Node::Kind::kNumber, v);
    }

    std::string_view s_;
    std::size_t pos_ = 0;
};

}  // namespace

Expression Expression::parse(std::string_view source) {
    Parser p(source);
    Expression e;
    e.root_ = p.parse();
    e.source_ = std::string(source);
    e.uses_x_ = p.uses_x;
    e.uses_t_ = p.uses_t;
    return e;
}

double Expression::operator()(double x, double t) const noexcept {
    return root_ ? root_->eval(x, t) : std::nan("");
}

}  // namespace qbsde
