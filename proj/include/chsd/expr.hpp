#pragma once

#include <cctype>
#include <cmath>
#include <map>
#include <memory>
#include <string>

#include "chsd/geometry.hpp"

namespace chsd {

/// Small arithmetic expression evaluator for initial/boundary data given as
/// strings: variables x and y, optional named constants, the usual operators
/// (+ - * / ^, unary minus) and one-argument functions sin cos tan sinh cosh
/// tanh exp log sqrt abs, plus pow/min/max with two arguments and the
/// constant pi.
class Expr {
public:
    Expr() = default;
    Expr(const std::string& text, std::map<std::string, double> constants = {})
        : constants_(std::move(constants)) {
        src_ = text;
        pos_ = 0;
        root_ = parse_sum();
        skip_ws();
        if (pos_ != src_.size())
            throw std::invalid_argument("Expr: trailing characters in '" + text + "'");
    }

    double operator()(Vec2 p) const {
        if (!root_) throw std::logic_error("Expr: empty expression");
        return root_->eval(p.x, p.y);
    }

private:
    struct Node {
        virtual ~Node() = default;
        virtual double eval(double x, double y) const = 0;
    };
    using NodePtr = std::shared_ptr<const Node>;

    struct Const : Node {
        double v;
        explicit Const(double v_) : v(v_) {}
        double eval(double, double) const override { return v; }
    };
    struct Var : Node {
        bool is_x;
        explicit Var(bool x_) : is_x(x_) {}
        double eval(double x, double y) const override { return is_x ? x : y; }
    };
    struct Unary : Node {
        double (*fn)(double);
        NodePtr a;
        double eval(double x, double y) const override { return fn(a->eval(x, y)); }
    };
    struct Binary : Node {
        char op;
        NodePtr a, b;
        double eval(double x, double y) const override {
            double u = a->eval(x, y), v = b->eval(x, y);
            switch (op) {
                case '+': return u + v;
                case '-': return u - v;
                case '*': return u * v;
                case '/': return u / v;
                case '^': return std::pow(u, v);
                case 'm': return std::min(u, v);
                case 'M': return std::max(u, v);
                default: return 0.0;
            }
        }
    };

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }

    bool consume(char c) {
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    char peek() {
        skip_ws();
        return pos_ < src_.size() ? src_[pos_] : '\0';
    }

    NodePtr parse_sum() {
        NodePtr lhs = parse_product();
        for (;;) {
            if (consume('+')) lhs = make_bin('+', lhs, parse_product());
            else if (consume('-')) lhs = make_bin('-', lhs, parse_product());
            else return lhs;
        }
    }

    NodePtr parse_product() {
        NodePtr lhs = parse_unary();
        for (;;) {
            if (consume('*')) lhs = make_bin('*', lhs, parse_unary());
            else if (consume('/')) lhs = make_bin('/', lhs, parse_unary());
            else return lhs;
        }
    }

    NodePtr parse_unary() {
        if (consume('-')) return make_bin('-', std::make_shared<Const>(0.0), parse_unary());
        if (consume('+')) return parse_unary();
        return parse_power();
    }

    NodePtr parse_power() {
        NodePtr base = parse_atom();
        if (consume('^')) return make_bin('^', base, parse_unary()); // right associative
        return base;
    }

    NodePtr parse_atom() {
        skip_ws();
        if (pos_ >= src_.size()) throw std::invalid_argument("Expr: unexpected end of input");
        char c = src_[pos_];
        if (c == '(') {
            ++pos_;
            NodePtr inner = parse_sum();
            if (!consume(')')) throw std::invalid_argument("Expr: missing ')'");
            return inner;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_ident();
        throw std::invalid_argument(std::string("Expr: unexpected character '") + c + "'");
    }

    NodePtr parse_number() {
        size_t end = pos_;
        while (end < src_.size() &&
               (std::isdigit(static_cast<unsigned char>(src_[end])) || src_[end] == '.' ||
                src_[end] == 'e' || src_[end] == 'E' ||
                ((src_[end] == '+' || src_[end] == '-') && end > pos_ &&
                 (src_[end - 1] == 'e' || src_[end - 1] == 'E'))))
            ++end;
        double v = std::stod(src_.substr(pos_, end - pos_));
        pos_ = end;
        return std::make_shared<Const>(v);
    }

    NodePtr parse_ident() {
        size_t end = pos_;
        while (end < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[end])) ||
                                     src_[end] == '_'))
            ++end;
        std::string name = src_.substr(pos_, end - pos_);
        pos_ = end;
        if (name == "x") return std::make_shared<Var>(true);
        if (name == "y") return std::make_shared<Var>(false);
        if (name == "pi") return std::make_shared<Const>(M_PI);
        if (auto it = constants_.find(name); it != constants_.end())
            return std::make_shared<Const>(it->second);
        static const std::map<std::string, double (*)(double)> fns = {
            {"sin", std::sin},   {"cos", std::cos},   {"tan", std::tan},  {"sinh", std::sinh},
            {"cosh", std::cosh}, {"tanh", std::tanh}, {"exp", std::exp},  {"log", std::log},
            {"sqrt", std::sqrt}, {"abs", std::fabs}};
        if (auto it = fns.find(name); it != fns.end()) {
            if (!consume('(')) throw std::invalid_argument("Expr: expected '(' after " + name);
            NodePtr arg = parse_sum();
            if (!consume(')')) throw std::invalid_argument("Expr: missing ')'");
            auto node = std::make_shared<Unary>();
            node->fn = it->second;
            node->a = arg;
            return node;
        }
        if (name == "pow" || name == "min" || name == "max") {
            if (!consume('(')) throw std::invalid_argument("Expr: expected '(' after " + name);
            NodePtr a = parse_sum();
            if (!consume(',')) throw std::invalid_argument("Expr: expected ',' in " + name);
            NodePtr b = parse_sum();
            if (!consume(')')) throw std::invalid_argument("Expr: missing ')'");
            char op = name == "pow" ? '^' : (name == "min" ? 'm' : 'M');
            return make_bin(op, a, b);
        }
        throw std::invalid_argument("Expr: unknown identifier '" + name + "'");
    }

    static NodePtr make_bin(char op, NodePtr a, NodePtr b) {
        auto node = std::make_shared<Binary>();
        node->op = op;
        node->a = std::move(a);
        node->b = std::move(b);
        return node;
    }

    std::string src_;
    size_t pos_ = 0;
    NodePtr root_;
    std::map<std::string, double> constants_;
};

} // namespace chsd
