#include "kamnorm/expr.hpp"

#include <cctype>
#include <cmath>
#include <functional>

namespace kamnorm {

enum class Op { Const, Var, Add, Sub, Mul, Div, Pow, Neg, Sin, Cos, Tan, Exp, Log, Sqrt, Abs };

struct Expr::Node {
    Op op;
    double value = 0; // Const
    int var = -1;     // Var
    std::shared_ptr<const Node> a, b;
};

namespace {

using NodePtr = std::shared_ptr<const Expr::Node>;

NodePtr make(Op op, NodePtr a = nullptr, NodePtr b = nullptr)
{
    auto n = std::make_shared<Expr::Node>();
    n->op = op;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
}

NodePtr constant(double v)
{
    auto n = std::make_shared<Expr::Node>();
    n->op = Op::Const;
    n->value = v;
    return n;
}

NodePtr variable(int i)
{
    auto n = std::make_shared<Expr::Node>();
    n->op = Op::Var;
    n->var = i;
    return n;
}

struct Parser {
    const std::string& src;
    const std::vector<std::string>& vars;
    size_t pos = 0;

    void skip() { while (pos < src.size() && std::isspace(static_cast<unsigned char>(src[pos]))) ++pos; }

    bool eat(char c)
    {
        skip();
        if (pos < src.size() && src[pos] == c) { ++pos; return true; }
        return false;
    }

    [[noreturn]] void fail(const std::string& what)
    {
        throw ParseError("expression '" + src + "': " + what + " near position " +
                         std::to_string(pos));
    }

    NodePtr expr()
    {
        NodePtr lhs = term();
        for (;;) {
            if (eat('+')) lhs = make(Op::Add, lhs, term());
            else if (eat('-')) lhs = make(Op::Sub, lhs, term());
            else return lhs;
        }
    }

    NodePtr term()
    {
        NodePtr lhs = unary();
        for (;;) {
            if (eat('*')) lhs = make(Op::Mul, lhs, unary());
            else if (eat('/')) lhs = make(Op::Div, lhs, unary());
            else return lhs;
        }
    }

    NodePtr unary()
    {
        if (eat('-')) return make(Op::Neg, unary());
        if (eat('+')) return unary();
        return power();
    }

    NodePtr power()
    {
        NodePtr base = atom();
        if (eat('^')) return make(Op::Pow, base, unary()); // right associative
        return base;
    }

    NodePtr atom()
    {
        skip();
        if (pos >= src.size()) fail("unexpected end");
        char c = src[pos];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            size_t used = 0;
            double v = std::stod(src.substr(pos), &used);
            pos += used;
            return constant(v);
        }
        if (c == '(') {
            ++pos;
            NodePtr e = expr();
            if (!eat(')')) fail("missing ')'");
            return e;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            size_t start = pos;
            while (pos < src.size() &&
                   (std::isalnum(static_cast<unsigned char>(src[pos])) || src[pos] == '_'))
                ++pos;
            std::string name = src.substr(start, pos - start);
            if (name == "pi") return constant(M_PI);
            static const std::pair<const char*, Op> fns[] = {
                {"sin", Op::Sin}, {"cos", Op::Cos}, {"tan", Op::Tan}, {"exp", Op::Exp},
                {"log", Op::Log}, {"sqrt", Op::Sqrt}, {"abs", Op::Abs}};
            for (auto& [fname, op] : fns) {
                if (name == fname) {
                    if (!eat('(')) fail(std::string(fname) + " needs '('");
                    NodePtr arg = expr();
                    if (!eat(')')) fail("missing ')'");
                    return make(op, arg);
                }
            }
            for (size_t i = 0; i < vars.size(); ++i)
                if (vars[i] == name) return variable(static_cast<int>(i));
            fail("unknown identifier '" + name + "'");
        }
        fail(std::string("unexpected character '") + c + "'");
    }
};

double eval_node(const Expr::Node* n, std::span<const double> x)
{
    switch (n->op) {
        case Op::Const: return n->value;
        case Op::Var: return x[static_cast<size_t>(n->var)];
        case Op::Add: return eval_node(n->a.get(), x) + eval_node(n->b.get(), x);
        case Op::Sub: return eval_node(n->a.get(), x) - eval_node(n->b.get(), x);
        case Op::Mul: return eval_node(n->a.get(), x) * eval_node(n->b.get(), x);
        case Op::Div: return eval_node(n->a.get(), x) / eval_node(n->b.get(), x);
        case Op::Pow: return std::pow(eval_node(n->a.get(), x), eval_node(n->b.get(), x));
        case Op::Neg: return -eval_node(n->a.get(), x);
        case Op::Sin: return std::sin(eval_node(n->a.get(), x));
        case Op::Cos: return std::cos(eval_node(n->a.get(), x));
        case Op::Tan: return std::tan(eval_node(n->a.get(), x));
        case Op::Exp: return std::exp(eval_node(n->a.get(), x));
        case Op::Log: return std::log(eval_node(n->a.get(), x));
        case Op::Sqrt: return std::sqrt(eval_node(n->a.get(), x));
        case Op::Abs: return std::abs(eval_node(n->a.get(), x));
    }
    return 0;
}

NodePtr diff_node(const NodePtr& n, int var)
{
    switch (n->op) {
        case Op::Const: return constant(0);
        case Op::Var: return constant(n->var == var ? 1 : 0);
        case Op::Add: return make(Op::Add, diff_node(n->a, var), diff_node(n->b, var));
        case Op::Sub: return make(Op::Sub, diff_node(n->a, var), diff_node(n->b, var));
        case Op::Mul:
            return make(Op::Add, make(Op::Mul, diff_node(n->a, var), n->b),
                        make(Op::Mul, n->a, diff_node(n->b, var)));
        case Op::Div:
            return make(Op::Div,
                        make(Op::Sub, make(Op::Mul, diff_node(n->a, var), n->b),
                             make(Op::Mul, n->a, diff_node(n->b, var))),
                        make(Op::Mul, n->b, n->b));
        case Op::Pow: {
            if (n->b->op == Op::Const) { // a^c -> c a^(c-1) a'
                return make(Op::Mul,
                            make(Op::Mul, constant(n->b->value),
                                 make(Op::Pow, n->a, constant(n->b->value - 1))),
                            diff_node(n->a, var));
            }
            // a^b = exp(b log a)
            NodePtr rewritten = make(Op::Exp, make(Op::Mul, n->b, make(Op::Log, n->a)));
            return diff_node(rewritten, var);
        }
        case Op::Neg: return make(Op::Neg, diff_node(n->a, var));
        case Op::Sin: return make(Op::Mul, make(Op::Cos, n->a), diff_node(n->a, var));
        case Op::Cos:
            return make(Op::Neg, make(Op::Mul, make(Op::Sin, n->a), diff_node(n->a, var)));
        case Op::Tan: {
            NodePtr sec2 = make(Op::Div, constant(1),
                                make(Op::Mul, make(Op::Cos, n->a), make(Op::Cos, n->a)));
            return make(Op::Mul, sec2, diff_node(n->a, var));
        }
        case Op::Exp: return make(Op::Mul, make(Op::Exp, n->a), diff_node(n->a, var));
        case Op::Log: return make(Op::Div, diff_node(n->a, var), n->a);
        case Op::Sqrt:
            return make(Op::Div, diff_node(n->a, var),
                        make(Op::Mul, constant(2), make(Op::Sqrt, n->a)));
        case Op::Abs: // derivative taken as sign(a) a'; not defined at 0
            return make(Op::Mul, make(Op::Div, n->a, make(Op::Abs, n->a)),
                        diff_node(n->a, var));
    }
    return constant(0);
}

std::string node_text(const Expr::Node* n);

std::string paren(const Expr::Node* n)
{
    return "(" + node_text(n) + ")";
}

std::string node_text(const Expr::Node* n)
{
    switch (n->op) {
        case Op::Const: return fmt_double(n->value);
        case Op::Var: return "x" + std::to_string(n->var);
        case Op::Add: return paren(n->a.get()) + "+" + paren(n->b.get());
        case Op::Sub: return paren(n->a.get()) + "-" + paren(n->b.get());
        case Op::Mul: return paren(n->a.get()) + "*" + paren(n->b.get());
        case Op::Div: return paren(n->a.get()) + "/" + paren(n->b.get());
        case Op::Pow: return paren(n->a.get()) + "^" + paren(n->b.get());
        case Op::Neg: return "-" + paren(n->a.get());
        case Op::Sin: return "sin" + paren(n->a.get());
        case Op::Cos: return "cos" + paren(n->a.get());
        case Op::Tan: return "tan" + paren(n->a.get());
        case Op::Exp: return "exp" + paren(n->a.get());
        case Op::Log: return "log" + paren(n->a.get());
        case Op::Sqrt: return "sqrt" + paren(n->a.get());
        case Op::Abs: return "abs" + paren(n->a.get());
    }
    return "?";
}

} // namespace

Expr Expr::parse(const std::string& text, const std::vector<std::string>& vars)
{
    Parser p{text, vars};
    Expr e;
    e.node_ = p.expr();
    p.skip();
    if (p.pos != text.size()) p.fail("trailing input");
    e.text_ = text;
    e.n_vars_ = static_cast<int>(vars.size());
    return e;
}

std::vector<std::string> xi_names(int n)
{
    std::vector<std::string> names;
    for (int i = 1; i <= n; ++i) names.push_back("xi" + std::to_string(i));
    return names;
}

Expr Expr::parse_xi(const std::string& text, int n)
{
    return parse(text, xi_names(n));
}

double Expr::eval(std::span<const double> values) const
{
    if (!node_) throw std::logic_error("Expr: evaluating empty expression");
    if (static_cast<int>(values.size()) != n_vars_)
        throw std::invalid_argument("Expr: wrong number of variable values");
    return eval_node(node_.get(), values);
}

Expr Expr::derivative(int var) const
{
    if (!node_) throw std::logic_error("Expr: differentiating empty expression");
    Expr d;
    d.node_ = diff_node(node_, var);
    d.n_vars_ = n_vars_;
    d.text_ = node_text(d.node_.get());
    return d;
}

} // namespace kamnorm
