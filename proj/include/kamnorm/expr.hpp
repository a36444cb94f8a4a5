#pragma once

#include <memory>

#include "kamnorm/common.hpp"

namespace kamnorm {

/// Small arithmetic expressions over named variables: numbers, + - * / ^,
/// parentheses, unary minus, sin cos tan exp log sqrt abs, and the constant
/// pi.  Enough to express frequency maps and perturbation coefficients.
class Expr {
public:
    static Expr parse(const std::string& text, const std::vector<std::string>& vars);
    /// Convenience: variables xi1..xin.
    static Expr parse_xi(const std::string& text, int n);

    double eval(std::span<const double> values) const;
    /// Exact partial derivative with respect to variable var.
    Expr derivative(int var) const;
    std::string text() const { return text_; }
    int n_vars() const { return n_vars_; }

    Expr() = default;
    bool valid() const { return node_ != nullptr; }

    struct Node;

private:
    std::shared_ptr<const Node> node_;
    std::string text_;
    int n_vars_ = 0;
};

std::vector<std::string> xi_names(int n);

} // namespace kamnorm
