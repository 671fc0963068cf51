#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hjblab {

/// Families of variables a coefficient expression may reference.
///   Time     -> t
///   State    -> x1..xd
///   Value    -> y
///   Gradient -> z1..zm   (the row vector p*sigma inside the Hamiltonian)
///   Control  -> u1..uk
enum class VarKind : std::uint8_t { Time, State, Value, Gradient, Control };

struct VarRef {
    VarKind kind = VarKind::Time;
    std::uint16_t index = 0;  ///< zero-based; ignored for Time and Value

    friend bool operator==(const VarRef&, const VarRef&) = default;
};

/// Dimensions and named constants visible while parsing.
struct ExprContext {
    std::size_t state_dim = 1;
    std::size_t noise_dim = 1;
    std::size_t control_dim = 0;
    std::map<std::string, double, std::less<>> constants;
};

/// Point at which an expression is evaluated. Spans may be shorter than the
/// context dimensions only if the expression never reads the missing entries.
struct EvalPoint {
    double t = 0.0;
    std::span<const double> x;
    double y = 0.0;
    std::span<const double> z;
    std::span<const double> u;
};

/**
 * Immutable coefficient expression.
 *
 * Grammar:
 *   expr   := term (("+"|"-") term)*
 *   term   := factor (("*"|"/") factor)*
 *   factor := ["-"] atom ["^" integer]
 *   atom   := number | ident | ident "(" expr ("," expr)* ")" | "(" expr ")"
 *
 * Functions: abs sqrt exp sin cos tanh min max pos neg clamp.
 * `pos(a)` is max(a,0), `neg(a)` is max(-a,0), `clamp(a,lo,hi)` is min(max(a,lo),hi).
 *
 * Copies share the parsed tree and the compiled evaluation program.
 */
class Expr {
public:
    /// Constant zero.
    Expr();

    static Expr parse(std::string_view text, const ExprContext& ctx);
    static Expr constant(double value);
    static Expr variable(VarRef var);

    /// Fully parenthesised text that parses back to an identically evaluating tree.
    std::string to_string() const;

    /// Throws EvalError on division by zero or sqrt of a negative argument.
    double eval(const EvalPoint& p) const;

    bool is_constant() const;
    bool depends_on(VarKind kind) const;

    /// Largest zero-based index referenced for `kind`, plus one (0 when unused).
    std::size_t index_extent(VarKind kind) const;

    /// Replace every occurrence of `var` by `replacement`.
    Expr substitute(VarRef var, const Expr& replacement) const;

    friend Expr operator+(const Expr& a, const Expr& b);
    friend Expr operator-(const Expr& a, const Expr& b);
    friend Expr operator*(const Expr& a, const Expr& b);
    friend Expr operator/(const Expr& a, const Expr& b);
    friend Expr operator-(const Expr& a);

    struct Node;
    struct Program;

private:
    explicit Expr(std::shared_ptr<const Node> root);

    std::shared_ptr<const Node> root_;
    std::shared_ptr<const Program> program_;
};

}  // namespace hjblab
