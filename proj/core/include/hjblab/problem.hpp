#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hjblab/expr.hpp"

namespace hjblab {

enum class ObstacleSide { None, Lower, Upper };

std::string to_string(ObstacleSide side);
ObstacleSide parse_obstacle_side(std::string_view text);

/// Axis-aligned box [lo_i, hi_i] in state space.
struct Box {
    std::vector<double> lo;
    std::vector<double> hi;

    std::size_t dims() const { return lo.size(); }
    bool contains(std::span<const double> x, double tol = 0.0) const;

    friend bool operator==(const Box&, const Box&) = default;
};

/// Textual description of a control problem, as read from a scenario file.
struct ProblemSpec {
    std::size_t state_dim = 1;
    std::size_t noise_dim = 1;
    double horizon = 1.0;
    std::vector<std::string> drift;      ///< length d
    std::vector<std::string> diffusion;  ///< d*m, row-major
    std::string driver = "0";
    std::string terminal = "0";
    std::string obstacle = "none";
    ObstacleSide side = ObstacleSide::None;
    std::vector<std::vector<double>> controls{{}};  ///< finite control grid U_disc
    std::map<std::string, double, std::less<>> constants;
};

/// Parsed coefficients. Used to build a ControlProblem directly from expressions.
struct ProblemData {
    std::size_t state_dim = 1;
    std::size_t noise_dim = 1;
    double horizon = 1.0;
    std::vector<Expr> drift;      ///< b, length d
    std::vector<Expr> diffusion;  ///< sigma, d*m row-major
    Expr driver;                  ///< f(t,x,y,z,u)
    Expr terminal;                ///< Phi(x)
    std::optional<Expr> obstacle; ///< phi(t,x)
    ObstacleSide side = ObstacleSide::None;
    std::vector<std::vector<double>> controls{{}};
};

/**
 * Controlled forward-backward system with an optional obstacle.
 *
 * Construction validates the invariants: T > 0, d,m >= 1, a nonempty control
 * grid of uniform dimension, coefficient shapes, the variables each coefficient
 * may reference, and a sampled check of Phi >= phi(T,.) (lower) or
 * Phi <= phi(T,.) (upper). Violations throw InputError naming the field.
 */
class ControlProblem {
public:
    explicit ControlProblem(ProblemData data);

    static ControlProblem from_spec(const ProblemSpec& spec);

    std::size_t state_dim() const { return data_.state_dim; }
    std::size_t noise_dim() const { return data_.noise_dim; }
    std::size_t control_dim() const { return data_.controls.front().size(); }
    std::size_t num_controls() const { return data_.controls.size(); }
    double horizon() const { return data_.horizon; }
    ObstacleSide side() const { return data_.side; }
    bool has_obstacle() const { return data_.obstacle.has_value(); }

    const ProblemData& data() const { return data_; }
    std::span<const double> control(std::size_t index) const { return data_.controls.at(index); }

    void eval_drift(double t, std::span<const double> x, std::span<const double> u,
                    std::span<double> out) const;
    /// Writes sigma (d*m, row-major).
    void eval_diffusion(double t, std::span<const double> x, std::span<const double> u,
                        std::span<double> out) const;
    double eval_driver(double t, std::span<const double> x, double y, std::span<const double> z,
                       std::span<const double> u) const;
    double eval_terminal(std::span<const double> x) const;
    /// Throws InputError when the problem has no obstacle.
    double eval_obstacle(double t, std::span<const double> x) const;

    bool coefficients_time_independent() const;
    bool driver_constant() const { return data_.driver.is_constant(); }

    /// Canonical one-line-per-field text; equal problems print equally.
    std::string canonical_text() const;
    std::uint64_t hash() const;

private:
    ProblemData data_;
    bool drift_constant_ = false;
    bool diffusion_constant_ = false;
};

/// Arguments of the Hamiltonian H(t,x,y,p,A,u).
struct HamiltonianInput {
    double t = 0.0;
    std::span<const double> x;
    double y = 0.0;
    std::span<const double> p;  ///< gradient, length d
    std::span<const double> A;  ///< symmetric d*d, row-major
    std::span<const double> u;  ///< control point
};

/// H = 1/2 tr(sigma sigma^T A) + b.p + f(t, x, y, p sigma, u).
double hamiltonian(const ControlProblem& prob, const HamiltonianInput& in);

struct DriverInf {
    double value = 0.0;
    std::size_t control = 0;  ///< first minimizing index
};

/// Minimum of the Hamiltonian over the control grid; ties go to the lowest index.
DriverInf hjb_driver_inf(const ControlProblem& prob, double t, std::span<const double> x, double y,
                         std::span<const double> p, std::span<const double> A);

struct CoefficientDiagnostic {
    std::string name;           ///< "b1", "sigma11", "f", "Phi", "phi"
    double sup = 0.0;           ///< sampled sup-norm on the box
    double sup_wide = 0.0;      ///< sampled sup-norm on the box scaled 2x about its centre
    double lipschitz = 0.0;     ///< sampled difference-quotient estimate
    bool growth_suspected = false;
};

struct AssumptionReport {
    std::vector<CoefficientDiagnostic> coefficients;
    bool terminal_obstacle_ordered = true;  ///< Phi >= phi(T) (lower) / Phi <= phi(T) (upper)
    bool obstacle_constant = false;         ///< phi(t,x) == const on the samples
    std::vector<std::string> warnings;
};

/// Sampled bounds and Lipschitz diagnostics. Advisory only: never throws on violations.
AssumptionReport check_assumptions(const ControlProblem& prob, std::size_t samples, const Box& box,
                                   std::uint64_t seed);

}  // namespace hjblab
