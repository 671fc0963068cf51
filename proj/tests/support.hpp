#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "hjblab/problem.hpp"
#include "hjblab/scenario.hpp"

namespace hjblab::test {

inline std::string scenario_path(const std::string& name) {
    return std::string(HJBLAB_SCENARIO_DIR) + "/" + name;
}

/// Builds a problem from the body of a [problem] section.
inline ControlProblem problem_from(const std::string& body) {
    return parse_scenario("[problem]\n" + body, "<test>").problem;
}

inline std::filesystem::path temp_dir(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() / ("hjblab_test_" + tag);
    std::filesystem::create_directories(dir);
    return dir;
}

// Reference values computed independently of the library.

/// Composite Simpson rule for g on [a, b] with n (even) panels.
template <class G>
double simpson(G g, double a, double b, int n) {
    const double h = (b - a) / n;
    double sum = g(a) + g(b);
    for (int i = 1; i < n; ++i) sum += (i % 2 ? 4.0 : 2.0) * g(a + h * i);
    return sum * h / 3.0;
}

/// E|N(mu, var)| by Simpson quadrature on each side of the kink at 0.
inline double gauss_abs_mean(double mu, double var) {
    if (var <= 0.0) return std::fabs(mu);
    const double sd = std::sqrt(var);
    const double norm = 1.0 / (sd * std::sqrt(2.0 * M_PI));
    const auto density = [&](double x) { return std::fabs(x) * norm * std::exp(-0.5 * (x - mu) * (x - mu) / var); };
    const double a = std::min(mu - 12.0 * sd, 0.0);
    const double b = std::max(mu + 12.0 * sd, 0.0);
    return simpson(density, a, 0.0, 20000) + simpson(density, 0.0, b, 20000);
}

inline double ex2_1_value(double t, double x, double T = 1.0) { return gauss_abs_mean(x, T - t); }

inline double ex3_1_value(double t, double T = 2.0) { return std::max(1.0 - (T - t), 0.0); }

inline double smooth_upper_value(double t, double x, double T = 1.0) { return std::exp(-(T - t)) * std::cos(x); }

inline double reach_value(double t, double x, double T = 1.0) {
    return std::min(std::max(std::fabs(x) - (T - t), 0.0), 2.0);
}

}  // namespace hjblab::test
