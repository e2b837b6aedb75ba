#pragma once

#include <functional>

namespace qsd {

struct QuadResult {
    double value = 0.0;
    double error = 0.0;        // estimated absolute error
    long n_evals = 0;
    bool converged = false;
};

// Adaptive Gauss-Kronrod 15(7) on [a, b].
QuadResult integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                              double abs_tol, double rel_tol, long max_evals = 100000);

// Single non-adaptive GK15 panel; cheap building block for windowed scans.
QuadResult gk15(const std::function<double(double)>& f, double a, double b);

}  // namespace qsd
