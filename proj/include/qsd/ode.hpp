#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>

namespace qsd {

// Dormand-Prince 5(4) embedded pair with the standard 4th-order dense
// interpolant.  Fixed compile-time dimension keeps the per-step cost flat;
// every solver in this project runs systems of dimension <= 4.

struct OdeOptions {
    double rtol = 1e-10;
    double atol = 1e-12;
    double h_init = 0.0;            // 0 -> automatic
    double h_max = std::numeric_limits<double>::infinity();
    long max_steps = 50'000'000;
};

enum class OdeOutcome { ReachedEnd, StoppedByObserver, StepUnderflow, MaxSteps };

struct OdeStatus {
    OdeOutcome outcome = OdeOutcome::ReachedEnd;
    double x_stop = 0.0;
    long n_steps = 0;
    bool ok() const {
        return outcome == OdeOutcome::ReachedEnd || outcome == OdeOutcome::StoppedByObserver;
    }
};

template <std::size_t N>
struct DenseStep {
    double x0 = 0.0;
    double h = 0.0;
    std::array<std::array<double, N>, 5> rcont{};

    double eval(std::size_t i, double x) const {
        const double th = (x - x0) / h;
        const double th1 = 1.0 - th;
        return rcont[0][i] +
               th * (rcont[1][i] + th1 * (rcont[2][i] + th * (rcont[3][i] + th1 * rcont[4][i])));
    }

    std::array<double, N> eval(double x) const {
        std::array<double, N> out;
        for (std::size_t i = 0; i < N; ++i) out[i] = eval(i, x);
        return out;
    }
};

namespace dopri {
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                        a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                        a64 = 49.0 / 176, a65 = -5103.0 / 18656;
inline constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                        b5 = -2187.0 / 6784, b6 = 11.0 / 84;
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                        e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
inline constexpr double d1 = -12715105075.0 / 11282082432.0;
inline constexpr double d3 = 87487479700.0 / 32700410799.0;
inline constexpr double d4 = -10690763975.0 / 1880347072.0;
inline constexpr double d5 = 701980252875.0 / 199316789632.0;
inline constexpr double d6 = -1453857185.0 / 822651844.0;
inline constexpr double d7 = 69997945.0 / 29380423.0;
}  // namespace dopri

// RHS:      void f(double x, const std::array<double,N>& y, std::array<double,N>& dy)
// Observer: bool obs(const DenseStep<N>& step, std::array<double,N>& y, double x)
//           Called after each accepted step; may rescale y in place (the flow
//           downstream of the step sees the modified state).  Return false to
//           stop the integration.
template <std::size_t N, class RHS, class Observer>
OdeStatus rk45_integrate(RHS&& f, double x0, double x_end, std::array<double, N>& y,
                         const OdeOptions& opt, Observer&& obs) {
    using namespace dopri;
    OdeStatus st;
    const double dir = (x_end >= x0) ? 1.0 : -1.0;
    double x = x0;
    std::array<double, N> k1, k2, k3, k4, k5, k6, k7, ytmp, ynew;

    f(x, y, k1);

    double h = opt.h_init;
    if (h == 0.0) {
        // crude first guess from the scale of y and y'
        double ny = 0.0, nk = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            ny = std::max(ny, std::fabs(y[i]));
            nk = std::max(nk, std::fabs(k1[i]));
        }
        h = (nk > 0.0) ? 0.01 * std::max(ny, 1.0) / nk : 1e-4;
        h = std::min(h, std::fabs(x_end - x0));
        if (h <= 0.0 || !std::isfinite(h)) h = 1e-6;
    }
    h = dir * std::min(h, opt.h_max);

    while (dir * (x_end - x) > 0.0) {
        if (++st.n_steps > opt.max_steps) {
            st.outcome = OdeOutcome::MaxSteps;
            st.x_stop = x;
            return st;
        }
        if (dir * h > dir * (x_end - x)) h = x_end - x;
        if (std::fabs(h) < 1e-14 * (std::fabs(x) + 1.0)) {
            st.outcome = OdeOutcome::StepUnderflow;
            st.x_stop = x;
            return st;
        }

        for (std::size_t i = 0; i < N; ++i) ytmp[i] = y[i] + h * a21 * k1[i];
        f(x + c2 * h, ytmp, k2);
        for (std::size_t i = 0; i < N; ++i) ytmp[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
        f(x + c3 * h, ytmp, k3);
        for (std::size_t i = 0; i < N; ++i)
            ytmp[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
        f(x + c4 * h, ytmp, k4);
        for (std::size_t i = 0; i < N; ++i)
            ytmp[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
        f(x + c5 * h, ytmp, k5);
        for (std::size_t i = 0; i < N; ++i)
            ytmp[i] = y[i] +
                      h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
        f(x + h, ytmp, k6);
        for (std::size_t i = 0; i < N; ++i)
            ynew[i] = y[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
        f(x + h, ynew, k7);

        double errnorm = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double erri = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] +
                                     e6 * k6[i] + e7 * k7[i]);
            const double sc = opt.atol + opt.rtol * std::max(std::fabs(y[i]), std::fabs(ynew[i]));
            const double q = erri / sc;
            errnorm += q * q;
        }
        errnorm = std::sqrt(errnorm / N);

        if (!std::isfinite(errnorm)) {
            h *= 0.25;
            continue;
        }
        if (errnorm > 1.0) {
            h *= std::max(0.2, 0.9 * std::pow(errnorm, -0.2));
            continue;
        }

        DenseStep<N> step;
        step.x0 = x;
        step.h = h;
        for (std::size_t i = 0; i < N; ++i) {
            const double ydiff = ynew[i] - y[i];
            const double bspl = h * k1[i] - ydiff;
            step.rcont[0][i] = y[i];
            step.rcont[1][i] = ydiff;
            step.rcont[2][i] = bspl;
            step.rcont[3][i] = ydiff - h * k7[i] - bspl;
            step.rcont[4][i] = h * (d1 * k1[i] + d3 * k3[i] + d4 * k4[i] + d5 * k5[i] +
                                    d6 * k6[i] + d7 * k7[i]);
        }

        x += h;
        y = ynew;
        k1 = k7;  // FSAL

        if (!obs(step, y, x)) {
            st.outcome = OdeOutcome::StoppedByObserver;
            st.x_stop = x;
            return st;
        }
        // If the observer rescaled the state, k1 must follow (the system is
        // linear in every place we do this; derivative scales identically).
        if (y != ynew) {
            double s = 0.0;
            for (std::size_t i = 0; i < N; ++i)
                if (ynew[i] != 0.0) { s = y[i] / ynew[i]; break; }
            if (s != 0.0)
                for (std::size_t i = 0; i < N; ++i) k1[i] *= s;
            else
                f(x, y, k1);
        }

        const double fac = std::max(0.2, std::min(5.0, 0.9 * std::pow(std::max(errnorm, 1e-10), -0.2)));
        h *= fac;
        if (std::fabs(h) > opt.h_max) h = dir * opt.h_max;
    }
    st.outcome = OdeOutcome::ReachedEnd;
    st.x_stop = x;
    return st;
}

// Bisection on a continuous scalar function with a sign change on [a, b].
double bisect_root(const std::function<double(double)>& f, double a, double b,
                   double fa, double fb, double xtol, int max_iter = 200);

}  // namespace qsd
