#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qsd/expr.hpp"

namespace qsd {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Which form of the drift the unit-diffusion reduction uses.  Ito is the
// default; Printed reproduces the b/sigma - sigma' variant for comparison.
enum class DriftForm { Ito, Printed };

// User-facing diffusion on (l, r): dX = sigma(X) dW + b(X) dt, killed at
// rate kappa(X), boundary parameter p0 at the left endpoint (p0 = 1 full
// reflection, p0 = 0 full absorption) and optionally pr at a finite right
// endpoint.
struct DiffusionSpec {
    ExprPtr sigma, sigma_d1, sigma_d2;
    ExprPtr drift_b, drift_b_d1;
    ExprPtr kappa;
    double domain_left = 0.0;
    double domain_right = 0.0;  // +inf allowed
    double p0 = 1.0;
    std::optional<double> pr;
    double x0 = 0.0;  // base point of the scale transform
    DriftForm drift_form = DriftForm::Ito;
};

// Cumulative antiderivative B(y) = 2 * int_base^y bdrift(z) dz, evaluated
// from a lazily extended knot table plus a 5-point Gauss panel from the
// nearest knot.  Thread-safe.
class CumulativeB {
public:
    CumulativeB(std::function<double(double)> drift, double base);
    double operator()(double y) const;
    double base() const { return base_; }

private:
    void extend_to(double y) const;
    std::function<double(double)> drift_;
    double base_;
    mutable std::vector<double> knot_y_, knot_B_;   // knot_y_ ascending, starts at base
    mutable std::vector<double> knot_y_lo_, knot_B_lo_;  // below base, descending
    mutable std::mutex mu_;
};

// Strictly increasing map y = F(x) with tabulated inverse.
class ForwardMap {
public:
    // identity
    ForwardMap() = default;
    // tabulated from knots (ascending in both coordinates)
    ForwardMap(std::vector<double> x_knots, std::vector<double> y_knots,
               std::function<double(double)> dydx);
    double forward(double x) const;
    double inverse(double y) const;
    bool is_identity() const { return x_.empty(); }

private:
    std::vector<double> x_, y_;
    std::function<double(double)> dydx_;  // = 1/sigma(x)
};

// Normalized model with unit diffusion coefficient on (0, y_end).
struct UnitDiffusionModel {
    std::function<double(double)> drift;        // bdrift(y)
    std::function<double(double)> drift_prime;  // bdrift'(y)
    std::function<double(double)> kappa;        // killing rate
    double y_end = 0.0;                         // +inf allowed
    double p0 = 1.0;
    std::optional<double> pr;
    bool kappa_identically_zero = false;
    std::shared_ptr<const CumulativeB> B;
    std::shared_ptr<const ForwardMap> map;

    double B_at(double y) const { return (*B)(y); }
};

enum class Side { Left, Right };
enum class FellerClass { Regular, Exit, Entrance, Natural, Inconclusive };

enum class IntegralVerdict { Finite, Divergent, Inconclusive };
struct FellerIntegral {
    IntegralVerdict verdict = IntegralVerdict::Inconclusive;
    double value = 0.0;  // partial accumulation (lower bound when divergent)
};

struct BoundaryClass {
    Side side = Side::Left;
    FellerClass cls = FellerClass::Inconclusive;
    FellerIntegral sigma_integral;  // outer scale density (finite <=> boundary attainable)
    FellerIntegral nu_integral;     // outer speed density (finite <=> boundary can be entered from)
};

struct LpPrimeReport {
    bool holds = false;
    bool kappa_zero = false;
    double min_value = 0.0;
    double min_at = 0.0;
};

enum class GbVariant { None, GBPrime, GBDoublePrime, MonotoneKappa };

struct ConditionReport {
    bool lp_prime_holds = false;
    GbVariant gb_variant = GbVariant::None;
    std::optional<double> kappa_star, b_star, b_starstar, beta_exponent;
    double threshold_y = 1.0;
};

DiffusionSpec parse_model(const std::string& config_text);
DiffusionSpec parse_model_file(const std::string& path);
std::string unparse_model(const DiffusionSpec& spec);

UnitDiffusionModel to_unit_diffusion(const DiffusionSpec& spec);
UnitDiffusionModel to_unit_diffusion(const DiffusionSpec& spec, double x0);

// Assemble a unit-diffusion model directly from callables (tests and the
// transformed-model entry points use this; no sigma reduction involved).
UnitDiffusionModel make_unit_model(std::function<double(double)> drift,
                                   std::function<double(double)> drift_prime,
                                   std::function<double(double)> kappa, double y_end, double p0,
                                   std::optional<double> pr = std::nullopt,
                                   bool kappa_zero = false,
                                   std::optional<double> B_base = std::nullopt);

BoundaryClass classify_boundary(const UnitDiffusionModel& model, Side side,
                                long eval_budget = 10000);

LpPrimeReport check_lp_prime(const UnitDiffusionModel& model, double y_max = 1e3);

ConditionReport check_gb(const UnitDiffusionModel& model, double y_max = 1e3);

// Geometric grid used by the asymptotic condition checks.
std::vector<double> geometric_grid(double lo, double hi, int n);

}  // namespace qsd
