#include "qsd/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "qsd/ode.hpp"
#include "qsd/quad.hpp"

namespace qsd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 5-point Gauss-Legendre on [a, b]
double gauss5(const std::function<double(double)>& f, double a, double b) {
    static const double x[2] = {0.5384693101056831, 0.9061798459386640};
    static const double w[3] = {0.5688888888888889, 0.4786286704993665, 0.2369268850561891};
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    double s = w[0] * f(c);
    s += w[1] * (f(c - h * x[0]) + f(c + h * x[0]));
    s += w[2] * (f(c - h * x[1]) + f(c + h * x[1]));
    return s * h;
}

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<double> geometric_grid(double lo, double hi, int n) {
    std::vector<double> g(n);
    const double ratio = std::log(hi / lo) / (n - 1);
    for (int i = 0; i < n; ++i) g[i] = lo * std::exp(ratio * i);
    g.front() = lo;
    g.back() = hi;
    return g;
}

// ---------------------------------------------------------------------------
// CumulativeB
// ---------------------------------------------------------------------------

CumulativeB::CumulativeB(std::function<double(double)> drift, double base)
    : drift_(std::move(drift)), base_(base) {
    knot_y_.push_back(base);
    knot_B_.push_back(0.0);
    knot_y_lo_.push_back(base);
    knot_B_lo_.push_back(0.0);
}

void CumulativeB::extend_to(double y) const {
    auto twob = [this](double z) { return 2.0 * drift_(z); };
    if (y > knot_y_.back()) {
        while (knot_y_.back() < y) {
            const double last = knot_y_.back();
            const double h = std::max(1.0 / 64.0, (last - base_) / 256.0);
            const double next = last + h;
            knot_B_.push_back(knot_B_.back() + gauss5(twob, last, next));
            knot_y_.push_back(next);
        }
    }
    if (y < knot_y_lo_.back()) {
        while (knot_y_lo_.back() > y) {
            const double last = knot_y_lo_.back();
            const double h = std::max(1.0 / 64.0, (base_ - last) / 256.0);
            const double next = last - h;
            knot_B_lo_.push_back(knot_B_lo_.back() + gauss5(twob, last, next));
            knot_y_lo_.push_back(next);
        }
    }
}

double CumulativeB::operator()(double y) const {
    std::lock_guard<std::mutex> lock(mu_);
    extend_to(y);
    auto twob = [this](double z) { return 2.0 * drift_(z); };
    if (y >= base_) {
        auto it = std::upper_bound(knot_y_.begin(), knot_y_.end(), y);
        size_t k = (it == knot_y_.begin()) ? 0 : (it - knot_y_.begin() - 1);
        return knot_B_[k] + gauss5(twob, knot_y_[k], y);
    }
    auto it = std::upper_bound(knot_y_lo_.begin(), knot_y_lo_.end(), y, std::greater<double>());
    size_t k = (it == knot_y_lo_.begin()) ? 0 : (it - knot_y_lo_.begin() - 1);
    return knot_B_lo_[k] + gauss5(twob, knot_y_lo_[k], y);
}

// ---------------------------------------------------------------------------
// ForwardMap
// ---------------------------------------------------------------------------

ForwardMap::ForwardMap(std::vector<double> x_knots, std::vector<double> y_knots,
                       std::function<double(double)> dydx)
    : x_(std::move(x_knots)), y_(std::move(y_knots)), dydx_(std::move(dydx)) {}

double ForwardMap::forward(double x) const {
    if (is_identity()) return x;
    if (x <= x_.front()) return y_.front() + dydx_(x_.front()) * (x - x_.front());
    if (x >= x_.back()) return y_.back() + dydx_(x_.back()) * (x - x_.back());
    auto it = std::upper_bound(x_.begin(), x_.end(), x);
    size_t k = it - x_.begin() - 1;
    return y_[k] + gauss5(dydx_, x_[k], x);
}

double ForwardMap::inverse(double y) const {
    if (is_identity()) return y;
    if (y <= y_.front()) return x_.front() + (y - y_.front()) / dydx_(x_.front());
    if (y >= y_.back()) return x_.back() + (y - y_.back()) / dydx_(x_.back());
    auto it = std::upper_bound(y_.begin(), y_.end(), y);
    size_t k = it - y_.begin() - 1;
    // Newton from the bracket midpoint; forward() is smooth and monotone.
    double x = 0.5 * (x_[k] + x_[k + 1]);
    for (int i = 0; i < 50; ++i) {
        const double fy = forward(x) - y;
        const double step = fy / dydx_(x);
        x -= step;
        x = std::min(std::max(x, x_[k]), x_[k + 1]);
        if (std::fabs(step) < 1e-14 * (1.0 + std::fabs(x))) break;
    }
    return x;
}

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

namespace {

struct RawEntry {
    std::string value;
    int line = 0;
    int col = 0;  // 1-based column of the value start
    bool quoted = false;
};

double parse_number(const RawEntry& e, const char* key) {
    char* end = nullptr;
    const double v = std::strtod(e.value.c_str(), &end);
    if (end == e.value.c_str() || *end != '\0')
        throw ParseError(std::string("key '") + key + "' expects a number, got '" + e.value + "'",
                         e.line, e.col);
    return v;
}

}  // namespace

DiffusionSpec parse_model(const std::string& config_text) {
    std::map<std::string, RawEntry> entries;
    std::istringstream in(config_text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        // strip comment (quotes in expressions never contain '#')
        bool in_quote = false;
        for (size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') in_quote = !in_quote;
            if (line[i] == '#' && !in_quote) {
                line = line.substr(0, i);
                break;
            }
        }
        if (trim(line).empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError("expected 'key = value'", lineno, 1);
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw ParseError("empty key", lineno, 1);
        std::string raw = line.substr(eq + 1);
        const size_t vstart = raw.find_first_not_of(" \t");
        RawEntry entry;
        entry.line = lineno;
        entry.col = static_cast<int>(eq + 2 + (vstart == std::string::npos ? 0 : vstart));
        std::string value = trim(raw);
        if (value.size() >= 2 && value.front() == '"') {
            if (value.back() != '"')
                throw ParseError("unterminated quoted value", lineno, entry.col);
            entry.quoted = true;
            entry.col += 1;
            value = value.substr(1, value.size() - 2);
        }
        entry.value = value;
        if (entries.count(key))
            throw ParseError("duplicate key '" + key + "'", lineno, 1);
        entries[key] = entry;
    }

    static const char* known[] = {"sigma", "b", "kappa", "r", "l", "p0", "pr", "x0", "drift_form"};
    for (const auto& [key, e] : entries) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw ParseError("unknown key '" + key + "'", e.line, 1);
    }
    for (const char* req : {"sigma", "b", "kappa", "r", "p0"})
        if (!entries.count(req))
            throw ParseError(std::string("missing required key '") + req + "'", lineno, 1);

    DiffusionSpec spec;
    auto expr_of = [&](const char* key) {
        const RawEntry& e = entries.at(key);
        return parse_expression(e.value, e.line, e.col);
    };
    spec.sigma = expr_of("sigma");
    spec.drift_b = expr_of("b");
    spec.kappa = expr_of("kappa");
    spec.sigma_d1 = spec.sigma->derivative();
    spec.sigma_d2 = spec.sigma_d1->derivative();
    spec.drift_b_d1 = spec.drift_b->derivative();

    {
        const RawEntry& e = entries.at("r");
        if (e.value == "inf" || e.value == "Inf" || e.value == "INF")
            spec.domain_right = kInf;
        else
            spec.domain_right = parse_number(e, "r");
    }
    spec.domain_left = entries.count("l") ? parse_number(entries.at("l"), "l") : 0.0;
    spec.p0 = parse_number(entries.at("p0"), "p0");
    if (entries.count("pr")) spec.pr = parse_number(entries.at("pr"), "pr");
    spec.x0 = entries.count("x0") ? parse_number(entries.at("x0"), "x0") : spec.domain_left;
    if (entries.count("drift_form")) {
        const RawEntry& e = entries.at("drift_form");
        if (e.value == "ito") spec.drift_form = DriftForm::Ito;
        else if (e.value == "printed") spec.drift_form = DriftForm::Printed;
        else throw ParseError("drift_form must be 'ito' or 'printed'", e.line, e.col);
    }

    // --- validation ---
    const double l = spec.domain_left, r = spec.domain_right;
    if (!(r > l)) throw ConfigError("domain_right must exceed domain_left");
    if (r <= 0.0) throw ConfigError("domain_right must be positive");
    if (spec.p0 < 0.0 || spec.p0 > 1.0) throw ConfigError("p0 must lie in [0, 1]");
    if (spec.pr) {
        if (!std::isfinite(r)) throw ConfigError("pr is only meaningful for a finite right endpoint");
        if (*spec.pr < 0.0 || *spec.pr > 1.0) throw ConfigError("pr must lie in [0, 1]");
    }
    if (spec.x0 < l || spec.x0 >= r) throw ConfigError("x0 must lie in [l, r)");

    std::vector<double> grid;
    if (std::isfinite(r)) {
        for (int i = 0; i < 512; ++i) grid.push_back(l + (r - l) * (i + 0.5) / 512.0);
    } else {
        for (double off : geometric_grid(1e-4, 1e4, 512)) grid.push_back(l + off);
    }
    for (double x : grid) {
        const double s = spec.sigma->eval(x);
        if (!(s > 0.0))
            throw ConfigError("sigma must be positive on the domain interior (sigma(" +
                              std::to_string(x) + ") = " + std::to_string(s) + ")");
        const double k = spec.kappa->eval(x);
        if (k < 0.0)
            throw ConfigError("kappa must be nonnegative on the domain interior (kappa(" +
                              std::to_string(x) + ") = " + std::to_string(k) + ")");
    }
    return spec;
}

DiffusionSpec parse_model_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_model(ss.str());
}

std::string unparse_model(const DiffusionSpec& spec) {
    std::ostringstream out;
    char buf[40];
    auto num = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    out << "sigma = \"" << spec.sigma->to_string() << "\"\n";
    out << "b = \"" << spec.drift_b->to_string() << "\"\n";
    out << "kappa = \"" << spec.kappa->to_string() << "\"\n";
    out << "r = " << (std::isfinite(spec.domain_right) ? num(spec.domain_right) : "inf") << "\n";
    out << "l = " << num(spec.domain_left) << "\n";
    out << "p0 = " << num(spec.p0) << "\n";
    if (spec.pr) out << "pr = " << num(*spec.pr) << "\n";
    out << "x0 = " << num(spec.x0) << "\n";
    out << "drift_form = " << (spec.drift_form == DriftForm::Ito ? "ito" : "printed") << "\n";
    return out.str();
}

// ---------------------------------------------------------------------------
// Unit-diffusion reduction
// ---------------------------------------------------------------------------

namespace {

std::shared_ptr<const CumulativeB> make_B(const std::function<double(double)>& drift,
                                          double y_end, std::optional<double> base_hint) {
    double base = 0.0;
    if (base_hint) {
        base = *base_hint;
    } else {
        // B is anchored at 0 when the drift is integrable there; otherwise at
        // an interior point (only boundary classification sees such models).
        const double probe = drift(1e-8);
        if (!std::isfinite(probe) || std::fabs(probe) > 1e7)
            base = std::isfinite(y_end) ? 0.5 * y_end : 1.0;
    }
    return std::make_shared<CumulativeB>(drift, base);
}

}  // namespace

UnitDiffusionModel make_unit_model(std::function<double(double)> drift,
                                   std::function<double(double)> drift_prime,
                                   std::function<double(double)> kappa, double y_end, double p0,
                                   std::optional<double> pr, bool kappa_zero,
                                   std::optional<double> B_base) {
    UnitDiffusionModel m;
    m.drift = std::move(drift);
    m.drift_prime = std::move(drift_prime);
    m.kappa = std::move(kappa);
    m.y_end = y_end;
    m.p0 = p0;
    m.pr = pr;
    m.kappa_identically_zero = kappa_zero;
    m.B = make_B(m.drift, y_end, B_base);
    m.map = std::make_shared<ForwardMap>();
    return m;
}

UnitDiffusionModel to_unit_diffusion(const DiffusionSpec& spec) {
    return to_unit_diffusion(spec, spec.x0);
}

UnitDiffusionModel to_unit_diffusion(const DiffusionSpec& spec, double x0) {
    const double l = spec.domain_left, r = spec.domain_right;
    if (x0 < l || x0 >= r) throw ConfigError("x0 must lie in [l, r)");

    double sigma_const;
    const bool identity_sigma = spec.sigma->is_constant(&sigma_const) && sigma_const == 1.0;

    UnitDiffusionModel m;
    m.p0 = spec.p0;
    m.pr = spec.pr;

    // kappa == 0 detection: literal zero, else numeric on a validation grid
    bool kzero = spec.kappa->is_literal_zero();
    if (!kzero) {
        double kmax = 0.0;
        const double hi = std::isfinite(r) ? r : l + 1e4;
        for (double x : geometric_grid(1e-4, hi - l, 256))
            kmax = std::max(kmax, std::fabs(spec.kappa->eval(l + x)));
        kzero = kmax < 1e-14;
    }
    m.kappa_identically_zero = kzero;

    if (identity_sigma) {
        // F(x) = x - x0; domain shifts so the left endpoint is 0.
        const ExprPtr b = spec.drift_b, bd = spec.drift_b_d1, k = spec.kappa;
        m.drift = [b, l](double y) { return b->eval(y + l); };
        m.drift_prime = [bd, l](double y) { return bd->eval(y + l); };
        m.kappa = [k, l](double y) { return k->eval(y + l); };
        m.y_end = std::isfinite(r) ? r - l : kInf;
        std::vector<double> xs = {l, std::isfinite(r) ? r : l + 1.0};
        if (l == 0.0) {
            m.map = std::make_shared<ForwardMap>();
        } else {
            std::vector<double> ys = {0.0, xs[1] - l};
            m.map = std::make_shared<ForwardMap>(xs, ys, [](double) { return 1.0; });
        }
        m.B = make_B(m.drift, m.y_end, std::nullopt);
        return m;
    }

    // General sigma: build F(x) = int_{x0}^x du/sigma(u) by quadrature knots.
    const ExprPtr sig = spec.sigma;
    auto dydx = [sig](double x) {
        const double s = sig->eval(x);
        if (!(s > 0.0) || !std::isfinite(s))
            throw NumericalError("sigma not positive during transform at x = " + std::to_string(x));
        return 1.0 / s;
    };

    std::vector<double> xs, ys;
    xs.push_back(x0);
    ys.push_back(0.0);
    // upward sweep
    {
        std::array<double, 1> y = {0.0};
        OdeOptions opt;
        opt.rtol = 1e-11;
        opt.atol = 1e-13;
        const double x_cap = std::isfinite(r) ? r : std::min(1e12, x0 + 1e12);
        auto rhs = [&dydx](double x, const std::array<double, 1>&, std::array<double, 1>& dy) {
            dy[0] = dydx(x);
        };
        auto obs = [&](const DenseStep<1>&, std::array<double, 1>& st, double x) {
            xs.push_back(x);
            ys.push_back(st[0]);
            return st[0] < 1e7;  // far enough to call the endpoint infinite
        };
        rk45_integrate<1>(rhs, x0, x_cap, y, opt, obs);
    }
    double F_r = ys.back();
    const bool r_infinite = !std::isfinite(r) || F_r >= 1e7;

    // downward sweep to the left endpoint
    std::vector<double> xs_lo, ys_lo;
    double F_l = 0.0;
    if (x0 > l) {
        std::array<double, 1> y = {0.0};
        OdeOptions opt;
        opt.rtol = 1e-11;
        opt.atol = 1e-13;
        auto rhs = [&dydx](double x, const std::array<double, 1>&, std::array<double, 1>& dy) {
            dy[0] = dydx(x);
        };
        auto obs = [&](const DenseStep<1>&, std::array<double, 1>& st, double x) {
            xs_lo.push_back(x);
            ys_lo.push_back(st[0]);
            return st[0] > -1e7;
        };
        OdeStatus st = rk45_integrate<1>(rhs, x0, l, y, opt, obs);
        F_l = ys_lo.empty() ? 0.0 : ys_lo.back();
        if (F_l <= -1e7 || !st.ok())
            throw NumericalError(
                "unit-diffusion transform sends the left endpoint to -infinity; "
                "the left boundary would not be regular");
    }

    // merge knots ascending and shift so that F(l) = 0
    std::vector<double> X, Y;
    for (size_t i = xs_lo.size(); i-- > 0;) {
        X.push_back(xs_lo[i]);
        Y.push_back(ys_lo[i] - F_l);
    }
    for (size_t i = 0; i < xs.size(); ++i) {
        X.push_back(xs[i]);
        Y.push_back(ys[i] - F_l);
    }
    auto map = std::make_shared<ForwardMap>(X, Y, dydx);
    m.map = map;
    m.y_end = r_infinite ? kInf : F_r - F_l;

    const ExprPtr b = spec.drift_b, bd = spec.drift_b_d1;
    const ExprPtr s0 = spec.sigma, s1 = spec.sigma_d1, s2 = spec.sigma_d2;
    const ExprPtr kap = spec.kappa;
    const double half = spec.drift_form == DriftForm::Ito ? 0.5 : 1.0;

    m.drift = [map, b, s0, s1, half](double y) {
        const double x = map->inverse(y);
        return b->eval(x) / s0->eval(x) - half * s1->eval(x);
    };
    m.drift_prime = [map, b, bd, s0, s1, s2, half](double y) {
        const double x = map->inverse(y);
        const double s = s0->eval(x);
        const double G1 = (bd->eval(x) * s - b->eval(x) * s1->eval(x)) / (s * s) -
                          half * s2->eval(x);
        return G1 * s;  // chain rule through x = F^{-1}(y)
    };
    m.kappa = [map, kap](double y) { return kap->eval(map->inverse(y)); };
    m.B = make_B(m.drift, m.y_end, std::nullopt);
    return m;
}

// ---------------------------------------------------------------------------
// Feller boundary classification
// ---------------------------------------------------------------------------

namespace {

struct ScanState {
    double LM = 0.0, LS = 0.0;  // log of accumulated speed / scale mass from c
    double Sg = 0.0, Nu = 0.0;  // the two iterated Feller integrals
};

}  // namespace

BoundaryClass classify_boundary(const UnitDiffusionModel& model, Side side, long eval_budget) {
    BoundaryClass out;
    out.side = side;

    const double y_end = model.y_end;
    double c = std::isfinite(y_end) ? 0.5 * y_end : 1.0;

    // position as a function of the scan coordinate u >= 0
    const bool toward_right = side == Side::Right;
    const double U_total = toward_right ? (std::isfinite(y_end) ? y_end - c : kInf) : c;

    long evals = 0;
    auto Bat = [&](double u) {
        ++evals;
        const double pos = toward_right ? c + u : c - u;
        return model.B_at(pos);
    };

    // Seed with a short panel so the log-space state starts finite.
    const double u0 = std::isfinite(U_total) ? std::min(1e-6, 1e-6 * U_total) : 1e-6;
    double M0 = 0.0, S0 = 0.0;
    {
        auto eB = [&](double u) { return std::exp(std::min(Bat(u), 700.0)); };
        auto eMB = [&](double u) { return std::exp(std::min(-Bat(u), 700.0)); };
        M0 = gk15(eB, 0.0, u0).value;
        S0 = gk15(eMB, 0.0, u0).value;
    }

    std::array<double, 4> state = {std::log(M0), std::log(S0), 0.0, 0.0};

    auto rhs = [&](double u, const std::array<double, 4>& s, std::array<double, 4>& ds) {
        const double B = Bat(u);
        ds[0] = std::exp(std::min(B - s[0], 700.0));
        ds[1] = std::exp(std::min(-B - s[1], 700.0));
        ds[2] = std::exp(std::min(s[0] - B, 700.0));
        ds[3] = std::exp(std::min(s[1] + B, 700.0));
    };

    const double kDivergenceCap = 1e12;
    bool sg_resolved = false, nu_resolved = false;
    IntegralVerdict sg_verdict = IntegralVerdict::Inconclusive;
    IntegralVerdict nu_verdict = IntegralVerdict::Inconclusive;

    double prev_dSg = kInf, prev_dNu = kInf;
    int sg_flat = 0, nu_flat = 0;

    const int kMaxWindows = 45;
    double u_lo = u0;
    bool aborted = false;
    for (int k = 0; k < kMaxWindows && !(sg_resolved && nu_resolved); ++k) {
        double u_hi;
        if (std::isfinite(U_total))
            u_hi = U_total * (1.0 - std::pow(0.5, k + 1));
        else
            u_hi = c * (std::pow(2.0, k + 1) - 1.0);
        if (u_hi <= u_lo) continue;

        const double Sg_start = state[2], Nu_start = state[3];
        OdeOptions opt;
        opt.rtol = 1e-8;
        opt.atol = 1e-14;
        opt.max_steps = 100000;
        auto obs = [&](const DenseStep<4>&, std::array<double, 4>& s, double) {
            if (evals > eval_budget) return false;
            return s[2] < kDivergenceCap && s[3] < kDivergenceCap;
        };
        OdeStatus st = rk45_integrate<4>(rhs, u_lo, u_hi, state, opt, obs);

        if (state[2] >= kDivergenceCap && !sg_resolved) {
            sg_verdict = IntegralVerdict::Divergent;
            sg_resolved = true;
        }
        if (state[3] >= kDivergenceCap && !nu_resolved) {
            nu_verdict = IntegralVerdict::Divergent;
            nu_resolved = true;
        }
        if (evals > eval_budget) break;
        if (st.outcome == OdeOutcome::StepUnderflow || st.outcome == OdeOutcome::MaxSteps) {
            aborted = true;
            break;
        }
        if (sg_resolved && nu_resolved) break;

        const double dSg = state[2] - Sg_start;
        const double dNu = state[3] - Nu_start;
        if (!sg_resolved) {
            if (dSg < std::max(1e-13, 1e-10 * state[2]) && prev_dSg < std::max(1e-13, 1e-10 * state[2])) {
                sg_verdict = IntegralVerdict::Finite;
                sg_resolved = true;
            }
            sg_flat = (dSg >= 0.9 * prev_dSg && k >= 2) ? sg_flat + 1 : 0;
            if (sg_flat >= 8 && state[2] > 0) {
                // window contributions not decaying over doubling/halving windows
                sg_verdict = IntegralVerdict::Divergent;
                sg_resolved = true;
            }
            prev_dSg = dSg;
        }
        if (!nu_resolved) {
            if (dNu < std::max(1e-13, 1e-10 * state[3]) && prev_dNu < std::max(1e-13, 1e-10 * state[3])) {
                nu_verdict = IntegralVerdict::Finite;
                nu_resolved = true;
            }
            nu_flat = (dNu >= 0.9 * prev_dNu && k >= 2) ? nu_flat + 1 : 0;
            if (nu_flat >= 8 && state[3] > 0) {
                nu_verdict = IntegralVerdict::Divergent;
                nu_resolved = true;
            }
            prev_dNu = dNu;
        }
        u_lo = u_hi;
    }
    (void)aborted;

    out.sigma_integral.verdict = sg_verdict;
    out.sigma_integral.value = state[2];
    out.nu_integral.verdict = nu_verdict;
    out.nu_integral.value = state[3];

    if (sg_verdict == IntegralVerdict::Inconclusive || nu_verdict == IntegralVerdict::Inconclusive) {
        out.cls = FellerClass::Inconclusive;
    } else {
        const bool sg_fin = sg_verdict == IntegralVerdict::Finite;
        const bool nu_fin = nu_verdict == IntegralVerdict::Finite;
        if (sg_fin && nu_fin) out.cls = FellerClass::Regular;
        else if (sg_fin) out.cls = FellerClass::Exit;
        else if (nu_fin) out.cls = FellerClass::Entrance;
        else out.cls = FellerClass::Natural;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Asymptotic condition checks
// ---------------------------------------------------------------------------

namespace {

// least-squares slope of v against ln(y) over the tail y >= y_from
double tail_slope(const std::vector<double>& ys, const std::vector<double>& vs, double y_from) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (size_t i = 0; i < ys.size(); ++i) {
        if (ys[i] < y_from || !std::isfinite(vs[i])) continue;
        const double x = std::log(ys[i]);
        sx += x;
        sy += vs[i];
        sxx += x * x;
        sxy += x * vs[i];
        ++n;
    }
    if (n < 4) return 0.0;
    const double det = n * sxx - sx * sx;
    if (det == 0.0) return 0.0;
    return (n * sxy - sx * sy) / det;
}

// A fitted max-ratio constant is only meaningful if the ratio is not still
// climbing at the end of the grid.
bool trend_bounded(const std::vector<double>& ys, const std::vector<double>& ratio, double y_max) {
    double vmax = 0.0;
    double arg = ys.front();
    for (size_t i = 0; i < ys.size(); ++i) {
        if (!std::isfinite(ratio[i])) return false;
        if (ratio[i] > vmax) {
            vmax = ratio[i];
            arg = ys[i];
        }
    }
    if (arg < 0.5 * y_max) return true;
    const double s = tail_slope(ys, ratio, y_max / 10.0);
    return s <= 1e-3 * (1.0 + std::fabs(vmax));
}

}  // namespace

LpPrimeReport check_lp_prime(const UnitDiffusionModel& model, double y_max) {
    LpPrimeReport rep;
    const std::vector<double> grid = geometric_grid(1.0, y_max, 2048);

    double kmax = 0.0;
    std::vector<double> m(grid.size());
    for (size_t i = 0; i < grid.size(); ++i) {
        const double z = grid[i];
        const double b = model.drift(z);
        const double bp = model.drift_prime(z);
        const double k = model.kappa(z);
        kmax = std::max(kmax, std::fabs(k));
        m[i] = (b * b + bp + 2.0 * k) / (z * z);
    }
    rep.kappa_zero = model.kappa_identically_zero || kmax < 1e-14;

    size_t imin = 0;
    for (size_t i = 1; i < grid.size(); ++i)
        if (m[i] < m[imin]) imin = i;
    rep.min_value = m[imin];
    rep.min_at = grid[imin];

    if (rep.kappa_zero) {
        rep.holds = true;
        return rep;
    }

    const double kFloor = -1e8;
    bool min_in_tail = grid[imin] >= y_max / 10.0;
    double slope = tail_slope(grid, m, y_max / 10.0);
    const bool diving = min_in_tail && slope < -0.1 * std::max(1.0, std::fabs(rep.min_value)) &&
                        rep.min_value < 0.0;
    rep.holds = std::isfinite(rep.min_value) && rep.min_value > kFloor && !diving;
    return rep;
}

ConditionReport check_gb(const UnitDiffusionModel& model, double y_max) {
    ConditionReport rep;
    rep.lp_prime_holds = check_lp_prime(model, y_max).holds;
    rep.threshold_y = 1.0;

    const std::vector<double> grid = geometric_grid(1.0, y_max, 2048);
    std::vector<double> kv(grid.size()), bv(grid.size()), bpv(grid.size());
    for (size_t i = 0; i < grid.size(); ++i) {
        kv[i] = model.kappa(grid[i]);
        bv[i] = model.drift(grid[i]);
        bpv[i] = model.drift_prime(grid[i]);
    }

    // Monotone killing with full reflection: omega_t <= 1 by coupling.
    if (model.p0 == 1.0) {
        bool monotone = true;
        for (size_t i = 1; i < grid.size() && monotone; ++i)
            monotone = kv[i] >= kv[i - 1] - 1e-12 * (1.0 + std::fabs(kv[i - 1]));
        if (monotone) {
            rep.gb_variant = GbVariant::MonotoneKappa;
            return rep;
        }
    }

    std::vector<double> rk(grid.size()), rb(grid.size()), rb_pos(grid.size()), rb2(grid.size());
    for (size_t i = 0; i < grid.size(); ++i) {
        rk[i] = kv[i] / grid[i];
        rb[i] = std::fabs(bv[i]) / grid[i];
        rb_pos[i] = std::max(bv[i], 0.0) / grid[i];
        rb2[i] = bpv[i] / (grid[i] * grid[i]);
    }
    auto vmax = [](const std::vector<double>& v) {
        double m = -kInf;
        for (double x : v) m = std::max(m, x);
        return m;
    };

    const double kappa_star = vmax(rk);
    if (std::isfinite(kappa_star) && trend_bounded(grid, rk, y_max)) {
        const double b_star = vmax(rb);
        if (std::isfinite(b_star) && trend_bounded(grid, rb, y_max)) {
            rep.gb_variant = GbVariant::GBPrime;
            rep.kappa_star = std::max(kappa_star, 0.0);
            rep.b_star = std::max(b_star, 0.0);
            return rep;
        }
        // (GB''): positive drift part linear, negative part polynomial of
        // exponent beta, drift derivative at most quadratic.
        const double b_star2 = std::max(1.0, vmax(rb_pos));
        const double b_ss = std::max(0.0, vmax(rb2));
        bool ok_pos = trend_bounded(grid, rb_pos, y_max);
        bool ok_bp = std::isfinite(vmax(rb2)) && trend_bounded(grid, rb2, y_max);
        double beta = 1.0;
        bool ok_beta = true;
        std::vector<double> beta_trace;
        std::vector<double> beta_y;
        for (size_t i = 0; i < grid.size(); ++i) {
            const double neg = -bv[i];
            if (neg > b_star2 * grid[i] && grid[i] > 1.0) {
                const double bexp = std::log(neg / b_star2) / std::log(grid[i]);
                beta = std::max(beta, bexp);
                beta_trace.push_back(bexp);
                beta_y.push_back(grid[i]);
                if (!std::isfinite(bexp)) ok_beta = false;
            }
        }
        if (!beta_trace.empty() && beta_trace.size() > 8)
            ok_beta = ok_beta && trend_bounded(beta_y, beta_trace, y_max);
        if (ok_pos && ok_bp && ok_beta) {
            rep.gb_variant = GbVariant::GBDoublePrime;
            rep.kappa_star = std::max(kappa_star, 0.0);
            rep.b_star = b_star2;
            rep.b_starstar = b_ss;
            rep.beta_exponent = beta;
            return rep;
        }
    }
    rep.gb_variant = GbVariant::None;
    return rep;
}

}  // namespace qsd
