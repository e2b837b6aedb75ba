#include "qsd/ode.hpp"

namespace qsd {

double bisect_root(const std::function<double(double)>& f, double a, double b,
                   double fa, double fb, double xtol, int max_iter) {
    if (fa == 0.0) return a;
    if (fb == 0.0) return b;
    for (int i = 0; i < max_iter && (b - a) > xtol; ++i) {
        const double m = 0.5 * (a + b);
        const double fm = f(m);
        if (fm == 0.0) return m;
        if ((fa < 0.0) != (fm < 0.0)) {
            b = m;
            fb = fm;
        } else {
            a = m;
            fa = fm;
        }
    }
    return 0.5 * (a + b);
}

}  // namespace qsd
