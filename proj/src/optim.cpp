#include "sfm/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace sfm {

GoldenResult golden_section_max(const std::function<double(double)>& f, double lo, double hi,
                                double xtol, int max_iter) {
    if (!(lo < hi)) throw domain_error("golden_section_max: need lo < hi");
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;

    int evals = 0;
    auto eval = [&](double x) {
        ++evals;
        return f(x);
    };

    double a = lo, b = hi;
    double x1 = b - invphi * (b - a);
    double x2 = a + invphi * (b - a);
    double f1 = eval(x1);
    double f2 = eval(x2);

    for (int it = 0; it < max_iter && (b - a) > xtol; ++it) {
        if (f1 > f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - invphi * (b - a);
            f1 = eval(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + invphi * (b - a);
            f2 = eval(x2);
        }
    }

    double x = f1 > f2 ? x1 : x2;
    double fx = std::max(f1, f2);
    // Endpoints may beat the interior (boundary maxima, e.g. sigma2 = 0).
    if (x - lo < xtol) {
        const double flo = eval(lo);
        if (flo >= fx) {
            x = lo;
            fx = flo;
        }
    }
    if (hi - x < xtol) {
        const double fhi = eval(hi);
        if (fhi >= fx) {
            x = hi;
            fx = fhi;
        }
    }
    return {x, fx, evals};
}

NelderMeadResult nelder_mead_max(const std::function<double(const Vector&)>& f, const Vector& x0,
                                 const Vector& step, double spread_tol, int max_iter) {
    const int n = static_cast<int>(x0.size());
    if (step.size() != n) throw domain_error("nelder_mead_max: step size mismatch");

    int evals = 0;
    auto eval = [&](const Vector& x) {
        ++evals;
        return f(x);
    };

    std::vector<Vector> pts(n + 1, x0);
    std::vector<double> vals(n + 1);
    for (int i = 0; i < n; ++i) pts[i + 1](i) += step(i);
    for (int i = 0; i <= n; ++i) vals[i] = eval(pts[i]);

    auto order = [&]() {
        std::vector<int> idx(n + 1);
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](int a, int b) { return vals[a] > vals[b]; });
        std::vector<Vector> p2(n + 1);
        std::vector<double> v2(n + 1);
        for (int i = 0; i <= n; ++i) {
            p2[i] = pts[idx[i]];
            v2[i] = vals[idx[i]];
        }
        pts = std::move(p2);
        vals = std::move(v2);
    };

    bool converged = false;
    for (int it = 0; it < max_iter; ++it) {
        order();
        if (vals.front() - vals.back() < spread_tol) {
            converged = true;
            break;
        }

        Vector centroid = Vector::Zero(n);
        for (int i = 0; i < n; ++i) centroid += pts[i];
        centroid /= n;

        const Vector xr = centroid + (centroid - pts[n]);
        const double fr = eval(xr);
        if (fr > vals[0]) {
            const Vector xe = centroid + 2.0 * (centroid - pts[n]);
            const double fe = eval(xe);
            if (fe > fr) {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
        } else if (fr > vals[n - 1]) {
            pts[n] = xr;
            vals[n] = fr;
        } else {
            const Vector xc = centroid + 0.5 * (pts[n] - centroid);
            const double fc = eval(xc);
            if (fc > vals[n]) {
                pts[n] = xc;
                vals[n] = fc;
            } else {
                for (int i = 1; i <= n; ++i) {
                    pts[i] = pts[0] + 0.5 * (pts[i] - pts[0]);
                    vals[i] = eval(pts[i]);
                }
            }
        }
    }

    order();
    return {pts[0], vals[0], evals, converged};
}

} // namespace sfm
