#ifndef SFM_TESTS_FIXTURES_HPP
#define SFM_TESTS_FIXTURES_HPP

#include <cmath>

#include "sfm/baseline.hpp"
#include "sfm/estimate.hpp"
#include "sfm/frailty.hpp"
#include "sfm/surface.hpp"

namespace sfm::testing {

inline BaselineParams gompertz_params(const LexisWindow& w, double level0, double level_drift,
                                      double slope) {
    BaselineParams p;
    p.model = BaselineModel::GompertzPerYear;
    p.t_min = w.t_min;
    p.theta.resize(w.n_years(), 2);
    for (int r = 0; r < w.n_years(); ++r) {
        p.theta(r, 0) = level0 + level_drift * r;
        p.theta(r, 1) = slope;
    }
    return p;
}

inline BaselineParams constant_params(const LexisWindow& w, double zeta0, double drift = 0.0) {
    BaselineParams p;
    p.model = BaselineModel::ConstantBackgroundPerYear;
    p.t_min = w.t_min;
    p.theta.resize(w.n_years(), 1);
    for (int r = 0; r < w.n_years(); ++r) p.theta(r, 0) = zeta0 + drift * r;
    return p;
}

inline BaselineParams lee_carter_params(const LexisWindow& w, double k_start, double k_step) {
    BaselineParams p;
    p.model = BaselineModel::LeeCarter;
    p.t_min = w.t_min;
    p.x_min = w.x_min;
    const int ny = w.n_years();
    const int na = w.n_ages();
    p.theta.resize(ny, 1);
    for (int r = 0; r < ny; ++r) p.theta(r, 0) = k_start + k_step * r;
    const double kbar = p.theta.col(0).mean();
    p.theta.col(0).array() -= kbar; // sum k = 0
    p.eta.resize(na, 2);
    for (int c = 0; c < na; ++c) {
        p.eta(c, 0) = -4.5 + 1.6 * c / na; // a_x
        p.eta(c, 1) = (1.0 + 0.5 * std::sin(0.3 * c)) / na;
    }
    p.eta.col(1) /= p.eta.col(1).sum(); // sum b = 1
    return p;
}

// Surface on which the pseudo-likelihood model holds exactly:
// m(t,x) = nu'(nu^{-1}{Htilde(t,x)}) F(t,x) with Htilde built from m itself,
// and D = m*E with no sampling noise.
inline MortalitySurface exact_pseudo_surface(const FrailtySpec& spec,
                                             const BaselineParams& baseline, const LexisWindow& w,
                                             double exposure) {
    const int ny = w.n_years();
    const int na = w.n_ages();
    Grid m(ny, na), H(ny, na);
    for (int c = 0; c < na; ++c) {
        H(0, c) = c == 0 ? 0.0 : H(0, c - 1) + m(0, c - 1);
        m(0, c) = mean_frailty_from_H(spec, H(0, c)) * baseline.eval(w.t_min, w.x_min + c);
    }
    for (int r = 1; r < ny; ++r)
        for (int c = 0; c < na; ++c) {
            H(r, c) = c == 0 ? 0.0 : H(r - 1, c - 1) + m(r - 1, c - 1);
            m(r, c) = mean_frailty_from_H(spec, H(r, c)) * baseline.eval(w.t_min + r, w.x_min + c);
        }
    return {w, (m * exposure).eval(), Grid::Constant(ny, na, exposure)};
}

// Largest absolute deviation relative to the series scale (max |true| value);
// sensible for series like k that pass through zero.
inline double scale_relative_error(const Vector& estimate, const Vector& truth) {
    const double scale = truth.lpNorm<Eigen::Infinity>();
    return (estimate - truth).lpNorm<Eigen::Infinity>() / (scale > 0 ? scale : 1.0);
}

} // namespace sfm::testing

#endif
