#ifndef SFM_OPTIM_HPP
#define SFM_OPTIM_HPP

#include <functional>

#include "sfm/types.hpp"

namespace sfm {

struct GoldenResult {
    double x = 0.0;
    double fx = 0.0;
    int evals = 0;
};

// Golden-section maximization on [lo, hi]; the endpoints are candidates, so
// boundary maxima are returned exactly.
GoldenResult golden_section_max(const std::function<double(double)>& f, double lo, double hi,
                                double xtol, int max_iter = 200);

struct NelderMeadResult {
    Vector x;
    double fx = 0.0;
    int evals = 0;
    bool converged = false;
};

// Nelder-Mead maximization; converged when the simplex function-value spread
// falls below spread_tol.
NelderMeadResult nelder_mead_max(const std::function<double(const Vector&)>& f, const Vector& x0,
                                 const Vector& step, double spread_tol, int max_iter = 2000);

} // namespace sfm

#endif
