#ifndef SFM_TYPES_HPP
#define SFM_TYPES_HPP

#include <Eigen/Dense>
#include <string>

#include "sfm/errors.hpp"

namespace sfm {

// Grids are year x age: row r = calendar year t_min + r, col c = age x_min + c.
using Grid = Eigen::ArrayXXd;
using Array = Eigen::ArrayXd;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct TracePoint {
    int iteration;
    double loglik;
};

// Rectangular Lexis window of one-year A-groups, ages capped at 110 ("110+").
struct LexisWindow {
    int t_min = 0;
    int t_max = 0;
    int x_min = 0;
    int x_max = 0;

    LexisWindow() = default;
    LexisWindow(int tmin, int tmax, int xmin, int xmax)
        : t_min(tmin), t_max(tmax), x_min(xmin), x_max(xmax) {
        if (t_min > t_max)
            throw domain_error("LexisWindow: t_min " + std::to_string(t_min) +
                               " exceeds t_max " + std::to_string(t_max));
        if (x_min < 0 || x_min > x_max || x_max > 110)
            throw domain_error("LexisWindow: ages must satisfy 0 <= x_min <= x_max <= 110, got [" +
                               std::to_string(x_min) + ", " + std::to_string(x_max) + "]");
    }

    int n_years() const { return t_max - t_min + 1; }
    int n_ages() const { return x_max - x_min + 1; }
    bool contains(int t, int x) const {
        return t >= t_min && t <= t_max && x >= x_min && x <= x_max;
    }
    int row(int t) const { return t - t_min; }
    int col(int x) const { return x - x_min; }

    bool operator==(const LexisWindow&) const = default;
};

} // namespace sfm

#endif
