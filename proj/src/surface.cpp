#include "sfm/surface.hpp"

#include <cmath>
#include <string>

namespace sfm {

namespace {

std::string cell_name(int t, int x) {
    return "(" + std::to_string(t) + ", " + std::to_string(x) + ")";
}

void check_grid_shape(const Grid& g, const LexisWindow& w, const char* what) {
    if (g.rows() != w.n_years() || g.cols() != w.n_ages())
        throw data_error(std::string(what) + " grid is " + std::to_string(g.rows()) + "x" +
                         std::to_string(g.cols()) + ", window needs " +
                         std::to_string(w.n_years()) + "x" + std::to_string(w.n_ages()));
}

} // namespace

void MortalitySurface::validate() const {
    check_grid_shape(deaths, window, "deaths");
    check_grid_shape(exposures, window, "exposures");
    for (int r = 0; r < deaths.rows(); ++r) {
        for (int c = 0; c < deaths.cols(); ++c) {
            const double d = deaths(r, c);
            const double e = exposures(r, c);
            const int t = window.t_min + r;
            const int x = window.x_min + c;
            if (!(d >= 0.0) || !std::isfinite(d))
                throw data_error("negative or non-finite death count at " + cell_name(t, x));
            if (!(e >= 0.0) || !std::isfinite(e))
                throw data_error("negative or non-finite exposure at " + cell_name(t, x));
            if (e == 0.0 && d > 0.0)
                throw data_error("deaths recorded with zero exposure at " + cell_name(t, x));
        }
    }
}

RateSurface death_rates(const MortalitySurface& surface) {
    surface.validate();
    Grid rates = Grid::Zero(surface.deaths.rows(), surface.deaths.cols());
    for (int r = 0; r < rates.rows(); ++r)
        for (int c = 0; c < rates.cols(); ++c)
            if (surface.exposures(r, c) > 0.0)
                rates(r, c) = surface.deaths(r, c) / surface.exposures(r, c);
    return {surface.window, std::move(rates)};
}

double ExtendedRates::operator()(int t, int x) const {
    const LexisWindow& w = rates_.window;
    if (t > w.t_max || x > w.x_max || x < 0)
        throw domain_error("extended rate query outside supported region at (" +
                           std::to_string(t) + ", " + std::to_string(x) + ")");
    if (x < w.x_min) return 0.0;
    const int r = t < w.t_min ? 0 : w.row(t);
    return rates_.rates(r, w.col(x));
}

CumulativeHazardTable cumulative_hazard(const RateSurface& rates, HazardMode mode,
                                        const Grid* background) {
    const LexisWindow& w = rates.window;
    if (background) check_grid_shape(*background, w, "background");

    Grid m = rates.rates;
    if (background) m -= *background;

    const int ny = w.n_years();
    const int nx = w.n_ages();
    Grid H = Grid::Zero(ny, nx);

    if (mode == HazardMode::Period) {
        // Hcheck(t,x) = sum_{u < x} m(t,u); ages below x_min contribute zero.
        for (int r = 0; r < ny; ++r)
            for (int c = 1; c < nx; ++c)
                H(r, c) = H(r, c - 1) + m(r, c - 1);
    } else {
        // Cohort diagonals; pre-window years use first-year rates, so the
        // first row reduces to a running sum of row zero.
        for (int c = 1; c < nx; ++c)
            H(0, c) = H(0, c - 1) + m(0, c - 1);
        for (int r = 1; r < ny; ++r)
            for (int c = 1; c < nx; ++c)
                H(r, c) = H(r - 1, c - 1) + m(r - 1, c - 1);
    }

    return {w, std::move(H), mode, background != nullptr};
}

MortalitySurface subsurface(const MortalitySurface& surface, const LexisWindow& window) {
    const LexisWindow& full = surface.window;
    if (window.t_min < full.t_min || window.t_max > full.t_max || window.x_min < full.x_min ||
        window.x_max > full.x_max)
        throw data_error("subsurface window exceeds the available data window");
    const auto r0 = full.row(window.t_min);
    const auto c0 = full.col(window.x_min);
    return {window, surface.deaths.block(r0, c0, window.n_years(), window.n_ages()),
            surface.exposures.block(r0, c0, window.n_years(), window.n_ages())};
}

} // namespace sfm
