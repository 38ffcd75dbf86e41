#include "sfm/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace sfm {

Grid integrated_baseline(const BaselineParams& baseline, const LexisWindow& window) {
    const int ny = window.n_years();
    const int na = window.n_ages();
    // Same diagonal recursion as the empirical cumulative hazard: pre-window
    // years evaluate the baseline at t_min.
    auto F = [&](int t, int x) { return baseline.eval(std::max(t, window.t_min), x); };
    Grid I = Grid::Zero(ny, na);
    for (int c = 1; c < na; ++c)
        I(0, c) = I(0, c - 1) + F(window.t_min, window.x_min + c - 1);
    for (int r = 1; r < ny; ++r)
        for (int c = 1; c < na; ++c)
            I(r, c) = I(r - 1, c - 1) + F(window.t_min + r - 1, window.x_min + c - 1);
    return I;
}

MortalitySurface simulate_surface(const FrailtySpec& frailty, const BaselineParams& baseline,
                                  const LexisWindow& window, double exposure_level,
                                  std::uint64_t seed, const BaselineParams* background) {
    if (!(exposure_level > 0.0))
        throw domain_error("simulate_surface: exposure level must be positive");
    frailty.validate();

    const int ny = window.n_years();
    const int na = window.n_ages();
    const Grid I = integrated_baseline(baseline, window);

    Grid mu(ny, na);
    for (int r = 0; r < ny; ++r)
        for (int c = 0; c < na; ++c) {
            const int t = window.t_min + r;
            const int x = window.x_min + c;
            double value = nu_prime(frailty, I(r, c)) * baseline.eval(t, x);
            if (background) value += background->eval(t, x);
            mu(r, c) = value;
        }

    std::mt19937_64 rng(seed);
    Grid deaths(ny, na);
    for (int r = 0; r < ny; ++r)
        for (int c = 0; c < na; ++c) {
            const double mean = mu(r, c) * exposure_level;
            if (!std::isfinite(mean) || mean > 1e15)
                throw numeric_error("simulate_surface: Poisson mean overflow at (" +
                                    std::to_string(window.t_min + r) + ", " +
                                    std::to_string(window.x_min + c) + ")");
            std::poisson_distribution<long long> pois(mean);
            deaths(r, c) = mean > 0.0 ? static_cast<double>(pois(rng)) : 0.0;
        }

    return {window, std::move(deaths), Grid::Constant(ny, na, exposure_level)};
}

} // namespace sfm
