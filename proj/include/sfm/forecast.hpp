#ifndef SFM_FORECAST_HPP
#define SFM_FORECAST_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "sfm/estimate.hpp"
#include "sfm/types.hpp"

namespace sfm {

// Random walk with drift for the per-year index vector:
// theta_t = theta_{t-1} + xi + U_t, U_t ~ N(0, Sigma).
struct DriftModel {
    Vector drift;      // xi-hat: mean of first differences
    Matrix covariance; // Sigma-hat: sample covariance of differences (divisor n-1)
    int n_obs = 0;     // number of differences
};

DriftModel fit_random_walk(const Matrix& series); // rows = years, cols = components

struct ForecastOptions {
    bool with_bands = true;
    int draws = 0;
    std::uint64_t seed = 0;
};

struct IndexPaths {
    int first_year = 0; // year of row 0
    Matrix mean;        // horizon x d
    Matrix lo, hi;            // 95% bands, innovation variance only
    Matrix lo_param, hi_param; // bands including drift-estimation uncertainty
    std::vector<Matrix> draws; // stochastic paths, horizon x d each
};

// Mean path last + j*xi; variance j*Sigma without drift uncertainty and
// j*Sigma + j^2*Sigma/n with it; marginal 95% bands at +-1.959964 sd.
IndexPaths forecast_index(const DriftModel& model, const Vector& last_value, int last_year,
                          int horizon, const ForecastOptions& options = {});

// Integrated baseline table over data window plus forecast region.
// Cohort: nu^{-1}(Htilde) in the window, then the three-case recursion
// Itilde(t,x) = Itilde(t-1,x-1) + F(theta_{t-1}, eta_{x-1}) with the first
// forecast year anchored at the fitted t_max column. Period: row sums of F
// at the same year's forecasted index.
Grid forecast_integrated_baseline(const FittedModel& fitted, const Matrix& index_mean,
                                  int horizon);

// Forecast region rates: cohort/period multiplicative nu'(I)*F, additive
// nu'(I)*F + G with the background index frozen at its last fitted value
// unless a path is supplied. Rows = forecast years t_max+1 ... t_max+horizon.
Grid forecast_mortality(const FittedModel& fitted, const Grid& integrated, const Matrix& index_mean,
                        int horizon, const Matrix* background_path = nullptr);

// In-window fitted rates mu-hat (pseudo-rates at the fitted parameters).
Grid fitted_mortality(const FittedModel& fitted);

// Remaining period life expectancy from age x0 under piecewise-constant
// rates: mu covers integer ages x0, x0+1, ...; the integral runs to age 110.
double period_life_expectancy(const std::vector<double>& mu, int x0);

// Assembles the age profile x0..109 for one year from model rates up to
// max(fitted ages, 90) and the logistic extension above.
std::vector<double> assemble_mortality_profile(const Grid& mu, const LexisWindow& window, int t,
                                               int x0, const LogisticExtension& extension);

// rho(t,x) = -(log mu(t+1,x) - log mu(t,x)); result has one row fewer.
Grid improvement_rates(const Grid& mu);

struct ForecastResult {
    IndexPaths index;
    Grid integrated;      // window + forecast rows
    Grid mu_fitted;       // data window
    Grid mu_forecast;     // forecast region (horizon rows)
    std::vector<double> life_expectancy; // window + forecast years (x0 config)
    int le_first_year = 0;
    int le_x0 = 60;
};

ForecastResult run_forecast(const FittedModel& fitted, int horizon,
                            const ForecastOptions& options = {}, int le_x0 = 60);

} // namespace sfm

#endif
