#include "sfm/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace sfm {

namespace {

constexpr double kZ95 = 1.959964;

// PSD square root via eigendecomposition; tolerates singular covariances.
Matrix covariance_factor(const Matrix& cov) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
    if (es.info() != Eigen::Success) throw numeric_error("covariance eigendecomposition failed");
    Vector lambda = es.eigenvalues();
    for (Eigen::Index i = 0; i < lambda.size(); ++i) lambda(i) = std::sqrt(std::max(lambda(i), 0.0));
    return es.eigenvectors() * lambda.asDiagonal();
}

} // namespace

DriftModel fit_random_walk(const Matrix& series) {
    const int n = static_cast<int>(series.rows());
    const int d = static_cast<int>(series.cols());
    if (n < 3) throw domain_error("fit_random_walk: need at least 3 observations");

    Matrix diffs(n - 1, d);
    for (int i = 0; i + 1 < n; ++i) diffs.row(i) = series.row(i + 1) - series.row(i);

    DriftModel model;
    model.n_obs = n - 1;
    model.drift = diffs.colwise().mean().transpose();
    Matrix centered = diffs.rowwise() - model.drift.transpose();
    model.covariance = centered.transpose() * centered / (model.n_obs - 1);
    return model;
}

IndexPaths forecast_index(const DriftModel& model, const Vector& last_value, int last_year,
                          int horizon, const ForecastOptions& options) {
    if (horizon < 1) throw domain_error("forecast_index: horizon must be at least 1");
    const int d = static_cast<int>(last_value.size());
    if (model.drift.size() != d || model.covariance.rows() != d)
        throw domain_error("forecast_index: dimension mismatch");

    IndexPaths paths;
    paths.first_year = last_year + 1;
    paths.mean.resize(horizon, d);
    for (int j = 1; j <= horizon; ++j)
        paths.mean.row(j - 1) = (last_value + j * model.drift).transpose();

    if (options.with_bands) {
        paths.lo.resize(horizon, d);
        paths.hi.resize(horizon, d);
        paths.lo_param.resize(horizon, d);
        paths.hi_param.resize(horizon, d);
        for (int j = 1; j <= horizon; ++j)
            for (int cidx = 0; cidx < d; ++cidx) {
                const double v = model.covariance(cidx, cidx);
                const double sd = std::sqrt(j * v);
                const double sd_param = std::sqrt(j * v + static_cast<double>(j) * j * v / model.n_obs);
                paths.lo(j - 1, cidx) = paths.mean(j - 1, cidx) - kZ95 * sd;
                paths.hi(j - 1, cidx) = paths.mean(j - 1, cidx) + kZ95 * sd;
                paths.lo_param(j - 1, cidx) = paths.mean(j - 1, cidx) - kZ95 * sd_param;
                paths.hi_param(j - 1, cidx) = paths.mean(j - 1, cidx) + kZ95 * sd_param;
            }
    }

    if (options.draws > 0) {
        const Matrix factor = covariance_factor(model.covariance);
        std::mt19937_64 rng(options.seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        paths.draws.reserve(options.draws);
        for (int k = 0; k < options.draws; ++k) {
            Matrix path(horizon, d);
            Vector state = last_value;
            for (int j = 0; j < horizon; ++j) {
                Vector z(d);
                for (int i = 0; i < d; ++i) z(i) = normal(rng);
                state += model.drift + factor * z;
                path.row(j) = state.transpose();
            }
            paths.draws.push_back(std::move(path));
        }
    }
    return paths;
}

Grid forecast_integrated_baseline(const FittedModel& fitted, const Matrix& index_mean,
                                  int horizon) {
    const LexisWindow& w = fitted.hazard.window;
    const int ny = w.n_years();
    const int na = w.n_ages();
    if (horizon > 0 && index_mean.rows() < horizon)
        throw domain_error("forecast_integrated_baseline: index path shorter than horizon");

    Grid table = Grid::Zero(ny + horizon, na);
    for (int r = 0; r < ny; ++r)
        for (int c = 0; c < na; ++c)
            table(r, c) = nu_inverse(fitted.frailty, std::max(fitted.hazard.values(r, c), 0.0));

    const BaselineParams& base = fitted.baseline;
    if (fitted.mode == FitMode::PeriodMultiplicative) {
        // Icheck(t,x) = sum_{u<x} F evaluated at the same forecast year's index.
        for (int j = 0; j < horizon; ++j) {
            const Eigen::RowVectorXd row = index_mean.row(j);
            double acc = 0.0;
            for (int c = 0; c < na; ++c) {
                table(ny + j, c) = acc;
                acc += base.eval_row(row, w.x_min + c);
            }
        }
    } else {
        // Cohort recursion: zero at x_min; the first forecast year continues
        // the fitted t_max diagonal, later years use the forecasted index.
        for (int j = 0; j < horizon; ++j) {
            const int r = ny + j;
            table(r, 0) = 0.0;
            for (int c = 1; c < na; ++c) {
                const int x_prev = w.x_min + c - 1;
                const double f = j == 0 ? base.eval(w.t_max, x_prev)
                                        : base.eval_row(index_mean.row(j - 1), x_prev);
                table(r, c) = table(r - 1, c - 1) + f;
            }
        }
    }
    return table;
}

Grid forecast_mortality(const FittedModel& fitted, const Grid& integrated, const Matrix& index_mean,
                        int horizon, const Matrix* background_path) {
    const LexisWindow& w = fitted.hazard.window;
    const int ny = w.n_years();
    const int na = w.n_ages();
    if (integrated.rows() != ny + horizon)
        throw domain_error("forecast_mortality: integrated table does not cover the horizon");
    if (horizon > 0 && index_mean.rows() < horizon)
        throw domain_error("forecast_mortality: index path shorter than horizon");
    if (background_path && background_path->rows() < horizon)
        throw domain_error("forecast_mortality: background path shorter than horizon");

    Grid mu(horizon, na);
    for (int j = 0; j < horizon; ++j) {
        const Eigen::RowVectorXd row = index_mean.row(j);
        for (int c = 0; c < na; ++c) {
            const int x = w.x_min + c;
            double value = nu_prime(fitted.frailty, integrated(ny + j, c)) * fitted.baseline.eval_row(row, x);
            if (fitted.background) {
                // Background index frozen at its last fitted value by default.
                const Eigen::RowVectorXd brow =
                    background_path ? Eigen::RowVectorXd(background_path->row(j))
                                    : Eigen::RowVectorXd(fitted.background->theta.row(
                                          fitted.background->n_years() - 1));
                value += fitted.background->eval_row(brow, x);
            }
            mu(j, c) = value;
        }
    }
    return mu;
}

Grid fitted_mortality(const FittedModel& fitted) {
    return pseudo_rates(fitted.frailty, fitted.baseline,
                        fitted.background ? &*fitted.background : nullptr, fitted.hazard);
}

double period_life_expectancy(const std::vector<double>& mu, int x0) {
    if (x0 < 0 || x0 > 109) throw domain_error("period_life_expectancy: x0 must lie in [0, 109]");
    const int n_ages = 110 - x0; // ages x0 .. 109, integral terminates at 110
    if (static_cast<int>(mu.size()) < n_ages)
        throw domain_error("period_life_expectancy: rate profile too short (need ages up to 109)");

    double survival = 1.0;
    double e = 0.0;
    for (int j = 0; j < n_ages; ++j) {
        const double m = mu[j];
        if (!(m >= 0.0) || !std::isfinite(m))
            throw domain_error("period_life_expectancy: negative or non-finite rate at age " +
                               std::to_string(x0 + j));
        const double interval = m > 0.0 ? -std::expm1(-m) / m : 1.0;
        e += survival * interval;
        survival *= std::exp(-m);
    }
    return e;
}

std::vector<double> assemble_mortality_profile(const Grid& mu, const LexisWindow& window, int t,
                                               int x0, const LogisticExtension& extension) {
    if (x0 < window.x_min)
        throw domain_error("assemble_mortality_profile: x0 below the modeled age range");
    const int r = window.row(t);
    if (r < 0 || r >= mu.rows())
        throw domain_error("assemble_mortality_profile: year outside the surface");

    const int model_top = std::min(window.x_max, kLogisticFitAgeHi);
    std::vector<double> profile;
    profile.reserve(110 - x0);
    for (int x = x0; x <= 109; ++x) {
        if (x <= model_top)
            profile.push_back(mu(r, window.col(x)));
        else
            profile.push_back(extension.eval(t, x));
    }
    return profile;
}

Grid improvement_rates(const Grid& mu) {
    if (mu.rows() < 2) throw domain_error("improvement_rates: need at least 2 years");
    Grid rho(mu.rows() - 1, mu.cols());
    for (int r = 0; r + 1 < mu.rows(); ++r)
        for (int c = 0; c < mu.cols(); ++c) {
            if (!(mu(r, c) > 0.0) || !(mu(r + 1, c) > 0.0))
                throw domain_error("improvement_rates: nonpositive rate");
            rho(r, c) = -(std::log(mu(r + 1, c)) - std::log(mu(r, c)));
        }
    return rho;
}

ForecastResult run_forecast(const FittedModel& fitted, int horizon, const ForecastOptions& options,
                            int le_x0) {
    const LexisWindow& w = fitted.hazard.window;
    ForecastResult result;
    result.le_x0 = le_x0;
    result.le_first_year = w.t_min;
    result.mu_fitted = fitted_mortality(fitted);

    if (horizon > 0) {
        const DriftModel drift = fit_random_walk(fitted.baseline.theta);
        const Vector last = fitted.baseline.theta.row(fitted.baseline.n_years() - 1).transpose();
        result.index = forecast_index(drift, last, w.t_max, horizon, options);
        result.integrated = forecast_integrated_baseline(fitted, result.index.mean, horizon);
        result.mu_forecast = forecast_mortality(fitted, result.integrated, result.index.mean, horizon);
    } else {
        result.integrated = forecast_integrated_baseline(fitted, Matrix(), 0);
    }

    // Life expectancy needs rates to age 109; the logistic extension covers
    // ages above 90 when the window reaches that far.
    if (w.x_max >= kLogisticFitAgeHi && le_x0 >= w.x_min && le_x0 <= 109) {
        const RateSurface window_rates{w, result.mu_fitted};
        const LogisticExtension ext_window = fit_logistic_extension(window_rates);
        for (int t = w.t_min; t <= w.t_max; ++t)
            result.life_expectancy.push_back(period_life_expectancy(
                assemble_mortality_profile(result.mu_fitted, w, t, le_x0, ext_window), le_x0));
        if (horizon > 0) {
            const LexisWindow fw(w.t_max + 1, w.t_max + horizon, w.x_min, w.x_max);
            const RateSurface forecast_rates{fw, result.mu_forecast};
            const LogisticExtension ext_forecast = fit_logistic_extension(forecast_rates);
            for (int t = fw.t_min; t <= fw.t_max; ++t)
                result.life_expectancy.push_back(period_life_expectancy(
                    assemble_mortality_profile(result.mu_forecast, fw, t, le_x0, ext_forecast),
                    le_x0));
        }
    }
    return result;
}

} // namespace sfm
