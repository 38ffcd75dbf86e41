#include "sfm/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sfm/forecast.hpp"
#include "sfm/optim.hpp"
#include "sfm/util.hpp"

namespace sfm {

namespace {

HazardMode hazard_mode_for(FitMode mode) {
    return mode == FitMode::PeriodMultiplicative ? HazardMode::Period : HazardMode::Cohort;
}

constexpr int kMaxHalvings = 50;

FrailtySpec make_spec(FrailtyFamily family, double sigma2, double alpha = 0.0) {
    if (sigma2 <= 0.0) return FrailtySpec::degenerate();
    switch (family) {
    case FrailtyFamily::Degenerate:      return FrailtySpec::degenerate();
    case FrailtyFamily::Gamma:           return FrailtySpec::gamma(sigma2);
    case FrailtyFamily::InverseGaussian: return FrailtySpec::inverse_gaussian(sigma2);
    case FrailtyFamily::Stable:
        return FrailtySpec::stable(std::clamp(alpha, 0.0, 1.0 - 1e-6), sigma2);
    }
    throw domain_error("invalid frailty family");
}

// Core pseudo-log-likelihood on raw grids. Returns long double so callers
// comparing successive values (EM monotonicity) stay below the slack even
// when the magnitude makes double ulps comparable to it.
long double pseudo_ll_grids_ld(const FrailtySpec& spec, const Grid& D, const Grid& E, const Grid& H,
                               const Grid& F, const Grid* G) {
    long double acc = 0.0L;
    for (int r = 0; r < D.rows(); ++r)
        for (int c = 0; c < D.cols(); ++c) {
            if (E(r, c) == 0.0) continue;
            const double cc = mean_frailty_from_H(spec, std::max(H(r, c), 0.0));
            double mu = cc * F(r, c);
            if (G) mu += (*G)(r, c);
            if (!(mu > 0.0)) {
                if (D(r, c) > 0.0)
                    throw numeric_error("pseudo-likelihood: nonpositive rate with deaths at (" +
                                        std::to_string(r) + "," + std::to_string(c) + ")");
                acc -= static_cast<long double>(mu) * E(r, c);
                continue;
            }
            acc += static_cast<long double>(D(r, c)) * std::log(mu) -
                   static_cast<long double>(mu) * E(r, c);
        }
    return acc;
}

double pseudo_ll_grids(const FrailtySpec& spec, const Grid& D, const Grid& E, const Grid& H,
                       const Grid& F, const Grid* G) {
    return static_cast<double>(pseudo_ll_grids_ld(spec, D, E, H, F, G));
}

// Maximize a 1-d function on [0, upper], widening the interval when the
// optimum lands within 1% of the upper boundary.
GoldenResult maximize_with_widening(const std::function<double(double)>& f, double upper,
                                    int max_widenings, double xtol) {
    GoldenResult best = golden_section_max(f, 0.0, upper, xtol);
    for (int w = 0; w < max_widenings && upper - best.x < 0.01 * upper; ++w) {
        upper *= 4.0;
        best = golden_section_max(f, 0.0, upper, xtol);
    }
    return best;
}

} // namespace

std::string fit_mode_name(FitMode mode) {
    switch (mode) {
    case FitMode::CohortMultiplicative: return "cohort";
    case FitMode::PeriodMultiplicative: return "period";
    case FitMode::CohortAdditive:       return "additive";
    }
    return "unknown";
}

FitMode fit_mode_from_name(const std::string& name) {
    if (name == "cohort") return FitMode::CohortMultiplicative;
    if (name == "period") return FitMode::PeriodMultiplicative;
    if (name == "additive" || name == "cohort_additive") return FitMode::CohortAdditive;
    throw config_error("unknown fit mode '" + name + "'");
}

Grid pseudo_rates(const FrailtySpec& frailty, const BaselineParams& baseline,
                  const BaselineParams* background, const CumulativeHazardTable& hazard,
                  int* floored) {
    const LexisWindow& w = hazard.window;
    Grid mu(w.n_years(), w.n_ages());
    int count = 0;
    for (int t = w.t_min; t <= w.t_max; ++t)
        for (int x = w.x_min; x <= w.x_max; ++x) {
            const int r = w.row(t), c = w.col(x);
            double H = hazard.values(r, c);
            if (H < 0.0) {
                H = 0.0;
                ++count;
            }
            double value = mean_frailty_from_H(frailty, H) * baseline.eval(t, x);
            if (background) value += background->eval(t, x);
            mu(r, c) = value;
        }
    if (floored) *floored = count;
    return mu;
}

double pseudo_log_likelihood(const FrailtySpec& frailty, const BaselineParams& baseline,
                             const BaselineParams* background, const MortalitySurface& surface,
                             const CumulativeHazardTable& hazard) {
    if (hazard.window != surface.window)
        throw domain_error("pseudo_log_likelihood: hazard window does not match surface");
    const Grid F = baseline.eval_grid(surface.window);
    Grid G;
    if (background) G = background->eval_grid(surface.window);
    return pseudo_ll_grids(frailty, surface.deaths, surface.exposures, hazard.values, F,
                           background ? &G : nullptr);
}

FittedModel fit_fixed_frailty(const FrailtySpec& frailty, const MortalitySurface& surface,
                              FitMode mode, BaselineModel baseline_model,
                              const FitOptions& options) {
    if (mode == FitMode::CohortAdditive)
        throw domain_error("fit_fixed_frailty handles multiplicative modes; use em_fit_additive");
    frailty.validate();

    const RateSurface rates = death_rates(surface);
    CumulativeHazardTable hazard = cumulative_hazard(rates, hazard_mode_for(mode));

    const Grid c = mean_frailty_from_H(frailty, hazard.values);
    const Grid adjusted = c * surface.exposures;
    WeightedPoissonFit wfit =
        fit_weighted_poisson(baseline_model, surface.deaths, adjusted, surface.window, options);

    // The weighted fit omits the sum of D*log(c); shift so the trace is on the
    // pseudo-log-likelihood scale.
    long double shift = 0.0L;
    for (int r = 0; r < c.rows(); ++r)
        for (int cc = 0; cc < c.cols(); ++cc)
            if (surface.exposures(r, cc) > 0.0 && surface.deaths(r, cc) > 0.0)
                shift += static_cast<long double>(surface.deaths(r, cc)) * std::log(c(r, cc));

    FittedModel model;
    model.frailty = frailty;
    model.baseline = std::move(wfit.params);
    model.hazard = std::move(hazard);
    model.mode = mode;
    model.trace = std::move(wfit.trace);
    for (auto& point : model.trace) point.loglik += static_cast<double>(shift);
    model.loglik = pseudo_log_likelihood(frailty, model.baseline, nullptr, surface, model.hazard);
    return model;
}

double gamma_sigma2_step(const MortalitySurface& surface, const CumulativeHazardTable& hazard,
                         const Grid& baseline_times_exposure) {
    const Grid& H = hazard.values;
    const Grid& E = surface.exposures;
    const Grid& D = surface.deaths;
    if (H.rows() != D.rows() || H.cols() != D.cols())
        throw domain_error("gamma_sigma2_step: hazard shape mismatch");

    auto score = [&](double s2) {
        long double d1 = 0.0L;
        for (int r = 0; r < D.rows(); ++r)
            for (int c = 0; c < D.cols(); ++c) {
                if (E(r, c) == 0.0) continue;
                const double h = H(r, c);
                d1 += -static_cast<long double>(D(r, c)) * h +
                      static_cast<long double>(h) * std::exp(-s2 * h) *
                          baseline_times_exposure(r, c);
            }
        return static_cast<double>(d1);
    };
    auto curvature = [&](double s2) {
        long double d2 = 0.0L;
        for (int r = 0; r < D.rows(); ++r)
            for (int c = 0; c < D.cols(); ++c) {
                if (E(r, c) == 0.0) continue;
                const double h = H(r, c);
                d2 -= static_cast<long double>(h) * h * std::exp(-s2 * h) *
                      baseline_times_exposure(r, c);
            }
        return static_cast<double>(d2);
    };

    // Boundary maximum: l is concave, so a nonpositive score at 0 settles it.
    if (score(0.0) <= 0.0) return 0.0;

    double s2 = 0.0;
    for (int it = 0; it < 200; ++it) {
        const double d1 = score(s2);
        const double d2 = curvature(s2);
        if (!(d2 < 0.0)) break; // flat likelihood (H == 0 everywhere)
        double step = -d1 / d2;
        if (!std::isfinite(step)) break;
        // The score is convex decreasing, so Newton approaches from the left;
        // clamp any numeric overshoot below zero.
        if (s2 + step < 0.0) step = -0.5 * s2;
        s2 += step;
        if (std::abs(step) <= 1e-14 * std::max(1.0, s2)) break;
    }
    return s2;
}

FittedModel em_fit_additive(const FrailtySpec& frailty, const MortalitySurface& surface,
                            BaselineModel baseline_model, BaselineModel background_model,
                            const EmOptions& options) {
    frailty.validate();
    const LexisWindow& w = surface.window;
    const RateSurface rates = death_rates(surface);
    const Grid& D = surface.deaths;
    const Grid& E = surface.exposures;

    // Initial split: most deaths to the frailty-loaded component.
    BaselineParams base =
        options.init_baseline
            ? *options.init_baseline
            : fit_weighted_poisson(baseline_model, (0.9 * D).eval(), E, w, options.fit).params;
    std::optional<BaselineParams> back;
    if (!options.background_disabled)
        back = options.init_background
                   ? *options.init_background
                   : fit_weighted_poisson(background_model, (0.1 * D).eval(), E, w, options.fit)
                         .params;

    auto hazard_at = [&](const std::optional<BaselineParams>& bg) {
        if (!bg) return cumulative_hazard(rates, HazardMode::Cohort);
        const Grid G = bg->eval_grid(w);
        return cumulative_hazard(rates, HazardMode::Cohort, &G);
    };

    CumulativeHazardTable hazard = hazard_at(back);
    int floored = 0;
    auto current_ll = [&]() {
        const Grid F = base.eval_grid(w);
        if (!back) return pseudo_ll_grids_ld(frailty, D, E, hazard.values, F, nullptr);
        const Grid G = back->eval_grid(w);
        return pseudo_ll_grids_ld(frailty, D, E, hazard.values, F, &G);
    };
    long double ll = current_ll();
    std::vector<TracePoint> trace{{0, static_cast<double>(ll)}};
    std::vector<std::pair<int, double>> raw_trace{{0, static_cast<double>(ll)}};

    for (int it = 1; it <= options.max_iterations; ++it) {
        // mean frailty at the current background (floored at zero before nu^{-1})
        Grid c(w.n_years(), w.n_ages());
        floored = 0;
        for (int r = 0; r < c.rows(); ++r)
            for (int cc = 0; cc < c.cols(); ++cc) {
                double h = hazard.values(r, cc);
                if (h < 0.0) {
                    h = 0.0;
                    ++floored;
                }
                c(r, cc) = mean_frailty_from_H(frailty, h);
            }

        const Grid F = base.eval_grid(w);
        Grid G = back ? back->eval_grid(w) : Grid::Zero(w.n_years(), w.n_ages());

        // E-step: split deaths by intensity share (binomial means).
        Grid cF = c * F;
        Grid denom = cF + G;
        Grid D_base = D * (cF / denom);

        // M-steps at the current mean frailty.
        BaselineParams base_new =
            fit_weighted_poisson(baseline_model, D_base, (c * E).eval(), w, options.fit).params;
        std::optional<BaselineParams> back_new = back;
        if (back) {
            Grid D_back = D - D_base;
            back_new = fit_weighted_poisson(background_model, D_back, E, w, options.fit).params;
        }

        // The M-steps treat the mean frailty as fixed, but Htilde moves with
        // the background, so a full step can overshoot the pseudo-likelihood
        // peak. Halve the step until the likelihood does not decrease (linear
        // blending keeps the Lee-Carter constraints intact).
        const BaselineParams base_old = base;
        const std::optional<BaselineParams> back_old = back;
        long double ll_new = ll;
        double lambda = 1.0;
        bool accepted = false;
        for (int halvings = 0; halvings <= kMaxHalvings; ++halvings) {
            base.theta = (1.0 - lambda) * base_old.theta + lambda * base_new.theta;
            if (base.eta.size() > 0)
                base.eta = (1.0 - lambda) * base_old.eta + lambda * base_new.eta;
            if (back) {
                back->theta = (1.0 - lambda) * back_old->theta + lambda * back_new->theta;
                if (back->eta.size() > 0)
                    back->eta = (1.0 - lambda) * back_old->eta + lambda * back_new->eta;
            }
            hazard = hazard_at(back);
            ll_new = current_ll();
            if (ll_new >= ll) {
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if (!accepted) {
            // no ascent along the EM direction: restore and stop
            base = base_old;
            back = back_old;
            hazard = hazard_at(back);
            ll_new = current_ll();
        }
        trace.push_back({it, static_cast<double>(ll_new)});
        raw_trace.emplace_back(it, static_cast<double>(ll_new));

        if (ll_new < ll - options.tol)
            throw convergence_error("EM pseudo-log-likelihood decreased at iteration " +
                                        std::to_string(it),
                                    raw_trace);
        const bool done = !accepted || std::abs(static_cast<double>(ll_new - ll)) < options.tol;
        ll = ll_new;
        if (done) break;
    }

    floored = 0;
    for (int r = 0; r < hazard.values.rows(); ++r)
        for (int cc = 0; cc < hazard.values.cols(); ++cc)
            if (hazard.values(r, cc) < 0.0) ++floored;

    FittedModel model;
    model.frailty = frailty;
    model.baseline = std::move(base);
    model.background = std::move(back);
    model.hazard = std::move(hazard);
    model.mode = FitMode::CohortAdditive;
    model.loglik = static_cast<double>(ll);
    model.trace = std::move(trace);
    model.floored_cells = floored;
    return model;
}

namespace {

// warm: previous fit at a nearby phi, used to seed the EM (sequential
// searches only; grid evaluations stay independent for determinism).
FittedModel fit_at_phi(const FrailtySpec& spec, const MortalitySurface& surface, FitMode mode,
                       BaselineModel baseline_model, BaselineModel background_model,
                       const SearchConfig& config, const FittedModel* warm = nullptr) {
    if (mode == FitMode::CohortAdditive) {
        EmOptions em = config.em;
        em.fit = config.fit;
        if (warm) {
            em.init_baseline = warm->baseline;
            em.init_background = warm->background;
        }
        return em_fit_additive(spec, surface, baseline_model, background_model, em);
    }
    return fit_fixed_frailty(spec, surface, mode, baseline_model, config.fit);
}

} // namespace

ProfileResult profile_fit(FrailtyFamily family, const MortalitySurface& surface, FitMode mode,
                          BaselineModel baseline_model, const SearchConfig& config,
                          BaselineModel background_model) {
    if (family == FrailtyFamily::Degenerate)
        throw domain_error("profile_fit needs a parametric frailty family");

    ProfileResult result;
    std::optional<FittedModel> warm;

    if (family == FrailtyFamily::Stable) {
        // Nelder-Mead terminates on function values, so evaluations must be
        // history-free: no warm starts here.
        auto objective = [&](const Vector& p) {
            const double alpha = std::clamp(p(0), 0.0, 1.0 - 1e-6);
            const double sigma2 = std::exp(p(1));
            const FittedModel m = fit_at_phi(make_spec(family, sigma2, alpha), surface, mode,
                                             baseline_model, background_model, config);
            result.evaluations.push_back({alpha, sigma2, m.loglik});
            return m.loglik;
        };
        Vector x0(2);
        x0 << config.start_alpha, std::log(config.start_sigma2);
        Vector step(2);
        step << 0.2, std::log(4.0);
        const NelderMeadResult nm = nelder_mead_max(objective, x0, step, config.nm_spread_tol,
                                                    config.nm_max_iter);
        if (!nm.converged)
            throw numeric_error("stable profile search did not converge");
        const double alpha = std::clamp(nm.x(0), 0.0, 1.0 - 1e-6);
        const double sigma2 = std::exp(nm.x(1));
        result.model = fit_at_phi(make_spec(family, sigma2, alpha), surface, mode, baseline_model,
                                  background_model, config);
        return result;
    }

    auto objective = [&](double sigma2) {
        FittedModel m = fit_at_phi(make_spec(family, sigma2), surface, mode, baseline_model,
                                   background_model, config, warm ? &*warm : nullptr);
        result.evaluations.push_back({0.0, sigma2, m.loglik});
        const double value = m.loglik;
        warm = std::move(m);
        return value;
    };
    const GoldenResult best = maximize_with_widening(objective, config.sigma2_upper,
                                                     config.max_widenings, config.golden_xtol);
    result.model = fit_at_phi(make_spec(family, best.x), surface, mode, baseline_model,
                              background_model, config, warm ? &*warm : nullptr);
    return result;
}

FittedModel switching_fit(FrailtyFamily family, const MortalitySurface& surface, FitMode mode,
                          BaselineModel baseline_model, const FrailtySpec& phi0,
                          const SearchConfig& config) {
    if (mode == FitMode::CohortAdditive)
        throw domain_error("switching_fit handles multiplicative modes; use em_fit_additive");
    if (family == FrailtyFamily::Degenerate)
        throw domain_error("switching_fit needs a parametric frailty family");
    phi0.validate();
    if (!phi0.is_degenerate() && phi0.family != family)
        throw domain_error("switching_fit: starting value family does not match the search family");

    FrailtySpec phi = phi0;
    FittedModel model = fit_fixed_frailty(phi, surface, mode, baseline_model, config.fit);
    std::vector<TracePoint> trace{{0, model.loglik}};
    std::vector<std::pair<int, double>> raw_trace{{0, model.loglik}};
    double ll = model.loglik;

    const int max_outer = 500;
    for (int it = 1; it <= max_outer; ++it) {
        // Step 2: maximize over phi at fixed baseline parameters.
        const Grid F = model.baseline.eval_grid(surface.window);
        if (family == FrailtyFamily::Gamma) {
            const double s2 = gamma_sigma2_step(surface, model.hazard, (F * surface.exposures).eval());
            phi = make_spec(family, s2);
        } else if (family == FrailtyFamily::InverseGaussian) {
            auto obj = [&](double s2) {
                return pseudo_ll_grids(make_spec(family, s2), surface.deaths, surface.exposures,
                                       model.hazard.values, F, nullptr);
            };
            const double upper = std::max(config.sigma2_upper, 4.0 * phi.sigma2);
            phi = make_spec(family, maximize_with_widening(obj, upper, config.max_widenings,
                                                           config.golden_xtol)
                                        .x);
        } else {
            auto obj = [&](const Vector& p) {
                const FrailtySpec s =
                    make_spec(family, std::exp(p(1)), std::clamp(p(0), 0.0, 1.0 - 1e-6));
                return pseudo_ll_grids(s, surface.deaths, surface.exposures, model.hazard.values,
                                       F, nullptr);
            };
            Vector x0(2);
            x0 << phi.alpha, std::log(std::max(phi.sigma2, 1e-8));
            Vector step(2);
            step << 0.1, std::log(2.0);
            const NelderMeadResult nm =
                nelder_mead_max(obj, x0, step, config.nm_spread_tol, config.nm_max_iter);
            phi = make_spec(family, std::exp(nm.x(1)), std::clamp(nm.x(0), 0.0, 1.0 - 1e-6));
        }
        const double ll_phi = pseudo_ll_grids(phi, surface.deaths, surface.exposures,
                                              model.hazard.values, F, nullptr);
        trace.push_back({2 * it - 1, ll_phi});
        raw_trace.emplace_back(2 * it - 1, ll_phi);
        if (ll_phi < ll - 1e-6)
            throw convergence_error("switching algorithm oscillation in frailty step", raw_trace);

        // Step 1: refit the baseline at the new phi.
        model = fit_fixed_frailty(phi, surface, mode, baseline_model, config.fit);
        trace.push_back({2 * it, model.loglik});
        raw_trace.emplace_back(2 * it, model.loglik);
        if (model.loglik < ll_phi - 1e-6)
            throw convergence_error("switching algorithm oscillation in baseline step", raw_trace);

        const double delta = std::abs(model.loglik - ll);
        ll = model.loglik;
        if (delta < 1e-8) {
            model.trace = std::move(trace);
            return model;
        }
    }
    throw convergence_error("switching algorithm did not converge", raw_trace);
}

std::vector<ProfilePoint> profile_grid(const MortalitySurface& surface, FitMode mode,
                                       BaselineModel baseline_model,
                                       const std::vector<double>& alphas,
                                       const std::vector<double>& sigma2s,
                                       const SearchConfig& config,
                                       BaselineModel background_model) {
    const int na = static_cast<int>(alphas.size());
    const int ns = static_cast<int>(sigma2s.size());
    std::vector<ProfilePoint> points(static_cast<std::size_t>(na) * ns);
    parallel_for(na * ns, config.fit.threads, [&](int idx) {
        const double alpha = alphas[idx / ns];
        const double sigma2 = sigma2s[idx % ns];
        const FittedModel m = fit_at_phi(make_spec(FrailtyFamily::Stable, sigma2, alpha), surface,
                                         mode, baseline_model, background_model, config);
        points[idx] = {alpha, sigma2, m.loglik};
    });
    return points;
}

BacktestResult backtest_sigma2(const MortalitySurface& full, const LexisWindow& fit_window,
                               const LexisWindow& test_window, BaselineModel baseline_model,
                               const std::vector<double>& sigma2_grid,
                               const SearchConfig& config) {
    if (test_window.t_min != fit_window.t_max + 1)
        throw config_error("backtest: test window must immediately follow the fit window");
    if (test_window.x_min != fit_window.x_min || test_window.x_max != fit_window.x_max)
        throw config_error("backtest: fit and test windows must cover the same ages");
    if (sigma2_grid.size() < 2)
        throw config_error("backtest: need at least two sigma2 grid points");

    const MortalitySurface fit_surface = subsurface(full, fit_window);
    const MortalitySurface test_surface = subsurface(full, test_window);
    const int horizon = test_window.n_years();

    auto f_of = [&](double sigma2) {
        const FrailtySpec spec = make_spec(FrailtyFamily::Gamma, sigma2);
        const FittedModel m = fit_fixed_frailty(spec, fit_surface, FitMode::PeriodMultiplicative,
                                                baseline_model, config.fit);
        const DriftModel drift = fit_random_walk(m.baseline.theta);
        const Vector last = m.baseline.theta.row(m.baseline.n_years() - 1).transpose();
        const IndexPaths paths =
            forecast_index(drift, last, fit_window.t_max, horizon, {false, 0, 0});

        long double f = 0.0L;
        for (int j = 0; j < horizon; ++j) {
            const Eigen::RowVectorXd row = paths.mean.row(j);
            double I = 0.0;
            for (int x = fit_window.x_min; x <= fit_window.x_max; ++x) {
                const double mu = nu_prime(spec, I) * m.baseline.eval_row(row, x);
                const int r = test_window.row(test_window.t_min + j);
                const int c = test_window.col(x);
                if (test_surface.exposures(r, c) > 0.0) {
                    if (!(mu > 0.0))
                        throw numeric_error("backtest: nonpositive forecast rate");
                    f += static_cast<long double>(test_surface.deaths(r, c)) * std::log(mu) -
                         static_cast<long double>(mu) * test_surface.exposures(r, c);
                }
                I += m.baseline.eval_row(row, x);
            }
        }
        return static_cast<double>(f);
    };

    BacktestResult result;
    for (double s2 : sigma2_grid) result.curve.emplace_back(s2, f_of(s2));

    const GoldenResult best = golden_section_max(f_of, sigma2_grid.front(), sigma2_grid.back(),
                                                 config.golden_xtol);
    result.sigma2 = best.x;
    result.f_opt = best.fx;
    return result;
}

} // namespace sfm
