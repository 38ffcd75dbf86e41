#ifndef SFM_ESTIMATE_HPP
#define SFM_ESTIMATE_HPP

#include <optional>
#include <string>
#include <vector>

#include "sfm/baseline.hpp"
#include "sfm/frailty.hpp"
#include "sfm/surface.hpp"

namespace sfm {

// Estimation replaces the mean frailty E[Z|t,x] by nu'(nu^{-1}{Htilde(t,x)})
// with Htilde the empirical cumulative hazard, which separates frailty and
// baseline parameters: for fixed phi the baseline is an ordinary weighted
// Poisson fit with exposure c(t,x)*E(t,x).

enum class FitMode { CohortMultiplicative, PeriodMultiplicative, CohortAdditive };

std::string fit_mode_name(FitMode mode);
FitMode fit_mode_from_name(const std::string& name);

struct FittedModel {
    FrailtySpec frailty;
    BaselineParams baseline;
    std::optional<BaselineParams> background; // additive mode only
    CumulativeHazardTable hazard;             // table used at fit time
    FitMode mode = FitMode::CohortMultiplicative;
    double loglik = 0.0;
    std::vector<TracePoint> trace;
    int floored_cells = 0; // additive: negative Htilde cells floored before nu^{-1}
};

// Pseudo-rate mu(t,x) = c(t,x)*F(t,x) [+ G(t,x)]; negative hazard values are
// floored at zero before the mean-frailty transform (count via floored).
Grid pseudo_rates(const FrailtySpec& frailty, const BaselineParams& baseline,
                  const BaselineParams* background, const CumulativeHazardTable& hazard,
                  int* floored = nullptr);

// sum_{E>0} { D log mu - mu E }, constant omitted.
double pseudo_log_likelihood(const FrailtySpec& frailty, const BaselineParams& baseline,
                             const BaselineParams* background, const MortalitySurface& surface,
                             const CumulativeHazardTable& hazard);

// Baseline fit at fixed frailty (multiplicative modes).
FittedModel fit_fixed_frailty(const FrailtySpec& frailty, const MortalitySurface& surface,
                              FitMode mode, BaselineModel baseline_model,
                              const FitOptions& options = {});

struct EmOptions {
    int max_iterations = 5000;
    double tol = 1e-8; // absolute pseudo-log-likelihood change
    bool background_disabled = false;
    FitOptions fit;
    // Warm starts; defaults split deaths 90/10 between the components.
    std::optional<BaselineParams> init_baseline;
    std::optional<BaselineParams> init_background;
};

// EM for the additive model mu = c*F + G (competing-risks split of D between
// the frailty-loaded and background components).
FittedModel em_fit_additive(const FrailtySpec& frailty, const MortalitySurface& surface,
                            BaselineModel baseline_model, BaselineModel background_model,
                            const EmOptions& options = {});

struct SearchConfig {
    double sigma2_upper = 2.0; // initial profile search interval [0, upper]
    int max_widenings = 3;     // interval widened x4 when the optimum hugs the boundary
    double golden_xtol = 1e-6;
    double nm_spread_tol = 1e-8;
    int nm_max_iter = 500;
    double start_alpha = 0.25;
    double start_sigma2 = 0.5;
    FitOptions fit;
    EmOptions em;
};

struct ProfilePoint {
    double alpha = 0.0;
    double sigma2 = 0.0;
    double loglik = 0.0;
};

struct ProfileResult {
    FittedModel model;
    std::vector<ProfilePoint> evaluations;
};

// Profile likelihood l(phi) = l(phi, theta_hat(phi), eta_hat(phi)): golden
// section over sigma2 for Gamma/IG, Nelder-Mead over (alpha, log sigma2) for
// the stable family. Additive mode uses the EM fit as the inner evaluation.
ProfileResult profile_fit(FrailtyFamily family, const MortalitySurface& surface, FitMode mode,
                          BaselineModel baseline_model, const SearchConfig& config = {},
                          BaselineModel background_model = BaselineModel::ConstantBackgroundPerYear);

// Alternates baseline fit at fixed phi with phi maximization at fixed
// baseline until the log-likelihood stalls. Multiplicative modes only.
FittedModel switching_fit(FrailtyFamily family, const MortalitySurface& surface, FitMode mode,
                          BaselineModel baseline_model, const FrailtySpec& phi0,
                          const SearchConfig& config = {});

// Closed-form concave maximization of l(sigma2) for Gamma frailty at fixed
// baseline values FE = F(t,x)*E(t,x); returns 0 on a boundary maximum.
double gamma_sigma2_step(const MortalitySurface& surface, const CumulativeHazardTable& hazard,
                         const Grid& baseline_times_exposure);

// l(alpha, sigma2) on a grid, for contour output.
std::vector<ProfilePoint> profile_grid(const MortalitySurface& surface, FitMode mode,
                                       BaselineModel baseline_model,
                                       const std::vector<double>& alphas,
                                       const std::vector<double>& sigma2s,
                                       const SearchConfig& config = {},
                                       BaselineModel background_model =
                                           BaselineModel::ConstantBackgroundPerYear);

struct BacktestResult {
    double sigma2 = 0.0;
    double f_opt = 0.0;
    std::vector<std::pair<double, double>> curve; // (sigma2, f)
};

// Forecast-fit back-test: fit on fit_window (period mode, Gamma frailty),
// forecast the mean index path over test_window, score the realized deaths.
BacktestResult backtest_sigma2(const MortalitySurface& full, const LexisWindow& fit_window,
                               const LexisWindow& test_window, BaselineModel baseline_model,
                               const std::vector<double>& sigma2_grid,
                               const SearchConfig& config = {});

} // namespace sfm

#endif
