#ifndef SFM_BASELINE_HPP
#define SFM_BASELINE_HPP

#include <iosfwd>
#include <string>
#include <vector>

#include "sfm/surface.hpp"
#include "sfm/types.hpp"

namespace sfm {

// Baseline mortality models mu_base(t,x) = F(theta_t, eta_x):
//   GompertzPerYear:           exp(theta1_t + theta2_t * x)
//   ConstantBackgroundPerYear: exp(zeta_t)
//   LeeCarter:                 exp(a_x + b_x * k_t), sum_t k = 0, sum_x b = 1
enum class BaselineModel { GompertzPerYear, ConstantBackgroundPerYear, LeeCarter };

std::string baseline_name(BaselineModel model);
BaselineModel baseline_from_name(const std::string& name);

// Number of per-year parameters (the time series that gets forecasted).
int baseline_time_dim(BaselineModel model);

struct BaselineParams {
    BaselineModel model = BaselineModel::GompertzPerYear;
    int t_min = 0; // year of theta row 0
    int x_min = 0; // age of eta row 0 (Lee-Carter)
    Matrix theta;  // n_years x time_dim
    Matrix eta;    // n_ages x 2 (Lee-Carter: a, b), empty otherwise

    int n_years() const { return static_cast<int>(theta.rows()); }
    int n_ages() const { return static_cast<int>(eta.rows()); }

    // F with the stored year-t parameters.
    double eval(int t, int x) const;
    // F with an explicit time-parameter row (forecasted indices).
    double eval_row(const Eigen::RowVectorXd& time_params, int x) const;
    Grid eval_grid(const LexisWindow& window) const;
};

struct FitOptions {
    int max_sweeps = 10000;
    double rel_tol = 1e-10; // relative log-likelihood change
    double grad_tol = 1e-8; // gradient sup-norm
    int threads = 1;
};

struct WeightedPoissonFit {
    BaselineParams params;
    double loglik = 0.0;
    std::vector<TracePoint> trace;
};

// Maximum likelihood for D(t,x) ~ Poisson(F(theta_t, eta_x) * Etilde(t,x)).
// Etilde is the (frailty-adjusted) exposure; zero-exposure cells are excluded
// and must carry zero deaths.
WeightedPoissonFit fit_weighted_poisson(BaselineModel model, const Grid& deaths,
                                        const Grid& exposure, const LexisWindow& window,
                                        const FitOptions& options = {});

// Poisson log-likelihood sum over positive-exposure cells, constant omitted.
double weighted_poisson_loglik(const Grid& deaths, const Grid& exposure, const Grid& mu);

// Old-age extension mu(t,x) = logistic(c_t + d_t*x), fitted per year by least
// squares on logit m(t,x) over ages 70-90 and evaluated for ages 91-110.
struct LogisticExtension {
    int t_min = 0;
    Vector c;
    Vector d;

    double eval(int t, int x) const;
};

constexpr int kLogisticFitAgeLo = 70;
constexpr int kLogisticFitAgeHi = 90;

LogisticExtension fit_logistic_extension(const RateSurface& rates);

// Parameter serialization: `series,t_or_x,component,value`.
void write_params_csv(std::ostream& out, const BaselineParams& params);
BaselineParams read_params_csv(std::istream& in, BaselineModel model);

} // namespace sfm

#endif
