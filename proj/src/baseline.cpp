#include "sfm/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>

#include "sfm/csv.hpp"
#include "sfm/util.hpp"

namespace sfm {

namespace {

constexpr int kMaxHalvings = 50;

// Double precision limits how far a gradient can be pushed: one ulp of a
// parameter moves the gradient by roughly curvature * ulp, which at large
// exposures exceeds any fixed tolerance. Treat a step at machine granularity
// as converged.
bool step_at_resolution(double step, double value) {
    return std::abs(step) <= 64.0 * std::numeric_limits<double>::epsilon() *
                                 (1.0 + std::abs(value));
}

void check_fit_inputs(const Grid& deaths, const Grid& exposure, const LexisWindow& window) {
    if (deaths.rows() != window.n_years() || deaths.cols() != window.n_ages() ||
        exposure.rows() != deaths.rows() || exposure.cols() != deaths.cols())
        throw domain_error("fit_weighted_poisson: grid shapes do not match the window");
    for (int r = 0; r < deaths.rows(); ++r)
        for (int c = 0; c < deaths.cols(); ++c) {
            if (!(deaths(r, c) >= 0.0) || !(exposure(r, c) >= 0.0))
                throw domain_error("fit_weighted_poisson: negative deaths or exposure");
            if (exposure(r, c) == 0.0 && deaths(r, c) > 0.0)
                throw domain_error("fit_weighted_poisson: deaths with zero exposure at (" +
                                   std::to_string(window.t_min + r) + ", " +
                                   std::to_string(window.x_min + c) + ")");
        }
}

// Per-year slice log-likelihood for a log-linear rate exp(th1 + th2*x).
double year_loglik(const Array& d, const Array& e, const Array& ages, double th1, double th2) {
    long double acc = 0.0L;
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        if (e(i) == 0.0) continue;
        const double mu = std::exp(th1 + th2 * ages(i));
        acc += static_cast<long double>(d(i)) * std::log(mu) - static_cast<long double>(mu) * e(i);
    }
    return static_cast<double>(acc);
}

struct YearFit {
    double th1 = 0.0, th2 = 0.0;
    double loglik = 0.0;
};

// Damped Newton on the concave per-year Gompertz likelihood.
YearFit fit_gompertz_year(const Array& d, const Array& e, const Array& ages, int year,
                          const FitOptions& opt) {
    if (d.sum() <= 0.0)
        throw numeric_error("year " + std::to_string(year) +
                            " has no deaths; Gompertz parameters unidentifiable");

    // Initial values from least squares on smoothed log rates.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        if (e(i) == 0.0) continue;
        const double y = std::log((d(i) + 0.5) / e(i));
        sx += ages(i);
        sy += y;
        sxx += ages(i) * ages(i);
        sxy += ages(i) * y;
        ++n;
    }
    if (n < 2)
        throw numeric_error("year " + std::to_string(year) +
                            " has fewer than two exposed ages; Gompertz unidentifiable");
    const double denom = n * sxx - sx * sx;
    double th2 = denom != 0.0 ? (n * sxy - sx * sy) / denom : 0.0;
    double th1 = (sy - th2 * sx) / n;

    double ll = year_loglik(d, e, ages, th1, th2);
    std::vector<std::pair<int, double>> trace{{0, ll}};

    for (int it = 1; it <= opt.max_sweeps; ++it) {
        long double g1 = 0, g2 = 0, h11 = 0, h12 = 0, h22 = 0;
        for (Eigen::Index i = 0; i < d.size(); ++i) {
            if (e(i) == 0.0) continue;
            const double x = ages(i);
            const double mue = std::exp(th1 + th2 * x) * e(i);
            const double resid = d(i) - mue;
            g1 += resid;
            g2 += x * resid;
            h11 += mue;
            h12 += x * mue;
            h22 += x * x * mue;
        }
        const double det = static_cast<double>(h11 * h22 - h12 * h12);
        if (!(det > 0.0))
            throw numeric_error("year " + std::to_string(year) +
                                " Gompertz Hessian singular (single effective age?)");
        double d1 = static_cast<double>((g1 * h22 - g2 * h12)) / det;
        double d2 = static_cast<double>((h11 * g2 - h12 * g1)) / det;

        double ll_new = year_loglik(d, e, ages, th1 + d1, th2 + d2);
        int halvings = 0;
        while ((!std::isfinite(ll_new) || ll_new < ll) && halvings < kMaxHalvings) {
            d1 *= 0.5;
            d2 *= 0.5;
            ll_new = year_loglik(d, e, ages, th1 + d1, th2 + d2);
            ++halvings;
        }
        th1 += d1;
        th2 += d2;

        const double delta = std::abs(ll_new - ll);
        ll = ll_new;
        trace.emplace_back(it, ll);

        // Gradient at the accepted point.
        long double ng1 = 0, ng2 = 0;
        for (Eigen::Index i = 0; i < d.size(); ++i) {
            if (e(i) == 0.0) continue;
            const double resid = d(i) - std::exp(th1 + th2 * ages(i)) * e(i);
            ng1 += resid;
            ng2 += ages(i) * resid;
        }
        const double gsup = std::max(std::abs(static_cast<double>(ng1)),
                                     std::abs(static_cast<double>(ng2)));
        const bool grad_ok = gsup <= opt.grad_tol ||
                             (step_at_resolution(d1, th1) && step_at_resolution(d2, th2));
        if (delta <= opt.rel_tol * std::max(1.0, std::abs(ll)) && grad_ok)
            return {th1, th2, ll};
    }
    throw convergence_error("Gompertz fit for year " + std::to_string(year) +
                                " did not converge",
                            trace);
}

double fit_constant_year(const Array& d, const Array& e, int year, const FitOptions& opt) {
    const double sd = d.sum();
    double se = 0.0;
    for (Eigen::Index i = 0; i < d.size(); ++i)
        if (e(i) > 0.0) se += e(i);
    if (sd <= 0.0)
        throw numeric_error("year " + std::to_string(year) +
                            " has no deaths; background level unidentifiable");
    if (se <= 0.0)
        throw numeric_error("year " + std::to_string(year) + " has no exposure");

    // log(sd/se) is already the MLE; the Newton polish drives the score to
    // the gradient tolerance (or machine resolution).
    double zeta = std::log(sd / se);
    auto ll_at = [&](double z) { return sd * z - std::exp(z) * se; };
    double ll = ll_at(zeta);
    for (int it = 0; it < opt.max_sweeps; ++it) {
        const double g = sd - std::exp(zeta) * se;
        if (std::abs(g) <= opt.grad_tol) return zeta;
        double step = g / (std::exp(zeta) * se);
        double ll_new = ll_at(zeta + step);
        int halvings = 0;
        while ((!std::isfinite(ll_new) || ll_new < ll) && halvings < kMaxHalvings) {
            step *= 0.5;
            ll_new = ll_at(zeta + step);
            ++halvings;
        }
        zeta += step;
        ll = ll_new;
        if (step_at_resolution(step, zeta)) return zeta;
    }
    throw convergence_error("background level fit for year " + std::to_string(year) +
                                " did not converge",
                            {{0, ll}});
}

struct LeeCarterState {
    Vector a, b, k;
};

Grid lc_mu(const LeeCarterState& s, int ny, int na) {
    Grid mu(ny, na);
    for (int r = 0; r < ny; ++r)
        for (int c = 0; c < na; ++c) mu(r, c) = std::exp(s.a(c) + s.b(c) * s.k(r));
    return mu;
}

WeightedPoissonFit fit_lee_carter(const Grid& D, const Grid& E, const LexisWindow& w,
                                  const FitOptions& opt) {
    const int ny = w.n_years();
    const int na = w.n_ages();

    for (int r = 0; r < ny; ++r)
        if (D.row(r).sum() <= 0.0)
            throw numeric_error("year " + std::to_string(w.t_min + r) +
                                " has no deaths; k unidentifiable");
    for (int c = 0; c < na; ++c)
        if (D.col(c).sum() <= 0.0)
            throw numeric_error("age " + std::to_string(w.x_min + c) +
                                " has no deaths; a unidentifiable");

    LeeCarterState s;
    s.a.resize(na);
    s.b = Vector::Constant(na, 1.0 / na);
    s.k = Vector::Zero(ny);
    for (int c = 0; c < na; ++c) {
        double se = 0.0;
        for (int r = 0; r < ny; ++r)
            if (E(r, c) > 0.0) se += E(r, c);
        if (se <= 0.0)
            throw numeric_error("age " + std::to_string(w.x_min + c) + " has no exposure");
        s.a(c) = std::log(D.col(c).sum() / se);
    }

    auto loglik = [&](const LeeCarterState& st) {
        long double acc = 0.0L;
        for (int r = 0; r < ny; ++r)
            for (int c = 0; c < na; ++c) {
                if (E(r, c) == 0.0) continue;
                const double eta = st.a(c) + st.b(c) * st.k(r);
                acc += static_cast<long double>(D(r, c)) * eta -
                       static_cast<long double>(std::exp(eta)) * E(r, c);
            }
        return static_cast<double>(acc);
    };

    // Applies a block increment with step halving if the likelihood drops;
    // reports whether the applied step is at machine resolution.
    auto damped_apply = [&](LeeCarterState& st, const Vector& delta, Vector LeeCarterState::*field,
                            double& ll) {
        double fac = 1.0;
        for (int halvings = 0;; ++halvings) {
            LeeCarterState trial = st;
            (trial.*field) += fac * delta;
            const double ll_new = loglik(trial);
            if ((std::isfinite(ll_new) && ll_new >= ll) || halvings >= kMaxHalvings) {
                bool tiny = true;
                for (Eigen::Index i = 0; i < delta.size(); ++i)
                    tiny = tiny && step_at_resolution(fac * delta(i), (st.*field)(i));
                st = std::move(trial);
                ll = ll_new;
                return tiny;
            }
            fac *= 0.5;
        }
    };

    double ll = loglik(s);
    std::vector<TracePoint> trace{{0, ll}};
    std::vector<std::pair<int, double>> raw_trace{{0, ll}};

    bool converged = false;
    for (int sweep = 1; sweep <= opt.max_sweeps; ++sweep) {
        const double ll_prev = ll;
        Grid mu = lc_mu(s, ny, na);

        // a-block (one-dimensional Newton per age)
        Vector da = Vector::Zero(na);
        for (int c = 0; c < na; ++c) {
            long double g = 0, h = 0;
            for (int r = 0; r < ny; ++r) {
                if (E(r, c) == 0.0) continue;
                const double mue = mu(r, c) * E(r, c);
                g += D(r, c) - mue;
                h += mue;
            }
            if (h > 0) da(c) = static_cast<double>(g / h);
        }
        bool steps_tiny = damped_apply(s, da, &LeeCarterState::a, ll);
        mu = lc_mu(s, ny, na);

        // k-block
        Vector dk = Vector::Zero(ny);
        for (int r = 0; r < ny; ++r) {
            long double g = 0, h = 0;
            for (int c = 0; c < na; ++c) {
                if (E(r, c) == 0.0) continue;
                const double mue = mu(r, c) * E(r, c);
                g += s.b(c) * (D(r, c) - mue);
                h += s.b(c) * s.b(c) * mue;
            }
            if (h > 1e-300) dk(r) = static_cast<double>(g / h);
        }
        steps_tiny = damped_apply(s, dk, &LeeCarterState::k, ll) && steps_tiny;
        mu = lc_mu(s, ny, na);

        // b-block
        Vector db = Vector::Zero(na);
        for (int c = 0; c < na; ++c) {
            long double g = 0, h = 0;
            for (int r = 0; r < ny; ++r) {
                if (E(r, c) == 0.0) continue;
                const double mue = mu(r, c) * E(r, c);
                g += s.k(r) * (D(r, c) - mue);
                h += s.k(r) * s.k(r) * mue;
            }
            if (h > 1e-300) db(c) = static_cast<double>(g / h);
        }
        steps_tiny = damped_apply(s, db, &LeeCarterState::b, ll) && steps_tiny;

        // Identifiability constraints; leaves mu(t,x) unchanged.
        const double kbar = s.k.mean();
        s.a += s.b * kbar;
        s.k.array() -= kbar;
        const double bsum = s.b.sum();
        if (std::abs(bsum) < 1e-12)
            throw numeric_error("Lee-Carter b normalization failed: sum(b) ~ 0");
        s.b /= bsum;
        s.k *= bsum;

        ll = loglik(s);
        trace.push_back({sweep, ll});
        raw_trace.emplace_back(sweep, ll);

        // Full analytic gradient at the normalized point.
        mu = lc_mu(s, ny, na);
        double gsup = 0.0;
        for (int c = 0; c < na; ++c) {
            long double ga = 0, gb = 0;
            for (int r = 0; r < ny; ++r) {
                if (E(r, c) == 0.0) continue;
                const double resid = D(r, c) - mu(r, c) * E(r, c);
                ga += resid;
                gb += s.k(r) * resid;
            }
            gsup = std::max({gsup, std::abs(static_cast<double>(ga)),
                             std::abs(static_cast<double>(gb))});
        }
        for (int r = 0; r < ny; ++r) {
            long double gk = 0;
            for (int c = 0; c < na; ++c) {
                if (E(r, c) == 0.0) continue;
                gk += s.b(c) * (D(r, c) - mu(r, c) * E(r, c));
            }
            gsup = std::max(gsup, std::abs(static_cast<double>(gk)));
        }

        if (std::abs(ll - ll_prev) <= opt.rel_tol * std::max(1.0, std::abs(ll)) &&
            (gsup <= opt.grad_tol || steps_tiny)) {
            converged = true;
            break;
        }
    }
    if (!converged)
        throw convergence_error("Lee-Carter fit did not converge within " +
                                    std::to_string(opt.max_sweeps) + " sweeps",
                                raw_trace);

    // Time-homogeneous data leaves b unidentifiable; pin the convention.
    if (s.k.lpNorm<Eigen::Infinity>() < 1e-8) {
        s.k.setZero();
        s.b.setConstant(1.0 / na);
        for (int c = 0; c < na; ++c) {
            double se = 0.0;
            for (int r = 0; r < ny; ++r)
                if (E(r, c) > 0.0) se += E(r, c);
            s.a(c) = std::log(D.col(c).sum() / se);
        }
        ll = loglik(s);
        trace.push_back({static_cast<int>(trace.size()), ll});
    }

    BaselineParams params;
    params.model = BaselineModel::LeeCarter;
    params.t_min = w.t_min;
    params.x_min = w.x_min;
    params.theta = s.k;
    params.eta.resize(na, 2);
    params.eta.col(0) = s.a;
    params.eta.col(1) = s.b;
    return {std::move(params), ll, std::move(trace)};
}

} // namespace

std::string baseline_name(BaselineModel model) {
    switch (model) {
    case BaselineModel::GompertzPerYear:           return "gompertz";
    case BaselineModel::ConstantBackgroundPerYear: return "constant";
    case BaselineModel::LeeCarter:                 return "leecarter";
    }
    return "unknown";
}

BaselineModel baseline_from_name(const std::string& name) {
    if (name == "gompertz") return BaselineModel::GompertzPerYear;
    if (name == "constant") return BaselineModel::ConstantBackgroundPerYear;
    if (name == "leecarter" || name == "lee-carter") return BaselineModel::LeeCarter;
    throw config_error("unknown baseline model '" + name + "'");
}

int baseline_time_dim(BaselineModel model) {
    return model == BaselineModel::GompertzPerYear ? 2 : 1;
}

double BaselineParams::eval_row(const Eigen::RowVectorXd& time_params, int x) const {
    switch (model) {
    case BaselineModel::GompertzPerYear:
        return std::exp(time_params(0) + time_params(1) * x);
    case BaselineModel::ConstantBackgroundPerYear:
        return std::exp(time_params(0));
    case BaselineModel::LeeCarter: {
        const int c = x - x_min;
        if (c < 0 || c >= n_ages())
            throw domain_error("Lee-Carter age " + std::to_string(x) + " outside fitted range");
        return std::exp(eta(c, 0) + eta(c, 1) * time_params(0));
    }
    }
    throw domain_error("invalid baseline model");
}

double BaselineParams::eval(int t, int x) const {
    const int r = t - t_min;
    if (r < 0 || r >= n_years())
        throw domain_error("year " + std::to_string(t) + " outside fitted range");
    return eval_row(theta.row(r), x);
}

Grid BaselineParams::eval_grid(const LexisWindow& window) const {
    Grid out(window.n_years(), window.n_ages());
    for (int t = window.t_min; t <= window.t_max; ++t)
        for (int x = window.x_min; x <= window.x_max; ++x)
            out(window.row(t), window.col(x)) = eval(t, x);
    return out;
}

double weighted_poisson_loglik(const Grid& deaths, const Grid& exposure, const Grid& mu) {
    long double acc = 0.0L;
    for (int r = 0; r < deaths.rows(); ++r)
        for (int c = 0; c < deaths.cols(); ++c) {
            if (exposure(r, c) == 0.0) continue;
            if (!(mu(r, c) > 0.0)) {
                if (deaths(r, c) > 0.0)
                    throw numeric_error("nonpositive rate with positive deaths in likelihood");
                acc -= static_cast<long double>(mu(r, c)) * exposure(r, c);
                continue;
            }
            acc += static_cast<long double>(deaths(r, c)) * std::log(mu(r, c)) -
                   static_cast<long double>(mu(r, c)) * exposure(r, c);
        }
    return static_cast<double>(acc);
}

WeightedPoissonFit fit_weighted_poisson(BaselineModel model, const Grid& deaths,
                                        const Grid& exposure, const LexisWindow& window,
                                        const FitOptions& options) {
    check_fit_inputs(deaths, exposure, window);

    if (model == BaselineModel::LeeCarter)
        return fit_lee_carter(deaths, exposure, window, options);

    const int ny = window.n_years();
    const int na = window.n_ages();
    Array ages(na);
    for (int c = 0; c < na; ++c) ages(c) = window.x_min + c;

    BaselineParams params;
    params.model = model;
    params.t_min = window.t_min;
    params.x_min = window.x_min;
    params.theta.resize(ny, baseline_time_dim(model));

    // Per-year fits are independent; dispatch across threads when asked.
    parallel_for(ny, options.threads, [&](int r) {
        const Array d = deaths.row(r).transpose();
        const Array e = exposure.row(r).transpose();
        const int year = window.t_min + r;
        if (model == BaselineModel::GompertzPerYear) {
            const YearFit fit = fit_gompertz_year(d, e, ages, year, options);
            params.theta(r, 0) = fit.th1;
            params.theta(r, 1) = fit.th2;
        } else {
            params.theta(r, 0) = fit_constant_year(d, e, year, options);
        }
    });

    const double ll = weighted_poisson_loglik(deaths, exposure, params.eval_grid(window));
    return {std::move(params), ll, {{0, ll}}};
}

double LogisticExtension::eval(int t, int x) const {
    const int r = t - t_min;
    if (r < 0 || r >= c.size())
        throw domain_error("logistic extension year " + std::to_string(t) + " not fitted");
    const double z = c(r) + d(r) * x;
    return 1.0 / (1.0 + std::exp(-z));
}

LogisticExtension fit_logistic_extension(const RateSurface& rates) {
    const LexisWindow& w = rates.window;
    if (w.x_min > kLogisticFitAgeLo || w.x_max < kLogisticFitAgeHi)
        throw data_error("logistic extension needs rates for ages " +
                         std::to_string(kLogisticFitAgeLo) + "-" +
                         std::to_string(kLogisticFitAgeHi));

    LogisticExtension ext;
    ext.t_min = w.t_min;
    ext.c.resize(w.n_years());
    ext.d.resize(w.n_years());

    for (int r = 0; r < w.n_years(); ++r) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        int n = 0;
        for (int x = kLogisticFitAgeLo; x <= kLogisticFitAgeHi; ++x) {
            const double m = rates.rates(r, w.col(x));
            if (!(m > 0.0) || !(m < 1.0)) continue;
            const double y = std::log(m / (1.0 - m));
            sx += x;
            sy += y;
            sxx += static_cast<double>(x) * x;
            sxy += x * y;
            ++n;
        }
        if (n < 2)
            throw numeric_error("logistic extension: fewer than 2 usable ages in year " +
                                std::to_string(w.t_min + r));
        const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        ext.d(r) = slope;
        ext.c(r) = (sy - slope * sx) / n;
    }
    return ext;
}

void write_params_csv(std::ostream& out, const BaselineParams& params) {
    out << "series,t_or_x,component,value\n";
    auto emit = [&](const char* series, int idx, int comp, double v) {
        out << series << "," << idx << "," << comp << "," << format_double(v) << "\n";
    };
    switch (params.model) {
    case BaselineModel::GompertzPerYear:
        for (int r = 0; r < params.n_years(); ++r) {
            emit("theta", params.t_min + r, 1, params.theta(r, 0));
            emit("theta", params.t_min + r, 2, params.theta(r, 1));
        }
        break;
    case BaselineModel::ConstantBackgroundPerYear:
        for (int r = 0; r < params.n_years(); ++r)
            emit("zeta", params.t_min + r, 1, params.theta(r, 0));
        break;
    case BaselineModel::LeeCarter:
        for (int r = 0; r < params.n_years(); ++r)
            emit("k", params.t_min + r, 1, params.theta(r, 0));
        for (int c = 0; c < params.n_ages(); ++c) {
            emit("a", params.x_min + c, 1, params.eta(c, 0));
            emit("b", params.x_min + c, 1, params.eta(c, 1));
        }
        break;
    }
}

BaselineParams read_params_csv(std::istream& in, BaselineModel model) {
    std::map<std::string, std::map<int, std::map<int, double>>> series;
    std::string line;
    if (!std::getline(in, line)) throw data_error("empty parameters CSV");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != 4) throw data_error("parameters CSV: expected 4 fields");
        series[fields[0]][static_cast<int>(parse_double(fields[1]))]
              [static_cast<int>(parse_double(fields[2]))] = parse_double(fields[3]);
    }

    auto to_vector = [](const std::map<int, std::map<int, double>>& by_idx, int comp, int& first) {
        if (by_idx.empty()) throw data_error("parameters CSV: missing series");
        first = by_idx.begin()->first;
        Vector v(by_idx.size());
        int expect = first;
        int i = 0;
        for (const auto& [idx, comps] : by_idx) {
            if (idx != expect++) throw data_error("parameters CSV: non-contiguous index");
            auto it = comps.find(comp);
            if (it == comps.end()) throw data_error("parameters CSV: missing component");
            v(i++) = it->second;
        }
        return v;
    };

    BaselineParams params;
    params.model = model;
    int first = 0;
    switch (model) {
    case BaselineModel::GompertzPerYear: {
        const Vector t1 = to_vector(series["theta"], 1, first);
        const Vector t2 = to_vector(series["theta"], 2, first);
        params.t_min = first;
        params.theta.resize(t1.size(), 2);
        params.theta.col(0) = t1;
        params.theta.col(1) = t2;
        break;
    }
    case BaselineModel::ConstantBackgroundPerYear: {
        const Vector z = to_vector(series["zeta"], 1, first);
        params.t_min = first;
        params.theta = z;
        break;
    }
    case BaselineModel::LeeCarter: {
        const Vector k = to_vector(series["k"], 1, first);
        params.t_min = first;
        params.theta = k;
        const Vector a = to_vector(series["a"], 1, first);
        params.x_min = first;
        const Vector b = to_vector(series["b"], 1, first);
        if (a.size() != b.size()) throw data_error("parameters CSV: a/b length mismatch");
        params.eta.resize(a.size(), 2);
        params.eta.col(0) = a;
        params.eta.col(1) = b;
        break;
    }
    }
    return params;
}

} // namespace sfm
