#include "sfm/frailty.hpp"

#include <cmath>

namespace sfm {

namespace {

// Below this the raw stable formulas lose all precision (0/0 at alpha = 0);
// the family is continuous in alpha, so evaluate the Gamma limit instead.
constexpr double kStableAlphaFloor = 1e-8;

// exp(sigma2*h) overflows past ~709; fail loudly instead of returning inf.
constexpr double kExpArgMax = 700.0;

void check_nonneg(double v, const char* what) {
    if (!(v >= 0.0))
        throw domain_error(std::string(what) + " must be nonnegative, got " + std::to_string(v));
}

double gamma_nu(double sigma2, double s) { return std::log1p(sigma2 * s) / sigma2; }
double gamma_nu_prime(double sigma2, double s) { return 1.0 / (1.0 + sigma2 * s); }

double gamma_nu_inverse(double sigma2, double h) {
    const double arg = sigma2 * h;
    if (arg > kExpArgMax)
        throw numeric_error("nu_inverse overflow: sigma2*h = " + std::to_string(arg) +
                            " exceeds " + std::to_string(kExpArgMax));
    return std::expm1(arg) / sigma2;
}

} // namespace

FrailtySpec FrailtySpec::gamma(double sigma2) {
    FrailtySpec spec{FrailtyFamily::Gamma, sigma2, 0.0};
    spec.validate();
    return spec;
}

FrailtySpec FrailtySpec::inverse_gaussian(double sigma2) {
    FrailtySpec spec{FrailtyFamily::InverseGaussian, sigma2, 0.0};
    spec.validate();
    return spec;
}

FrailtySpec FrailtySpec::stable(double alpha, double sigma2) {
    FrailtySpec spec{FrailtyFamily::Stable, sigma2, alpha};
    spec.validate();
    return spec;
}

void FrailtySpec::validate() const {
    if (!(sigma2 >= 0.0) || !std::isfinite(sigma2))
        throw domain_error("frailty variance must be nonnegative, got " + std::to_string(sigma2));
    switch (family) {
    case FrailtyFamily::Degenerate:
        if (sigma2 != 0.0)
            throw domain_error("degenerate frailty requires sigma2 = 0");
        break;
    case FrailtyFamily::Gamma:
    case FrailtyFamily::InverseGaussian:
        // sigma2 = 0 is represented by Degenerate only; the closed forms divide by sigma2.
        if (sigma2 == 0.0)
            throw domain_error(family_name(family) +
                               " frailty requires sigma2 > 0; use Degenerate for no frailty");
        break;
    case FrailtyFamily::Stable:
        if (sigma2 == 0.0)
            throw domain_error("stable frailty requires sigma2 > 0; use Degenerate for no frailty");
        if (!(alpha >= 0.0 && alpha < 1.0))
            throw domain_error("stable index alpha must lie in [0, 1), got " + std::to_string(alpha));
        break;
    }
}

std::string family_name(FrailtyFamily family) {
    switch (family) {
    case FrailtyFamily::Degenerate:      return "degenerate";
    case FrailtyFamily::Gamma:           return "gamma";
    case FrailtyFamily::InverseGaussian: return "inverse_gaussian";
    case FrailtyFamily::Stable:          return "stable";
    }
    return "unknown";
}

FrailtyFamily family_from_name(const std::string& name) {
    if (name == "degenerate" || name == "none") return FrailtyFamily::Degenerate;
    if (name == "gamma") return FrailtyFamily::Gamma;
    if (name == "inverse_gaussian" || name == "ig") return FrailtyFamily::InverseGaussian;
    if (name == "stable") return FrailtyFamily::Stable;
    throw domain_error("unknown frailty family '" + name + "'");
}

double nu(const FrailtySpec& spec, double s) {
    spec.validate();
    check_nonneg(s, "s");
    switch (spec.family) {
    case FrailtyFamily::Degenerate:
        return s;
    case FrailtyFamily::Gamma:
        return gamma_nu(spec.sigma2, s);
    case FrailtyFamily::InverseGaussian:
        // (sqrt(1+2*sigma2*s)-1)/sigma2 without cancellation at small arguments
        return 2.0 * s / (std::sqrt(1.0 + 2.0 * spec.sigma2 * s) + 1.0);
    case FrailtyFamily::Stable: {
        if (spec.alpha < kStableAlphaFloor) return gamma_nu(spec.sigma2, s);
        const double u = spec.sigma2 * s / (1.0 - spec.alpha);
        return (1.0 - spec.alpha) / spec.alpha * std::expm1(spec.alpha * std::log1p(u)) / spec.sigma2;
    }
    }
    throw domain_error("invalid frailty family");
}

double laplace(const FrailtySpec& spec, double s) { return std::exp(-nu(spec, s)); }

double nu_prime(const FrailtySpec& spec, double s) {
    spec.validate();
    check_nonneg(s, "s");
    switch (spec.family) {
    case FrailtyFamily::Degenerate:
        return 1.0;
    case FrailtyFamily::Gamma:
        return gamma_nu_prime(spec.sigma2, s);
    case FrailtyFamily::InverseGaussian:
        return 1.0 / std::sqrt(1.0 + 2.0 * spec.sigma2 * s);
    case FrailtyFamily::Stable: {
        if (spec.alpha < kStableAlphaFloor) return gamma_nu_prime(spec.sigma2, s);
        const double u = spec.sigma2 * s / (1.0 - spec.alpha);
        return std::exp((spec.alpha - 1.0) * std::log1p(u));
    }
    }
    throw domain_error("invalid frailty family");
}

double nu_inverse(const FrailtySpec& spec, double h) {
    spec.validate();
    check_nonneg(h, "h");
    switch (spec.family) {
    case FrailtyFamily::Degenerate:
        return h;
    case FrailtyFamily::Gamma:
        return gamma_nu_inverse(spec.sigma2, h);
    case FrailtyFamily::InverseGaussian:
        // ((1+sigma2*h)^2 - 1)/(2*sigma2) simplifies exactly
        return h * (1.0 + 0.5 * spec.sigma2 * h);
    case FrailtyFamily::Stable: {
        if (spec.alpha < kStableAlphaFloor) return gamma_nu_inverse(spec.sigma2, h);
        const double v = spec.alpha * spec.sigma2 * h / (1.0 - spec.alpha);
        const double arg = std::log1p(v) / spec.alpha;
        if (arg > kExpArgMax)
            throw numeric_error("nu_inverse overflow in stable family: exponent " +
                                std::to_string(arg) + " exceeds " + std::to_string(kExpArgMax));
        return (1.0 - spec.alpha) / spec.sigma2 * std::expm1(arg);
    }
    }
    throw domain_error("invalid frailty family");
}

double mean_frailty_from_H(const FrailtySpec& spec, double H) {
    spec.validate();
    check_nonneg(H, "H");
    switch (spec.family) {
    case FrailtyFamily::Degenerate:
        return 1.0;
    case FrailtyFamily::Gamma:
        return std::exp(-spec.sigma2 * H);
    case FrailtyFamily::InverseGaussian:
        return 1.0 / (1.0 + spec.sigma2 * H);
    case FrailtyFamily::Stable: {
        if (spec.alpha < kStableAlphaFloor) return std::exp(-spec.sigma2 * H);
        const double v = spec.alpha * spec.sigma2 * H / (1.0 - spec.alpha);
        return std::exp((spec.alpha - 1.0) / spec.alpha * std::log1p(v));
    }
    }
    throw domain_error("invalid frailty family");
}

Grid nu_inverse(const FrailtySpec& spec, const Grid& h) {
    return h.unaryExpr([&](double v) { return nu_inverse(spec, v); });
}

Grid mean_frailty_from_H(const FrailtySpec& spec, const Grid& H) {
    return H.unaryExpr([&](double v) { return mean_frailty_from_H(spec, v); });
}

} // namespace sfm
