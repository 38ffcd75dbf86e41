#ifndef SFM_FRAILTY_HPP
#define SFM_FRAILTY_HPP

#include <string>

#include "sfm/types.hpp"

namespace sfm {

// Frailty distributions with mean one, described through the Laplace
// transform L(s) = E[exp(-s Z)] and nu(s) = -log L(s):
//
//   Gamma(sigma2):            nu(s) = log(1 + sigma2*s) / sigma2
//   InverseGaussian(sigma2):  nu(s) = (sqrt(1 + 2*sigma2*s) - 1) / sigma2
//   Stable(alpha, sigma2):    nu(s) = ((1-alpha)/alpha) *
//                                     ((1 + sigma2*s/(1-alpha))^alpha - 1) / sigma2
//   Degenerate (Z == 1):      nu(s) = s
//
// The stable family specializes to Gamma at alpha = 0 (by continuity) and to
// inverse Gaussian at alpha = 1/2. nu'(s) is the mean frailty of survivors at
// integrated baseline intensity s; nu_inverse maps integrated cohort hazard H
// back to the baseline scale.

enum class FrailtyFamily { Degenerate, Gamma, InverseGaussian, Stable };

struct FrailtySpec {
    FrailtyFamily family = FrailtyFamily::Degenerate;
    double sigma2 = 0.0; // frailty variance
    double alpha = 0.0;  // stable index, only for Stable

    static FrailtySpec degenerate() { return {}; }
    static FrailtySpec gamma(double sigma2);
    static FrailtySpec inverse_gaussian(double sigma2);
    static FrailtySpec stable(double alpha, double sigma2);

    void validate() const;
    bool is_degenerate() const { return family == FrailtyFamily::Degenerate; }
};

std::string family_name(FrailtyFamily family);
FrailtyFamily family_from_name(const std::string& name);

// L(s) in (0, 1]; strictly decreasing, L(0) = 1.
double laplace(const FrailtySpec& spec, double s);

// nu(s) = -log L(s); nondecreasing, concave, nu(0) = 0.
double nu(const FrailtySpec& spec, double s);

// nu'(s) = E[Z | integrated baseline = s] in (0, 1]; nu'(0) = 1.
double nu_prime(const FrailtySpec& spec, double s);

// Inverse of nu; throws numeric_error when the Gamma/stable form overflows.
double nu_inverse(const FrailtySpec& spec, double h);

// Mean frailty nu'(nu^{-1}(H)) from integrated cohort hazard H, closed form:
//   Gamma exp(-sigma2*H), IG 1/(1+sigma2*H),
//   Stable [1 + alpha/(1-alpha)*sigma2*H]^{(alpha-1)/alpha}.
double mean_frailty_from_H(const FrailtySpec& spec, double H);

Grid nu_inverse(const FrailtySpec& spec, const Grid& h);
Grid mean_frailty_from_H(const FrailtySpec& spec, const Grid& H);

} // namespace sfm

#endif
