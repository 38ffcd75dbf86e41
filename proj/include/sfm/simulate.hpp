#ifndef SFM_SIMULATE_HPP
#define SFM_SIMULATE_HPP

#include <cstdint>

#include "sfm/baseline.hpp"
#include "sfm/frailty.hpp"
#include "sfm/surface.hpp"

namespace sfm {

// Synthetic surface from a frailty model: I(t,x) sums F along cohort
// diagonals starting at x_min (first-year baseline values before t_min),
// mu = nu'(I)*F (+ G when a background model is given), and
// D(t,x) ~ Poisson(mu*E) at constant exposure, reproducible from the seed.
MortalitySurface simulate_surface(const FrailtySpec& frailty, const BaselineParams& baseline,
                                  const LexisWindow& window, double exposure_level,
                                  std::uint64_t seed, const BaselineParams* background = nullptr);

// The cohort-integrated baseline used by simulate_surface; exposed so tests
// can check construction identities exactly.
Grid integrated_baseline(const BaselineParams& baseline, const LexisWindow& window);

} // namespace sfm

#endif
