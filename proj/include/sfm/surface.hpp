#ifndef SFM_SURFACE_HPP
#define SFM_SURFACE_HPP

#include "sfm/types.hpp"

namespace sfm {

// Death counts D(t,x) and exposures E(t,x) on a Lexis window. Deaths and
// exposures are fractional reals (HMD splits deaths across Lexis triangles).
// Cells with E = 0 carry D = 0 and are excluded from likelihood sums.
struct MortalitySurface {
    LexisWindow window;
    Grid deaths;
    Grid exposures;

    void validate() const;
};

struct RateSurface {
    LexisWindow window;
    Grid rates; // m(t,x) = D/E, 0 on zero-exposure cells
};

RateSurface death_rates(const MortalitySurface& surface);

// Death rates extended outside the data window: initial-year rates before
// t_min, zero below x_min. Queries above t_max or x_max are out of domain.
class ExtendedRates {
public:
    explicit ExtendedRates(RateSurface rates) : rates_(std::move(rates)) {}

    double operator()(int t, int x) const;
    const LexisWindow& window() const { return rates_.window; }

private:
    RateSurface rates_;
};

enum class HazardMode { Cohort, Period };

// Integrated hazard estimates: cohort Htilde(t,x) sums extended rates along
// the cohort diagonal up to age x-1, period Hcheck(t,x) sums within year t.
// With a background grid the summands are m - G (negatives kept as-is).
struct CumulativeHazardTable {
    LexisWindow window;
    Grid values;
    HazardMode mode = HazardMode::Cohort;
    bool background_subtracted = false;
};

CumulativeHazardTable cumulative_hazard(const RateSurface& rates, HazardMode mode,
                                        const Grid* background = nullptr);

// Restriction of a surface to a window it covers.
MortalitySurface subsurface(const MortalitySurface& surface, const LexisWindow& window);

} // namespace sfm

#endif
