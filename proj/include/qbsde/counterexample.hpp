#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace qbsde {

/// First exit times of a standard Brownian motion from (-pi/2, pi/2).
///
/// After the time change <M>_t = t / (1 - t) the stopped martingale
/// M = int_0^{t ^ tau} dB / (1 - s) is a Brownian motion run until it leaves
/// the interval, so `values` holds samples of <M>_tau. The stopping time
/// itself is recovered by stopping_time().
struct ExitSample {
    std::vector<double> values;
    std::vector<signed char> sides;  ///< +1 or -1: the boundary that was hit
    std::size_t npaths = 0;
    double dt = 0.0;
    std::uint64_t seed = 0;
    std::size_t resampled = 0;       ///< paths that hit the time cap and were redrawn
    double cap = 0.0;
};

inline constexpr double kExitCap = 1e3;

/// Euler steps with a Brownian-bridge crossing test between grid points: a step
/// from x to x' that stays inside exits with probability
/// exp(-2 (pi/2 - x)(pi/2 - x') / dt) through the top, and likewise through the
/// bottom with pi/2 + x.
/// Path p uses its own engine seeded from (seed, p), so the sample does not
/// depend on the thread count. Throws std::invalid_argument unless dt <= 1e-3
/// and npaths >= 1e4 (pass `strict = false` to relax both for quick checks).
ExitSample exit_time_samples(std::uint64_t seed, std::size_t npaths, double dt, bool strict = true,
                             double cap = kExitCap);

/// tau = s / (1 + s), inverting <M>_t = t / (1 - t); lies in (0, 1).
std::vector<double> stopping_time(const ExitSample& sample);

/// 1 / cos(a pi / 2) for 0 <= a < 1, +infinity for a >= 1.
double exp_moment_closed_form(double a);

struct ExpMoment {
    double a = 0.0;
    double estimate = 0.0;      ///< mean of exp(a^2 s / 2)
    double std_error = 0.0;     ///< from the sample variance; unreliable once heavy_tail is set
    double closed_form = 0.0;
    bool divergent = false;     ///< closed form is infinite
    bool heavy_tail = false;    ///< a >= 0.8 or the fitted tail makes the variance infinite
    double tail_rate = 0.0;     ///< fitted lambda in P(s > t) ~ C exp(-lambda t)
    double critical_a = 0.0;    ///< sqrt(2 lambda): moment finite below it
    std::vector<std::string> warnings;

    /// 3 stderr - |estimate - closed_form|, negative when outside the band.
    double margin() const noexcept;
    bool within(double k = 3.0) const noexcept;
};

/// Throws std::invalid_argument for a < 0 or an empty sample.
ExpMoment exp_moment(double a, const ExitSample& samples);

/// Least-squares slope of -log P(s > t) over the empirical tail between the
/// given quantiles.
double exit_tail_rate(const ExitSample& samples, double lower_quantile = 0.5, double upper_quantile = 0.999);

/// Running means of exp(a^2 s / 2) on prefixes of doubling length starting at
/// `first`. `unstable` is set when any of the last `window` successive relative
/// changes exceeds `tolerance`.
struct RunningMean {
    std::vector<std::size_t> counts;
    std::vector<double> means;
    double max_change = 0.0;
    bool unstable = false;
};
RunningMean running_mean(double a, const ExitSample& samples, std::size_t first = 1024, std::size_t window = 3,
                         double tolerance = 0.05);

/// Estimates at dt and dt / 2 from the same seed; the difference is the
/// discretisation bias remainder.
struct HalvingBias {
    double a = 0.0;
    double coarse = 0.0;
    double fine = 0.0;
    double difference = 0.0;
};
std::vector<HalvingBias> halving_bias(std::uint64_t seed, std::size_t npaths, double dt,
                                      const std::vector<double>& a_values, bool strict = true);

/// Terminal (a / sqrt(T)) B_T has bmo norm a; the third component is solvable
/// iff a (T - 1) / sqrt(T) < 1. Throws std::invalid_argument unless T > 1, a > 0.
struct FrontierVerdict {
    double a = 0.0;
    double maturity = 0.0;
    double bmo_norm = 0.0;    ///< = a
    double zeta1 = 0.0;       ///< a / sqrt(T)
    double criterion = 0.0;   ///< a (T - 1) / sqrt(T)
    double margin = 0.0;      ///< 1 - criterion
    bool solvable = false;
};
FrontierVerdict solvability_frontier(double a, double maturity);

/// Smallest maturity at which a given bmo norm stops being solvable
/// (root of a (T - 1) = sqrt(T)).
double frontier_maturity(double a);

/// Columns a, estimate, stderr, closed_form, margin.
void write_exp_moment_csv(const std::vector<ExpMoment>& rows, std::ostream& out);

}  // namespace qbsde
