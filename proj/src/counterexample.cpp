#include "qbsde/counterexample.hpp"

#include <algorithm>
#include <atomic>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>

#include "qbsde/parallel.hpp"
#include "qbsde/paths.hpp"

namespace qbsde {

namespace {

constexpr double kHalfWidth = std::numbers::pi / 2.0;

// Beyond this exponent the bridge probability is below 1e-17 and the uniform
// draw is skipped.
constexpr double kBridgeCutoff = 40.0;

struct Exit {
    double time;
    signed char side;
};

// One path; returns a negative time when the cap is reached.
template <class Engine>
Exit simulate_exit(Engine& engine, double dt, double cap) {
    boost::random::normal_distribution<double> normal;
    boost::random::uniform_01<double> uniform;
    const double sd = std::sqrt(dt);
    const double scale = 2.0 / dt;
    const auto steps = static_cast<std::size_t>(std::ceil(cap / dt));
    double x = 0.0;
    for (std::size_t k = 1; k <= steps; ++k) {
        const double next = x + sd * normal(engine);
        const double t = static_cast<double>(k) * dt;
        if (next >= kHalfWidth) return {t, 1};
        if (next <= -kHalfWidth) return {t, -1};
        const double up = scale * (kHalfWidth - x) * (kHalfWidth - next);
        const double down = scale * (kHalfWidth + x) * (kHalfWidth + next);
        if (std::min(up, down) < kBridgeCutoff) {
            const double p_up = std::exp(-up);
            const double p_down = std::exp(-down);
            const double u = uniform(engine);
            if (u < p_up) return {t, 1};
            if (u < p_up + p_down) return {t, -1};
        }
        x = next;
    }
    return {-1.0, 0};
}

double exp_weight(double a, double s) { return std::exp(0.5 * a * a * s); }

}  // namespace

ExitSample exit_time_samples(std::uint64_t seed, std::size_t npaths, double dt, bool strict, double cap) {
    if (!(dt > 0.0) || !(cap > dt)) throw std::invalid_argument("exit_time_samples: need 0 < dt < cap");
    if (npaths == 0) throw std::invalid_argument("exit_time_samples: need at least one path");
    if (strict && (dt > 1e-3 || npaths < 10000)) {
        throw std::invalid_argument("exit_time_samples: need dt <= 1e-3 and at least 1e4 paths, got dt = " +
                                    std::to_string(dt) + ", npaths = " + std::to_string(npaths));
    }
    ExitSample out;
    out.values.resize(npaths);
    out.sides.resize(npaths);
    out.npaths = npaths;
    out.dt = dt;
    out.seed = seed;
    out.cap = cap;
    std::atomic<std::size_t> resampled{0};
    parallel_for(npaths, 1024, [&](std::size_t begin, std::size_t end) {
        for (std::size_t p = begin; p < end; ++p) {
            std::seed_seq sequence{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                                   static_cast<std::uint32_t>(p), static_cast<std::uint32_t>(p >> 32)};
            std::mt19937_64 engine(sequence);
            Exit e = simulate_exit(engine, dt, cap);
            while (e.time < 0.0) {
                resampled.fetch_add(1, std::memory_order_relaxed);
                e = simulate_exit(engine, dt, cap);
            }
            out.values[p] = e.time;
            out.sides[p] = e.side;
        }
    });
    out.resampled = resampled.load();
    return out;
}

std::vector<double> stopping_time(const ExitSample& sample) {
    std::vector<double> tau(sample.values.size());
    std::transform(sample.values.begin(), sample.values.end(), tau.begin(),
                   [](double s) { return s / (1.0 + s); });
    return tau;
}

double exp_moment_closed_form(double a) {
    if (a < 0.0) throw std::invalid_argument("exp_moment_closed_form: a must be nonnegative");
    if (a >= 1.0) return std::numeric_limits<double>::infinity();
    return 1.0 / std::cos(a * std::numbers::pi / 2.0);
}

double ExpMoment::margin() const noexcept { return 3.0 * std_error - std::abs(estimate - closed_form); }

bool ExpMoment::within(double k) const noexcept {
    return std::isfinite(closed_form) && std::abs(estimate - closed_form) <= k * std_error;
}

double exit_tail_rate(const ExitSample& samples, double lower_quantile, double upper_quantile) {
    if (!(0.0 < lower_quantile && lower_quantile < upper_quantile && upper_quantile < 1.0)) {
        throw std::invalid_argument("exit_tail_rate: need 0 < lower < upper < 1");
    }
    std::vector<double> s = samples.values;
    if (s.size() < 100) throw std::invalid_argument("exit_tail_rate: need at least 100 samples");
    std::sort(s.begin(), s.end());
    const double n = static_cast<double>(s.size());
    const auto lo = static_cast<std::size_t>(lower_quantile * n);
    const auto hi = static_cast<std::size_t>(upper_quantile * n);
    // regress log survival on t at up to 200 evenly spaced order statistics
    const std::size_t stride = std::max<std::size_t>(1, (hi - lo) / 200);
    double sx = 0, sy = 0, sxx = 0, sxy = 0, m = 0;
    for (std::size_t k = lo; k < hi; k += stride) {
        const double t = s[k];
        const double y = std::log((n - static_cast<double>(k)) / n);
        sx += t;
        sy += y;
        sxx += t * t;
        sxy += t * y;
        m += 1;
    }
    const double den = m * sxx - sx * sx;
    if (m < 2 || den <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    return -(m * sxy - sx * sy) / den;
}

ExpMoment exp_moment(double a, const ExitSample& samples) {
    if (a < 0.0) throw std::invalid_argument("exp_moment: a must be nonnegative");
    if (samples.values.empty()) throw std::invalid_argument("exp_moment: empty sample");
    ExpMoment r;
    r.a = a;
    r.closed_form = exp_moment_closed_form(a);
    r.divergent = !std::isfinite(r.closed_form);
    std::vector<double> w(samples.values.size());
    std::transform(samples.values.begin(), samples.values.end(), w.begin(),
                   [a](double s) { return exp_weight(a, s); });
    const SampleStats stats = sample_stats(w);
    r.estimate = stats.mean;
    r.std_error = stats.std_error;
    if (samples.values.size() >= 100) {
        r.tail_rate = exit_tail_rate(samples);
        r.critical_a = std::sqrt(2.0 * r.tail_rate);
    }
    // the variance of exp(a^2 s / 2) needs a^2 below the tail rate
    const bool infinite_variance = r.tail_rate > 0.0 && a * a >= r.tail_rate;
    r.heavy_tail = a >= 0.8 || infinite_variance;
    if (r.divergent) {
        r.warnings.push_back("a >= 1: the exponential moment is infinite; the sample mean is not an estimate");
    } else if (r.heavy_tail) {
        r.warnings.push_back("heavy tail at a = " + std::to_string(a) + ": fitted tail rate " +
                             std::to_string(r.tail_rate) + " leaves the variance infinite or nearly so; "
                             "compare a with the fitted critical value " + std::to_string(r.critical_a) +
                             " rather than trusting the standard error");
    }
    return r;
}

RunningMean running_mean(double a, const ExitSample& samples, std::size_t first, std::size_t window,
                         double tolerance) {
    if (first == 0) throw std::invalid_argument("running_mean: first prefix must be nonempty");
    RunningMean r;
    const std::size_t n = samples.values.size();
    std::vector<double> w(n);
    std::transform(samples.values.begin(), samples.values.end(), w.begin(),
                   [a](double s) { return exp_weight(a, s); });
    for (std::size_t c = first; c <= n; c *= 2) {
        r.counts.push_back(c);
        r.means.push_back(pairwise_sum(std::span<const double>(w.data(), c)) / static_cast<double>(c));
    }
    const std::size_t changes = r.means.size() > 1 ? r.means.size() - 1 : 0;
    for (std::size_t k = changes > window ? changes - window : 0; k < changes; ++k) {
        const double rel = std::abs(r.means[k + 1] - r.means[k]) / std::abs(r.means[k]);
        r.max_change = std::max(r.max_change, rel);
    }
    r.unstable = r.max_change > tolerance;
    return r;
}

std::vector<HalvingBias> halving_bias(std::uint64_t seed, std::size_t npaths, double dt,
                                      const std::vector<double>& a_values, bool strict) {
    const ExitSample coarse = exit_time_samples(seed, npaths, dt, strict);
    const ExitSample fine = exit_time_samples(seed, npaths, dt / 2.0, strict);
    std::vector<HalvingBias> out;
    for (double a : a_values) {
        HalvingBias h;
        h.a = a;
        h.coarse = exp_moment(a, coarse).estimate;
        h.fine = exp_moment(a, fine).estimate;
        h.difference = h.coarse - h.fine;
        out.push_back(h);
    }
    return out;
}

FrontierVerdict solvability_frontier(double a, double maturity) {
    if (!(a > 0.0) || !(maturity > 1.0)) {
        throw std::invalid_argument("solvability_frontier: need a > 0 and T > 1");
    }
    FrontierVerdict v;
    v.a = a;
    v.maturity = maturity;
    v.bmo_norm = a;
    v.zeta1 = a / std::sqrt(maturity);
    v.criterion = a * (maturity - 1.0) / std::sqrt(maturity);
    v.margin = 1.0 - v.criterion;
    v.solvable = v.criterion < 1.0;
    return v;
}

double frontier_maturity(double a) {
    if (!(a > 0.0)) throw std::invalid_argument("frontier_maturity: a must be positive");
    // a s^2 - s - a = 0 with s = sqrt(T)
    const double s = (1.0 + std::sqrt(1.0 + 4.0 * a * a)) / (2.0 * a);
    return s * s;
}

void write_exp_moment_csv(const std::vector<ExpMoment>& rows, std::ostream& out) {
    const auto old_precision = out.precision(17);
    out << "a,estimate,stderr,closed_form,margin\n";
    for (const auto& r : rows) {
        out << r.a << ',' << r.estimate << ',' << r.std_error << ',' << r.closed_form << ',' << r.margin() << '\n';
    }
    out.precision(old_precision);
}

}  // namespace qbsde
