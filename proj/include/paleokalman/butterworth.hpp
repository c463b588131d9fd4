#ifndef PALEOKALMAN_BUTTERWORTH_HPP
#define PALEOKALMAN_BUTTERWORTH_HPP

// Frequency-domain view of the order-m integrated random walk plus noise
// model: its Wiener-Kolmogorov smoother is a Butterworth low-pass filter with
//
//   G(lambda) = 1 / (1 + q^{-1} 2^{2m} sin^{2m}(lambda/2))
//
// and half-gain frequency lambda_h = 2 asin(q^{1/(2m)} / 2).

#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <vector>

#include "paleokalman/errors.hpp"

namespace paleokalman {

inline double gain(double lambda, double q, int m) {
    if (!(q > 0.0)) throw DomainError("gain: signal-to-noise ratio must be positive");
    if (m < 1) throw DomainError("gain: order must be at least 1");
    // q^{-1} (2 sin(lambda/2))^{2m}, formed in log space to survive tiny q
    const double s = 2.0 * std::abs(std::sin(0.5 * lambda));
    if (s == 0.0) return 1.0;
    const double ratio = std::exp(2.0 * m * std::log(s) - std::log(q));
    return 1.0 / (1.0 + ratio);
}

/// lambda_h for 0 < q <= 2^{2m}; the cutoff frequency proper is lambda_h / 2.
inline double cutoff_frequency(double q, int m) {
    if (m < 1) throw DomainError("cutoff_frequency: order must be at least 1");
    if (!(q > 0.0)) throw DomainError("cutoff_frequency: signal-to-noise ratio must be positive");
    const double arg = 0.5 * std::pow(q, 1.0 / (2.0 * m));
    if (arg > 1.0) throw DomainError("cutoff_frequency: q exceeds 2^(2m), no finite cutoff");
    return 2.0 * std::asin(arg);
}

/// q = sigma_eta^2 * mean_dt / sigma_eps^2.
inline double signal_to_noise(double sigma_eta2, double sigma_eps2, double mean_dt) {
    if (!(sigma_eps2 > 0.0)) throw DomainError("signal_to_noise: measurement variance must be positive");
    if (!(sigma_eta2 > 0.0) || !(mean_dt > 0.0)) throw DomainError("signal_to_noise: inputs must be positive");
    return sigma_eta2 * mean_dt / sigma_eps2;
}

struct GainSample {
    double lambda;
    double gain;
};

struct GainCurve {
    int m = 1;
    double q = 1.0;
    std::vector<GainSample> samples;
};

/// Gain on `points` uniformly spaced frequencies covering [0, pi].
inline GainCurve gain_curve(double q, int m, int points = 1024) {
    if (points < 2) throw DomainError("gain_curve: need at least two points");
    GainCurve c{m, q, {}};
    c.samples.reserve(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i) {
        const double lambda = std::numbers::pi * i / (points - 1);
        c.samples.push_back({lambda, gain(lambda, q, m)});
    }
    return c;
}

inline void write_gain_csv(std::ostream& os, const GainCurve& c) {
    os << "lambda,gain\n";
    char buf[64];
    for (const auto& s : c.samples) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", s.lambda, s.gain);
        os << buf;
    }
}

}  // namespace paleokalman

#endif  // PALEOKALMAN_BUTTERWORTH_HPP
