#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

namespace prefopt {

// log(1 + exp(x))
inline double softplus(double x) {
    if (x > 0.0)
        return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

// log(sigma(x)); exact for very negative x where sigma underflows.
inline double log_sigmoid(double x) { return -softplus(-x); }

// 1/(1 + exp(-x)) without overflow on either tail.
inline double sigmoid(double x) {
    if (x >= 0.0)
        return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

// Max-shifted log(sum exp(v)).
inline double log_sum_exp(std::span<const double> v) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v)
        m = std::max(m, x);
    if (!std::isfinite(m))
        return m;
    double s = 0.0;
    for (double x : v)
        s += std::exp(x - m);
    return m + std::log(s);
}

inline void log_softmax(std::span<const double> logits, std::span<double> out) {
    double lse = log_sum_exp(logits);
    for (std::size_t i = 0; i < logits.size(); ++i)
        out[i] = logits[i] - lse;
}

} // namespace prefopt
