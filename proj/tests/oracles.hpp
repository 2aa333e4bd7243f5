#pragma once

#include <cmath>

namespace qsd::test {

// Ai'(z) from the Maclaurin series of Ai: a_n = a_{n-3} / (n(n-1)).
inline long double airy_prime(long double z) {
    constexpr int kTerms = 300;
    long double a[kTerms];
    a[0] = 1.0L / (std::pow(3.0L, 2.0L / 3.0L) * std::tgamma(2.0L / 3.0L));
    a[1] = -1.0L / (std::pow(3.0L, 1.0L / 3.0L) * std::tgamma(1.0L / 3.0L));
    a[2] = 0.0L;
    for (int n = 3; n < kTerms; ++n) a[n] = a[n - 3] / (static_cast<long double>(n) * (n - 1));
    long double sum = 0.0L;
    for (int n = kTerms - 1; n >= 1; --n) sum = sum * z + n * a[n];
    return sum;
}

inline double airy_prime_root(double lo, double hi) {
    long double flo = airy_prime(lo);
    for (int i = 0; i < 200; ++i) {
        long double mid = 0.5L * (lo + hi);
        long double fm = airy_prime(mid);
        if ((fm < 0) == (flo < 0)) {
            lo = static_cast<double>(mid);
            flo = fm;
        } else {
            hi = static_cast<double>(mid);
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace qsd::test
