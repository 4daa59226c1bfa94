#pragma once

#include <cstdint>
#include <numeric>
#include <optional>
#include <string>

namespace cpal {

// Exact nonnegative rational, used for state probabilities given as "a/b"
// strings so that e.g. three copies of 1/3 sum to exactly 1. Arithmetic
// returns nullopt on overflow; callers fall back to double checks.
struct Rational {
    std::int64_t num = 0;
    std::int64_t den = 1;

    static Rational normalized(std::int64_t n, std::int64_t d) {
        if (d < 0) { n = -n; d = -d; }
        std::int64_t g = std::gcd(n < 0 ? -n : n, d);
        if (g > 1) { n /= g; d /= g; }
        return Rational{n, d};
    }

    double to_double() const { return static_cast<double>(num) / static_cast<double>(den); }

    bool operator==(const Rational& o) const { return num == o.num && den == o.den; }

    std::string str() const {
        if (den == 1) return std::to_string(num);
        return std::to_string(num) + "/" + std::to_string(den);
    }
};

inline std::optional<Rational> rat_add(const Rational& a, const Rational& b) {
    __int128 n = static_cast<__int128>(a.num) * b.den + static_cast<__int128>(b.num) * a.den;
    __int128 d = static_cast<__int128>(a.den) * b.den;
    __int128 lim = static_cast<__int128>(INT64_MAX);
    if (n > lim || n < -lim || d > lim) return std::nullopt;
    return Rational::normalized(static_cast<std::int64_t>(n), static_cast<std::int64_t>(d));
}

// Accepts "a/b" and plain integers; anything else (including signs other than
// a leading minus on the numerator) is rejected.
std::optional<Rational> parse_rational(const std::string& text);

} // namespace cpal
