#pragma once

// Direct cell-pair definitions of E_p, the double-integral Besov form and the
// Holder quotient, straight from digit strings. Quadratic in the cell count.

#include <cmath>
#include <cstdint>
#include <vector>

namespace oracle {

struct NaiveBoundary {
    unsigned branching;
    unsigned depth;
    double eps;

    std::vector<int> digits(std::uint64_t cell) const {
        std::vector<int> d(depth);
        for (unsigned i = depth; i-- > 0;) {
            d[i] = static_cast<int>(cell % branching);
            cell /= branching;
        }
        return d;
    }

    // 0 for the same cell.
    double dist(std::uint64_t a, std::uint64_t b) const {
        if (a == b) return 0.0;
        auto da = digits(a), db = digits(b);
        unsigned k = 0;
        while (da[k] == db[k]) ++k;
        return 2.0 / eps * std::exp(-eps * k);
    }

    std::uint64_t count() const { return static_cast<std::uint64_t>(std::pow(branching, depth) + 0.5); }

    double ep_power(const std::vector<double>& f, double t, double p) const {
        std::uint64_t n = count();
        double cell = 1.0 / n, total = 0.0;
        for (std::uint64_t a = 0; a < n; ++a) {
            double ball = 0.0, s = 0.0;
            for (std::uint64_t b = 0; b < n; ++b) {
                if (dist(a, b) < t) {
                    ball += cell;
                    s += std::pow(std::abs(f[a] - f[b]), p) * cell;
                }
            }
            total += s / ball * cell;
        }
        return total;
    }

    double double_integral_power(const std::vector<double>& f, double theta, double p) const {
        std::uint64_t n = count();
        double cell = 1.0 / n, total = 0.0;
        for (std::uint64_t a = 0; a < n; ++a) {
            for (std::uint64_t b = 0; b < n; ++b) {
                if (a == b) continue;
                double d = dist(a, b);
                double closed = 0.0;
                for (std::uint64_t c = 0; c < n; ++c) {
                    if (dist(a, c) <= d) closed += cell;
                }
                total += std::pow(std::abs(f[a] - f[b]), p) / (std::pow(d, theta * p) * closed) * cell * cell;
            }
        }
        return total;
    }

    double holder(const std::vector<double>& f, double alpha) const {
        std::uint64_t n = count();
        double best = 0.0;
        for (std::uint64_t a = 0; a < n; ++a) {
            for (std::uint64_t b = a + 1; b < n; ++b) best = std::max(best, std::abs(f[a] - f[b]) / std::pow(dist(a, b), alpha));
        }
        return best;
    }
};

}  // namespace oracle
