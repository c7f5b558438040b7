#pragma once

// Brute-force ball mass on a regular tree: every edge to the truncation depth
// is cut into 2^10 level segments, each integrated by the midpoint rule, with
// boundary-crossing segments split at the crossing found by bisection. Mass
// below the truncation depth is added band by band for each leaf.

#include <cmath>
#include <cstdint>
#include <vector>

namespace oracle {

struct RiemannBall {
    unsigned branching;
    unsigned depth;
    double eps;
    double beta;
    int segments = 1 << 10;

    // Metric length between levels lo <= hi along a single ray.
    double ray(double lo, double hi) const { return (std::exp(-eps * lo) - std::exp(-eps * hi)) / eps; }

    double midpoint(double a, double b, int pieces) const {
        double h = (b - a) / pieces;
        double s = 0.0;
        for (int i = 0; i < pieces; ++i) s += std::exp(-beta * (a + (i + 0.5) * h));
        return s * h;
    }

    // center: address digits of the lower vertex of its edge (empty = root), and level h.
    double mass(const std::vector<int>& center, double h, double r) const {
        std::vector<int> addr;
        double total = 0.0;
        walk(addr, center, h, r, total);
        return total;
    }

private:
    // Point on the edge above `addr` at level t: distance to the centre.
    double dist(std::size_t common, double t, double h) const {
        double meet = std::min<double>(static_cast<double>(common), std::min(t, h));
        return ray(meet, t) + ray(meet, h);
    }

    double edge_mass(std::size_t common, double m, double h, double r) const {
        double step = 1.0 / segments;
        double total = 0.0;
        for (int i = 0; i < segments; ++i) {
            double a = m + i * step;
            double b = a + step;
            // Split at the centre level so distance is monotone on each piece.
            if (h > a && h < b) {
                total += piece(common, a, h, h, r) + piece(common, h, b, h, r);
            } else {
                total += piece(common, a, b, h, r);
            }
        }
        return total;
    }

    double piece(std::size_t common, double a, double b, double h, double r) const {
        bool in_a = dist(common, a, h) < r;
        bool in_b = dist(common, b, h) < r;
        if (in_a && in_b) return midpoint(a, b, 1);
        if (!in_a && !in_b) {
            double mid = 0.5 * (a + b);
            return dist(common, mid, h) < r ? midpoint(a, b, 1) : 0.0;
        }
        double lo = a, hi = b;
        for (int k = 0; k < 60; ++k) {
            double mid = 0.5 * (lo + hi);
            bool in_mid = dist(common, mid, h) < r;
            if (in_mid == in_a) lo = mid; else hi = mid;
        }
        return in_a ? midpoint(a, lo, 1) : midpoint(hi, b, 1);
    }

    void walk(std::vector<int>& addr, const std::vector<int>& center, double h, double r,
              double& total) const {
        std::size_t common = 0;
        while (common < addr.size() && common < center.size() && addr[common] == center[common]) ++common;
        if (!addr.empty()) total += edge_mass(common, addr.size() - 1.0, h, r);
        if (addr.size() == depth) {
            total += tail(common, h, r);
            return;
        }
        for (unsigned d = 0; d < branching; ++d) {
            addr.push_back(static_cast<int>(d));
            walk(addr, center, h, r, total);
            addr.pop_back();
        }
    }

    // Everything strictly below a leaf at the truncation depth.
    double tail(std::size_t common, double h, double r) const {
        double leaf = depth;
        double rest = r - dist(common, leaf, h);
        if (rest <= 0.0) return 0.0;
        double total = 0.0;
        double count = branching;
        for (int j = 0; j < 4000; ++j) {
            double a = leaf + j;
            double b = a + 1.0;
            double inside = rest - ray(leaf, a);
            if (inside <= 0.0) break;
            if (ray(leaf, b) > rest) {
                // cutoff level inside this band
                double lo = a, hi = b;
                for (int k = 0; k < 60; ++k) {
                    double mid = 0.5 * (lo + hi);
                    if (ray(leaf, mid) < rest) lo = mid; else hi = mid;
                }
                b = lo;
            }
            double band = count * (std::exp(-beta * a) - std::exp(-beta * b)) / beta;
            total += band;
            if (band < 1e-20 * total) break;
            count *= branching;
        }
        return total;
    }
};

}  // namespace oracle
