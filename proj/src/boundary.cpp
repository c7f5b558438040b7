#include "cantree/boundary.hpp"

#include "cantree/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

namespace cantree {

BoundarySpace::BoundarySpace(TreeSpec spec, double epsilon) : spec_(std::move(spec)), epsilon_(epsilon) {
    if (!(epsilon_ > 0.0) || !std::isfinite(epsilon_)) throw ParameterViolation("epsilon must be positive");
    if (spec_.is_regular()) {
        unsigned k = spec_.branching();
        if (k < 2) throw PreconditionViolation("boundary needs at least two children per vertex");
        pow_.push_back(1);
        for (unsigned j = 1; j <= spec_.depth(); ++j) {
            if (pow_.back() > (std::uint64_t{1} << 62) / k) throw PreconditionViolation("too many boundary cells");
            pow_.push_back(pow_.back() * k);
        }
        count_ = pow_.back();
    } else {
        cells_ = vertices_at_level(spec_, spec_.depth());
        count_ = cells_.size();
    }
}

VertexId BoundarySpace::address(CellIndex cell) const {
    if (cell >= count_) throw PreconditionViolation("cell index out of range");
    if (!cells_.empty()) return cells_[cell];
    std::vector<Digit> digits(depth());
    unsigned k = branching();
    for (unsigned i = depth(); i-- > 0;) {
        digits[i] = static_cast<Digit>(cell % k);
        cell /= k;
    }
    return VertexId(std::move(digits));
}

CellIndex BoundarySpace::cell_of(const VertexId& a) const {
    if (a.level() != depth()) throw PreconditionViolation("boundary address must have length N");
    spec_.validate(a);
    if (!cells_.empty()) {
        auto it = std::lower_bound(cells_.begin(), cells_.end(), a);
        return static_cast<CellIndex>(it - cells_.begin());
    }
    CellIndex c = 0;
    for (auto d : a.digits()) c = c * branching() + d;
    return c;
}

CellIndex BoundarySpace::prefix(CellIndex cell, unsigned level) const {
    if (!spec_.is_regular()) throw Unsupported("packed prefixes need a regular tree");
    if (level > depth()) throw PreconditionViolation("prefix level beyond depth");
    return cell / pow_[depth() - level];
}

unsigned BoundarySpace::split_level(CellIndex a, CellIndex b) const {
    if (a >= count_ || b >= count_) throw PreconditionViolation("cell index out of range");
    if (a == b) throw SameCell();
    if (!cells_.empty()) return static_cast<unsigned>(lca(cells_[a], cells_[b]).level());
    unsigned k = branching();
    if (std::has_single_bit(k)) {
        unsigned bits = static_cast<unsigned>(std::countr_zero(k));
        unsigned width = static_cast<unsigned>(std::bit_width(a ^ b));
        return depth() - (width + bits - 1) / bits;
    }
    // Smallest e with a / K^e == b / K^e.
    unsigned lo = 1, hi = depth();
    while (lo < hi) {
        unsigned mid = (lo + hi) / 2;
        if (a / pow_[mid] == b / pow_[mid]) hi = mid; else lo = mid + 1;
    }
    return depth() - lo;
}

double BoundarySpace::level_scale(int level) const { return diameter() * std::exp(-epsilon_ * level); }

double BoundarySpace::visual_distance(CellIndex a, CellIndex b) const {
    return level_scale(static_cast<int>(split_level(a, b)));
}

LevelForRadius BoundarySpace::level_for_radius(double radius) const {
    if (!(radius > 0.0)) throw PreconditionViolation("radius must be positive");
    LevelForRadius out;
    if (radius > level_scale(-1)) {
        out.clamped = true;
        return out;
    }
    double guess = std::floor(1.0 + std::log(diameter() / radius) / epsilon_);
    int k = static_cast<int>(std::clamp(guess, 0.0, 1e6));
    // Enforce scale(k) < r <= scale(k-1) against rounding in the logarithm.
    while (k > 0 && !(radius <= level_scale(k - 1))) --k;
    while (!(level_scale(k) < radius)) ++k;
    if (k > static_cast<int>(depth())) {
        out.level = depth();
        out.clamped = true;
    } else {
        out.level = static_cast<unsigned>(k);
    }
    return out;
}

CellRange BoundarySpace::ball_cells(CellIndex center, double radius) const {
    if (center >= count_) throw PreconditionViolation("cell index out of range");
    LevelForRadius lv = level_for_radius(radius);
    CellRange out;
    out.level = lv.level;
    out.clamped = lv.clamped;
    if (cells_.empty()) {
        std::uint64_t width = pow_[depth() - lv.level];
        out.begin = center / width * width;
        out.end = out.begin + width;
        return out;
    }
    VertexId top = cells_[center].prefix(lv.level);
    auto first = std::lower_bound(cells_.begin(), cells_.end(), top);
    auto last = std::partition_point(first, cells_.end(), [&](const VertexId& c) { return top.is_ancestor_of(c); });
    out.begin = static_cast<CellIndex>(first - cells_.begin());
    out.end = static_cast<CellIndex>(last - cells_.begin());
    return out;
}

double BoundarySpace::cell_measure(unsigned level) const {
    if (!spec_.is_regular()) throw Unsupported("uniform boundary measure needs a regular tree");
    if (level > depth()) throw PreconditionViolation("cell level beyond depth");
    return std::pow(static_cast<double>(branching()), -static_cast<double>(level));
}

double BoundarySpace::hausdorff_dimension() const {
    if (!spec_.is_regular()) throw Unsupported("dimension of a nonuniform boundary is not defined here");
    return std::log(static_cast<double>(branching())) / epsilon_;
}

AhlforsReport BoundarySpace::ahlfors_regularity_report(const std::vector<AhlforsSample>& samples) const {
    double q = hausdorff_dimension();
    AhlforsReport rep;
    rep.min_ratio = std::numeric_limits<double>::infinity();
    rep.max_ratio = 0.0;
    for (const auto& s : samples) {
        CellRange ball = ball_cells(s.center, s.radius);
        double ratio = cell_measure(ball.level) / std::pow(s.radius, q);
        if (ratio < rep.min_ratio) {
            rep.min_ratio = ratio;
            rep.argmin = s;
        }
        if (ratio > rep.max_ratio) {
            rep.max_ratio = ratio;
            rep.argmax = s;
        }
    }
    rep.sample_count = samples.size();
    rep.spread = samples.empty() ? 0.0 : rep.max_ratio / rep.min_ratio;
    return rep;
}

}  // namespace cantree
