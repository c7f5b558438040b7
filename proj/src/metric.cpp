#include "cantree/metric.hpp"

#include "cantree/errors.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

namespace cantree {

MetricWeights::MetricWeights(double epsilon_, double beta_) : epsilon(epsilon_), beta(beta_) {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ParameterViolation("epsilon must be positive");
    if (!std::isfinite(beta)) throw ParameterViolation("beta must be finite");
}

double MetricWeights::dimension_exponent() const { return std::max(1.0, beta / epsilon); }

void MetricWeights::require_finite_measure(unsigned max_branching) const {
    double bound = std::log(static_cast<double>(max_branching));
    if (!(beta > bound)) {
        throw ParameterViolation("beta = " + std::to_string(beta) + " must exceed log K = " +
                                 std::to_string(bound));
    }
}

TreePoint TreePoint::at_vertex(const VertexId& v) { return {v, 1.0}; }

double TreePoint::level() const {
    if (edge.is_root()) return 0.0;
    return static_cast<double>(edge.level()) - 1.0 + fraction;
}

double exp_integral(double rate, double a, double b) {
    if (!(b > a)) return 0.0;
    if (rate == 0.0) return b - a;
    if (std::isinf(b)) return std::exp(-rate * a) / rate;
    return -std::exp(-rate * a) * std::expm1(-rate * (b - a)) / rate;
}

double edge_length(double epsilon, unsigned upper_level) {
    return exp_integral(epsilon, upper_level, upper_level + 1.0);
}

namespace {

void check_point(const TreePoint& p) {
    if (!(p.fraction >= 0.0 && p.fraction <= 1.0)) throw PreconditionViolation("edge fraction outside [0,1]");
}

double path_integral(double epsilon, double s, double t) {
    return exp_integral(epsilon, std::min(s, t), std::max(s, t));
}

}  // namespace

double metric_distance(const MetricWeights& w, const TreePoint& a, const TreePoint& b) {
    check_point(a);
    check_point(b);
    double ha = a.level();
    double hb = b.level();
    if (a.edge == b.edge) return path_integral(w.epsilon, ha, hb);
    if (a.edge.is_ancestor_of(b.edge) || b.edge.is_ancestor_of(a.edge)) {
        return path_integral(w.epsilon, ha, hb);
    }
    double top = static_cast<double>(lca(a.edge, b.edge).level());
    return path_integral(w.epsilon, top, ha) + path_integral(w.epsilon, top, hb);
}

double metric_distance(const MetricWeights& w, const VertexId& a, const VertexId& b) {
    return metric_distance(w, TreePoint::at_vertex(a), TreePoint::at_vertex(b));
}

namespace {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    Interval& operator+=(const Interval& o) {
        lo += o.lo;
        hi += o.hi;
        return *this;
    }
};

// Lowest level reached going down from `level` with `radius` of budget left.
double downward_reach(double epsilon, double level, double radius) {
    double rest = 1.0 - epsilon * radius * std::exp(epsilon * level);
    if (rest <= 0.0) return kInfiniteLevel;
    return level - std::log(rest) / epsilon;
}

// Highest level reached going up from `level` with `radius` of budget.
double upward_reach(double epsilon, double level, double radius) {
    return level - std::log1p(epsilon * radius * std::exp(epsilon * level)) / epsilon;
}

class MassCalc {
public:
    MassCalc(const TreeSpec& spec, const MetricWeights& w) : spec_(spec), w_(w) {}

    // Mass strictly below a vertex of a regular `branching`-ary tree at `level`,
    // restricted to levels < cutoff.
    double regular_below(unsigned branching, double level, double cutoff) const {
        if (!(cutoff > level)) return 0.0;
        double k = branching;
        double q = k * std::exp(-w_.beta);
        double base = k * exp_integral(w_.beta, level, level + 1.0);
        if (std::isinf(cutoff)) return base / (1.0 - q);
        double span = cutoff - level;
        double whole = std::floor(span);
        double qj = std::pow(q, whole);
        double complete = base * (1.0 - qj) / (1.0 - q);
        double partial = k * std::exp(-w_.beta * level) * qj * -std::expm1(-w_.beta * (span - whole)) / w_.beta;
        return complete + partial;
    }

    Interval below(const VertexId& v, double cutoff) const {
        double n = static_cast<double>(v.level());
        if (!(cutoff > n)) return {};
        if (spec_.is_regular()) {
            double m = regular_below(spec_.branching(), n, cutoff);
            return {m, m};
        }
        if (v.level() >= spec_.depth()) {
            return {regular_below(1, n, cutoff), regular_below(spec_.max_branching(), n, cutoff)};
        }
        Interval total;
        unsigned c = spec_.child_count(v);
        for (unsigned i = 0; i < c; ++i) total += branch(v.child(static_cast<Digit>(i)), cutoff);
        return total;
    }

    // Edge parent(c) -> c together with everything below c, levels < cutoff.
    Interval branch(const VertexId& c, double cutoff) const {
        double m = static_cast<double>(c.level()) - 1.0;
        double edge = exp_integral(w_.beta, m, std::min(m + 1.0, cutoff));
        Interval total{edge, edge};
        if (cutoff > m + 1.0) total += below(c, cutoff);
        return total;
    }

private:
    const TreeSpec& spec_;
    const MetricWeights& w_;
};

void finish_ball(BallReport& rep, const MetricWeights& w) {
    for (const auto& part : rep.decomposition) {
        rep.measure_lo += part.mass_lo;
        rep.measure_hi += part.mass_hi;
    }
    rep.exact = rep.measure_lo == rep.measure_hi;
    rep.measure = 0.5 * (rep.measure_lo + rep.measure_hi);
    double h = rep.center.level();
    rep.critical_radius = std::exp(-w.epsilon * h) / w.epsilon;
    if (rep.radius <= rep.critical_radius) {
        rep.regime = BallRegime::small_radius;
        rep.comparison_value = std::exp((w.epsilon - w.beta) * h) * rep.radius;
    } else {
        rep.regime = BallRegime::large_radius;
        rep.comparison_value = std::pow(rep.radius, w.beta / w.epsilon);
    }
    rep.ratio = rep.measure / rep.comparison_value;
}

}  // namespace

BallReport ball_measure(const TreeSpec& spec, const MetricWeights& w, const TreePoint& center,
                        double radius) {
    w.require_finite_measure(spec.max_branching());
    check_point(center);
    spec.validate(center.edge);
    if (!(radius > 0.0)) throw PreconditionViolation("ball radius must be positive");

    BallReport rep;
    rep.center = center;
    rep.requested_radius = radius;
    rep.radius = radius;
    double cap = 2.0 * w.diameter();
    if (radius > cap) {
        rep.radius = cap;
        rep.radius_clamped = true;
    }
    double r = rep.radius;
    MassCalc calc(spec, w);

    if (center.is_root()) {
        double cutoff = downward_reach(w.epsilon, 0.0, r);
        Interval m = calc.below(VertexId::root(), cutoff);
        rep.decomposition.push_back({BallPart::Kind::subtree, VertexId::root(), 1, 0.0, cutoff, m.lo, m.hi});
        finish_ball(rep, w);
        return rep;
    }

    const VertexId& v = center.edge;
    double h = center.level();
    double nv = static_cast<double>(v.level());

    // Downward: rest of the centre's edge, then the subtree below v.
    double down = downward_reach(w.epsilon, h, r);
    if (h < nv) {
        double m = exp_integral(w.beta, h, std::min(nv, down));
        rep.decomposition.push_back({BallPart::Kind::edge_segment, v, 1, h, std::min(nv, down), m, m});
    }
    if (down > nv) {
        Interval m = calc.below(v, down);
        rep.decomposition.push_back({BallPart::Kind::subtree, v, 1, nv, down, m.lo, m.hi});
    }

    // Upward along the root path.
    double up = std::max(0.0, upward_reach(w.epsilon, h, r));
    {
        double m = exp_integral(w.beta, up, h);
        rep.decomposition.push_back({BallPart::Kind::path_segment, v, 1, up, h, m, m});
    }

    // Side branches hanging off each ancestor inside the ball.
    for (std::size_t lvl = v.level(); lvl-- > 0;) {
        double m = static_cast<double>(lvl);
        double dist = exp_integral(w.epsilon, m, h);
        if (!(dist < r)) break;
        double cutoff = downward_reach(w.epsilon, m, r - dist);
        VertexId anc = v.prefix(lvl);
        Digit on_path = v[lvl];
        if (spec.is_regular()) {
            unsigned k = spec.branching();
            if (k < 2) continue;
            double edge = exp_integral(w.beta, m, std::min(m + 1.0, cutoff));
            double below = calc.regular_below(k, m + 1.0, cutoff);
            double mass = (k - 1) * (edge + below);
            rep.decomposition.push_back({BallPart::Kind::branch, anc, k - 1, m, cutoff, mass, mass});
        } else {
            unsigned c = spec.child_count(anc);
            for (unsigned i = 0; i < c; ++i) {
                if (i == on_path) continue;
                VertexId side = anc.child(static_cast<Digit>(i));
                Interval mass = calc.branch(side, cutoff);
                rep.decomposition.push_back({BallPart::Kind::branch, side, 1, m, cutoff, mass.lo, mass.hi});
            }
        }
    }
    finish_ball(rep, w);
    return rep;
}

HalfBallReport half_ball_measure(const TreeSpec& spec, const MetricWeights& w, const VertexId& top,
                                 double radius) {
    w.require_finite_measure(spec.max_branching());
    spec.validate(top);
    if (!(radius > 0.0)) throw PreconditionViolation("half-ball radius must be positive");
    MassCalc calc(spec, w);
    double z = static_cast<double>(top.level());
    double cutoff = downward_reach(w.epsilon, z, radius);
    Interval m = calc.below(top, cutoff);

    HalfBallReport rep;
    rep.measure_lo = m.lo;
    rep.measure_hi = m.hi;
    rep.measure = 0.5 * (m.lo + m.hi);
    rep.depth_reach = cutoff - z;
    rep.comparison_value = std::exp((w.epsilon - w.beta) * z) * radius;
    double log_k = std::log(static_cast<double>(spec.max_branching()));
    double scaled = std::min(1.0, w.epsilon * radius * std::exp(w.epsilon * z));
    rep.continuum_estimate = std::exp(-w.beta * z) / (w.beta - log_k) *
                             (1.0 - std::pow(1.0 - scaled, (w.beta - log_k) / w.epsilon));
    return rep;
}

double total_measure(const TreeSpec& spec, const MetricWeights& w) {
    return ball_measure(spec, w, TreePoint::root(), 2.0 * w.diameter()).measure;
}

double doubling_ratio(const TreeSpec& spec, const MetricWeights& w, const TreePoint& center,
                      double radius) {
    double small = ball_measure(spec, w, center, radius).measure;
    double large = ball_measure(spec, w, center, 2.0 * radius).measure;
    return large / small;
}

std::vector<double> radius_grid(const MetricWeights& w, unsigned depth) {
    std::vector<double> out;
    for (unsigned j = 0; j <= depth; ++j) {
        double r = w.diameter() * std::exp(-w.epsilon * j);
        out.push_back(r);
        out.push_back(0.5 * r);
    }
    return out;
}

std::vector<NestedBallSample> nested_ball_grid(const TreeSpec& spec, const MetricWeights& w) {
    std::vector<TreePoint> ray;
    for (unsigned n = 0; n <= spec.depth(); ++n) {
        ray.push_back(TreePoint::at_vertex(VertexId(std::vector<Digit>(n, 0))));
    }
    std::vector<double> radii = radius_grid(w, spec.depth());
    std::vector<NestedBallSample> out;
    for (std::size_t i = 0; i < ray.size(); ++i) {
        for (double r : radii) {
            for (std::size_t j = i; j < ray.size(); ++j) {
                if (!(metric_distance(w, ray[i], ray[j]) < r)) break;
                for (double rr : radii) {
                    if (rr <= r) out.push_back({ray[i], r, ray[j], rr});
                }
            }
        }
    }
    return out;
}

DimensionReport dimension_condition_check(const TreeSpec& spec, const MetricWeights& w,
                                          const std::vector<NestedBallSample>& samples,
                                          std::optional<double> alt_exponent) {
    DimensionReport rep;
    rep.exponent = w.dimension_exponent();
    rep.alt_exponent = alt_exponent;
    rep.sample_count = samples.size();
    rep.statistic = std::numeric_limits<double>::infinity();
    rep.alt_statistic = std::numeric_limits<double>::infinity();
    std::map<std::tuple<VertexId, double, double>, double> memo;
    auto mass = [&](const TreePoint& c, double r) {
        auto key = std::make_tuple(c.edge, c.fraction, r);
        auto it = memo.find(key);
        if (it != memo.end()) return it->second;
        double m = ball_measure(spec, w, c, r).measure;
        memo.emplace(key, m);
        return m;
    };
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        if (!(s.inner_radius <= s.outer_radius)) throw PreconditionViolation("inner radius exceeds outer radius");
        if (!(metric_distance(w, s.outer_center, s.inner_center) < s.outer_radius)) {
            throw PreconditionViolation("inner centre outside the outer ball");
        }
        double ratio = mass(s.inner_center, s.inner_radius) / mass(s.outer_center, s.outer_radius);
        double scale = s.inner_radius / s.outer_radius;
        double stat = ratio / std::pow(scale, rep.exponent);
        if (stat < rep.statistic) {
            rep.statistic = stat;
            rep.worst_sample = i;
        }
        if (alt_exponent) {
            double alt = ratio / std::pow(scale, *alt_exponent);
            if (alt < rep.alt_statistic) {
                rep.alt_statistic = alt;
                rep.alt_worst_sample = i;
            }
        }
    }
    return rep;
}

AlgebraicEnvelope algebraic_envelope(double sigma, double t) {
    if (!(sigma > 0.0)) throw ParameterViolation("sigma must be positive");
    if (!(t >= 0.0 && t <= 1.0)) throw ParameterViolation("t must lie in [0,1]");
    return {std::min(1.0, sigma) * t, 1.0 - std::pow(1.0 - t, sigma), std::max(1.0, sigma) * t};
}

const GaussRule& gauss16() {
    static const GaussRule rule = [] {
        using G = boost::math::quadrature::gauss<double, 16>;
        GaussRule r{};
        const auto& x = G::abscissa();
        const auto& wt = G::weights();
        // Boost stores the non-negative half of the symmetric rule.
        for (std::size_t i = 0; i < 8; ++i) {
            r.nodes[7 - i] = -x[i];
            r.weights[7 - i] = wt[i];
            r.nodes[8 + i] = x[i];
            r.weights[8 + i] = wt[i];
        }
        return r;
    }();
    return rule;
}

BallQuadrature::Table BallQuadrature::make_table(unsigned upper_level, double from, double to) const {
    const GaussRule& g = gauss16();
    Table t{};
    double m = upper_level;
    double half = 0.5 * (to - from);
    double mid = 0.5 * (to + from);
    double denom = -std::expm1(-w_.epsilon);
    for (std::size_t i = 0; i < 16; ++i) {
        double level = mid + half * g.nodes[i];
        t.shape[i] = -std::expm1(-w_.epsilon * (level - m)) / denom;
        t.weight[i] = half * g.weights[i] * std::exp(-w_.beta * level);
    }
    t.exact_mass = exp_integral(w_.beta, from, to);
    return t;
}

BallQuadrature::BallQuadrature(const TreeLayout& layout, const MetricWeights& w, const Ball& ball)
    : w_(w), radius_(ball.radius) {
    check_point(ball.center);
    if (!(ball.radius > 0.0)) throw PreconditionViolation("ball radius must be positive");
    const double r = ball.radius;
    const double eps = w.epsilon;
    std::vector<std::int64_t> full_table(layout.depth() + 1, -1);

    auto add = [&](std::size_t lower, unsigned upper_level, double from, double to) {
        if (!(to > from)) return;
        std::uint32_t idx;
        if (from == upper_level && to == upper_level + 1.0) {
            if (full_table[upper_level] < 0) {
                full_table[upper_level] = static_cast<std::int64_t>(tables_.size());
                tables_.push_back(make_table(upper_level, from, to));
            }
            idx = static_cast<std::uint32_t>(full_table[upper_level]);
        } else {
            idx = static_cast<std::uint32_t>(tables_.size());
            tables_.push_back(make_table(upper_level, from, to));
        }
        segments_.push_back({static_cast<std::uint32_t>(lower), idx});
        measure_ += tables_[idx].exact_mass;
    };

    // Everything below vertex p (distance dist from the centre), skipping one child.
    struct Frame {
        std::size_t vertex;
        double dist;
        std::int64_t skip;
    };
    std::vector<Frame> stack;
    auto explore = [&](std::size_t p, double dist, std::int64_t skip) {
        stack.push_back({p, dist, skip});
        while (!stack.empty()) {
            Frame f = stack.back();
            stack.pop_back();
            unsigned m = layout.level(f.vertex);
            unsigned c = layout.child_count(f.vertex);
            if (c == 0) continue;
            double cutoff = downward_reach(eps, m, r - f.dist);
            std::size_t first = layout.first_child(f.vertex);
            double next_dist = f.dist + edge_length(eps, m);
            for (unsigned i = 0; i < c; ++i) {
                std::size_t child = first + i;
                if (static_cast<std::int64_t>(child) == f.skip) continue;
                add(child, m, m, std::min(m + 1.0, cutoff));
                if (cutoff > m + 1.0) stack.push_back({child, next_dist, -1});
            }
        }
    };

    if (ball.center.is_root()) {
        explore(0, 0.0, -1);
        return;
    }
    std::size_t vid = layout.id_of(ball.center.edge);
    double h = ball.center.level();
    unsigned nv = layout.level(vid);
    double down = downward_reach(eps, h, r);
    add(vid, nv - 1, h, std::min<double>(nv, down));
    if (down > nv) explore(vid, exp_integral(eps, h, nv), -1);

    double up = std::max(0.0, upward_reach(eps, h, r));
    add(vid, nv - 1, std::max<double>(up, nv - 1.0), h);
    std::size_t below = vid;
    while (below != 0) {
        std::size_t p = layout.parent(below);
        unsigned m = layout.level(p);
        double dist = exp_integral(eps, m, h);
        if (!(dist < r)) break;
        explore(p, dist, static_cast<std::int64_t>(below));
        if (p != 0) add(p, m - 1, std::max<double>(up, m - 1.0), m);
        below = p;
    }
}

PoincareReport BallQuadrature::poincare(const TreeFunction& u, const EdgeGradient& g, double p) const {
    if (!(p >= 1.0)) throw ParameterViolation("Poincare exponent must be >= 1");
    const TreeLayout& layout = u.layout();
    PoincareReport rep;
    rep.measure = measure_;
    if (!(measure_ > 0.0)) return rep;

    double integral = 0.0;
    double grad = 0.0;
    for (const auto& s : segments_) {
        const Table& t = tables_[s.table];
        double top = u[layout.parent(s.lower)];
        double delta = u[s.lower] - top;
        for (std::size_t i = 0; i < 16; ++i) integral += t.weight[i] * (top + delta * t.shape[i]);
        double gv = g[s.lower];
        grad += (p == 1.0 ? gv : std::pow(gv, p)) * t.exact_mass;
    }
    double mean = integral / measure_;
    double osc = 0.0;
    double scale = 0.0;
    for (const auto& s : segments_) {
        const Table& t = tables_[s.table];
        double top = u[layout.parent(s.lower)];
        double delta = u[s.lower] - top;
        scale = std::max({scale, std::abs(top), std::abs(u[s.lower])});
        for (std::size_t i = 0; i < 16; ++i) {
            double dev = std::abs(top + delta * t.shape[i] - mean);
            osc += t.weight[i] * (p == 1.0 ? dev : std::pow(dev, p));
        }
    }
    rep.oscillation = osc / measure_;
    rep.gradient = grad / measure_;
    if (rep.gradient == 0.0) {
        double tol = 1e-13 * std::pow(scale + 1.0, p);
        if (rep.oscillation <= tol) {
            rep.degenerate = true;
            rep.oscillation = 0.0;
            return rep;
        }
        throw NotAnUpperGradient("gradient vanishes on the ball but the function is not constant");
    }
    rep.constant = std::pow(rep.oscillation, 1.0 / p) / (radius_ * std::pow(rep.gradient, 1.0 / p));
    return rep;
}

PoincareReport poincare_check(const MetricWeights& w, const TreeFunction& u, const EdgeGradient& g,
                              const Ball& ball, double p) {
    BallQuadrature q(u.layout(), w, ball);
    return q.poincare(u, g, p);
}

}  // namespace cantree
