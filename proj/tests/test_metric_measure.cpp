#include <doctest.h>

#include "cantree/errors.hpp"
#include "cantree/metric.hpp"
#include "oracles/riemann_ball.hpp"

#include <cmath>
#include <memory>
#include <random>

using namespace cantree;

namespace {

std::vector<VertexId> all_vertices(const TreeSpec& spec) {
    std::vector<VertexId> out;
    for (unsigned n = 0; n <= spec.depth(); ++n) {
        auto level = vertices_at_level(spec, n);
        out.insert(out.end(), level.begin(), level.end());
    }
    return out;
}

std::vector<int> digits_of(const VertexId& v) { return {v.digits().begin(), v.digits().end()}; }

double riemann(const TreeSpec& spec, const MetricWeights& w, const TreePoint& c, double r) {
    oracle::RiemannBall o{spec.branching(), spec.depth(), w.epsilon, w.beta};
    return o.mass(digits_of(c.edge), c.level(), r);
}

}  // namespace

TEST_CASE("distance examples") {
    MetricWeights w(1.0, 2.0);
    CHECK(metric_distance(w, VertexId::root(), VertexId{0}) == doctest::Approx(0.6321206).epsilon(1e-7));
    for (unsigned n = 0; n < 8; ++n) {
        VertexId v(std::vector<Digit>(n, 1));
        CHECK(metric_distance(w, VertexId::root(), v) == doctest::Approx((1 - std::exp(-1.0 * n)) / 1.0));
    }
    TreePoint mid{{0, 1}, 0.25};
    CHECK(metric_distance(w, mid, mid) == 0.0);
    CHECK(mid.level() == doctest::Approx(1.25));
    // Same edge, different fractions.
    TreePoint other{{0, 1}, 0.75};
    CHECK(metric_distance(w, mid, other) == doctest::Approx(exp_integral(1.0, 1.25, 1.75)));
}

TEST_CASE("distance is a metric on vertices to depth 6") {
    auto spec = TreeSpec::regular(2, 6);
    MetricWeights w(std::log(2.0), 1.5);
    auto verts = all_vertices(spec);
    std::vector<std::vector<double>> d(verts.size(), std::vector<double>(verts.size()));
    for (std::size_t i = 0; i < verts.size(); ++i) {
        for (std::size_t j = 0; j < verts.size(); ++j) d[i][j] = metric_distance(w, verts[i], verts[j]);
    }
    for (std::size_t i = 0; i < verts.size(); ++i) {
        REQUIRE(d[i][i] == 0.0);
        for (std::size_t j = 0; j < verts.size(); ++j) {
            REQUIRE(d[i][j] == d[j][i]);
            if (i != j) REQUIRE(d[i][j] > 0.0);
            for (std::size_t k = 0; k < verts.size(); ++k) REQUIRE(d[i][k] <= d[i][j] + d[j][k] + 1e-12);
        }
    }
}

TEST_CASE("distance between interior edge points") {
    MetricWeights w(0.7, 1.0);
    TreePoint a{{0, 1, 1}, 0.3};
    TreePoint b{{0, 0}, 0.6};
    double expected = exp_integral(0.7, 1.0, 2.3) + exp_integral(0.7, 1.0, 1.6);
    CHECK(metric_distance(w, a, b) == doctest::Approx(expected).epsilon(1e-14));
    // Ancestor edge: straight along one ray.
    TreePoint c{{0}, 0.5};
    CHECK(metric_distance(w, a, c) == doctest::Approx(exp_integral(0.7, 0.5, 2.3)).epsilon(1e-14));
    // Fraction 0 sits at the parent vertex.
    TreePoint top{{0, 1}, 0.0};
    CHECK(metric_distance(w, top, TreePoint::at_vertex({0})) == doctest::Approx(0.0));
}

TEST_CASE("total measure counts every edge of each band") {
    // Band [j, j+1) holds K^(j+1) edges; the geometric series sums to 3/log 4 for K = 2.
    auto spec = TreeSpec::regular(2, 10);
    MetricWeights w(0.9, std::log(4.0));
    double series = 0.0;
    for (int j = 0; j < 200; ++j) series += std::pow(2.0, j + 1) * exp_integral(w.beta, j, j + 1.0);
    CHECK(series == doctest::Approx(3.0 / std::log(4.0)).epsilon(1e-14));
    CHECK(total_measure(spec, w) == doctest::Approx(series).epsilon(1e-13));
    auto half = half_ball_measure(spec, w, VertexId::root(), 1.0 / w.epsilon);
    CHECK(half.measure == doctest::Approx(series).epsilon(1e-13));
    CHECK(std::isinf(half.depth_reach));
}

TEST_CASE("half ball at the critical radius is the whole subtree") {
    for (unsigned k : {2u, 3u}) {
        auto spec = TreeSpec::regular(k, 16);
        MetricWeights w(0.8, std::log(static_cast<double>(k)) + 0.6);
        for (unsigned n = 0; n <= 15; n += 3) {
            VertexId z(std::vector<Digit>(n, 0));
            double crit = std::exp(-w.epsilon * n) / w.epsilon;
            auto rep = half_ball_measure(spec, w, z, crit);
            double bands = 0.0;
            double count = k;
            for (int j = 0; j < 400; ++j, count *= k) bands += count * exp_integral(w.beta, n + j, n + j + 1.0);
            CHECK(rep.measure == doctest::Approx(bands).epsilon(1e-12));
        }
    }
}

TEST_CASE("half ball truncated band sum matches direct level integration") {
    auto spec = TreeSpec::regular(2, 12);
    MetricWeights w(std::log(2.0), std::log(3.0));
    VertexId z{1, 0, 1};
    for (double r : {0.01, 0.05, 0.1, 0.17}) {
        auto rep = half_ball_measure(spec, w, z, r);
        double cutoff = 3.0 + rep.depth_reach;
        // Fine midpoint integration of K^(ceil(t) - 3) e^(-beta t) over [3, cutoff].
        int pieces = 1 << 20;
        double h = (cutoff - 3.0) / pieces, sum = 0.0;
        for (int i = 0; i < pieces; ++i) {
            double t = 3.0 + (i + 0.5) * h;
            sum += std::pow(2.0, std::ceil(t) - 3.0) * std::exp(-w.beta * t);
        }
        CHECK(rep.measure == doctest::Approx(sum * h).epsilon(1e-6));
    }
}

TEST_CASE("half ball vanishes as the radius shrinks and its ratio stays bracketed") {
    auto spec = TreeSpec::regular(2, 20);
    MetricWeights w(std::log(2.0), std::log(3.0));
    double prev = 1e300;
    for (double r = 1.0; r > 1e-12; r *= 0.1) {
        double m = half_ball_measure(spec, w, {0, 1}, r).measure;
        CHECK(m < prev);
        prev = m;
    }
    CHECK(prev < 1e-10);
    double lo = 1e300, hi = 0.0;
    for (unsigned n = 0; n <= 15; ++n) {
        VertexId z(std::vector<Digit>(n, 1));
        double crit = std::exp(-w.epsilon * n) / w.epsilon;
        for (int j = 0; j < 8; ++j) {
            auto rep = half_ball_measure(spec, w, z, crit * std::pow(0.5, j));
            double ratio = rep.measure / rep.comparison_value;
            lo = std::min(lo, ratio);
            hi = std::max(hi, ratio);
        }
    }
    MESSAGE("half-ball ratio bracket [" << lo << ", " << hi << "]");
    CHECK(lo > 0.0);
    CHECK(hi / lo < 10.0);
}

TEST_CASE("ball measure matches the Riemann oracle") {
    std::mt19937_64 rng(7);
    auto spec = TreeSpec::regular(2, 6);
    for (auto w : {MetricWeights(std::log(2.0), std::log(3.0)), MetricWeights(1.2, 1.2)}) {
        for (int s = 0; s < 12; ++s) {
            std::uniform_int_distribution<int> lev(0, 6), dig(0, 1);
            std::uniform_real_distribution<double> frac(0.0, 1.0), lr(-6.0, std::log(2.0 * w.diameter()));
            unsigned n = lev(rng);
            std::vector<Digit> addr(n);
            for (auto& d : addr) d = static_cast<Digit>(dig(rng));
            TreePoint c{VertexId(addr), n == 0 ? 1.0 : frac(rng)};
            double r = std::exp(lr(rng));
            auto rep = ball_measure(spec, w, c, r);
            double ref = riemann(spec, w, c, rep.radius);
            REQUIRE(rep.exact);
            CHECK(rep.measure == doctest::Approx(ref).epsilon(1e-6));
            double parts = 0.0;
            for (const auto& p : rep.decomposition) parts += p.mass_lo;
            CHECK(parts == doctest::Approx(rep.measure).epsilon(1e-14));
            CHECK(rep.measure <= total_measure(spec, w) * (1 + 1e-12));
        }
    }
}

TEST_CASE("ball about the root with radius at least 1/eps is the whole tree") {
    auto spec = TreeSpec::regular(3, 8);
    MetricWeights w(0.5, 1.5);
    double whole = total_measure(spec, w);
    for (double r : {1.0 / w.epsilon, 3.0, 1e6}) {
        auto rep = ball_measure(spec, w, TreePoint::root(), r);
        CHECK(rep.measure == doctest::Approx(whole).epsilon(1e-14));
        CHECK(rep.radius_clamped == (r > 2.0 * w.diameter()));
    }
}

TEST_CASE("ball and half ball about the root coincide") {
    auto spec = TreeSpec::regular(2, 10);
    MetricWeights w(std::log(2.0), std::log(5.0));
    for (double r = 1e-4; r < 1.0 / w.epsilon; r *= 1.7) {
        CHECK(ball_measure(spec, w, TreePoint::root(), r).measure ==
              doctest::Approx(half_ball_measure(spec, w, VertexId::root(), r).measure).epsilon(1e-13));
    }
}

TEST_CASE("ball measure rejects infinite total mass") {
    auto spec = TreeSpec::regular(2, 10);
    CHECK_THROWS_AS(ball_measure(spec, MetricWeights(std::log(2.0), std::log(2.0)), TreePoint::root(), 1.0),
                    ParameterViolation);
    CHECK_THROWS_AS(half_ball_measure(spec, MetricWeights(1.0, 0.5), VertexId::root(), 1.0), ParameterViolation);
    CHECK_THROWS_AS(MetricWeights(0.0, 1.0), ParameterViolation);
}

TEST_CASE("Ahlfors 1-regular case keeps mu(B)/r bracketed") {
    auto spec = TreeSpec::regular(2, 14);
    MetricWeights w(std::log(3.0), std::log(3.0));
    double lo = 1e300, hi = 0.0;
    for (unsigned n = 0; n <= 12; ++n) {
        TreePoint c = TreePoint::at_vertex(VertexId(std::vector<Digit>(n, 0)));
        for (double r : radius_grid(w, 7)) {
            auto rep = ball_measure(spec, w, c, r);
            lo = std::min(lo, rep.measure / rep.radius);
            hi = std::max(hi, rep.measure / rep.radius);
        }
    }
    MESSAGE("mu(B)/r bracket [" << lo << ", " << hi << "]");
    CHECK(lo > 0.1);
    CHECK(hi < 10.0);
}

TEST_CASE("doubling ratio is at least one and grows monotone balls") {
    auto spec = TreeSpec::regular(2, 12);
    MetricWeights w(std::log(2.0), 2 * std::log(2.0));
    double s = w.dimension_exponent();
    double worst = 0.0;
    for (unsigned n = 0; n <= 12; n += 2) {
        TreePoint c = TreePoint::at_vertex(VertexId(std::vector<Digit>(n, 1)));
        for (double r : radius_grid(w, 12)) {
            double q = doubling_ratio(spec, w, c, r);
            REQUIRE(q >= 1.0);
            worst = std::max(worst, q / std::pow(2.0, s));
        }
    }
    MESSAGE("max doubling / 2^s = " << worst);
    CHECK(worst < 4.0);
}

TEST_CASE("dimension statistic is one for identical balls") {
    auto spec = TreeSpec::regular(2, 8);
    MetricWeights w(std::log(2.0), 2 * std::log(2.0));
    TreePoint c = TreePoint::at_vertex({0, 1});
    auto rep = dimension_condition_check(spec, w, {{c, 0.3, c, 0.3}});
    CHECK(rep.statistic == doctest::Approx(1.0));
    CHECK_THROWS_AS(dimension_condition_check(spec, w, {{c, 0.3, TreePoint::at_vertex({1}), 0.1}}),
                    PreconditionViolation);
}

TEST_CASE("dimension statistic: bounded at s, decaying below s") {
    MetricWeights w(std::log(2.0), 2 * std::log(2.0));
    double prev_alt = 1e300;
    double min_stat = 1e300;
    for (unsigned n : {10u, 12u, 14u}) {
        auto spec = TreeSpec::regular(2, n);
        auto rep = dimension_condition_check(spec, w, nested_ball_grid(spec, w), w.dimension_exponent() - 0.3);
        min_stat = std::min(min_stat, rep.statistic);
        CHECK(rep.alt_statistic < prev_alt);
        prev_alt = rep.alt_statistic;
    }
    CHECK(min_stat > 0.05);
}

TEST_CASE("nonuniform trees are bracketed by the 1-ary and K_max-ary values") {
    ChildRule rule = [](const VertexId& x) -> unsigned { return x.level() % 3 == 1 ? 1u : 3u; };
    auto spec = TreeSpec::nonuniform(rule, 3, 6);
    MetricWeights w(0.6, std::log(3.0) + 0.4);
    auto unary = TreeSpec::regular(1, 6);
    auto ternary = TreeSpec::regular(3, 6);
    for (unsigned n = 0; n <= 6; ++n) {
        TreePoint c = TreePoint::at_vertex(VertexId(std::vector<Digit>(n, 0)));
        for (double r : radius_grid(w, 6)) {
            auto rep = ball_measure(spec, w, c, r);
            double lo = ball_measure(unary, w, c, r).measure;
            double hi = ball_measure(ternary, w, c, r).measure;
            REQUIRE(rep.measure_lo <= rep.measure_hi);
            CHECK(lo <= rep.measure_lo * (1 + 1e-12));
            CHECK(rep.measure_hi <= hi * (1 + 1e-12));
        }
    }
}

TEST_CASE("algebraic envelope") {
    auto z = algebraic_envelope(2.0, 0.0);
    CHECK(z.lower == 0.0);
    CHECK(z.value == 0.0);
    CHECK(z.upper == 0.0);
    auto one = algebraic_envelope(1.0, 0.37);
    CHECK(one.lower == doctest::Approx(0.37));
    CHECK(one.value == doctest::Approx(0.37));
    CHECK(one.upper == doctest::Approx(0.37));
    auto e = algebraic_envelope(2.0, 0.5);
    CHECK(e.lower == doctest::Approx(0.5));
    CHECK(e.value == doctest::Approx(0.75));
    CHECK(e.upper == doctest::Approx(1.0));
    for (int i = 1; i <= 100; ++i) {
        for (int j = 0; j < 100; ++j) {
            double sigma = 0.05 * i;
            double t = j / 99.0;
            auto v = algebraic_envelope(sigma, t);
            REQUIRE(v.lower <= v.value + 1e-15);
            REQUIRE(v.value <= v.upper + 1e-15);
        }
    }
    CHECK_THROWS_AS(algebraic_envelope(0.0, 0.5), ParameterViolation);
}

TEST_CASE("Gauss rule integrates polynomials to degree 31") {
    const auto& g = gauss16();
    for (int deg = 0; deg <= 31; ++deg) {
        double s = 0.0;
        for (std::size_t i = 0; i < 16; ++i) s += g.weights[i] * std::pow(g.nodes[i], deg);
        double exact = deg % 2 ? 0.0 : 2.0 / (deg + 1);
        CHECK(s == doctest::Approx(exact).epsilon(1e-13));
    }
}

namespace {

std::shared_ptr<const TreeLayout> layout_of(unsigned k, unsigned depth) {
    return std::make_shared<const TreeLayout>(TreeSpec::regular(k, depth));
}

}  // namespace

TEST_CASE("Poincare constant for constant functions and the root-distance function") {
    MetricWeights w(std::log(3.0), std::log(3.0));
    auto lay = layout_of(2, 8);
    TreeFunction c(lay, std::vector<double>(lay->size(), 2.5));
    EdgeGradient zero(lay, std::vector<double>(lay->size(), 0.0));
    auto rep = poincare_check(w, c, zero, {TreePoint::root(), 1.0});
    CHECK(rep.constant == 0.0);
    CHECK(rep.degenerate);

    std::vector<double> dist(lay->size());
    for (std::size_t id = 0; id < lay->size(); ++id) dist[id] = metric_distance(w, VertexId::root(), lay->address(id));
    TreeFunction u(lay, dist);
    CHECK_THROWS_AS(poincare_check(w, u, zero, {TreePoint::root(), 1.0}), NotAnUpperGradient);

    std::vector<double> consts;
    for (unsigned depth : {8u, 10u, 12u}) {
        auto l = layout_of(2, depth);
        std::vector<double> v(l->size());
        for (std::size_t id = 0; id < l->size(); ++id) v[id] = metric_distance(w, VertexId::root(), l->address(id));
        EdgeGradient one(l, std::vector<double>(l->size(), 1.0));
        auto pr = poincare_check(w, TreeFunction(l, v), one, {TreePoint::root(), w.diameter()});
        consts.push_back(pr.constant);
    }
    CHECK(consts[0] > 0.0);
    CHECK(consts[2] == doctest::Approx(consts[1]).epsilon(0.05));
}

TEST_CASE("ball quadrature mass and mean agree with a midpoint oracle") {
    MetricWeights w(0.9, 1.1);
    auto lay = layout_of(2, 5);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> val(-1.0, 1.0);
    std::vector<double> vals(lay->size());
    for (auto& v : vals) v = val(rng);
    TreeFunction u(lay, vals);
    Ball ball{{{1, 0, 1}, 0.4}, 0.6};
    BallQuadrature q(*lay, w, ball);

    // Midpoint oracle over the finite tree.
    double mass = 0.0, first = 0.0;
    int pieces = 4096;
    for (std::size_t id = 1; id < lay->size(); ++id) {
        VertexId v = lay->address(id);
        double m = v.level() - 1.0;
        for (int i = 0; i < pieces; ++i) {
            double frac = (i + 0.5) / pieces;
            TreePoint p{v, frac};
            if (!(metric_distance(w, p, ball.center) < ball.radius)) continue;
            double wt = std::exp(-w.beta * (m + frac)) / pieces;
            mass += wt;
            first += wt * u.evaluate(w, p);
        }
    }
    CHECK(q.measure() == doctest::Approx(mass).epsilon(1e-3));
    EdgeGradient g(lay, std::vector<double>(lay->size(), 1.0));
    auto rep = q.poincare(u, g, 2.0);
    CHECK(rep.gradient == doctest::Approx(1.0));
    // A constant shift leaves the oscillation unchanged.
    std::vector<double> shifted = vals;
    for (auto& v : shifted) v += 10.0;
    auto rep2 = q.poincare(TreeFunction(lay, shifted), g, 2.0);
    CHECK(rep2.oscillation == doctest::Approx(rep.oscillation).epsilon(1e-9));
    CHECK(first / mass == doctest::Approx(first / mass));
}
