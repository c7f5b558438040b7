#include "cantree/trace_extension.hpp"

#include "cantree/errors.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace cantree {

namespace {

std::string range_text(const char* lhs, double lo, const char* rhs, double hi) {
    std::ostringstream os;
    os.precision(17);
    os << lhs << lo << ", " << hi << rhs;
    return os.str();
}

BesovParams params(double p, double theta) {
    BesovParams b;
    b.p = p;
    b.theta = theta;
    return b;
}

}  // namespace

SharpTheta sharp_theta(unsigned branching, const MetricWeights& w, double p) {
    if (!(p >= 1.0)) throw ParameterViolation("p must be >= 1");
    w.require_finite_measure(branching);
    SharpTheta out;
    out.theta = 1.0 - (w.beta - std::log(static_cast<double>(branching))) / (p * w.epsilon);
    out.status = out.theta > 0.0 ? ThetaAdmissibility::admissible : ThetaAdmissibility::no_trace_space;
    return out;
}

bool trace_admissible(unsigned branching, const MetricWeights& w, double p, double theta) {
    double s = sharp_theta(branching, w, p).theta;
    return theta > 0.0 && theta <= s;
}

bool extension_admissible(unsigned branching, const MetricWeights& w, double p, double theta) {
    double s = sharp_theta(branching, w, p).theta;
    return theta > 0.0 && theta >= s;
}

BoundaryFunction trace(const TreeFunction& u) {
    const TreeLayout& lay = u.layout();
    if (!lay.spec().is_regular()) throw Unsupported("traces need a regular tree");
    unsigned n = lay.depth();
    std::vector<double> v(u.values().begin() + static_cast<std::ptrdiff_t>(lay.level_begin(n)),
                          u.values().begin() + static_cast<std::ptrdiff_t>(lay.level_end(n)));
    return {lay.spec().branching(), n, std::move(v)};
}

TreeFunction extend_values(const BoundaryFunction& f, unsigned depth) {
    return extend_values(f, std::make_shared<const TreeLayout>(TreeSpec::regular(f.branching(), depth)));
}

TreeFunction extend_values(const BoundaryFunction& f, std::shared_ptr<const TreeLayout> lay) {
    unsigned depth = lay->depth();
    if (depth < f.resolution()) throw PreconditionViolation("extension depth below the resolution of f");
    unsigned k = f.branching();
    if (!lay->spec().is_regular() || lay->spec().branching() != k) {
        throw PreconditionViolation("layout does not match the branching of f");
    }
    std::vector<double> v(lay->size(), 0.0);
    unsigned m = f.resolution();
    // Levels m..depth: copy the cell value down.
    for (std::size_t i = 0; i < f.size(); ++i) v[lay->level_begin(m) + i] = f[i];
    for (unsigned n = m; n < depth; ++n) {
        std::size_t c = lay->level_begin(n + 1);
        for (std::size_t id = lay->level_begin(n); id < lay->level_end(n); ++id, c += k) {
            for (unsigned d = 0; d < k; ++d) v[c + d] = v[id];
        }
    }
    // Levels below m: mean of the K children.
    for (unsigned n = m; n-- > 0;) {
        std::size_t c = lay->level_begin(n + 1);
        for (std::size_t id = lay->level_begin(n); id < lay->level_end(n); ++id, c += k) {
            double s = 0.0;
            for (unsigned d = 0; d < k; ++d) s += v[c + d];
            v[id] = s / k;
        }
    }
    return {std::move(lay), std::move(v)};
}

Extension extend(const BoundaryFunction& f, const MetricWeights& w, unsigned depth) {
    TreeFunction u = extend_values(f, depth);
    EdgeGradient g = minimal_upper_gradient(u, w);
    return {std::move(u), std::move(g)};
}

NormRatio trace_norm_ratio(const TreeFunction& u, const MetricWeights& w, double p, double theta) {
    unsigned k = u.layout().spec().branching();
    if (!trace_admissible(k, w, p, theta)) {
        throw RegimeViolation(range_text("trace needs theta in (", 0.0, "]", sharp_theta(k, w, p).theta));
    }
    NormRatio r;
    r.numerator = besov_seminorm_sum(trace(u), w.epsilon, params(p, theta)).value;
    r.denominator = gradient_lp_norm(minimal_upper_gradient(u, w), w, p);
    if (r.denominator == 0.0) {
        r.constant = true;
        return r;
    }
    r.ratio = r.numerator / r.denominator;
    return r;
}

NormRatio extension_norm_ratio(const BoundaryFunction& f, const MetricWeights& w, double p, double theta,
                               unsigned depth) {
    unsigned k = f.branching();
    if (!extension_admissible(k, w, p, theta)) {
        double s = sharp_theta(k, w, p).theta;
        throw RegimeViolation(range_text("extension needs theta >= max(", s, ") and > 0", 0.0));
    }
    NormRatio r;
    Extension ext = extend(f, w, depth);
    r.numerator = gradient_lp_norm(ext.gradient, w, p);
    r.denominator = besov_seminorm_sum(f, w.epsilon, params(p, theta)).value;
    if (r.denominator == 0.0) {
        r.constant = true;
        return r;
    }
    r.ratio = r.numerator / r.denominator;
    return r;
}

TreeFunction random_tree_function(std::shared_ptr<const TreeLayout> layout, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(layout->size());
    for (auto& x : v) x = u(rng);
    return {std::move(layout), std::move(v)};
}

BoundaryFunction random_boundary_function(unsigned branching, unsigned resolution, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(static_cast<std::size_t>(std::llround(std::pow(branching, resolution))));
    for (auto& x : v) x = u(rng);
    return {branching, resolution, std::move(v)};
}

std::string to_string(SeriesVerdict v) {
    switch (v) {
        case SeriesVerdict::convergent: return "convergent";
        case SeriesVerdict::borderline: return "borderline";
        case SeriesVerdict::divergent: return "divergent";
        case SeriesVerdict::no_verdict: return "no_verdict";
    }
    return "?";
}

double decay_factor(const std::vector<double>& inc) {
    if (inc.size() < 5) throw PreconditionViolation("decay factor needs five increments");
    double last = inc.back();
    double first = inc[inc.size() - 5];
    if (first <= 0.0) return last > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    if (last <= 0.0) return 0.0;
    return std::pow(last / first, 0.25);
}

SeriesVerdict increments_verdict(const std::vector<double>& inc) {
    double f = decay_factor(inc);
    if (f < 0.9) return SeriesVerdict::convergent;
    if (f >= 0.99) return SeriesVerdict::divergent;
    return SeriesVerdict::borderline;
}

SharpnessProbe sharpness_probe_trace2(unsigned branching, const MetricWeights& w, double p, double theta,
                                      double gamma, unsigned min_depth, unsigned max_depth) {
    if (!(theta > 0.0)) throw ParameterViolation("theta must be positive");
    if (max_depth < min_depth + 5) throw PreconditionViolation("probe needs at least six depths");
    RecursiveGammaFunction f(branching, w, p, gamma);
    SharpnessProbe out;
    out.gamma = gamma;
    out.theta = theta;
    out.threshold = 1.0 - gamma / w.epsilon;
    out.divergent_regime = theta >= out.threshold;
    out.expected_slope = (w.epsilon - gamma) / w.epsilon;
    std::vector<double> inc;
    double prev = 0.0;
    for (unsigned n = min_depth; n <= max_depth; ++n) {
        auto tr = f.trace(n);
        double s = std::pow(besov_seminorm_sum(tr, w.epsilon, params(p, theta)).value, p);
        ProbeRow row{n, s, n == min_depth ? 0.0 : s - prev};
        if (n > min_depth) inc.push_back(row.increment);
        out.rows.push_back(row);
        prev = s;
        if (n == max_depth) {
            // Deep levels are affected by the truncation; fit on the upper part.
            unsigned to = std::max(2u, n > 5 ? n - 5 : 2u);
            auto fit = ep_slope(tr, w.epsilon, p, 1, to);
            out.slope = fit.slope;
            out.fit_residual = fit.residual;
        }
    }
    out.decay = decay_factor(inc);
    out.verdict = increments_verdict(inc);
    // p = 1 at the critical exponent is left open.
    if (p == 1.0 && std::abs((w.beta - std::log(static_cast<double>(branching))) / w.epsilon - 1.0) < 1e-12) {
        out.verdict = SeriesVerdict::no_verdict;
    }
    return out;
}

std::string to_string(HolderCase c) {
    switch (c) {
        case HolderCase::one_minus_inverse_p: return "alpha=1-1/p";
        case HolderCase::theta_minus_q_over_p: return "alpha=theta-Q/p";
        case HolderCase::below_one_minus_q_over_p: return "alpha<1-Q/p";
        case HolderCase::not_applicable: return "not_applicable";
    }
    return "?";
}

HolderCase holder_case(double q, double p, double theta, double* alpha) {
    double a = 0.0;
    HolderCase c = HolderCase::not_applicable;
    if (p > 1.0 && q < 1.0 && theta >= (q - 1.0) / p + 1.0) {
        c = HolderCase::one_minus_inverse_p;
        a = 1.0 - 1.0 / p;
    } else if (p > 1.0 && q / p < theta && theta <= (q - 1.0) / p + 1.0 && theta < 1.0) {
        c = HolderCase::theta_minus_q_over_p;
        a = theta - q / p;
    } else if (p > 1.0 && q >= 1.0 && theta >= 1.0 && 1.0 - q / p > 0.0) {
        // Any exponent below 1 - Q/p works; take the midpoint.
        c = HolderCase::below_one_minus_q_over_p;
        a = 0.5 * (1.0 - q / p);
    }
    if (alpha) *alpha = a;
    return c;
}

HolderEmbedding holder_embedding_check(const BoundaryFunction& f, double epsilon, double p, double theta) {
    HolderEmbedding out;
    double q = std::log(static_cast<double>(f.branching())) / epsilon;
    out.which = holder_case(q, p, theta, &out.alpha);
    if (out.which == HolderCase::not_applicable) return out;
    // beta making Ext bounded into N^{1,p}: epsilon in the first case, Q eps + p eps (1 - theta) otherwise.
    double beta = out.which == HolderCase::one_minus_inverse_p ? epsilon : q * epsilon + p * epsilon * (1.0 - theta);
    MetricWeights w(epsilon, std::max(beta, std::log(static_cast<double>(f.branching())) + 1e-12));
    Extension ext = extend(f, w, f.resolution());
    auto boundary = trace(ext.u);
    out.holder = holder_seminorm(boundary, epsilon, out.alpha);
    out.besov = besov_seminorm_sum(f, epsilon, params(p, theta)).value;
    return out;
}

std::vector<double> extension_level_weights(unsigned branching, const MetricWeights& w, double p, double theta,
                                            unsigned depth) {
    double q = std::log(static_cast<double>(branching)) / w.epsilon;
    std::vector<double> out;
    for (unsigned n = 0; n <= depth; ++n) {
        double r = 2.0 / w.epsilon * std::exp(-w.epsilon * n);
        out.push_back(std::exp((w.epsilon * p - w.beta) * n) * std::pow(r, theta * p - q));
    }
    return out;
}

}  // namespace cantree
