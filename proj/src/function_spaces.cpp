#include "cantree/function_spaces.hpp"

#include "cantree/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace cantree {

namespace {

std::uint64_t int_pow(unsigned base, unsigned exp) {
    std::uint64_t r = 1;
    for (unsigned i = 0; i < exp; ++i) r *= base;
    return r;
}

double pow_p(double x, double p) {
    if (p == 1.0) return x;
    if (p == 2.0) return x * x;
    return std::pow(x, p);
}

std::string interval_text(double lo, double hi) {
    std::ostringstream os;
    os.precision(17);
    os << "(" << lo << ", " << hi << ")";
    return os.str();
}

// Smallest k >= 0 with (2/eps) e^(-eps k) < t; the open ball B(zeta, t) is then a level-k cylinder.
unsigned visual_level(double epsilon, double t) {
    if (!(t > 0.0)) throw PreconditionViolation("scale must be positive");
    double diam = 2.0 / epsilon;
    double guess = std::floor(1.0 + std::log(diam / t) / epsilon);
    int k = static_cast<int>(std::clamp(guess, 0.0, 1e6));
    while (k > 0 && !(t <= diam * std::exp(-epsilon * (k - 1)))) --k;
    while (!(diam * std::exp(-epsilon * k) < t)) ++k;
    return static_cast<unsigned>(k);
}

// Sum over level-k prefixes of ordered-pair sums of |f_a - f_b|^p.
double pair_sum_at_level(const BoundaryFunction& f, unsigned level, double p, const PairSumOptions& opt,
                         bool& sampled) {
    unsigned m = f.resolution();
    if (level >= m) return 0.0;
    const auto& v = f.values();
    std::uint64_t group = int_pow(f.branching(), m - level);
    std::uint64_t groups = v.size() / group;
    double total = 0.0;
    if (p == 2.0) {
        for (std::uint64_t g = 0; g < groups; ++g) {
            auto first = v.begin() + static_cast<std::ptrdiff_t>(g * group);
            double mean = std::accumulate(first, first + static_cast<std::ptrdiff_t>(group), 0.0) / group;
            double ss = 0.0;
            for (std::uint64_t i = 0; i < group; ++i) ss += (first[i] - mean) * (first[i] - mean);
            total += 2.0 * group * ss;
        }
        return total;
    }
    if (p == 1.0) {
        std::vector<double> buf(group);
        for (std::uint64_t g = 0; g < groups; ++g) {
            std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(g * group), group, buf.begin());
            std::sort(buf.begin(), buf.end());
            double s = 0.0;
            for (std::uint64_t i = 0; i < group; ++i) s += buf[i] * (2.0 * i + 1.0 - static_cast<double>(group));
            total += 2.0 * s;
        }
        return total;
    }
    double pairs = static_cast<double>(groups) * group * group;
    if (pairs <= static_cast<double>(opt.pair_budget)) {
        for (std::uint64_t g = 0; g < groups; ++g) {
            const double* a = v.data() + g * group;
            double s = 0.0;
            for (std::uint64_t i = 0; i < group; ++i) {
                for (std::uint64_t j = i + 1; j < group; ++j) s += std::pow(std::abs(a[i] - a[j]), p);
            }
            total += 2.0 * s;
        }
        return total;
    }
    sampled = true;
    std::mt19937_64 rng(opt.seed ^ (0x9e3779b97f4a7c15ULL * (level + 1)));
    std::uniform_int_distribution<std::uint64_t> pick(0, group - 1);
    for (std::uint64_t g = 0; g < groups; ++g) {
        const double* a = v.data() + g * group;
        double s = 0.0;
        for (std::uint64_t i = 0; i < opt.samples_per_prefix; ++i) s += std::pow(std::abs(a[pick(rng)] - a[pick(rng)]), p);
        total += s / opt.samples_per_prefix * static_cast<double>(group) * group;
    }
    return total;
}

}  // namespace

BoundaryFunction::BoundaryFunction(unsigned branching, unsigned resolution, std::vector<double> values)
    : k_(branching), m_(resolution), values_(std::move(values)) {
    if (k_ < 2) throw PreconditionViolation("boundary functions need K >= 2");
    if (values_.size() != int_pow(k_, m_)) throw PreconditionViolation("boundary function needs K^m values");
    for (double x : values_) {
        if (!std::isfinite(x)) throw PreconditionViolation("boundary function values must be finite");
    }
}

BoundaryFunction BoundaryFunction::constant(unsigned branching, unsigned resolution, double value) {
    return {branching, resolution, std::vector<double>(int_pow(branching, resolution), value)};
}

double BoundaryFunction::at(CellIndex cell, unsigned depth) const {
    if (depth < m_) throw PreconditionViolation("cell depth below the function's resolution");
    return values_[cell / int_pow(k_, depth - m_)];
}

BoundaryFunction BoundaryFunction::refine(unsigned depth) const {
    if (depth < m_) throw PreconditionViolation("refinement depth below resolution");
    std::uint64_t width = int_pow(k_, depth - m_);
    std::vector<double> out;
    out.reserve(values_.size() * width);
    for (double x : values_) out.insert(out.end(), width, x);
    return {k_, depth, std::move(out)};
}

void BesovParams::validate() const {
    if (!(p >= 1.0)) throw ParameterViolation("Besov exponent p must be >= 1");
    if (!(theta > 0.0)) throw ParameterViolation("Besov smoothness theta must be positive");
    if (q && *q != p) throw Unsupported("only q = p Besov spaces are implemented");
}

LevelPairSums level_pair_sums(const BoundaryFunction& f, double p, const PairSumOptions& options) {
    if (!(p >= 1.0)) throw ParameterViolation("p must be >= 1");
    LevelPairSums out;
    out.seed = options.seed;
    out.sums.resize(f.resolution() + 1, 0.0);
    for (unsigned k = 0; k < f.resolution(); ++k) out.sums[k] = pair_sum_at_level(f, k, p, options, out.sampled);
    return out;
}

EpReport ep_modulus(const BoundaryFunction& f, double epsilon, double t, double p, const PairSumOptions& options) {
    if (!(p >= 1.0)) throw ParameterViolation("p must be >= 1");
    EpReport rep;
    rep.level = visual_level(epsilon, t);
    rep.seed = options.seed;
    unsigned m = f.resolution();
    if (rep.level >= m) return rep;
    double s = pair_sum_at_level(f, rep.level, p, options, rep.sampled);
    double scale = std::pow(static_cast<double>(f.branching()), static_cast<double>(rep.level) - 2.0 * m);
    rep.value = std::pow(s * scale, 1.0 / p);
    return rep;
}

double besov_scale(double epsilon, unsigned n) { return 2.0 / epsilon * std::exp((1.0 - n) * epsilon); }

BesovReport besov_seminorm_sum(const BoundaryFunction& f, double epsilon, const BesovParams& params,
                               const PairSumOptions& options) {
    params.validate();
    unsigned top = params.max_level.value_or(f.resolution());
    double p = params.p;
    auto sums = level_pair_sums(f, p, options);
    BesovReport rep;
    rep.sampled = sums.sampled;
    rep.seed = sums.seed;
    double k = f.branching();
    double m = f.resolution();
    double running = 0.0;
    for (unsigned n = 0; n <= top; ++n) {
        BesovTerm term;
        term.n = n;
        term.t = besov_scale(epsilon, n);
        double epp = n < f.resolution() ? sums.sums[n] * std::pow(k, n - 2.0 * m) : 0.0;
        term.ep = std::pow(epp, 1.0 / p);
        term.term = epp / std::pow(term.t, params.theta * p);
        running += term.term;
        term.partial = running;
        rep.terms.push_back(term);
    }
    rep.value = std::pow(running, 1.0 / p);
    for (std::size_t i = rep.terms.size() > 3 ? rep.terms.size() - 3 : 0; i < rep.terms.size(); ++i) {
        rep.last_increments.push_back(rep.terms[i].term);
    }
    return rep;
}

double besov_seminorm_double_integral(const BoundaryFunction& f, double epsilon, const BesovParams& params,
                                      const PairSumOptions& options) {
    params.validate();
    auto sums = level_pair_sums(f, params.p, options);
    double k = f.branching();
    double m = f.resolution();
    double total = 0.0;
    for (unsigned level = 0; level < f.resolution(); ++level) {
        double split = std::max(0.0, sums.sums[level] - sums.sums[level + 1]);
        double d = 2.0 / epsilon * std::exp(-epsilon * level);
        total += split * std::pow(k, level - 2.0 * m) / std::pow(d, params.theta * params.p);
    }
    return std::pow(total, 1.0 / params.p);
}

BoundaryFunction layer_average(const BoundaryFunction& f, unsigned level) {
    if (level > f.resolution()) throw PreconditionViolation("layer level beyond resolution");
    std::uint64_t group = int_pow(f.branching(), f.resolution() - level);
    std::vector<double> out(f.size() / group);
    for (std::size_t g = 0; g < out.size(); ++g) {
        double s = 0.0;
        for (std::uint64_t i = 0; i < group; ++i) s += f[g * group + i];
        out[g] = s / static_cast<double>(group);
    }
    return {f.branching(), level, std::move(out)};
}

double holder_seminorm(const BoundaryFunction& f, double epsilon, double alpha) {
    if (!(alpha > 0.0)) throw ParameterViolation("Holder exponent must be positive");
    unsigned m = f.resolution();
    unsigned k = f.branching();
    std::vector<double> lo(f.values()), hi(f.values());
    double best = 0.0;
    for (unsigned level = m; level-- > 0;) {
        std::vector<double> nlo(lo.size() / k), nhi(hi.size() / k);
        for (std::size_t g = 0; g < nlo.size(); ++g) {
            nlo[g] = *std::min_element(lo.begin() + static_cast<std::ptrdiff_t>(g * k),
                                       lo.begin() + static_cast<std::ptrdiff_t>((g + 1) * k));
            nhi[g] = *std::max_element(hi.begin() + static_cast<std::ptrdiff_t>(g * k),
                                       hi.begin() + static_cast<std::ptrdiff_t>((g + 1) * k));
        }
        double range = 0.0;
        for (std::size_t g = 0; g < nlo.size(); ++g) range = std::max(range, nhi[g] - nlo[g]);
        double d = 2.0 / epsilon * std::exp(-epsilon * level);
        best = std::max(best, range / std::pow(d, alpha));
        lo.swap(nlo);
        hi.swap(nhi);
    }
    return best;
}

LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw PreconditionViolation("line fit needs two or more points");
    double n = static_cast<double>(x.size());
    double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    LineFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    for (std::size_t i = 0; i < x.size(); ++i) {
        fit.residual = std::max(fit.residual, std::abs(y[i] - fit.intercept - fit.slope * x[i]));
    }
    return fit;
}

LineFit ep_slope(const BoundaryFunction& f, double epsilon, double p, unsigned from, unsigned to,
                 const PairSumOptions& options) {
    auto sums = level_pair_sums(f, p, options);
    double k = f.branching();
    double m = f.resolution();
    std::vector<double> xs, ys;
    for (unsigned n = from; n <= to && n < f.resolution(); ++n) {
        double epp = sums.sums[n] * std::pow(k, n - 2.0 * m);
        if (!(epp > 0.0)) continue;
        xs.push_back(std::log(besov_scale(epsilon, n)));
        ys.push_back(std::log(epp) / p);
    }
    return least_squares(xs, ys);
}

EdgeGradient minimal_upper_gradient(const TreeFunction& u, const MetricWeights& w) {
    const TreeLayout& lay = u.layout();
    std::vector<double> g(lay.size(), 0.0);
    for (std::size_t id = 1; id < lay.size(); ++id) {
        std::size_t par = lay.parent(id);
        g[id] = std::abs(u[id] - u[par]) / edge_length(w.epsilon, lay.level(par));
    }
    return {u.layout_ptr(), std::move(g)};
}

namespace {

// Integral of |u|^p e^(-beta t) over one edge with u linear in d_X.
double edge_lp(double top, double bottom, unsigned upper_level, const MetricWeights& w, double p) {
    const GaussRule& rule = gauss16();
    double m = upper_level;
    double denom = -std::expm1(-w.epsilon);
    double s = 0.0;
    for (std::size_t i = 0; i < 16; ++i) {
        double t = m + 0.5 * (rule.nodes[i] + 1.0);
        double share = -std::expm1(-w.epsilon * (t - m)) / denom;
        s += rule.weights[i] * pow_p(std::abs(top + (bottom - top) * share), p) * std::exp(-w.beta * t);
    }
    return 0.5 * s;
}

}  // namespace

EnergyReport newtonian_energy(const TreeFunction& u, const EdgeGradient& g, const MetricWeights& w, double p) {
    if (!(p >= 1.0)) throw ParameterViolation("p must be >= 1");
    const TreeLayout& lay = u.layout();
    const TreeSpec& spec = lay.spec();
    w.require_finite_measure(spec.max_branching());
    if (!spec.is_regular()) throw Unsupported("Newtonian norms need a regular tree");
    if (g.values().size() != lay.size()) throw PreconditionViolation("gradient layout mismatch");
    EnergyReport rep;
    rep.level_energy.assign(lay.depth(), 0.0);
    for (std::size_t id = 1; id < lay.size(); ++id) {
        unsigned m = lay.level(lay.parent(id));
        double mass = exp_integral(w.beta, m, m + 1.0);
        double e = pow_p(g[id], p) * mass;
        rep.level_energy[m] += e;
        rep.lp_norm_p += edge_lp(u[lay.parent(id)], u[id], m, w, p);
    }
    rep.energy = std::accumulate(rep.level_energy.begin(), rep.level_energy.end(), 0.0);
    // Below the leaves u keeps its leaf value.
    double k = spec.branching();
    double below_leaf = k * exp_integral(w.beta, lay.depth(), lay.depth() + 1.0) / (1.0 - k * std::exp(-w.beta));
    for (std::size_t id = lay.level_begin(lay.depth()); id < lay.level_end(lay.depth()); ++id) {
        rep.lp_norm_p += pow_p(std::abs(u[id]), p) * below_leaf;
    }
    rep.norm = std::pow(rep.lp_norm_p + rep.energy, 1.0 / p);
    return rep;
}

EnergyReport newtonian_energy(const TreeFunction& u, const MetricWeights& w, double p) {
    return newtonian_energy(u, minimal_upper_gradient(u, w), w, p);
}

double newtonian_norm(const TreeFunction& u, const MetricWeights& w, double p) {
    return newtonian_energy(u, w, p).norm;
}

double gradient_lp_norm(const EdgeGradient& g, const MetricWeights& w, double p) {
    if (!(p >= 1.0)) throw ParameterViolation("p must be >= 1");
    const TreeLayout& lay = g.layout();
    double s = 0.0;
    for (std::size_t id = 1; id < lay.size(); ++id) {
        unsigned m = lay.level(lay.parent(id));
        s += pow_p(g[id], p) * exp_integral(w.beta, m, m + 1.0);
    }
    return std::pow(s, 1.0 / p);
}

BoundaryFunction power_function(const BoundarySpace& space, CellIndex center, double alpha, double p) {
    double q = space.hausdorff_dimension();
    if (!(p >= 1.0)) throw ParameterViolation("p must be >= 1");
    if (!(alpha > -q / p)) {
        throw ParameterViolation("power exponent must exceed -Q/p = " + std::to_string(-q / p));
    }
    std::vector<double> v(space.cell_count());
    double cell_scale = space.level_scale(static_cast<int>(space.depth()));
    for (CellIndex c = 0; c < v.size(); ++c) {
        double d = c == center ? cell_scale : space.visual_distance(c, center);
        v[c] = std::pow(d, alpha);
    }
    return {space.branching(), space.depth(), std::move(v)};
}

LogFunction::LogFunction(unsigned branching, const MetricWeights& w) : k_(branching), w_(w) {
    w_.require_finite_measure(k_);
}

double LogFunction::value(unsigned level) const { return std::log(level + 1.0); }

double LogFunction::gradient(unsigned level) const {
    return std::log1p(1.0 / (level + 1.0)) / edge_length(w_.epsilon, level);
}

double LogFunction::reference_gradient(unsigned level) const {
    return std::exp(w_.epsilon * level) / (level + 1.0);
}

double LogFunction::level_energy(unsigned level, double p) const {
    double edges = std::pow(static_cast<double>(k_), level + 1.0);
    return edges * std::pow(gradient(level), p) * exp_integral(w_.beta, level, level + 1.0);
}

double LogFunction::energy_partial_sum(unsigned depth, double p) const {
    double s = 0.0;
    for (unsigned n = 0; n < depth; ++n) s += level_energy(n, p);
    return s;
}

double LogFunction::energy_tail_bound(unsigned depth, double p) const {
    double k = k_;
    double q = k * std::exp(p * w_.epsilon - w_.beta);
    if (q >= 1.0) return std::numeric_limits<double>::infinity();
    // log((n+2)/(n+1)) <= 1/(depth+1) for n >= depth.
    double c = std::pow(w_.epsilon / ((depth + 1.0) * -std::expm1(-w_.epsilon)), p) * k *
               -std::expm1(-w_.beta) / w_.beta;
    return c * std::pow(q, depth) / (1.0 - q);
}

double LogFunction::critical_exponent() const { return (w_.beta - std::log(static_cast<double>(k_))) / w_.epsilon; }

TreeFunction LogFunction::tree_function(std::shared_ptr<const TreeLayout> layout) const {
    std::vector<double> v(layout->size());
    for (std::size_t id = 0; id < v.size(); ++id) v[id] = value(layout->level(id));
    return {std::move(layout), std::move(v)};
}

std::pair<double, double> RecursiveGammaFunction::admissible_gamma(unsigned branching, const MetricWeights& w,
                                                                   double p, double theta) {
    double lo = std::max(w.epsilon * (1.0 - theta), 0.0);
    double hi = std::min(w.epsilon, (w.beta - std::log(static_cast<double>(branching))) / p);
    return {lo, hi};
}

RecursiveGammaFunction::RecursiveGammaFunction(unsigned branching, const MetricWeights& w, double p, double gamma)
    : k_(branching), w_(w), p_(p), gamma_(gamma) {
    w_.require_finite_measure(k_);
    if (!(p >= 1.0)) throw ParameterViolation("p must be >= 1");
    double lo = 0.0;
    double hi = std::min(w.epsilon, (w.beta - std::log(static_cast<double>(branching))) / p);
    if (!(gamma > lo && gamma < hi)) {
        throw ParameterViolation("gamma must lie in " + interval_text(lo, hi));
    }
}

double RecursiveGammaFunction::value(const VertexId& x) const {
    double s = 0.0;
    for (std::size_t i = 0; i < x.level(); ++i) {
        if (x[i] == 0) s += std::exp((gamma_ - w_.epsilon) * i);
    }
    return s;
}

double RecursiveGammaFunction::gradient(unsigned level) const {
    return w_.epsilon * std::exp(gamma_ * level) / -std::expm1(-w_.epsilon);
}

double RecursiveGammaFunction::level_energy(unsigned level) const {
    return std::pow(static_cast<double>(k_), level) * std::pow(gradient(level), p_) *
           exp_integral(w_.beta, level, level + 1.0);
}

double RecursiveGammaFunction::sup_bound() const { return 1.0 / -std::expm1(gamma_ - w_.epsilon); }

TreeFunction RecursiveGammaFunction::tree_function(std::shared_ptr<const TreeLayout> layout) const {
    std::vector<double> v(layout->size(), 0.0);
    for (std::size_t id = 1; id < v.size(); ++id) {
        std::size_t par = layout->parent(id);
        bool chosen = id == layout->first_child(par);
        v[id] = v[par] + (chosen ? std::exp((gamma_ - w_.epsilon) * layout->level(par)) : 0.0);
    }
    return {std::move(layout), std::move(v)};
}

EdgeGradient RecursiveGammaFunction::upper_gradient(std::shared_ptr<const TreeLayout> layout) const {
    std::vector<double> g(layout->size(), 0.0);
    for (std::size_t id = 1; id < g.size(); ++id) {
        std::size_t par = layout->parent(id);
        if (id == layout->first_child(par)) g[id] = gradient(layout->level(par));
    }
    return {std::move(layout), std::move(g)};
}

BoundaryFunction RecursiveGammaFunction::trace(unsigned depth) const {
    std::vector<double> cur{0.0};
    for (unsigned n = 0; n < depth; ++n) {
        double step = std::exp((gamma_ - w_.epsilon) * n);
        std::vector<double> next(cur.size() * k_);
        for (std::size_t i = 0; i < cur.size(); ++i) {
            for (unsigned d = 0; d < k_; ++d) next[i * k_ + d] = cur[i] + (d == 0 ? step : 0.0);
        }
        cur.swap(next);
    }
    return {k_, depth, std::move(cur)};
}

}  // namespace cantree
