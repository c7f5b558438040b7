#include "cantree/boundary_maps.hpp"

#include "cantree/errors.hpp"
#include "cantree/metric.hpp"
#include "cantree/trace_extension.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

namespace cantree {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Dense id of a packed vertex in a regular breadth-first layout.
std::size_t packed_id(const std::vector<std::size_t>& offsets, PackedVertex v) {
    return offsets[v.level] + v.index;
}

std::vector<std::size_t> packed_offsets(const RegularCoder& coder, unsigned depth) {
    std::vector<std::size_t> out(depth + 2, 0);
    for (unsigned n = 0; n <= depth; ++n) out[n + 1] = out[n] + coder.power(n);
    return out;
}

// Per-zeta aggregation: for each domain split level, the shallowest and the
// deepest image split level among the partners resolved at that level.
struct ZetaLevels {
    std::vector<int> shallow;  // largest image distance
    std::vector<int> deep;     // smallest image distance
    std::vector<CellIndex> shallow_at;
    std::vector<CellIndex> deep_at;
    std::uint64_t resolved = 0;
    std::uint64_t skipped = 0;

    explicit ZetaLevels(unsigned depth)
        : shallow(depth, std::numeric_limits<int>::max()), deep(depth, -1), shallow_at(depth), deep_at(depth) {}
};

ZetaLevels aggregate_zeta(const BoundaryMap& f, CellIndex zeta) {
    const BoundarySpace& dom = f.domain();
    ZetaLevels z(dom.depth());
    for (CellIndex xi = 0; xi < dom.cell_count(); ++xi) {
        if (xi == zeta) continue;
        auto img = f.image_split(zeta, xi);
        if (!img) {
            ++z.skipped;
            continue;
        }
        ++z.resolved;
        unsigned s = dom.split_level(zeta, xi);
        int t = static_cast<int>(*img);
        if (t < z.shallow[s]) {
            z.shallow[s] = t;
            z.shallow_at[s] = xi;
        }
        if (t > z.deep[s]) {
            z.deep[s] = t;
            z.deep_at[s] = xi;
        }
    }
    return z;
}

double log_eta(const EtaProfile& eta, double log_t) {
    double a = log_t <= 0.0 ? eta.alpha1 : eta.alpha2;
    return std::log(eta.amplitude) + a * log_t;
}

LineFit fit_points(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() < 2) throw TooFewTriples("need at least two distinct scales to fit");
    return least_squares(x, y);
}

}  // namespace

EtaProfile::EtaProfile(double alpha1_, double alpha2_, double amplitude_)
    : alpha1(alpha1_), alpha2(alpha2_), amplitude(amplitude_) {
    if (!(alpha1 > 0.0) || !(alpha2 > 0.0) || !(amplitude > 0.0) || !std::isfinite(alpha1) ||
        !std::isfinite(alpha2) || !std::isfinite(amplitude)) {
        throw ParameterViolation("eta profile needs positive finite alpha1, alpha2, A");
    }
}

double EtaProfile::operator()(double t) const {
    if (!(t >= 0.0)) throw PreconditionViolation("eta is defined on [0, inf)");
    return amplitude * std::pow(t, t <= 1.0 ? alpha1 : alpha2);
}

std::string to_string(MapProvenance p) {
    switch (p) {
        case MapProvenance::explicit_map: return "explicit";
        case MapProvenance::snowflake: return "snowflake";
        case MapProvenance::induced_from_rqi: return "induced-from-RQI";
        case MapProvenance::extended_from_qs: return "extended-from-QS";
    }
    return "?";
}

RegularTarget::RegularTarget(unsigned branching, double epsilon_) : coder(branching), epsilon(epsilon_) {
    if (branching < 2) throw PreconditionViolation("target tree needs at least two children per vertex");
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ParameterViolation("epsilon must be positive");
}

BoundaryMap::BoundaryMap(BoundarySpace domain, RegularTarget target, std::vector<PackedVertex> images,
                         MapProvenance provenance, std::optional<EtaProfile> profile)
    : domain_(std::move(domain)),
      target_(std::move(target)),
      images_(std::move(images)),
      provenance_(provenance),
      profile_(profile) {
    if (!domain_.spec().is_regular()) throw Unsupported("boundary maps need a regular domain");
    if (images_.size() != domain_.cell_count()) throw PreconditionViolation("one image per domain cell required");
    for (const auto& v : images_) {
        if (v.level > target_.coder.max_level()) throw PreconditionViolation("image too deep");
        if (v.index >= target_.coder.power(v.level)) throw PreconditionViolation("image index out of range");
        depth_ = std::max<unsigned>(depth_, v.level);
    }
    if (provenance_ == MapProvenance::explicit_map) {
        std::vector<PackedVertex> sorted = images_;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
            throw PreconditionViolation("explicit boundary map is not injective on cells");
        }
    }
}

std::optional<unsigned> BoundaryMap::image_split(CellIndex a, CellIndex b) const {
    PackedVertex x = images_[a], y = images_[b];
    const RegularCoder& c = target_.coder;
    if (c.is_ancestor(x, y) || c.is_ancestor(y, x)) return std::nullopt;
    return c.lca(x, y).level;
}

double BoundaryMap::image_scale(unsigned level) const {
    return 2.0 / target_.epsilon * std::exp(-target_.epsilon * level);
}

VertexMap::VertexMap(std::shared_ptr<const TreeLayout> domain, RegularTarget target, std::vector<PackedVertex> images,
                     MapProvenance provenance)
    : domain_(std::move(domain)), target_(std::move(target)), images_(std::move(images)), provenance_(provenance) {
    if (images_.size() != domain_->size()) throw PreconditionViolation("one image per domain vertex required");
    levels_.resize(domain_->size());
    parents_.resize(domain_->size());
    for (unsigned n = 0; n <= domain_->depth(); ++n) {
        for (std::size_t id = domain_->level_begin(n); id < domain_->level_end(n); ++id) {
            levels_[id] = n;
            parents_[id] = id == 0 ? 0 : static_cast<std::uint32_t>(domain_->parent(id));
        }
    }
    for (const auto& v : images_) {
        if (v.level > target_.coder.max_level() || v.index >= target_.coder.power(v.level)) {
            throw PreconditionViolation("image vertex out of range");
        }
    }
}

unsigned VertexMap::domain_distance(std::size_t a, std::size_t b) const {
    unsigned d = 0;
    while (levels_[a] > levels_[b]) {
        a = parents_[a];
        ++d;
    }
    while (levels_[b] > levels_[a]) {
        b = parents_[b];
        ++d;
    }
    while (a != b) {
        a = parents_[a];
        b = parents_[b];
        d += 2;
    }
    return d;
}

unsigned VertexMap::image_distance(std::size_t a, std::size_t b) const {
    return target_.coder.distance(images_[a], images_[b]);
}

QsReport qs_check(const BoundaryMap& f, const EtaProfile& eta, const QsOptions& options) {
    const BoundarySpace& dom = f.domain();
    double ex = dom.epsilon(), ey = f.target().epsilon;
    QsReport rep;
    rep.statistic = 0.0;
    double best = kNegInf;
    std::uint64_t n = dom.cell_count();
    if (n < 2) throw TooFewTriples("need at least two cells");
    if (n <= options.exhaustive_cells && !options.force_sampling) {
        rep.exhaustive = true;
        unsigned depth = dom.depth();
        for (CellIndex zeta = 0; zeta < n; ++zeta) {
            ZetaLevels z = aggregate_zeta(f, zeta);
            rep.skipped += z.skipped;
            rep.triples += z.resolved * z.resolved;
            for (unsigned s1 = 0; s1 < depth; ++s1) {
                if (z.deep[s1] < 0) continue;
                for (unsigned s2 = 0; s2 < depth; ++s2) {
                    if (z.deep[s2] < 0) continue;
                    // Largest d_Y(zeta, xi) over the smallest d_Y(zeta, chi).
                    double log_ratio = -ey * (z.shallow[s1] - z.deep[s2]);
                    double log_t = -ex * (static_cast<double>(s1) - s2);
                    double v = log_ratio - log_eta(eta, log_t);
                    if (v > best) {
                        best = v;
                        rep.witness = {zeta, z.shallow_at[s1], z.deep_at[s2]};
                    }
                }
            }
        }
    } else {
        rep.seed = options.seed;
        std::mt19937_64 rng(options.seed);
        std::uniform_int_distribution<CellIndex> pick(0, n - 1);
        for (std::uint64_t i = 0; i < options.samples; ++i) {
            CellIndex zeta = pick(rng), xi = pick(rng), chi = pick(rng);
            if (xi == zeta || chi == zeta) {
                ++rep.skipped;
                continue;
            }
            auto a = f.image_split(zeta, xi), b = f.image_split(zeta, chi);
            if (!a || !b) {
                ++rep.skipped;
                continue;
            }
            ++rep.triples;
            double log_ratio = -ey * (static_cast<double>(*a) - *b);
            double log_t = -ex * (static_cast<double>(dom.split_level(zeta, xi)) - dom.split_level(zeta, chi));
            double v = log_ratio - log_eta(eta, log_t);
            if (v > best) {
                best = v;
                rep.witness = {zeta, xi, chi};
            }
        }
    }
    rep.statistic = best == kNegInf ? 0.0 : std::exp(best);
    return rep;
}

DistortionBuckets distortion_buckets(const BoundaryMap& f, const QsOptions& options) {
    const BoundarySpace& dom = f.domain();
    double ey = f.target().epsilon;
    int depth = static_cast<int>(dom.depth());
    std::vector<double> best(2 * depth + 1, kNegInf);
    DistortionBuckets out;
    out.epsilon = dom.epsilon();
    std::uint64_t n = dom.cell_count();
    if (n <= options.exhaustive_cells && !options.force_sampling) {
        for (CellIndex zeta = 0; zeta < n; ++zeta) {
            ZetaLevels z = aggregate_zeta(f, zeta);
            out.triples += z.resolved * z.resolved;
            for (int s1 = 0; s1 < depth; ++s1) {
                if (z.deep[s1] < 0) continue;
                for (int s2 = 0; s2 < depth; ++s2) {
                    if (z.deep[s2] < 0) continue;
                    double v = -ey * (z.shallow[s1] - z.deep[s2]);
                    best[s1 - s2 + depth] = std::max(best[s1 - s2 + depth], v);
                }
            }
        }
    } else {
        std::mt19937_64 rng(options.seed);
        std::uniform_int_distribution<CellIndex> pick(0, n - 1);
        for (std::uint64_t i = 0; i < options.samples; ++i) {
            CellIndex zeta = pick(rng), xi = pick(rng), chi = pick(rng);
            if (xi == zeta || chi == zeta) continue;
            auto a = f.image_split(zeta, xi), b = f.image_split(zeta, chi);
            if (!a || !b) continue;
            ++out.triples;
            int delta = static_cast<int>(dom.split_level(zeta, xi)) - static_cast<int>(dom.split_level(zeta, chi));
            double v = -ey * (static_cast<double>(*a) - *b);
            best[delta + depth] = std::max(best[delta + depth], v);
        }
    }
    for (int i = 0; i <= 2 * depth; ++i) {
        if (best[i] == kNegInf) continue;
        out.delta.push_back(i - depth);
        out.ratio.push_back(std::exp(best[i]));
    }
    return out;
}

double fit_amplitude(const DistortionBuckets& b, double alpha1, double alpha2) {
    double a = 0.0;
    for (std::size_t i = 0; i < b.delta.size(); ++i) {
        double log_t = -b.epsilon * b.delta[i];
        double alpha = log_t <= 0.0 ? alpha1 : alpha2;
        a = std::max(a, std::exp(std::log(b.ratio[i]) - alpha * log_t));
    }
    return a;
}

EtaProfile fit_eta(const DistortionBuckets& b) {
    if (b.triples < 100) throw TooFewTriples("fit_eta needs at least 100 resolvable triples");
    std::vector<double> lx, ly, rx, ry;
    for (std::size_t i = 0; i < b.delta.size(); ++i) {
        double log_t = -b.epsilon * b.delta[i];
        double log_r = std::log(b.ratio[i]);
        if (b.delta[i] >= 0) {
            lx.push_back(log_t);
            ly.push_back(log_r);
        }
        if (b.delta[i] <= 0) {
            rx.push_back(log_t);
            ry.push_back(log_r);
        }
    }
    double a1 = fit_points(lx, ly).slope;
    double a2 = fit_points(rx, ry).slope;
    return {a1, a2, fit_amplitude(b, a1, a2)};
}

EtaProfile fit_eta(const BoundaryMap& f, const QsOptions& options) { return fit_eta(distortion_buckets(f, options)); }

VertexMap extend_qs_to_tree(const BoundaryMap& f) {
    const BoundarySpace& dom = f.domain();
    auto lay = std::make_shared<const TreeLayout>(TreeSpec::regular(dom.branching(), dom.depth()));
    const RegularCoder& c = f.target().coder;
    std::vector<PackedVertex> img(lay->size());
    unsigned n = dom.depth();
    for (std::size_t id = lay->level_begin(n); id < lay->level_end(n); ++id) {
        img[id] = f.image(id - lay->level_begin(n));
    }
    unsigned k = dom.branching();
    for (unsigned level = n; level-- > 0;) {
        for (std::size_t id = lay->level_begin(level); id < lay->level_end(level); ++id) {
            std::size_t ch = lay->first_child(id);
            PackedVertex acc = img[ch];
            for (unsigned d = 1; d < k; ++d) acc = c.lca(acc, img[ch + d]);
            img[id] = acc;
        }
    }
    img[0] = PackedVertex{};
    VertexMap F(lay, f.target(), std::move(img), MapProvenance::extended_from_qs);
    F.source_profile = f.profile();
    F.source_epsilon = dom.epsilon();
    return F;
}

double RqiReport::big_l() const { return std::max(l1 > 0.0 ? 1.0 / l1 : std::numeric_limits<double>::infinity(), l2); }

RqiReport rqi_check(const VertexMap& F, const RqiOptions& options) {
    const TreeLayout& lay = F.domain();
    const RegularCoder& c = F.target().coder;
    unsigned depth = lay.depth();
    RqiReport rep;
    rep.min_image.assign(2 * depth + 1, std::numeric_limits<int>::max());
    rep.max_image.assign(2 * depth + 1, -1);

    double tl1 = 0, tl2 = 0, toff = 0;
    bool theory = F.provenance() == MapProvenance::extended_from_qs && F.source_profile.has_value();
    if (theory) {
        double ratio = F.source_epsilon / F.target().epsilon;
        tl1 = F.source_profile->alpha1 * ratio;
        tl2 = F.source_profile->alpha2 * ratio;
        toff = 2.0 * std::log(F.source_profile->amplitude) / F.target().epsilon;
        rep.theory_l1 = tl1;
        rep.theory_l2 = tl2;
        rep.theory_offset = toff;
    }
    auto visit = [&](std::size_t a, std::size_t b) {
        int d = static_cast<int>(F.domain_distance(a, b));
        int e = static_cast<int>(F.image_distance(a, b));
        rep.min_image[d] = std::min(rep.min_image[d], e);
        rep.max_image[d] = std::max(rep.max_image[d], e);
        ++rep.pairs;
        if (theory && (e < tl1 * d - toff - 1e-9 || e > tl2 * d + toff + 1e-9)) {
            if (rep.theory_violations++ == 0) rep.theory_witness = PairWitness{a, b};
        }
    };
    std::size_t n = lay.size();
    if (depth <= options.exhaustive_depth) {
        for (std::size_t a = 0; a < n; ++a) {
            for (std::size_t b = a + 1; b < n; ++b) visit(a, b);
        }
    } else {
        rep.exhaustive = false;
        rep.seed = options.seed;
        std::mt19937_64 rng(options.seed);
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        for (std::uint64_t i = 0; i < options.samples; ++i) {
            std::size_t a = pick(rng), b = pick(rng);
            if (a != b) visit(a, b);
        }
    }

    std::vector<double> xs, lo, hi;
    for (std::size_t d = 1; d < rep.min_image.size(); ++d) {
        if (rep.max_image[d] < 0) continue;
        xs.push_back(static_cast<double>(d));
        lo.push_back(rep.min_image[d]);
        hi.push_back(rep.max_image[d]);
    }
    if (xs.size() >= 2) {
        rep.l1 = least_squares(xs, lo).slope;
        rep.l2 = least_squares(xs, hi).slope;
    } else if (xs.size() == 1) {
        rep.l1 = lo[0] / xs[0];
        rep.l2 = hi[0] / xs[0];
    }
    rep.offset = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        rep.offset = std::max({rep.offset, rep.l1 * xs[i] - lo[i], hi[i] - rep.l2 * xs[i]});
    }

    // Density: multi-source search from the image over the codomain to the deepest image level.
    unsigned cdepth = 0;
    unsigned covered = std::numeric_limits<unsigned>::max();
    for (std::size_t id = 0; id < n; ++id) cdepth = std::max<unsigned>(cdepth, F(id).level);
    for (std::size_t id = lay.level_begin(depth); id < lay.level_end(depth); ++id) {
        covered = std::min<unsigned>(covered, F(id).level);
    }
    auto offsets = packed_offsets(c, cdepth);
    if (offsets.back() > (std::size_t{1} << 25)) throw PreconditionViolation("codomain too large for the density scan");
    std::vector<int> dist(offsets.back(), -1);
    std::vector<PackedVertex> queue;
    for (std::size_t id = 0; id < n; ++id) {
        std::size_t k = packed_id(offsets, F(id));
        if (dist[k] < 0) {
            dist[k] = 0;
            queue.push_back(F(id));
        }
    }
    for (std::size_t head = 0; head < queue.size(); ++head) {
        PackedVertex v = queue[head];
        int dv = dist[packed_id(offsets, v)];
        auto push = [&](PackedVertex w) {
            std::size_t k = packed_id(offsets, w);
            if (dist[k] < 0) {
                dist[k] = dv + 1;
                queue.push_back(w);
            }
        };
        if (v.level > 0) push(c.parent(v));
        if (v.level < cdepth) {
            for (unsigned d = 0; d < c.branching(); ++d) push(c.child(v, d));
        }
    }
    rep.density_depth = covered;
    int worst = 0;
    for (std::size_t k = 0; k < offsets[covered + 1]; ++k) worst = std::max(worst, dist[k]);
    rep.density_radius = worst;
    return rep;
}

EnvelopeCheck check_envelope(const RqiReport& report, double l1, double l2, double lower_offset,
                             double upper_offset) {
    EnvelopeCheck out;
    double worst = 0.0;
    for (std::size_t d = 1; d < report.min_image.size(); ++d) {
        if (report.max_image[d] < 0) continue;
        double low = l1 * d - lower_offset - report.min_image[d];
        double high = report.max_image[d] - (l2 * d + upper_offset);
        double excess = std::max(low, high);
        if (excess > 1e-9) {
            ++out.violations;
            if (excess > worst) {
                worst = excess;
                out.worst_distance = static_cast<int>(d);
            }
        }
    }
    return out;
}

bool ray_order_preserving(const VertexMap& F) {
    const RegularCoder& c = F.target().coder;
    for (std::size_t id = 1; id < F.domain().size(); ++id) {
        if (!c.is_ancestor(F(F.parent(id)), F(id))) return false;
    }
    return true;
}

BoundaryMap boundary_map_from_rqi(const VertexMap& F, double domain_epsilon, const RqiReport& report,
                                  const FromRqiOptions& options) {
    const TreeLayout& lay = F.domain();
    if (!lay.spec().is_regular()) throw Unsupported("induced boundary maps need a regular domain");
    const RegularCoder& c = F.target().coder;
    unsigned depth = lay.depth();
    unsigned window = 0;
    if (options.window) {
        window = *options.window;
    } else if (!ray_order_preserving(F)) {
        double l = report.big_l();
        window = static_cast<unsigned>(std::ceil(l * (l + 2.0 * report.offset + 1.0)));
    }
    std::vector<PackedVertex> images;
    std::size_t unstable = 0;
    std::vector<std::size_t> ray(depth + 1);
    for (std::size_t id = lay.level_begin(depth); id < lay.level_end(depth); ++id) {
        std::size_t x = id;
        for (unsigned i = depth + 1; i-- > 0;) {
            ray[i] = x;
            if (i > 0) x = F.parent(x);
        }
        unsigned from = window > depth ? 0 : depth - window;
        PackedVertex acc = F(ray[from]);
        bool chain = window <= depth;
        for (unsigned i = from + 1; i <= depth; ++i) {
            chain = chain && c.is_ancestor(F(ray[i - 1]), F(ray[i]));
            acc = c.lca(acc, F(ray[i]));
        }
        if (!chain) ++unstable;
        images.push_back(acc);
    }
    if (static_cast<double>(unstable) > options.max_unstabilized * static_cast<double>(images.size())) {
        throw ResolutionInsufficient("tail of the image rays has not stabilized on " + std::to_string(unstable) +
                                     " of " + std::to_string(images.size()) + " cells");
    }
    BoundaryMap f(BoundarySpace(lay.spec(), domain_epsilon), F.target(), std::move(images),
                  MapProvenance::induced_from_rqi);
    f.window = window;
    f.unstabilized = unstable;
    double ratio = F.target().epsilon / domain_epsilon;
    double a1 = report.l1 * ratio, a2 = report.l2 * ratio;
    if (a1 > 0.0 && a2 > 0.0 && f.domain().cell_count() >= 3) {
        double amp = fit_amplitude(distortion_buckets(f), a1, a2);
        if (amp > 0.0) f.set_profile(EtaProfile(a1, a2, amp));
    }
    return f;
}

BiHolderReport bi_holder_check(const BoundaryMap& f, const RqiReport* report) {
    const BoundarySpace& dom = f.domain();
    unsigned depth = dom.depth();
    std::vector<int> shallow(depth, std::numeric_limits<int>::max()), deep(depth, -1);
    std::uint64_t n = dom.cell_count();
    auto visit = [&](CellIndex a, CellIndex b) {
        auto t = f.image_split(a, b);
        if (!t) return;
        unsigned s = dom.split_level(a, b);
        shallow[s] = std::min(shallow[s], static_cast<int>(*t));
        deep[s] = std::max(deep[s], static_cast<int>(*t));
    };
    if (n <= (std::uint64_t{1} << 12)) {
        for (CellIndex a = 0; a < n; ++a) {
            for (CellIndex b = a + 1; b < n; ++b) visit(a, b);
        }
    } else {
        std::mt19937_64 rng(0xb1401de5);
        std::uniform_int_distribution<CellIndex> pick(0, n - 1);
        for (int i = 0; i < 1000000; ++i) {
            CellIndex a = pick(rng), b = pick(rng);
            if (a != b) visit(a, b);
        }
    }
    std::vector<double> x, lo, hi;
    for (unsigned s = 0; s < depth; ++s) {
        if (deep[s] < 0) continue;
        x.push_back(std::log(dom.level_scale(static_cast<int>(s))));
        hi.push_back(std::log(f.image_scale(static_cast<unsigned>(shallow[s]))));
        lo.push_back(std::log(f.image_scale(static_cast<unsigned>(deep[s]))));
    }
    BiHolderReport out;
    out.upper_exponent = fit_points(x, hi).slope;
    out.lower_exponent = fit_points(x, lo).slope;
    out.c2 = 0.0;
    out.c1 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < x.size(); ++i) {
        out.c2 = std::max(out.c2, std::exp(hi[i] - out.upper_exponent * x[i]));
        out.c1 = std::min(out.c1, std::exp(lo[i] - out.lower_exponent * x[i]));
    }
    if (report) {
        double ratio = f.target().epsilon / dom.epsilon();
        out.theory_upper = report->l1 * ratio;
        out.theory_lower = report->l2 * ratio;
    }
    return out;
}

MapConstants map_constants(double big_l, double offset, double domain_epsilon, const BiHolderReport& holder,
                           double domain_diameter) {
    if (!(big_l >= 1.0) || !(offset >= 0.0)) throw ParameterViolation("need L >= 1 and Lambda >= 0");
    MapConstants m;
    double s = big_l + offset;
    m.tau = std::floor(s * (2.0 * big_l * big_l + 3.0 * offset * big_l + 1.0)) + 1.0;
    m.tau_prime = std::floor(s) + 1.0;
    m.ancestor_bound = big_l * big_l * (2.0 * m.tau_prime + offset) + offset + m.tau_prime;
    m.s0 = big_l * (3.0 * m.ancestor_bound + 2.0 * offset + big_l);
    m.r0 = std::pow(holder.c1 / holder.c2 * std::pow(domain_diameter / 3.0, holder.lower_exponent),
                    1.0 / holder.upper_exponent);
    m.t0 = std::exp(-domain_epsilon * m.s0);
    m.t1 = 1.0 / m.t0;
    return m;
}

PullbackReport pullback_energy(const TreeFunction& u, const MetricWeights& wy, const VertexMap& F,
                               const MetricWeights& wx, double p, double big_l, double offset) {
    const TreeLayout& ylay = u.layout();
    const RegularCoder& c = F.target().coder;
    if (!ylay.spec().is_regular() || ylay.spec().branching() != c.branching()) {
        throw PreconditionViolation("u must live on the regular codomain tree");
    }
    const TreeLayout& xlay = F.domain();
    for (std::size_t id = 0; id < xlay.size(); ++id) {
        if (F(id).level > ylay.depth()) throw PreconditionViolation("u is not defined deep enough for the image");
    }
    auto yoff = packed_offsets(c, ylay.depth());
    EdgeGradient gy = minimal_upper_gradient(u, wy);
    double amp = (big_l + offset) * std::exp(wy.epsilon * (big_l + offset) + wx.epsilon);

    std::vector<double> pulled(xlay.size()), g(xlay.size(), 0.0);
    for (std::size_t id = 0; id < xlay.size(); ++id) pulled[id] = u[packed_id(yoff, F(id))];

    std::uint64_t failures = 0;
    for (std::size_t id = 1; id < xlay.size(); ++id) {
        PackedVertex a = F(F.parent(id)), b = F(id);
        if (a == b) continue;
        PackedVertex top = c.lca(a, b);
        double gmax = 0.0;
        for (PackedVertex v : {a, b}) {
            while (v.level > top.level) {
                gmax = std::max(gmax, gy[packed_id(yoff, v)]);
                v = c.parent(v);
            }
        }
        unsigned n = F.level(id);
        g[id] = amp * std::exp(wx.epsilon * n - wy.epsilon * top.level) * gmax;
        double edge = edge_length(wx.epsilon, n - 1);
        if (std::abs(pulled[id] - pulled[F.parent(id)]) > g[id] * edge * (1.0 + 1e-12) + 1e-300) ++failures;
    }

    // Weight condition, per level maxima.
    unsigned depth = xlay.depth();
    std::vector<double> level_max(depth + 1, -std::numeric_limits<double>::infinity());
    std::size_t worst = 0;
    double c0 = -std::numeric_limits<double>::infinity();
    for (std::size_t id = 0; id < xlay.size(); ++id) {
        unsigned n = F.level(id);
        double v = (p * wx.epsilon - wx.beta) * n + (wy.beta - p * wy.epsilon) * F(id).level;
        level_max[n] = std::max(level_max[n], v);
        if (v > c0) {
            c0 = v;
            worst = id;
        }
    }
    if (depth >= 4) {
        std::vector<double> xs, ys;
        for (unsigned n = depth / 2; n <= depth; ++n) {
            xs.push_back(n);
            ys.push_back(level_max[n]);
        }
        if (least_squares(xs, ys).slope > 0.05) {
            throw ConditionFailure("weight condition grows with depth; worst vertex " +
                                   format_address(xlay.address(worst), xlay.spec().max_branching()));
        }
    }

    auto xptr = F.domain_ptr();
    PullbackReport rep{EdgeGradient(xptr, std::move(g)), TreeFunction(xptr, std::move(pulled))};
    rep.c0 = c0;
    rep.amplitude = amp;
    rep.endpoint_failures = failures;
    rep.numerator = gradient_lp_norm(rep.gradient, wx, p);
    rep.denominator = gradient_lp_norm(gy, wy, p);
    if (rep.denominator == 0.0) {
        rep.constant = true;
    } else {
        rep.ratio = rep.numerator / rep.denominator;
    }
    return rep;
}

double admissible_theta_x(const EtaProfile& eta, double qx, double qy, double p, double theta_y) {
    double gap = theta_y - qy / p;
    return qx / p + (gap >= 0.0 ? eta.alpha1 : eta.alpha2) * gap;
}

PushforwardReport besov_pushforward(const BoundaryFunction& u, const BoundaryMap& f, double p, double theta_x,
                                    double theta_y) {
    if (!f.profile()) throw PreconditionViolation("pushforward needs the map's eta profile");
    if (u.branching() != f.target().branching()) throw PreconditionViolation("u must live on the codomain boundary");
    if (!(p >= 1.0)) throw ParameterViolation("p must be >= 1");
    for (double t : {theta_x, theta_y}) {
        if (!(t > 0.0 && t < 1.0)) throw ParameterViolation("theta must lie in (0, 1)");
    }
    const BoundarySpace& dom = f.domain();
    double ex = dom.epsilon(), ey = f.target().epsilon;
    double qx = std::log(static_cast<double>(dom.branching())) / ex;
    double qy = std::log(static_cast<double>(u.branching())) / ey;
    double bound = admissible_theta_x(*f.profile(), qx, qy, p, theta_y);
    if (theta_x > bound + 1e-12) {
        throw RegimeViolation("theta_X must be <= " + std::to_string(bound) + " for this theta_Y and profile");
    }
    VertexMap F = extend_qs_to_tree(f);
    unsigned ydepth = std::max(u.resolution(), f.codomain_depth());
    MetricWeights wy(ey, std::log(static_cast<double>(u.branching())) + p * ey * (1.0 - theta_y));
    Extension ext = extend(u, wy, ydepth);
    const RegularCoder& c = f.target().coder;
    auto yoff = packed_offsets(c, ydepth);

    std::vector<double> values(dom.cell_count());
    std::size_t mismatches = 0, unresolved = 0;
    for (CellIndex cell = 0; cell < values.size(); ++cell) {
        PackedVertex y = f.image(cell);
        values[cell] = ext.u[packed_id(yoff, y)];
        if (y.level < u.resolution()) {
            ++unresolved;
            continue;
        }
        double direct = u[c.ancestor(y, u.resolution()).index];
        if (direct != values[cell]) ++mismatches;
    }
    BoundaryFunction result(dom.branching(), dom.depth(), std::move(values));
    PushforwardReport rep{result};
    rep.mismatches = mismatches;
    rep.unresolved = unresolved;
    BesovParams bx, by;
    bx.p = by.p = p;
    bx.theta = theta_x;
    by.theta = theta_y;
    rep.numerator = besov_seminorm_sum(result, ex, bx).value;
    rep.denominator = besov_seminorm_sum(u, ey, by).value;
    if (rep.denominator == 0.0) {
        rep.constant = true;
    } else {
        rep.ratio = rep.numerator / rep.denominator;
    }
    return rep;
}

BoundaryMap snowflake_map(unsigned branching, unsigned depth, double domain_epsilon, double target_epsilon) {
    BoundarySpace dom(TreeSpec::regular(branching, depth), domain_epsilon);
    RegularTarget target(branching, target_epsilon);
    std::vector<PackedVertex> images(dom.cell_count());
    for (CellIndex c = 0; c < images.size(); ++c) images[c] = {depth, c};
    double a = target_epsilon / domain_epsilon;
    return {std::move(dom), std::move(target), std::move(images), MapProvenance::snowflake, EtaProfile(a, a, 1.0)};
}

namespace {

// Prefix code 0 -> 0, 10 -> 1, 11 -> 2; a trailing unmatched 1 is dropped.
PackedVertex decode_binary(const VertexId& x) {
    PackedVertex out;
    bool pending = false;
    for (Digit d : x.digits()) {
        if (pending) {
            out = {out.level + 1, out.index * 3 + (d == 0 ? 1u : 2u)};
            pending = false;
        } else if (d == 0) {
            out = {out.level + 1, out.index * 3};
        } else {
            pending = true;
        }
    }
    return out;
}

PackedVertex encode_ternary(const VertexId& y) {
    PackedVertex out;
    for (Digit d : y.digits()) {
        if (d == 0) {
            out = {out.level + 1, out.index * 2};
        } else {
            out = {out.level + 2, out.index * 4 + 2 + (d == 2 ? 1u : 0u)};
        }
    }
    return out;
}

}  // namespace

BinaryTernaryExample example_binary_ternary(unsigned binary_depth, unsigned ternary_depth, double binary_epsilon,
                                            double ternary_epsilon) {
    auto blay = std::make_shared<const TreeLayout>(TreeSpec::regular(2, binary_depth));
    std::vector<PackedVertex> gi(blay->size());
    for (std::size_t id = 0; id < blay->size(); ++id) gi[id] = decode_binary(blay->address(id));
    auto tlay = std::make_shared<const TreeLayout>(TreeSpec::regular(3, ternary_depth));
    std::vector<PackedVertex> hi(tlay->size());
    for (std::size_t id = 0; id < tlay->size(); ++id) hi[id] = encode_ternary(tlay->address(id));
    return {VertexMap(blay, RegularTarget(3, ternary_epsilon), std::move(gi), MapProvenance::explicit_map),
            VertexMap(tlay, RegularTarget(2, binary_epsilon), std::move(hi), MapProvenance::explicit_map)};
}

BoundaryMap example_boundary_map(unsigned binary_depth, double domain_epsilon, double target_epsilon) {
    BoundarySpace dom(TreeSpec::regular(2, binary_depth), domain_epsilon);
    std::vector<PackedVertex> images(dom.cell_count());
    for (CellIndex c = 0; c < images.size(); ++c) images[c] = decode_binary(dom.address(c));
    return {std::move(dom), RegularTarget(3, target_epsilon), std::move(images), MapProvenance::induced_from_rqi};
}

VertexMap example_rerooted_isometry(unsigned depth, double epsilon) {
    ChildRule rule = [](const VertexId& x) -> unsigned {
        if (x.is_root()) return 4;
        if (x.level() == 1 && x[0] == 3) return 2;
        return 3;
    };
    auto lay = std::make_shared<const TreeLayout>(TreeSpec::nonuniform(rule, 4, depth));
    std::vector<PackedVertex> img(lay->size());
    for (std::size_t id = 0; id < lay->size(); ++id) {
        VertexId x = lay->address(id);
        const auto& d = x.digits();
        PackedVertex y;
        std::size_t start = 0;
        if (d.empty() || d[0] < 3) {
            y = {1, 0};
        } else if (d.size() == 1) {
            y = {0, 0};
            start = 1;
        } else {
            y = {1, static_cast<std::uint64_t>(d[1]) + 1};
            start = 2;
        }
        for (std::size_t i = start; i < d.size(); ++i) y = {y.level + 1, y.index * 3 + d[i]};
        img[id] = y;
    }
    return {lay, RegularTarget(3, epsilon), std::move(img), MapProvenance::explicit_map};
}

std::string to_string(RigidityVerdict v) {
    switch (v) {
        case RigidityVerdict::isometry: return "isometry";
        case RigidityVerdict::not_injective: return "not injective";
        case RigidityVerdict::not_geodesic: return "does not map geodesics into geodesics";
        case RigidityVerdict::not_dense: return "image not dense";
        case RigidityVerdict::root_condition: return "root condition fails";
        case RigidityVerdict::hypotheses_hold_not_isometry: return "hypotheses hold but not an isometry";
    }
    return "?";
}

namespace {

// Whether one of three tree vertices lies on the geodesic between the other two.
bool on_common_geodesic(const RegularCoder& c, PackedVertex a, PackedVertex b, PackedVertex d) {
    auto between = [&](PackedVertex x, PackedVertex y, PackedVertex w) {
        return c.distance(x, w) + c.distance(w, y) == c.distance(x, y);
    };
    return between(a, b, d) || between(a, d, b) || between(b, d, a);
}

}  // namespace

RigidityReport rigidity_check(const VertexMap& G, const RigidityOptions& options) {
    const TreeLayout& lay = G.domain();
    const RegularCoder& c = G.target().coder;
    RigidityReport rep;
    std::size_t n = lay.size();

    if (!(G(0) == PackedVertex{}) && c.branching() < 3) {
        rep.verdict = RigidityVerdict::root_condition;
        rep.witness = {0};
        rep.detail = "root is not mapped to the root and the target root has fewer than three children";
        return rep;
    }

    std::vector<std::pair<PackedVertex, std::size_t>> sorted(n);
    for (std::size_t id = 0; id < n; ++id) sorted[id] = {G(id), id};
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 1; i < n; ++i) {
        if (sorted[i].first == sorted[i - 1].first) {
            rep.verdict = RigidityVerdict::not_injective;
            rep.witness = {sorted[i - 1].second, sorted[i].second};
            rep.detail = "two vertices share the image " + format_address(c.unpack(sorted[i].first), c.branching());
            return rep;
        }
    }

    unsigned gdepth = std::min(lay.depth(), options.geodesic_depth);
    std::vector<std::size_t> path;
    // Shallow levels first, so a failure is reported on the shortest line.
    for (unsigned level = 1; level <= gdepth; ++level) {
        for (std::size_t a = lay.level_begin(level); a < lay.level_end(level); ++a) {
            for (std::size_t b = a + 1; b < lay.level_end(level); ++b) {
                path.clear();
                std::size_t x = a, y = b;
                std::vector<std::size_t> right;
                while (x != y) {
                    path.push_back(x);
                    right.push_back(y);
                    x = G.parent(x);
                    y = G.parent(y);
                }
                path.push_back(x);
                path.insert(path.end(), right.rbegin(), right.rend());
                // Endpoints of the image set, then every point between them.
                std::size_t u = path[0];
                for (std::size_t v : path) {
                    if (c.distance(G(path[0]), G(v)) > c.distance(G(path[0]), G(u))) u = v;
                }
                std::size_t w = u;
                for (std::size_t v : path) {
                    if (c.distance(G(u), G(v)) > c.distance(G(u), G(w))) w = v;
                }
                bool ok = true;
                for (std::size_t v : path) {
                    ok = ok && c.distance(G(u), G(v)) + c.distance(G(v), G(w)) == c.distance(G(u), G(w));
                }
                ++rep.pairs_checked;
                if (ok) continue;
                // Smallest offending triple on the path.
                std::array<std::size_t, 3> best{};
                unsigned best_levels = std::numeric_limits<unsigned>::max();
                for (std::size_t i = 0; i < path.size(); ++i) {
                    for (std::size_t j = i + 1; j < path.size(); ++j) {
                        for (std::size_t k = j + 1; k < path.size(); ++k) {
                            if (on_common_geodesic(c, G(path[i]), G(path[j]), G(path[k]))) continue;
                            unsigned s = G.level(path[i]) + G.level(path[j]) + G.level(path[k]);
                            if (s < best_levels) {
                                best_levels = s;
                                best = {path[i], path[j], path[k]};
                            }
                        }
                    }
                }
                rep.verdict = RigidityVerdict::not_geodesic;
                rep.witness = {best[0], best[1], best[2]};
                rep.detail = "images of a geodesic line are not on a common geodesic";
                return rep;
            }
        }
    }

    unsigned cdepth = 0, covered = std::numeric_limits<unsigned>::max();
    for (std::size_t id = 0; id < n; ++id) cdepth = std::max<unsigned>(cdepth, G(id).level);
    for (std::size_t id = lay.level_begin(lay.depth()); id < lay.level_end(lay.depth()); ++id) {
        covered = std::min<unsigned>(covered, G(id).level);
    }
    auto offsets = packed_offsets(c, cdepth);
    if (offsets.back() > (std::size_t{1} << 25)) throw PreconditionViolation("codomain too large for the density scan");
    std::vector<char> hit(offsets.back(), 0), below(offsets.back(), 0);
    for (std::size_t id = 0; id < n; ++id) hit[packed_id(offsets, G(id))] = 1;
    for (unsigned level = cdepth; level-- > 0;) {
        for (std::uint64_t i = 0; i < c.power(level); ++i) {
            PackedVertex v{level, i};
            char any = 0;
            for (unsigned d = 0; d < c.branching(); ++d) {
                std::size_t k = packed_id(offsets, c.child(v, d));
                any = any || hit[k] || below[k];
            }
            below[packed_id(offsets, v)] = any;
        }
    }
    unsigned check_to = covered >= options.density_margin ? covered - options.density_margin : 0;
    for (unsigned level = 0; level <= check_to; ++level) {
        for (std::uint64_t i = 0; i < c.power(level); ++i) {
            if (!below[offsets[level] + i]) {
                rep.verdict = RigidityVerdict::not_dense;
                rep.detail = "no image strictly below " + format_address(c.unpack({level, i}), c.branching());
                return rep;
            }
        }
    }

    unsigned idepth = std::min(lay.depth(), options.isometry_depth);
    std::size_t m = lay.level_end(idepth);
    for (std::size_t a = 0; a < m; ++a) {
        for (std::size_t b = a + 1; b < m; ++b) {
            ++rep.pairs_checked;
            if (G.domain_distance(a, b) != G.image_distance(a, b)) {
                rep.verdict = RigidityVerdict::hypotheses_hold_not_isometry;
                rep.witness = {a, b};
                rep.detail = "distance not preserved";
                return rep;
            }
        }
    }
    rep.verdict = RigidityVerdict::isometry;
    return rep;
}

MorseReport morse_tracking_check(const VertexMap& F, const BoundaryMap& f, CellIndex cell,
                                 const MapConstants& constants) {
    const TreeLayout& lay = F.domain();
    const RegularCoder& c = F.target().coder;
    unsigned depth = lay.depth();
    if (depth != f.domain().depth()) throw PreconditionViolation("map depths differ");
    std::vector<PackedVertex> ray;
    for (std::size_t x = lay.level_begin(depth) + cell;; x = F.parent(x)) {
        ray.push_back(F(x));
        if (x == 0) break;
    }
    PackedVertex u = F(0), v = f.image(cell);
    unsigned uv = c.distance(u, v);
    MorseReport rep;
    rep.tau = constants.tau;
    rep.tau_prime = constants.tau_prime;
    for (PackedVertex w : ray) {
        double d = 0.5 * (static_cast<double>(c.distance(w, u)) + c.distance(w, v) - uv);
        rep.deviation = std::max(rep.deviation, d);
    }
    PackedVertex top = c.lca(u, v);
    std::vector<PackedVertex> geo;
    for (PackedVertex x : {u, v}) {
        while (x.level > top.level) {
            geo.push_back(x);
            x = c.parent(x);
        }
    }
    geo.push_back(top);
    for (PackedVertex y : geo) {
        unsigned best = std::numeric_limits<unsigned>::max();
        for (PackedVertex w : ray) best = std::min(best, c.distance(y, w));
        rep.coverage = std::max(rep.coverage, static_cast<double>(best));
    }
    return rep;
}

VertexId nearest_point_projection(const std::vector<VertexId>& target, const VertexId& x) {
    if (target.empty()) throw PreconditionViolation("projection target is empty");
    std::set<VertexId> members(target.begin(), target.end());
    std::size_t tops = 0;
    for (const auto& t : members) {
        if (t.is_root() || !members.count(parent(t))) ++tops;
    }
    if (tops != 1) throw PreconditionViolation("projection target is not connected");
    const VertexId* best = nullptr;
    std::size_t best_d = std::numeric_limits<std::size_t>::max();
    for (const auto& t : members) {
        std::size_t d = comb_distance(t, x);
        if (d < best_d) {
            best_d = d;
            best = &t;
        }
    }
    return *best;
}

}  // namespace cantree
