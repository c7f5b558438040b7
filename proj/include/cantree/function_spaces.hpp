#pragma once

// Boundary functions and Besov seminorms, Newtonian energy on the tree,
// upper gradients and the named test-function generators.

#include "cantree/boundary.hpp"
#include "cantree/metric.hpp"
#include "cantree/tree_function.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace cantree {

// Piecewise constant on the depth-m cells of a regular K-ary boundary.
class BoundaryFunction {
public:
    BoundaryFunction(unsigned branching, unsigned resolution, std::vector<double> values);
    static BoundaryFunction constant(unsigned branching, unsigned resolution, double value);

    unsigned branching() const { return k_; }
    unsigned resolution() const { return m_; }
    std::size_t size() const { return values_.size(); }
    const std::vector<double>& values() const { return values_; }
    double operator[](CellIndex cell) const { return values_[cell]; }

    // Value on a cell of a finer (or equal) depth.
    double at(CellIndex cell, unsigned depth) const;
    BoundaryFunction refine(unsigned depth) const;

    friend bool operator==(const BoundaryFunction&, const BoundaryFunction&) = default;

private:
    unsigned k_;
    unsigned m_;
    std::vector<double> values_;
};

struct BesovParams {
    double p = 2.0;
    double theta = 0.5;
    std::optional<double> q;             // only q == p is supported
    std::optional<unsigned> max_level;   // default: the resolution of f
    void validate() const;
};

// Controls for the general-p pair sums.
struct PairSumOptions {
    std::uint64_t pair_budget = std::uint64_t{1} << 26;  // exact below this many ordered pairs
    std::uint64_t samples_per_prefix = 1 << 14;
    std::uint64_t seed = 0x5eed;
};

// S_k = sum over level-k prefixes of sum over ordered pairs (a, b) of cells
// below the prefix of |f_a - f_b|^p, for k = 0..m (S_m = 0).
struct LevelPairSums {
    std::vector<double> sums;
    bool sampled = false;
    std::uint64_t seed = 0;
};

LevelPairSums level_pair_sums(const BoundaryFunction& f, double p, const PairSumOptions& options = {});

struct EpReport {
    double value = 0.0;
    unsigned level = 0;  // k(t): the ball B(zeta, t) is a level-k cylinder
    bool sampled = false;
    std::uint64_t seed = 0;
};

EpReport ep_modulus(const BoundaryFunction& f, double epsilon, double t, double p,
                    const PairSumOptions& options = {});

struct BesovTerm {
    unsigned n = 0;
    double t = 0.0;
    double ep = 0.0;
    double term = 0.0;     // (E_p(f, t_n) / t_n^theta)^p
    double partial = 0.0;  // running sum of terms
};

struct BesovReport {
    double value = 0.0;
    std::vector<BesovTerm> terms;
    std::vector<double> last_increments;  // up to three, oldest first
    bool sampled = false;
    std::uint64_t seed = 0;
};

// t_n = (2/eps) e^((1-n) eps), n = 0..max_level.
double besov_scale(double epsilon, unsigned n);

BesovReport besov_seminorm_sum(const BoundaryFunction& f, double epsilon, const BesovParams& params,
                               const PairSumOptions& options = {});
double besov_seminorm_double_integral(const BoundaryFunction& f, double epsilon, const BesovParams& params,
                                      const PairSumOptions& options = {});

BoundaryFunction layer_average(const BoundaryFunction& f, unsigned level);

// max over cell pairs of |f(a) - f(b)| / d(a, b)^alpha.
double holder_seminorm(const BoundaryFunction& f, double epsilon, double alpha);

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double residual = 0.0;  // max absolute deviation
};
LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y);

// Slope of log E_p(f, t_n) against log t_n over n in [from, to].
LineFit ep_slope(const BoundaryFunction& f, double epsilon, double p, unsigned from, unsigned to,
                 const PairSumOptions& options = {});

// |u(x) - u(parent)| / d_X(x, parent) on each edge.
EdgeGradient minimal_upper_gradient(const TreeFunction& u, const MetricWeights& w);

struct EnergyReport {
    double energy = 0.0;            // sum over edges of g^p * mu(edge)
    double lp_norm_p = 0.0;         // ||u||_p^p with u constant below the leaves
    double norm = 0.0;              // (lp_norm_p + energy)^(1/p)
    std::vector<double> level_energy;  // entry n: edges from level n to n+1
};

EnergyReport newtonian_energy(const TreeFunction& u, const EdgeGradient& g, const MetricWeights& w, double p);
EnergyReport newtonian_energy(const TreeFunction& u, const MetricWeights& w, double p);
double newtonian_norm(const TreeFunction& u, const MetricWeights& w, double p);

// ||g||_{L^p(mu)} over the finite tree.
double gradient_lp_norm(const EdgeGradient& g, const MetricWeights& w, double p);

// f(xi) = d(xi, center)^alpha; the centre's own cell uses the cell scale.
BoundaryFunction power_function(const BoundarySpace& space, CellIndex center, double alpha, double p);

// f(x) = log(|x| + 1), radial.
class LogFunction {
public:
    LogFunction(unsigned branching, const MetricWeights& w);

    double value(unsigned level) const;
    double gradient(unsigned level) const;  // on edges from `level` to level+1
    // Upper gradient e^(eps |x|)/(|x|+1).
    double reference_gradient(unsigned level) const;
    double level_energy(unsigned level, double p) const;
    double energy_partial_sum(unsigned depth, double p) const;
    // Closed-form bound on the energy of all levels >= depth; infinite when divergent.
    double energy_tail_bound(unsigned depth, double p) const;
    // (beta - log K)/eps, the critical exponent.
    double critical_exponent() const;

    TreeFunction tree_function(std::shared_ptr<const TreeLayout> layout) const;

private:
    unsigned k_;
    MetricWeights w_;
};

// f(0) = 0, f(child 0 of x) = f(x) + e^((gamma - eps)|x|), other children copy f(x).
// Requires 0 < gamma < min{eps, (beta - log K)/p} so that f is bounded with finite energy.
class RecursiveGammaFunction {
public:
    RecursiveGammaFunction(unsigned branching, const MetricWeights& w, double p, double gamma);

    // Open interval (max{eps(1 - theta), 0}, min{eps, (beta - log K)/p}); gamma inside it
    // puts the trace outside B^theta_{p,p}.
    static std::pair<double, double> admissible_gamma(unsigned branching, const MetricWeights& w, double p,
                                                      double theta);

    double gamma() const { return gamma_; }
    double value(const VertexId& x) const;
    double gradient(unsigned level) const;  // on child-0 edges
    double level_energy(unsigned level) const;
    double sup_bound() const;  // sum of e^((gamma - eps) k)

    TreeFunction tree_function(std::shared_ptr<const TreeLayout> layout) const;
    EdgeGradient upper_gradient(std::shared_ptr<const TreeLayout> layout) const;
    // Values at the depth-N vertices.
    BoundaryFunction trace(unsigned depth) const;

private:
    unsigned k_;
    MetricWeights w_;
    double p_;
    double gamma_;
};

}  // namespace cantree
