#pragma once

// Uniformizing metric, weighted measure, ball masses, doubling and Poincare checks.

#include "cantree/tree.hpp"
#include "cantree/tree_function.hpp"

#include <array>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

namespace cantree {

struct MetricWeights {
    double epsilon = 1.0;  // metric density e^(-epsilon level)
    double beta = 1.0;     // measure density e^(-beta level)

    MetricWeights() = default;
    MetricWeights(double epsilon_, double beta_);

    double dimension_exponent() const;  // max{1, beta/epsilon}
    double diameter() const { return 2.0 / epsilon; }
    // Throws ParameterViolation unless beta > log K.
    void require_finite_measure(unsigned max_branching) const;
};

// A point on the edge parent(edge) -> edge; fraction 1 is the vertex itself.
// The root is represented by an empty edge address.
struct TreePoint {
    VertexId edge;
    double fraction = 1.0;

    static TreePoint root() { return {}; }
    static TreePoint at_vertex(const VertexId& v);
    bool is_root() const { return edge.is_root(); }
    double level() const;
};

inline constexpr double kInfiniteLevel = std::numeric_limits<double>::infinity();

// Integral of e^(-rate t) over [a, b]; b may be infinite.
double exp_integral(double rate, double a, double b);
// d_X length of a full edge between levels n and n+1.
double edge_length(double epsilon, unsigned upper_level);

double metric_distance(const MetricWeights& w, const TreePoint& a, const TreePoint& b);
double metric_distance(const MetricWeights& w, const VertexId& a, const VertexId& b);

struct BallPart {
    enum class Kind { path_segment, edge_segment, branch, subtree };
    Kind kind;
    VertexId anchor;            // lower vertex of the edge, or the subtree top
    unsigned multiplicity = 1;  // identical side branches merged on regular trees
    double level_from = 0.0;
    double level_to = 0.0;  // may be infinite
    double mass_lo = 0.0;   // total over the multiplicity
    double mass_hi = 0.0;
};

enum class BallRegime { small_radius, large_radius };

struct BallReport {
    TreePoint center;
    double requested_radius = 0.0;
    double radius = 0.0;
    bool radius_clamped = false;
    double measure = 0.0;  // midpoint of [measure_lo, measure_hi]
    double measure_lo = 0.0;
    double measure_hi = 0.0;
    bool exact = true;  // false when the nonuniform tail bracket is open
    BallRegime regime = BallRegime::small_radius;
    double critical_radius = 0.0;   // e^(-epsilon |x|)/epsilon
    double comparison_value = 0.0;  // e^((eps-beta)|x|) r or r^(beta/eps)
    double ratio = 0.0;             // measure / comparison_value
    std::vector<BallPart> decomposition;
};

BallReport ball_measure(const TreeSpec& spec, const MetricWeights& w, const TreePoint& center,
                        double radius);

struct HalfBallReport {
    double measure = 0.0;
    double measure_lo = 0.0;
    double measure_hi = 0.0;
    double depth_reach = 0.0;  // rho; infinite when the whole subtree is reached
    double comparison_value = 0.0;
    double continuum_estimate = 0.0;  // level-count approximation K^(t-|z|)
};

HalfBallReport half_ball_measure(const TreeSpec& spec, const MetricWeights& w, const VertexId& top,
                                 double radius);

// mu(X) of the untruncated tree (interval midpoint for nonuniform trees).
double total_measure(const TreeSpec& spec, const MetricWeights& w);

double doubling_ratio(const TreeSpec& spec, const MetricWeights& w, const TreePoint& center,
                      double radius);

// r_j = (2/eps) e^(-eps j) lambda for j = 0..depth and lambda in {0.5, 1}.
std::vector<double> radius_grid(const MetricWeights& w, unsigned depth);

struct NestedBallSample {
    TreePoint outer_center;
    double outer_radius = 0.0;
    TreePoint inner_center;
    double inner_radius = 0.0;
};

// Nested pairs along the leftmost ray of a regular tree, using radius_grid.
std::vector<NestedBallSample> nested_ball_grid(const TreeSpec& spec, const MetricWeights& w);

struct DimensionReport {
    double exponent = 0.0;
    double statistic = 0.0;
    std::size_t worst_sample = 0;
    std::optional<double> alt_exponent;
    double alt_statistic = 0.0;
    std::size_t alt_worst_sample = 0;
    std::size_t sample_count = 0;
};

DimensionReport dimension_condition_check(const TreeSpec& spec, const MetricWeights& w,
                                          const std::vector<NestedBallSample>& samples,
                                          std::optional<double> alt_exponent = std::nullopt);

struct AlgebraicEnvelope {
    double lower;
    double value;
    double upper;
};

AlgebraicEnvelope algebraic_envelope(double sigma, double t);

// 16-point Gauss-Legendre rule on [-1, 1].
struct GaussRule {
    std::array<double, 16> nodes;
    std::array<double, 16> weights;
};
const GaussRule& gauss16();

struct Ball {
    TreePoint center;
    double radius = 0.0;
};

struct PoincareReport {
    double constant = 0.0;
    double oscillation = 0.0;  // mean of |u - u_B|^p
    double gradient = 0.0;     // mean of g^p
    double measure = 0.0;
    bool degenerate = false;  // g == 0 and u constant
};

// Quadrature data for one ball on the finite tree to the layout depth.
// Reusable across functions defined on the same layout.
class BallQuadrature {
public:
    BallQuadrature(const TreeLayout& layout, const MetricWeights& w, const Ball& ball);

    double measure() const { return measure_; }
    std::size_t segment_count() const { return segments_.size(); }
    PoincareReport poincare(const TreeFunction& u, const EdgeGradient& g, double p) const;

private:
    struct Table {
        std::array<double, 16> shape;   // position along the edge in [0, 1] w.r.t. d_X
        std::array<double, 16> weight;  // Gauss weight times e^(-beta t)
        double exact_mass = 0.0;
    };
    struct Segment {
        std::uint32_t lower;
        std::uint32_t table;
    };
    Table make_table(unsigned upper_level, double from, double to) const;

    MetricWeights w_;
    double radius_ = 0.0;
    double measure_ = 0.0;
    std::vector<Table> tables_;
    std::vector<Segment> segments_;
};

PoincareReport poincare_check(const MetricWeights& w, const TreeFunction& u, const EdgeGradient& g,
                              const Ball& ball, double p = 1.0);

}  // namespace cantree
