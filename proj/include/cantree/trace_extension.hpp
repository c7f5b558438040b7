#pragma once

// Trace of tree functions to the boundary, extension by cell averages, the
// sharp smoothness exponent and the sharpness probes built on them.

#include "cantree/function_spaces.hpp"

#include <memory>
#include <string>
#include <vector>

namespace cantree {

enum class ThetaAdmissibility { admissible, no_trace_space };

struct SharpTheta {
    double theta = 0.0;  // 1 - (beta - log K)/(p eps)
    ThetaAdmissibility status = ThetaAdmissibility::admissible;
};

SharpTheta sharp_theta(unsigned branching, const MetricWeights& w, double p);
bool trace_admissible(unsigned branching, const MetricWeights& w, double p, double theta);
bool extension_admissible(unsigned branching, const MetricWeights& w, double p, double theta);

// Values at the depth-N vertices of a regular layout.
BoundaryFunction trace(const TreeFunction& u);

struct Extension {
    TreeFunction u;
    EdgeGradient gradient;
};

// Cell averages at every vertex; at and below the resolution of f the values are copied.
Extension extend(const BoundaryFunction& f, const MetricWeights& w, unsigned depth);
// The same values without the gradient.
TreeFunction extend_values(const BoundaryFunction& f, unsigned depth);
TreeFunction extend_values(const BoundaryFunction& f, std::shared_ptr<const TreeLayout> layout);

// A ratio whose denominator vanished; `constant` marks the 0/0 case.
struct NormRatio {
    double ratio = 0.0;
    double numerator = 0.0;
    double denominator = 0.0;
    bool constant = false;
};

NormRatio trace_norm_ratio(const TreeFunction& u, const MetricWeights& w, double p, double theta);
NormRatio extension_norm_ratio(const BoundaryFunction& f, const MetricWeights& w, double p, double theta,
                               unsigned depth);

// Seeded i.i.d. uniform [-1, 1] vertex values in breadth-first order, so the
// family at depth N is a restriction of the family at any larger depth.
TreeFunction random_tree_function(std::shared_ptr<const TreeLayout> layout, std::uint64_t seed);
BoundaryFunction random_boundary_function(unsigned branching, unsigned resolution, std::uint64_t seed);

enum class SeriesVerdict { convergent, borderline, divergent, no_verdict };
std::string to_string(SeriesVerdict v);

// Geometric decay factor of the last five increments: < 0.9 convergent,
// >= 0.99 divergent, otherwise borderline.
SeriesVerdict increments_verdict(const std::vector<double>& increments);
double decay_factor(const std::vector<double>& increments);

struct ProbeRow {
    unsigned depth = 0;
    double partial_sum = 0.0;  // Besov seminorm^p of the depth-N trace
    double increment = 0.0;
};

struct SharpnessProbe {
    double gamma = 0.0;
    double theta = 0.0;
    double threshold = 0.0;        // 1 - gamma/eps
    bool divergent_regime = false; // theta >= threshold
    double slope = 0.0;            // fitted log E_p vs log r at the largest depth
    double expected_slope = 0.0;   // (eps - gamma)/eps
    double fit_residual = 0.0;
    std::vector<ProbeRow> rows;
    double decay = 0.0;
    SeriesVerdict verdict = SeriesVerdict::no_verdict;
};

SharpnessProbe sharpness_probe_trace2(unsigned branching, const MetricWeights& w, double p, double theta,
                                      double gamma, unsigned min_depth, unsigned max_depth);

enum class HolderCase { one_minus_inverse_p, theta_minus_q_over_p, below_one_minus_q_over_p, not_applicable };
std::string to_string(HolderCase c);

struct HolderEmbedding {
    HolderCase which = HolderCase::not_applicable;
    double alpha = 0.0;
    double holder = 0.0;  // seminorm of the boundary values of Ext f
    double besov = 0.0;   // B^theta_{p,p} seminorm (sum form)
};

HolderCase holder_case(double q, double p, double theta, double* alpha);
HolderEmbedding holder_embedding_check(const BoundaryFunction& f, double epsilon, double p, double theta);

// e^((eps p - beta) n) r_n^(theta p - Q) with r_n = (2/eps) e^(-eps n), n = 0..depth.
std::vector<double> extension_level_weights(unsigned branching, const MetricWeights& w, double p, double theta,
                                            unsigned depth);

}  // namespace cantree
