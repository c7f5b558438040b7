#pragma once

// Quasisymmetric maps between tree boundaries, rough quasiisometries between
// trees, the conversions between the two, and the rigidity checker.

#include "cantree/boundary.hpp"
#include "cantree/function_spaces.hpp"
#include "cantree/tree.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace cantree {

// eta(t) = A t^alpha1 for t <= 1, A t^alpha2 for t >= 1.
struct EtaProfile {
    double alpha1 = 1.0;
    double alpha2 = 1.0;
    double amplitude = 1.0;  // A

    EtaProfile() = default;
    EtaProfile(double alpha1_, double alpha2_, double amplitude_);
    double operator()(double t) const;
};

enum class MapProvenance { explicit_map, snowflake, induced_from_rqi, extended_from_qs };
std::string to_string(MapProvenance p);

// A regular K-ary codomain tree with its metric exponent.
struct RegularTarget {
    RegularCoder coder;
    double epsilon;

    RegularTarget(unsigned branching, double epsilon_);
    unsigned branching() const { return coder.branching(); }
};

// Image of each depth-N domain cell, as the codomain vertex that the finite
// construction resolves. Distinct cells whose images are nested are unresolved.
class BoundaryMap {
public:
    BoundaryMap(BoundarySpace domain, RegularTarget target, std::vector<PackedVertex> images,
                MapProvenance provenance, std::optional<EtaProfile> profile = std::nullopt);

    const BoundarySpace& domain() const { return domain_; }
    const RegularTarget& target() const { return target_; }
    const std::vector<PackedVertex>& images() const { return images_; }
    PackedVertex image(CellIndex cell) const { return images_[cell]; }
    MapProvenance provenance() const { return provenance_; }
    const std::optional<EtaProfile>& profile() const { return profile_; }
    void set_profile(EtaProfile profile) { profile_ = profile; }

    // Deepest image level.
    unsigned codomain_depth() const { return depth_; }
    // Split level of the images, or nothing if one image contains the other.
    std::optional<unsigned> image_split(CellIndex a, CellIndex b) const;
    double image_scale(unsigned level) const;

    // Bookkeeping filled in by boundary_map_from_rqi.
    unsigned window = 0;
    std::size_t unstabilized = 0;

private:
    BoundarySpace domain_;
    RegularTarget target_;
    std::vector<PackedVertex> images_;
    MapProvenance provenance_;
    std::optional<EtaProfile> profile_;
    unsigned depth_ = 0;
};

class VertexMap {
public:
    VertexMap(std::shared_ptr<const TreeLayout> domain, RegularTarget target, std::vector<PackedVertex> images,
              MapProvenance provenance);

    const TreeLayout& domain() const { return *domain_; }
    std::shared_ptr<const TreeLayout> domain_ptr() const { return domain_; }
    const RegularTarget& target() const { return target_; }
    const std::vector<PackedVertex>& images() const { return images_; }
    PackedVertex operator()(std::size_t id) const { return images_[id]; }
    MapProvenance provenance() const { return provenance_; }

    // Profile of the boundary map this was extended from, if any.
    std::optional<EtaProfile> source_profile;
    double source_epsilon = 0.0;

    unsigned level(std::size_t id) const { return levels_[id]; }
    std::size_t parent(std::size_t id) const { return parents_[id]; }
    unsigned domain_distance(std::size_t a, std::size_t b) const;
    unsigned image_distance(std::size_t a, std::size_t b) const;

private:
    std::shared_ptr<const TreeLayout> domain_;
    RegularTarget target_;
    std::vector<PackedVertex> images_;
    MapProvenance provenance_;
    std::vector<std::uint32_t> levels_;
    std::vector<std::uint32_t> parents_;
};

struct Triple {
    CellIndex zeta = 0;
    CellIndex xi = 0;
    CellIndex chi = 0;
};

struct QsOptions {
    std::uint64_t exhaustive_cells = std::uint64_t{1} << 12;
    std::uint64_t samples = 100000;
    std::uint64_t seed = 0x9e3779b9;
    bool force_sampling = false;
};

struct QsReport {
    double statistic = 0.0;  // max of image ratio / eta(domain ratio); <= 1 passes
    Triple witness;
    std::uint64_t triples = 0;  // evaluated (pair-aggregated when exhaustive)
    std::uint64_t skipped = 0;  // unresolved image pairs
    bool exhaustive = false;
    std::uint64_t seed = 0;
    bool pass() const { return statistic <= 1.0 + 1e-12; }
};

QsReport qs_check(const BoundaryMap& f, const EtaProfile& eta, const QsOptions& options = {});

// Largest image ratio per split difference Delta = level(zeta, xi) - level(zeta, chi).
struct DistortionBuckets {
    std::vector<int> delta;
    std::vector<double> ratio;
    double epsilon = 1.0;  // domain exponent: t = e^(-epsilon Delta)
    std::uint64_t triples = 0;
};

DistortionBuckets distortion_buckets(const BoundaryMap& f, const QsOptions& options = {});
EtaProfile fit_eta(const BoundaryMap& f, const QsOptions& options = {});
EtaProfile fit_eta(const DistortionBuckets& buckets);
// Smallest A with ratio <= A t^alpha in every bucket.
double fit_amplitude(const DistortionBuckets& buckets, double alpha1, double alpha2);

// F(x) = lca of the images of the cells below x; F(root) = root.
VertexMap extend_qs_to_tree(const BoundaryMap& f);

struct PairWitness {
    std::size_t a = 0;
    std::size_t b = 0;
};

struct RqiReport {
    double l1 = 0.0;
    double l2 = 0.0;
    double offset = 0.0;         // Lambda for the measured slopes
    double density_radius = 0.0;
    unsigned density_depth = 0;  // codomain levels scanned
    std::uint64_t pairs = 0;
    bool exhaustive = true;
    std::uint64_t seed = 0;
    // Per domain distance d: smallest and largest image distance.
    std::vector<int> min_image;
    std::vector<int> max_image;
    // Predicted constants when the map was extended from a known profile.
    std::optional<double> theory_l1, theory_l2, theory_offset;
    std::uint64_t theory_violations = 0;
    std::optional<PairWitness> theory_witness;

    double big_l() const;  // max{1/L1, L2}
};

struct RqiOptions {
    unsigned exhaustive_depth = 8;
    std::uint64_t samples = 1000000;
    std::uint64_t seed = 0x51ed;
};

RqiReport rqi_check(const VertexMap& F, const RqiOptions& options = {});

// Distances d violating L1 d - lower_offset <= d' <= L2 d + upper_offset, with the worst one.
struct EnvelopeCheck {
    std::uint64_t violations = 0;
    std::optional<int> worst_distance;
};
EnvelopeCheck check_envelope(const RqiReport& report, double l1, double l2, double lower_offset,
                             double upper_offset);
inline EnvelopeCheck check_envelope(const RqiReport& report, double l1, double l2, double offset) {
    return check_envelope(report, l1, l2, offset, offset);
}

// True when F(parent) is an ancestor of F(child) on every edge.
bool ray_order_preserving(const VertexMap& F);

struct FromRqiOptions {
    double max_unstabilized = 0.5;
    std::optional<unsigned> window;  // default: 0 for ray-order-preserving maps, else ceil(L(L + 2 Lambda + 1))
};

BoundaryMap boundary_map_from_rqi(const VertexMap& F, double domain_epsilon, const RqiReport& report,
                                  const FromRqiOptions& options = {});

struct BiHolderReport {
    double lower_exponent = 0.0;  // C1 d^lower <= d_f
    double upper_exponent = 0.0;  // d_f <= C2 d^upper
    double c1 = 0.0;
    double c2 = 0.0;
    std::optional<double> theory_upper, theory_lower;  // L1 eps_Y/eps_X and L2 eps_Y/eps_X
};

BiHolderReport bi_holder_check(const BoundaryMap& f, const RqiReport* report = nullptr);

struct MapConstants {
    double tau = 0.0;
    double tau_prime = 0.0;
    double ancestor_bound = 0.0;  // C(L, Lambda)
    double s0 = 0.0;
    double r0 = 0.0;
    double t0 = 0.0;
    double t1 = 0.0;
};

MapConstants map_constants(double big_l, double offset, double domain_epsilon, const BiHolderReport& holder,
                           double domain_diameter);

struct PullbackReport {
    EdgeGradient gradient;
    TreeFunction pulled;  // u o F
    double ratio = 0.0;
    double numerator = 0.0;
    double denominator = 0.0;
    bool constant = false;
    double c0 = 0.0;  // max over vertices of (p eps_X - beta_X)|x| + (beta_Y - p eps_Y)|F(x)|
    double amplitude = 0.0;
    std::uint64_t endpoint_failures = 0;  // edges where |v(a) - v(b)| > integral of g
};

PullbackReport pullback_energy(const TreeFunction& u, const MetricWeights& wy, const VertexMap& F,
                               const MetricWeights& wx, double p, double big_l, double offset);

struct PushforwardReport {
    BoundaryFunction result;
    double ratio = 0.0;
    double numerator = 0.0;
    double denominator = 0.0;
    bool constant = false;
    std::size_t mismatches = 0;  // cells where the pipeline differs from u o f
    std::size_t unresolved = 0;  // cells whose image is coarser than u
};

// Largest theta_X the exponent condition allows for theta_Y.
double admissible_theta_x(const EtaProfile& eta, double qx, double qy, double p, double theta_y);

PushforwardReport besov_pushforward(const BoundaryFunction& u, const BoundaryMap& f, double p, double theta_x,
                                    double theta_y);

BoundaryMap snowflake_map(unsigned branching, unsigned depth, double domain_epsilon, double target_epsilon);

struct BinaryTernaryExample {
    VertexMap g;  // binary -> ternary
    VertexMap h;  // ternary -> binary, smallest preimage under g
};

BinaryTernaryExample example_binary_ternary(unsigned binary_depth, unsigned ternary_depth, double binary_epsilon,
                                            double ternary_epsilon);

// Isometry onto the ternary tree from a tree whose root has four children, the
// last of which has two; the root goes to the first child of the ternary root.
VertexMap example_rerooted_isometry(unsigned depth, double epsilon);

// Binary cells read through the prefix code 0 -> 0, 10 -> 1, 11 -> 2.
BoundaryMap example_boundary_map(unsigned binary_depth, double domain_epsilon, double target_epsilon);

enum class RigidityVerdict { isometry, not_injective, not_geodesic, not_dense, root_condition, hypotheses_hold_not_isometry };
std::string to_string(RigidityVerdict v);

struct RigidityReport {
    RigidityVerdict verdict = RigidityVerdict::isometry;
    std::vector<std::size_t> witness;  // domain vertex ids
    std::string detail;
    std::uint64_t pairs_checked = 0;
};

struct RigidityOptions {
    unsigned geodesic_depth = 6;
    unsigned isometry_depth = 8;
    unsigned density_margin = 1;
};

RigidityReport rigidity_check(const VertexMap& G, const RigidityOptions& options = {});

struct MorseReport {
    double deviation = 0.0;  // max over the ray of the distance to the image geodesic
    double coverage = 0.0;   // max over the image geodesic of the distance to the ray image
    double tau = 0.0;
    double tau_prime = 0.0;
    bool pass() const { return deviation < tau && coverage < tau_prime; }
};

MorseReport morse_tracking_check(const VertexMap& F, const BoundaryMap& f, CellIndex cell,
                                 const MapConstants& constants);

// Closest vertex of a connected vertex set.
VertexId nearest_point_projection(const std::vector<VertexId>& target, const VertexId& x);

}  // namespace cantree
