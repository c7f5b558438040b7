#pragma once

// The boundary of a truncated tree: depth-N cylinder cells with the visual
// metric (2/eps) e^(-eps k) and the uniform measure nu.

#include "cantree/tree.hpp"

#include <cstdint>
#include <vector>

namespace cantree {

using CellIndex = std::uint64_t;

struct LevelForRadius {
    unsigned level = 0;
    bool clamped = false;
};

// Half-open range of cells sharing one prefix.
struct CellRange {
    CellIndex begin = 0;
    CellIndex end = 0;
    unsigned level = 0;
    bool clamped = false;
    std::uint64_t size() const { return end - begin; }
    bool contains(CellIndex c) const { return c >= begin && c < end; }
};

struct AhlforsSample {
    CellIndex center = 0;
    double radius = 0.0;
};

struct AhlforsReport {
    double min_ratio = 0.0;
    double max_ratio = 0.0;
    double spread = 0.0;  // max/min
    AhlforsSample argmin;
    AhlforsSample argmax;
    std::size_t sample_count = 0;
};

class BoundarySpace {
public:
    BoundarySpace(TreeSpec spec, double epsilon);

    const TreeSpec& spec() const { return spec_; }
    unsigned depth() const { return spec_.depth(); }
    unsigned branching() const { return spec_.max_branching(); }
    double epsilon() const { return epsilon_; }
    double diameter() const { return 2.0 / epsilon_; }

    std::uint64_t cell_count() const { return count_; }
    // Cells are numbered in address order.
    VertexId address(CellIndex cell) const;
    CellIndex cell_of(const VertexId& address) const;
    // Level-k ancestor index of a cell (regular trees).
    CellIndex prefix(CellIndex cell, unsigned level) const;

    // Length of the common address prefix; throws SameCell for equal cells.
    unsigned split_level(CellIndex a, CellIndex b) const;
    double visual_distance(CellIndex a, CellIndex b) const;
    // (2/eps) e^(-eps k), the distance of a pair splitting at level k.
    double level_scale(int level) const;

    LevelForRadius level_for_radius(double radius) const;
    CellRange ball_cells(CellIndex center, double radius) const;

    double cell_measure(unsigned level) const;
    double hausdorff_dimension() const;

    AhlforsReport ahlfors_regularity_report(const std::vector<AhlforsSample>& samples) const;

private:
    TreeSpec spec_;
    double epsilon_;
    std::uint64_t count_ = 0;
    std::vector<std::uint64_t> pow_;         // regular: K^j
    std::vector<VertexId> cells_;            // nonuniform: cells in address order
};

}  // namespace cantree
