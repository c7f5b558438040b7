#pragma once

// Vertex-valued functions on a laid-out tree and per-edge gradients.

#include "cantree/tree.hpp"

#include <memory>
#include <vector>

namespace cantree {

struct MetricWeights;
struct TreePoint;

// Values at the vertices to depth N, linear along each edge in the metric d_X.
class TreeFunction {
public:
    TreeFunction(std::shared_ptr<const TreeLayout> layout, std::vector<double> values);

    const TreeLayout& layout() const { return *layout_; }
    std::shared_ptr<const TreeLayout> layout_ptr() const { return layout_; }
    const std::vector<double>& values() const { return values_; }
    double operator[](std::size_t id) const { return values_[id]; }
    double at(const VertexId& x) const { return values_[layout_->id_of(x)]; }
    double evaluate(const MetricWeights& weights, const TreePoint& point) const;

private:
    std::shared_ptr<const TreeLayout> layout_;
    std::vector<double> values_;
};

// One nonnegative value per edge, indexed by the id of the edge's lower vertex.
// Entry 0 (the root) is unused and kept at zero.
class EdgeGradient {
public:
    EdgeGradient(std::shared_ptr<const TreeLayout> layout, std::vector<double> values);

    const TreeLayout& layout() const { return *layout_; }
    const std::vector<double>& values() const { return values_; }
    double operator[](std::size_t lower_id) const { return values_[lower_id]; }

private:
    std::shared_ptr<const TreeLayout> layout_;
    std::vector<double> values_;
};

}  // namespace cantree
