#include "cantree/tree_function.hpp"

#include "cantree/errors.hpp"
#include "cantree/metric.hpp"

#include <cmath>

namespace cantree {

TreeFunction::TreeFunction(std::shared_ptr<const TreeLayout> layout, std::vector<double> values)
    : layout_(std::move(layout)), values_(std::move(values)) {
    if (!layout_) throw PreconditionViolation("tree function needs a layout");
    if (values_.size() != layout_->size()) throw PreconditionViolation("tree function size mismatch");
}

double TreeFunction::evaluate(const MetricWeights& weights, const TreePoint& point) const {
    if (point.is_root()) return values_[0];
    std::size_t lower = layout_->id_of(point.edge);
    double top = values_[layout_->parent(lower)];
    double bottom = values_[lower];
    double eps = weights.epsilon;
    // Linear in d_X: fraction of the edge length covered from the top.
    double share = -std::expm1(-eps * point.fraction) / -std::expm1(-eps);
    return top + (bottom - top) * share;
}

EdgeGradient::EdgeGradient(std::shared_ptr<const TreeLayout> layout, std::vector<double> values)
    : layout_(std::move(layout)), values_(std::move(values)) {
    if (!layout_) throw PreconditionViolation("gradient needs a layout");
    if (values_.size() != layout_->size()) throw PreconditionViolation("gradient size mismatch");
    values_[0] = 0.0;
    for (double v : values_) {
        if (!(v >= 0.0)) throw PreconditionViolation("gradient values must be nonnegative");
    }
}

}  // namespace cantree
