#include "cantree/tree.hpp"

#include "cantree/errors.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

namespace cantree {

VertexId VertexId::child(Digit i) const {
    std::vector<Digit> d = digits_;
    d.push_back(i);
    return VertexId(std::move(d));
}

VertexId VertexId::prefix(std::size_t length) const {
    if (length > digits_.size()) throw PreconditionViolation("prefix longer than address");
    return VertexId(std::vector<Digit>(digits_.begin(), digits_.begin() + length));
}

bool VertexId::is_ancestor_of(const VertexId& other) const {
    if (digits_.size() > other.digits_.size()) return false;
    return std::equal(digits_.begin(), digits_.end(), other.digits_.begin());
}

std::size_t VertexIdHash::operator()(const VertexId& v) const noexcept {
    std::size_t h = 1469598103934665603ull ^ v.level();
    for (Digit d : v.digits()) h = (h ^ d) * 1099511628211ull;
    return h;
}

TreeSpec TreeSpec::regular(unsigned branching, unsigned depth) {
    if (branching < 1) throw ParameterViolation("branching must be >= 1");
    if (branching > std::numeric_limits<Digit>::max()) throw ParameterViolation("branching too large");
    TreeSpec s;
    s.depth_ = depth;
    s.k_max_ = branching;
    s.regular_ = true;
    return s;
}

TreeSpec TreeSpec::nonuniform(ChildRule rule, unsigned max_branching, unsigned depth) {
    if (!rule) throw ParameterViolation("child-count rule is empty");
    if (max_branching < 1 || max_branching > std::numeric_limits<Digit>::max())
        throw ParameterViolation("max branching out of range");
    TreeSpec s;
    s.depth_ = depth;
    s.k_max_ = max_branching;
    s.regular_ = false;
    s.rule_ = std::move(rule);
    return s;
}

unsigned TreeSpec::child_count(const VertexId& x) const {
    if (regular_) return k_max_;
    unsigned c = rule_(x);
    if (c < 1 || c > k_max_) {
        throw PreconditionViolation("child-count rule returned " + std::to_string(c) +
                                    ", outside [1, " + std::to_string(k_max_) + "]");
    }
    return c;
}

bool TreeSpec::contains(const VertexId& x) const {
    if (x.level() > depth_) return false;
    if (regular_) {
        for (Digit d : x.digits())
            if (d >= k_max_) return false;
        return true;
    }
    VertexId walk;
    for (Digit d : x.digits()) {
        if (d >= child_count(walk)) return false;
        walk = walk.child(d);
    }
    return true;
}

void TreeSpec::validate(const VertexId& x) const {
    if (x.level() > depth_) {
        throw PreconditionViolation("vertex at level " + std::to_string(x.level()) +
                                    " exceeds truncation depth " + std::to_string(depth_));
    }
    if (!contains(x)) throw PreconditionViolation("address digit exceeds child count");
}

TreeSpec TreeSpec::with_depth(unsigned depth) const {
    TreeSpec s = *this;
    s.depth_ = depth;
    return s;
}

VertexId lca(const VertexId& x, const VertexId& y) {
    std::size_t n = std::min(x.level(), y.level());
    std::size_t k = 0;
    while (k < n && x[k] == y[k]) ++k;
    return x.prefix(k);
}

std::size_t comb_distance(const VertexId& x, const VertexId& y) {
    std::size_t n = std::min(x.level(), y.level());
    std::size_t k = 0;
    while (k < n && x[k] == y[k]) ++k;
    return x.level() + y.level() - 2 * k;
}

GeodesicPath geodesic(const VertexId& x, const VertexId& y) {
    VertexId top = lca(x, y);
    GeodesicPath path;
    for (std::size_t len = x.level(); len > top.level(); --len) path.vertices.push_back(x.prefix(len));
    for (std::size_t len = top.level(); len <= y.level(); ++len) path.vertices.push_back(y.prefix(len));
    return path;
}

VertexId parent(const VertexId& x) {
    if (x.is_root()) throw NoParent();
    return x.prefix(x.level() - 1);
}

std::vector<VertexId> children(const TreeSpec& spec, const VertexId& x) {
    spec.validate(x);
    if (x.level() >= spec.depth()) {
        throw PreconditionViolation("children of a vertex at the truncation depth");
    }
    std::vector<VertexId> out;
    unsigned c = spec.child_count(x);
    for (unsigned i = 0; i < c; ++i) out.push_back(x.child(static_cast<Digit>(i)));
    return out;
}

void for_each_subtree_cell(const TreeSpec& spec, const VertexId& x, unsigned level,
                           const std::function<void(const VertexId&)>& visit) {
    spec.validate(x);
    if (level < x.level() || level > spec.depth()) {
        throw PreconditionViolation("subtree level must lie in [|x|, N]");
    }
    std::vector<Digit> digits = x.digits();
    // Depth-first walk in address order.
    auto descend = [&](auto&& self) -> void {
        if (digits.size() == level) {
            visit(VertexId(digits));
            return;
        }
        unsigned c = spec.child_count(VertexId(digits));
        for (unsigned i = 0; i < c; ++i) {
            digits.push_back(static_cast<Digit>(i));
            self(self);
            digits.pop_back();
        }
    };
    descend(descend);
}

std::vector<VertexId> subtree_cells(const TreeSpec& spec, const VertexId& x, unsigned level) {
    std::vector<VertexId> out;
    for_each_subtree_cell(spec, x, level, [&](const VertexId& v) { out.push_back(v); });
    return out;
}

std::vector<VertexId> vertices_at_level(const TreeSpec& spec, unsigned level) {
    return subtree_cells(spec, VertexId::root(), level);
}

std::string format_address(const VertexId& x, unsigned radix) {
    if (x.is_root()) return "ROOT";
    std::string out;
    for (std::size_t i = 0; i < x.level(); ++i) {
        if (radix <= 10) {
            out.push_back(static_cast<char>('0' + x[i]));
        } else {
            if (i) out.push_back(',');
            out += std::to_string(x[i]);
        }
    }
    return out;
}

VertexId parse_address(std::string_view text, unsigned radix) {
    if (text == "ROOT") return VertexId::root();
    if (text.empty()) throw PreconditionViolation("empty address text");
    std::vector<Digit> digits;
    if (radix <= 10) {
        for (char c : text) {
            if (c < '0' || c > '9' || static_cast<unsigned>(c - '0') >= radix) {
                throw PreconditionViolation("bad address digit in '" + std::string(text) + "'");
            }
            digits.push_back(static_cast<Digit>(c - '0'));
        }
    } else {
        std::stringstream ss{std::string(text)};
        std::string item;
        while (std::getline(ss, item, ',')) {
            std::size_t pos = 0;
            unsigned long v = 0;
            try {
                v = std::stoul(item, &pos);
            } catch (const std::exception&) {
                pos = 0;
            }
            if (pos != item.size() || item.empty() || v >= radix) {
                throw PreconditionViolation("bad address digit in '" + std::string(text) + "'");
            }
            digits.push_back(static_cast<Digit>(v));
        }
    }
    return VertexId(std::move(digits));
}

RegularCoder::RegularCoder(unsigned branching) : k_(branching) {
    if (branching < 1) throw ParameterViolation("branching must be >= 1");
    pow_.push_back(1);
    while (pow_.size() < 64) {
        std::uint64_t last = pow_.back();
        if (last > std::numeric_limits<std::uint64_t>::max() / k_) break;
        pow_.push_back(last * k_);
    }
}

std::uint64_t RegularCoder::power(unsigned n) const {
    if (n >= pow_.size()) throw PreconditionViolation("level too deep for packed addressing");
    return pow_[n];
}

PackedVertex RegularCoder::pack(const VertexId& x) const {
    if (x.level() > max_level()) throw PreconditionViolation("level too deep for packed addressing");
    PackedVertex v{static_cast<std::uint32_t>(x.level()), 0};
    for (Digit d : x.digits()) {
        if (d >= k_) throw PreconditionViolation("address digit exceeds branching");
        v.index = v.index * k_ + d;
    }
    return v;
}

VertexId RegularCoder::unpack(PackedVertex v) const {
    std::vector<Digit> digits(v.level);
    std::uint64_t idx = v.index;
    for (std::size_t i = v.level; i-- > 0;) {
        digits[i] = static_cast<Digit>(idx % k_);
        idx /= k_;
    }
    return VertexId(std::move(digits));
}

PackedVertex RegularCoder::ancestor(PackedVertex v, unsigned level) const {
    if (level > v.level) throw PreconditionViolation("ancestor level below vertex");
    if (level == v.level) return v;
    return {level, v.index / pow_[v.level - level]};
}

PackedVertex RegularCoder::parent(PackedVertex v) const {
    if (v.level == 0) throw NoParent();
    return {v.level - 1, v.index / k_};
}

PackedVertex RegularCoder::child(PackedVertex v, unsigned digit) const {
    return {v.level + 1, v.index * k_ + digit};
}

bool RegularCoder::is_ancestor(PackedVertex a, PackedVertex b) const {
    if (a.level > b.level) return false;
    return b.index / pow_[b.level - a.level] == a.index;
}

PackedVertex RegularCoder::lca(PackedVertex a, PackedVertex b) const {
    if (a.level > b.level) std::swap(a, b);
    std::uint64_t bi = b.index / pow_[b.level - a.level];
    std::uint64_t ai = a.index;
    std::uint32_t level = a.level;
    while (ai != bi) {
        ai /= k_;
        bi /= k_;
        --level;
    }
    return {level, ai};
}

unsigned RegularCoder::distance(PackedVertex a, PackedVertex b) const {
    return a.level + b.level - 2 * lca(a, b).level;
}

unsigned RegularCoder::digit(PackedVertex v, unsigned position) const {
    return static_cast<unsigned>((v.index / pow_[v.level - position - 1]) % k_);
}

namespace {
constexpr std::size_t kMaxLayoutSize = std::size_t{1} << 28;
}

TreeLayout::TreeLayout(const TreeSpec& spec) : spec_(spec), k_(spec.max_branching()) {
    offsets_.push_back(0);
    if (spec.is_regular()) {
        std::size_t width = 1;
        for (unsigned n = 0; n <= spec.depth(); ++n) {
            if (offsets_.back() + width > kMaxLayoutSize) throw PreconditionViolation("tree too large to lay out");
            offsets_.push_back(offsets_.back() + width);
            width *= k_;
        }
        return;
    }
    // Breadth-first materialisation of a rule-defined tree.
    std::vector<VertexId> frontier{VertexId::root()};
    parent_.push_back(0);
    level_.push_back(0);
    for (unsigned n = 0; n <= spec.depth(); ++n) {
        offsets_.push_back(offsets_.back() + frontier.size());
        std::vector<VertexId> next;
        for (std::size_t i = 0; i < frontier.size(); ++i) {
            std::size_t id = offsets_[n] + i;
            if (n == spec.depth()) {
                first_child_.push_back(0);
                count_.push_back(0);
                continue;
            }
            unsigned c = spec.child_count(frontier[i]);
            first_child_.push_back(static_cast<std::uint32_t>(offsets_[n + 1] + next.size()));
            count_.push_back(static_cast<std::uint16_t>(c));
            for (unsigned j = 0; j < c; ++j) {
                next.push_back(frontier[i].child(static_cast<Digit>(j)));
                parent_.push_back(static_cast<std::uint32_t>(id));
                level_.push_back(static_cast<std::uint8_t>(n + 1));
            }
            if (offsets_[n + 1] + next.size() > kMaxLayoutSize) throw PreconditionViolation("tree too large to lay out");
        }
        frontier = std::move(next);
    }
}

unsigned TreeLayout::level(std::size_t id) const {
    if (!level_.empty()) return level_[id];
    auto it = std::upper_bound(offsets_.begin(), offsets_.end(), id);
    return static_cast<unsigned>(it - offsets_.begin()) - 1;
}

std::size_t TreeLayout::parent(std::size_t id) const {
    if (id == 0) throw NoParent();
    if (!parent_.empty()) return parent_[id];
    unsigned n = level(id);
    return offsets_[n - 1] + (id - offsets_[n]) / k_;
}

std::size_t TreeLayout::first_child(std::size_t id) const {
    if (!first_child_.empty()) return first_child_[id];
    unsigned n = level(id);
    return offsets_[n + 1] + (id - offsets_[n]) * k_;
}

unsigned TreeLayout::child_count(std::size_t id) const {
    if (!count_.empty()) return count_[id];
    return level(id) < spec_.depth() ? k_ : 0;
}

std::size_t TreeLayout::id_of(const VertexId& x) const {
    spec_.validate(x);
    if (spec_.is_regular()) {
        std::size_t idx = 0;
        for (Digit d : x.digits()) idx = idx * k_ + d;
        return offsets_[x.level()] + idx;
    }
    std::size_t id = 0;
    for (Digit d : x.digits()) id = first_child_[id] + d;
    return id;
}

VertexId TreeLayout::address(std::size_t id) const {
    unsigned n = level(id);
    std::vector<Digit> digits(n);
    for (unsigned i = n; i-- > 0;) {
        std::size_t p = parent(id);
        digits[i] = static_cast<Digit>(id - first_child(p));
        id = p;
    }
    return VertexId(std::move(digits));
}

}  // namespace cantree
