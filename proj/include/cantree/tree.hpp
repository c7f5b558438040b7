#pragma once

// Rooted trees truncated at a fixed depth, addressed by child-index strings.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace cantree {

using Digit = std::uint16_t;

// A vertex is its address: the child indices read from the root downward.
class VertexId {
public:
    VertexId() = default;
    explicit VertexId(std::vector<Digit> digits) : digits_(std::move(digits)) {}
    VertexId(std::initializer_list<Digit> digits) : digits_(digits) {}

    static VertexId root() { return {}; }

    std::size_t level() const { return digits_.size(); }
    bool is_root() const { return digits_.empty(); }
    const std::vector<Digit>& digits() const { return digits_; }
    Digit operator[](std::size_t i) const { return digits_[i]; }

    VertexId child(Digit i) const;
    VertexId prefix(std::size_t length) const;
    // Non-strict prefix order: x.is_ancestor_of(x) holds.
    bool is_ancestor_of(const VertexId& other) const;

    friend bool operator==(const VertexId&, const VertexId&) = default;
    friend auto operator<=>(const VertexId& a, const VertexId& b) { return a.digits_ <=> b.digits_; }

private:
    std::vector<Digit> digits_;
};

struct VertexIdHash {
    std::size_t operator()(const VertexId& v) const noexcept;
};

// Child count as a pure function of the address.
using ChildRule = std::function<unsigned(const VertexId&)>;

class TreeSpec {
public:
    static TreeSpec regular(unsigned branching, unsigned depth);
    static TreeSpec nonuniform(ChildRule rule, unsigned max_branching, unsigned depth);

    unsigned depth() const { return depth_; }
    unsigned max_branching() const { return k_max_; }
    bool is_regular() const { return regular_; }
    // Branching K; only meaningful for regular trees.
    unsigned branching() const { return k_max_; }

    // Number of children x has in the untruncated tree.
    unsigned child_count(const VertexId& x) const;
    // Throws PreconditionViolation unless x is a vertex of the truncated tree.
    void validate(const VertexId& x) const;
    bool contains(const VertexId& x) const;

    TreeSpec with_depth(unsigned depth) const;

private:
    unsigned depth_ = 0;
    unsigned k_max_ = 0;
    bool regular_ = true;
    ChildRule rule_;
};

struct GeodesicPath {
    std::vector<VertexId> vertices;
    std::size_t length() const { return vertices.empty() ? 0 : vertices.size() - 1; }
};

VertexId lca(const VertexId& x, const VertexId& y);
std::size_t comb_distance(const VertexId& x, const VertexId& y);
GeodesicPath geodesic(const VertexId& x, const VertexId& y);

VertexId parent(const VertexId& x);
std::vector<VertexId> children(const TreeSpec& spec, const VertexId& x);
std::vector<VertexId> vertices_at_level(const TreeSpec& spec, unsigned level);
std::vector<VertexId> subtree_cells(const TreeSpec& spec, const VertexId& x, unsigned level);
// Streams the level-`level` descendants of x in address order.
void for_each_subtree_cell(const TreeSpec& spec, const VertexId& x, unsigned level,
                           const std::function<void(const VertexId&)>& visit);

// "ROOT" for the root; digits without separator for radix <= 10, comma-separated otherwise.
std::string format_address(const VertexId& x, unsigned radix);
VertexId parse_address(std::string_view text, unsigned radix);

// Compact vertex of a regular tree: level plus base-K index within the level.
struct PackedVertex {
    std::uint32_t level = 0;
    std::uint64_t index = 0;
    friend bool operator==(const PackedVertex&, const PackedVertex&) = default;
    friend auto operator<=>(const PackedVertex&, const PackedVertex&) = default;
};

// Arithmetic on packed vertices of the regular K-ary tree.
class RegularCoder {
public:
    explicit RegularCoder(unsigned branching);

    unsigned branching() const { return k_; }
    // Largest level whose vertex count fits in 64 bits.
    unsigned max_level() const { return static_cast<unsigned>(pow_.size()) - 1; }
    std::uint64_t power(unsigned n) const;

    PackedVertex pack(const VertexId& x) const;
    VertexId unpack(PackedVertex v) const;
    PackedVertex ancestor(PackedVertex v, unsigned level) const;
    PackedVertex parent(PackedVertex v) const;
    PackedVertex child(PackedVertex v, unsigned digit) const;
    bool is_ancestor(PackedVertex a, PackedVertex b) const;
    PackedVertex lca(PackedVertex a, PackedVertex b) const;
    unsigned distance(PackedVertex a, PackedVertex b) const;
    unsigned digit(PackedVertex v, unsigned position) const;

private:
    unsigned k_;
    std::vector<std::uint64_t> pow_;
};

// Dense breadth-first numbering of the truncated tree (root = 0).
// Regular trees use arithmetic; nonuniform trees store parent/child tables.
class TreeLayout {
public:
    explicit TreeLayout(const TreeSpec& spec);

    const TreeSpec& spec() const { return spec_; }
    unsigned depth() const { return spec_.depth(); }
    std::size_t size() const { return offsets_.back(); }
    std::size_t level_begin(unsigned n) const { return offsets_[n]; }
    std::size_t level_end(unsigned n) const { return offsets_[n + 1]; }

    unsigned level(std::size_t id) const;
    std::size_t parent(std::size_t id) const;
    std::size_t first_child(std::size_t id) const;
    // Zero at the truncation depth.
    unsigned child_count(std::size_t id) const;

    std::size_t id_of(const VertexId& x) const;
    VertexId address(std::size_t id) const;

private:
    TreeSpec spec_;
    unsigned k_ = 0;
    std::vector<std::size_t> offsets_;
    std::vector<std::uint32_t> parent_;
    std::vector<std::uint32_t> first_child_;
    std::vector<std::uint16_t> count_;
    std::vector<std::uint8_t> level_;
};

}  // namespace cantree
