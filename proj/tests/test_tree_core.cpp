#include <doctest.h>

#include "cantree/errors.hpp"
#include "cantree/tree.hpp"
#include "oracles/graph_tree.hpp"

#include <algorithm>
#include <cmath>
#include <set>

using namespace cantree;

namespace {

std::string to_string(const VertexId& x) {
    std::string s;
    for (auto d : x.digits()) s += static_cast<char>('0' + d);
    return s;
}

VertexId from_string(const std::string& s) {
    std::vector<Digit> d;
    for (char c : s) d.push_back(static_cast<Digit>(c - '0'));
    return VertexId(d);
}

std::vector<VertexId> all_vertices(const TreeSpec& spec) {
    std::vector<VertexId> out;
    for (unsigned n = 0; n <= spec.depth(); ++n) {
        auto level = vertices_at_level(spec, n);
        out.insert(out.end(), level.begin(), level.end());
    }
    return out;
}

}  // namespace

TEST_CASE("lca examples") {
    CHECK(lca({0, 1, 0}, {0, 1, 1}) == VertexId{0, 1});
    VertexId x{1, 0, 1};
    CHECK(lca(x, x) == x);
    CHECK(lca({0, 1, 1}, {1, 0}) == VertexId::root());
}

TEST_CASE("comb distance and geodesic examples") {
    CHECK(comb_distance({0, 1, 0}, {0, 1, 1}) == 2);
    CHECK(comb_distance({1, 1}, {1, 1}) == 0);
    CHECK(comb_distance(VertexId::root(), {1, 0, 1, 1}) == 4);

    auto p = geodesic({0, 1, 0}, {0, 1, 1});
    REQUIRE(p.vertices.size() == 3);
    CHECK(p.vertices[0] == VertexId{0, 1, 0});
    CHECK(p.vertices[1] == VertexId{0, 1});
    CHECK(p.vertices[2] == VertexId{0, 1, 1});
    CHECK(geodesic({1}, {1}).vertices.size() == 1);
    auto q = geodesic(VertexId::root(), {0, 1});
    REQUIRE(q.length() == 2);
    CHECK(q.vertices[1] == VertexId{0});
}

TEST_CASE("parent, children and cells") {
    CHECK(parent({0, 1}) == VertexId{0});
    CHECK_THROWS_AS(parent(VertexId::root()), NoParent);
    auto spec = TreeSpec::regular(2, 4);
    auto kids = children(spec, VertexId::root());
    REQUIRE(kids.size() == 2);
    CHECK(kids[0] == VertexId{0});
    CHECK(kids[1] == VertexId{1});
    auto spec3 = TreeSpec::regular(3, 5);
    for (unsigned m = 1; m <= 5; ++m) {
        CHECK(subtree_cells(spec3, {2}, m).size() == static_cast<std::size_t>(std::pow(3, m - 1)));
    }
    CHECK_THROWS_AS(subtree_cells(spec3, {2, 1}, 1), PreconditionViolation);
    CHECK_THROWS_AS(spec3.validate({0, 0, 0, 0, 0, 0}), PreconditionViolation);
    CHECK_THROWS_AS(spec3.validate({3}), PreconditionViolation);
}

TEST_CASE("distances and geodesics agree with BFS on an explicit graph") {
    for (unsigned k : {2u, 3u}) {
        unsigned depth = k == 2 ? 5 : 4;
        auto spec = TreeSpec::regular(k, depth);
        oracle::GraphTree graph(k, depth);
        auto verts = all_vertices(spec);
        REQUIRE(verts.size() == graph.names.size());
        for (const auto& a : verts) {
            std::vector<int> dist;
            graph.bfs(graph.index.at(to_string(a)), &dist);
            for (const auto& b : verts) {
                REQUIRE(comb_distance(a, b) == static_cast<std::size_t>(dist[graph.index.at(to_string(b))]));
            }
        }
        // Geodesic vertex lists on a subsample of pairs.
        for (std::size_t i = 0; i < verts.size(); i += 7) {
            for (std::size_t j = 0; j < verts.size(); j += 5) {
                auto path = geodesic(verts[i], verts[j]);
                auto ref = graph.path(to_string(verts[i]), to_string(verts[j]));
                REQUIRE(path.vertices.size() == ref.size());
                for (std::size_t s = 0; s < ref.size(); ++s) CHECK(to_string(path.vertices[s]) == ref[s]);
            }
        }
    }
}

TEST_CASE("lca is the meet of the prefix order") {
    auto spec = TreeSpec::regular(2, 5);
    auto verts = all_vertices(spec);
    for (const auto& a : verts) {
        for (const auto& b : verts) {
            VertexId z = lca(a, b);
            REQUIRE(z.is_ancestor_of(a));
            REQUIRE(z.is_ancestor_of(b));
            for (unsigned d = 0; d < 2; ++d) {
                if (z.level() == spec.depth()) break;
                VertexId deeper = z.child(static_cast<Digit>(d));
                REQUIRE_FALSE((deeper.is_ancestor_of(a) && deeper.is_ancestor_of(b)));
            }
            REQUIRE(comb_distance(a, b) == a.level() + b.level() - 2 * z.level());
        }
    }
}

TEST_CASE("prefix order is a partial order") {
    auto verts = all_vertices(TreeSpec::regular(2, 4));
    for (const auto& a : verts) {
        CHECK(a.is_ancestor_of(a));
        for (const auto& b : verts) {
            if (a.is_ancestor_of(b) && b.is_ancestor_of(a)) REQUIRE(a == b);
            if (!a.is_ancestor_of(b)) continue;
            for (const auto& c : verts) {
                if (b.is_ancestor_of(c)) REQUIRE(a.is_ancestor_of(c));
            }
        }
    }
}

TEST_CASE("triangle inequality with equality exactly on the geodesic") {
    auto verts = all_vertices(TreeSpec::regular(2, 4));
    for (const auto& x : verts) {
        for (const auto& z : verts) {
            auto path = geodesic(x, z);
            std::set<VertexId> on_path(path.vertices.begin(), path.vertices.end());
            for (const auto& y : verts) {
                auto lhs = comb_distance(x, y) + comb_distance(y, z);
                auto rhs = comb_distance(x, z);
                REQUIRE(lhs >= rhs);
                REQUIRE((lhs == rhs) == (on_path.count(y) == 1));
            }
        }
    }
}

TEST_CASE("address serialization round trip") {
    CHECK(format_address(VertexId::root(), 2) == "ROOT");
    CHECK(format_address({0, 1, 1}, 2) == "011");
    CHECK(format_address({11, 0, 3}, 12) == "11,0,3");
    CHECK(parse_address("ROOT", 3) == VertexId::root());
    CHECK(parse_address("0120", 3) == VertexId{0, 1, 2, 0});
    CHECK(parse_address("11,0,3", 12) == VertexId{11, 0, 3});
    CHECK_THROWS_AS(parse_address("013", 3), PreconditionViolation);
    CHECK(from_string("0101") == parse_address("0101", 2));
}

TEST_CASE("nonuniform rule trees") {
    // Root has 3 children; below it, 2 or 3 children by parity of the last digit.
    ChildRule rule = [](const VertexId& x) -> unsigned {
        if (x.is_root()) return 3;
        return 2 + x[x.level() - 1] % 2;
    };
    auto spec = TreeSpec::nonuniform(rule, 3, 4);
    CHECK_FALSE(spec.is_regular());
    CHECK(spec.child_count({1}) == 3);
    CHECK(spec.child_count({0}) == 2);
    CHECK(spec.contains({1, 2}));
    CHECK_FALSE(spec.contains({0, 2}));
    std::size_t total = 0;
    for (unsigned n = 0; n <= 4; ++n) total += vertices_at_level(spec, n).size();
    TreeLayout layout(spec);
    CHECK(layout.size() == total);
    for (std::size_t id = 0; id < layout.size(); ++id) {
        VertexId a = layout.address(id);
        REQUIRE(layout.id_of(a) == id);
        REQUIRE(layout.level(id) == a.level());
        if (id > 0) REQUIRE(layout.address(layout.parent(id)) == parent(a));
        unsigned c = layout.child_count(id);
        REQUIRE(c == (a.level() == 4 ? 0u : spec.child_count(a)));
        for (unsigned i = 0; i < c; ++i) REQUIRE(layout.address(layout.first_child(id) + i) == a.child(static_cast<Digit>(i)));
    }
}

TEST_CASE("regular layout and packed coder agree with addresses") {
    auto spec = TreeSpec::regular(3, 5);
    TreeLayout layout(spec);
    RegularCoder coder(3);
    auto verts = all_vertices(spec);
    REQUIRE(layout.size() == verts.size());
    for (std::size_t id = 0; id < verts.size(); ++id) {
        const auto& a = verts[id];
        REQUIRE(layout.address(id) == a);
        REQUIRE(layout.id_of(a) == id);
        auto pa = coder.pack(a);
        REQUIRE(coder.unpack(pa) == a);
        if (!a.is_root()) REQUIRE(coder.unpack(coder.parent(pa)) == parent(a));
    }
    for (std::size_t i = 0; i < verts.size(); i += 3) {
        for (std::size_t j = 0; j < verts.size(); j += 2) {
            auto pa = coder.pack(verts[i]);
            auto pb = coder.pack(verts[j]);
            REQUIRE(coder.distance(pa, pb) == comb_distance(verts[i], verts[j]));
            REQUIRE(coder.unpack(coder.lca(pa, pb)) == lca(verts[i], verts[j]));
            REQUIRE(coder.is_ancestor(pa, pb) == verts[i].is_ancestor_of(verts[j]));
        }
    }
}

TEST_CASE("streamed cells are in address order") {
    auto spec = TreeSpec::regular(2, 6);
    std::vector<VertexId> seen;
    for_each_subtree_cell(spec, {1, 0}, 6, [&](const VertexId& c) { seen.push_back(c); });
    CHECK(seen.size() == 16);
    CHECK(std::is_sorted(seen.begin(), seen.end()));
    CHECK(seen == subtree_cells(spec, {1, 0}, 6));
}
