#include <doctest.h>

#include <set>

#include "hvae/errors.hpp"
#include "hvae/generative.hpp"
#include "hvae/tree.hpp"
#include "oracles.hpp"

using namespace hvae;

namespace {

NodeId L(std::vector<int> v) { return NodeId(std::move(v)); }

TruncatedTree tree_of(const std::vector<std::vector<int>>& labels, int dim = 2) {
  Hyperparams h;
  h.alpha_star = Eigen::VectorXd::Zero(dim);
  TruncatedTree t(h);
  for (const auto& l : labels) {
    NodeId id(l);
    t.add_child(id.parent(), Eigen::VectorXd::Zero(dim), 1.0);
  }
  return t;
}

std::set<EdgeId> as_set(const std::vector<EdgeId>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST_SUITE("tree") {

TEST_CASE("node labels") {
  const NodeId r = NodeId::root();
  CHECK(r.dotted() == "1");
  CHECK(r.child(2).child(1).dotted() == "1.2.1");
  CHECK(r.child(2).child(1).parent() == r.child(2));
  CHECK(r.child(2).is_prefix_of(L({1, 2, 1})));
  CHECK_FALSE(r.child(1).is_prefix_of(L({1, 2, 1})));
  CHECK(L({1, 1}) < L({1, 2}));
  CHECK_THROWS_AS(EdgeId{r}, InputError);
}

TEST_CASE("enumerate_paths") {
  CHECK(enumerate_paths(tree_of({{1, 1}, {1, 2}})) == std::vector{L({1, 1}), L({1, 2})});
  CHECK(enumerate_paths(tree_of({})) == std::vector{L({1})});
  CHECK(enumerate_paths(tree_of({{1, 1}, {1, 2}, {1, 1, 1}, {1, 1, 2}})) ==
        std::vector{L({1, 1, 1}), L({1, 1, 2}), L({1, 2})});
}

TEST_CASE("edges_on_path") {
  const auto t = tree_of({{1, 1}, {1, 2}, {1, 1, 1}, {1, 1, 2}});
  CHECK(as_set(edges_on_path(t, L({1, 1, 2}))) == std::set{EdgeId(L({1, 1})), EdgeId(L({1, 1, 2}))});
  CHECK(as_set(edges_on_path(tree_of({{1, 1}, {1, 2}}), L({1, 1}))) == std::set{EdgeId(L({1, 1}))});
  CHECK(edges_on_path(tree_of({}), NodeId::root()).empty());
  CHECK_THROWS_AS(edges_on_path(t, L({1, 1})), InvalidPathError);
  CHECK_THROWS_AS(edges_on_path(t, L({1, 3})), InvalidPathError);
}

TEST_CASE("edges_left_of_path") {
  const auto two = tree_of({{1, 1}, {1, 2}});
  CHECK(as_set(edges_left_of_path(two, L({1, 2}))) == std::set{EdgeId(L({1, 1}))});
  CHECK(edges_left_of_path(two, L({1, 1})).empty());
  const auto t = tree_of({{1, 1}, {1, 2}, {1, 2, 1}, {1, 2, 2}});
  CHECK(as_set(edges_left_of_path(t, L({1, 2, 1}))) == std::set{EdgeId(L({1, 1}))});
  CHECK_THROWS_AS(edges_left_of_path(t, L({1, 2})), InvalidPathError);

  // Brute force: every node whose label shares the parent prefix of a path
  // node and has a smaller last index.
  Rng rng = make_rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto rt = oracle::random_tree(rng, 2, 8);
    const auto layout = TreeLayout::build(rt);
    for (const auto& leaf : enumerate_paths(rt)) {
      std::set<EdgeId> expect;
      for (const auto& id : layout.nodes) {
        if (id.is_root()) continue;
        const NodeId par = id.parent();
        if (!par.is_prefix_of(leaf) || par == leaf) continue;
        if (leaf.label()[par.label().size()] > id.sibling_index()) expect.insert(EdgeId(id));
      }
      CHECK(as_set(edges_left_of_path(rt, leaf)) == expect);
    }
  }
}

TEST_CASE("path_mass") {
  EdgeWeights v{{EdgeId(L({1, 1})), 0.5}, {EdgeId(L({1, 1, 1})), 0.4}, {EdgeId(L({1, 1, 2})), 1.0}};
  CHECK(path_mass(v, NodeId::root()) == 1.0);
  CHECK(path_mass(v, L({1, 1, 2})) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(path_mass(v, L({1, 1, 1})) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK_THROWS_AS(path_mass(v, L({1, 2})), IncompleteWeightsError);
}

TEST_CASE("masses of drawn weights sum to one over the leaves") {
  Hyperparams h;
  h.alpha_star = Eigen::VectorXd::Zero(1);
  const auto shape = build_tree_shape({3, 2, 2}, h);
  Rng rng = make_rng(9);
  for (int i = 0; i < 50; ++i) {
    const auto v = draw_edge_weights(shape, 0.8, rng);
    double total = 0.0;
    for (const auto& leaf : enumerate_paths(shape)) total += path_mass(v, leaf);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("layout agrees with the label helpers") {
  Rng rng = make_rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    const auto t = oracle::random_tree(rng, 3, 8);
    const auto layout = TreeLayout::build(t);
    const auto leaves = enumerate_paths(t);
    REQUIRE(layout.path_count() == static_cast<int>(leaves.size()));
    CHECK(layout.node_count() == static_cast<int>(t.node_count()));
    for (int p = 0; p < layout.path_count(); ++p) {
      std::set<EdgeId> on, left;
      for (int e : layout.path_on[static_cast<std::size_t>(p)]) on.insert(EdgeId(layout.nodes[static_cast<std::size_t>(layout.edge_node[static_cast<std::size_t>(e)])]));
      for (int e : layout.path_left[static_cast<std::size_t>(p)]) left.insert(EdgeId(layout.nodes[static_cast<std::size_t>(layout.edge_node[static_cast<std::size_t>(e)])]));
      CHECK(on == as_set(edges_on_path(t, leaves[static_cast<std::size_t>(p)])));
      CHECK(left == as_set(edges_left_of_path(t, leaves[static_cast<std::size_t>(p)])));
    }
    for (int e = 0; e < layout.edge_count(); ++e) {
      const NodeId& id = layout.nodes[static_cast<std::size_t>(layout.edge_node[static_cast<std::size_t>(e)])];
      CHECK(layout.edge_absorbing[static_cast<std::size_t>(e)] == oracle::is_rightmost(t, id));
    }
    // children come before parents in the post-order list
    std::set<int> seen;
    for (int v : layout.internal_post_order) {
      for (int c : layout.children[static_cast<std::size_t>(v)]) {
        if (!layout.children[static_cast<std::size_t>(c)].empty()) CHECK(seen.contains(c));
      }
      seen.insert(v);
    }
  }
}

TEST_CASE("relabel renumbers by position") {
  auto t = tree_of({{1, 1}, {1, 2}, {1, 3}, {1, 3, 1}, {1, 3, 2}});
  t.root().children.erase(t.root().children.begin() + 1);
  CHECK_THROWS_AS(t.validate(), InputError);
  const auto map = t.relabel();
  CHECK(map.at(L({1, 3, 2})) == L({1, 2, 2}));
  CHECK(map.at(L({1, 1})) == L({1, 1}));
  CHECK(enumerate_paths(t) == std::vector{L({1, 1}), L({1, 2, 1}), L({1, 2, 2})});
  CHECK_NOTHROW(t.validate());
}

TEST_CASE("validate rejects bad sigma") {
  auto t = tree_of({{1, 1}, {1, 2}});
  t.at(L({1, 2})).sigma = 0.0;
  CHECK_THROWS_AS(t.validate(), InputError);
}

}  // TEST_SUITE
