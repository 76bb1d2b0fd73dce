#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hvae {

/// Hierarchical node label. The root is (1); the i-th child of L is L·i.
class NodeId {
 public:
  NodeId() : label_{1} {}
  explicit NodeId(std::vector<int> label);

  static NodeId root() { return NodeId(); }

  NodeId child(int index) const;
  NodeId parent() const;
  bool is_root() const { return label_.size() == 1; }
  std::size_t depth() const { return label_.size() - 1; }
  int sibling_index() const { return label_.back(); }
  bool is_prefix_of(const NodeId& other) const;

  const std::vector<int>& label() const { return label_; }
  std::string dotted() const;

  auto operator<=>(const NodeId&) const = default;

 private:
  std::vector<int> label_;
};

/// Edge identified by its lower endpoint; never the root.
struct EdgeId {
  NodeId child;

  explicit EdgeId(NodeId c);
  auto operator<=>(const EdgeId&) const = default;
};

struct TreeNode {
  NodeId id;
  Eigen::VectorXd mu;
  double sigma = 1.0;
  std::vector<TreeNode> children;

  bool is_leaf() const { return children.empty(); }
};

struct Hyperparams {
  Eigen::VectorXd alpha_star;
  double gamma_star = 1.0;
  double sigma_n = 1.0;
  double sigma_d = 0.1;
};

class TruncatedTree {
 public:
  TruncatedTree() = default;
  /// Root-only tree with mu = alpha_star and sigma = sigma_n.
  explicit TruncatedTree(Hyperparams hyper);

  int dim() const { return static_cast<int>(hyper_.alpha_star.size()); }
  const Hyperparams& hyper() const { return hyper_; }
  Hyperparams& hyper() { return hyper_; }

  const TreeNode& root() const { return root_; }
  TreeNode& root() { return root_; }

  const TreeNode* find(const NodeId& id) const;
  TreeNode* find(const NodeId& id);
  const TreeNode& at(const NodeId& id) const;
  TreeNode& at(const NodeId& id);

  /// Appends a child to `parent` and returns it. Invalidates references
  /// into the parent's child list.
  TreeNode& add_child(const NodeId& parent, Eigen::VectorXd mu, double sigma);

  /// Renumbers every label from its position; returns old label → new label.
  std::map<NodeId, NodeId> relabel();

  std::size_t node_count() const;
  std::size_t leaf_count() const;

  /// Throws InputError on broken label structure or non-positive sigma.
  void validate() const;

  bool operator==(const TruncatedTree& other) const;

 private:
  Hyperparams hyper_;
  TreeNode root_;
};

/// Leaves in depth-first order, children in label order.
std::vector<NodeId> enumerate_paths(const TruncatedTree& tree);

/// Edges from the root down to `leaf`; throws InvalidPathError if not a leaf.
std::vector<EdgeId> edges_on_path(const TruncatedTree& tree, const NodeId& leaf);

/// Edges to left siblings of every node on the path to `leaf`.
std::vector<EdgeId> edges_left_of_path(const TruncatedTree& tree, const NodeId& leaf);

using EdgeWeights = std::map<EdgeId, double>;

/// Stick-breaking mass of the node `p`: the product over edges e on p of
/// v_e times (1 - v_j) for each left sibling j of e. The root carries mass 1.
/// Throws IncompleteWeightsError when a needed weight is missing.
double path_mass(const EdgeWeights& v, const NodeId& p);

/// Flat, index-based view of a tree for the numerical kernels. Nodes are in
/// pre-order; edges are the non-root nodes in the same order. Rebuilt after
/// every structural edit.
struct TreeLayout {
  std::vector<NodeId> nodes;
  std::vector<int> parent;                 // -1 for the root
  std::vector<std::vector<int>> children;  // node indices in label order
  std::vector<int> depth;
  std::vector<int> leaves;                 // node index of each path
  std::vector<int> node_path;              // node -> path index, or -1
  std::vector<int> edge_node;              // edge -> lower node index
  std::vector<int> node_edge;              // node -> edge index, or -1
  // The rightmost child of every parent absorbs the residual stick (its
  // weight is fixed at 1), so truncated path masses sum to one.
  std::vector<bool> edge_absorbing;
  std::vector<std::vector<int>> path_on;    // edges on path p
  std::vector<std::vector<int>> path_left;  // edges left of path p
  std::vector<int> internal_post_order;     // internal nodes, children first

  static TreeLayout build(const TruncatedTree& tree);

  int node_count() const { return static_cast<int>(nodes.size()); }
  int path_count() const { return static_cast<int>(leaves.size()); }
  int edge_count() const { return static_cast<int>(edge_node.size()); }
  int edge_index(const EdgeId& e) const;
  int node_index(const NodeId& id) const;
};

/// Node means (D x nodes) and stdevs gathered in layout order.
struct NodeParams {
  Eigen::MatrixXd mu;
  Eigen::VectorXd sigma;

  static NodeParams gather(const TruncatedTree& tree, const TreeLayout& layout);
  void scatter(TruncatedTree& tree, const TreeLayout& layout) const;
};

}  // namespace hvae
