#include "hvae/tree.hpp"

#include <algorithm>
#include <functional>
#include <sstream>

#include "hvae/errors.hpp"

namespace hvae {

NodeId::NodeId(std::vector<int> label) : label_(std::move(label)) {
  if (label_.empty() || label_.front() != 1) {
    throw InputError("node label must start with 1");
  }
  for (int v : label_) {
    if (v < 1) throw InputError("node label entries must be positive");
  }
}

NodeId NodeId::child(int index) const {
  if (index < 1) throw InputError("child index must be positive");
  auto label = label_;
  label.push_back(index);
  return NodeId(std::move(label));
}

NodeId NodeId::parent() const {
  if (is_root()) throw InputError("root has no parent");
  return NodeId(std::vector<int>(label_.begin(), label_.end() - 1));
}

bool NodeId::is_prefix_of(const NodeId& other) const {
  return label_.size() < other.label_.size() &&
         std::equal(label_.begin(), label_.end(), other.label_.begin());
}

std::string NodeId::dotted() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < label_.size(); ++i) {
    if (i) os << '.';
    os << label_[i];
  }
  return os.str();
}

EdgeId::EdgeId(NodeId c) : child(std::move(c)) {
  if (child.is_root()) throw InputError("an edge cannot end at the root");
}

TruncatedTree::TruncatedTree(Hyperparams hyper) : hyper_(std::move(hyper)) {
  root_.id = NodeId::root();
  root_.mu = hyper_.alpha_star;
  root_.sigma = hyper_.sigma_n;
}

const TreeNode* TruncatedTree::find(const NodeId& id) const {
  const TreeNode* node = &root_;
  const auto& label = id.label();
  for (std::size_t k = 1; k < label.size(); ++k) {
    const auto idx = static_cast<std::size_t>(label[k] - 1);
    if (idx >= node->children.size()) return nullptr;
    node = &node->children[idx];
  }
  return node;
}

TreeNode* TruncatedTree::find(const NodeId& id) {
  return const_cast<TreeNode*>(std::as_const(*this).find(id));
}

const TreeNode& TruncatedTree::at(const NodeId& id) const {
  const TreeNode* node = find(id);
  if (!node) throw InvalidPathError("no node " + id.dotted());
  return *node;
}

TreeNode& TruncatedTree::at(const NodeId& id) {
  return const_cast<TreeNode&>(std::as_const(*this).at(id));
}

TreeNode& TruncatedTree::add_child(const NodeId& parent, Eigen::VectorXd mu, double sigma) {
  TreeNode& p = at(parent);
  TreeNode child;
  child.id = parent.child(static_cast<int>(p.children.size()) + 1);
  child.mu = std::move(mu);
  child.sigma = sigma;
  p.children.push_back(std::move(child));
  return p.children.back();
}

std::map<NodeId, NodeId> TruncatedTree::relabel() {
  std::map<NodeId, NodeId> mapping;
  std::function<void(TreeNode&, const NodeId&)> visit = [&](TreeNode& node, const NodeId& id) {
    mapping.emplace(node.id, id);
    node.id = id;
    for (std::size_t i = 0; i < node.children.size(); ++i) {
      visit(node.children[i], id.child(static_cast<int>(i) + 1));
    }
  };
  visit(root_, NodeId::root());
  return mapping;
}

std::size_t TruncatedTree::node_count() const {
  std::size_t n = 0;
  std::function<void(const TreeNode&)> visit = [&](const TreeNode& node) {
    ++n;
    for (const auto& c : node.children) visit(c);
  };
  visit(root_);
  return n;
}

std::size_t TruncatedTree::leaf_count() const { return enumerate_paths(*this).size(); }

void TruncatedTree::validate() const {
  std::function<void(const TreeNode&, const NodeId&)> visit = [&](const TreeNode& node,
                                                                 const NodeId& expected) {
    if (node.id != expected) {
      throw InputError("node " + node.id.dotted() + " should be labelled " + expected.dotted());
    }
    if (!(node.sigma > 0.0)) throw InputError("node " + node.id.dotted() + " has sigma <= 0");
    if (node.mu.size() != dim()) {
      throw InputError("node " + node.id.dotted() + " has mean of wrong dimension");
    }
    for (std::size_t i = 0; i < node.children.size(); ++i) {
      visit(node.children[i], expected.child(static_cast<int>(i) + 1));
    }
  };
  visit(root_, NodeId::root());
}

namespace {

bool nodes_equal(const TreeNode& a, const TreeNode& b) {
  if (a.id != b.id || a.sigma != b.sigma || a.mu.size() != b.mu.size() ||
      a.children.size() != b.children.size()) {
    return false;
  }
  if (a.mu != b.mu) return false;
  for (std::size_t i = 0; i < a.children.size(); ++i) {
    if (!nodes_equal(a.children[i], b.children[i])) return false;
  }
  return true;
}

}  // namespace

bool TruncatedTree::operator==(const TruncatedTree& other) const {
  return hyper_.alpha_star.size() == other.hyper_.alpha_star.size() &&
         hyper_.alpha_star == other.hyper_.alpha_star &&
         hyper_.gamma_star == other.hyper_.gamma_star && hyper_.sigma_n == other.hyper_.sigma_n &&
         hyper_.sigma_d == other.hyper_.sigma_d && nodes_equal(root_, other.root_);
}

std::vector<NodeId> enumerate_paths(const TruncatedTree& tree) {
  std::vector<NodeId> out;
  std::function<void(const TreeNode&)> visit = [&](const TreeNode& node) {
    if (node.is_leaf()) {
      out.push_back(node.id);
      return;
    }
    for (const auto& c : node.children) visit(c);
  };
  visit(tree.root());
  return out;
}

namespace {

const TreeNode& require_leaf(const TruncatedTree& tree, const NodeId& p) {
  const TreeNode* node = tree.find(p);
  if (!node || !node->is_leaf()) throw InvalidPathError(p.dotted() + " is not a leaf");
  return *node;
}

}  // namespace

std::vector<EdgeId> edges_on_path(const TruncatedTree& tree, const NodeId& leaf) {
  require_leaf(tree, leaf);
  std::vector<EdgeId> out;
  const auto& label = leaf.label();
  for (std::size_t k = 2; k <= label.size(); ++k) {
    out.emplace_back(NodeId(std::vector<int>(label.begin(), label.begin() + k)));
  }
  return out;
}

std::vector<EdgeId> edges_left_of_path(const TruncatedTree& tree, const NodeId& leaf) {
  require_leaf(tree, leaf);
  std::vector<EdgeId> out;
  const auto& label = leaf.label();
  for (std::size_t k = 1; k < label.size(); ++k) {
    NodeId parent(std::vector<int>(label.begin(), label.begin() + k));
    for (int j = 1; j < label[k]; ++j) out.emplace_back(parent.child(j));
  }
  return out;
}

double path_mass(const EdgeWeights& v, const NodeId& p) {
  auto weight = [&](const NodeId& child) {
    auto it = v.find(EdgeId(child));
    if (it == v.end()) throw IncompleteWeightsError("missing weight for edge to " + child.dotted());
    return it->second;
  };
  double mass = 1.0;
  const auto& label = p.label();
  for (std::size_t k = 1; k < label.size(); ++k) {
    NodeId parent(std::vector<int>(label.begin(), label.begin() + k));
    mass *= weight(parent.child(label[k]));
    for (int j = 1; j < label[k]; ++j) mass *= 1.0 - weight(parent.child(j));
  }
  return mass;
}

TreeLayout TreeLayout::build(const TruncatedTree& tree) {
  TreeLayout L;
  std::function<void(const TreeNode&, int, int)> visit = [&](const TreeNode& node, int parent,
                                                             int depth) {
    const int idx = static_cast<int>(L.nodes.size());
    L.nodes.push_back(node.id);
    L.parent.push_back(parent);
    L.children.emplace_back();
    L.depth.push_back(depth);
    L.node_path.push_back(-1);
    L.node_edge.push_back(-1);
    if (parent >= 0) {
      L.children[static_cast<std::size_t>(parent)].push_back(idx);
      L.node_edge.back() = static_cast<int>(L.edge_node.size());
      L.edge_node.push_back(idx);
      L.edge_absorbing.push_back(false);
    }
    if (node.is_leaf()) {
      L.node_path.back() = static_cast<int>(L.leaves.size());
      L.leaves.push_back(idx);
    }
    for (const auto& c : node.children) visit(c, idx, depth + 1);
  };
  visit(tree.root(), -1, 0);

  for (const auto& kids : L.children) {
    if (!kids.empty()) {
      L.edge_absorbing[static_cast<std::size_t>(L.node_edge[static_cast<std::size_t>(kids.back())])] =
          true;
    }
  }

  L.path_on.resize(L.leaves.size());
  L.path_left.resize(L.leaves.size());
  for (std::size_t p = 0; p < L.leaves.size(); ++p) {
    for (int v = L.leaves[p]; L.parent[static_cast<std::size_t>(v)] >= 0;
         v = L.parent[static_cast<std::size_t>(v)]) {
      const auto vi = static_cast<std::size_t>(v);
      L.path_on[p].push_back(L.node_edge[vi]);
      for (int sib : L.children[static_cast<std::size_t>(L.parent[vi])]) {
        if (sib == v) break;
        L.path_left[p].push_back(L.node_edge[static_cast<std::size_t>(sib)]);
      }
    }
    std::reverse(L.path_on[p].begin(), L.path_on[p].end());
    std::sort(L.path_left[p].begin(), L.path_left[p].end());
  }

  std::function<void(int)> post = [&](int v) {
    const auto& kids = L.children[static_cast<std::size_t>(v)];
    for (int c : kids) post(c);
    if (!kids.empty()) L.internal_post_order.push_back(v);
  };
  post(0);
  return L;
}

int TreeLayout::edge_index(const EdgeId& e) const {
  const int v = node_index(e.child);
  return v < 0 ? -1 : node_edge[static_cast<std::size_t>(v)];
}

int TreeLayout::node_index(const NodeId& id) const {
  auto it = std::find(nodes.begin(), nodes.end(), id);
  return it == nodes.end() ? -1 : static_cast<int>(it - nodes.begin());
}

NodeParams NodeParams::gather(const TruncatedTree& tree, const TreeLayout& layout) {
  NodeParams out;
  out.mu.resize(tree.dim(), layout.node_count());
  out.sigma.resize(layout.node_count());
  for (int v = 0; v < layout.node_count(); ++v) {
    const TreeNode& node = tree.at(layout.nodes[static_cast<std::size_t>(v)]);
    out.mu.col(v) = node.mu;
    out.sigma(v) = node.sigma;
  }
  return out;
}

void NodeParams::scatter(TruncatedTree& tree, const TreeLayout& layout) const {
  for (int v = 0; v < layout.node_count(); ++v) {
    TreeNode& node = tree.at(layout.nodes[static_cast<std::size_t>(v)]);
    node.mu = mu.col(v);
    node.sigma = sigma(v);
  }
}

}  // namespace hvae
