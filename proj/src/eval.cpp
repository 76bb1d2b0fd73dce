#include "hvae/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "hvae/errors.hpp"
#include "hvae/kernels.hpp"
#include "hvae/rng.hpp"

namespace hvae {

namespace {

Eigen::MatrixXd leaf_means(const TruncatedTree& tree, const std::vector<NodeId>& leaves) {
  Eigen::MatrixXd means(tree.dim(), static_cast<Eigen::Index>(leaves.size()));
  for (std::size_t p = 0; p < leaves.size(); ++p) {
    means.col(static_cast<Eigen::Index>(p)) = tree.at(leaves[p]).mu;
  }
  return means;
}

// Contingency counts [cluster][class] over elements.
std::vector<std::vector<std::size_t>> contingency(const Assignments& clusters,
                                                  const std::vector<std::vector<int>>& truth,
                                                  std::size_t* total) {
  if (clusters.size() != truth.size()) throw InputError("cluster and truth tables differ in size");
  int nc = 0;
  int nk = 0;
  for (std::size_t m = 0; m < clusters.size(); ++m) {
    if (clusters[m].size() != truth[m].size()) {
      throw InputError("cluster and truth tables differ in size");
    }
    for (std::size_t n = 0; n < clusters[m].size(); ++n) {
      if (clusters[m][n] < 0 || truth[m][n] < 0) throw InputError("negative cluster or class id");
      nc = std::max(nc, clusters[m][n] + 1);
      nk = std::max(nk, truth[m][n] + 1);
    }
  }
  std::vector<std::vector<std::size_t>> table(static_cast<std::size_t>(nc),
                                              std::vector<std::size_t>(static_cast<std::size_t>(nk)));
  *total = 0;
  for (std::size_t m = 0; m < clusters.size(); ++m) {
    for (std::size_t n = 0; n < clusters[m].size(); ++n) {
      ++table[static_cast<std::size_t>(clusters[m][n])][static_cast<std::size_t>(truth[m][n])];
      ++*total;
    }
  }
  return table;
}

std::string dot_id(const NodeId& id) {
  std::string s = "n";
  for (int l : id.label()) s += "_" + std::to_string(l);
  return s;
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

NodeId assign_leaf(const TruncatedTree& tree, const AutoencoderParams& params,
                   const Eigen::VectorXd& x) {
  const Eigen::VectorXd z = encode(params, x).z_mean;
  const auto leaves = enumerate_paths(tree);
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < leaves.size(); ++p) {
    const double d = (z - tree.at(leaves[p]).mu).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = p;
    }
  }
  return leaves[best];
}

Assignments assign_corpus(const TruncatedTree& tree, const AutoencoderParams& params,
                          const Corpus& corpus, Exec exec) {
  const LatentTable codes = kernels::encode_corpus(exec, params, corpus);
  return kernels::nearest_columns(exec, codes.z_mean, leaf_means(tree, enumerate_paths(tree)));
}

std::optional<int> majority(const std::map<int, std::size_t>& counts) {
  std::optional<int> best;
  std::size_t best_count = 0;
  for (const auto& [label, count] : counts) {
    if (count > best_count) {
      best = label;
      best_count = count;
    }
  }
  return best;
}

std::map<int, int> cluster_majority(const Assignments& assignments, const Corpus& corpus) {
  std::map<int, std::map<int, std::size_t>> counts;
  for (std::size_t m = 0; m < assignments.size(); ++m) {
    for (std::size_t n = 0; n < assignments[m].size(); ++n) {
      if (auto l = corpus.label(static_cast<int>(m), static_cast<int>(n))) {
        ++counts[assignments[m][n]][*l];
      }
    }
  }
  std::map<int, int> out;
  for (const auto& [cluster, hist] : counts) {
    if (auto c = majority(hist)) out[cluster] = *c;
  }
  return out;
}

NodeLabels label_nodes(const TruncatedTree& tree, const AutoencoderParams& params,
                       const Corpus& corpus, Exec exec) {
  if (!corpus.has_any_label()) throw MissingLabelsError("corpus carries no labels");
  const auto layout = TreeLayout::build(tree);
  const Assignments assigned = assign_corpus(tree, params, corpus, exec);
  std::vector<std::map<int, std::size_t>> counts(static_cast<std::size_t>(layout.node_count()));
  for (std::size_t m = 0; m < assigned.size(); ++m) {
    for (std::size_t n = 0; n < assigned[m].size(); ++n) {
      const auto l = corpus.label(static_cast<int>(m), static_cast<int>(n));
      if (!l) continue;
      for (int v = layout.leaves[static_cast<std::size_t>(assigned[m][n])]; v >= 0;
           v = layout.parent[static_cast<std::size_t>(v)]) {
        ++counts[static_cast<std::size_t>(v)][*l];
      }
    }
  }
  NodeLabels out;
  std::vector<int> cls(static_cast<std::size_t>(layout.node_count()));
  for (int v = 0; v < layout.node_count(); ++v) {  // pre-order: parents first
    const auto vi = static_cast<std::size_t>(v);
    if (auto c = majority(counts[vi])) {
      cls[vi] = *c;
    } else if (layout.parent[vi] >= 0) {
      cls[vi] = cls[static_cast<std::size_t>(layout.parent[vi])];
    } else {
      throw MissingLabelsError("no labeled element reaches the tree");
    }
    out[layout.nodes[vi]] = cls[vi];
  }
  return out;
}

EvalReport score_predictions(const std::vector<std::optional<int>>& predicted,
                             const std::vector<std::optional<int>>& truth) {
  if (predicted.size() != truth.size()) throw InputError("prediction and truth differ in size");
  std::map<int, ClassScore> by_class;
  std::map<int, std::size_t> retrieved;
  std::size_t total = 0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!truth[i]) continue;
    auto& s = by_class[*truth[i]];
    s.label = *truth[i];
    ++s.total;
    ++total;
    if (predicted[i]) ++retrieved[*predicted[i]];
    if (predicted[i] == truth[i]) {
      ++s.correct;
      ++correct;
    }
  }
  EvalReport r;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  for (auto& [label, s] : by_class) {
    s.retrieved = retrieved.contains(label) ? retrieved.at(label) : 0;
    s.accuracy = static_cast<double>(s.correct) / static_cast<double>(s.total);
    const double denom = static_cast<double>(s.retrieved + s.total);
    s.f1 = 2.0 * static_cast<double>(s.correct) / denom;
    tp += s.correct;
    fp += s.retrieved - s.correct;
    fn += s.total - s.correct;
    r.classes.push_back(s);
  }
  r.accuracy = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  r.f1 = tp ? 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn) : 0.0;
  return r;
}

std::vector<std::optional<int>> predict_classes(const Assignments& assignments,
                                                const std::vector<int>& path_labels) {
  std::vector<std::optional<int>> out;
  for (const auto& seq : assignments) {
    for (int p : seq) {
      if (p >= 0 && static_cast<std::size_t>(p) < path_labels.size()) {
        out.emplace_back(path_labels[static_cast<std::size_t>(p)]);
      } else {
        out.emplace_back();
      }
    }
  }
  return out;
}

std::vector<std::optional<int>> flat_labels(const Corpus& corpus) {
  std::vector<std::optional<int>> out;
  for (std::size_t m = 0; m < corpus.sequences.size(); ++m) {
    for (Eigen::Index n = 0; n < corpus.sequences[m].cols(); ++n) {
      out.push_back(corpus.label(static_cast<int>(m), static_cast<int>(n)));
    }
  }
  return out;
}

std::vector<int> path_labels(const TruncatedTree& tree, const NodeLabels& labels) {
  std::vector<int> out;
  for (const auto& leaf : enumerate_paths(tree)) {
    auto it = labels.find(leaf);
    if (it == labels.end()) throw InputError("leaf " + leaf.dotted() + " has no class label");
    out.push_back(it->second);
  }
  return out;
}

namespace {

EvalReport evaluate(const TruncatedTree& tree, const AutoencoderParams& params,
                    const NodeLabels& labels, const Corpus& test, Exec exec) {
  const auto assigned = assign_corpus(tree, params, test, exec);
  EvalReport r = score_predictions(predict_classes(assigned, path_labels(tree, labels)),
                                   flat_labels(test));
  r.paths = enumerate_paths(tree);
  r.path_histogram = path_histogram(assigned, static_cast<int>(r.paths.size()));
  return r;
}

}  // namespace

EvalReport classify(const TruncatedTree& tree, const AutoencoderParams& params,
                    const NodeLabels& labels, const Corpus& test, Exec exec) {
  EvalReport r = evaluate(tree, params, labels, test, exec);
  for (auto& c : r.classes) c.f1.reset();
  r.f1 = 0.0;
  return r;
}

EvalReport retrieve_f1(const TruncatedTree& tree, const AutoencoderParams& params,
                       const NodeLabels& labels, const Corpus& test, Exec exec) {
  return evaluate(tree, params, labels, test, exec);
}

LogLikelihood test_loglik(const AutoencoderParams& params, const Corpus& test,
                          int samples_per_element, std::uint64_t seed) {
  if (samples_per_element < 1) throw InputError("samples_per_element must be >= 1");
  const double F = params.feature_dim();
  const double constant = -0.5 * F * std::log(2.0 * std::numbers::pi);
  LogLikelihood out;
  std::size_t count = 0;
  for (std::size_t m = 0; m < test.sequences.size(); ++m) {
    for (Eigen::Index n = 0; n < test.sequences[m].cols(); ++n) {
      const Eigen::VectorXd x = test.sequences[m].col(n);
      const Encoded q = encode(params, x);
      Rng rng = make_rng(seed, {m, static_cast<std::uint64_t>(n)});
      double acc = 0.0;
      for (int s = 0; s < samples_per_element; ++s) {
        const Eigen::VectorXd z =
            q.z_mean + q.z_stdev.cwiseProduct(standard_normal_vector(params.latent_dim(), rng));
        acc += constant - 0.5 * (x - params.dec.apply(z)).squaredNorm();
      }
      out.sum += acc / samples_per_element;
      ++count;
    }
  }
  out.mean = count ? out.sum / static_cast<double>(count) : 0.0;
  return out;
}

std::vector<std::size_t> path_histogram(const Assignments& assignments, int n_paths) {
  std::vector<std::size_t> h(static_cast<std::size_t>(n_paths));
  for (const auto& seq : assignments) {
    for (int p : seq) {
      if (p >= 0 && p < n_paths) ++h[static_cast<std::size_t>(p)];
    }
  }
  return h;
}

double purity(const Assignments& clusters, const std::vector<std::vector<int>>& truth) {
  std::size_t total = 0;
  const auto table = contingency(clusters, truth, &total);
  if (total == 0) return 0.0;
  std::size_t agree = 0;
  for (const auto& row : table) agree += *std::max_element(row.begin(), row.end());
  return static_cast<double>(agree) / static_cast<double>(total);
}

double matched_purity(const Assignments& clusters, const std::vector<std::vector<int>>& truth) {
  std::size_t total = 0;
  auto table = contingency(clusters, truth, &total);
  if (total == 0) return 0.0;
  std::size_t rows = table.size();
  std::size_t cols = table.front().size();
  // DP over subsets of the smaller side.
  if (cols > rows) {
    std::vector<std::vector<std::size_t>> t(cols, std::vector<std::size_t>(rows));
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) t[j][i] = table[i][j];
    }
    table = std::move(t);
    std::swap(rows, cols);
  }
  if (cols > 20) throw InputError("too many classes for exact matching");
  const std::size_t states = std::size_t{1} << cols;
  std::vector<std::size_t> best(states, 0);
  for (const auto& row : table) {
    std::vector<std::size_t> next = best;
    for (std::size_t mask = 0; mask < states; ++mask) {
      for (std::size_t j = 0; j < cols; ++j) {
        if (mask & (std::size_t{1} << j)) continue;
        auto& slot = next[mask | (std::size_t{1} << j)];
        slot = std::max(slot, best[mask] + row[j]);
      }
    }
    best = std::move(next);
  }
  return static_cast<double>(*std::max_element(best.begin(), best.end())) /
         static_cast<double>(total);
}

std::map<NodeId, std::vector<ElementRef>> representatives(const TruncatedTree& tree,
                                                          const AutoencoderParams& params,
                                                          const Corpus& corpus, int k, Exec exec) {
  std::map<NodeId, std::vector<ElementRef>> out;
  const auto layout = TreeLayout::build(tree);
  for (const auto& id : layout.nodes) out[id];
  if (k <= 0) return out;

  const LatentTable codes = kernels::encode_corpus(exec, params, corpus);
  const auto assigned =
      kernels::nearest_columns(exec, codes.z_mean, leaf_means(tree, enumerate_paths(tree)));
  std::vector<std::vector<ElementRef>> members(static_cast<std::size_t>(layout.node_count()));
  for (std::size_t m = 0; m < assigned.size(); ++m) {
    for (std::size_t n = 0; n < assigned[m].size(); ++n) {
      for (int v = layout.leaves[static_cast<std::size_t>(assigned[m][n])]; v >= 0;
           v = layout.parent[static_cast<std::size_t>(v)]) {
        members[static_cast<std::size_t>(v)].push_back({static_cast<int>(m), static_cast<int>(n)});
      }
    }
  }
  for (int v = 0; v < layout.node_count(); ++v) {
    const NodeId& id = layout.nodes[static_cast<std::size_t>(v)];
    const Eigen::VectorXd& mu = tree.at(id).mu;
    auto& cand = members[static_cast<std::size_t>(v)];
    std::vector<std::pair<double, std::size_t>> ranked;
    for (std::size_t i = 0; i < cand.size(); ++i) {
      ranked.emplace_back(
          (codes.z_mean[static_cast<std::size_t>(cand[i].m)].col(cand[i].n) - mu).squaredNorm(), i);
    }
    const auto keep = std::min(ranked.size(), static_cast<std::size_t>(k));
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep),
                      ranked.end());
    auto& dst = out[id];
    for (std::size_t i = 0; i < keep; ++i) dst.push_back(cand[ranked[i].second]);
  }
  return out;
}

namespace {

nlohmann::json export_node(const TreeNode& node, const NodeLabels* labels,
                           const std::map<NodeId, std::vector<ElementRef>>* reps) {
  nlohmann::json children = nlohmann::json::array();
  for (const auto& c : node.children) children.push_back(export_node(c, labels, reps));
  nlohmann::json j = {{"label", node.id.label()},
                      {"mu", std::vector<double>(node.mu.data(), node.mu.data() + node.mu.size())},
                      {"sigma", node.sigma},
                      {"children", std::move(children)}};
  if (labels) {
    if (auto it = labels->find(node.id); it != labels->end()) j["class"] = it->second;
  }
  if (reps) {
    if (auto it = reps->find(node.id); it != reps->end() && !it->second.empty()) {
      nlohmann::json list = nlohmann::json::array();
      for (const auto& e : it->second) list.push_back({e.m, e.n});
      j["representatives"] = std::move(list);
    }
  }
  return j;
}

void dot_node(const TreeNode& node, const NodeLabels* labels,
              const std::map<NodeId, std::vector<ElementRef>>* reps, std::ostream& os) {
  std::string text = node.id.dotted() + "\\nsigma=" + format_double(node.sigma);
  if (labels) {
    if (auto it = labels->find(node.id); it != labels->end()) {
      text += "\\nclass=" + std::to_string(it->second);
    }
  }
  if (reps) {
    if (auto it = reps->find(node.id); it != reps->end() && !it->second.empty()) {
      text += "\\nreps=";
      for (std::size_t i = 0; i < it->second.size(); ++i) {
        if (i) text += " ";
        text += std::to_string(it->second[i].m) + ":" + std::to_string(it->second[i].n);
      }
    }
  }
  os << "  " << dot_id(node.id) << " [label=\"" << text << "\"];\n";
  for (const auto& c : node.children) {
    os << "  " << dot_id(node.id) << " -> " << dot_id(c.id) << ";\n";
    dot_node(c, labels, reps, os);
  }
}

}  // namespace

nlohmann::json export_tree_json(const TruncatedTree& tree, const NodeLabels* labels,
                                const std::map<NodeId, std::vector<ElementRef>>* reps) {
  return export_node(tree.root(), labels, reps);
}

std::string export_tree_dot(const TruncatedTree& tree, const NodeLabels* labels,
                            const std::map<NodeId, std::vector<ElementRef>>* reps) {
  std::ostringstream os;
  os << "digraph hvae {\n  node [shape=box];\n";
  dot_node(tree.root(), labels, reps, os);
  os << "}\n";
  return os.str();
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json cls = nlohmann::json::array();
  for (const auto& c : classes) {
    cls.push_back({{"class", c.label},
                   {"total", c.total},
                   {"correct", c.correct},
                   {"retrieved", c.retrieved},
                   {"accuracy", c.accuracy},
                   {"f1", c.f1 ? nlohmann::json(*c.f1) : nlohmann::json(nullptr)}});
  }
  nlohmann::json hist = nlohmann::json::array();
  for (std::size_t p = 0; p < paths.size() && p < path_histogram.size(); ++p) {
    hist.push_back({{"node", paths[p].label()}, {"count", path_histogram[p]}});
  }
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  return {{"accuracy", accuracy},       {"f1", f1},
          {"classes", std::move(cls)},  {"loglik_sum", opt(loglik_sum)},
          {"loglik_mean", opt(loglik_mean)}, {"path_histogram", std::move(hist)}};
}

}  // namespace hvae
