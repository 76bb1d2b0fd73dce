#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "hvae/corpus.hpp"
#include "hvae/exec.hpp"
#include "hvae/neural.hpp"
#include "hvae/tree.hpp"

namespace hvae {

/// Cluster (path) index of every element, [m][n].
using Assignments = std::vector<std::vector<int>>;
using NodeLabels = std::map<NodeId, int>;

/// Leaf whose mean is nearest to the encoder mean of `x`; ties go to the
/// depth-first-earlier leaf.
NodeId assign_leaf(const TruncatedTree& tree, const AutoencoderParams& params,
                   const Eigen::VectorXd& x);

/// Path index (depth-first leaf order) of every element.
Assignments assign_corpus(const TruncatedTree& tree, const AutoencoderParams& params,
                          const Corpus& corpus, Exec exec = Exec::serial);

/// Mode of a label histogram, smallest class on ties; nullopt if empty.
std::optional<int> majority(const std::map<int, std::size_t>& counts);

/// Majority class per cluster over labeled elements; clusters without any
/// labeled element are absent from the result.
std::map<int, int> cluster_majority(const Assignments& assignments, const Corpus& corpus);

/// Majority class of every node over the labeled elements in its subtree.
/// Nodes with no labeled elements inherit their parent's class. Throws
/// MissingLabelsError if the corpus has no labels at all.
NodeLabels label_nodes(const TruncatedTree& tree, const AutoencoderParams& params,
                       const Corpus& corpus, Exec exec = Exec::serial);

struct ClassScore {
  int label = 0;
  std::size_t total = 0;      // test elements of this class
  std::size_t correct = 0;
  std::size_t retrieved = 0;  // test elements predicted as this class
  double accuracy = 0.0;
  std::optional<double> f1;   // null when the class has no test elements
};

struct EvalReport {
  std::vector<ClassScore> classes;  // by label
  double accuracy = 0.0;
  double f1 = 0.0;  // micro-averaged over classes present in the test set
  std::optional<double> loglik_sum;
  std::optional<double> loglik_mean;
  std::vector<NodeId> paths;
  std::vector<std::size_t> path_histogram;

  nlohmann::json to_json() const;
};

/// Accuracy and F1 of predicted classes against the truth. Unlabeled
/// elements (nullopt truth) are skipped; a nullopt prediction is always
/// wrong. Classes that appear only among the predictions get no entry.
EvalReport score_predictions(const std::vector<std::optional<int>>& predicted,
                             const std::vector<std::optional<int>>& truth);

/// Predicted class of every element: the label of its assigned leaf.
std::vector<std::optional<int>> predict_classes(const Assignments& assignments,
                                                const std::vector<int>& path_labels);
std::vector<std::optional<int>> flat_labels(const Corpus& corpus);

/// Leaf labels in path order; throws InputError if a leaf is unlabeled.
std::vector<int> path_labels(const TruncatedTree& tree, const NodeLabels& labels);

/// Accuracy fields of the report.
EvalReport classify(const TruncatedTree& tree, const AutoencoderParams& params,
                    const NodeLabels& labels, const Corpus& test, Exec exec = Exec::serial);
/// Per-class retrieval F1: retrieved set of c = elements assigned to leaves
/// labeled c.
EvalReport retrieve_f1(const TruncatedTree& tree, const AutoencoderParams& params,
                       const NodeLabels& labels, const Corpus& test, Exec exec = Exec::serial);

struct LogLikelihood {
  double sum = 0.0;
  double mean = 0.0;
};

/// Monte Carlo estimate of E_q(z|x)[log N(x; dec(z), I)] per element, with
/// the sample noise of element (m, n) drawn from make_rng(seed, {m, n}).
LogLikelihood test_loglik(const AutoencoderParams& params, const Corpus& test,
                          int samples_per_element, std::uint64_t seed);

/// Element counts per path.
std::vector<std::size_t> path_histogram(const Assignments& assignments, int n_paths);

/// Fraction of elements whose cluster's majority class (many-to-one) is
/// their true class.
double purity(const Assignments& clusters, const std::vector<std::vector<int>>& truth);
/// Fraction of elements agreeing under the best one-to-one matching of
/// clusters to classes.
double matched_purity(const Assignments& clusters, const std::vector<std::vector<int>>& truth);

/// Per node, up to `k` elements of its subtree whose codes lie closest to
/// the node mean, nearest first (ties by element order).
std::map<NodeId, std::vector<ElementRef>> representatives(const TruncatedTree& tree,
                                                          const AutoencoderParams& params,
                                                          const Corpus& corpus, int k,
                                                          Exec exec = Exec::serial);

/// Nested {label, mu, sigma, children} document, plus "class" and
/// non-empty "representatives" ([m, n] pairs) when given.
nlohmann::json export_tree_json(const TruncatedTree& tree, const NodeLabels* labels = nullptr,
                                const std::map<NodeId, std::vector<ElementRef>>* reps = nullptr);
std::string export_tree_dot(const TruncatedTree& tree, const NodeLabels* labels = nullptr,
                            const std::map<NodeId, std::vector<ElementRef>>* reps = nullptr);

}  // namespace hvae
