#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace hvae {

/// M sequences of F-dimensional elements; sequence m is an F x N_m matrix.
struct Corpus {
  std::vector<Eigen::MatrixXd> sequences;
  std::vector<std::vector<std::optional<int>>> labels;  // per element, may be empty

  int feature_dim() const {
    return sequences.empty() ? 0 : static_cast<int>(sequences.front().rows());
  }
  std::size_t sequence_count() const { return sequences.size(); }
  std::size_t element_count() const;
  bool has_any_label() const;
  std::optional<int> label(std::size_t m, std::size_t n) const;

  /// Throws SchemaError if dims disagree or a sequence is empty.
  void validate() const;

  bool operator==(const Corpus& other) const;
};

/// Splits whole sequences: every `stride`-th sequence (offset `phase`) goes
/// to the second corpus.
std::pair<Corpus, Corpus> split_sequences(const Corpus& corpus, int stride, int phase = 0);

/// CSV with header `sequence_id,element_index,label,f_0,...`. Values are
/// written with 17 significant digits so a read round-trips bit-exactly.
void write_corpus_csv(const Corpus& corpus, const std::filesystem::path& path);
void write_corpus_csv(const Corpus& corpus, std::ostream& os);

/// Parses the CSV format above. Rejects ragged rows, non-numeric features
/// and out-of-order element indices with a SchemaError naming the line.
Corpus ingest(const std::filesystem::path& path);
Corpus ingest(std::istream& is);

}  // namespace hvae
