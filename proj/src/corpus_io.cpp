#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include "hvae/corpus.hpp"
#include "hvae/errors.hpp"

namespace hvae {

std::size_t Corpus::element_count() const {
  std::size_t n = 0;
  for (const auto& s : sequences) n += static_cast<std::size_t>(s.cols());
  return n;
}

bool Corpus::has_any_label() const {
  for (const auto& seq : labels) {
    for (const auto& l : seq) {
      if (l) return true;
    }
  }
  return false;
}

std::optional<int> Corpus::label(std::size_t m, std::size_t n) const {
  if (m >= labels.size() || n >= labels[m].size()) return std::nullopt;
  return labels[m][n];
}

void Corpus::validate() const {
  if (sequences.empty()) throw SchemaError("corpus has no sequences");
  const auto f = sequences.front().rows();
  if (f < 1) throw SchemaError("feature dimension must be positive");
  for (std::size_t m = 0; m < sequences.size(); ++m) {
    if (sequences[m].rows() != f) {
      throw SchemaError("sequence " + std::to_string(m) + " has inconsistent feature dimension");
    }
    if (sequences[m].cols() < 1) throw SchemaError("sequence " + std::to_string(m) + " is empty");
    if (!sequences[m].allFinite()) {
      throw SchemaError("sequence " + std::to_string(m) + " has non-finite features");
    }
  }
  if (!labels.empty()) {
    if (labels.size() != sequences.size()) throw SchemaError("label table has wrong length");
    for (std::size_t m = 0; m < labels.size(); ++m) {
      if (labels[m].size() != static_cast<std::size_t>(sequences[m].cols())) {
        throw SchemaError("labels of sequence " + std::to_string(m) + " have wrong length");
      }
    }
  }
}

bool Corpus::operator==(const Corpus& other) const {
  if (sequences.size() != other.sequences.size()) return false;
  for (std::size_t m = 0; m < sequences.size(); ++m) {
    const auto& a = sequences[m];
    const auto& b = other.sequences[m];
    if (a.rows() != b.rows() || a.cols() != b.cols() || a != b) return false;
  }
  auto label_or_empty = [](const Corpus& c, std::size_t m) {
    return m < c.labels.size() ? c.labels[m]
                               : std::vector<std::optional<int>>(
                                     static_cast<std::size_t>(c.sequences[m].cols()));
  };
  for (std::size_t m = 0; m < sequences.size(); ++m) {
    if (label_or_empty(*this, m) != label_or_empty(other, m)) return false;
  }
  return true;
}

std::pair<Corpus, Corpus> split_sequences(const Corpus& corpus, int stride, int phase) {
  if (stride < 2) throw InputError("split stride must be at least 2");
  Corpus keep, held;
  for (std::size_t m = 0; m < corpus.sequences.size(); ++m) {
    Corpus& dst = (static_cast<int>(m) % stride == phase) ? held : keep;
    dst.sequences.push_back(corpus.sequences[m]);
    if (!corpus.labels.empty()) dst.labels.push_back(corpus.labels[m]);
  }
  return {std::move(keep), std::move(held)};
}

namespace {

void append_double(std::string& out, double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  out.append(buf, res.ptr);
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

[[noreturn]] void schema_fail(std::size_t line, const std::string& what) {
  throw SchemaError("line " + std::to_string(line) + ": " + what);
}

template <typename T>
T parse_number(std::string_view field, std::size_t line, const char* what) {
  field = trim(field);
  T value{};
  auto res = std::from_chars(field.data(), field.data() + field.size(), value);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    schema_fail(line, std::string("non-numeric ") + what + " '" + std::string(field) + "'");
  }
  return value;
}

}  // namespace

void write_corpus_csv(const Corpus& corpus, std::ostream& os) {
  const int f = corpus.feature_dim();
  std::string line = "sequence_id,element_index,label";
  for (int j = 0; j < f; ++j) line += ",f_" + std::to_string(j);
  os << line << '\n';
  for (std::size_t m = 0; m < corpus.sequences.size(); ++m) {
    const auto& seq = corpus.sequences[m];
    for (Eigen::Index n = 0; n < seq.cols(); ++n) {
      line = std::to_string(m) + ',' + std::to_string(n) + ',';
      if (auto l = corpus.label(m, static_cast<std::size_t>(n))) line += std::to_string(*l);
      for (int j = 0; j < f; ++j) {
        line += ',';
        append_double(line, seq(j, n));
      }
      os << line << '\n';
    }
  }
}

void write_corpus_csv(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw InputError("cannot open " + path.string() + " for writing");
  write_corpus_csv(corpus, os);
  if (!os) throw InputError("failed writing " + path.string());
}

Corpus ingest(std::istream& is) {
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(is, line)) throw SchemaError("empty corpus file");
  const auto header = split_fields(trim(line));
  if (header.size() < 4 || trim(header[0]) != "sequence_id" || trim(header[1]) != "element_index" ||
      trim(header[2]) != "label") {
    schema_fail(lineno, "header must be sequence_id,element_index,label,f_0,...");
  }
  const std::size_t f = header.size() - 3;
  for (std::size_t j = 0; j < f; ++j) {
    if (trim(header[3 + j]) != "f_" + std::to_string(j)) {
      schema_fail(lineno, "expected feature column f_" + std::to_string(j));
    }
  }

  Corpus corpus;
  std::vector<double> buffer;
  std::vector<std::optional<int>> labels;
  long long current_id = 0;
  bool have_seq = false;
  std::vector<long long> seen_ids;

  auto flush = [&]() {
    if (!have_seq) return;
    const auto n = static_cast<Eigen::Index>(labels.size());
    corpus.sequences.emplace_back(Eigen::Map<Eigen::MatrixXd>(buffer.data(),
                                                               static_cast<Eigen::Index>(f), n));
    corpus.labels.push_back(std::move(labels));
    buffer.clear();
    labels.clear();
  };

  while (std::getline(is, line)) {
    ++lineno;
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto fields = split_fields(body);
    if (fields.size() != f + 3) {
      schema_fail(lineno, "expected " + std::to_string(f + 3) + " fields, found " +
                              std::to_string(fields.size()));
    }
    const auto seq_id = parse_number<long long>(fields[0], lineno, "sequence_id");
    const auto elem = parse_number<long long>(fields[1], lineno, "element_index");
    if (!have_seq || seq_id != current_id) {
      flush();
      for (auto id : seen_ids) {
        if (id == seq_id) schema_fail(lineno, "rows of sequence " + std::to_string(seq_id) +
                                                  " are not contiguous");
      }
      seen_ids.push_back(seq_id);
      current_id = seq_id;
      have_seq = true;
    }
    if (elem != static_cast<long long>(labels.size())) {
      schema_fail(lineno, "element_index " + std::to_string(elem) + " out of order (expected " +
                              std::to_string(labels.size()) + ")");
    }
    const auto label_field = trim(fields[2]);
    if (label_field.empty()) {
      labels.emplace_back();
    } else {
      labels.emplace_back(parse_number<int>(label_field, lineno, "label"));
    }
    for (std::size_t j = 0; j < f; ++j) {
      const double v = parse_number<double>(fields[3 + j], lineno, "feature");
      if (!std::isfinite(v)) schema_fail(lineno, "non-finite feature");
      buffer.push_back(v);
    }
  }
  flush();
  if (corpus.sequences.empty()) throw SchemaError("corpus file has no rows");
  if (!corpus.has_any_label()) corpus.labels.clear();
  return corpus;
}

Corpus ingest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open " + path.string());
  return ingest(is);
}

}  // namespace hvae
