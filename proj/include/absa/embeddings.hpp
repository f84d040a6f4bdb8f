#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "absa/rng.hpp"
#include "absa/tensor.hpp"

namespace absa {

bool is_valid_utf8(std::string_view text);

// Lowercases, splits on whitespace, and splits leading/trailing punctuation
// into one token per character. URLs and @-mentions stay whole.
std::vector<std::string> tokenize(std::string_view text);

// Character n-grams of "<word>" for n in [n_min, n_max], by n ascending then
// left to right, followed by the whole bracketed word unless already emitted.
// Characters are Unicode code points.
std::vector<std::string> extract_ngrams(std::string_view word, std::size_t n_min, std::size_t n_max);

// 32-bit FNV-1a over the UTF-8 bytes. This is the bucket hash for n-grams and
// the seed source for fallback vectors.
std::uint32_t fnv1a32(std::string_view bytes);
std::uint64_t fnv1a64(std::string_view bytes);

class Vocabulary {
 public:
  // Adds the token if new; returns its index.
  std::size_t add(const std::string& token, std::uint64_t count = 1);
  bool contains(std::string_view token) const;
  // Returns size() when absent.
  std::size_t index(std::string_view token) const;
  const std::string& token(std::size_t index) const { return tokens_.at(index); }
  std::uint64_t count(std::size_t index) const { return counts_.at(index); }
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

 private:
  struct Hash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const noexcept { return std::hash<std::string_view>{}(s); }
  };
  std::unordered_map<std::string, std::size_t, Hash, std::equal_to<>> index_;
  std::vector<std::string> tokens_;
  std::vector<std::uint64_t> counts_;
};

struct SubwordConfig {
  std::size_t bucket_count = 200000;
  std::size_t n_min = 3;
  std::size_t n_max = 6;
};

// Word vectors plus an optional hashed n-gram bucket table. Buckets are
// stored sparsely: only buckets with a stored row take memory; any other
// bucket is the zero vector.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const noexcept { return dim_; }
  const Vocabulary& vocabulary() const noexcept { return vocab_; }
  std::size_t word_count() const noexcept { return vocab_.size(); }
  std::span<const double> word(std::size_t index) const { return {words_.data() + index * dim_, dim_}; }

  void add_word(const std::string& token, std::span<const double> vector);

  bool has_subwords() const noexcept { return subwords_.bucket_count > 0; }
  const SubwordConfig& subwords() const noexcept { return subwords_; }
  // bucket_count == 0 disables subword composition.
  void set_subwords(SubwordConfig cfg);
  void set_bucket(std::uint32_t bucket, std::span<const double> vector);
  // Stored bucket ids in ascending order.
  std::vector<std::uint32_t> stored_buckets() const;
  // Row of a stored bucket, or an empty span when the bucket is zero.
  std::span<const double> bucket(std::uint32_t bucket) const;
  std::uint32_t bucket_of(std::string_view ngram) const;

  std::vector<double> lookup(std::string_view token) const;
  // Mean of the bucket vectors of the word's n-grams. Falls back to
  // fallback_vector when the table has no subword buckets.
  std::vector<double> compose_oov(std::string_view word) const;

 private:
  std::size_t dim_ = 0;
  Vocabulary vocab_;
  std::vector<double> words_;
  SubwordConfig subwords_{0, 3, 6};
  std::unordered_map<std::uint32_t, std::size_t> bucket_rows_;
  std::vector<double> bucket_data_;
};

// Deterministic pseudo-random vector for a word: uniform in [-0.01, 0.01),
// seeded by fnv1a64(word).
std::vector<double> fallback_vector(std::string_view word, std::size_t dim);

// word2vec text format: "vocab_size dim" header, then one "token v1 .. vdim"
// line per word. Subword buckets follow as an "ngram:config B n_min n_max"
// line and "ngram:<bucket> v1 .. vdim" lines. Reals are written with 17
// significant digits. expected_dim == 0 accepts any dimension.
EmbeddingTable load_embeddings(const std::filesystem::path& path, std::size_t expected_dim = 0);
EmbeddingTable read_embeddings(std::istream& in, std::size_t expected_dim = 0);
void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path);
void write_embeddings(const EmbeddingTable& table, std::ostream& out);

std::string format_real(double v);

// Plain-text corpus, one document per line, tokenized with tokenize().
class CorpusStream {
 public:
  explicit CorpusStream(std::vector<std::string> lines);
  static CorpusStream from_file(const std::filesystem::path& path);

  const std::vector<std::vector<std::string>>& documents() const noexcept { return docs_; }
  std::size_t token_count() const noexcept { return tokens_; }

 private:
  std::vector<std::vector<std::string>> docs_;
  std::size_t tokens_ = 0;
};

struct SkipgramConfig {
  std::size_t dim = 300;
  std::size_t window = 5;
  std::size_t negatives = 5;
  std::size_t epochs = 5;
  double lr = 0.05;
  std::uint64_t min_count = 2;
  SubwordConfig subwords;
  std::uint64_t seed = 42;
};

// (center, context) index pairs within a fixed window, center-major.
std::vector<std::pair<std::size_t, std::size_t>> skipgram_pairs(std::size_t length, std::size_t window);

// Draws indices with probability proportional to count^0.75.
class NegativeSampler {
 public:
  explicit NegativeSampler(std::span<const std::uint64_t> counts, double power = 0.75);
  std::size_t draw(Rng& rng) const;
  double probability(std::size_t index) const;

 private:
  std::vector<double> cumulative_;
};

// Subword skip-gram with negative sampling and linear learning-rate decay.
// Exported word rows are the mean of the word vector and its n-gram vectors;
// out-of-vocabulary words compose from the exported buckets.
EmbeddingTable train_subword_skipgram(const CorpusStream& corpus, const SkipgramConfig& cfg);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

}  // namespace absa
