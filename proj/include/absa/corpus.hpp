#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace absa {

// Joint class indices: 0 is N/A (aspect absent), 1..3 the polarities.
enum class Polarity : std::uint8_t { positive = 1, negative = 2, neutral = 3 };

inline constexpr std::size_t kJointClasses = 4;
inline constexpr std::size_t kPolarityClasses = 3;

std::string_view polarity_name(Polarity p);
std::optional<Polarity> parse_polarity(std::string_view name);
// 0-based index into {positive, negative, neutral}.
inline std::size_t polarity_index(Polarity p) { return static_cast<std::size_t>(p) - 1; }
inline Polarity polarity_from_index(std::size_t i) { return static_cast<Polarity>(i + 1); }

class AspectCatalog {
 public:
  AspectCatalog() = default;
  explicit AspectCatalog(std::vector<std::string> names);

  // The 20 GermEval 2017 categories, "Allgemein" first.
  static AspectCatalog germeval();
  // One name per line; blank lines and '#' comments are skipped.
  static AspectCatalog load(const std::filesystem::path& path);

  std::size_t size() const noexcept { return names_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  std::optional<std::size_t> index(std::string_view name) const;
  // Hex FNV-1a-64 of the newline-joined names; identifies head order.
  std::string hash() const;

  bool operator==(const AspectCatalog&) const = default;

 private:
  std::vector<std::string> names_;
};

enum class Split { train, dev, test_syn, test_dia };

std::string_view split_name(Split s);
std::optional<Split> parse_split(std::string_view name);

// Aspect index -> polarity.
using LabelMap = std::map<std::size_t, Polarity>;

struct Document {
  std::string id;
  std::string text;
  std::vector<std::string> tokens;
  // (aspect, polarity) pairs in the order listed, identical pairs removed.
  std::vector<std::pair<std::size_t, Polarity>> label_pairs;
  Split split = Split::train;

  // True when some aspect carries two different polarities.
  bool has_conflict() const;
  // Conflict-free view: the first-listed polarity wins for each aspect.
  LabelMap labels() const;
};

// Reads "id<TAB>text<TAB>Aspect:polarity;..." lines.
std::vector<Document> parse_dataset(std::istream& in, const AspectCatalog& catalog, Split split);
std::vector<Document> parse_dataset(const std::filesystem::path& path, const AspectCatalog& catalog, Split split);
void write_dataset(const std::vector<Document>& docs, const AspectCatalog& catalog, std::ostream& out);

struct ConflictReport {
  std::size_t input_count = 0;
  std::size_t dropped = 0;
  std::size_t retained = 0;
  // Documents with a conflict on each aspect, indexed like the catalog.
  std::vector<std::size_t> per_aspect;

  nlohmann::json to_json(const AspectCatalog& catalog) const;
};

// Drops every training document that assigns two polarities to one aspect.
// Documents from other splits pass through untouched.
std::pair<std::vector<Document>, ConflictReport> filter_conflicts(std::vector<Document> docs,
                                                                  std::size_t aspect_count);

struct LabelVector {
  std::vector<std::uint8_t> classes;
  bool operator==(const LabelVector&) const = default;
};

LabelVector to_label_vector(const LabelMap& labels, const AspectCatalog& catalog);
LabelMap from_label_vector(const LabelVector& z, const AspectCatalog& catalog);

}  // namespace absa
