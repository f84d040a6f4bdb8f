#include "absa/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include "absa/embeddings.hpp"
#include "absa/errors.hpp"

namespace absa {

std::string_view polarity_name(Polarity p) {
  switch (p) {
    case Polarity::positive:
      return "positive";
    case Polarity::negative:
      return "negative";
    case Polarity::neutral:
      return "neutral";
  }
  return "unknown";
}

std::optional<Polarity> parse_polarity(std::string_view name) {
  if (name == "positive") return Polarity::positive;
  if (name == "negative") return Polarity::negative;
  if (name == "neutral") return Polarity::neutral;
  return std::nullopt;
}

AspectCatalog::AspectCatalog(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.empty()) throw ConfigError("aspect catalog is empty");
  std::set<std::string_view> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw ConfigError("aspect catalog contains an empty name");
    if (!seen.insert(n).second) throw ConfigError("duplicate aspect name '" + n + "'");
  }
}

AspectCatalog AspectCatalog::germeval() {
  return AspectCatalog({
      "Allgemein",
      "Atmosphäre",
      "Auslastung_und_Platzangebot",
      "Barrierefreiheit",
      "Komfort_und_Ausstattung",
      "Connectivity",
      "Design",
      "Gastronomisches_Angebot",
      "Informationen",
      "DB_App_und_Website",
      "Service_und_Kundenbetreuung",
      "Sicherheit",
      "Sonstige_Unregelmässigkeiten",
      "Ticketkauf",
      "Toiletten",
      "Zugfahrt",
      "Reisen_mit_Kindern",
      "Image",
      "QR-Code",
      "Gepäck",
  });
}

namespace {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

}  // namespace

AspectCatalog AspectCatalog::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open aspect catalog " + path.string());
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    names.emplace_back(t);
  }
  return AspectCatalog(std::move(names));
}

std::optional<std::size_t> AspectCatalog::index(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return i;
  return std::nullopt;
}

std::string AspectCatalog::hash() const {
  std::string joined;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (i > 0) joined += '\n';
    joined += names_[i];
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(joined)));
  return buf;
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::train:
      return "train";
    case Split::dev:
      return "dev";
    case Split::test_syn:
      return "test-syn";
    case Split::test_dia:
      return "test-dia";
  }
  return "unknown";
}

std::optional<Split> parse_split(std::string_view name) {
  for (Split s : {Split::train, Split::dev, Split::test_syn, Split::test_dia})
    if (split_name(s) == name) return s;
  return std::nullopt;
}

bool Document::has_conflict() const {
  for (std::size_t i = 0; i < label_pairs.size(); ++i)
    for (std::size_t j = i + 1; j < label_pairs.size(); ++j)
      if (label_pairs[i].first == label_pairs[j].first && label_pairs[i].second != label_pairs[j].second) return true;
  return false;
}

LabelMap Document::labels() const {
  LabelMap m;
  for (const auto& [aspect, pol] : label_pairs) m.try_emplace(aspect, pol);
  return m;
}

std::vector<Document> parse_dataset(std::istream& in, const AspectCatalog& catalog, Split split) {
  std::vector<Document> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest = line;
    while (true) {
      const auto tab = rest.find('\t');
      fields.push_back(rest.substr(0, tab));
      if (tab == std::string_view::npos) break;
      rest = rest.substr(tab + 1);
    }
    if (fields.size() != 3) {
      throw ParseError(line_no, "expected 3 tab-separated columns, found " + std::to_string(fields.size()));
    }
    Document doc;
    doc.id = std::string(trim(fields[0]));
    if (doc.id.empty()) throw ParseError(line_no, "empty document id");
    doc.text = std::string(fields[1]);
    doc.tokens = tokenize(doc.text);
    doc.split = split;

    std::string_view labels = fields[2];
    while (!labels.empty()) {
      const auto semi = labels.find(';');
      const auto item = trim(labels.substr(0, semi));
      labels = semi == std::string_view::npos ? std::string_view{} : labels.substr(semi + 1);
      if (item.empty()) continue;
      const auto colon = item.rfind(':');
      if (colon == std::string_view::npos) {
        throw ParseError(line_no, "label '" + std::string(item) + "' is not of the form Aspect:polarity");
      }
      const auto aspect_name = trim(item.substr(0, colon));
      const auto pol_name = trim(item.substr(colon + 1));
      const auto aspect = catalog.index(aspect_name);
      if (!aspect) throw ParseError(line_no, "unknown aspect '" + std::string(aspect_name) + "'");
      const auto pol = parse_polarity(pol_name);
      if (!pol) throw ParseError(line_no, "unknown polarity '" + std::string(pol_name) + "'");
      const std::pair<std::size_t, Polarity> pair{*aspect, *pol};
      if (std::find(doc.label_pairs.begin(), doc.label_pairs.end(), pair) == doc.label_pairs.end()) {
        doc.label_pairs.push_back(pair);
      }
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::vector<Document> parse_dataset(const std::filesystem::path& path, const AspectCatalog& catalog, Split split) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset " + path.string());
  return parse_dataset(in, catalog, split);
}

void write_dataset(const std::vector<Document>& docs, const AspectCatalog& catalog, std::ostream& out) {
  for (const auto& d : docs) {
    out << d.id << '\t' << d.text << '\t';
    for (std::size_t i = 0; i < d.label_pairs.size(); ++i) {
      if (i > 0) out << ';';
      out << catalog.name(d.label_pairs[i].first) << ':' << polarity_name(d.label_pairs[i].second);
    }
    out << '\n';
  }
}

nlohmann::json ConflictReport::to_json(const AspectCatalog& catalog) const {
  nlohmann::json per = nlohmann::json::object();
  for (std::size_t a = 0; a < per_aspect.size() && a < catalog.size(); ++a) per[catalog.name(a)] = per_aspect[a];
  return {{"input_count", input_count}, {"dropped", dropped}, {"retained", retained}, {"per_aspect", per}};
}

std::pair<std::vector<Document>, ConflictReport> filter_conflicts(std::vector<Document> docs,
                                                                  std::size_t aspect_count) {
  ConflictReport report;
  report.input_count = docs.size();
  report.per_aspect.assign(aspect_count, 0);
  std::vector<Document> kept;
  kept.reserve(docs.size());
  for (auto& d : docs) {
    if (d.split != Split::train || !d.has_conflict()) {
      kept.push_back(std::move(d));
      continue;
    }
    ++report.dropped;
    std::map<std::size_t, std::set<Polarity>> seen;
    for (const auto& [a, p] : d.label_pairs) seen[a].insert(p);
    for (const auto& [a, pols] : seen)
      if (pols.size() > 1 && a < aspect_count) ++report.per_aspect[a];
  }
  report.retained = kept.size();
  return {std::move(kept), std::move(report)};
}

LabelVector to_label_vector(const LabelMap& labels, const AspectCatalog& catalog) {
  LabelVector z;
  z.classes.assign(catalog.size(), 0);
  for (const auto& [aspect, pol] : labels) {
    if (aspect >= catalog.size()) {
      throw ConfigError("aspect index " + std::to_string(aspect) + " is not in the catalog");
    }
    z.classes[aspect] = static_cast<std::uint8_t>(pol);
  }
  return z;
}

LabelMap from_label_vector(const LabelVector& z, const AspectCatalog& catalog) {
  if (z.classes.size() != catalog.size()) {
    throw DimensionError("label vector length " + std::to_string(z.classes.size()) + " differs from catalog size " +
                         std::to_string(catalog.size()));
  }
  LabelMap m;
  for (std::size_t a = 0; a < z.classes.size(); ++a) {
    const auto c = z.classes[a];
    if (c >= kJointClasses) throw ConfigError("label vector entry " + std::to_string(c) + " out of range");
    if (c != 0) m.emplace(a, static_cast<Polarity>(c));
  }
  return m;
}

}  // namespace absa
