#include "absa/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "absa/errors.hpp"

namespace absa {

namespace {

constexpr char kMagic[8] = {'A', 'B', 'S', 'A', 'A', 'R', 'C', '\n'};

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw ConfigError("archive truncated");
  return v;
}

}  // namespace

const Tensor& Archive::get(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw ConfigError("archive has no tensor '" + name + "'");
}

bool Archive::has(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return true;
  return false;
}

void write_archive(const Archive& archive, std::ostream& out) {
  nlohmann::json meta = archive.meta;
  nlohmann::json listing = nlohmann::json::array();
  for (const auto& [name, t] : archive.tensors) listing.push_back({{"name", name}, {"shape", t.shape()}});
  meta["tensors"] = listing;
  const std::string text = meta.dump();
  out.write(kMagic, sizeof kMagic);
  write_pod<std::uint32_t>(out, Archive::kVersion);
  write_pod<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : archive.tensors) {
    out.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
}

void write_archive(const Archive& archive, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  write_archive(archive, out);
  if (!out) throw ConfigError("failed writing " + path.string());
}

Archive read_archive(std::istream& in) {
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw ConfigError("not an absa archive");
  }
  const auto version = read_pod<std::uint32_t>(in);
  if (version != Archive::kVersion) {
    throw ConfigError("unsupported archive version " + std::to_string(version));
  }
  const auto len = read_pod<std::uint64_t>(in);
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw ConfigError("archive truncated");
  Archive archive;
  archive.meta = nlohmann::json::parse(text);
  for (const auto& entry : archive.meta.at("tensors")) {
    Shape shape = entry.at("shape").get<Shape>();
    Tensor t(shape);
    if (!in.read(reinterpret_cast<char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(double)))) {
      throw ConfigError("archive truncated in tensor '" + entry.at("name").get<std::string>() + "'");
    }
    archive.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(t));
  }
  archive.meta.erase("tensors");
  return archive;
}

Archive read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  return read_archive(in);
}

void put_table(Archive& archive, const std::string& key, const EmbeddingTable& table) {
  const std::size_t dim = table.dim();
  Tensor words({table.word_count(), dim});
  for (std::size_t i = 0; i < table.word_count(); ++i) {
    const auto src = table.word(i);
    std::copy(src.begin(), src.end(), words.row(i).begin());
  }
  const auto ids = table.stored_buckets();
  Tensor buckets({ids.size(), dim});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto src = table.bucket(ids[i]);
    std::copy(src.begin(), src.end(), buckets.row(i).begin());
  }
  const auto& sw = table.subwords();
  archive.meta[key] = {{"dim", dim},
                       {"vocabulary", table.vocabulary().tokens()},
                       {"subwords", {{"bucket_count", sw.bucket_count}, {"n_min", sw.n_min}, {"n_max", sw.n_max}}},
                       {"bucket_ids", ids}};
  archive.put(key + ".words", std::move(words));
  archive.put(key + ".buckets", std::move(buckets));
}

EmbeddingTable get_table(const Archive& archive, const std::string& key) {
  const auto& m = archive.meta.at(key);
  const std::size_t dim = m.at("dim").get<std::size_t>();
  EmbeddingTable table(dim);
  const auto vocab = m.at("vocabulary").get<std::vector<std::string>>();
  const Tensor& words = archive.get(key + ".words");
  for (std::size_t i = 0; i < vocab.size(); ++i) table.add_word(vocab[i], words.row(i));
  SubwordConfig sw;
  sw.bucket_count = m.at("subwords").at("bucket_count").get<std::size_t>();
  sw.n_min = m.at("subwords").at("n_min").get<std::size_t>();
  sw.n_max = m.at("subwords").at("n_max").get<std::size_t>();
  table.set_subwords(sw);
  const auto ids = m.at("bucket_ids").get<std::vector<std::uint32_t>>();
  const Tensor& buckets = archive.get(key + ".buckets");
  for (std::size_t i = 0; i < ids.size(); ++i) table.set_bucket(ids[i], buckets.row(i));
  return table;
}

}  // namespace absa
