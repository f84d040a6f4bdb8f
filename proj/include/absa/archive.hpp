#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "absa/embeddings.hpp"
#include "absa/tensor.hpp"

namespace absa {

// Versioned container: magic, format version, a JSON metadata block, then
// the named tensors as little-endian doubles in the order listed in
// meta["tensors"].
struct Archive {
  static constexpr std::uint32_t kVersion = 1;

  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  void put(std::string name, Tensor t) { tensors.emplace_back(std::move(name), std::move(t)); }
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const;
};

void write_archive(const Archive& archive, const std::filesystem::path& path);
void write_archive(const Archive& archive, std::ostream& out);
Archive read_archive(const std::filesystem::path& path);
Archive read_archive(std::istream& in);

// Stores a whole embedding table under meta[key] and tensors "<key>.*".
void put_table(Archive& archive, const std::string& key, const EmbeddingTable& table);
EmbeddingTable get_table(const Archive& archive, const std::string& key);

}  // namespace absa
