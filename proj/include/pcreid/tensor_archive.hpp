#pragma once

#include <json.hpp>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace pcreid {

// Named f32 tensors stored as a JSON index (metadata, names, shapes, offsets)
// next to a raw little-endian blob. Used for checkpoints and galleries.
class TensorArchive {
 public:
  struct Entry {
    std::string name;
    std::vector<long> shape;
    std::vector<float> values;
  };

  nlohmann::json& meta() { return meta_; }
  const nlohmann::json& meta() const { return meta_; }

  void add(std::string name, std::vector<long> shape, std::span<const float> values);
  bool contains(const std::string& name) const;
  const Entry& get(const std::string& name) const;
  const std::vector<Entry>& entries() const { return entries_; }

  // Writes `<stem>.json` and `<stem>.bin` into the directory of `index_path`.
  void save(const std::filesystem::path& index_path) const;
  static TensorArchive load(const std::filesystem::path& index_path);

 private:
  nlohmann::json meta_ = nlohmann::json::object();
  std::vector<Entry> entries_;
};

}  // namespace pcreid
