#include "pcreid/tensor_archive.hpp"

#include "pcreid/error.hpp"

#include <cstring>
#include <fstream>
#include <numeric>

namespace pcreid {

namespace fs = std::filesystem;

void TensorArchive::add(std::string name, std::vector<long> shape, std::span<const float> values) {
  const long count = std::accumulate(shape.begin(), shape.end(), 1L, std::multiplies<>());
  if (count != static_cast<long>(values.size())) {
    throw Error(ErrorKind::InvalidArgument, "tensor '" + name + "' shape does not match its value count");
  }
  if (contains(name)) throw Error(ErrorKind::InvalidArgument, "duplicate tensor '" + name + "'");
  entries_.push_back({std::move(name), std::move(shape), {values.begin(), values.end()}});
}

bool TensorArchive::contains(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

const TensorArchive::Entry& TensorArchive::get(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e;
  }
  throw Error(ErrorKind::ConfigMismatch, "archive has no tensor '" + name + "'");
}

void TensorArchive::save(const fs::path& index_path) const {
  fs::path blob_path = index_path;
  blob_path.replace_extension(".bin");
  nlohmann::json index;
  index["format"] = "pcreid-tensors/1";
  index["meta"] = meta_;
  index["blob"] = blob_path.filename().string();
  nlohmann::json tensors = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& e : entries_) {
    tensors.push_back({{"name", e.name}, {"shape", e.shape}, {"offset", offset}, {"count", e.values.size()}});
    offset += e.values.size() * sizeof(float);
  }
  index["tensors"] = tensors;

  if (index_path.has_parent_path()) fs::create_directories(index_path.parent_path());
  std::ofstream blob(blob_path, std::ios::binary | std::ios::trunc);
  if (!blob) throw Error(ErrorKind::Io, "cannot write " + blob_path.string());
  for (const auto& e : entries_) {
    blob.write(reinterpret_cast<const char*>(e.values.data()),
               static_cast<std::streamsize>(e.values.size() * sizeof(float)));
  }
  std::ofstream out(index_path, std::ios::trunc);
  if (!out || !blob) throw Error(ErrorKind::Io, "cannot write " + index_path.string());
  out << index.dump(2) << '\n';
}

TensorArchive TensorArchive::load(const fs::path& index_path) {
  std::ifstream in(index_path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + index_path.string());
  nlohmann::json index;
  try {
    in >> index;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Io, "malformed archive index " + index_path.string() + ": " + e.what());
  }
  if (index.value("format", "") != "pcreid-tensors/1") {
    throw Error(ErrorKind::Io, "unknown archive format in " + index_path.string());
  }
  const fs::path blob_path = index_path.parent_path() / index.at("blob").get<std::string>();
  std::ifstream blob(blob_path, std::ios::binary);
  if (!blob) throw Error(ErrorKind::Io, "cannot open " + blob_path.string());
  const std::vector<char> bytes{std::istreambuf_iterator<char>(blob), std::istreambuf_iterator<char>()};

  TensorArchive archive;
  archive.meta_ = index.at("meta");
  for (const auto& t : index.at("tensors")) {
    Entry e;
    e.name = t.at("name").get<std::string>();
    e.shape = t.at("shape").get<std::vector<long>>();
    const auto offset = t.at("offset").get<std::size_t>();
    const auto count = t.at("count").get<std::size_t>();
    if (offset + count * sizeof(float) > bytes.size()) {
      throw Error(ErrorKind::Io, "tensor '" + e.name + "' exceeds blob " + blob_path.string());
    }
    e.values.resize(count);
    std::memcpy(e.values.data(), bytes.data() + offset, count * sizeof(float));
    archive.entries_.push_back(std::move(e));
  }
  return archive;
}

}  // namespace pcreid
