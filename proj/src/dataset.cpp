#include "pcreid/dataset.hpp"

#include "pcreid/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

namespace pcreid {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace {

template <typename T>
void put(std::vector<std::uint8_t>& buf, T value) {
  const auto* bytes = reinterpret_cast<const std::uint8_t*>(&value);
  buf.insert(buf.end(), bytes, bytes + sizeof(T));
}

struct Reader {
  const std::vector<std::uint8_t>& buf;
  std::size_t pos = 0;
  const fs::path& path;

  template <typename T>
  T get() {
    if (pos + sizeof(T) > buf.size()) throw Error(ErrorKind::Io, "truncated sequence file " + path.string());
    T value;
    std::memcpy(&value, buf.data() + pos, sizeof(T));
    pos += sizeof(T);
    return value;
  }
};

std::vector<std::uint8_t> read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

void write_sequence_file(const fs::path& path, const PersonSequence& seq) {
  if (seq.timestamps.size() != seq.frames.size()) {
    throw Error(ErrorKind::InvalidArgument, "timestamp count does not match frame count");
  }
  std::vector<std::uint8_t> buf;
  buf.insert(buf.end(), {'P', 'S', 'E', 'Q'});
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(seq.frames.size()));
  for (std::size_t l = 0; l < seq.frames.size(); ++l) {
    put<std::uint64_t>(buf, static_cast<std::uint64_t>(std::llround(seq.timestamps[l] * 1e6)));
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(seq.frames[l].size()));
    for (const auto& p : seq.frames[l].points) {
      put<float>(buf, static_cast<float>(p.x()));
      put<float>(buf, static_cast<float>(p.y()));
      put<float>(buf, static_cast<float>(p.z()));
    }
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

PersonSequence read_sequence_file(const fs::path& path) {
  const auto buf = read_all(path);
  Reader r{buf, 0, path};
  if (buf.size() < 4 || std::memcmp(buf.data(), "PSEQ", 4) != 0) {
    throw Error(ErrorKind::Io, "bad magic in sequence file " + path.string());
  }
  r.pos = 4;
  const auto frames = r.get<std::uint32_t>();
  PersonSequence seq;
  seq.frames.resize(frames);
  seq.timestamps.resize(frames);
  for (std::uint32_t l = 0; l < frames; ++l) {
    seq.timestamps[l] = static_cast<double>(r.get<std::uint64_t>()) * 1e-6;
    const auto count = r.get<std::uint32_t>();
    auto& pts = seq.frames[l].points;
    pts.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
      const float x = r.get<float>();
      const float y = r.get<float>();
      const float z = r.get<float>();
      if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z)) {
        throw Error(ErrorKind::Io, "non-finite coordinate in " + path.string());
      }
      // Person points never lie below the floor.
      pts.emplace_back(x, y, std::max(0.0f, z));
    }
  }
  if (r.pos != buf.size()) throw Error(ErrorKind::Io, "trailing bytes in sequence file " + path.string());
  return seq;
}

std::uint64_t hash_bytes(std::span<const std::uint8_t> bytes, std::uint64_t h) {
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t hash_file(const fs::path& path) {
  const auto buf = read_all(path);
  return hash_bytes(buf);
}

std::string hex64(std::uint64_t value) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = kDigits[value & 0xF];
    value >>= 4;
  }
  return s;
}

Manifest Manifest::load(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorKind::Io, "cannot open manifest " + file.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Io, "malformed manifest " + file.string() + ": " + e.what());
  }
  const nlohmann::json& rows = j.is_array() ? j : j.at("sequences");
  Manifest m;
  m.root = file.parent_path();
  for (const auto& row : rows) {
    ManifestEntry e;
    e.identity = row.at("identity").get<std::string>();
    e.role = row.value("role", std::string{});
    e.path = row.at("path").get<std::string>();
    e.split = row.value("split", std::string{"train"});
    e.start_time = row.value("start_time", 0.0);
    m.entries.push_back(std::move(e));
  }
  return m;
}

void Manifest::save(const fs::path& file) const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : entries) {
    rows.push_back({{"identity", e.identity},
                    {"role", e.role},
                    {"path", e.path},
                    {"split", e.split},
                    {"start_time", e.start_time}});
  }
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write manifest " + file.string());
  out << nlohmann::json{{"sequences", rows}}.dump(2) << '\n';
}

PersonSequence Manifest::load_sequence(const ManifestEntry& e) const {
  PersonSequence seq = read_sequence_file(resolve(e));
  seq.identity = e.identity;
  return seq;
}

std::map<std::string, std::vector<ManifestEntry>> Manifest::by_identity(const std::string& split) const {
  std::map<std::string, std::vector<ManifestEntry>> groups;
  for (const auto& e : entries) {
    if (e.split == split) groups[e.identity].push_back(e);
  }
  for (auto& [id, list] : groups) {
    std::stable_sort(list.begin(), list.end(),
                     [](const ManifestEntry& a, const ManifestEntry& b) { return a.start_time < b.start_time; });
  }
  return groups;
}

std::vector<std::string> Manifest::identities() const {
  std::set<std::string> ids;
  for (const auto& e : entries) ids.insert(e.identity);
  return {ids.begin(), ids.end()};
}

std::map<std::string, std::string> Manifest::identity_roles() const {
  std::map<std::string, std::string> roles;
  for (const auto& e : entries) roles.emplace(e.identity, e.role);
  return roles;
}

}  // namespace pcreid
