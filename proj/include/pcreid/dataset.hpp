#pragma once

#include "pcreid/geometry.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace pcreid {

// Binary sequence file, little-endian:
//   "PSEQ", u32 frame count, then per frame: u64 timestamp [us], u32 point count, count x 3 f32.
void write_sequence_file(const std::filesystem::path& path, const PersonSequence& seq);
PersonSequence read_sequence_file(const std::filesystem::path& path);

// Raw file content hash (FNV-1a 64), used as a cache key.
std::uint64_t hash_bytes(std::span<const std::uint8_t> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t hash_file(const std::filesystem::path& path);
std::string hex64(std::uint64_t value);

struct ManifestEntry {
  std::string identity;
  std::string role;
  std::string path;  // relative to the manifest directory
  std::string split;  // train | gallery | probe
  double start_time = 0.0;  // first frame timestamp, seconds

  bool operator==(const ManifestEntry&) const = default;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  std::filesystem::path root;  // directory the relative paths resolve against

  static Manifest load(const std::filesystem::path& file);
  void save(const std::filesystem::path& file) const;

  std::filesystem::path resolve(const ManifestEntry& e) const { return root / e.path; }
  PersonSequence load_sequence(const ManifestEntry& e) const;

  // Entries of one split grouped by identity, each group ordered by start time.
  std::map<std::string, std::vector<ManifestEntry>> by_identity(const std::string& split) const;
  std::vector<std::string> identities() const;  // sorted, unique
  std::map<std::string, std::string> identity_roles() const;
};

}  // namespace pcreid
