#pragma once

#include "pcreid/encoder.hpp"
#include "pcreid/geometry.hpp"
#include "pcreid/inference.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace pcreid {

inline constexpr double kForbidden = std::numeric_limits<double>::infinity();

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (row, col), ascending rows
  std::vector<int> unmatched_rows;
  std::vector<int> unmatched_cols;
  double cost = 0.0;
};

// Minimum-cost matching of maximum cardinality over the non-forbidden
// entries (kForbidden or any non-finite value). Rectangular input is fine.
Assignment solve_assignment(const Eigen::MatrixXd& costs);

struct Detection {
  Point3 centroid = Point3::Zero();
  PointCloud cloud;
  std::string truth;  // ground-truth identity when known
};

struct DetectionFrame {
  double t = 0.0;
  std::vector<Detection> detections;
};

using DetectionStream = std::vector<DetectionFrame>;

// Mean point of a cloud; the centroid every detection should carry.
Point3 cloud_centroid(const PointCloud& cloud);

struct TrackerConfig {
  double gate = 1.0;  // meters per elapsed frame step
  int init_frames = 1;  // frames during which unmatched detections open tracks
};

struct TrackPoint {
  int frame = 0;
  double t = 0.0;
  int detection = 0;  // index into that frame's detections
  Point3 centroid = Point3::Zero();
};

struct Track {
  int id = 0;
  std::string identity;  // known initial appearance, or "track-<id>"
  std::vector<TrackPoint> history;

  int last_frame() const { return history.empty() ? -1 : history.back().frame; }
};

struct TrackerState {
  std::vector<Track> tracks;
  int frame = -1;  // index of the last processed frame
  int unassigned = 0;  // detections dropped after the initialization window
};

// One frame of the memory-bank tracker: active tracks (seen in the previous
// frame) are matched first, remaining detections against the memory bank of
// lost tracks with the gate scaled by the elapsed frames.
void naive_step(TrackerState& state, const DetectionFrame& frame, const TrackerConfig& cfg = {});
TrackerState run_naive(const DetectionStream& stream, const TrackerConfig& cfg = {});

struct Chunk {
  int track = 0;  // track id
  std::vector<TrackPoint> points;
};

struct ChunkConfig {
  int target = 30;
  int min_length = 10;
  int max_length = 45;
};

struct ChunkStats {
  int dropped_runs = 0;
  int dropped_frames = 0;
};

// Cuts every track's contiguous frame runs into chunks: while more than
// max_length frames remain, emit `target`; then emit the rest if it has at
// least min_length frames, otherwise drop it.
std::vector<Chunk> chunk_stream(const std::vector<Track>& tracks, const ChunkConfig& cfg = {},
                                ChunkStats* stats = nullptr);

// (frame, detection) -> identity label
using FrameLabels = std::map<std::pair<int, int>, std::string>;

FrameLabels naive_labels(const TrackerState& state);

struct ChunkResult {
  int track = 0;
  int first_frame = 0;
  int last_frame = 0;
  int frames = 0;
  std::string identity;  // empty when skipped
  std::vector<int> view_votes;
};

struct ReidResult {
  std::vector<ChunkResult> chunks;
  FrameLabels labels;
  int skipped_chunks = 0;
  ChunkStats chunk_stats;
};

struct ReidConfig {
  TrackerConfig tracker;
  ChunkConfig chunks;
  RingConfig ring;
  bool metric_crop = true;
};

// Naive tracking, chunking, then each chunk rendered, embedded, scored
// against the gallery and labeled by majority vote.
ReidResult reid_track(const DetectionStream& stream, const Model& model, const Gallery& gallery,
                      const ReidConfig& cfg);

// Fraction of detections with a ground-truth identity (restricted to `only`
// when given) whose label matches it. Unlabeled detections count as wrong.
double identity_accuracy(const DetectionStream& stream, const FrameLabels& labels,
                         const std::vector<std::string>* only = nullptr, int from_frame = 0);

// JSON lines: {"t": s, "detections": [{"centroid": [x,y,z], "points": [[x,y,z], ...] | "cloud_path": p, "truth": id}]}
void write_detection_stream(const std::filesystem::path& path, const DetectionStream& stream);
DetectionStream read_detection_stream(const std::filesystem::path& path);

// JSON lines, one per labeled detection: {"frame", "t", "detection", "identity"}
void write_labels(const std::filesystem::path& path, const DetectionStream& stream, const FrameLabels& labels);

}  // namespace pcreid
