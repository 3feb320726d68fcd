#include "pcreid/tracking.hpp"

#include "pcreid/dataset.hpp"
#include "pcreid/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

namespace pcreid {

namespace fs = std::filesystem;

namespace {

// Hungarian algorithm with potentials on a square matrix (rows <= cols
// formulation, 1-based internals). Returns col index per row.
std::vector<int> hungarian(const Eigen::MatrixXd& a) {
  const int n = static_cast<int>(a.rows());
  const int m = static_cast<int>(a.cols());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  std::vector<char> used(m + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> col_of(n, -1);
  for (int j = 1; j <= m; ++j)
    if (p[j] != 0) col_of[p[j] - 1] = j - 1;
  return col_of;
}

}  // namespace

Assignment solve_assignment(const Eigen::MatrixXd& costs) {
  Assignment out;
  const int rows = static_cast<int>(costs.rows());
  const int cols = static_cast<int>(costs.cols());
  if (rows == 0 || cols == 0) {
    for (int i = 0; i < rows; ++i) out.unmatched_rows.push_back(i);
    for (int j = 0; j < cols; ++j) out.unmatched_cols.push_back(j);
    return out;
  }
  // Forbidden entries cost more than any allowed matching can, so the solver
  // first maximizes the number of allowed pairs, then minimizes their cost.
  double allowed_sum = 0.0;
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      if (std::isfinite(costs(i, j))) allowed_sum += std::abs(costs(i, j));
  const double big = 2.0 * allowed_sum + 1.0;
  const int n = std::max(rows, cols);
  Eigen::MatrixXd square = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) square(i, j) = std::isfinite(costs(i, j)) ? costs(i, j) : big;
  const std::vector<int> col_of = hungarian(square);

  std::vector<char> col_used(static_cast<std::size_t>(cols), 0);
  for (int i = 0; i < rows; ++i) {
    const int j = col_of[static_cast<std::size_t>(i)];
    if (j >= 0 && j < cols && std::isfinite(costs(i, j))) {
      out.pairs.emplace_back(i, j);
      out.cost += costs(i, j);
      col_used[static_cast<std::size_t>(j)] = 1;
    } else {
      out.unmatched_rows.push_back(i);
    }
  }
  for (int j = 0; j < cols; ++j)
    if (!col_used[static_cast<std::size_t>(j)]) out.unmatched_cols.push_back(j);
  return out;
}

Point3 cloud_centroid(const PointCloud& cloud) {
  if (cloud.empty()) throw Error(ErrorKind::EmptyCloud, "detection without points");
  Point3 c = Point3::Zero();
  for (const auto& p : cloud.points) c += p;
  return c / static_cast<double>(cloud.size());
}

void naive_step(TrackerState& state, const DetectionFrame& frame, const TrackerConfig& cfg) {
  const int f = ++state.frame;
  const int D = static_cast<int>(frame.detections.size());
  // Lexicographic position order keeps the result independent of input order.
  std::vector<int> order(static_cast<std::size_t>(D));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const Point3& pa = frame.detections[static_cast<std::size_t>(a)].centroid;
    const Point3& pb = frame.detections[static_cast<std::size_t>(b)].centroid;
    return std::lexicographical_compare(pa.data(), pa.data() + 3, pb.data(), pb.data() + 3);
  });

  std::vector<int> active, bank;
  for (int t = 0; t < static_cast<int>(state.tracks.size()); ++t) {
    const int last = state.tracks[static_cast<std::size_t>(t)].last_frame();
    (last == f - 1 ? active : bank).push_back(t);
  }

  std::vector<int> pending = order;  // detection indices still unassigned
  const auto match = [&](const std::vector<int>& track_ids) {
    if (track_ids.empty() || pending.empty()) return;
    Eigen::MatrixXd c(static_cast<long>(track_ids.size()), static_cast<long>(pending.size()));
    for (std::size_t r = 0; r < track_ids.size(); ++r) {
      const Track& tr = state.tracks[static_cast<std::size_t>(track_ids[r])];
      const double gate = cfg.gate * (f - tr.last_frame());
      for (std::size_t k = 0; k < pending.size(); ++k) {
        const double d =
            (frame.detections[static_cast<std::size_t>(pending[k])].centroid - tr.history.back().centroid).norm();
        c(static_cast<long>(r), static_cast<long>(k)) = d > gate ? kForbidden : d;
      }
    }
    const Assignment a = solve_assignment(c);
    std::vector<char> taken(pending.size(), 0);
    for (const auto& [r, k] : a.pairs) {
      const int det = pending[static_cast<std::size_t>(k)];
      state.tracks[static_cast<std::size_t>(track_ids[static_cast<std::size_t>(r)])].history.push_back(
          {f, frame.t, det, frame.detections[static_cast<std::size_t>(det)].centroid});
      taken[static_cast<std::size_t>(k)] = 1;
    }
    std::vector<int> rest;
    for (std::size_t k = 0; k < pending.size(); ++k)
      if (!taken[k]) rest.push_back(pending[k]);
    pending = std::move(rest);
  };
  match(active);
  match(bank);

  for (int det : pending) {
    if (f < cfg.init_frames) {
      Track tr;
      tr.id = static_cast<int>(state.tracks.size());
      const auto& d = frame.detections[static_cast<std::size_t>(det)];
      tr.identity = d.truth.empty() ? "track-" + std::to_string(tr.id) : d.truth;
      tr.history.push_back({f, frame.t, det, d.centroid});
      state.tracks.push_back(std::move(tr));
    } else {
      ++state.unassigned;
    }
  }
}

TrackerState run_naive(const DetectionStream& stream, const TrackerConfig& cfg) {
  TrackerState state;
  for (const auto& frame : stream) naive_step(state, frame, cfg);
  return state;
}

std::vector<Chunk> chunk_stream(const std::vector<Track>& tracks, const ChunkConfig& cfg, ChunkStats* stats) {
  std::vector<Chunk> chunks;
  ChunkStats local;
  const auto emit_run = [&](int track, const std::vector<TrackPoint>& run) {
    std::size_t pos = 0;
    while (run.size() - pos > static_cast<std::size_t>(cfg.max_length)) {
      chunks.push_back({track, {run.begin() + pos, run.begin() + pos + cfg.target}});
      pos += static_cast<std::size_t>(cfg.target);
    }
    const std::size_t rest = run.size() - pos;
    if (rest >= static_cast<std::size_t>(cfg.min_length)) {
      chunks.push_back({track, {run.begin() + pos, run.end()}});
    } else if (rest > 0) {
      ++local.dropped_runs;
      local.dropped_frames += static_cast<int>(rest);
    }
  };
  for (const auto& tr : tracks) {
    std::vector<TrackPoint> run;
    for (const auto& p : tr.history) {
      if (!run.empty() && p.frame != run.back().frame + 1) {
        emit_run(tr.id, run);
        run.clear();
      }
      run.push_back(p);
    }
    if (!run.empty()) emit_run(tr.id, run);
  }
  if (stats != nullptr) *stats = local;
  return chunks;
}

FrameLabels naive_labels(const TrackerState& state) {
  FrameLabels labels;
  for (const auto& tr : state.tracks)
    for (const auto& p : tr.history) labels[{p.frame, p.detection}] = tr.identity;
  return labels;
}

ReidResult reid_track(const DetectionStream& stream, const Model& model, const Gallery& gallery,
                      const ReidConfig& cfg) {
  const TrackerState state = run_naive(stream, cfg.tracker);
  ReidResult out;
  const std::vector<Chunk> chunks = chunk_stream(state.tracks, cfg.chunks, &out.chunk_stats);
  for (const auto& chunk : chunks) {
    ChunkResult cr;
    cr.track = chunk.track;
    cr.first_frame = chunk.points.front().frame;
    cr.last_frame = chunk.points.back().frame;
    cr.frames = static_cast<int>(chunk.points.size());
    PersonSequence seq;
    for (const auto& p : chunk.points) {
      seq.frames.push_back(stream[static_cast<std::size_t>(p.frame)].detections[static_cast<std::size_t>(p.detection)].cloud);
      seq.timestamps.push_back(p.t);
    }
    try {
      const DepthViewStack stack = render_sequence(seq, cfg.ring, cfg.metric_crop);
      const auto scores = score_probe(gallery, encode_sequence(stack, model));
      const VoteResult vote = majority_vote(scores);
      cr.identity = gallery.identities[static_cast<std::size_t>(vote.predicted)];
      cr.view_votes = vote.view_votes;
      for (const auto& p : chunk.points) out.labels[{p.frame, p.detection}] = cr.identity;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::EmptyRender && e.kind() != ErrorKind::EmptyCloud) throw;
      ++out.skipped_chunks;
    }
    out.chunks.push_back(std::move(cr));
  }
  return out;
}

double identity_accuracy(const DetectionStream& stream, const FrameLabels& labels, const std::vector<std::string>* only,
                         int from_frame) {
  long total = 0, correct = 0;
  for (int f = std::max(0, from_frame); f < static_cast<int>(stream.size()); ++f) {
    const auto& dets = stream[static_cast<std::size_t>(f)].detections;
    for (int d = 0; d < static_cast<int>(dets.size()); ++d) {
      const std::string& truth = dets[static_cast<std::size_t>(d)].truth;
      if (truth.empty()) continue;
      if (only != nullptr && std::find(only->begin(), only->end(), truth) == only->end()) continue;
      ++total;
      const auto it = labels.find({f, d});
      if (it != labels.end() && it->second == truth) ++correct;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

void write_detection_stream(const fs::path& path, const DetectionStream& stream) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  for (const auto& frame : stream) {
    nlohmann::json line;
    line["t"] = frame.t;
    line["detections"] = nlohmann::json::array();
    for (const auto& d : frame.detections) {
      nlohmann::json dj;
      dj["centroid"] = {d.centroid.x(), d.centroid.y(), d.centroid.z()};
      nlohmann::json pts = nlohmann::json::array();
      for (const auto& p : d.cloud.points)
        pts.push_back({static_cast<float>(p.x()), static_cast<float>(p.y()), static_cast<float>(p.z())});
      dj["points"] = std::move(pts);
      if (!d.truth.empty()) dj["truth"] = d.truth;
      line["detections"].push_back(std::move(dj));
    }
    out << line.dump() << '\n';
  }
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

DetectionStream read_detection_stream(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  DetectionStream stream;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      DetectionFrame frame;
      frame.t = j.at("t").get<double>();
      for (const auto& dj : j.at("detections")) {
        Detection d;
        if (dj.contains("points")) {
          for (const auto& p : dj.at("points")) {
            // Points pass through f32 like the sequence files do.
            d.cloud.points.emplace_back(static_cast<float>(p.at(0).get<double>()),
                                        static_cast<float>(p.at(1).get<double>()),
                                        std::max(0.0f, static_cast<float>(p.at(2).get<double>())));
          }
        } else if (dj.contains("cloud_path")) {
          fs::path cp = dj.at("cloud_path").get<std::string>();
          if (cp.is_relative()) cp = path.parent_path() / cp;
          const PersonSequence s = read_sequence_file(cp);
          if (s.frames.empty()) throw Error(ErrorKind::Io, "empty cloud file " + cp.string());
          d.cloud = s.frames.front();
        }
        if (dj.contains("centroid")) {
          const auto& c = dj.at("centroid");
          d.centroid = Point3(c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>());
        } else {
          d.centroid = cloud_centroid(d.cloud);
        }
        d.truth = dj.value("truth", std::string());
        frame.detections.push_back(std::move(d));
      }
      if (!stream.empty() && frame.t <= stream.back().t) {
        throw Error(ErrorKind::Io, "timestamps must increase");
      }
      stream.push_back(std::move(frame));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::Io, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.kind(), path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return stream;
}

void write_labels(const fs::path& path, const DetectionStream& stream, const FrameLabels& labels) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  for (const auto& [key, identity] : labels) {
    nlohmann::json j = {{"frame", key.first},
                        {"t", stream.at(static_cast<std::size_t>(key.first)).t},
                        {"detection", key.second},
                        {"identity", identity}};
    out << j.dump() << '\n';
  }
}

}  // namespace pcreid
