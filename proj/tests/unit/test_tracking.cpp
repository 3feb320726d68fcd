#include "oracles.hpp"

#include "pcreid/error.hpp"
#include "pcreid/synthdata.hpp"
#include "pcreid/tracking.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

using namespace pcreid;
namespace fs = std::filesystem;

namespace {

Detection at(double x, double y, const std::string& truth = "") {
  Detection d;
  d.cloud.points = {{x - 0.1, y, 0.5}, {x + 0.1, y, 1.5}};
  d.centroid = cloud_centroid(d.cloud);
  d.truth = truth;
  return d;
}

Track run_track(int id, int first, int count) {
  Track t;
  t.id = id;
  for (int f = first; f < first + count; ++f) t.history.push_back({f, f / 15.0, 0, Point3::Zero()});
  return t;
}

std::vector<int> chunk_sizes(const std::vector<Chunk>& chunks) {
  std::vector<int> out;
  for (const auto& c : chunks) out.push_back(static_cast<int>(c.points.size()));
  return out;
}

}  // namespace

TEST_SUITE("tracking") {
  TEST_CASE("assignment examples") {
    Eigen::MatrixXd a(2, 2);
    a << 1, 2, 2, 1;
    const auto r = solve_assignment(a);
    CHECK(r.pairs == std::vector<std::pair<int, int>>{{0, 0}, {1, 1}});
    CHECK(r.cost == 2.0);
    const auto z = solve_assignment(Eigen::MatrixXd::Zero(1, 1));
    CHECK(z.pairs.size() == 1);
    CHECK(z.cost == 0.0);
    CHECK(solve_assignment(Eigen::MatrixXd(0, 3)).unmatched_cols.size() == 3);
  }

  TEST_CASE("forbidden entries are never used") {
    Eigen::MatrixXd a(2, 3);
    a << kForbidden, 5, kForbidden, kForbidden, 1, kForbidden;
    const auto r = solve_assignment(a);
    REQUIRE(r.pairs.size() == 1);
    CHECK(r.pairs[0] == std::pair<int, int>{1, 1});
    CHECK(r.unmatched_rows == std::vector<int>{0});
    CHECK(r.unmatched_cols == std::vector<int>{0, 2});
    // Cardinality comes before cost.
    Eigen::MatrixXd b(2, 2);
    b << 0, 1, 100, kForbidden;
    const auto s = solve_assignment(b);
    CHECK(s.pairs.size() == 2);
    CHECK(s.cost == 101.0);
  }

  TEST_CASE("assignment agrees with exhaustive search") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 300; ++trial) {
      const int rows = 1 + static_cast<int>(rng() % 6);
      const int cols = 1 + static_cast<int>(rng() % 6);
      Eigen::MatrixXd c(rows, cols);
      for (long i = 0; i < c.size(); ++i) c.data()[i] = rng() % 5 == 0 ? kForbidden : static_cast<double>(rng() % 20);
      const auto got = solve_assignment(c);
      const auto ref = testing::brute_assignment(c);
      CHECK(static_cast<int>(got.pairs.size()) == ref.cardinality);
      CHECK(got.cost == ref.cost);
      for (const auto& [r, k] : got.pairs) CHECK(std::isfinite(c(r, k)));
      CHECK(got.pairs.size() + got.unmatched_rows.size() == static_cast<std::size_t>(rows));
      CHECK(got.pairs.size() + got.unmatched_cols.size() == static_cast<std::size_t>(cols));
    }
  }

  TEST_CASE("single detection within the gate is matched") {
    DetectionStream s(2);
    s[0].t = 0;
    s[0].detections = {at(0, 0, "a")};
    s[1].t = 0.1;
    s[1].detections = {at(0.3, 0.2)};
    const auto st = run_naive(s);
    REQUIRE(st.tracks.size() == 1);
    CHECK(st.tracks[0].history.size() == 2);
    CHECK(st.tracks[0].identity == "a");
    CHECK(st.unassigned == 0);
  }

  TEST_CASE("memory bank gate grows with elapsed frames") {
    DetectionStream s;
    for (int f = 0; f < 5; ++f) {
      DetectionFrame fr;
      fr.t = f;
      if (f == 0) fr.detections = {at(0, 0, "a")};
      if (f == 4) fr.detections = {at(3.5, 0)};  // 4 frames later, 3.5 m away: inside 4 x 1 m
      s.push_back(fr);
    }
    const auto st = run_naive(s);
    REQUIRE(st.tracks.size() == 1);
    CHECK(st.tracks[0].history.size() == 2);
    s[4].detections = {at(4.5, 0)};
    CHECK(run_naive(s).unassigned == 1);
  }

  TEST_CASE("far-apart walkers keep their identities") {
    ScenarioSpec spec;
    CrossingSpec cs;
    cs.dropout_length = 0;
    cs.lateral_offset = 6.0;
    cs.frames = 60;
    const auto sc = generate_crossing_scenario(spec, cs);
    const auto labels = naive_labels(run_naive(sc.stream));
    CHECK(identity_accuracy(sc.stream, labels) == 1.0);
  }

  TEST_CASE("tracking ignores detection order within a frame") {
    ScenarioSpec spec;
    CrossingSpec cs;
    cs.frames = 60;
    cs.bystanders = 2;
    const auto sc = generate_crossing_scenario(spec, cs);
    DetectionStream shuffled = sc.stream;
    std::mt19937_64 rng(3);
    std::vector<std::vector<int>> perms;
    for (auto& f : shuffled) {
      std::vector<int> p(f.detections.size());
      std::iota(p.begin(), p.end(), 0);
      std::shuffle(p.begin(), p.end(), rng);
      std::vector<Detection> d;
      for (int i : p) d.push_back(f.detections[i]);
      f.detections = d;
      perms.push_back(p);
    }
    const auto a = naive_labels(run_naive(sc.stream));
    const auto b = naive_labels(run_naive(shuffled));
    CHECK(a.size() == b.size());
    for (const auto& [key, id] : b) {
      const int original = perms[key.first][key.second];
      CHECK(a.at({key.first, original}) == id);
    }
  }

  TEST_CASE("chunking rules") {
    ChunkStats st;
    CHECK(chunk_sizes(chunk_stream({run_track(0, 0, 90)}, {}, &st)) == std::vector<int>{30, 30, 30});
    CHECK(chunk_sizes(chunk_stream({run_track(0, 0, 50)})) == std::vector<int>{30, 20});
    CHECK(chunk_sizes(chunk_stream({run_track(0, 0, 45)})) == std::vector<int>{45});
    CHECK(chunk_stream({run_track(0, 0, 9)}, {}, &st).empty());
    CHECK(st.dropped_runs == 1);
    CHECK(st.dropped_frames == 9);
    // A gap splits a track into separate runs.
    Track gap = run_track(1, 0, 12);
    const Track later = run_track(1, 20, 15);
    gap.history.insert(gap.history.end(), later.history.begin(), later.history.end());
    const auto chunks = chunk_stream({gap});
    CHECK(chunk_sizes(chunks) == std::vector<int>{12, 15});
    CHECK(chunks[1].points.front().frame == 20);
  }

  TEST_CASE("identity accuracy") {
    DetectionStream s(2);
    s[0].detections = {at(0, 0, "a"), at(5, 0, "b")};
    s[1].detections = {at(0, 0, "a"), at(5, 0, "b"), at(9, 9)};
    FrameLabels l = {{{0, 0}, "a"}, {{0, 1}, "a"}, {{1, 0}, "a"}};
    CHECK(identity_accuracy(s, l) == doctest::Approx(0.5));
    const std::vector<std::string> only = {"a"};
    CHECK(identity_accuracy(s, l, &only) == 1.0);
    CHECK(identity_accuracy(s, l, nullptr, 1) == doctest::Approx(0.5));
  }

  TEST_CASE("detection stream files") {
    const fs::path dir = fs::temp_directory_path() / "pcreid_unit_stream";
    fs::remove_all(dir);
    DetectionStream s(2);
    s[0].t = 0.0;
    s[0].detections = {at(0.25, 1, "a")};
    s[1].t = 0.5;
    s[1].detections = {at(0.5, 1, "a"), at(3, 3)};
    write_detection_stream(dir / "s.jsonl", s);
    const auto back = read_detection_stream(dir / "s.jsonl");
    REQUIRE(back.size() == 2);
    CHECK(back[1].detections.size() == 2);
    CHECK(back[1].detections[0].truth == "a");
    CHECK(back[1].detections[1].truth.empty());
    CHECK((back[1].detections[0].centroid - cloud_centroid(back[1].detections[0].cloud)).norm() < 1e-6);

    PersonSequence cloud;
    cloud.frames = {at(1, 1).cloud};
    cloud.timestamps = {0.0};
    write_sequence_file(dir / "c.pseq", cloud);
    std::ofstream(dir / "ref.jsonl") << R"({"t": 0, "detections": [{"cloud_path": "c.pseq"}]})" << "\n";
    const auto ref = read_detection_stream(dir / "ref.jsonl");
    CHECK(ref[0].detections[0].centroid.x() == doctest::Approx(1.0));

    std::ofstream(dir / "bad.jsonl") << R"({"t": 1, "detections": []})" << "\n" << R"({"t": 1, "detections": []})" << "\n";
    CHECK_THROWS_AS(read_detection_stream(dir / "bad.jsonl"), Error);

    write_labels(dir / "labels.jsonl", s, {{{1, 1}, "x"}});
    std::ifstream in(dir / "labels.jsonl");
    std::string line;
    std::getline(in, line);
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("frame") == 1);
    CHECK(j.at("identity") == "x");
  }

  TEST_CASE("a stationary person keeps one label through every chunk") {
    EncoderConfig ec;
    ec.base_channels = 4;
    ec.part_count = 2;
    ec.embed_dim = 8;
    ec.image_size = 32;
    const Model model = Model::init(ec, 5);
    ScenarioSpec spec;
    spec.identities = 2;
    const auto bodies = sample_bodies(spec);
    RingConfig ring;
    ring.views = 4;
    ring.image_size = 32;
    std::map<std::string, std::vector<TimedStack>> gal;
    for (int i = 0; i < 2; ++i) {
      for (int s = 0; s < 3; ++s) {
        std::mt19937_64 rng(i * 10 + s);
        gal[identity_name(i)].push_back({double(s), render_sequence(generate_sequence(bodies[i], spec, rng, 5), ring, true)});
      }
    }
    const Gallery g = build_gallery(model, gal, 3, GalleryMode::Svm);
    std::mt19937_64 rng(1);
    const PointCloud still = body_cloud(bodies[0], 0.0, {}, rng);
    DetectionStream stream;
    for (int f = 0; f < 100; ++f) {
      DetectionFrame fr;
      fr.t = f / 15.0;
      Detection d;
      d.cloud = still;
      d.centroid = cloud_centroid(still);
      d.truth = identity_name(0);
      fr.detections.push_back(d);
      stream.push_back(fr);
    }
    ReidConfig rc;
    rc.ring = ring;
    const auto res = reid_track(stream, model, g, rc);
    CHECK(res.chunks.size() == 3);
    std::set<std::string> ids;
    for (const auto& c : res.chunks) ids.insert(c.identity);
    CHECK(ids.size() == 1);
    CHECK(res.labels.size() == 100);
  }
}
