#include "pcreid/dataset.hpp"
#include "pcreid/error.hpp"
#include "pcreid/synthdata.hpp"
#include "pcreid/tracking.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <numbers>

using namespace pcreid;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::map<std::string, std::string> dir_contents(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return out;
}

}  // namespace

TEST_SUITE("synthdata") {
  TEST_CASE("bodies are deterministic and within range") {
    ScenarioSpec spec;
    std::mt19937_64 a(5), b(5);
    CHECK(sample_body(a, spec) == sample_body(b, spec));
    std::mt19937_64 rng(6);
    for (int i = 0; i < 200; ++i) {
      const BodyModel m = sample_body(rng, spec);
      CHECK(m.height >= 1.50);
      CHECK(m.height <= 2.00);
      for (double v : m.proportions.as_vector()) CHECK(v > 0.0);
      CHECK(m.gait.step_frequency > 0.0);
    }
    CHECK(sample_bodies(spec) == sample_bodies(spec));
  }

  TEST_CASE("ten bodies are at least 2 cm apart in height") {
    for (std::uint64_t seed : {1, 2, 3, 7, 99}) {
      ScenarioSpec spec;
      spec.seed = seed;
      const auto bodies = sample_bodies(spec);
      REQUIRE(bodies.size() == 10);
      for (std::size_t i = 0; i < bodies.size(); ++i)
        for (std::size_t j = i + 1; j < bodies.size(); ++j)
          CHECK(std::abs(bodies[i].height - bodies[j].height) >= 0.02 - 1e-12);
    }
  }

  TEST_CASE("scale twins") {
    ScenarioSpec spec;
    std::mt19937_64 rng(3);
    const auto [small, tall] = make_scale_twins(sample_body(rng, spec));
    CHECK(small.height == doctest::Approx(1.60));
    CHECK(tall.height == doctest::Approx(1.84));
    CHECK(small.proportions.as_vector() == tall.proportions.as_vector());
    CHECK(small.gait == tall.gait);

    spec.identities = 4;
    spec.scale_twins = true;
    const auto bodies = sample_bodies(spec);
    REQUIRE(bodies.size() == 4);
    CHECK(bodies[0].proportions == bodies[1].proportions);
    CHECK(bodies[2].proportions == bodies[3].proportions);
    CHECK(bodies[0].height != bodies[1].height);
  }

  TEST_CASE("a 90 degree occlusion sector removes about a quarter of the points") {
    ScenarioSpec spec;
    std::mt19937_64 rng(8);
    const BodyModel body = sample_body(rng, spec);
    std::uniform_real_distribution<double> angle(0.0, 2 * std::numbers::pi);
    double full = 0, cut = 0;
    for (int f = 0; f < 100; ++f) {
      const double t = f / 15.0;
      FrameOptions open;
      full += static_cast<double>(body_cloud(body, t, open, rng).points.size());
      FrameOptions blocked;
      blocked.occluded = true;
      blocked.occlusion_start = angle(rng);
      blocked.occlusion_width = std::numbers::pi / 2;
      cut += static_cast<double>(body_cloud(body, t, blocked, rng).points.size());
    }
    const double drop = 1.0 - cut / full;
    MESSAGE("occlusion drop " << drop);
    CHECK(drop >= 0.15);
    CHECK(drop <= 0.35);
  }

  TEST_CASE("sequences have exactly the requested frames") {
    ScenarioSpec spec;
    spec.noise_sigma = 0.01;
    spec.occlusion_probability = 0.5;
    std::mt19937_64 rng(2);
    const BodyModel body = sample_body(rng, spec);
    for (int frames : {10, 23, 45}) {
      const PersonSequence s = generate_sequence(body, spec, rng, frames, 3.0);
      CHECK(s.length() == static_cast<std::size_t>(frames));
      CHECK(s.timestamps.front() == 3.0);
      for (std::size_t i = 1; i < s.timestamps.size(); ++i)
        CHECK(s.timestamps[i] - s.timestamps[i - 1] == doctest::Approx(1.0 / 15.0));
      for (const auto& f : s.frames) CHECK_FALSE(f.points.empty());
    }
  }

  TEST_CASE("static gait without noise or occlusion repeats every stride") {
    ScenarioSpec spec;
    std::mt19937_64 rng(4);
    BodyModel body = sample_body(rng, spec);
    body.gait.arm_swing = 0.0;
    body.gait.leg_swing = 0.0;
    std::mt19937_64 a(1), b(1);
    const PointCloud x = body_cloud(body, 0.0, {}, a);
    const PointCloud y = body_cloud(body, 2.0 / body.gait.step_frequency, {}, b);
    REQUIRE(x.points.size() == y.points.size());
    for (std::size_t i = 0; i < x.points.size(); ++i) CHECK((x.points[i] - y.points[i]).norm() < 1e-9);
  }

  TEST_CASE("datasets") {
    const fs::path root = fs::temp_directory_path() / "pcreid_unit_synth";
    fs::remove_all(root);
    ScenarioSpec spec;
    spec.seed = 21;
    const Manifest m = generate_dataset(spec, root / "a");
    CHECK(m.entries.size() == 400);
    CHECK(m.identities().size() == 10);
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(root / "a" / "seqs")) files += e.path().extension() == ".pseq" ? 1 : 0;
    CHECK(files == 400);
    CHECK(Manifest::load(root / "a" / "manifest.json").entries == m.entries);

    std::map<std::string, std::map<std::string, int>> per;
    for (const auto& e : m.entries) ++per[e.identity][e.split];
    for (const auto& [id, splits] : per) {
      CHECK(splits.at("gallery") == 10);
      CHECK(splits.at("probe") == 10);
      CHECK(splits.at("train") == 20);
    }
    // Gallery sequences come first in time, probes last.
    for (const auto& [id, gal] : m.by_identity("gallery")) {
      const auto probes = m.by_identity("probe").at(id);
      const auto train = m.by_identity("train").at(id);
      CHECK(gal.back().start_time < train.front().start_time);
      CHECK(train.back().start_time < probes.front().start_time);
    }
    // Roles rotate through the six names.
    const auto roles = m.identity_roles();
    const auto ids = m.identities();
    for (std::size_t i = 0; i < ids.size(); ++i) CHECK(roles.at(ids[i]) == role_names()[i % 6]);

    const Manifest again = generate_dataset(spec, root / "b");
    CHECK(dir_contents(root / "a") == dir_contents(root / "b"));
    fs::remove_all(root);
  }

  TEST_CASE("invalid scenarios are rejected") {
    ScenarioSpec spec;
    spec.frames_min = 5;
    CHECK_THROWS_AS(spec.validate(), Error);
    spec = ScenarioSpec{};
    spec.frames_max = 46;
    CHECK_THROWS_AS(spec.validate(), Error);
    spec = ScenarioSpec{};
    spec.identities = 0;
    CHECK_THROWS_AS(spec.validate(), Error);
    spec = ScenarioSpec{};
    CHECK(ScenarioSpec::from_json(spec.to_json()).to_json() == spec.to_json());
  }

  TEST_CASE("crossing scenarios") {
    ScenarioSpec spec;
    CrossingSpec cs;
    const CrossingScenario with = generate_crossing_scenario(spec, cs);
    REQUIRE(with.crossers.size() == 2);
    CHECK(with.stream.size() == static_cast<std::size_t>(cs.frames));
    for (std::size_t f = 1; f < with.stream.size(); ++f)
      CHECK(with.stream[f].t - with.stream[f - 1].t == doctest::Approx(1.0 / spec.fps));
    for (int f = cs.dropout_start; f < cs.dropout_start + cs.dropout_length; ++f)
      CHECK(with.stream[static_cast<std::size_t>(f)].detections.empty());

    const int after = cs.dropout_start + cs.dropout_length;
    const double broken = identity_accuracy(with.stream, naive_labels(run_naive(with.stream)), &with.crossers, after);
    MESSAGE("naive accuracy after the dropout " << broken);
    CHECK(broken < 0.60);

    cs.dropout_length = 0;
    const CrossingScenario clean = generate_crossing_scenario(spec, cs);
    CHECK(identity_accuracy(clean.stream, naive_labels(run_naive(clean.stream)), &clean.crossers) == 1.0);

    cs.bystanders = 3;
    const CrossingScenario busy = generate_crossing_scenario(spec, cs);
    CHECK(busy.stream[0].detections.size() == 5);
    CHECK(identity_accuracy(busy.stream, naive_labels(run_naive(busy.stream))) == 1.0);
  }

  TEST_CASE("non-twin identities render differently") {
    ScenarioSpec spec;
    const auto bodies = sample_bodies(spec);
    const auto cams = build_view_ring(4, 2.5, 1.0, 32);
    std::vector<Image> renders;
    for (const auto& b : bodies) {
      std::mt19937_64 rng(1);
      BodyModel still = b;
      still.gait.arm_swing = still.gait.leg_swing = 0.0;
      renders.push_back(render_view(center_horizontal(body_cloud(still, 0.0, {}, rng)), cams[0], true));
    }
    for (std::size_t i = 0; i < renders.size(); ++i)
      for (std::size_t j = i + 1; j < renders.size(); ++j) {
        double diff = 0;
        for (std::size_t k = 0; k < renders[i].rgb.size(); ++k)
          diff += std::abs(int(renders[i].rgb[k]) - int(renders[j].rgb[k]));
        CHECK(diff / static_cast<double>(renders[i].rgb.size()) > 0.5);
      }
  }
}
