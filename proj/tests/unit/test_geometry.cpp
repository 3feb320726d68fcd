#include "pcreid/error.hpp"
#include "pcreid/geometry.hpp"
#include "pcreid/synthdata.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace pcreid;

namespace {

PointCloud standing_body(double height, std::uint64_t seed = 3) {
  BodyModel b;
  b.height = height;
  b.gait.arm_swing = 0.0;
  b.gait.leg_swing = 0.0;
  std::mt19937_64 rng(seed);
  return body_cloud(b, 0.0, {}, rng);
}

int occupied_count(const Image& img) {
  int n = 0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) n += img.occupied(y, x) ? 1 : 0;
  return n;
}

}  // namespace

TEST_SUITE("geometry") {
  TEST_CASE("center_horizontal subtracts the horizontal centroid only") {
    PointCloud c;
    c.points = {{1, 1, 0.5}, {3, 1, 1.5}};
    const auto out = center_horizontal(c);
    CHECK(out.points[0] == Point3(-1, 0, 0.5));
    CHECK(out.points[1] == Point3(1, 0, 1.5));
    CHECK(center_horizontal(out).points == out.points);
  }

  TEST_CASE("center_horizontal leaves the centroid at the origin") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-5, 5);
    PointCloud c;
    for (int i = 0; i < 1000; ++i) c.points.emplace_back(u(rng) + 3, u(rng) - 7, std::abs(u(rng)));
    const auto out = center_horizontal(c);
    double sx = 0, sy = 0;
    for (const auto& p : out.points) {
      sx += p.x();
      sy += p.y();
    }
    CHECK(std::abs(sx / 1000) < 1e-9);
    CHECK(std::abs(sy / 1000) < 1e-9);
    CHECK_THROWS_AS(center_horizontal(PointCloud{}), Error);
  }

  TEST_CASE("view ring layout") {
    const auto ring8 = build_view_ring(8, 2.5, 1.0, 64);
    REQUIRE(ring8.size() == 8);
    for (int v = 0; v < 8; ++v) CHECK(ring8[v].azimuth == doctest::Approx(v * std::numbers::pi / 4));
    const auto ring1 = build_view_ring(1, 2.5, 1.0, 64);
    REQUIRE(ring1.size() == 1);
    CHECK(ring1[0].azimuth == 0.0);
    const auto ring4 = build_view_ring(4, 2.5, 1.0, 32);
    for (const auto& cam : ring4) {
      CHECK(cam.focal == doctest::Approx(16.0 * 2.5 / 1.0));
      CHECK(cam.position.norm() == doctest::Approx(std::hypot(2.5, 1.0)));
    }
    CHECK_THROWS_AS(build_view_ring(0, 2.5, 1.0, 32), Error);
  }

  TEST_CASE("colormap endpoints and inverse") {
    CHECK(depth_color(0.0) == std::array<std::uint8_t, 3>{0, 0, 255});
    CHECK(depth_color(1.0) == std::array<std::uint8_t, 3>{255, 0, 0});
    CHECK(depth_color(0.5) == std::array<std::uint8_t, 3>{128, 255, 128});
    for (int i = 0; i <= 255; ++i) {
      const auto c = depth_color(i / 255.0);
      CHECK(depth_from_color(c.data()) == doctest::Approx(i / 255.0));
    }
  }

  TEST_CASE("metric crop boundary pixels") {
    const auto cams = build_view_ring(4, 2.5, 1.0, 32);
    PointCloud top;
    top.points = {{0, 0, 2.0}};
    PointCloud floor;
    floor.points = {{0, 0, 0.0}};
    const Image a = render_view(top, cams[0], true);
    const Image b = render_view(floor, cams[0], true);
    CHECK(occupied_count(a) == 1);
    CHECK(occupied_count(b) == 1);
    bool top_row = false, bottom_row = false;
    for (int x = 0; x < 32; ++x) {
      top_row = top_row || a.occupied(0, x);
      bottom_row = bottom_row || b.occupied(31, x);
    }
    CHECK(top_row);
    CHECK(bottom_row);
  }

  TEST_CASE("points above the crop window are discarded") {
    const auto cams = build_view_ring(4, 2.5, 1.0, 32);
    PointCloud c;
    c.points = {{0, 0, 2.3}};
    CHECK_THROWS_AS(render_view(c, cams[0], true), Error);
    c.points.push_back({0, 0, 1.0});
    CHECK(occupied_count(render_view(c, cams[0], true)) == 1);
  }

  TEST_CASE("background pixels are exactly zero") {
    const auto cams = build_view_ring(4, 2.5, 1.0, 32);
    PointCloud c;
    c.points = {{0, 0, 1.0}, {0.1, 0, 1.2}};
    const Image img = render_view(c, cams[1], true);
    CHECK(occupied_count(img) == 2);
    const auto body = standing_body(1.7);
    const Image full = render_view(center_horizontal(body), cams[0], true);
    for (int y = 0; y < 32; ++y) {
      for (int x = 0; x < 32; ++x) {
        const auto* p = full.pixel(y, x);
        if (!full.occupied(y, x)) CHECK((p[0] == 0 && p[1] == 0 && p[2] == 0));
      }
    }
  }

  TEST_CASE("nearer points store smaller normalized depth") {
    const auto cams = build_view_ring(1, 2.5, 1.0, 64);
    // Camera 0 sits on +x looking toward the axis; both points project onto column 32.
    PointCloud c;
    c.points = {{0.4, 0, 1.0}, {-0.4, 0, 0.5}};
    const Image img = render_view(c, cams[0], true);
    int near_row = -1, far_row = -1;
    for (int y = 0; y < 64; ++y) {
      if (!img.occupied(y, 32)) continue;
      (near_row < 0 ? near_row : far_row) = y;
    }
    REQUIRE(near_row >= 0);
    REQUIRE(far_row >= 0);
    CHECK(depth_from_color(img.pixel(near_row, 32)) < depth_from_color(img.pixel(far_row, 32)));
  }

  TEST_CASE("metric crop keeps stature, tight rescaling removes it") {
    const auto body = center_horizontal(standing_body(1.8));
    PointCloud small;
    for (const auto& p : body.points) small.points.push_back(0.8 * p);
    const auto cams = build_view_ring(4, 2.5, 1.0, 32);
    for (const auto& cam : cams) {
      const Image on_a = render_view(body, cam, true);
      const Image on_b = render_view(small, cam, true);
      CHECK_FALSE(on_a == on_b);
      const Image off_a = render_view(body, cam, false);
      const Image off_b = render_view(small, cam, false);
      int worst = 0;
      for (std::size_t i = 0; i < off_a.rgb.size(); ++i) worst = std::max(worst, std::abs(off_a.rgb[i] - off_b.rgb[i]));
      CHECK(worst <= 1);
    }
  }

  TEST_CASE("ring equivariance is exact") {
    for (int V : {4, 8}) {
      PersonSequence seq;
      for (int f = 0; f < 3; ++f) seq.frames.push_back(standing_body(1.6 + 0.1 * f, 10 + f));
      RingConfig ring;
      ring.views = V;
      ring.image_size = 32;
      for (int k = 1; k < V; ++k) {
        PersonSequence rotated = seq;
        for (auto& f : rotated.frames) f = rotate_about_vertical(f, 2 * std::numbers::pi * k / V);
        for (bool metric : {true, false}) {
          const auto a = render_sequence(seq, ring, metric);
          const auto b = render_sequence(rotated, ring, metric);
          for (int v = 0; v < V; ++v)
            for (int l = 0; l < 3; ++l) CHECK(b.image_copy(v, l) == a.image_copy(((v - k) % V + V) % V, l));
        }
      }
    }
  }

  TEST_CASE("stack shape and determinism") {
    PersonSequence seq;
    for (int f = 0; f < 10; ++f) seq.frames.push_back(standing_body(1.7, f));
    RingConfig ring;
    ring.views = 8;
    ring.image_size = 32;
    const auto a = render_sequence(seq, ring, true);
    CHECK(a.views * a.frames == 80);
    CHECK(a.data.size() == 80u * 32 * 32 * 3);
    CHECK(render_sequence(seq, ring, true) == a);
    const std::vector<int> pick = {3, 1};
    const auto sub = a.select_frames(pick);
    CHECK(sub.frames == 2);
    CHECK(sub.image_copy(5, 0) == a.image_copy(5, 3));
    PersonSequence with_empty = seq;
    with_empty.frames[4].points.clear();
    CHECK_THROWS_AS(render_sequence(with_empty, ring, true), Error);
  }
}
