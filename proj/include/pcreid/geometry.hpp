#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace pcreid {

using Point3 = Eigen::Vector3d;

// World frame, meters, z up, z = 0 is the floor.
struct PointCloud {
  std::vector<Point3> points;

  bool empty() const noexcept { return points.empty(); }
  std::size_t size() const noexcept { return points.size(); }
};

struct PersonSequence {
  std::vector<PointCloud> frames;
  std::string identity;
  std::vector<double> timestamps;  // seconds, strictly increasing

  std::size_t length() const noexcept { return frames.size(); }
};

struct VirtualCamera {
  double azimuth = 0.0;  // radians
  Point3 position = Point3::Zero();
  double focal = 0.0;  // pixels
  int height = 0;
  int width = 0;
};

// Parameters of the equidistant camera ring around the subject axis.
struct RingConfig {
  int views = 8;
  double radius = 2.5;
  double camera_height = 1.0;
  int image_size = 64;

  bool operator==(const RingConfig&) const = default;
};

// Crop window of the metric renderer: floor to this height, in meters.
inline constexpr double kMetricCropTop = 2.0;

// H x W x 3 bytes, row-major, background pixels are exactly (0, 0, 0).
struct Image {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int h, int w) : height(h), width(w), rgb(static_cast<std::size_t>(h) * w * 3, 0) {}

  std::uint8_t* pixel(int y, int x) { return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  const std::uint8_t* pixel(int y, int x) const {
    return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
  bool occupied(int y, int x) const {
    const auto* p = pixel(y, x);
    return p[0] != 0 || p[1] != 0 || p[2] != 0;
  }
  bool operator==(const Image&) const = default;
};

// V x L rendered images of one sequence, stored view-major.
struct DepthViewStack {
  int views = 0;
  int frames = 0;
  int height = 0;
  int width = 0;
  RingConfig ring;
  bool metric_crop = true;
  std::vector<std::uint8_t> data;

  std::size_t image_bytes() const noexcept { return static_cast<std::size_t>(height) * width * 3; }
  std::span<std::uint8_t> image(int view, int frame) {
    return {data.data() + (static_cast<std::size_t>(view) * frames + frame) * image_bytes(), image_bytes()};
  }
  std::span<const std::uint8_t> image(int view, int frame) const {
    return {data.data() + (static_cast<std::size_t>(view) * frames + frame) * image_bytes(), image_bytes()};
  }
  Image image_copy(int view, int frame) const;
  void set_image(int view, int frame, const Image& img);

  // Keeps the listed frames (in the given order) for every view.
  DepthViewStack select_frames(std::span<const int> frame_indices) const;

  bool operator==(const DepthViewStack&) const = default;
};

// Translates x and y so the horizontal centroid is the origin; z is untouched.
PointCloud center_horizontal(const PointCloud& cloud);

PointCloud rotate_about_vertical(const PointCloud& cloud, double angle);

std::vector<VirtualCamera> build_view_ring(int v_count, double radius, double camera_height, int image_size);
std::vector<VirtualCamera> build_view_ring(const RingConfig& ring);

std::array<std::uint8_t, 3> depth_color(double normalized_depth);
// Inverse of depth_color for an occupied pixel.
double depth_from_color(const std::uint8_t* rgb);

Image render_view(const PointCloud& cloud, const VirtualCamera& camera, bool metric_crop);

DepthViewStack render_sequence(const PersonSequence& seq, const RingConfig& ring, bool metric_crop);

}  // namespace pcreid
