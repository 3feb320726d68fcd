#include "pcreid/geometry.hpp"

#include "pcreid/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace pcreid {

namespace {

// Non-metric mode stretches each frame's vertical extent onto this band.
constexpr double kFillBottom = 0.05;
constexpr double kFillTop = 1.95;
constexpr double kNearPlane = 1e-6;

PointCloud fill_crop_window(const PointCloud& cloud) {
  double zmin = std::numeric_limits<double>::infinity();
  double zmax = -std::numeric_limits<double>::infinity();
  for (const auto& p : cloud.points) {
    zmin = std::min(zmin, p.z());
    zmax = std::max(zmax, p.z());
  }
  PointCloud out;
  out.points.reserve(cloud.size());
  const double extent = zmax - zmin;
  if (extent <= 0.0) {
    for (const auto& p : cloud.points) out.points.emplace_back(p.x(), p.y(), 0.5 * (kFillBottom + kFillTop));
    return out;
  }
  const double scale = (kFillTop - kFillBottom) / extent;
  for (const auto& p : cloud.points) {
    out.points.emplace_back(p.x() * scale, p.y() * scale, (p.z() - zmin) * scale + kFillBottom);
  }
  return out;
}

}  // namespace

Image DepthViewStack::image_copy(int view, int frame) const {
  Image img(height, width);
  auto src = image(view, frame);
  std::copy(src.begin(), src.end(), img.rgb.begin());
  return img;
}

void DepthViewStack::set_image(int view, int frame, const Image& img) {
  auto dst = image(view, frame);
  std::copy(img.rgb.begin(), img.rgb.end(), dst.begin());
}

DepthViewStack DepthViewStack::select_frames(std::span<const int> frame_indices) const {
  DepthViewStack out;
  out.views = views;
  out.frames = static_cast<int>(frame_indices.size());
  out.height = height;
  out.width = width;
  out.ring = ring;
  out.metric_crop = metric_crop;
  out.data.resize(static_cast<std::size_t>(out.views) * out.frames * image_bytes());
  for (int v = 0; v < views; ++v) {
    for (int i = 0; i < out.frames; ++i) {
      auto src = image(v, frame_indices[i]);
      std::copy(src.begin(), src.end(), out.image(v, i).begin());
    }
  }
  return out;
}

PointCloud center_horizontal(const PointCloud& cloud) {
  if (cloud.empty()) throw Error(ErrorKind::EmptyCloud, "cannot center an empty point cloud");
  double sx = 0.0;
  double sy = 0.0;
  for (const auto& p : cloud.points) {
    sx += p.x();
    sy += p.y();
  }
  const double n = static_cast<double>(cloud.size());
  const double cx = sx / n;
  const double cy = sy / n;
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.emplace_back(p.x() - cx, p.y() - cy, p.z());
  return out;
}

PointCloud rotate_about_vertical(const PointCloud& cloud, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.emplace_back(c * p.x() - s * p.y(), s * p.x() + c * p.y(), p.z());
  return out;
}

std::vector<VirtualCamera> build_view_ring(int v_count, double radius, double camera_height, int image_size) {
  if (v_count < 1) throw Error(ErrorKind::InvalidArgument, "view count must be >= 1");
  if (!(radius > 0.0)) throw Error(ErrorKind::InvalidArgument, "ring radius must be positive");
  if (image_size < 1) throw Error(ErrorKind::InvalidArgument, "image size must be >= 1");
  // The axis plane maps the 2 m crop window onto the full image height.
  const double half_window = 0.5 * kMetricCropTop;
  const double focal = 0.5 * image_size * radius / half_window;
  std::vector<VirtualCamera> ring;
  ring.reserve(v_count);
  for (int v = 0; v < v_count; ++v) {
    VirtualCamera cam;
    cam.azimuth = 2.0 * std::numbers::pi * v / v_count;
    cam.position = Point3(radius * std::cos(cam.azimuth), radius * std::sin(cam.azimuth), camera_height);
    cam.focal = focal;
    cam.height = image_size;
    cam.width = image_size;
    ring.push_back(cam);
  }
  return ring;
}

std::vector<VirtualCamera> build_view_ring(const RingConfig& ring) {
  return build_view_ring(ring.views, ring.radius, ring.camera_height, ring.image_size);
}

std::array<std::uint8_t, 3> depth_color(double d) {
  d = std::clamp(d, 0.0, 1.0);
  const auto q = [](double x) { return static_cast<std::uint8_t>(std::lround(255.0 * x)); };
  return {q(d), q(1.0 - std::abs(2.0 * d - 1.0)), q(1.0 - d)};
}

double depth_from_color(const std::uint8_t* rgb) { return rgb[0] / 255.0; }

Image render_view(const PointCloud& cloud, const VirtualCamera& camera, bool metric_crop) {
  const int H = camera.height;
  const int W = camera.width;
  Image img(H, W);
  const PointCloud filled = metric_crop ? PointCloud{} : fill_crop_window(cloud);
  const PointCloud& src = metric_crop ? cloud : filled;

  const double ca = std::cos(camera.azimuth);
  const double sa = std::sin(camera.azimuth);
  const double cx = 0.5 * W;
  const double cy = 0.5 * H;
  constexpr double kEmpty = std::numeric_limits<double>::infinity();
  std::vector<double> zbuf(static_cast<std::size_t>(H) * W, kEmpty);

  for (const auto& p : src.points) {
    if (metric_crop && p.z() > kMetricCropTop) continue;
    const double dx = p.x() - camera.position.x();
    const double dy = p.y() - camera.position.y();
    // Optical axis points from the camera toward the subject axis.
    const double depth = -(dx * ca + dy * sa);
    if (depth <= kNearPlane) continue;
    const double xc = -dx * sa + dy * ca;
    const double yc = p.z() - camera.position.z();
    const double u = cx + camera.focal * xc / depth;
    const double v = cy - camera.focal * yc / depth;
    if (!(u >= 0.0 && u <= W && v >= 0.0 && v <= H)) continue;
    const int col = std::min(static_cast<int>(std::floor(u)), W - 1);
    const int row = std::min(static_cast<int>(std::floor(v)), H - 1);
    double& z = zbuf[static_cast<std::size_t>(row) * W + col];
    if (depth < z) z = depth;
  }

  double zmin = kEmpty;
  double zmax = -kEmpty;
  for (double z : zbuf) {
    if (z == kEmpty) continue;
    zmin = std::min(zmin, z);
    zmax = std::max(zmax, z);
  }
  if (zmin == kEmpty) throw Error(ErrorKind::EmptyRender, "no point projects into the view frustum");

  const double range = zmax - zmin;
  for (int row = 0; row < H; ++row) {
    for (int col = 0; col < W; ++col) {
      const double z = zbuf[static_cast<std::size_t>(row) * W + col];
      if (z == kEmpty) continue;
      const double d = range > 0.0 ? (z - zmin) / range : 0.5;
      const auto c = depth_color(d);
      std::uint8_t* px = img.pixel(row, col);
      px[0] = c[0];
      px[1] = c[1];
      px[2] = c[2];
    }
  }
  return img;
}

DepthViewStack render_sequence(const PersonSequence& seq, const RingConfig& ring, bool metric_crop) {
  if (seq.frames.empty()) throw Error(ErrorKind::EmptySequence, "sequence has no frames");
  const auto cameras = build_view_ring(ring);
  DepthViewStack stack;
  stack.views = ring.views;
  stack.frames = static_cast<int>(seq.frames.size());
  stack.height = ring.image_size;
  stack.width = ring.image_size;
  stack.ring = ring;
  stack.metric_crop = metric_crop;
  stack.data.resize(static_cast<std::size_t>(stack.views) * stack.frames * stack.image_bytes());
  for (int l = 0; l < stack.frames; ++l) {
    const PointCloud& frame = seq.frames[l];
    if (frame.empty()) {
      throw Error(ErrorKind::EmptyCloud, "frame " + std::to_string(l) + " of sequence '" + seq.identity + "' is empty");
    }
    const PointCloud centered = center_horizontal(frame);
    for (int v = 0; v < stack.views; ++v) {
      try {
        stack.set_image(v, l, render_view(centered, cameras[v], metric_crop));
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::EmptyRender) throw;
        throw Error(ErrorKind::EmptyRender,
                    "frame " + std::to_string(l) + ", view " + std::to_string(v) + " of sequence '" + seq.identity + "'");
      }
    }
  }
  return stack;
}

}  // namespace pcreid
