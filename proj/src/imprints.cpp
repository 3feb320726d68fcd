#include "pcreid/imprints.hpp"

#include "pcreid/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace pcreid {

namespace fs = std::filesystem;

bool GridSpec::contains(double x, double y) const {
  const int c = col_of(x);
  const int r = row_of(y);
  return r >= 0 && r < rows && c >= 0 && c < cols;
}

int GridSpec::row_of(double y) const { return static_cast<int>(std::floor((y - origin_y) / cell)); }
int GridSpec::col_of(double x) const { return static_cast<int>(std::floor((x - origin_x) / cell)); }

nlohmann::json GridSpec::to_json() const {
  return {{"origin_x", origin_x}, {"origin_y", origin_y}, {"cell", cell}, {"rows", rows}, {"cols", cols}};
}

GridSpec GridSpec::from_json(const nlohmann::json& j) {
  GridSpec s;
  s.origin_x = j.at("origin_x").get<double>();
  s.origin_y = j.at("origin_y").get<double>();
  s.cell = j.value("cell", s.cell);
  s.rows = j.at("rows").get<int>();
  s.cols = j.at("cols").get<int>();
  return s;
}

GridSpec grid_covering(const std::vector<Point3>& points, double cell, double margin) {
  if (points.empty()) throw Error(ErrorKind::EmptyCloud, "cannot size a grid without points");
  if (cell <= 0) throw Error(ErrorKind::InvalidArgument, "cell size must be positive");
  double x0 = points.front().x(), x1 = x0, y0 = points.front().y(), y1 = y0;
  for (const auto& p : points) {
    x0 = std::min(x0, p.x());
    x1 = std::max(x1, p.x());
    y0 = std::min(y0, p.y());
    y1 = std::max(y1, p.y());
  }
  GridSpec s;
  s.cell = cell;
  s.origin_x = std::floor((x0 - margin) / cell) * cell;
  s.origin_y = std::floor((y0 - margin) / cell) * cell;
  s.cols = static_cast<int>(std::ceil((x1 + margin - s.origin_x) / cell)) + 1;
  s.rows = static_cast<int>(std::ceil((y1 + margin - s.origin_y) / cell)) + 1;
  return s;
}

double OccupancyGrid::max_count() const {
  return counts.empty() ? 0.0 : *std::max_element(counts.begin(), counts.end());
}

std::vector<double> OccupancyGrid::normalized() const {
  const double m = max_count();
  std::vector<double> out(counts.size(), 0.0);
  if (m > 0)
    for (std::size_t i = 0; i < counts.size(); ++i) out[i] = counts[i] / m;
  return out;
}

std::pair<int, int> OccupancyGrid::argmax() const {
  if (counts.empty()) return {0, 0};
  const double m = max_count();
  std::vector<int> top;
  double mr = 0, mc = 0;
  for (int i = 0; i < static_cast<int>(counts.size()); ++i) {
    if (counts[static_cast<std::size_t>(i)] != m) continue;
    top.push_back(i);
    mr += i / spec.cols;
    mc += i % spec.cols;
  }
  mr /= static_cast<double>(top.size());
  mc /= static_cast<double>(top.size());
  int best = top.front();
  double best_d = std::numeric_limits<double>::infinity();
  for (int i : top) {
    const double d = std::pow(i / spec.cols - mr, 2) + std::pow(i % spec.cols - mc, 2);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return {best / spec.cols, best % spec.cols};
}

GrayLayer project_background(const LabeledScene& scene, const GridSpec& spec) {
  if (scene.labels.size() != scene.points.size()) {
    throw Error(ErrorKind::InvalidArgument, "scene labels and points differ in length");
  }
  GrayLayer layer;
  layer.spec = spec;
  layer.intensity.assign(spec.cells(), 0.0);
  std::vector<double> counts(spec.cells(), 0.0);
  for (std::size_t i = 0; i < scene.points.size(); ++i) {
    if (scene.labels[i] != PointLabel::Background) continue;
    const auto& p = scene.points[i];
    if (!spec.contains(p.x(), p.y())) continue;
    counts[static_cast<std::size_t>(spec.row_of(p.y())) * spec.cols + spec.col_of(p.x())] += 1.0;
  }
  const double cmax = counts.empty() ? 0.0 : *std::max_element(counts.begin(), counts.end());
  if (cmax <= 0) {
    layer.empty = true;
    return layer;
  }
  const double denom = std::log1p(cmax);
  for (std::size_t i = 0; i < counts.size(); ++i) layer.intensity[i] = std::log1p(counts[i]) / denom;
  return layer;
}

OccupancyGrid accumulate_imprint(const std::vector<PointCloud>& frames, const GridSpec& spec) {
  OccupancyGrid g;
  g.spec = spec;
  g.counts.assign(spec.cells(), 0.0);
  g.frames = static_cast<int>(frames.size());
  std::vector<int> stamp(spec.cells(), -1);
  for (int f = 0; f < static_cast<int>(frames.size()); ++f) {
    for (const auto& p : frames[static_cast<std::size_t>(f)].points) {
      if (!spec.contains(p.x(), p.y())) continue;
      const std::size_t i = static_cast<std::size_t>(spec.row_of(p.y())) * spec.cols + spec.col_of(p.x());
      if (stamp[i] == f) continue;
      stamp[i] = f;
      g.counts[i] += 1.0;
    }
  }
  return g;
}

Rgb palette_hue(std::size_t index) {
  static constexpr Rgb kPalette[] = {{230, 25, 75},  {255, 225, 25}, {245, 130, 48}, {145, 30, 180},
                                     {240, 50, 230}, {210, 245, 60}, {250, 190, 212}, {170, 110, 40},
                                     {128, 0, 0},    {128, 128, 0}};
  return kPalette[index % (sizeof(kPalette) / sizeof(kPalette[0]))];
}

ImprintImage compose(const GrayLayer& background, const std::vector<ImprintLayer>& imprints,
                     const std::vector<ObjectOverlay>& objects) {
  const GridSpec& spec = background.spec;
  if (background.intensity.size() != spec.cells()) throw Error(ErrorKind::ConfigMismatch, "background size mismatch");
  for (const auto& l : imprints) {
    if (!(l.grid.spec == spec) || l.grid.counts.size() != spec.cells()) {
      throw Error(ErrorKind::ConfigMismatch, "imprint '" + l.label + "' uses a different grid");
    }
  }
  for (const auto& o : objects) {
    if (o.mask.size() != spec.cells()) throw Error(ErrorKind::ConfigMismatch, "object '" + o.name + "' mask size mismatch");
  }

  const std::size_t n = spec.cells();
  std::vector<std::array<double, 3>> px(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double g = 255.0 * background.intensity[i];
    px[i] = {g, g, g};
  }
  for (const auto& o : objects) {
    for (int r = 0; r < spec.rows; ++r) {
      for (int c = 0; c < spec.cols; ++c) {
        const std::size_t i = static_cast<std::size_t>(r) * spec.cols + c;
        if (!o.mask[i]) continue;
        const auto inside = [&](int rr, int cc) {
          return rr >= 0 && rr < spec.rows && cc >= 0 && cc < spec.cols &&
                 o.mask[static_cast<std::size_t>(rr) * spec.cols + cc] != 0;
        };
        const bool edge = !inside(r - 1, c) || !inside(r + 1, c) || !inside(r, c - 1) || !inside(r, c + 1);
        if (edge) px[i] = {double(o.hue[0]), double(o.hue[1]), double(o.hue[2])};
      }
    }
  }
  for (const auto& l : imprints) {
    const std::vector<double> a = l.grid.normalized();
    for (std::size_t i = 0; i < n; ++i) {
      if (a[i] <= 0) continue;
      for (int ch = 0; ch < 3; ++ch) px[i][ch] = (1.0 - a[i]) * px[i][ch] + a[i] * l.hue[ch];
    }
  }

  ImprintImage img;
  img.width = spec.cols;
  img.height = spec.rows;
  img.rgb.resize(n * 3);
  for (int r = 0; r < spec.rows; ++r) {
    const int y = spec.rows - 1 - r;  // +y points up in the image
    for (int c = 0; c < spec.cols; ++c) {
      const auto& p = px[static_cast<std::size_t>(r) * spec.cols + c];
      for (int ch = 0; ch < 3; ++ch) {
        img.rgb[(static_cast<std::size_t>(y) * spec.cols + c) * 3 + ch] =
            static_cast<std::uint8_t>(std::clamp(std::lround(p[ch]), 0L, 255L));
      }
    }
  }
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : imprints) {
    layers.push_back({{"label", l.label}, {"hue", {l.hue[0], l.hue[1], l.hue[2]}}, {"frames", l.grid.frames}});
  }
  nlohmann::json objs = nlohmann::json::array();
  for (const auto& o : objects) objs.push_back({{"name", o.name}, {"hue", {o.hue[0], o.hue[1], o.hue[2]}}});
  img.legend = {{"grid", spec.to_json()},
                {"background", background.empty ? "empty" : "log-density"},
                {"objects", objs},
                {"imprints", layers}};
  return img;
}

void write_ppm(const fs::path& path, const ImprintImage& image) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

void write_imprint(const fs::path& path, const ImprintImage& image) {
  write_ppm(path, image);
  fs::path legend = path;
  legend += ".json";
  std::ofstream out(legend, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + legend.string());
  out << image.legend.dump(2) << '\n';
}

}  // namespace pcreid
