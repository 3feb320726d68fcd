#pragma once

#include "pcreid/geometry.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace pcreid {

// Bird's-eye grid: cell (row, col) covers x in [ox + col*cell, ox + (col+1)*cell), same for y.
struct GridSpec {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double cell = 0.05;
  int rows = 0;
  int cols = 0;

  bool contains(double x, double y) const;
  int row_of(double y) const;
  int col_of(double x) const;
  std::size_t cells() const { return static_cast<std::size_t>(rows) * cols; }
  bool operator==(const GridSpec&) const = default;
  nlohmann::json to_json() const;
  static GridSpec from_json(const nlohmann::json& j);
};

// Smallest grid with the given cell size covering the points plus a margin.
GridSpec grid_covering(const std::vector<Point3>& points, double cell = 0.05, double margin = 0.25);

struct OccupancyGrid {
  GridSpec spec;
  std::vector<double> counts;  // row-major, pre-normalization
  int frames = 0;

  double max_count() const;
  std::vector<double> normalized() const;  // counts / max, all zero for an empty grid
  // (row, col). Among tied maxima the cell nearest their centroid wins, so a
  // stationary footprint reports its middle; then lowest index.
  std::pair<int, int> argmax() const;
};

enum class PointLabel : std::uint8_t { Background = 0, Person = 1, Object = 2 };

struct LabeledScene {
  std::vector<Point3> points;
  std::vector<PointLabel> labels;
};

struct GrayLayer {
  GridSpec spec;
  std::vector<double> intensity;  // [0, 1]
  bool empty = false;  // no background points were found
};

// Log-scaled background density: ln(1 + c) / ln(1 + c_max).
GrayLayer project_background(const LabeledScene& scene, const GridSpec& spec);

// Each frame increments every cell covered by at least one point, once.
OccupancyGrid accumulate_imprint(const std::vector<PointCloud>& frames, const GridSpec& spec);

using Rgb = std::array<std::uint8_t, 3>;

struct ImprintLayer {
  std::string label;  // identity or role
  OccupancyGrid grid;
  Rgb hue{255, 0, 0};
};

struct ObjectOverlay {
  std::string name;
  std::vector<std::uint8_t> mask;  // row-major over the grid, nonzero = object
  Rgb hue{0, 0, 255};
};

struct ImprintImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // image row 0 is the largest y
  nlohmann::json legend;
};

// Grayscale background, then object outlines, then each imprint blended with
// alpha equal to its normalized occupancy, in the order given.
ImprintImage compose(const GrayLayer& background, const std::vector<ImprintLayer>& imprints,
                     const std::vector<ObjectOverlay>& objects = {});

// Distinct hue for the i-th legend entry.
Rgb palette_hue(std::size_t index);

void write_ppm(const std::filesystem::path& path, const ImprintImage& image);
// Writes `<path>` (PPM) and `<path>.json` (legend).
void write_imprint(const std::filesystem::path& path, const ImprintImage& image);

}  // namespace pcreid
