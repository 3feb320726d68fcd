#include "pcreid/synthdata.hpp"

#include "pcreid/error.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

namespace pcreid {

namespace fs = std::filesystem;
using std::numbers::pi;

std::vector<double> BodyProportions::as_vector() const {
  return {head_radius, torso_radius, shoulder_width, hip_width, leg_length, arm_length, limb_radius};
}

nlohmann::json BodyModel::to_json() const {
  return {{"height", height},
          {"proportions", proportions.as_vector()},
          {"gait", {gait.step_frequency, gait.arm_swing, gait.leg_swing, gait.phase}},
          {"density", density}};
}

void ScenarioSpec::validate() const {
  const auto bad = [](const std::string& what) { throw Error(ErrorKind::InvalidArgument, "scenario: " + what); };
  if (identities < 1 || sequences_per_identity < 1) bad("counts must be positive");
  if (frames_min < 10 || frames_max > 45 || frames_max < frames_min) bad("frames per sequence must lie in [10, 45]");
  if (fps <= 0) bad("fps must be positive");
  if (noise_sigma < 0) bad("noise sigma must be non-negative");
  if (occlusion_probability < 0 || occlusion_probability > 1) bad("occlusion probability must be in [0, 1]");
  if (density <= 0) bad("density must be positive");
  if (body_variation < 0 || body_variation > 1) bad("body variation must be in [0, 1]");
  if (gallery_per_identity < 0 || probe_per_identity < 0 ||
      gallery_per_identity + probe_per_identity > sequences_per_identity) {
    bad("gallery and probe counts exceed the sequences per identity");
  }
  if (scale_twins && identities % 2 != 0) bad("scale twins need an even identity count");
  if (!scale_twins && identities > 25) bad("at most 25 identities fit 2 cm height gaps in [1.50, 2.00] m");
}

nlohmann::json ScenarioSpec::to_json() const {
  return {{"identities", identities},
          {"sequences_per_identity", sequences_per_identity},
          {"frames_min", frames_min},
          {"frames_max", frames_max},
          {"fps", fps},
          {"occlusion_probability", occlusion_probability},
          {"occlusion_sector_deg", occlusion_sector_deg},
          {"noise_sigma", noise_sigma},
          {"seed", seed},
          {"scale_twins", scale_twins},
          {"density", density},
          {"body_variation", body_variation},
          {"gallery_per_identity", gallery_per_identity},
          {"probe_per_identity", probe_per_identity}};
}

ScenarioSpec ScenarioSpec::from_json(const nlohmann::json& j) {
  ScenarioSpec s;
  s.identities = j.value("identities", s.identities);
  s.sequences_per_identity = j.value("sequences_per_identity", s.sequences_per_identity);
  s.frames_min = j.value("frames_min", s.frames_min);
  s.frames_max = j.value("frames_max", s.frames_max);
  s.fps = j.value("fps", s.fps);
  s.occlusion_probability = j.value("occlusion_probability", s.occlusion_probability);
  s.occlusion_sector_deg = j.value("occlusion_sector_deg", s.occlusion_sector_deg);
  s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
  s.seed = j.value("seed", s.seed);
  s.scale_twins = j.value("scale_twins", s.scale_twins);
  s.density = j.value("density", s.density);
  s.body_variation = j.value("body_variation", s.body_variation);
  s.gallery_per_identity = j.value("gallery_per_identity", s.gallery_per_identity);
  s.probe_per_identity = j.value("probe_per_identity", s.probe_per_identity);
  return s;
}

std::string identity_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "person_%02d", index);
  return buf;
}

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  // splitmix64 of a combined key
  std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct Capsule {
  Point3 a;
  Point3 b;
  double r;

  double area() const { return 2 * pi * r * (b - a).norm() + 4 * pi * r * r; }
};

// Capsules of the posed body in its local frame: facing +x, floor at z = 0.
std::vector<Capsule> pose(const BodyModel& body, double t) {
  const double h = body.height;
  const auto& pr = body.proportions;
  const auto& g = body.gait;
  const double phi = 2 * pi * g.step_frequency * t + g.phase;
  const double bob = 0.008 * h * std::cos(2 * phi);

  const double z_hip = pr.leg_length * h + bob;
  const double head_r = pr.head_radius * h;
  const double z_head = h - head_r + bob;
  const double z_neck = h - 2 * head_r - 0.02 * h + bob;
  const double z_shoulder = z_neck - 0.03 * h;
  const double limb = pr.limb_radius * h;

  std::vector<Capsule> caps;
  caps.push_back({{0, 0, z_head}, {0, 0, z_head}, head_r});
  caps.push_back({{0, 0, z_hip + 0.5 * pr.torso_radius * h}, {0, 0, z_neck - 0.5 * pr.torso_radius * h},
                  pr.torso_radius * h});
  const double half_sw = 0.5 * pr.shoulder_width * h;
  caps.push_back({{0, -half_sw, z_shoulder}, {0, half_sw, z_shoulder}, 1.3 * limb});

  const double thigh = 0.5 * pr.leg_length * h;
  const double shin = 0.5 * pr.leg_length * h;
  const double upper = 0.5 * pr.arm_length * h;
  const double fore = 0.5 * pr.arm_length * h;
  for (int side : {-1, 1}) {
    // Left leg (side +1) swings with sin(phi), the right one opposite; arms counter-swing.
    const double s = side * std::sin(phi);
    const double alpha = g.leg_swing * s;
    const double knee_bend = 0.8 * g.leg_swing * std::max(0.0, -side * std::cos(phi));
    const Point3 hip(0, side * 0.5 * pr.hip_width * h, z_hip);
    const Point3 knee = hip + thigh * Point3(std::sin(alpha), 0, -std::cos(alpha));
    const Point3 foot = knee + shin * Point3(std::sin(alpha - knee_bend), 0, -std::cos(alpha - knee_bend));
    caps.push_back({hip, knee, 1.4 * limb});
    caps.push_back({knee, foot, 1.1 * limb});

    const double gamma = -g.arm_swing * s;
    const double elbow_bend = 0.25 + 0.3 * g.arm_swing * std::max(0.0, s);
    const Point3 shoulder(0, side * half_sw, z_shoulder);
    const Point3 elbow = shoulder + upper * Point3(std::sin(gamma), 0, -std::cos(gamma));
    const Point3 hand = elbow + fore * Point3(std::sin(gamma + elbow_bend), 0, -std::cos(gamma + elbow_bend));
    caps.push_back({shoulder, elbow, limb});
    caps.push_back({elbow, hand, 0.85 * limb});
  }
  return caps;
}

Point3 sample_capsule(const Capsule& c, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  const Point3 axis = c.b - c.a;
  const double len = axis.norm();
  const double side_area = 2 * pi * c.r * len;
  const double u = uniform(rng, 0.0, c.area());
  if (u < side_area && len > 0) {
    const Point3 w = axis / len;
    const Point3 helper = std::abs(w.z()) < 0.9 ? Point3(0, 0, 1) : Point3(1, 0, 0);
    const Point3 e1 = w.cross(helper).normalized();
    const Point3 e2 = w.cross(e1);
    const double s = uniform(rng, 0.0, len);
    const double th = uniform(rng, 0.0, 2 * pi);
    return c.a + s * w + c.r * (std::cos(th) * e1 + std::sin(th) * e2);
  }
  Point3 d(n01(rng), n01(rng), n01(rng));
  d.normalize();
  const bool toward_b = len > 0 && d.dot(axis) > 0;
  return (toward_b ? c.b : c.a) + c.r * d;
}

double wrap_angle(double a) {
  a = std::fmod(a, 2 * pi);
  return a < 0 ? a + 2 * pi : a;
}

}  // namespace

PointCloud body_cloud(const BodyModel& body, double t, const FrameOptions& opt, std::mt19937_64& rng) {
  const std::vector<Capsule> caps = pose(body, t);
  std::vector<double> cumulative;
  double total = 0.0;
  for (const auto& c : caps) {
    total += c.area();
    cumulative.push_back(total);
  }
  const long count = std::max(1L, std::lround(body.density * total));
  const double ch = std::cos(opt.heading);
  const double sh = std::sin(opt.heading);
  std::normal_distribution<double> noise(0.0, opt.noise_sigma > 0 ? opt.noise_sigma : 1.0);

  PointCloud cloud;
  cloud.points.reserve(static_cast<std::size_t>(count));
  for (long i = 0; i < count; ++i) {
    const double u = uniform(rng, 0.0, total);
    const std::size_t k = std::min<std::size_t>(
        static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin()),
        caps.size() - 1);
    const Point3 local = sample_capsule(caps[k], rng);
    const Point3 offset(ch * local.x() - sh * local.y(), sh * local.x() + ch * local.y(), local.z());
    if (opt.occluded) {
      const double az = wrap_angle(std::atan2(offset.y(), offset.x()) - opt.occlusion_start);
      if (az < opt.occlusion_width) continue;
    }
    Point3 p = opt.position + offset;
    if (opt.noise_sigma > 0) p += Point3(noise(rng), noise(rng), noise(rng));
    p.z() = std::max(0.0, p.z());
    cloud.points.push_back(p);
  }
  if (cloud.empty()) {
    // Degenerate occlusion settings: keep at least the body axis point.
    cloud.points.push_back(opt.position + Point3(0, 0, 0.5 * body.height));
  }
  return cloud;
}

BodyModel sample_body(std::mt19937_64& rng, const ScenarioSpec& spec) {
  // Each parameter is drawn from [mid - v * half, mid + v * half].
  const double v = spec.body_variation;
  const auto around = [&](double lo, double hi) {
    const double mid = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo) * v;
    return uniform(rng, mid - half, mid + half + 1e-12);
  };
  BodyModel b;
  b.height = uniform(rng, 1.50, 2.00);
  auto& p = b.proportions;
  p.head_radius = around(0.060, 0.072);
  p.torso_radius = around(0.080, 0.115);
  p.shoulder_width = around(0.21, 0.29);
  p.hip_width = around(0.09, 0.13);
  p.leg_length = around(0.45, 0.51);
  p.arm_length = around(0.36, 0.44);
  p.limb_radius = around(0.027, 0.042);
  b.gait.step_frequency = around(0.7, 1.2);
  b.gait.arm_swing = around(0.15, 0.75);
  b.gait.leg_swing = around(0.20, 0.50);
  b.gait.phase = uniform(rng, 0.0, 2 * pi);
  b.density = spec.density;
  return b;
}

std::pair<BodyModel, BodyModel> make_scale_twins(const BodyModel& base) {
  BodyModel small = base;
  BodyModel tall = base;
  small.height = 1.60;
  tall.height = 1.84;
  // Surface area grows with height squared; equal point counts need density ~ 1 / h^2.
  const double ref = base.density * base.height * base.height;
  small.density = ref / (small.height * small.height);
  tall.density = ref / (tall.height * tall.height);
  return {small, tall};
}

std::vector<BodyModel> sample_bodies(const ScenarioSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(mix(spec.seed, 0xb0d1e5));
  std::vector<BodyModel> bodies;
  if (spec.scale_twins) {
    for (int k = 0; k < spec.identities / 2; ++k) {
      const auto [a, b] = make_scale_twins(sample_body(rng, spec));
      bodies.push_back(a);
      bodies.push_back(b);
    }
    return bodies;
  }
  const int n = spec.identities;
  const double bin = 0.50 / n;
  std::vector<double> heights;
  for (int i = 0; i < n; ++i) heights.push_back(1.50 + i * bin + 0.01 + uniform(rng, 0.0, bin - 0.02));
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(std::uniform_int_distribution<int>(0, i)(rng));
    std::swap(heights[static_cast<std::size_t>(i)], heights[static_cast<std::size_t>(j)]);
  }
  for (int i = 0; i < n; ++i) {
    BodyModel b = sample_body(rng, spec);
    b.height = heights[static_cast<std::size_t>(i)];
    bodies.push_back(b);
  }
  return bodies;
}

PersonSequence generate_sequence(const BodyModel& body, const ScenarioSpec& spec, std::mt19937_64& rng, int frames,
                                 double start_time) {
  if (frames < 1) throw Error(ErrorKind::InvalidArgument, "sequence needs at least one frame");
  PersonSequence seq;
  FrameOptions opt;
  opt.heading = uniform(rng, 0.0, 2 * pi);
  opt.position = Point3(uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0), 0.0);
  opt.noise_sigma = spec.noise_sigma;
  opt.occluded = uniform(rng, 0.0, 1.0) < spec.occlusion_probability;
  opt.occlusion_start = uniform(rng, 0.0, 2 * pi);
  opt.occlusion_width = spec.occlusion_sector_deg * pi / 180.0;
  std::normal_distribution<double> step(0.0, 0.01);
  constexpr double kBound = 1.5;
  for (int i = 0; i < frames; ++i) {
    const double t = start_time + i / spec.fps;
    seq.frames.push_back(body_cloud(body, t, opt, rng));
    seq.timestamps.push_back(t);
    for (int axis = 0; axis < 2; ++axis) {
      double& c = opt.position[axis];
      c += step(rng);
      if (c > kBound) c = 2 * kBound - c;
      if (c < -kBound) c = -2 * kBound - c;
    }
  }
  return seq;
}

Manifest generate_dataset(const ScenarioSpec& spec, const fs::path& out_dir) {
  spec.validate();
  const std::vector<BodyModel> bodies = sample_bodies(spec);
  Manifest manifest;
  manifest.root = out_dir;
  fs::create_directories(out_dir / "seqs");
  const int S = spec.sequences_per_identity;
  for (int i = 0; i < spec.identities; ++i) {
    const std::string id = identity_name(i);
    for (int s = 0; s < S; ++s) {
      std::mt19937_64 rng(mix(spec.seed, static_cast<std::uint64_t>(i) * 100003ULL + static_cast<std::uint64_t>(s)));
      const int frames = std::uniform_int_distribution<int>(spec.frames_min, spec.frames_max)(rng);
      const double start = 10.0 * s + 0.5 * i;
      PersonSequence seq = generate_sequence(bodies[static_cast<std::size_t>(i)], spec, rng, frames, start);
      seq.identity = id;
      char name[64];
      std::snprintf(name, sizeof name, "seqs/%s_s%03d.pseq", id.c_str(), s);
      try {
        write_sequence_file(out_dir / name, seq);
      } catch (const Error& e) {
        throw Error(ErrorKind::Io, std::string("writing ") + (out_dir / name).string() + ": " + e.what());
      }
      ManifestEntry e;
      e.identity = id;
      e.role = role_names()[static_cast<std::size_t>(i) % role_names().size()];
      e.path = name;
      e.split = s < spec.gallery_per_identity              ? "gallery"
                : s >= S - spec.probe_per_identity ? "probe"
                                                            : "train";
      e.start_time = std::llround(start * 1e6) / 1e6;
      manifest.entries.push_back(std::move(e));
    }
  }
  manifest.save(out_dir / "manifest.json");
  std::ofstream scenario(out_dir / "scenario.json", std::ios::trunc);
  if (!scenario) throw Error(ErrorKind::Io, "cannot write " + (out_dir / "scenario.json").string());
  nlohmann::json bj = nlohmann::json::array();
  for (const auto& b : bodies) bj.push_back(b.to_json());
  scenario << nlohmann::json{{"spec", spec.to_json()}, {"bodies", bj}}.dump(2) << '\n';
  return manifest;
}

CrossingScenario generate_crossing_scenario(const ScenarioSpec& spec, const CrossingSpec& crossing) {
  const std::vector<BodyModel> bodies = sample_bodies(spec);
  const int n = static_cast<int>(bodies.size());
  if (n < 2) throw Error(ErrorKind::InvalidArgument, "a crossing needs at least two identities");
  if (crossing.first == crossing.second || crossing.first < 0 || crossing.second < 0 || crossing.first >= n ||
      crossing.second >= n) {
    throw Error(ErrorKind::InvalidArgument, "invalid crossing identities");
  }
  std::vector<int> bystanders;
  for (int i = 0; i < n && static_cast<int>(bystanders.size()) < crossing.bystanders; ++i)
    if (i != crossing.first && i != crossing.second) bystanders.push_back(i);

  CrossingScenario sc;
  sc.crossers = {identity_name(crossing.first), identity_name(crossing.second)};
  const double mid = crossing.dropout_length > 0 ? crossing.dropout_start + 0.5 * crossing.dropout_length - 0.5
                                                 : 0.5 * (crossing.frames - 1);
  sc.crossing_frame = static_cast<int>(std::lround(mid));
  const double step = crossing.speed / spec.fps;
  std::mt19937_64 rng(mix(spec.seed, 0xc4055));

  std::vector<Point3> wander;
  for (std::size_t k = 0; k < bystanders.size(); ++k) {
    const double ang = 2 * pi * static_cast<double>(k) / std::max<std::size_t>(1, bystanders.size());
    wander.emplace_back(4.0 * std::cos(ang), 4.0 * std::sin(ang) + 3.0, 0.0);
  }
  std::vector<double> wander_heading;
  for (std::size_t k = 0; k < bystanders.size(); ++k) wander_heading.push_back(uniform(rng, 0.0, 2 * pi));
  std::normal_distribution<double> drift(0.0, 0.01);

  for (int f = 0; f < crossing.frames; ++f) {
    DetectionFrame frame;
    frame.t = f / spec.fps;
    const bool dropped =
        crossing.dropout_length > 0 && f >= crossing.dropout_start && f < crossing.dropout_start + crossing.dropout_length;
    const double x = step * (f - mid);
    const struct {
      int id;
      Point3 pos;
      double heading;
    } walkers[2] = {{crossing.first, {x, 0.5 * crossing.lateral_offset, 0.0}, 0.0},
                    {crossing.second, {-x, -0.5 * crossing.lateral_offset, 0.0}, pi}};
    for (const auto& w : walkers) {
      FrameOptions opt;
      opt.heading = w.heading;
      opt.position = w.pos;
      opt.noise_sigma = spec.noise_sigma;
      // Clouds are drawn even when dropped so the random stream does not depend on the dropout.
      PointCloud cloud = body_cloud(bodies[static_cast<std::size_t>(w.id)], frame.t, opt, rng);
      if (dropped) continue;
      Detection d;
      d.centroid = cloud_centroid(cloud);
      d.cloud = std::move(cloud);
      d.truth = identity_name(w.id);
      frame.detections.push_back(std::move(d));
    }
    for (std::size_t k = 0; k < bystanders.size(); ++k) {
      FrameOptions opt;
      opt.heading = wander_heading[k];
      opt.position = wander[k];
      opt.noise_sigma = spec.noise_sigma;
      Detection d;
      d.cloud = body_cloud(bodies[static_cast<std::size_t>(bystanders[k])], frame.t, opt, rng);
      d.centroid = cloud_centroid(d.cloud);
      d.truth = identity_name(bystanders[k]);
      frame.detections.push_back(std::move(d));
      wander[k].x() += drift(rng);
      wander[k].y() += drift(rng);
    }
    sc.stream.push_back(std::move(frame));
  }
  return sc;
}

}  // namespace pcreid
