#pragma once

#include "pcreid/dataset.hpp"
#include "pcreid/geometry.hpp"
#include "pcreid/tracking.hpp"

#include <json.hpp>

#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace pcreid {

// Proportions are fractions of the body height, so two bodies with equal
// proportions differ only by a uniform scale.
struct BodyProportions {
  double head_radius = 0.065;
  double torso_radius = 0.095;
  double shoulder_width = 0.25;
  double hip_width = 0.11;
  double leg_length = 0.48;  // hip joint height
  double arm_length = 0.40;
  double limb_radius = 0.035;

  std::vector<double> as_vector() const;
  bool operator==(const BodyProportions&) const = default;
};

struct GaitParams {
  double step_frequency = 0.9;  // Hz, one full stride cycle
  double arm_swing = 0.45;  // rad
  double leg_swing = 0.40;  // rad
  double phase = 0.0;  // rad
  bool operator==(const GaitParams&) const = default;
};

struct BodyModel {
  double height = 1.75;  // m
  BodyProportions proportions;
  GaitParams gait;
  double density = 600.0;  // surface points per m^2

  bool operator==(const BodyModel&) const = default;
  nlohmann::json to_json() const;
};

struct ScenarioSpec {
  int identities = 10;
  int sequences_per_identity = 40;
  int frames_min = 10;
  int frames_max = 12;
  double fps = 15.0;
  double occlusion_probability = 0.0;  // per sequence
  double occlusion_sector_deg = 90.0;
  double noise_sigma = 0.0;  // m
  std::uint64_t seed = 7;
  bool scale_twins = false;  // identities come in (1.60 m, 1.84 m) pairs with equal proportions
  double density = 600.0;
  double body_variation = 1.0;  // scales the spread of proportions and gait around their means
  int gallery_per_identity = 10;  // first n sequences by time
  int probe_per_identity = 10;  // last sequences by time; the rest are train

  void validate() const;
  nlohmann::json to_json() const;
  static ScenarioSpec from_json(const nlohmann::json& j);
};

inline const std::vector<std::string>& role_names() {
  static const std::vector<std::string> kRoles = {"head_surgeon", "assistant",  "scrub_nurse",
                                                  "circulator",   "anesthetist", "technician"};
  return kRoles;
}

std::string identity_name(int index);

// A single random body with height in [1.50, 2.00] m.
BodyModel sample_body(std::mt19937_64& rng, const ScenarioSpec& spec);
// The bodies of one dataset: heights stratified so pairwise gaps are >= 2 cm,
// or scale-twin pairs when the spec asks for them.
std::vector<BodyModel> sample_bodies(const ScenarioSpec& spec);
// Same proportions and gait, heights 1.60 m and 1.84 m, equal point counts.
std::pair<BodyModel, BodyModel> make_scale_twins(const BodyModel& base);

struct FrameOptions {
  double heading = 0.0;  // rad, direction the body faces
  Point3 position = Point3::Zero();  // floor point under the body
  double noise_sigma = 0.0;
  bool occluded = false;
  double occlusion_start = 0.0;  // rad, world azimuth about the body axis
  double occlusion_width = 0.0;  // rad
};

// Surface-sampled articulated body at time t (seconds).
PointCloud body_cloud(const BodyModel& body, double t, const FrameOptions& opt, std::mt19937_64& rng);

// Walking in place along a random heading with a bounded random walk of the
// floor position, optional occlusion sector and Gaussian noise.
PersonSequence generate_sequence(const BodyModel& body, const ScenarioSpec& spec, std::mt19937_64& rng,
                                 int frames, double start_time = 0.0);

// Writes `seqs/*.pseq` and `manifest.json` into `out_dir`; returns the manifest.
Manifest generate_dataset(const ScenarioSpec& spec, const std::filesystem::path& out_dir);

struct CrossingSpec {
  int frames = 120;
  int dropout_start = 30;
  int dropout_length = 10;  // 0 disables the dropout
  double lateral_offset = 0.4;  // m between the two walking lines
  double speed = 1.3;  // m/s
  int first = 0;  // identity indices of the two crossers
  int second = 1;
  int bystanders = 0;  // further identities wandering far from the crossing
};

struct CrossingScenario {
  DetectionStream stream;
  std::vector<std::string> crossers;
  int crossing_frame = 0;
};

// Two bodies walk through each other's path; during the dropout window
// neither is detected. Detections carry ground-truth identities.
CrossingScenario generate_crossing_scenario(const ScenarioSpec& spec, const CrossingSpec& crossing = {});

}  // namespace pcreid
