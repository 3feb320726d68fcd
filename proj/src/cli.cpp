#include "pcreid/cli.hpp"

#include "pcreid/dataset.hpp"
#include "pcreid/error.hpp"
#include "pcreid/imprints.hpp"
#include "pcreid/pipeline.hpp"
#include "pcreid/synthdata.hpp"
#include "pcreid/tracking.hpp"
#include "pcreid/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>

#ifndef PCREID_GIT_DESCRIBE
#define PCREID_GIT_DESCRIBE "unknown"
#endif

namespace pcreid::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Flags only override the merged config when given on the command line.
class Overrides {
 public:
  template <typename T>
  CLI::Option* option(CLI::App* app, const std::string& flag, const std::string& pointer, const std::string& help) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app->add_option(flag, *value, help);
    apply_.push_back([opt, value, pointer](json& j) {
      if (opt->count() > 0) j[json::json_pointer(pointer)] = *value;
    });
    return opt;
  }

  CLI::Option* on_off(CLI::App* app, const std::string& flag, const std::string& pointer, const std::string& help) {
    auto value = std::make_shared<std::string>();
    CLI::Option* opt = app->add_option(flag, *value, help)->check(CLI::IsMember({"on", "off"}));
    apply_.push_back([opt, value, pointer](json& j) {
      if (opt->count() > 0) j[json::json_pointer(pointer)] = (*value == "on");
    });
    return opt;
  }

  CLI::Option* switch_on(CLI::App* app, const std::string& flag, const std::string& pointer, const std::string& help) {
    CLI::Option* opt = app->add_flag(flag, help);
    apply_.push_back([opt, pointer](json& j) {
      if (opt->count() > 0) j[json::json_pointer(pointer)] = true;
    });
    return opt;
  }

  void apply(json& j) const {
    for (const auto& f : apply_) f(j);
  }

 private:
  std::vector<std::function<void(json&)>> apply_;
};

struct Command {
  CLI::App* app = nullptr;
  json defaults;
  Overrides flags;
  std::string config_file;
  std::function<void(const json& cfg, const fs::path& run_dir, std::ostream& out)> run;
};

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Io, path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  localtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return buf;
}

fs::path make_run_dir(const std::string& command, const std::string& explicit_dir, const std::string& out_root) {
  if (!explicit_dir.empty()) {
    fs::create_directories(explicit_dir);
    return explicit_dir;
  }
  fs::path root = out_root;
  if (root.empty()) {
    const char* env = std::getenv(kOutRootEnv);
    root = env != nullptr && *env != '\0' ? fs::path(env) : fs::path("runs");
  }
  const std::string base = command + "-" + timestamp();
  fs::path dir = root / base;
  for (int k = 2; fs::exists(dir); ++k) dir = root / (base + "-" + std::to_string(k));
  fs::create_directories(dir);
  return dir;
}

std::string hash_text(const std::string& s) {
  return hex64(hash_bytes({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}));
}

// Hash over the manifest and every sequence file it lists, in manifest order.
std::string dataset_hash(const Manifest& m, const fs::path& manifest_file) {
  std::uint64_t h = hash_file(manifest_file);
  for (const auto& e : m.entries) h = hash_bytes({}, h ^ hash_file(m.resolve(e)));
  return hex64(h);
}

json checkpoint_meta(const fs::path& index) { return read_json_file(index).at("meta"); }

RenderSettings render_from(const json& cfg) { return RenderSettings::from_json(cfg.at("render")); }

// ---- synth ------------------------------------------------------------------

void run_synth(const json& cfg, const fs::path& run_dir, std::ostream& out) {
  const ScenarioSpec spec = ScenarioSpec::from_json(cfg.at("scenario"));
  spec.validate();
  const fs::path dir = cfg.value("out", "").empty() ? run_dir / "dataset" : fs::path(cfg.value("out", ""));
  json summary;
  if (cfg.value("crossing", false)) {
    const json& c = cfg.at("crossing_spec");
    CrossingSpec cs;
    cs.frames = c.value("frames", cs.frames);
    cs.dropout_start = c.value("dropout_start", cs.dropout_start);
    cs.dropout_length = c.value("dropout_length", cs.dropout_length);
    cs.lateral_offset = c.value("lateral_offset", cs.lateral_offset);
    cs.speed = c.value("speed", cs.speed);
    cs.first = c.value("first", cs.first);
    cs.second = c.value("second", cs.second);
    cs.bystanders = c.value("bystanders", cs.bystanders);
    const CrossingScenario sc = generate_crossing_scenario(spec, cs);
    const fs::path stream = dir / "stream.jsonl";
    write_detection_stream(stream, sc.stream);
    summary = {{"stream", stream.string()},
               {"frames", sc.stream.size()},
               {"crossers", sc.crossers},
               {"crossing_frame", sc.crossing_frame},
               {"stream_hash", hex64(hash_file(stream))}};
  } else {
    const Manifest m = generate_dataset(spec, dir);
    const fs::path manifest = dir / "manifest.json";
    summary = {{"manifest", manifest.string()},
               {"sequences", m.entries.size()},
               {"identities", m.identities().size()},
               {"dataset_hash", dataset_hash(m, manifest)}};
  }
  write_json(run_dir / "summary.json", summary);
  out << summary.dump(2) << "\n";
}

// ---- render -----------------------------------------------------------------

void run_render(const json& cfg, const fs::path& run_dir, std::ostream& out) {
  const Manifest m = Manifest::load(cfg.at("manifest").get<std::string>());
  const RenderSettings rs = render_from(cfg);
  const fs::path cache_dir = cfg.value("cache", "").empty() ? run_dir / "cache" : fs::path(cfg.value("cache", ""));
  RenderCache cache(cache_dir);
  for (const auto& e : m.entries) cache.get(m, e, rs);
  const json summary = {{"cache", cache_dir.string()}, {"sequences", m.entries.size()}, {"rendered", cache.renders()}};
  write_json(run_dir / "summary.json", summary);
  out << summary.dump(2) << "\n";
}

// ---- train ------------------------------------------------------------------

void run_train(const json& cfg, const fs::path& run_dir, std::ostream& out) {
  const Manifest m = Manifest::load(cfg.at("manifest").get<std::string>());
  const TrainConfig tc = TrainConfig::from_json(cfg.at("train"));
  const EncoderConfig ec = EncoderConfig::from_json(cfg.at("encoder"));
  const RenderSettings rs = render_from(cfg);
  std::optional<fs::path> cache_dir;
  if (!cfg.value("cache", "").empty()) cache_dir = fs::path(cfg.value("cache", ""));
  RenderCache cache(cache_dir);
  const TrainResult r = train(m, tc, ec, rs, run_dir, &cache, &out);
  const json summary = {{"checkpoint", r.checkpoint.string()},
                        {"loss_log", r.loss_log.string()},
                        {"classes", r.class_identities},
                        {"checkpoint_hash", hex64(hash_file(r.checkpoint.parent_path() / "model.bin"))}};
  write_json(run_dir / "summary.json", summary);
  out << summary.dump(2) << "\n";
}

// ---- eval -------------------------------------------------------------------

void run_eval(const json& cfg, const fs::path& run_dir, std::ostream& out) {
  const Manifest m = Manifest::load(cfg.at("manifest").get<std::string>());
  const fs::path model_path = cfg.at("model").get<std::string>();
  const Model model = load_checkpoint(model_path);
  const json meta = checkpoint_meta(model_path);
  EmbedOptions eo;
  eo.render = meta.contains("render") ? RenderSettings::from_json(meta.at("render")) : RenderSettings{};
  if (cfg.contains("metric_crop") && !cfg.at("metric_crop").is_null()) eo.render.metric_crop = cfg.at("metric_crop").get<bool>();
  eo.max_frames = cfg.value("max_frames", 0);
  std::optional<fs::path> cache_dir;
  if (!cfg.value("cache", "").empty()) cache_dir = fs::path(cfg.value("cache", ""));
  RenderCache cache(cache_dir);

  const auto gallery_seqs = embed_split(m, "gallery", model, eo, &cache);
  EmbedOptions probe_opt = eo;
  probe_opt.noise_sigma = cfg.value("probe_noise", 0.0);
  probe_opt.noise_seed = cfg.value("noise_seed", std::uint64_t{0});
  const auto probes = embed_split(m, "probe", model, probe_opt, &cache);

  EvalSettings es;
  es.gallery_n = cfg.value("gallery_n", es.gallery_n);
  es.mode = parse_gallery_mode(cfg.value("mode", std::string("svm")));
  es.svm.c = cfg.at("svm").value("c", es.svm.c);
  es.svm.epochs = cfg.at("svm").value("epochs", es.svm.epochs);
  es.k_set = cfg.value("k", es.k_set);
  const auto roles = m.identity_roles();
  const EvalOutput result = evaluate_embedded(gallery_seqs, probes, es, &roles);

  result.gallery.save(run_dir / "gallery.json");
  write_json(run_dir / "report.json", result.report.to_json());
  write_text(run_dir / "report.txt", result.report.table());
  write_text(run_dir / "per_identity.csv", result.report.identity_csv());
  write_text(run_dir / "records.csv", records_csv(result.records));
  out << result.report.table();
}

// ---- track ------------------------------------------------------------------

void run_track(const json& cfg, const fs::path& run_dir, std::ostream& out) {
  const DetectionStream stream = read_detection_stream(cfg.at("stream").get<std::string>());
  const std::string mode = cfg.value("mode", std::string("naive"));
  TrackerConfig tc;
  tc.gate = cfg.value("gate", tc.gate);
  tc.init_frames = cfg.value("init_frames", tc.init_frames);
  FrameLabels labels;
  json summary = {{"mode", mode}, {"frames", stream.size()}};
  if (mode == "naive") {
    const TrackerState st = run_naive(stream, tc);
    labels = naive_labels(st);
    summary["tracks"] = st.tracks.size();
    summary["unassigned"] = st.unassigned;
  } else if (mode == "reid") {
    const fs::path model_path = cfg.at("model").get<std::string>();
    const Model model = load_checkpoint(model_path);
    const json meta = checkpoint_meta(model_path);
    ReidConfig rc;
    rc.tracker = tc;
    const RenderSettings rs = meta.contains("render") ? RenderSettings::from_json(meta.at("render")) : RenderSettings{};
    rc.ring = rs.ring;
    rc.metric_crop = rs.metric_crop;
    Gallery gallery;
    if (!cfg.value("gallery", "").empty()) {
      gallery = Gallery::load(cfg.value("gallery", ""));
    } else {
      const Manifest m = Manifest::load(cfg.at("manifest").get<std::string>());
      EmbedOptions eo;
      eo.render = rs;
      const auto seqs = embed_split(m, "gallery", model, eo);
      gallery = build_gallery(group_by_identity(seqs), cfg.value("gallery_n", 10),
                              parse_gallery_mode(cfg.value("gallery_mode", std::string("svm"))));
    }
    const ReidResult r = reid_track(stream, model, gallery, rc);
    labels = r.labels;
    json chunks = json::array();
    for (const auto& c : r.chunks) {
      chunks.push_back({{"track", c.track},
                        {"first_frame", c.first_frame},
                        {"last_frame", c.last_frame},
                        {"frames", c.frames},
                        {"identity", c.identity},
                        {"view_votes", c.view_votes}});
    }
    write_json(run_dir / "chunks.json", chunks);
    summary["chunks"] = r.chunks.size();
    summary["skipped_chunks"] = r.skipped_chunks;
    summary["dropped_runs"] = r.chunk_stats.dropped_runs;
    summary["dropped_frames"] = r.chunk_stats.dropped_frames;
  } else {
    throw Error(ErrorKind::InvalidArgument, "tracker mode must be naive or reid");
  }
  bool has_truth = false;
  for (const auto& f : stream)
    for (const auto& d : f.detections) has_truth = has_truth || !d.truth.empty();
  if (has_truth) summary["identity_accuracy"] = identity_accuracy(stream, labels);
  write_labels(run_dir / "labels.jsonl", stream, labels);
  write_json(run_dir / "summary.json", summary);
  out << summary.dump(2) << "\n";
}

// ---- imprint ----------------------------------------------------------------

void run_imprint(const json& cfg, const fs::path& run_dir, std::ostream& out) {
  const DetectionStream stream = read_detection_stream(cfg.at("stream").get<std::string>());
  FrameLabels labels;
  if (!cfg.value("labels", "").empty()) {
    std::ifstream in(cfg.value("labels", ""));
    if (!in) throw Error(ErrorKind::Io, "cannot open " + cfg.value("labels", ""));
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json j = json::parse(line);
      labels[{j.at("frame").get<int>(), j.at("detection").get<int>()}] = j.at("identity").get<std::string>();
    }
  } else {
    for (int f = 0; f < static_cast<int>(stream.size()); ++f) {
      const auto& dets = stream[static_cast<std::size_t>(f)].detections;
      for (int d = 0; d < static_cast<int>(dets.size()); ++d)
        if (!dets[static_cast<std::size_t>(d)].truth.empty()) labels[{f, d}] = dets[static_cast<std::size_t>(d)].truth;
    }
  }
  std::map<std::string, std::string> roles;
  if (!cfg.value("manifest", "").empty()) roles = Manifest::load(cfg.value("manifest", "")).identity_roles();
  const std::string group_by = cfg.value("group_by", std::string("identity"));
  const auto filter = cfg.value("roles", std::vector<std::string>{});
  const auto key_of = [&](const std::string& identity) -> std::optional<std::string> {
    const auto it = roles.find(identity);
    const std::string role = it == roles.end() ? "" : it->second;
    if (!filter.empty() && std::find(filter.begin(), filter.end(), role) == filter.end()) return std::nullopt;
    if (group_by == "role") return role.empty() ? std::optional<std::string>("unknown") : role;
    return identity;
  };

  // Detections of one group in the same frame merge into one frame cloud.
  std::map<std::string, std::map<int, PointCloud>> by_frame;
  std::vector<Point3> all;
  for (const auto& [key, identity] : labels) {
    const auto group = key_of(identity);
    if (!group) continue;
    const auto& cloud = stream.at(static_cast<std::size_t>(key.first)).detections.at(static_cast<std::size_t>(key.second)).cloud;
    auto& merged = by_frame[*group][key.first];
    merged.points.insert(merged.points.end(), cloud.points.begin(), cloud.points.end());
    all.insert(all.end(), cloud.points.begin(), cloud.points.end());
  }
  std::map<std::string, std::vector<PointCloud>> groups;
  for (auto& [name, frames] : by_frame)
    for (auto& [f, cloud] : frames) groups[name].push_back(std::move(cloud));
  LabeledScene scene;
  if (!cfg.value("background", "").empty()) {
    const PersonSequence bg = read_sequence_file(cfg.value("background", ""));
    for (const auto& f : bg.frames) {
      for (const auto& p : f.points) {
        scene.points.push_back(p);
        scene.labels.push_back(PointLabel::Background);
      }
    }
  }
  std::vector<Point3> extent = all;
  extent.insert(extent.end(), scene.points.begin(), scene.points.end());
  if (extent.empty()) throw Error(ErrorKind::EmptyCloud, "no labeled detections to draw");
  const GridSpec spec = grid_covering(extent, cfg.value("cell", 0.05));
  const GrayLayer bg = project_background(scene, spec);
  std::vector<ImprintLayer> layers;
  for (const auto& [name, frames] : groups) {
    ImprintLayer l;
    l.label = name;
    l.grid = accumulate_imprint(frames, spec);
    l.hue = palette_hue(layers.size());
    layers.push_back(std::move(l));
  }
  const ImprintImage img = compose(bg, layers);
  const fs::path path = run_dir / "imprint.ppm";
  write_imprint(path, img);
  const json summary = {{"image", path.string()},
                        {"width", img.width},
                        {"height", img.height},
                        {"layers", layers.size()},
                        {"background_empty", bg.empty},
                        {"image_hash", hex64(hash_file(path))}};
  write_json(run_dir / "summary.json", summary);
  out << summary.dump(2) << "\n";
}

json synth_defaults() {
  return {{"scenario", ScenarioSpec{}.to_json()},
          {"out", ""},
          {"crossing", false},
          {"crossing_spec",
           {{"frames", 120}, {"dropout_start", 30}, {"dropout_length", 10}, {"lateral_offset", 0.4}, {"speed", 1.3},
            {"first", 0}, {"second", 1}, {"bystanders", 0}}}};
}

RenderSettings desk_render() {
  RenderSettings rs;
  rs.ring.views = 4;
  rs.ring.image_size = 32;
  return rs;
}

json train_defaults() {
  TrainConfig tc;
  tc.identities_per_batch = 4;
  tc.samples_per_identity = 4;
  tc.iterations = 1500;
  tc.checkpoint_every = 0;
  EncoderConfig ec;
  ec.base_channels = 8;
  ec.part_count = 4;
  ec.embed_dim = 32;
  ec.image_size = 32;
  return {{"manifest", ""}, {"cache", ""}, {"train", tc.to_json()}, {"encoder", ec.to_json()},
          {"render", desk_render().to_json()}};
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Point-cloud person re-identification toolkit", "pcreid"};
  app.require_subcommand(1, 1);
  std::string run_dir_flag;
  std::string out_root;
  app.add_option("--run-dir", run_dir_flag, "Write outputs into exactly this directory");
  app.add_option("--out-root", out_root, std::string("Root for timestamped run directories (env ") + kOutRootEnv + ")");

  std::map<std::string, Command> commands;
  const auto add = [&](const std::string& name, const std::string& help, json defaults) -> Command& {
    Command& c = commands[name];
    c.app = app.add_subcommand(name, help);
    c.defaults = std::move(defaults);
    c.app->add_option("--config", c.config_file, "JSON config file (defaults < file < flags)");
    return c;
  };

  {
    Command& c = add("synth", "Generate a synthetic dataset or a crossing detection stream", synth_defaults());
    c.flags.option<std::string>(c.app, "--out", "/out", "Dataset directory (default: <run>/dataset)");
    c.flags.option<std::uint64_t>(c.app, "--seed", "/scenario/seed", "Scenario seed");
    c.flags.option<int>(c.app, "--identities", "/scenario/identities", "Identity count");
    c.flags.option<int>(c.app, "--sequences", "/scenario/sequences_per_identity", "Sequences per identity");
    c.flags.option<int>(c.app, "--frames-min", "/scenario/frames_min", "Minimum frames per sequence");
    c.flags.option<int>(c.app, "--frames-max", "/scenario/frames_max", "Maximum frames per sequence");
    c.flags.option<double>(c.app, "--noise", "/scenario/noise_sigma", "Gaussian point noise sigma (m)");
    c.flags.option<double>(c.app, "--occlusion", "/scenario/occlusion_probability", "Per-sequence occlusion probability");
    c.flags.option<double>(c.app, "--variation", "/scenario/body_variation", "Body parameter spread in [0, 1]");
    c.flags.switch_on(c.app, "--scale-twins", "/scenario/scale_twins", "Identities in proportion-equal height pairs");
    c.flags.option<int>(c.app, "--gallery-n", "/scenario/gallery_per_identity", "Gallery sequences per identity");
    c.flags.option<int>(c.app, "--probes", "/scenario/probe_per_identity", "Probe sequences per identity");
    c.flags.switch_on(c.app, "--crossing", "/crossing", "Write a crossing-with-dropout detection stream");
    c.flags.option<int>(c.app, "--dropout-length", "/crossing_spec/dropout_length", "Dropout frames (0 disables)");
    c.flags.option<int>(c.app, "--bystanders", "/crossing_spec/bystanders", "Extra identities in the crossing stream");
    c.run = run_synth;
  }
  {
    json d = {{"manifest", ""}, {"cache", ""}, {"render", desk_render().to_json()}};
    Command& c = add("render", "Render and cache depth-view stacks for a manifest", d);
    c.flags.option<std::string>(c.app, "--manifest", "/manifest", "Dataset manifest");
    c.flags.option<std::string>(c.app, "--cache", "/cache", "Cache directory (default: <run>/cache)");
    c.flags.option<int>(c.app, "--views", "/render/views", "Virtual camera count");
    c.flags.option<int>(c.app, "--image-size", "/render/image_size", "Rendered image size (px)");
    c.flags.on_off(c.app, "--metric-crop", "/render/metric_crop", "Fixed 0-2 m crop (on) or tight rescaling (off)");
    c.run = run_render;
  }
  {
    Command& c = add("train", "Train the sequence encoder", train_defaults());
    c.flags.option<std::string>(c.app, "--manifest", "/manifest", "Dataset manifest");
    c.flags.option<std::string>(c.app, "--cache", "/cache", "Render cache directory");
    c.flags.option<std::uint64_t>(c.app, "--seed", "/train/seed", "Training seed");
    c.flags.option<int>(c.app, "--iterations", "/train/iterations", "SGD iterations");
    c.flags.option<int>(c.app, "--P", "/train/P", "Identities per batch");
    c.flags.option<int>(c.app, "--K", "/train/K", "Sequences per identity");
    c.flags.option<double>(c.app, "--lr", "/train/lr", "Initial learning rate");
    c.flags.option<int>(c.app, "--lr-step", "/train/lr_step", "Iterations per learning-rate decay");
    c.flags.option<double>(c.app, "--margin", "/train/margin", "Triplet margin");
    c.flags.option<double>(c.app, "--lambda", "/train/lambda", "Cross-entropy weight");
    c.flags.switch_on(c.app, "--random-erase", "/train/random_erase", "Enable random erasing");
    c.flags.switch_on(c.app, "--gaussian-noise", "/train/gaussian_noise", "Enable depth noise augmentation");
    c.flags.option<int>(c.app, "--base", "/encoder/base_channels", "Backbone base channels");
    c.flags.option<int>(c.app, "--parts", "/encoder/part_count", "Horizontal parts");
    c.flags.option<int>(c.app, "--dim", "/encoder/embed_dim", "Embedding dimension per part");
    c.flags.option<int>(c.app, "--views", "/render/views", "Virtual camera count");
    c.flags.option<int>(c.app, "--image-size", "/render/image_size", "Rendered image size (px)");
    c.flags.on_off(c.app, "--metric-crop", "/render/metric_crop", "Fixed 0-2 m crop (on) or tight rescaling (off)");
    c.run = [](const json& cfg, const fs::path& dir, std::ostream& o) {
      json fixed = cfg;
      fixed["encoder"]["image_size"] = cfg.at("render").at("image_size");
      run_train(fixed, dir, o);
    };
  }
  {
    json d = {{"manifest", ""}, {"model", ""}, {"cache", ""}, {"gallery_n", 10}, {"max_frames", 0},
              {"mode", "svm"}, {"metric_crop", nullptr}, {"probe_noise", 0.0}, {"noise_seed", 0},
              {"k", {1, 3}}, {"svm", {{"c", 1.0}, {"epochs", 200}}}};
    Command& c = add("eval", "Build a gallery, score the probe split and report metrics", d);
    c.flags.option<std::string>(c.app, "--manifest", "/manifest", "Dataset manifest");
    c.flags.option<std::string>(c.app, "--model", "/model", "Checkpoint index (model.json)");
    c.flags.option<std::string>(c.app, "--cache", "/cache", "Render cache directory");
    c.flags.option<int>(c.app, "--gallery-n", "/gallery_n", "Gallery sequences per identity");
    c.flags.option<int>(c.app, "--max-frames", "/max_frames", "Frames kept per sequence (0 = all)");
    c.flags.option<std::string>(c.app, "--mode", "/mode", "svm or nn")->check(CLI::IsMember({"svm", "nn"}));
    c.flags.on_off(c.app, "--metric-crop", "/metric_crop", "Override the checkpoint's crop mode");
    c.flags.option<double>(c.app, "--probe-noise", "/probe_noise", "Extra point noise on probes (m)");
    c.flags.option<std::vector<int>>(c.app, "--k", "/k", "CMC ranks");
    c.flags.option<double>(c.app, "--svm-c", "/svm/c", "SVM regularization C");
    c.run = run_eval;
  }
  std::string track_mode;
  {
    json d = {{"mode", "naive"}, {"stream", ""}, {"gate", 1.0}, {"init_frames", 1}, {"model", ""},
              {"gallery", ""}, {"manifest", ""}, {"gallery_n", 10}, {"gallery_mode", "svm"}};
    Command& c = add("track", "Track a detection stream (naive | reid)", d);
    c.app->add_option("mode", track_mode, "naive or reid")->check(CLI::IsMember({"naive", "reid"}));
    c.flags.option<std::string>(c.app, "--stream", "/stream", "Detection stream (JSON lines)");
    c.flags.option<double>(c.app, "--gate", "/gate", "Gate radius per frame step (m)");
    c.flags.option<int>(c.app, "--init-frames", "/init_frames", "Frames that may open new tracks");
    c.flags.option<std::string>(c.app, "--model", "/model", "Checkpoint for reid");
    c.flags.option<std::string>(c.app, "--gallery", "/gallery", "Saved gallery for reid");
    c.flags.option<std::string>(c.app, "--manifest", "/manifest", "Manifest to build the gallery from");
    c.flags.option<int>(c.app, "--gallery-n", "/gallery_n", "Gallery sequences per identity");
    c.run = run_track;
  }
  {
    json d = {{"stream", ""}, {"labels", ""}, {"background", ""}, {"manifest", ""}, {"cell", 0.05},
              {"group_by", "identity"}, {"roles", json::array()}};
    Command& c = add("imprint", "Render activity imprints from a (labeled) detection stream", d);
    c.flags.option<std::string>(c.app, "--stream", "/stream", "Detection stream (JSON lines)");
    c.flags.option<std::string>(c.app, "--labels", "/labels", "Labels from `track` (default: ground truth)");
    c.flags.option<std::string>(c.app, "--background", "/background", "Background points (sequence file)");
    c.flags.option<std::string>(c.app, "--manifest", "/manifest", "Manifest providing identity roles");
    c.flags.option<double>(c.app, "--cell", "/cell", "Grid cell size (m)");
    c.flags.option<std::string>(c.app, "--group-by", "/group_by", "identity or role")
        ->check(CLI::IsMember({"identity", "role"}));
    c.flags.option<std::vector<std::string>>(c.app, "--roles", "/roles", "Only draw these roles");
    c.run = run_imprint;
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 2;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  Command& cmd = commands.at(name);
  try {
    json cfg = cmd.defaults;
    if (!cmd.config_file.empty()) cfg.merge_patch(read_json_file(cmd.config_file));
    cmd.flags.apply(cfg);
    if (name == "track" && !track_mode.empty()) cfg["mode"] = track_mode;

    const fs::path run_dir = make_run_dir(name, run_dir_flag, out_root);
    json seed = nullptr;
    if (cfg.contains("scenario")) seed = cfg["scenario"]["seed"];
    if (cfg.contains("train")) seed = cfg["train"]["seed"];
    write_json(run_dir / "config.json", cfg);
    std::vector<std::string> argv_copy = args;
    write_json(run_dir / "run.json", {{"command", name},
                                      {"args", argv_copy},
                                      {"seed", seed},
                                      {"git_describe", PCREID_GIT_DESCRIBE},
                                      {"config_hash", hash_text(cfg.dump())}});
    cmd.run(cfg, run_dir, out);
    out << "run directory: " << run_dir.string() << "\n";
    return 0;
  } catch (const Error& e) {
    err << "pcreid " << name << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "pcreid " << name << ": " << e.what() << "\n";
    return 1;
  }
}

int dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace pcreid::cli
