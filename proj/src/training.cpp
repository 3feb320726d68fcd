#include "pcreid/training.hpp"

#include "pcreid/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <ostream>
#include <set>

namespace pcreid {

namespace fs = std::filesystem;
using nn::Mat;

void TrainConfig::validate() const {
  if (identities_per_batch < 2 || samples_per_identity < 2) {
    throw Error(ErrorKind::InvalidArgument, "triplets need P >= 2 and K >= 2");
  }
  if (!(margin > 0.0)) throw Error(ErrorKind::InvalidArgument, "margin must be positive");
  if (iterations < 0 || lr_step < 1) throw Error(ErrorKind::InvalidArgument, "bad iteration schedule");
  if (min_frames < 1 || max_frames < min_frames) throw Error(ErrorKind::InvalidArgument, "bad frame window");
  if (!(erase_min > 0.0 && erase_min <= erase_max && erase_max < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "erase fractions must satisfy 0 < min <= max < 1");
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {{"margin", margin},
          {"lambda", lambda},
          {"P", identities_per_batch},
          {"K", samples_per_identity},
          {"iterations", iterations},
          {"lr", lr},
          {"lr_decay", lr_decay},
          {"lr_step", lr_step},
          {"weight_decay", weight_decay},
          {"seed", seed},
          {"random_erase", random_erase},
          {"gaussian_noise", gaussian_noise},
          {"noise_sigma", noise_sigma},
          {"erase_min", erase_min},
          {"erase_max", erase_max},
          {"min_frames", min_frames},
          {"max_frames", max_frames},
          {"checkpoint_every", checkpoint_every}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.margin = j.value("margin", c.margin);
  c.lambda = j.value("lambda", c.lambda);
  c.identities_per_batch = j.value("P", c.identities_per_batch);
  c.samples_per_identity = j.value("K", c.samples_per_identity);
  c.iterations = j.value("iterations", c.iterations);
  c.lr = j.value("lr", c.lr);
  c.lr_decay = j.value("lr_decay", c.lr_decay);
  c.lr_step = j.value("lr_step", c.lr_step);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.seed = j.value("seed", c.seed);
  c.random_erase = j.value("random_erase", c.random_erase);
  c.gaussian_noise = j.value("gaussian_noise", c.gaussian_noise);
  c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
  c.erase_min = j.value("erase_min", c.erase_min);
  c.erase_max = j.value("erase_max", c.erase_max);
  c.min_frames = j.value("min_frames", c.min_frames);
  c.max_frames = j.value("max_frames", c.max_frames);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  return c;
}

double learning_rate(const TrainConfig& cfg, int iteration) {
  return cfg.lr * std::pow(cfg.lr_decay, iteration / cfg.lr_step);
}

std::vector<int> Batch::labels() const {
  std::vector<int> out;
  out.reserve(items.size());
  for (const auto& item : items) out.push_back(item.label);
  return out;
}

namespace {

int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

// First `count` entries of `values` become a uniform draw without replacement.
void partial_shuffle(std::vector<int>& values, int count, std::mt19937_64& rng) {
  for (int i = 0; i < count; ++i) {
    const int j = uniform_int(rng, i, static_cast<int>(values.size()) - 1);
    std::swap(values[i], values[j]);
  }
}

}  // namespace

Batch sample_batch(const std::vector<TrainSequence>& pool, const TrainConfig& cfg, std::mt19937_64& rng) {
  std::map<int, std::vector<int>> by_label;
  for (int i = 0; i < static_cast<int>(pool.size()); ++i) by_label[pool[i].label].push_back(i);
  const int P = cfg.identities_per_batch;
  const int K = cfg.samples_per_identity;
  if (static_cast<int>(by_label.size()) < P) {
    throw Error(ErrorKind::DatasetTooSmall, "need " + std::to_string(P) + " identities, train split has " +
                                                std::to_string(by_label.size()));
  }
  std::vector<int> labels;
  for (const auto& [label, _] : by_label) labels.push_back(label);
  partial_shuffle(labels, P, rng);

  Batch batch;
  batch.identities = P;
  batch.samples_per_identity = K;
  for (int i = 0; i < P; ++i) {
    std::vector<int> members = by_label[labels[i]];
    std::vector<int> chosen;
    if (static_cast<int>(members.size()) >= K) {
      partial_shuffle(members, K, rng);
      chosen.assign(members.begin(), members.begin() + K);
    } else {
      for (int k = 0; k < K; ++k) chosen.push_back(members[uniform_int(rng, 0, static_cast<int>(members.size()) - 1)]);
    }
    for (int seq : chosen) {
      const int L = pool[seq].stack.frames;
      const int hi = std::min(cfg.max_frames, L);
      const int lo = std::min(cfg.min_frames, hi);
      BatchItem item;
      item.sequence = seq;
      item.label = labels[i];
      item.frame_count = uniform_int(rng, lo, hi);
      item.first_frame = uniform_int(rng, 0, L - item.frame_count);
      batch.items.push_back(item);
    }
  }
  return batch;
}

double triplet_hinge(double d_ap, double d_an, double margin) { return std::max(0.0, d_ap - d_an + margin); }

template <typename S>
S batchall_triplet(const std::vector<Mat<S>>& parts, int views, const std::vector<int>& labels, double margin,
                   std::vector<Mat<S>>* grad) {
  const int P = static_cast<int>(parts.size());
  const int n = static_cast<int>(labels.size());
  if (P == 0 || parts[0].cols() != static_cast<long>(n) * views) {
    throw Error(ErrorKind::ConfigMismatch, "triplet loss: embedding columns do not match samples x views");
  }
  if (grad != nullptr) {
    grad->resize(P);
    for (int p = 0; p < P; ++p) (*grad)[p].setZero(parts[p].rows(), parts[p].cols());
  }
  S loss = 0;
  Mat<S> dist(n, n);
  Mat<S> coef(n, n);
  for (int v = 0; v < views; ++v) {
    dist.setZero();
    for (int a = 0; a < n; ++a) {
      for (int b = a + 1; b < n; ++b) {
        S d = 0;
        for (int p = 0; p < P; ++p) d += (parts[p].col(a * views + v) - parts[p].col(b * views + v)).norm();
        dist(a, b) = dist(b, a) = d / S(P);
      }
    }
    long triplets = 0;
    S sum = 0;
    coef.setZero();
    for (int a = 0; a < n; ++a) {
      for (int pos = 0; pos < n; ++pos) {
        if (pos == a || labels[pos] != labels[a]) continue;
        for (int neg = 0; neg < n; ++neg) {
          if (labels[neg] == labels[a]) continue;
          ++triplets;
          const S h = dist(a, pos) - dist(a, neg) + S(margin);
          if (h > S(0)) {
            sum += h;
            coef(a, pos) += S(1);
            coef(a, neg) -= S(1);
          }
        }
      }
    }
    if (triplets == 0) continue;
    loss += sum / S(triplets) / S(views);
    if (grad == nullptr) continue;
    const S scale = S(1) / (S(triplets) * S(views) * S(P));
    for (int a = 0; a < n; ++a) {
      for (int b = 0; b < n; ++b) {
        if (coef(a, b) == S(0)) continue;
        for (int p = 0; p < P; ++p) {
          const auto diff = (parts[p].col(a * views + v) - parts[p].col(b * views + v)).eval();
          const S norm = diff.norm();
          if (norm <= S(0)) continue;
          const auto g = (diff * (coef(a, b) * scale / norm)).eval();
          (*grad)[p].col(a * views + v) += g;
          (*grad)[p].col(b * views + v) -= g;
        }
      }
    }
  }
  return loss;
}

template float batchall_triplet<float>(const std::vector<Mat<float>>&, int, const std::vector<int>&, double,
                                       std::vector<Mat<float>>*);
template double batchall_triplet<double>(const std::vector<Mat<double>>&, int, const std::vector<int>&, double,
                                         std::vector<Mat<double>>*);

double batchall_triplet(const std::vector<MultiViewEmbedding>& embeddings, const std::vector<int>& labels,
                        double margin) {
  if (embeddings.empty()) return 0.0;
  const int views = embeddings[0].views();
  const int P = static_cast<int>(embeddings[0].per_view[0].rows());
  const int d = static_cast<int>(embeddings[0].per_view[0].cols());
  const int n = static_cast<int>(embeddings.size());
  std::vector<Mat<double>> parts(P, Mat<double>(d, n * views));
  for (int s = 0; s < n; ++s) {
    for (int v = 0; v < views; ++v) {
      for (int p = 0; p < P; ++p) parts[p].col(s * views + v) = embeddings[s].per_view[v].row(p).transpose().cast<double>();
    }
  }
  return batchall_triplet<double>(parts, views, labels, margin, nullptr);
}

template <typename S>
S cross_entropy(const Mat<S>& logits, int views, const std::vector<int>& labels, Mat<S>* grad) {
  const long G = logits.cols();
  if (G != static_cast<long>(labels.size()) * views) {
    throw Error(ErrorKind::ConfigMismatch, "cross-entropy: logit columns do not match samples x views");
  }
  if (grad != nullptr) grad->setZero(logits.rows(), logits.cols());
  S loss = 0;
  for (long g = 0; g < G; ++g) {
    const int label = labels[g / views];
    if (label < 0 || label >= logits.rows()) {
      throw Error(ErrorKind::LabelOutOfRange, "label " + std::to_string(label) + " with " +
                                                  std::to_string(logits.rows()) + " classes");
    }
    const auto col = logits.col(g);
    const S mx = col.maxCoeff();
    const S z = (col.array() - mx).exp().sum();
    loss += std::log(z) + mx - col[label];
    if (grad != nullptr) {
      grad->col(g) = ((col.array() - mx).exp() / z).matrix();
      (*grad)(label, g) -= S(1);
    }
  }
  if (grad != nullptr) *grad /= S(G);
  return loss / S(G);
}

template float cross_entropy<float>(const Mat<float>&, int, const std::vector<int>&, Mat<float>*);
template double cross_entropy<double>(const Mat<double>&, int, const std::vector<int>&, Mat<double>*);

template <typename S>
LossTerms<S> total_loss(const std::vector<Mat<S>>& parts, const Mat<S>& logits, int views,
                        const std::vector<int>& labels, const TrainConfig& cfg, std::vector<Mat<S>>* d_parts,
                        Mat<S>* d_logits) {
  LossTerms<S> t;
  t.ce = cross_entropy<S>(logits, views, labels, d_logits);
  t.triplet = batchall_triplet<S>(parts, views, labels, cfg.margin, d_parts);
  t.total = t.triplet + S(cfg.lambda) * t.ce;
  if (d_logits != nullptr) *d_logits *= S(cfg.lambda);
  return t;
}

template LossTerms<float> total_loss<float>(const std::vector<Mat<float>>&, const Mat<float>&, int,
                                            const std::vector<int>&, const TrainConfig&, std::vector<Mat<float>>*,
                                            Mat<float>*);
template LossTerms<double> total_loss<double>(const std::vector<Mat<double>>&, const Mat<double>&, int,
                                              const std::vector<int>&, const TrainConfig&, std::vector<Mat<double>>*,
                                              Mat<double>*);

EraseRect sample_erase_rect(int H, int W, double min_fraction, double max_fraction, std::mt19937_64& rng) {
  const double total = static_cast<double>(H) * W;
  std::uniform_real_distribution<double> area_dist(min_fraction, max_fraction);
  std::uniform_real_distribution<double> log_ratio(std::log(0.3), std::log(1.0 / 0.3));
  for (int attempt = 0; attempt < 100; ++attempt) {
    const double area = area_dist(rng) * total;
    const double ratio = std::exp(log_ratio(rng));
    const int h = static_cast<int>(std::lround(std::sqrt(area * ratio)));
    const int w = static_cast<int>(std::lround(std::sqrt(area / ratio)));
    const double fraction = static_cast<double>(h) * w / total;
    if (h < 1 || w < 1 || h > H || w > W || fraction < min_fraction || fraction > max_fraction) continue;
    return {uniform_int(rng, 0, H - h), uniform_int(rng, 0, W - w), h, w};
  }
  // Fall back to a full-width band whose height keeps the fraction in range.
  const int h = std::clamp(static_cast<int>(std::ceil(min_fraction * H)), 1, H);
  return {uniform_int(rng, 0, H - h), 0, h, W};
}

Image augment(const Image& image, const TrainConfig& cfg, std::mt19937_64& rng) {
  Image out = image;
  if (cfg.random_erase) {
    std::bernoulli_distribution coin(0.5);
    if (coin(rng)) {
      const EraseRect r = sample_erase_rect(image.height, image.width, cfg.erase_min, cfg.erase_max, rng);
      for (int y = r.top; y < r.top + r.height; ++y) {
        for (int x = r.left; x < r.left + r.width; ++x) std::fill_n(out.pixel(y, x), 3, std::uint8_t{0});
      }
    }
  }
  if (cfg.gaussian_noise) {
    std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
    for (int y = 0; y < out.height; ++y) {
      for (int x = 0; x < out.width; ++x) {
        if (!out.occupied(y, x)) continue;
        const double d = std::clamp(depth_from_color(out.pixel(y, x)) + noise(rng), 0.0, 1.0);
        const auto c = depth_color(d);
        std::copy(c.begin(), c.end(), out.pixel(y, x));
      }
    }
  }
  return out;
}

template <typename S>
typename EncoderNetwork<S>::Batch assemble_batch(const std::vector<TrainSequence>& pool, const Batch& batch,
                                                 const TrainConfig& cfg, std::mt19937_64* augment_rng) {
  typename EncoderNetwork<S>::Batch input;
  if (batch.items.empty()) return input;
  const DepthViewStack& first = pool[batch.items[0].sequence].stack;
  const int views = first.views;
  const int H = first.height;
  const int W = first.width;
  input.image_size = H;
  long total = 0;
  for (const auto& item : batch.items) total += static_cast<long>(item.frame_count) * views;
  input.images.resize(3, total * H * W);
  int frame = 0;
  const bool augmenting = augment_rng != nullptr && (cfg.random_erase || cfg.gaussian_noise);
  for (const auto& item : batch.items) {
    const DepthViewStack& stack = pool[item.sequence].stack;
    if (stack.views != views || stack.height != H || stack.width != W) {
      throw Error(ErrorKind::ConfigMismatch, "inconsistent stack shapes in batch");
    }
    for (int v = 0; v < views; ++v) {
      input.group_frames.push_back(item.frame_count);
      for (int l = item.first_frame; l < item.first_frame + item.frame_count; ++l) {
        if (augmenting) {
          const Image img = augment(stack.image_copy(v, l), cfg, *augment_rng);
          load_image_into<S>(input.images, frame++, img.rgb, H, W);
        } else {
          load_image_into<S>(input.images, frame++, stack.image(v, l), H, W);
        }
      }
    }
  }
  return input;
}

template EncoderNetwork<float>::Batch assemble_batch<float>(const std::vector<TrainSequence>&, const Batch&,
                                                            const TrainConfig&, std::mt19937_64*);
template EncoderNetwork<double>::Batch assemble_batch<double>(const std::vector<TrainSequence>&, const Batch&,
                                                              const TrainConfig&, std::mt19937_64*);

template <typename S>
void sgd_step(ModelParams<S>& params, const ModelParams<S>& grads, double lr, double weight_decay) {
  std::vector<const S*> g;
  grads.visit([&](const std::string&, const S* data, long, bool) { g.push_back(data); });
  std::size_t i = 0;
  params.visit([&](const std::string&, S* data, long n, bool trainable) {
    const S* gi = g[i++];
    if (!trainable) return;
    for (long k = 0; k < n; ++k) data[k] -= S(lr) * (gi[k] + S(weight_decay) * data[k]);
  });
}

template void sgd_step<float>(ModelParams<float>&, const ModelParams<float>&, double, double);
template void sgd_step<double>(ModelParams<double>&, const ModelParams<double>&, double, double);

nlohmann::json RenderSettings::to_json() const {
  return {{"views", ring.views},
          {"radius", ring.radius},
          {"camera_height", ring.camera_height},
          {"image_size", ring.image_size},
          {"metric_crop", metric_crop}};
}

RenderSettings RenderSettings::from_json(const nlohmann::json& j) {
  RenderSettings s;
  s.ring.views = j.value("views", s.ring.views);
  s.ring.radius = j.value("radius", s.ring.radius);
  s.ring.camera_height = j.value("camera_height", s.ring.camera_height);
  s.ring.image_size = j.value("image_size", s.ring.image_size);
  s.metric_crop = j.value("metric_crop", s.metric_crop);
  return s;
}

void write_stack_file(const fs::path& path, const DepthViewStack& stack) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  const auto put = [&](const auto& v) { out.write(reinterpret_cast<const char*>(&v), sizeof(v)); };
  out.write("PSTK", 4);
  put(static_cast<std::uint32_t>(stack.views));
  put(static_cast<std::uint32_t>(stack.frames));
  put(static_cast<std::uint32_t>(stack.height));
  put(static_cast<std::uint32_t>(stack.width));
  put(static_cast<std::uint8_t>(stack.metric_crop ? 1 : 0));
  put(stack.ring.radius);
  put(stack.ring.camera_height);
  out.write(reinterpret_cast<const char*>(stack.data.data()), static_cast<std::streamsize>(stack.data.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

DepthViewStack read_stack_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "PSTK", 4) != 0) throw Error(ErrorKind::Io, "bad stack file " + path.string());
  const auto get = [&](auto& v) { in.read(reinterpret_cast<char*>(&v), sizeof(v)); };
  std::uint32_t views = 0, frames = 0, height = 0, width = 0;
  std::uint8_t crop = 0;
  DepthViewStack s;
  get(views);
  get(frames);
  get(height);
  get(width);
  get(crop);
  get(s.ring.radius);
  get(s.ring.camera_height);
  s.views = static_cast<int>(views);
  s.frames = static_cast<int>(frames);
  s.height = static_cast<int>(height);
  s.width = static_cast<int>(width);
  s.metric_crop = crop != 0;
  s.ring.views = s.views;
  s.ring.image_size = s.height;
  s.data.resize(static_cast<std::size_t>(s.views) * s.frames * s.image_bytes());
  in.read(reinterpret_cast<char*>(s.data.data()), static_cast<std::streamsize>(s.data.size()));
  if (!in) throw Error(ErrorKind::Io, "truncated stack file " + path.string());
  return s;
}

DepthViewStack RenderCache::get(const Manifest& manifest, const ManifestEntry& entry, const RenderSettings& settings) {
  const fs::path seq_path = manifest.resolve(entry);
  if (dir_) {
    const std::string tag = settings.to_json().dump();
    const std::uint64_t key =
        hash_bytes({reinterpret_cast<const std::uint8_t*>(tag.data()), tag.size()}, hash_file(seq_path));
    const fs::path cached = *dir_ / (hex64(key) + ".pstk");
    if (fs::exists(cached)) return read_stack_file(cached);
    DepthViewStack stack = render_sequence(manifest.load_sequence(entry), settings.ring, settings.metric_crop);
    ++renders_;
    write_stack_file(cached, stack);
    return stack;
  }
  ++renders_;
  return render_sequence(manifest.load_sequence(entry), settings.ring, settings.metric_crop);
}

std::vector<TrainSequence> build_train_pool(const Manifest& manifest, const RenderSettings& render, RenderCache& cache,
                                            std::vector<std::string>& class_identities) {
  const auto groups = manifest.by_identity("train");
  if (groups.empty()) throw Error(ErrorKind::DatasetTooSmall, "train split is empty");
  class_identities.clear();
  std::vector<TrainSequence> pool;
  for (const auto& [identity, entries] : groups) {
    const int label = static_cast<int>(class_identities.size());
    class_identities.push_back(identity);
    for (const auto& e : entries) pool.push_back({cache.get(manifest, e, render), label});
  }
  return pool;
}

TrainResult train(const Manifest& manifest, const TrainConfig& cfg, EncoderConfig encoder_cfg,
                  const RenderSettings& render, const fs::path& out_dir, RenderCache* cache, std::ostream* progress) {
  cfg.validate();
  RenderCache local_cache;
  RenderCache& rc = cache != nullptr ? *cache : local_cache;
  TrainResult result;
  const std::vector<TrainSequence> pool = build_train_pool(manifest, render, rc, result.class_identities);
  encoder_cfg.class_count = static_cast<int>(result.class_identities.size());
  encoder_cfg.image_size = render.ring.image_size;
  encoder_cfg.validate();

  fs::create_directories(out_dir);
  Model model = Model::init(encoder_cfg, cfg.seed);
  Model grads = Model::zeros_like(model);
  std::mt19937_64 sampler(cfg.seed ^ 0x5eed5a3b1e000001ULL);
  std::mt19937_64 augmenter(cfg.seed ^ 0x5eed0a06e0000002ULL);
  EncoderNetwork<float> net;

  const nlohmann::json meta = {{"train_config", cfg.to_json()},
                               {"render", render.to_json()},
                               {"class_identities", result.class_identities}};
  result.loss_log = out_dir / "loss.csv";
  std::ofstream log(result.loss_log, std::ios::trunc);
  if (!log) throw Error(ErrorKind::Io, "cannot write " + result.loss_log.string());
  log << "iteration,lr,triplet,ce,total\n";

  const int views = render.ring.views;
  std::vector<Mat<float>> d_parts;
  Mat<float> d_logits;
  for (int it = 0; it < cfg.iterations; ++it) {
    const double lr = learning_rate(cfg, it);
    const Batch batch = sample_batch(pool, cfg, sampler);
    const auto input = assemble_batch<float>(pool, batch, cfg, &augmenter);
    const auto& out = net.forward(model, input, &model);
    const auto terms = total_loss<float>(out.parts, out.logits, views, batch.labels(), cfg, &d_parts, &d_logits);
    if (!std::isfinite(terms.total)) {
      char msg[256];
      std::snprintf(msg, sizeof msg, "iteration %d, lr %.6g, triplet %.6g, ce %.6g, total %.6g", it, lr,
                    static_cast<double>(terms.triplet), static_cast<double>(terms.ce),
                    static_cast<double>(terms.total));
      throw Error(ErrorKind::NonFiniteLoss, msg);
    }
    grads.visit([](const std::string&, float* data, long n, bool) { std::fill(data, data + n, 0.0f); });
    net.backward(model, d_parts, d_logits, grads);
    sgd_step(model, grads, lr, cfg.weight_decay);

    char line[160];
    std::snprintf(line, sizeof line, "%d,%.9g,%.9g,%.9g,%.9g\n", it, lr, static_cast<double>(terms.triplet),
                  static_cast<double>(terms.ce), static_cast<double>(terms.total));
    log << line;
    if (progress != nullptr && (it % 50 == 0 || it + 1 == cfg.iterations)) *progress << "train " << line << std::flush;
    if (cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0 && it + 1 < cfg.iterations) {
      nlohmann::json m = meta;
      m["iteration"] = it + 1;
      save_checkpoint(model, out_dir / ("checkpoint_" + std::to_string(it + 1) + ".json"), m);
    }
  }
  nlohmann::json m = meta;
  m["iteration"] = cfg.iterations;
  result.checkpoint = out_dir / "model.json";
  save_checkpoint(model, result.checkpoint, m);
  result.model = std::move(model);
  return result;
}

}  // namespace pcreid
