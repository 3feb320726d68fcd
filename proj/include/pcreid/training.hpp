#pragma once

#include "pcreid/dataset.hpp"
#include "pcreid/encoder.hpp"
#include "pcreid/geometry.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace pcreid {

struct TrainConfig {
  double margin = 0.2;
  double lambda = 0.1;
  int identities_per_batch = 8;  // P
  int samples_per_identity = 8;  // K
  int iterations = 40000;
  double lr = 0.1;
  double lr_decay = 0.1;
  int lr_step = 10000;
  double weight_decay = 0.0005;
  std::uint64_t seed = 0;
  bool random_erase = false;
  bool gaussian_noise = false;
  double noise_sigma = 0.03;
  double erase_min = 0.02;
  double erase_max = 0.20;
  int min_frames = 10;
  int max_frames = 45;
  int checkpoint_every = 10000;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

double learning_rate(const TrainConfig& cfg, int iteration);

// One rendered sequence available to the sampler.
struct TrainSequence {
  DepthViewStack stack;
  int label = 0;
};

struct BatchItem {
  int sequence = 0;  // index into the pool
  int label = 0;
  int first_frame = 0;
  int frame_count = 0;
};

// P identities x K samples, identity-major.
struct Batch {
  std::vector<BatchItem> items;
  int identities = 0;
  int samples_per_identity = 0;

  std::vector<int> labels() const;
};

Batch sample_batch(const std::vector<TrainSequence>& pool, const TrainConfig& cfg, std::mt19937_64& rng);

// hinge = max(0, d(anchor, positive) - d(anchor, negative) + margin)
double triplet_hinge(double d_ap, double d_an, double margin);

// BatchAll triplet loss: per view, the mean hinge over every valid
// (anchor, positive, negative); then the mean over views. `parts[p]` is
// [embed_dim x groups] with group = sample * views + view. When `grad` is set
// it receives dLoss/dparts.
template <typename S>
S batchall_triplet(const std::vector<nn::Mat<S>>& parts, int views, const std::vector<int>& labels, double margin,
                   std::vector<nn::Mat<S>>* grad);

double batchall_triplet(const std::vector<MultiViewEmbedding>& embeddings, const std::vector<int>& labels,
                        double margin);

// Mean softmax cross-entropy over all (sample, view) columns of `logits`.
template <typename S>
S cross_entropy(const nn::Mat<S>& logits, int views, const std::vector<int>& labels, nn::Mat<S>* grad);

template <typename S>
struct LossTerms {
  S triplet = 0;
  S ce = 0;
  S total = 0;
};

template <typename S>
LossTerms<S> total_loss(const std::vector<nn::Mat<S>>& parts, const nn::Mat<S>& logits, int views,
                        const std::vector<int>& labels, const TrainConfig& cfg, std::vector<nn::Mat<S>>* d_parts,
                        nn::Mat<S>* d_logits);

struct EraseRect {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;
};

EraseRect sample_erase_rect(int image_height, int image_width, double min_fraction, double max_fraction,
                            std::mt19937_64& rng);

// Training-time image augmentation. Background pixels stay (0, 0, 0).
Image augment(const Image& image, const TrainConfig& cfg, std::mt19937_64& rng);

// Assembles the network input for a batch, applying augmentation when enabled.
template <typename S>
typename EncoderNetwork<S>::Batch assemble_batch(const std::vector<TrainSequence>& pool, const Batch& batch,
                                                 const TrainConfig& cfg, std::mt19937_64* augment_rng);

// w <- w - lr * (g + weight_decay * w) on trainable tensors.
template <typename S>
void sgd_step(ModelParams<S>& params, const ModelParams<S>& grads, double lr, double weight_decay);

struct RenderSettings {
  RingConfig ring;
  bool metric_crop = true;

  nlohmann::json to_json() const;
  static RenderSettings from_json(const nlohmann::json& j);
};

// Depth stacks keyed by sequence content and render settings. Without a
// directory every request renders afresh.
class RenderCache {
 public:
  explicit RenderCache(std::optional<std::filesystem::path> dir = std::nullopt) : dir_(std::move(dir)) {}

  DepthViewStack get(const Manifest& manifest, const ManifestEntry& entry, const RenderSettings& settings);
  std::size_t renders() const { return renders_; }

 private:
  std::optional<std::filesystem::path> dir_;
  std::size_t renders_ = 0;
};

void write_stack_file(const std::filesystem::path& path, const DepthViewStack& stack);
DepthViewStack read_stack_file(const std::filesystem::path& path);

struct TrainResult {
  Model model;
  std::vector<std::string> class_identities;  // label index -> identity
  std::filesystem::path checkpoint;
  std::filesystem::path loss_log;
};

// Full loop: sample, assemble (+augment), forward, loss, backward, SGD.
// Writes `loss.csv` and checkpoints into `out_dir`.
TrainResult train(const Manifest& manifest, const TrainConfig& cfg, EncoderConfig encoder_cfg,
                  const RenderSettings& render, const std::filesystem::path& out_dir, RenderCache* cache = nullptr,
                  std::ostream* progress = nullptr);

// Pool of rendered train-split sequences with labels in sorted identity order.
std::vector<TrainSequence> build_train_pool(const Manifest& manifest, const RenderSettings& render, RenderCache& cache,
                                            std::vector<std::string>& class_identities);

}  // namespace pcreid
