#pragma once

#include "pcreid/geometry.hpp"
#include "pcreid/nn_ops.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace pcreid {

struct EncoderConfig {
  int base_channels = 64;
  int part_count = 8;
  int embed_dim = 128;
  int class_count = 2;
  int image_size = 64;

  int feature_channels() const { return 8 * base_channels; }
  int feature_size() const { return image_size / 8; }
  int flat_dim() const { return part_count * embed_dim; }

  // Throws ConfigMismatch when the backbone output height is not divisible into parts.
  void validate() const;

  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j);
  bool operator==(const EncoderConfig&) const = default;
};

template <typename S>
struct ConvBnParams {
  nn::Mat<S> weight;  // [out x in*9]
  nn::Vec<S> gamma;
  nn::Vec<S> beta;
  nn::Vec<S> running_mean;
  nn::Vec<S> running_var;
};

// Parameters of the full encoder: residual backbone, part heads, BNNeck and classifier.
//
// Backbone (b = base_channels), all convolutions 3x3:
//   conv1 3->b, conv2 b->2b + pool, res1 (2 x 2b->2b), conv3 2b->4b + pool,
//   conv4 4b->8b + pool, res2 (2 x 8b->8b).
template <typename S>
struct ModelParams {
  EncoderConfig config;
  ConvBnParams<S> conv1, conv2, res1a, res1b, conv3, conv4, res2a, res2b;
  std::vector<nn::Mat<S>> part_heads;  // part_count x [embed_dim x feature_channels]
  nn::Vec<S> neck_gamma;
  nn::Vec<S> neck_running_mean;
  nn::Vec<S> neck_running_var;
  nn::Mat<S> classifier;  // [class_count x flat_dim]

  static ModelParams init(const EncoderConfig& config, std::uint64_t seed);
  // Same shapes, every tensor zero (gradient accumulator).
  static ModelParams zeros_like(const ModelParams& other);

  // Visits every tensor as (name, data, size, trainable). Running statistics are not trainable.
  void visit(const std::function<void(const std::string&, S*, long, bool)>& fn);
  void visit(const std::function<void(const std::string&, const S*, long, bool)>& fn) const;

  template <typename T>
  ModelParams<T> cast() const;
};

using Model = ModelParams<float>;

void save_checkpoint(const Model& model, const std::filesystem::path& index_path,
                     const nlohmann::json& extra_meta = nlohmann::json::object());
Model load_checkpoint(const std::filesystem::path& index_path);
// Also enforces the class count recorded in the checkpoint.
Model load_checkpoint(const std::filesystem::path& index_path, int expected_class_count);

struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> values;  // channel-major
};

// Per view a [part_count x embed_dim] matrix.
struct MultiViewEmbedding {
  std::vector<Eigen::MatrixXf> per_view;

  int views() const { return static_cast<int>(per_view.size()); }
  bool operator==(const MultiViewEmbedding& o) const;
};

FeatureMap encode_frame(const Image& image, const Model& model);
MultiViewEmbedding encode_sequence(const DepthViewStack& stack, const Model& model);
std::vector<Eigen::VectorXf> classify(const MultiViewEmbedding& embedding, const Model& model);

// Mean over parts of the Euclidean distance between part embeddings.
double embedding_distance(const Eigen::MatrixXf& a, const Eigen::MatrixXf& b);

// Writes a byte image into frame `frame` of a [3 x N*H*W] input matrix, scaled to [0, 1].
template <typename S>
void load_image_into(nn::Mat<S>& input, int frame, std::span<const std::uint8_t> rgb, int height, int width);

// Training-mode network over a batch of groups; keeps what the backward pass needs.
template <typename S>
class EncoderNetwork {
 public:
  struct Batch {
    nn::Mat<S> images;  // [3 x frames*H*W]
    int image_size = 0;
    std::vector<int> group_frames;  // frames per group, groups stored contiguously
  };
  struct Output {
    std::vector<nn::Mat<S>> parts;  // part_count x [embed_dim x groups]
    nn::Mat<S> logits;  // [class_count x groups]
  };

  // Batch statistics in every normalization layer. When `running` is set its
  // running statistics are updated.
  const Output& forward(const ModelParams<S>& params, const Batch& batch, ModelParams<S>* running = nullptr);
  // Accumulates parameter gradients for the last forward() into `grads`.
  void backward(const ModelParams<S>& params, const std::vector<nn::Mat<S>>& d_parts, const nn::Mat<S>& d_logits,
                ModelParams<S>& grads);

 private:
  struct Stage {
    nn::Mat<S> out;
    nn::BnCache<S> bn;
  };

  nn::Shape full_{}, half_{}, quarter_{}, eighth_{};
  const nn::Mat<S>* input_ = nullptr;
  Stage s1_, s2_, r1a_, r1b_, s3_, s4_, r2a_, r2b_;
  nn::Mat<S> p2_, p3_, p4_, o1_, o2_;
  std::vector<std::int32_t> idx2_, idx3_, idx4_;
  std::vector<int> group_offsets_;
  nn::Mat<S> temporal_;  // [C x groups*h*w]
  std::vector<std::int32_t> temporal_arg_;  // source frame per entry
  std::vector<nn::Mat<S>> strips_;  // part_count x [C x groups]
  std::vector<std::vector<std::int32_t>> strip_arg_;
  nn::Mat<S> flat_;  // [flat_dim x groups]
  nn::BnCache<S> neck_;
  nn::Mat<S> neck_out_;
  Output output_;
};

}  // namespace pcreid
