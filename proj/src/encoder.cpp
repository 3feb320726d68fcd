#include "pcreid/encoder.hpp"

#include "pcreid/error.hpp"
#include "pcreid/tensor_archive.hpp"

#include <cmath>
#include <random>
#include <tuple>

namespace pcreid {

using nn::Mat;
using nn::Shape;
using nn::Vec;

void EncoderConfig::validate() const {
  if (base_channels < 1 || embed_dim < 1 || part_count < 1 || class_count < 1) {
    throw Error(ErrorKind::ConfigMismatch, "encoder sizes must be positive");
  }
  if (image_size < 8 || image_size % 8 != 0) {
    throw Error(ErrorKind::ConfigMismatch, "image size must be a positive multiple of 8");
  }
  if (feature_size() % part_count != 0) {
    throw Error(ErrorKind::ConfigMismatch, "part count " + std::to_string(part_count) +
                                               " does not divide backbone output height " +
                                               std::to_string(feature_size()));
  }
}

nlohmann::json EncoderConfig::to_json() const {
  return {{"base_channels", base_channels},
          {"part_count", part_count},
          {"embed_dim", embed_dim},
          {"class_count", class_count},
          {"image_size", image_size}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.base_channels = j.value("base_channels", c.base_channels);
  c.part_count = j.value("part_count", c.part_count);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.class_count = j.value("class_count", c.class_count);
  c.image_size = j.value("image_size", c.image_size);
  return c;
}

namespace {

template <typename S, typename Rng>
Mat<S> random_matrix(long rows, long cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Mat<S> m(rows, cols);
  for (long i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(dist(rng));
  return m;
}

template <typename S, typename Rng>
ConvBnParams<S> make_conv(int in, int out, Rng& rng) {
  ConvBnParams<S> p;
  p.weight = random_matrix<S>(out, in * 9, std::sqrt(2.0 / (in * 9)), rng);
  p.gamma = Vec<S>::Ones(out);
  p.beta = Vec<S>::Zero(out);
  p.running_mean = Vec<S>::Zero(out);
  p.running_var = Vec<S>::Ones(out);
  return p;
}

// Uniform traversal of every tensor for both const and mutable params.
template <typename Params, typename Fn>
void visit_tensors(Params& p, Fn&& fn) {
  const auto conv = [&](const std::string& name, auto& c) {
    fn(name + ".weight", c.weight.data(), c.weight.size(), true);
    fn(name + ".bn.gamma", c.gamma.data(), c.gamma.size(), true);
    fn(name + ".bn.beta", c.beta.data(), c.beta.size(), true);
    fn(name + ".bn.running_mean", c.running_mean.data(), c.running_mean.size(), false);
    fn(name + ".bn.running_var", c.running_var.data(), c.running_var.size(), false);
  };
  conv("conv1", p.conv1);
  conv("conv2", p.conv2);
  conv("res1.conv_a", p.res1a);
  conv("res1.conv_b", p.res1b);
  conv("conv3", p.conv3);
  conv("conv4", p.conv4);
  conv("res2.conv_a", p.res2a);
  conv("res2.conv_b", p.res2b);
  for (std::size_t i = 0; i < p.part_heads.size(); ++i) {
    fn("parts." + std::to_string(i) + ".weight", p.part_heads[i].data(), p.part_heads[i].size(), true);
  }
  fn(std::string("neck.gamma"), p.neck_gamma.data(), p.neck_gamma.size(), true);
  fn(std::string("neck.running_mean"), p.neck_running_mean.data(), p.neck_running_mean.size(), false);
  fn(std::string("neck.running_var"), p.neck_running_var.data(), p.neck_running_var.size(), false);
  fn(std::string("classifier.weight"), p.classifier.data(), p.classifier.size(), true);
}

template <typename S>
std::vector<long> tensor_shape(const ModelParams<S>& p, const std::string& name) {
  const auto& c = p.config;
  const long C = c.feature_channels();
  if (name.rfind("parts.", 0) == 0) return {c.embed_dim, C};
  if (name == "classifier.weight") return {c.class_count, c.flat_dim()};
  if (name.rfind("neck.", 0) == 0) return {c.flat_dim()};
  const auto conv_shape = [&](const ConvBnParams<S>& cp) -> std::vector<long> {
    if (name.ends_with(".weight")) return {cp.weight.rows(), cp.weight.cols() / 9, 3, 3};
    return {cp.gamma.size()};
  };
  if (name.rfind("conv1.", 0) == 0) return conv_shape(p.conv1);
  if (name.rfind("conv2.", 0) == 0) return conv_shape(p.conv2);
  if (name.rfind("res1.conv_a.", 0) == 0) return conv_shape(p.res1a);
  if (name.rfind("res1.conv_b.", 0) == 0) return conv_shape(p.res1b);
  if (name.rfind("conv3.", 0) == 0) return conv_shape(p.conv3);
  if (name.rfind("conv4.", 0) == 0) return conv_shape(p.conv4);
  if (name.rfind("res2.conv_a.", 0) == 0) return conv_shape(p.res2a);
  return conv_shape(p.res2b);
}

}  // namespace

template <typename S>
ModelParams<S> ModelParams<S>::init(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const int b = config.base_channels;
  ModelParams p;
  p.config = config;
  p.conv1 = make_conv<S>(3, b, rng);
  p.conv2 = make_conv<S>(b, 2 * b, rng);
  p.res1a = make_conv<S>(2 * b, 2 * b, rng);
  p.res1b = make_conv<S>(2 * b, 2 * b, rng);
  p.conv3 = make_conv<S>(2 * b, 4 * b, rng);
  p.conv4 = make_conv<S>(4 * b, 8 * b, rng);
  p.res2a = make_conv<S>(8 * b, 8 * b, rng);
  p.res2b = make_conv<S>(8 * b, 8 * b, rng);
  const int C = config.feature_channels();
  for (int i = 0; i < config.part_count; ++i) {
    p.part_heads.push_back(random_matrix<S>(config.embed_dim, C, std::sqrt(1.0 / C), rng));
  }
  p.neck_gamma = Vec<S>::Ones(config.flat_dim());
  p.neck_running_mean = Vec<S>::Zero(config.flat_dim());
  p.neck_running_var = Vec<S>::Ones(config.flat_dim());
  p.classifier = random_matrix<S>(config.class_count, config.flat_dim(), std::sqrt(1.0 / config.flat_dim()), rng);
  return p;
}

template <typename S>
ModelParams<S> ModelParams<S>::zeros_like(const ModelParams& other) {
  ModelParams z = other;
  z.visit([](const std::string&, S* data, long n, bool) { std::fill(data, data + n, S(0)); });
  return z;
}

template <typename S>
void ModelParams<S>::visit(const std::function<void(const std::string&, S*, long, bool)>& fn) {
  visit_tensors(*this, fn);
}

template <typename S>
void ModelParams<S>::visit(const std::function<void(const std::string&, const S*, long, bool)>& fn) const {
  visit_tensors(*this, fn);
}

template <typename S>
template <typename T>
ModelParams<T> ModelParams<S>::cast() const {
  ModelParams<T> out = ModelParams<T>::init(config, 0);
  std::vector<const S*> src;
  visit([&](const std::string&, const S* data, long, bool) { src.push_back(data); });
  std::size_t i = 0;
  out.visit([&](const std::string&, T* data, long n, bool) {
    for (long k = 0; k < n; ++k) data[k] = static_cast<T>(src[i][k]);
    ++i;
  });
  return out;
}

template struct ModelParams<float>;
template struct ModelParams<double>;
template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<double>::cast<float>() const;

void save_checkpoint(const Model& model, const std::filesystem::path& index_path, const nlohmann::json& extra_meta) {
  TensorArchive archive;
  archive.meta()["kind"] = "encoder-checkpoint";
  archive.meta()["config"] = model.config.to_json();
  for (const auto& [key, value] : extra_meta.items()) archive.meta()[key] = value;
  model.visit([&](const std::string& name, const float* data, long n, bool) {
    archive.add(name, tensor_shape(model, name), {data, static_cast<std::size_t>(n)});
  });
  archive.save(index_path);
}

Model load_checkpoint(const std::filesystem::path& index_path) {
  const TensorArchive archive = TensorArchive::load(index_path);
  if (archive.meta().value("kind", "") != "encoder-checkpoint") {
    throw Error(ErrorKind::ConfigMismatch, index_path.string() + " is not an encoder checkpoint");
  }
  Model model = Model::init(EncoderConfig::from_json(archive.meta().at("config")), 0);
  model.visit([&](const std::string& name, float* data, long n, bool) {
    const auto& entry = archive.get(name);
    if (static_cast<long>(entry.values.size()) != n) {
      throw Error(ErrorKind::ConfigMismatch, "tensor '" + name + "' has the wrong size in " + index_path.string());
    }
    std::copy(entry.values.begin(), entry.values.end(), data);
  });
  return model;
}

Model load_checkpoint(const std::filesystem::path& index_path, int expected_class_count) {
  Model model = load_checkpoint(index_path);
  if (model.config.class_count != expected_class_count) {
    throw Error(ErrorKind::ConfigMismatch, "checkpoint has " + std::to_string(model.config.class_count) +
                                               " classes, expected " + std::to_string(expected_class_count));
  }
  return model;
}

bool MultiViewEmbedding::operator==(const MultiViewEmbedding& o) const {
  if (per_view.size() != o.per_view.size()) return false;
  for (std::size_t v = 0; v < per_view.size(); ++v) {
    if (per_view[v].rows() != o.per_view[v].rows() || per_view[v].cols() != o.per_view[v].cols()) return false;
    if (per_view[v] != o.per_view[v]) return false;
  }
  return true;
}

template <typename S>
void load_image_into(Mat<S>& input, int frame, std::span<const std::uint8_t> rgb, int height, int width) {
  const long HW = static_cast<long>(height) * width;
  for (long i = 0; i < HW; ++i) {
    for (int c = 0; c < 3; ++c) input(c, frame * HW + i) = static_cast<S>(rgb[i * 3 + c]) / S(255);
  }
}

template void load_image_into<float>(Mat<float>&, int, std::span<const std::uint8_t>, int, int);
template void load_image_into<double>(Mat<double>&, int, std::span<const std::uint8_t>, int, int);

namespace {

// Inference backbone with stored statistics. One GEMM per frame keeps every
// frame's features independent of its batch neighbours, bit for bit.
template <typename S>
Mat<S> backbone_eval(const ModelParams<S>& p, const Mat<S>& images, Shape full) {
  const auto stage = [](const ConvBnParams<S>& cp, const Mat<S>& x, Shape s, bool relu) {
    Mat<S> z;
    nn::conv3x3_forward(cp.weight, x, s, z, 1);
    nn::batchnorm_eval(z, cp.gamma, &cp.beta, cp.running_mean, cp.running_var);
    if (relu) nn::relu_inplace(z);
    return z;
  };
  const Shape half = full.pooled();
  const Shape quarter = half.pooled();
  const Shape eighth = quarter.pooled();
  Mat<S> a = stage(p.conv1, images, full, true);
  Mat<S> b = stage(p.conv2, a, full, true);
  Mat<S> pooled;
  nn::maxpool2_forward(b, full, pooled, nullptr);
  Mat<S> r = stage(p.res1a, pooled, half, true);
  Mat<S> o = stage(p.res1b, r, half, false);
  o = (o + pooled).cwiseMax(S(0));
  b = stage(p.conv3, o, half, true);
  nn::maxpool2_forward(b, half, pooled, nullptr);
  b = stage(p.conv4, pooled, quarter, true);
  nn::maxpool2_forward(b, quarter, pooled, nullptr);
  r = stage(p.res2a, pooled, eighth, true);
  o = stage(p.res2b, r, eighth, false);
  return (o + pooled).cwiseMax(S(0));
}

void check_image(const EncoderConfig& config, int height, int width) {
  if (height != config.image_size || width != config.image_size) {
    throw Error(ErrorKind::ConfigMismatch, "image is " + std::to_string(height) + "x" + std::to_string(width) +
                                               ", encoder expects " + std::to_string(config.image_size));
  }
}

}  // namespace

FeatureMap encode_frame(const Image& image, const Model& model) {
  check_image(model.config, image.height, image.width);
  Mat<float> input(3, static_cast<long>(image.height) * image.width);
  load_image_into<float>(input, 0, image.rgb, image.height, image.width);
  const Mat<float> f = backbone_eval(model, input, Shape{1, image.height, image.width});
  FeatureMap fm;
  fm.channels = static_cast<int>(f.rows());
  fm.height = model.config.feature_size();
  fm.width = model.config.feature_size();
  fm.values.assign(f.data(), f.data() + f.size());
  return fm;
}

MultiViewEmbedding encode_sequence(const DepthViewStack& stack, const Model& model) {
  const auto& cfg = model.config;
  if (stack.frames < 1) throw Error(ErrorKind::EmptySequence, "cannot encode a sequence without frames");
  check_image(cfg, stack.height, stack.width);
  const int C = cfg.feature_channels();
  const int h = cfg.feature_size();
  const int hw = h * h;
  const int strip = h / cfg.part_count;
  const long HW = static_cast<long>(stack.height) * stack.width;

  MultiViewEmbedding out;
  out.per_view.reserve(stack.views);
  for (int v = 0; v < stack.views; ++v) {
    Mat<float> input(3, stack.frames * HW);
    for (int l = 0; l < stack.frames; ++l) load_image_into<float>(input, l, stack.image(v, l), stack.height, stack.width);
    const Mat<float> f = backbone_eval(model, input, Shape{stack.frames, stack.height, stack.width});
    Mat<float> pooled = f.middleCols(0, hw);
    for (int l = 1; l < stack.frames; ++l) pooled = pooled.cwiseMax(f.middleCols(static_cast<long>(l) * hw, hw));

    Eigen::MatrixXf emb(cfg.part_count, cfg.embed_dim);
    Eigen::VectorXf part_feature(C);
    for (int p = 0; p < cfg.part_count; ++p) {
      for (int c = 0; c < C; ++c) {
        part_feature[c] = pooled.row(c).segment(static_cast<long>(p) * strip * h, static_cast<long>(strip) * h).maxCoeff();
      }
      emb.row(p) = (model.part_heads[p] * part_feature).transpose();
    }
    out.per_view.push_back(std::move(emb));
  }
  return out;
}

std::vector<Eigen::VectorXf> classify(const MultiViewEmbedding& embedding, const Model& model) {
  const auto& cfg = model.config;
  std::vector<Eigen::VectorXf> logits;
  for (const auto& e : embedding.per_view) {
    if (e.rows() != cfg.part_count || e.cols() != cfg.embed_dim) {
      throw Error(ErrorKind::ConfigMismatch, "embedding shape does not match the encoder");
    }
    Eigen::VectorXf flat(cfg.flat_dim());
    for (int p = 0; p < cfg.part_count; ++p) flat.segment(static_cast<long>(p) * cfg.embed_dim, cfg.embed_dim) = e.row(p);
    for (long i = 0; i < flat.size(); ++i) {
      flat[i] = (flat[i] - model.neck_running_mean[i]) / std::sqrt(model.neck_running_var[i] + float(nn::kBnEps)) *
                model.neck_gamma[i];
    }
    logits.push_back(model.classifier * flat);
  }
  return logits;
}

double embedding_distance(const Eigen::MatrixXf& a, const Eigen::MatrixXf& b) {
  double total = 0.0;
  for (long p = 0; p < a.rows(); ++p) {
    total += (a.row(p).cast<double>() - b.row(p).cast<double>()).norm();
  }
  return total / static_cast<double>(a.rows());
}

// ---------------------------------------------------------------------------
// Training network

namespace {

template <typename S, typename Stage>
void stage_forward(const ConvBnParams<S>& p, const Mat<S>& x, Shape s, bool relu, Stage& st, ConvBnParams<S>* run) {
  nn::conv3x3_forward(p.weight, x, s, st.out);
  nn::batchnorm_train(st.out, p.gamma, &p.beta, st.bn, run ? &run->running_mean : nullptr,
                      run ? &run->running_var : nullptr);
  if (relu) nn::relu_inplace(st.out);
}

template <typename S, typename Stage>
void stage_backward(const ConvBnParams<S>& p, const Mat<S>& x, Shape s, bool relu, const Stage& st, Mat<S>& dout,
                    ConvBnParams<S>& g, Mat<S>* dx) {
  if (relu) nn::relu_backward(st.out, dout);
  nn::batchnorm_backward(dout, p.gamma, st.bn, g.gamma, &g.beta);
  nn::conv3x3_backward(p.weight, x, s, dout, g.weight, dx);
}

}  // namespace

template <typename S>
const typename EncoderNetwork<S>::Output& EncoderNetwork<S>::forward(const ModelParams<S>& p, const Batch& batch,
                                                                     ModelParams<S>* running) {
  const auto& cfg = p.config;
  if (batch.image_size != cfg.image_size) {
    throw Error(ErrorKind::ConfigMismatch, "batch image size does not match the encoder");
  }
  int total_frames = 0;
  group_offsets_.clear();
  for (int n : batch.group_frames) {
    if (n < 1) throw Error(ErrorKind::EmptySequence, "group without frames in batch");
    group_offsets_.push_back(total_frames);
    total_frames += n;
  }
  const long HW = static_cast<long>(cfg.image_size) * cfg.image_size;
  if (batch.images.rows() != 3 || batch.images.cols() != total_frames * HW) {
    throw Error(ErrorKind::ConfigMismatch, "batch image matrix has the wrong shape");
  }
  input_ = &batch.images;
  full_ = {total_frames, cfg.image_size, cfg.image_size};
  half_ = full_.pooled();
  quarter_ = half_.pooled();
  eighth_ = quarter_.pooled();
  const auto run = [&](ConvBnParams<S> ModelParams<S>::*member) { return running ? &(running->*member) : nullptr; };

  stage_forward(p.conv1, batch.images, full_, true, s1_, run(&ModelParams<S>::conv1));
  stage_forward(p.conv2, s1_.out, full_, true, s2_, run(&ModelParams<S>::conv2));
  nn::maxpool2_forward(s2_.out, full_, p2_, &idx2_);
  stage_forward(p.res1a, p2_, half_, true, r1a_, run(&ModelParams<S>::res1a));
  stage_forward(p.res1b, r1a_.out, half_, false, r1b_, run(&ModelParams<S>::res1b));
  o1_ = (r1b_.out + p2_).cwiseMax(S(0));
  stage_forward(p.conv3, o1_, half_, true, s3_, run(&ModelParams<S>::conv3));
  nn::maxpool2_forward(s3_.out, half_, p3_, &idx3_);
  stage_forward(p.conv4, p3_, quarter_, true, s4_, run(&ModelParams<S>::conv4));
  nn::maxpool2_forward(s4_.out, quarter_, p4_, &idx4_);
  stage_forward(p.res2a, p4_, eighth_, true, r2a_, run(&ModelParams<S>::res2a));
  stage_forward(p.res2b, r2a_.out, eighth_, false, r2b_, run(&ModelParams<S>::res2b));
  o2_ = (r2b_.out + p4_).cwiseMax(S(0));

  // Temporal max over each group's frames.
  const int C = cfg.feature_channels();
  const int h = cfg.feature_size();
  const long hw = static_cast<long>(h) * h;
  const int G = static_cast<int>(batch.group_frames.size());
  temporal_.resize(C, G * hw);
  temporal_arg_.assign(static_cast<std::size_t>(C) * G * hw, 0);
  for (int c = 0; c < C; ++c) {
    const S* src = o2_.row(c).data();
    S* dst = temporal_.row(c).data();
    for (int g = 0; g < G; ++g) {
      for (long pos = 0; pos < hw; ++pos) {
        int best = group_offsets_[g];
        S value = src[best * hw + pos];
        for (int f = best + 1; f < group_offsets_[g] + batch.group_frames[g]; ++f) {
          if (src[f * hw + pos] > value) {
            value = src[f * hw + pos];
            best = f;
          }
        }
        dst[g * hw + pos] = value;
        temporal_arg_[(static_cast<std::size_t>(c) * G + g) * hw + pos] = best;
      }
    }
  }

  // Horizontal strips, max-pooled, then one linear head per part.
  const int P = cfg.part_count;
  const long strip = static_cast<long>(h / P) * h;
  strips_.assign(P, Mat<S>(C, G));
  strip_arg_.assign(P, std::vector<std::int32_t>(static_cast<std::size_t>(C) * G));
  output_.parts.resize(P);
  flat_.resize(cfg.flat_dim(), G);
  for (int part = 0; part < P; ++part) {
    for (int c = 0; c < C; ++c) {
      for (int g = 0; g < G; ++g) {
        const S* seg = temporal_.row(c).data() + g * hw + part * strip;
        long best = 0;
        for (long i = 1; i < strip; ++i) {
          if (seg[i] > seg[best]) best = i;
        }
        strips_[part](c, g) = seg[best];
        strip_arg_[part][static_cast<std::size_t>(c) * G + g] = static_cast<std::int32_t>(part * strip + best);
      }
    }
    output_.parts[part].noalias() = p.part_heads[part] * strips_[part];
    flat_.middleRows(static_cast<long>(part) * cfg.embed_dim, cfg.embed_dim) = output_.parts[part];
  }

  neck_out_ = flat_;
  nn::batchnorm_train(neck_out_, p.neck_gamma, static_cast<const Vec<S>*>(nullptr), neck_,
                      running ? &running->neck_running_mean : nullptr, running ? &running->neck_running_var : nullptr);
  output_.logits.noalias() = p.classifier * neck_out_;
  return output_;
}

template <typename S>
void EncoderNetwork<S>::backward(const ModelParams<S>& p, const std::vector<Mat<S>>& d_parts, const Mat<S>& d_logits,
                                 ModelParams<S>& g) {
  const auto& cfg = p.config;
  const int P = cfg.part_count;
  const int C = cfg.feature_channels();
  const int h = cfg.feature_size();
  const long hw = static_cast<long>(h) * h;
  const int G = static_cast<int>(group_offsets_.size());

  g.classifier.noalias() += d_logits * neck_out_.transpose();
  Mat<S> d_flat = p.classifier.transpose() * d_logits;
  nn::batchnorm_backward(d_flat, p.neck_gamma, neck_, g.neck_gamma, static_cast<Vec<S>*>(nullptr));

  Mat<S> d_temporal = Mat<S>::Zero(C, G * hw);
  for (int part = 0; part < P; ++part) {
    Mat<S> d_e = d_flat.middleRows(static_cast<long>(part) * cfg.embed_dim, cfg.embed_dim);
    if (!d_parts.empty()) d_e += d_parts[part];
    g.part_heads[part].noalias() += d_e * strips_[part].transpose();
    const Mat<S> d_strip = p.part_heads[part].transpose() * d_e;
    for (int c = 0; c < C; ++c) {
      for (int grp = 0; grp < G; ++grp) {
        d_temporal(c, grp * hw + strip_arg_[part][static_cast<std::size_t>(c) * G + grp]) += d_strip(c, grp);
      }
    }
  }

  Mat<S> d_o2 = Mat<S>::Zero(C, eighth_.columns());
  for (int c = 0; c < C; ++c) {
    for (int grp = 0; grp < G; ++grp) {
      for (long pos = 0; pos < hw; ++pos) {
        const int frame = temporal_arg_[(static_cast<std::size_t>(c) * G + grp) * hw + pos];
        d_o2(c, frame * hw + pos) += d_temporal(c, grp * hw + pos);
      }
    }
  }

  // Backbone, in reverse.
  nn::relu_backward(o2_, d_o2);
  Mat<S> d_branch = d_o2;
  Mat<S> d_a;
  stage_backward(p.res2b, r2a_.out, eighth_, false, r2b_, d_branch, g.res2b, &d_a);
  Mat<S> d_in;
  stage_backward(p.res2a, p4_, eighth_, true, r2a_, d_a, g.res2a, &d_in);
  d_in += d_o2;
  Mat<S> d_pre;
  nn::maxpool2_backward(d_in, idx4_, quarter_.columns(), d_pre);
  stage_backward(p.conv4, p3_, quarter_, true, s4_, d_pre, g.conv4, &d_in);
  nn::maxpool2_backward(d_in, idx3_, half_.columns(), d_pre);
  Mat<S> d_o1;
  stage_backward(p.conv3, o1_, half_, true, s3_, d_pre, g.conv3, &d_o1);
  nn::relu_backward(o1_, d_o1);
  d_branch = d_o1;
  stage_backward(p.res1b, r1a_.out, half_, false, r1b_, d_branch, g.res1b, &d_a);
  stage_backward(p.res1a, p2_, half_, true, r1a_, d_a, g.res1a, &d_in);
  d_in += d_o1;
  nn::maxpool2_backward(d_in, idx2_, full_.columns(), d_pre);
  Mat<S> d_s1;
  stage_backward(p.conv2, s1_.out, full_, true, s2_, d_pre, g.conv2, &d_s1);
  stage_backward(p.conv1, *input_, full_, true, s1_, d_s1, g.conv1, static_cast<Mat<S>*>(nullptr));
}

template class EncoderNetwork<float>;
template class EncoderNetwork<double>;

}  // namespace pcreid
