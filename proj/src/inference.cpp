#include "pcreid/inference.hpp"

#include "pcreid/error.hpp"
#include "pcreid/tensor_archive.hpp"

#include <algorithm>
#include <cmath>

namespace pcreid {

namespace fs = std::filesystem;

std::string to_string(GalleryMode mode) { return mode == GalleryMode::Svm ? "svm" : "nn"; }

GalleryMode parse_gallery_mode(const std::string& text) {
  if (text == "svm") return GalleryMode::Svm;
  if (text == "nn") return GalleryMode::NearestNeighbor;
  throw Error(ErrorKind::InvalidArgument, "unknown gallery mode '" + text + "' (expected svm or nn)");
}

SvmModel SvmModel::fit(const Eigen::MatrixXd& samples, const std::vector<int>& labels, int classes,
                       const SvmConfig& cfg) {
  const long N = samples.rows();
  const long D = samples.cols();
  if (N == 0 || static_cast<long>(labels.size()) != N || classes < 1 || cfg.c <= 0 || cfg.epochs < 1) {
    throw Error(ErrorKind::InvalidArgument, "invalid SVM training set");
  }
  // Pegasos on [x, 1]: lambda = 1 / (C N), step 1 / (lambda t). The returned
  // weights average the iterates of the second half of training.
  const double lambda = 1.0 / (cfg.c * static_cast<double>(N));
  const long total = static_cast<long>(cfg.epochs) * N;
  const long average_from = total / 2;
  SvmModel model;
  model.c = cfg.c;
  model.epochs = cfg.epochs;
  model.center = samples.colwise().mean().transpose().cast<float>().cast<double>();
  Eigen::MatrixXd z(N, D);
  for (long i = 0; i < N; ++i) z.row(i) = model.features(samples.row(i).transpose()).transpose();
  model.weights.setZero(classes, D);
  model.bias.setZero(classes);
  Eigen::VectorXd w(D + 1);
  Eigen::VectorXd avg(D + 1);
  Eigen::VectorXd x(D + 1);
  for (int k = 0; k < classes; ++k) {
    w.setZero();
    avg.setZero();
    long t = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      for (long i = 0; i < N; ++i) {
        ++t;
        x.head(D) = z.row(i).transpose();
        x[D] = 1.0;
        const double y = labels[static_cast<std::size_t>(i)] == k ? 1.0 : -1.0;
        const double eta = 1.0 / (lambda * static_cast<double>(t));
        const double margin = y * w.dot(x);
        w *= 1.0 - 1.0 / static_cast<double>(t);
        if (margin < 1.0) w.noalias() += (eta * y) * x;
        if (t > average_from) avg += w;
      }
    }
    avg /= static_cast<double>(total - average_from);
    // Stored at f32 so a saved gallery scores identically after loading.
    model.weights.row(k) = avg.head(D).cast<float>().cast<double>().transpose();
    model.bias[k] = static_cast<double>(static_cast<float>(avg[D]));
  }
  return model;
}

Eigen::VectorXd SvmModel::features(const Eigen::VectorXd& x) const {
  Eigen::VectorXd z = x - center;
  const double norm = z.norm();
  if (norm > 0.0) z /= norm;
  return z;
}

Eigen::VectorXd SvmModel::decision(const Eigen::VectorXd& x) const {
  if (x.size() != weights.cols() || x.size() != center.size()) {
    throw Error(ErrorKind::ConfigMismatch, "probe dimension does not match the SVM");
  }
  return weights * features(x) + bias;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& values) {
  const double top = values.maxCoeff();
  Eigen::VectorXd e = (values.array() - top).exp().matrix();
  return e / e.sum();
}

namespace {

Eigen::VectorXd flatten(const Eigen::MatrixXf& e) {
  Eigen::VectorXd flat(e.size());
  for (long p = 0; p < e.rows(); ++p)
    for (long j = 0; j < e.cols(); ++j) flat[p * e.cols() + j] = e(p, j);
  return flat;
}

void check_probe(const Gallery& g, const MultiViewEmbedding& probe) {
  if (probe.views() != g.views) throw Error(ErrorKind::ConfigMismatch, "probe view count does not match the gallery");
  for (const auto& e : probe.per_view) {
    if (e.rows() != g.part_count || e.cols() != g.embed_dim) {
      throw Error(ErrorKind::ConfigMismatch, "probe embedding shape does not match the gallery");
    }
  }
}

}  // namespace

int Gallery::index_of(const std::string& identity) const {
  const auto it = std::find(identities.begin(), identities.end(), identity);
  return it == identities.end() ? -1 : static_cast<int>(it - identities.begin());
}

Gallery build_gallery(const std::map<std::string, std::vector<TimedEmbedding>>& by_identity, int n, GalleryMode mode,
                      const SvmConfig& svm) {
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "gallery size n must be at least 1");
  if (by_identity.empty()) throw Error(ErrorKind::InsufficientGallery, "no gallery identities");
  Gallery g;
  g.mode = mode;
  g.n = n;
  for (const auto& [identity, items] : by_identity) {
    if (static_cast<int>(items.size()) < n) {
      throw Error(ErrorKind::InsufficientGallery, "identity '" + identity + "' has " + std::to_string(items.size()) +
                                                      " gallery sequences, need " + std::to_string(n));
    }
    std::vector<const TimedEmbedding*> order;
    for (const auto& it : items) order.push_back(&it);
    std::stable_sort(order.begin(), order.end(),
                     [](const TimedEmbedding* a, const TimedEmbedding* b) { return a->start_time < b->start_time; });
    std::vector<MultiViewEmbedding> chosen;
    for (int i = 0; i < n; ++i) chosen.push_back(order[static_cast<std::size_t>(i)]->embedding);
    g.identities.push_back(identity);
    g.embeddings.push_back(std::move(chosen));
  }
  const MultiViewEmbedding& first = g.embeddings.front().front();
  g.views = first.views();
  g.part_count = g.views > 0 ? static_cast<int>(first.per_view.front().rows()) : 0;
  g.embed_dim = g.views > 0 ? static_cast<int>(first.per_view.front().cols()) : 0;
  for (const auto& seqs : g.embeddings)
    for (const auto& e : seqs) check_probe(g, e);

  if (mode == GalleryMode::Svm) {
    const long rows = static_cast<long>(g.size()) * n * g.views;
    Eigen::MatrixXd x(rows, static_cast<long>(g.part_count) * g.embed_dim);
    std::vector<int> labels;
    long r = 0;
    for (int id = 0; id < g.size(); ++id) {
      for (const auto& e : g.embeddings[static_cast<std::size_t>(id)]) {
        for (const auto& view : e.per_view) {
          x.row(r++) = flatten(view).transpose();
          labels.push_back(id);
        }
      }
    }
    g.svm = SvmModel::fit(x, labels, g.size(), svm);
  }
  return g;
}

Gallery build_gallery(const Model& model, const std::map<std::string, std::vector<TimedStack>>& by_identity, int n,
                      GalleryMode mode, const SvmConfig& svm) {
  std::map<std::string, std::vector<TimedEmbedding>> embedded;
  for (const auto& [identity, items] : by_identity) {
    if (static_cast<int>(items.size()) < n) {
      throw Error(ErrorKind::InsufficientGallery, "identity '" + identity + "' has " + std::to_string(items.size()) +
                                                      " gallery sequences, need " + std::to_string(n));
    }
    auto& out = embedded[identity];
    for (const auto& it : items) out.push_back({it.start_time, encode_sequence(it.stack, model)});
  }
  return build_gallery(embedded, n, mode, svm);
}

std::vector<ViewScore> score_probe(const Gallery& g, const MultiViewEmbedding& probe) {
  check_probe(g, probe);
  std::vector<ViewScore> scores;
  for (int v = 0; v < g.views; ++v) {
    ViewScore s;
    const auto& pv = probe.per_view[static_cast<std::size_t>(v)];
    if (g.mode == GalleryMode::Svm) {
      if (!g.svm) throw Error(ErrorKind::ConfigMismatch, "svm gallery without a fitted model");
      const Eigen::VectorXd p = softmax(g.svm->decision(flatten(pv)));
      s.values.assign(p.data(), p.data() + p.size());
      s.probabilities = true;
    } else {
      s.probabilities = false;
      for (int id = 0; id < g.size(); ++id) {
        double best = 0.0;
        bool first = true;
        for (const auto& e : g.embeddings[static_cast<std::size_t>(id)]) {
          const double d = embedding_distance(pv, e.per_view[static_cast<std::size_t>(v)]);
          s.instance_distances.push_back(d);
          s.instance_identity.push_back(id);
          if (first || d < best) best = d;
          first = false;
        }
        s.values.push_back(best);
      }
    }
    scores.push_back(std::move(s));
  }
  return scores;
}

int top_identity(const ViewScore& score) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(score.values.size()); ++i) {
    const double a = score.values[static_cast<std::size_t>(i)];
    const double b = score.values[static_cast<std::size_t>(best)];
    if (score.probabilities ? a > b : a < b) best = i;
  }
  return best;
}

int view_rank(const ViewScore& score, int true_index) {
  if (score.probabilities) {
    const double t = score.values.at(static_cast<std::size_t>(true_index));
    int rank = 1;
    for (int i = 0; i < static_cast<int>(score.values.size()); ++i) {
      const double v = score.values[static_cast<std::size_t>(i)];
      if (v > t || (v == t && i < true_index)) ++rank;
    }
    return rank;
  }
  // Instances sorted by distance, ties by index; position of the first true match.
  const auto& d = score.instance_distances;
  int first = -1;
  for (int i = 0; i < static_cast<int>(d.size()); ++i) {
    if (score.instance_identity[static_cast<std::size_t>(i)] != true_index) continue;
    if (first < 0 || d[static_cast<std::size_t>(i)] < d[static_cast<std::size_t>(first)]) first = i;
  }
  if (first < 0) throw Error(ErrorKind::InvalidArgument, "true identity has no gallery instance");
  int rank = 1;
  for (int i = 0; i < static_cast<int>(d.size()); ++i) {
    const double v = d[static_cast<std::size_t>(i)];
    const double t = d[static_cast<std::size_t>(first)];
    if (v < t || (v == t && i < first)) ++rank;
  }
  return rank;
}

VoteResult majority_vote(const std::vector<ViewScore>& scores, int true_index) {
  VoteResult out;
  if (scores.empty()) return out;
  out.tally.assign(scores.front().values.size(), 0);
  for (const auto& s : scores) {
    const int top = top_identity(s);
    out.view_votes.push_back(top);
    ++out.tally[static_cast<std::size_t>(top)];
  }
  out.predicted = static_cast<int>(std::max_element(out.tally.begin(), out.tally.end()) - out.tally.begin());
  const int V = static_cast<int>(scores.size());
  out.accepted_correct = true_index >= 0 && true_index < static_cast<int>(out.tally.size()) &&
                         out.tally[static_cast<std::size_t>(true_index)] > V / 2;
  return out;
}

ReductionVector reduce_rank_vector(const std::vector<ViewScore>& scores, int true_index, int gallery_size) {
  ReductionVector out;
  const int V = static_cast<int>(scores.size());
  if (V == 0) throw Error(ErrorKind::InvalidArgument, "no view scores");
  for (const auto& s : scores) out.view_ranks.push_back(view_rank(s, true_index));
  // The (floor(V/2) + 1)-th smallest view rank is the smallest r with a strict majority.
  std::vector<int> sorted = out.view_ranks;
  std::sort(sorted.begin(), sorted.end());
  out.r = sorted[static_cast<std::size_t>(V / 2)];
  out.m.assign(static_cast<std::size_t>(std::max(gallery_size, out.r)), 0);
  out.m[static_cast<std::size_t>(out.r - 1)] = 1;
  return out;
}

void Gallery::save(const fs::path& index_path) const {
  TensorArchive ar;
  ar.meta() = {{"kind", "gallery"},
               {"mode", to_string(mode)},
               {"n", n},
               {"views", views},
               {"part_count", part_count},
               {"embed_dim", embed_dim},
               {"identities", identities}};
  for (std::size_t id = 0; id < embeddings.size(); ++id) {
    for (std::size_t s = 0; s < embeddings[id].size(); ++s) {
      std::vector<float> values;
      for (const auto& view : embeddings[id][s].per_view) {
        for (long p = 0; p < view.rows(); ++p)
          for (long j = 0; j < view.cols(); ++j) values.push_back(view(p, j));
      }
      ar.add("embedding." + std::to_string(id) + "." + std::to_string(s), {views, part_count, embed_dim}, values);
    }
  }
  if (svm) {
    ar.meta()["svm"] = {{"c", svm->c}, {"epochs", svm->epochs}};
    std::vector<float> w;
    for (long k = 0; k < svm->weights.rows(); ++k)
      for (long j = 0; j < svm->weights.cols(); ++j) w.push_back(static_cast<float>(svm->weights(k, j)));
    ar.add("svm.weights", {svm->weights.rows(), svm->weights.cols()}, w);
    std::vector<float> b(svm->bias.data(), svm->bias.data() + svm->bias.size());
    ar.add("svm.bias", {svm->bias.size()}, b);
    std::vector<float> c(svm->center.data(), svm->center.data() + svm->center.size());
    ar.add("svm.center", {svm->center.size()}, c);
  }
  ar.save(index_path);
}

Gallery Gallery::load(const fs::path& index_path) {
  const TensorArchive ar = TensorArchive::load(index_path);
  const auto& m = ar.meta();
  if (m.value("kind", "") != "gallery") throw Error(ErrorKind::Io, index_path.string() + " is not a gallery");
  Gallery g;
  g.mode = parse_gallery_mode(m.at("mode").get<std::string>());
  g.n = m.at("n").get<int>();
  g.views = m.at("views").get<int>();
  g.part_count = m.at("part_count").get<int>();
  g.embed_dim = m.at("embed_dim").get<int>();
  g.identities = m.at("identities").get<std::vector<std::string>>();
  for (std::size_t id = 0; id < g.identities.size(); ++id) {
    std::vector<MultiViewEmbedding> seqs;
    for (int s = 0; s < g.n; ++s) {
      const auto& e = ar.get("embedding." + std::to_string(id) + "." + std::to_string(s));
      MultiViewEmbedding mv;
      std::size_t k = 0;
      for (int v = 0; v < g.views; ++v) {
        Eigen::MatrixXf view(g.part_count, g.embed_dim);
        for (int p = 0; p < g.part_count; ++p)
          for (int j = 0; j < g.embed_dim; ++j) view(p, j) = e.values.at(k++);
        mv.per_view.push_back(std::move(view));
      }
      seqs.push_back(std::move(mv));
    }
    g.embeddings.push_back(std::move(seqs));
  }
  if (ar.contains("svm.weights")) {
    SvmModel svm;
    svm.c = m.at("svm").at("c").get<double>();
    svm.epochs = m.at("svm").at("epochs").get<int>();
    const auto& w = ar.get("svm.weights");
    svm.weights.resize(w.shape.at(0), w.shape.at(1));
    for (long k = 0; k < svm.weights.rows(); ++k)
      for (long j = 0; j < svm.weights.cols(); ++j) svm.weights(k, j) = w.values[k * svm.weights.cols() + j];
    const auto& b = ar.get("svm.bias");
    svm.bias.resize(static_cast<long>(b.values.size()));
    for (std::size_t k = 0; k < b.values.size(); ++k) svm.bias[static_cast<long>(k)] = b.values[k];
    const auto& c = ar.get("svm.center");
    svm.center.resize(static_cast<long>(c.values.size()));
    for (std::size_t k = 0; k < c.values.size(); ++k) svm.center[static_cast<long>(k)] = c.values[k];
    g.svm = std::move(svm);
  }
  return g;
}

}  // namespace pcreid
