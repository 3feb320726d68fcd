#pragma once

#include "pcreid/encoder.hpp"
#include "pcreid/geometry.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pcreid {

enum class GalleryMode { Svm, NearestNeighbor };

std::string to_string(GalleryMode mode);
// Accepts "svm" and "nn".
GalleryMode parse_gallery_mode(const std::string& text);

struct SvmConfig {
  double c = 1.0;
  int epochs = 200;
};

// One-vs-rest linear SVMs (hinge + L2) fitted by averaged stochastic
// sub-gradient descent over the samples in fixed order. Inputs are centred on
// the training mean and scaled to unit length before the linear map.
struct SvmModel {
  Eigen::MatrixXd weights;  // [classes x dim]
  Eigen::VectorXd bias;  // [classes]
  Eigen::VectorXd center;  // [dim]
  double c = 1.0;
  int epochs = 0;

  static SvmModel fit(const Eigen::MatrixXd& samples, const std::vector<int>& labels, int classes,
                      const SvmConfig& cfg = {});
  Eigen::VectorXd features(const Eigen::VectorXd& x) const;
  Eigen::VectorXd decision(const Eigen::VectorXd& x) const;
  int classes() const { return static_cast<int>(weights.rows()); }
  int dim() const { return static_cast<int>(weights.cols()); }
};

// Softmax with max subtraction.
Eigen::VectorXd softmax(const Eigen::VectorXd& values);

struct TimedEmbedding {
  double start_time = 0.0;
  MultiViewEmbedding embedding;
};

struct TimedStack {
  double start_time = 0.0;
  DepthViewStack stack;
};

struct Gallery {
  GalleryMode mode = GalleryMode::Svm;
  int n = 0;
  int views = 0;
  int part_count = 0;
  int embed_dim = 0;
  std::vector<std::string> identities;  // sorted
  std::vector<std::vector<MultiViewEmbedding>> embeddings;  // [identity][sequence]
  std::optional<SvmModel> svm;

  int size() const { return static_cast<int>(identities.size()); }
  int index_of(const std::string& identity) const;  // -1 when absent

  void save(const std::filesystem::path& index_path) const;
  static Gallery load(const std::filesystem::path& index_path);
};

// Keeps the first n sequences of each identity by start time and, in svm
// mode, fits the shared SVM on all n * V view embeddings.
Gallery build_gallery(const std::map<std::string, std::vector<TimedEmbedding>>& by_identity, int n,
                      GalleryMode mode, const SvmConfig& svm = {});
Gallery build_gallery(const Model& model, const std::map<std::string, std::vector<TimedStack>>& by_identity, int n,
                      GalleryMode mode, const SvmConfig& svm = {});

// Per view: probabilities over identities (svm) or per-identity minimum
// distances (nn). nn mode also keeps the distance to every gallery instance.
struct ViewScore {
  std::vector<double> values;  // one per gallery identity
  std::vector<double> instance_distances;  // nn only, identity-major
  std::vector<int> instance_identity;  // nn only
  bool probabilities = true;
};

std::vector<ViewScore> score_probe(const Gallery& gallery, const MultiViewEmbedding& probe);

// Index of the best identity in one view; ties go to the lowest index.
int top_identity(const ViewScore& score);

// 1-based position of the true identity in one view's ranking. In nn mode it
// is the position of the first matching instance among all instances.
int view_rank(const ViewScore& score, int true_index);

struct VoteResult {
  int predicted = -1;
  std::vector<int> view_votes;
  std::vector<int> tally;  // votes per identity
  bool accepted_correct = false;  // only meaningful when a true index was given
};

VoteResult majority_vote(const std::vector<ViewScore>& scores, int true_index = -1);

struct ReductionVector {
  std::vector<int> m;  // one-hot
  int r = 0;  // 1-based position of the 1
  std::vector<int> view_ranks;
};

// Smallest r for which more than floor(V / 2) views rank the true identity
// within the top r; m is extended past gallery_size when r exceeds it.
ReductionVector reduce_rank_vector(const std::vector<ViewScore>& scores, int true_index, int gallery_size);

}  // namespace pcreid
