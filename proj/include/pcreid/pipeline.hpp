#pragma once

#include "pcreid/dataset.hpp"
#include "pcreid/encoder.hpp"
#include "pcreid/inference.hpp"
#include "pcreid/metrics.hpp"
#include "pcreid/training.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pcreid {

struct EmbeddedSequence {
  ManifestEntry entry;
  MultiViewEmbedding embedding;
};

struct EmbedOptions {
  RenderSettings render;
  int max_frames = 0;  // keep the first max_frames frames; 0 keeps all
  double noise_sigma = 0.0;  // extra Gaussian noise on the clouds before rendering (m)
  std::uint64_t noise_seed = 0;
};

// Renders (through the cache when noise is off) and embeds every entry of a split.
std::vector<EmbeddedSequence> embed_split(const Manifest& manifest, const std::string& split, const Model& model,
                                          const EmbedOptions& opt, RenderCache* cache = nullptr);

struct EvalSettings {
  int gallery_n = 10;
  GalleryMode mode = GalleryMode::Svm;
  SvmConfig svm;
  std::vector<int> k_set{1, 3};
};

struct EvalOutput {
  Gallery gallery;
  std::vector<EvalRecord> records;
  MetricsReport report;
};

std::map<std::string, std::vector<TimedEmbedding>> group_by_identity(const std::vector<EmbeddedSequence>& seqs);

// Builds the gallery, scores and votes every probe, reduces ranks and evaluates.
EvalOutput evaluate_embedded(const std::vector<EmbeddedSequence>& gallery_seqs,
                             const std::vector<EmbeddedSequence>& probes, const EvalSettings& settings,
                             const std::map<std::string, std::string>* identity_to_role = nullptr);

}  // namespace pcreid
