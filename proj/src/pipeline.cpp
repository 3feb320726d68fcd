#include "pcreid/pipeline.hpp"

#include "pcreid/error.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace pcreid {

std::vector<EmbeddedSequence> embed_split(const Manifest& manifest, const std::string& split, const Model& model,
                                          const EmbedOptions& opt, RenderCache* cache) {
  RenderCache local;
  RenderCache& rc = cache != nullptr ? *cache : local;
  std::vector<EmbeddedSequence> out;
  for (const auto& [identity, entries] : manifest.by_identity(split)) {
    for (const auto& e : entries) {
      DepthViewStack stack;
      if (opt.noise_sigma > 0) {
        PersonSequence seq = manifest.load_sequence(e);
        std::mt19937_64 rng(opt.noise_seed ^ hash_bytes({reinterpret_cast<const std::uint8_t*>(e.path.data()), e.path.size()}));
        std::normal_distribution<double> noise(0.0, opt.noise_sigma);
        for (auto& frame : seq.frames) {
          for (auto& p : frame.points) {
            p += Point3(noise(rng), noise(rng), noise(rng));
            p.z() = std::max(0.0, p.z());
          }
        }
        stack = render_sequence(seq, opt.render.ring, opt.render.metric_crop);
      } else {
        stack = rc.get(manifest, e, opt.render);
      }
      if (opt.max_frames > 0 && stack.frames > opt.max_frames) {
        std::vector<int> keep(static_cast<std::size_t>(opt.max_frames));
        std::iota(keep.begin(), keep.end(), 0);
        stack = stack.select_frames(keep);
      }
      out.push_back({e, encode_sequence(stack, model)});
    }
  }
  return out;
}

std::map<std::string, std::vector<TimedEmbedding>> group_by_identity(const std::vector<EmbeddedSequence>& seqs) {
  std::map<std::string, std::vector<TimedEmbedding>> g;
  for (const auto& s : seqs) g[s.entry.identity].push_back({s.entry.start_time, s.embedding});
  return g;
}

EvalOutput evaluate_embedded(const std::vector<EmbeddedSequence>& gallery_seqs,
                             const std::vector<EmbeddedSequence>& probes, const EvalSettings& settings,
                             const std::map<std::string, std::string>* identity_to_role) {
  EvalOutput out;
  out.gallery = build_gallery(group_by_identity(gallery_seqs), settings.gallery_n, settings.mode, settings.svm);
  for (const auto& p : probes) {
    const int truth = out.gallery.index_of(p.entry.identity);
    if (truth < 0) {
      throw Error(ErrorKind::InvalidArgument, "probe identity '" + p.entry.identity + "' is not in the gallery");
    }
    const auto scores = score_probe(out.gallery, p.embedding);
    const VoteResult vote = majority_vote(scores, truth);
    const ReductionVector m = reduce_rank_vector(scores, truth, out.gallery.size());
    EvalRecord rec;
    rec.probe_id = p.entry.path;
    rec.true_identity = p.entry.identity;
    rec.role = p.entry.role;
    rec.predicted_identity = out.gallery.identities[static_cast<std::size_t>(vote.predicted)];
    rec.r = m.r;
    rec.view_ranks = m.view_ranks;
    out.records.push_back(std::move(rec));
  }
  out.report = evaluate(out.records, settings.k_set, &out.gallery.identities, identity_to_role);
  return out;
}

}  // namespace pcreid
