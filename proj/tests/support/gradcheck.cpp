#include "gradcheck.hpp"

#include "pcreid/encoder.hpp"
#include "pcreid/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace pcreid::testing {

std::vector<GroupError> run_gradcheck(const GradcheckOptions& opt) {
  EncoderConfig ec;
  ec.base_channels = opt.base_channels;
  ec.part_count = opt.part_count;
  ec.embed_dim = opt.embed_dim;
  ec.class_count = opt.identities;
  ec.image_size = opt.image_size;
  ModelParams<double> params = ModelParams<double>::init(ec, opt.seed);

  std::mt19937_64 rng(opt.seed * 7919 + 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // Non-trivial affine terms so every path carries gradient.
  params.visit([&](const std::string& name, double* data, long n, bool trainable) {
    if (!trainable) return;
    if (name.find("gamma") != std::string::npos)
      for (long i = 0; i < n; ++i) data[i] = 0.5 + unit(rng);
    if (name.find("beta") != std::string::npos)
      for (long i = 0; i < n; ++i) data[i] = 0.2 * (unit(rng) - 0.5);
  });

  const int samples = opt.identities * opt.samples_per_identity;
  const int groups = samples * opt.views;
  const long hw = static_cast<long>(opt.image_size) * opt.image_size;
  EncoderNetwork<double>::Batch batch;
  batch.image_size = opt.image_size;
  batch.group_frames.assign(groups, opt.frames);
  batch.images = nn::Mat<double>::Zero(3, groups * opt.frames * hw);
  // Silhouette-like content: a random box per frame filled with colormapped depth.
  for (int f = 0; f < groups * opt.frames; ++f) {
    const int y0 = static_cast<int>(unit(rng) * opt.image_size / 3);
    const int x0 = static_cast<int>(unit(rng) * opt.image_size / 3);
    const int y1 = opt.image_size - static_cast<int>(unit(rng) * opt.image_size / 4);
    const int x1 = opt.image_size - static_cast<int>(unit(rng) * opt.image_size / 3);
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        const auto c = depth_color(unit(rng));
        for (int ch = 0; ch < 3; ++ch) batch.images(ch, f * hw + y * opt.image_size + x) = c[ch] / 255.0;
      }
    }
  }
  std::vector<int> labels;
  for (int i = 0; i < opt.identities; ++i)
    for (int k = 0; k < opt.samples_per_identity; ++k) labels.push_back(i);

  TrainConfig tc;
  EncoderNetwork<double> net;
  const auto loss_at = [&](const ModelParams<double>& p) {
    const auto& out = net.forward(p, batch, nullptr);
    return total_loss<double>(out.parts, out.logits, opt.views, labels, tc, nullptr, nullptr).total;
  };

  ModelParams<double> grads = ModelParams<double>::zeros_like(params);
  {
    const auto& out = net.forward(params, batch, nullptr);
    std::vector<nn::Mat<double>> d_parts;
    nn::Mat<double> d_logits;
    total_loss<double>(out.parts, out.logits, opt.views, labels, tc, &d_parts, &d_logits);
    net.backward(params, d_parts, d_logits, grads);
  }

  struct Slot {
    std::string name;
    double* data;
    long n;
  };
  std::vector<Slot> slots;
  params.visit([&](const std::string& name, double* data, long n, bool trainable) {
    if (trainable) slots.push_back({name, data, n});
  });
  std::vector<const double*> grad_data;
  const ModelParams<double>& cgrads = grads;
  cgrads.visit([&](const std::string&, const double* data, long, bool trainable) {
    if (trainable) grad_data.push_back(data);
  });

  std::vector<GroupError> report;
  for (std::size_t s = 0; s < slots.size(); ++s) {
    const Slot& slot = slots[s];
    std::vector<long> idx(static_cast<std::size_t>(slot.n));
    std::iota(idx.begin(), idx.end(), 0L);
    if (opt.max_entries_per_tensor > 0 && slot.n > opt.max_entries_per_tensor) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(static_cast<std::size_t>(opt.max_entries_per_tensor));
    }
    double diff2 = 0, a2 = 0, n2 = 0;
    for (long i : idx) {
      const double orig = slot.data[i];
      slot.data[i] = orig + opt.step;
      const double up = loss_at(params);
      slot.data[i] = orig - opt.step;
      const double down = loss_at(params);
      slot.data[i] = orig;
      const double numeric = (up - down) / (2 * opt.step);
      const double analytic = grad_data[s][i];
      diff2 += (analytic - numeric) * (analytic - numeric);
      a2 += analytic * analytic;
      n2 += numeric * numeric;
    }
    GroupError e;
    e.name = slot.name;
    e.checked = static_cast<long>(idx.size());
    e.analytic_norm = std::sqrt(a2);
    const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
    e.rel_error = std::sqrt(diff2) / denom;
    report.push_back(e);
  }
  return report;
}

}  // namespace pcreid::testing
