#include "pcreid/error.hpp"
#include "pcreid/synthdata.hpp"
#include "pcreid/training.hpp"

#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

using namespace pcreid;
using nn::Mat;

namespace {

std::vector<TrainSequence> tiny_pool(int identities, int per_identity, int frames, std::uint64_t seed) {
  ScenarioSpec spec;
  spec.identities = identities;
  spec.seed = seed;
  const auto bodies = sample_bodies(spec);
  RingConfig ring;
  ring.views = 4;
  ring.image_size = 32;
  std::vector<TrainSequence> pool;
  for (int i = 0; i < identities; ++i) {
    for (int s = 0; s < per_identity; ++s) {
      std::mt19937_64 rng(seed * 1000 + i * 100 + s);
      pool.push_back({render_sequence(generate_sequence(bodies[i], spec, rng, frames), ring, true), i});
    }
  }
  return pool;
}

// Columns: sample-major, view-minor.
std::vector<Mat<double>> one_part(const std::vector<std::vector<double>>& points) {
  Mat<double> m(static_cast<long>(points[0].size()), static_cast<long>(points.size()));
  for (std::size_t c = 0; c < points.size(); ++c)
    for (std::size_t r = 0; r < points[c].size(); ++r) m(static_cast<long>(r), static_cast<long>(c)) = points[c][r];
  return {m};
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("triplet hinge") {
    CHECK(triplet_hinge(0.0, 0.5, 0.2) == 0.0);
    CHECK(triplet_hinge(0.6, 0.5, 0.2) == doctest::Approx(0.3));
  }

  TEST_CASE("collapsed embeddings give loss equal to the margin") {
    const auto parts = one_part({{1, 2}, {1, 2}, {1, 2}, {1, 2}});
    CHECK(batchall_triplet<double>(parts, 1, {0, 0, 1, 1}, 0.2, nullptr) == doctest::Approx(0.2));
  }

  TEST_CASE("batch-all loss is the mean hinge over every valid triplet") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n01;
    const int n = 6, views = 2, d = 3, P = 2;
    const std::vector<int> labels = {0, 0, 1, 1, 2, 2};
    std::vector<Mat<double>> parts(P, Mat<double>(d, n * views));
    for (auto& p : parts)
      for (long i = 0; i < p.size(); ++i) p.data()[i] = n01(rng);
    double expected = 0.0;
    for (int v = 0; v < views; ++v) {
      const auto dist = [&](int a, int b) {
        double s = 0;
        for (const auto& p : parts) s += (p.col(a * views + v) - p.col(b * views + v)).norm();
        return s / P;
      };
      double sum = 0;
      int count = 0;
      for (int a = 0; a < n; ++a)
        for (int q = 0; q < n; ++q)
          for (int r = 0; r < n; ++r) {
            if (q == a || labels[q] != labels[a] || labels[r] == labels[a]) continue;
            sum += std::max(0.0, dist(a, q) - dist(a, r) + 0.2);
            ++count;
          }
      expected += sum / count / views;
    }
    CHECK(batchall_triplet<double>(parts, views, labels, 0.2, nullptr) == doctest::Approx(expected).epsilon(1e-12));
    // Relabeling identities by a permutation changes nothing.
    CHECK(batchall_triplet<double>(parts, views, {2, 2, 0, 0, 1, 1}, 0.2, nullptr) ==
          doctest::Approx(expected).epsilon(1e-12));
  }

  TEST_CASE("cross entropy and total loss") {
    const Mat<double> uniform = Mat<double>::Zero(5, 4);
    CHECK(cross_entropy<double>(uniform, 2, {0, 3}, nullptr) == doctest::Approx(std::log(5.0)));
    CHECK_THROWS_AS(cross_entropy<double>(uniform, 2, {0, 7}, nullptr), Error);

    const auto parts = one_part({{1, 2}, {1, 2}, {1, 2}, {1, 2}});
    const Mat<double> logits = Mat<double>::Zero(5, 4);
    TrainConfig cfg;
    cfg.lambda = 0.0;
    auto t = total_loss<double>(parts, logits, 1, {0, 0, 1, 1}, cfg, nullptr, nullptr);
    CHECK(t.total == doctest::Approx(t.triplet));
    cfg.lambda = 0.1;
    t = total_loss<double>(parts, logits, 1, {0, 0, 1, 1}, cfg, nullptr, nullptr);
    CHECK(t.total == doctest::Approx(0.2 + 0.1 * std::log(5.0)));
  }

  TEST_CASE("learning-rate schedule") {
    TrainConfig cfg;
    CHECK(learning_rate(cfg, 0) == doctest::Approx(0.1));
    CHECK(learning_rate(cfg, 9999) == doctest::Approx(0.1));
    CHECK(learning_rate(cfg, 10000) == doctest::Approx(0.01));
    CHECK(learning_rate(cfg, 20000) == doctest::Approx(0.001));
  }

  TEST_CASE("config validation") {
    TrainConfig cfg;
    cfg.identities_per_batch = 1;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = TrainConfig{};
    cfg.margin = 0.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = TrainConfig{};
    const auto back = TrainConfig::from_json(cfg.to_json());
    CHECK(back.to_json() == cfg.to_json());
  }

  TEST_CASE("P x K sampling") {
    std::vector<TrainSequence> pool;
    for (int label = 0; label < 13; ++label) {
      const int count = label == 5 ? 3 : 10;
      for (int s = 0; s < count; ++s) {
        TrainSequence t;
        t.label = label;
        t.stack.frames = 20;
        pool.push_back(t);
      }
    }
    TrainConfig cfg;
    cfg.identities_per_batch = 8;
    cfg.samples_per_identity = 8;
    std::mt19937_64 rng(9);
    bool saw_small = false;
    for (int trial = 0; trial < 50; ++trial) {
      const Batch b = sample_batch(pool, cfg, rng);
      CHECK(b.items.size() == 64);
      std::map<int, int> per;
      for (const auto& item : b.items) {
        ++per[item.label];
        CHECK(pool[item.sequence].label == item.label);
        CHECK(item.frame_count >= 10);
        CHECK(item.frame_count <= 20);
        CHECK(item.first_frame + item.frame_count <= 20);
      }
      CHECK(per.size() == 8);
      for (const auto& [label, n] : per) CHECK(n == 8);
      if (per.count(5)) {
        saw_small = true;
        std::set<int> distinct;
        for (const auto& item : b.items)
          if (item.label == 5) distinct.insert(item.sequence);
        CHECK(distinct.size() <= 3);
      }
    }
    CHECK(saw_small);

    std::mt19937_64 a(3), b(3);
    for (int i = 0; i < 5; ++i) {
      const auto x = sample_batch(pool, cfg, a);
      const auto y = sample_batch(pool, cfg, b);
      for (std::size_t k = 0; k < x.items.size(); ++k) {
        CHECK(x.items[k].sequence == y.items[k].sequence);
        CHECK(x.items[k].first_frame == y.items[k].first_frame);
      }
    }
    cfg.identities_per_batch = 14;
    CHECK_THROWS_AS(sample_batch(pool, cfg, a), Error);
  }

  TEST_CASE("erase rectangles stay within the area band") {
    std::mt19937_64 rng(12);
    for (int i = 0; i < 10000; ++i) {
      const EraseRect r = sample_erase_rect(32, 32, 0.02, 0.20, rng);
      const double f = static_cast<double>(r.height) * r.width / (32.0 * 32.0);
      REQUIRE(f >= 0.02);
      REQUIRE(f <= 0.20);
      REQUIRE(r.top + r.height <= 32);
      REQUIRE(r.left + r.width <= 32);
    }
  }

  TEST_CASE("augmentation keeps the background exact") {
    const auto pool = tiny_pool(1, 1, 2, 5);
    const Image img = pool[0].stack.image_copy(0, 0);
    std::mt19937_64 rng(1);
    TrainConfig off;
    CHECK(augment(img, off, rng) == img);
    TrainConfig on;
    on.gaussian_noise = true;
    on.random_erase = true;
    for (int i = 0; i < 20; ++i) {
      const Image out = augment(img, on, rng);
      for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
          if (!img.occupied(y, x)) CHECK_FALSE(out.occupied(y, x));
    }
  }

  TEST_CASE("zero gradients without weight decay leave parameters unchanged") {
    EncoderConfig ec;
    ec.base_channels = 4;
    ec.part_count = 2;
    ec.embed_dim = 8;
    ec.image_size = 16;
    Model m = Model::init(ec, 1);
    const Model before = m;
    sgd_step(m, Model::zeros_like(m), 0.1, 0.0);
    std::vector<float> a, b;
    m.visit([&](const std::string&, const float* d, long n, bool) { a.insert(a.end(), d, d + n); });
    before.visit([&](const std::string&, const float* d, long n, bool) { b.insert(b.end(), d, d + n); });
    CHECK(a == b);
  }

  TEST_CASE("loss decreases on a fixed batch at desk scale") {
    const auto pool = tiny_pool(4, 4, 10, 21);
    TrainConfig cfg;
    cfg.identities_per_batch = 4;
    cfg.samples_per_identity = 4;
    std::mt19937_64 rng(2);
    const Batch batch = sample_batch(pool, cfg, rng);
    const auto input = assemble_batch<float>(pool, batch, cfg, nullptr);
    EncoderConfig ec;
    ec.base_channels = 8;
    ec.part_count = 4;
    ec.embed_dim = 32;
    ec.class_count = 4;
    ec.image_size = 32;
    Model model = Model::init(ec, 3);
    Model grads = Model::zeros_like(model);
    EncoderNetwork<float> net;
    std::vector<Mat<float>> d_parts;
    Mat<float> d_logits;
    std::vector<double> losses;
    for (int step = 0; step <= 50; ++step) {
      const auto& out = net.forward(model, input, nullptr);
      const auto t = total_loss<float>(out.parts, out.logits, 4, batch.labels(), cfg, &d_parts, &d_logits);
      losses.push_back(t.total);
      grads.visit([](const std::string&, float* d, long n, bool) { std::fill(d, d + n, 0.0f); });
      net.backward(model, d_parts, d_logits, grads);
      sgd_step(model, grads, 0.01, cfg.weight_decay);
    }
    int decreasing = 0;
    for (int i = 0; i < 50; ++i) decreasing += losses[i + 1] < losses[i] ? 1 : 0;
    MESSAGE("first " << losses.front() << ", last " << losses.back() << ", decreasing steps " << decreasing);
    CHECK(decreasing >= 45);
  }
}
