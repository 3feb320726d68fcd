#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace pcreid::testing {

int brute_view_rank(const ViewScore& score, int true_index) {
  struct Candidate {
    double value;
    int index;
    int identity;
  };
  std::vector<Candidate> all;
  if (score.probabilities) {
    for (int i = 0; i < static_cast<int>(score.values.size()); ++i) all.push_back({-score.values[i], i, i});
  } else {
    for (int i = 0; i < static_cast<int>(score.instance_distances.size()); ++i)
      all.push_back({score.instance_distances[i], i, score.instance_identity[i]});
  }
  std::sort(all.begin(), all.end(), [](const Candidate& a, const Candidate& b) {
    return a.value != b.value ? a.value < b.value : a.index < b.index;
  });
  for (std::size_t pos = 0; pos < all.size(); ++pos)
    if (all[pos].identity == true_index) return static_cast<int>(pos) + 1;
  return -1;
}

std::vector<int> brute_rank_vector(const std::vector<int>& view_ranks, int gallery_size) {
  const int V = static_cast<int>(view_ranks.size());
  int r = 1;
  for (;; ++r) {
    int within = 0;
    for (int rank : view_ranks) within += rank <= r ? 1 : 0;
    if (2 * within > 2 * (V / 2)) break;
  }
  std::vector<int> m(static_cast<std::size_t>(std::max(r, gallery_size)), 0);
  m[r - 1] = 1;
  return m;
}

BruteMetrics brute_metrics(const std::vector<EvalRecord>& records, const std::vector<int>& k_set) {
  BruteMetrics out;
  const double N = static_cast<double>(records.size());
  double ap = 0.0;
  double hits = 0.0;
  for (const auto& rec : records) {
    ap += 1.0 / rec.r;
    hits += rec.r == 1 ? 1.0 : 0.0;
  }
  out.map = ap / N;
  out.micro = hits / N;
  for (int k : k_set) {
    double within = 0.0;
    for (const auto& rec : records) within += rec.r <= k ? 1.0 : 0.0;
    out.cmc[k] = within / N;
  }
  std::set<std::string> ids;
  for (const auto& rec : records) ids.insert(rec.true_identity);
  double sum = 0.0;
  for (const auto& id : ids) {
    double n = 0.0;
    double ok = 0.0;
    for (const auto& rec : records) {
      if (rec.true_identity != id) continue;
      n += 1.0;
      ok += rec.r == 1 ? 1.0 : 0.0;
    }
    out.per_identity[id] = ok / n;
    sum += ok / n;
  }
  out.macro = sum / static_cast<double>(ids.size());
  return out;
}

std::map<std::string, double> brute_role_accuracy(const std::vector<EvalRecord>& records,
                                                  const std::map<std::string, std::string>& identity_to_role) {
  std::map<std::string, std::pair<int, int>> tally;
  for (const auto& rec : records) {
    auto& t = tally[rec.role];
    ++t.first;
    if (identity_to_role.at(rec.predicted_identity) == rec.role) ++t.second;
  }
  std::map<std::string, double> out;
  for (const auto& [role, t] : tally) out[role] = static_cast<double>(t.second) / t.first;
  return out;
}

BruteAssignment brute_assignment(const Eigen::MatrixXd& costs) {
  const int rows = static_cast<int>(costs.rows());
  const int cols = static_cast<int>(costs.cols());
  const int n = std::max(rows, cols);
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  BruteAssignment best;
  bool have = false;
  do {
    int card = 0;
    double cost = 0.0;
    for (int r = 0; r < rows; ++r) {
      const int c = perm[r];
      if (c >= cols || !std::isfinite(costs(r, c))) continue;
      ++card;
      cost += costs(r, c);
    }
    if (!have || card > best.cardinality || (card == best.cardinality && cost < best.cost)) {
      best = {card, cost};
      have = true;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

std::vector<ViewScore> random_scores(std::mt19937_64& rng, int views, int identities, int n, bool probabilities) {
  std::uniform_int_distribution<int> small(0, 6);
  std::vector<ViewScore> out;
  for (int v = 0; v < views; ++v) {
    ViewScore s;
    s.probabilities = probabilities;
    if (probabilities) {
      // Integer weights normalized: ties survive the division.
      std::vector<double> w;
      double total = 0.0;
      for (int i = 0; i < identities; ++i) {
        w.push_back(1.0 + small(rng));
        total += w.back();
      }
      for (double x : w) s.values.push_back(x / total);
    } else {
      for (int id = 0; id < identities; ++id) {
        double best = 1e300;
        for (int k = 0; k < n; ++k) {
          const double d = small(rng);
          s.instance_distances.push_back(d);
          s.instance_identity.push_back(id);
          best = std::min(best, d);
        }
        s.values.push_back(best);
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace pcreid::testing
