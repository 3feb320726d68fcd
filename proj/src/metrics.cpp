#include "pcreid/metrics.hpp"

#include "pcreid/error.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

namespace pcreid {

std::map<std::string, RoleStats> role_accuracy(const std::vector<EvalRecord>& records,
                                               const std::map<std::string, std::string>& identity_to_role) {
  const auto role_of = [&](const std::string& identity) -> const std::string& {
    const auto it = identity_to_role.find(identity);
    if (it == identity_to_role.end()) throw Error(ErrorKind::MissingRoleMapping, "no role for identity '" + identity + "'");
    return it->second;
  };
  std::map<std::string, RoleStats> out;
  for (const auto& rec : records) {
    const std::string& truth = rec.role.empty() ? role_of(rec.true_identity) : rec.role;
    auto& s = out[truth];
    ++s.probes;
    if (role_of(rec.predicted_identity) == truth) ++s.correct;
  }
  for (auto& [role, s] : out) s.accuracy = static_cast<double>(s.correct) / s.probes;
  return out;
}

MetricsReport evaluate(const std::vector<EvalRecord>& records, const std::vector<int>& k_set,
                       const std::vector<std::string>* gallery_identities,
                       const std::map<std::string, std::string>* identity_to_role) {
  if (records.empty()) throw Error(ErrorKind::EmptyEvaluation, "no evaluation records");
  MetricsReport rep;
  rep.probes = static_cast<int>(records.size());
  std::set<std::string> known;
  if (gallery_identities != nullptr) known.insert(gallery_identities->begin(), gallery_identities->end());
  double ap = 0.0;
  long top1 = 0;
  for (const auto& rec : records) {
    if (rec.r < 1) throw Error(ErrorKind::InvalidArgument, "record '" + rec.probe_id + "' has rank below 1");
    if (gallery_identities != nullptr && !known.count(rec.true_identity)) {
      throw Error(ErrorKind::InvalidArgument, "probe identity '" + rec.true_identity + "' is not in the gallery");
    }
    ap += 1.0 / rec.r;
    auto& s = rep.per_identity[rec.true_identity];
    ++s.probes;
    if (rec.r == 1) {
      ++s.correct;
      ++top1;
    }
  }
  const double n = static_cast<double>(records.size());
  rep.map = ap / n;
  rep.micro = static_cast<double>(top1) / n;
  for (int k : k_set) {
    if (k < 1) throw Error(ErrorKind::InvalidArgument, "CMC rank must be at least 1");
    const long hits = std::count_if(records.begin(), records.end(), [k](const EvalRecord& r) { return r.r <= k; });
    rep.cmc[k] = static_cast<double>(hits) / n;
  }
  double macro = 0.0;
  for (auto& [id, s] : rep.per_identity) {
    s.accuracy = static_cast<double>(s.correct) / s.probes;
    macro += s.accuracy;
  }
  rep.macro = macro / static_cast<double>(rep.per_identity.size());
  if (identity_to_role != nullptr) {
    rep.per_role = role_accuracy(records, *identity_to_role);
    long correct = 0;
    for (const auto& [role, s] : rep.per_role) correct += s.correct;
    rep.role_accuracy = static_cast<double>(correct) / n;
  }
  return rep;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  j["probes"] = probes;
  j["mAP"] = map;
  j["micro"] = micro;
  j["macro"] = macro;
  nlohmann::json cmc_j = nlohmann::json::object();
  for (const auto& [k, v] : cmc) cmc_j[std::to_string(k)] = v;
  j["cmc"] = cmc_j;
  nlohmann::json ids = nlohmann::json::object();
  for (const auto& [id, s] : per_identity) ids[id] = {{"probes", s.probes}, {"correct", s.correct}, {"accuracy", s.accuracy}};
  j["per_identity"] = ids;
  if (role_accuracy) {
    j["role_accuracy"] = *role_accuracy;
    nlohmann::json roles = nlohmann::json::object();
    for (const auto& [r, s] : per_role) roles[r] = {{"probes", s.probes}, {"correct", s.correct}, {"accuracy", s.accuracy}};
    j["per_role"] = roles;
  }
  return j;
}

std::string MetricsReport::table() const {
  std::ostringstream os;
  char buf[128];
  std::snprintf(buf, sizeof buf, "probes      %d\n", probes);
  os << buf;
  std::snprintf(buf, sizeof buf, "mAP         %6.2f %%\n", 100 * map);
  os << buf;
  for (const auto& [k, v] : cmc) {
    std::snprintf(buf, sizeof buf, "CMC@%-7d %6.2f %%\n", k, 100 * v);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "micro       %6.2f %%\nmacro       %6.2f %%\n", 100 * micro, 100 * macro);
  os << buf;
  if (role_accuracy) {
    std::snprintf(buf, sizeof buf, "role        %6.2f %%\n", 100 * *role_accuracy);
    os << buf;
  }
  os << "\nidentity                 probes  rank-1\n";
  for (const auto& [id, s] : per_identity) {
    std::snprintf(buf, sizeof buf, "%-24s %6d  %6.2f %%\n", id.c_str(), s.probes, 100 * s.accuracy);
    os << buf;
  }
  return os.str();
}

std::string MetricsReport::identity_csv() const {
  std::ostringstream os;
  os << "identity,probes,correct,accuracy\n";
  char buf[64];
  for (const auto& [id, s] : per_identity) {
    std::snprintf(buf, sizeof buf, ",%d,%d,%.9g\n", s.probes, s.correct, s.accuracy);
    os << id << buf;
  }
  return os.str();
}

std::string records_csv(const std::vector<EvalRecord>& records) {
  std::ostringstream os;
  os << "probe_id,true_identity,predicted_identity,role,r,view_ranks\n";
  for (const auto& rec : records) {
    os << rec.probe_id << ',' << rec.true_identity << ',' << rec.predicted_identity << ',' << rec.role << ',' << rec.r
       << ',';
    for (std::size_t i = 0; i < rec.view_ranks.size(); ++i) os << (i ? ";" : "") << rec.view_ranks[i];
    os << '\n';
  }
  return os.str();
}

}  // namespace pcreid
