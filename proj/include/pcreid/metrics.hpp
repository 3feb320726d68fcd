#pragma once

#include <json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pcreid {

struct EvalRecord {
  std::string probe_id;
  std::string true_identity;
  std::string role;  // true role of the probe, may be empty
  std::string predicted_identity;  // majority-vote prediction
  int r = 1;  // consolidated rank, position of the 1 in m
  std::vector<int> view_ranks;
};

struct IdentityStats {
  int probes = 0;
  int correct = 0;  // r == 1
  double accuracy = 0.0;
};

struct RoleStats {
  int probes = 0;
  int correct = 0;
  double accuracy = 0.0;
};

struct MetricsReport {
  double map = 0.0;
  std::map<int, double> cmc;  // k -> CMC@k
  double micro = 0.0;
  double macro = 0.0;
  std::map<std::string, IdentityStats> per_identity;
  std::optional<double> role_accuracy;  // overall, when a role map was supplied
  std::map<std::string, RoleStats> per_role;
  int probes = 0;

  nlohmann::json to_json() const;
  std::string table() const;  // human-readable summary
  std::string identity_csv() const;
};

// AP per probe is 1 / r (a single relevant position in m). With
// `gallery_identities`, probes of unknown identities are rejected.
MetricsReport evaluate(const std::vector<EvalRecord>& records, const std::vector<int>& k_set = {1, 3},
                       const std::vector<std::string>* gallery_identities = nullptr,
                       const std::map<std::string, std::string>* identity_to_role = nullptr);

// Per role: fraction of that role's probes whose predicted identity maps to the same role.
std::map<std::string, RoleStats> role_accuracy(const std::vector<EvalRecord>& records,
                                               const std::map<std::string, std::string>& identity_to_role);

// probe_id,true_identity,predicted_identity,role,r,view_ranks (ranks joined by ';')
std::string records_csv(const std::vector<EvalRecord>& records);

}  // namespace pcreid
