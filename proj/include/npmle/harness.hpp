#pragma once

// Estimator setup per simulation case and the Monte Carlo replication study.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "npmle/adapt.hpp"
#include "npmle/data.hpp"
#include "npmle/em.hpp"
#include "npmle/metrics.hpp"
#include "npmle/weights.hpp"

namespace npmle {

/// Every tunable of the estimators.
struct EstimatorSettings {
  EmConfig em;
  AdaptConfig adapt;
  WeightSolveConfig weights;
  double gr_kernel_scale = 0.1;  // GR error covariance = scale * I
  bool single_start = false;     // EM: start from one point mass at the box centre

  void validate() const;
};

/// GR, EM and EM-GR as in adapt, plus BE: the best of the three by ll_n.
enum class Estimator { GR, EM, EM_GR, BE };
std::string to_string(Estimator e);
Estimator estimator_from_string(const std::string& s);

/// Kernel used by the EM drivers (error covariance of the generating process)
/// and by GR (scaled identity).
KernelSpec em_kernel(CaseId c);
KernelSpec gr_kernel(CaseId c, double scale);

/// Box [-4, 4]^d for the case's mixed dimension.
EstimatorSettings default_settings(CaseId c);
/// Resizes the box to dimension d when the bounds were given as one value.
void fit_box(AdaptConfig& cfg, std::size_t d);

struct Fit {
  Estimator estimator = Estimator::EM;
  EstimateResult result;
  Estimator winner = Estimator::EM;  // differs from `estimator` only for BE
};

/// Runs the requested estimators on `data`; GR is computed at most once and
/// shared by EM-GR and BE. Output order follows `which`.
std::vector<Fit> fit_estimators(const Dataset& data, CaseId c, std::span<const Estimator> which,
                                const EstimatorSettings& settings, std::uint64_t seed);

struct RunConfig {
  CaseId case_id = CaseId::C1a;
  std::vector<std::size_t> ns = {250, 500, 1000};
  std::vector<Estimator> estimators = {Estimator::EM};
  std::size_t replications = 20;
  std::uint64_t seed = 1;
  EstimatorSettings settings = default_settings(CaseId::C1a);

  void validate() const;
};

/// Seed of replication r; independent of n so datasets nest across sizes.
std::uint64_t replication_seed(std::uint64_t master, CaseId c, std::size_t r);

struct ReplicationRow {
  CaseId case_id = CaseId::C1a;
  std::size_t n = 0;
  std::optional<std::size_t> replication;  // empty for aggregate rows
  Estimator estimator = Estimator::EM;
  Estimator winner = Estimator::EM;
  std::uint64_t seed = 0;
  bool ok = true;
  std::string error;
  std::size_t ok_count = 0;  // aggregate rows: replications averaged
  double loglik = 0.0;
  double n_components = 0.0;
  MetricsReport metrics;
};

/// Detail rows in (n, replication, estimator) order followed by one aggregate
/// (mean over successful rows) per (n, estimator). Failures are recorded in
/// their row and do not stop the study.
std::vector<ReplicationRow> run_replications(const RunConfig& cfg);

void write_rows_csv(std::span<const ReplicationRow> rows, std::ostream& out);

}  // namespace npmle
