#include "npmle/harness.hpp"

#include <cmath>
#include <cstdio>
#include <exception>
#include <ostream>

#include "npmle/error.hpp"
#include "npmle/rng.hpp"

namespace npmle {

void EstimatorSettings::validate() const {
  em.validate();
  weights.validate();
  adapt.validate(adapt.lower.size());
  if (!(gr_kernel_scale > 0.0)) throw Error("settings: gr_kernel_scale must be positive");
}

std::string to_string(Estimator e) {
  switch (e) {
    case Estimator::GR: return "GR";
    case Estimator::EM: return "EM";
    case Estimator::EM_GR: return "EM-GR";
    case Estimator::BE: return "BE";
  }
  return "?";
}

Estimator estimator_from_string(const std::string& s) {
  if (s == "GR") return Estimator::GR;
  if (s == "EM") return Estimator::EM;
  if (s == "EM-GR" || s == "EM_GR") return Estimator::EM_GR;
  if (s == "BE") return Estimator::BE;
  throw Error("unknown estimator '" + s + "' (expected GR, EM, EM-GR or BE)");
}

KernelSpec em_kernel(CaseId c) { return case_kernel(c, case_error_cov(c)); }

KernelSpec gr_kernel(CaseId c, double scale) { return case_kernel(c, identity_cov(3, scale)); }

EstimatorSettings default_settings(CaseId c) {
  EstimatorSettings s;
  s.adapt.set_box(em_kernel(c).mixed_dim(), -4.0, 4.0);
  return s;
}

void fit_box(AdaptConfig& cfg, std::size_t d) {
  if (cfg.lower.size() == 1 && d > 1) cfg.lower.assign(d, cfg.lower[0]);
  if (cfg.upper.size() == 1 && d > 1) cfg.upper.assign(d, cfg.upper[0]);
  cfg.validate(d);
}

std::vector<Fit> fit_estimators(const Dataset& data, CaseId c, std::span<const Estimator> which,
                                const EstimatorSettings& settings, std::uint64_t seed) {
  auto has = [&](Estimator e) {
    for (auto w : which)
      if (w == e || w == Estimator::BE) return true;
    return false;
  };
  const bool want_emgr = has(Estimator::EM_GR);
  const bool want_gr = has(Estimator::GR) || want_emgr;
  const bool want_em = has(Estimator::EM);

  AdaptConfig acfg = settings.adapt;
  const KernelSpec k_em = em_kernel(c);
  fit_box(acfg, k_em.mixed_dim());

  std::optional<EstimateResult> gr, em, emgr;
  if (want_gr) {
    auto q0 = init_grid(acfg.lower, acfg.upper, acfg.grid_var, acfg.grid_target,
                        gr_kernel(c, settings.gr_kernel_scale));
    gr = estimate(data, std::move(q0), settings.em, acfg, settings.weights, Mode::GR,
                  hash_combine(seed, 1));
  }
  if (want_em) {
    MixingDistribution q0;
    if (settings.single_start) {
      q0.kernel = k_em;
      std::vector<double> centre(acfg.lower.size());
      for (std::size_t k = 0; k < centre.size(); ++k)
        centre[k] = 0.5 * (acfg.lower[k] + acfg.upper[k]);
      q0.components.push_back(Component::point(centre, 1.0));
      for (auto& comp : q0.components) comp.cov_diag.assign(centre.size(), acfg.em_var);
    } else {
      q0 = init_grid(acfg.lower, acfg.upper, acfg.em_var, acfg.grid_target, k_em);
    }
    em = estimate(data, std::move(q0), settings.em, acfg, settings.weights, Mode::EM,
                  hash_combine(seed, 2));
  }
  if (want_emgr) {
    auto q0 = gr->q;
    q0.kernel = k_em;
    emgr = estimate(data, std::move(q0), settings.em, acfg, settings.weights, Mode::EM_GR,
                    hash_combine(seed, 3));
  }

  std::vector<Fit> out;
  for (auto w : which) {
    Fit f;
    f.estimator = w;
    f.winner = w;
    switch (w) {
      case Estimator::GR: f.result = *gr; break;
      case Estimator::EM: f.result = *em; break;
      case Estimator::EM_GR: f.result = *emgr; break;
      case Estimator::BE: {
        // Ties go to the earlier of GR, EM, EM-GR.
        f.result = *gr;
        f.winner = Estimator::GR;
        if (em->loglik > f.result.loglik) {
          f.result = *em;
          f.winner = Estimator::EM;
        }
        if (emgr->loglik > f.result.loglik) {
          f.result = *emgr;
          f.winner = Estimator::EM_GR;
        }
        break;
      }
    }
    out.push_back(std::move(f));
  }
  return out;
}

void RunConfig::validate() const {
  if (replications < 1) throw Error("replicate: at least one replication is required");
  if (ns.empty() || estimators.empty()) throw Error("replicate: no sample sizes or estimators");
  for (auto n : ns)
    if (n < 1) throw Error("replicate: sample sizes must be positive");
  settings.validate();
}

std::uint64_t replication_seed(std::uint64_t master, CaseId c, std::size_t r) {
  return hash_combine(hash_combine(master, hash_string(to_string(c))), r);
}

std::vector<ReplicationRow> run_replications(const RunConfig& cfg) {
  cfg.validate();
  const std::size_t n_sizes = cfg.ns.size();
  const std::size_t n_est = cfg.estimators.size();
  const std::size_t items = n_sizes * cfg.replications;
  std::vector<ReplicationRow> detail(items * n_est);

  const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(items);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t it = 0; it < m; ++it) {
    const std::size_t a = static_cast<std::size_t>(it) / cfg.replications;
    const std::size_t r = static_cast<std::size_t>(it) % cfg.replications;
    const std::size_t n = cfg.ns[a];
    const std::uint64_t seed = replication_seed(cfg.seed, cfg.case_id, r);
    ReplicationRow* rows = &detail[static_cast<std::size_t>(it) * n_est];
    for (std::size_t e = 0; e < n_est; ++e) {
      rows[e].case_id = cfg.case_id;
      rows[e].n = n;
      rows[e].replication = r;
      rows[e].estimator = cfg.estimators[e];
      rows[e].winner = cfg.estimators[e];
      rows[e].seed = seed;
    }
    try {
      const auto sim = simulate_case(cfg.case_id, n, seed);
      const auto fits = fit_estimators(sim.data, cfg.case_id, cfg.estimators, cfg.settings,
                                       hash_combine(seed, n));
      for (std::size_t e = 0; e < n_est; ++e) {
        try {
          rows[e].winner = fits[e].winner;
          rows[e].loglik = fits[e].result.loglik;
          rows[e].n_components = static_cast<double>(fits[e].result.q.size());
          rows[e].metrics = compute_metrics(sim.data, fits[e].result.q, sim.truth);
        } catch (const std::exception& ex) {
          rows[e].ok = false;
          rows[e].error = ex.what();
        }
      }
    } catch (const std::exception& ex) {
      for (std::size_t e = 0; e < n_est; ++e) {
        rows[e].ok = false;
        rows[e].error = ex.what();
      }
    }
  }

  std::vector<ReplicationRow> out = detail;
  for (std::size_t a = 0; a < n_sizes; ++a) {
    for (std::size_t e = 0; e < n_est; ++e) {
      ReplicationRow agg;
      agg.case_id = cfg.case_id;
      agg.n = cfg.ns[a];
      agg.estimator = cfg.estimators[e];
      agg.winner = cfg.estimators[e];
      agg.seed = cfg.seed;
      MetricsReport& s = agg.metrics;
      for (std::size_t r = 0; r < cfg.replications; ++r) {
        const auto& row = detail[(a * cfg.replications + r) * n_est + e];
        if (!row.ok) continue;
        ++agg.ok_count;
        agg.loglik += row.loglik;
        agg.n_components += row.n_components;
        s.ll_gap += row.metrics.ll_gap;
        s.prob_mae += row.metrics.prob_mae;
        s.cdf_dist += row.metrics.cdf_dist;
        s.cdf_ks += row.metrics.cdf_ks;
        s.cdf_step = row.metrics.cdf_step;
        s.pct_neg_err += row.metrics.pct_neg_err;
        s.mean_err_norm += row.metrics.mean_err_norm;
      }
      if (agg.ok_count == 0) {
        agg.ok = false;
        agg.error = "no successful replications";
      } else {
        const double k = static_cast<double>(agg.ok_count);
        agg.loglik /= k;
        agg.n_components /= k;
        s.ll_gap /= k;
        s.prob_mae /= k;
        s.cdf_dist /= k;
        s.cdf_ks /= k;
        s.pct_neg_err /= k;
        s.mean_err_norm /= k;
      }
      out.push_back(std::move(agg));
    }
  }
  return out;
}

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string quoted(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"') q += '"';
    q += ch == '\n' ? ' ' : ch;
  }
  return q + '"';
}

}  // namespace

void write_rows_csv(std::span<const ReplicationRow> rows, std::ostream& out) {
  out << "case,n,replication,estimator,winner,seed,status,ok_count,loglik,n_components,ll_gap,"
         "prob_mae,cdf_dist,cdf_ks,cdf_step,pct_neg_err,mean_err_norm,error\n";
  for (const auto& r : rows) {
    const bool agg = !r.replication.has_value();
    const auto& m = r.metrics;
    out << to_string(r.case_id) << ',' << r.n << ','
        << (agg ? std::string("mean") : std::to_string(*r.replication)) << ','
        << to_string(r.estimator) << ',' << to_string(r.winner) << ',' << r.seed << ','
        << (r.ok ? "ok" : "failed") << ',' << (agg ? r.ok_count : (r.ok ? 1 : 0)) << ',';
    if (r.ok) {
      out << num(r.loglik) << ',' << num(r.n_components) << ',' << num(m.ll_gap) << ','
          << num(m.prob_mae) << ',' << num(m.cdf_dist) << ',' << num(m.cdf_ks) << ','
          << num(m.cdf_step) << ',' << num(m.pct_neg_err) << ',' << num(m.mean_err_norm);
    } else {
      out << ",,,,,,,,";
    }
    out << ',' << quoted(r.error) << '\n';
  }
}

}  // namespace npmle
