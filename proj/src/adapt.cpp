#include "npmle/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <random>

#include "npmle/data.hpp"
#include "npmle/error.hpp"
#include "npmle/rng.hpp"

namespace npmle {

namespace {

constexpr std::size_t kMaxGrid = 100000;

enum Stream : std::uint64_t { kMhStream = 11, kGroupStream = 12, kRoundStream = 13 };

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::size_t probes_per_axis(std::size_t probe_points, std::size_t d) {
  return std::max<std::size_t>(2, grid_points_per_axis(probe_points, d));
}

std::vector<std::vector<double>> probe_grid(const AdaptConfig& cfg, std::size_t d) {
  return tensor_grid(cfg.lower, cfg.upper, probes_per_axis(cfg.probe_points, d));
}

double default_scale(const AdaptConfig& cfg, std::size_t d) {
  if (cfg.proposal_scale > 0.0) return cfg.proposal_scale;
  double range = 0.0;
  for (std::size_t k = 0; k < d; ++k) range = std::max(range, cfg.upper[k] - cfg.lower[k]);
  return 0.5 * range / static_cast<double>(probes_per_axis(cfg.probe_points, d));
}

double reflect(double x, double lo, double hi) {
  const double w = hi - lo;
  if (!(w > 0.0)) return lo;
  // Fold onto [lo, hi] with mirror images at both ends.
  double y = std::fmod(x - lo, 2.0 * w);
  if (y < 0.0) y += 2.0 * w;
  return y <= w ? lo + y : lo + 2.0 * w - y;
}

double max_probe_gradient(const Dataset& data, const MixingDistribution& q, const ProbCache& cache,
                          const AdaptConfig& cfg, std::span<const double> cov) {
  std::vector<Component> cands;
  for (auto& p : probe_grid(cfg, q.dim())) {
    Component c;
    c.location = std::move(p);
    c.cov_diag.assign(cov.begin(), cov.end());
    cands.push_back(std::move(c));
  }
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& g : gradient_D_batch(cands, q, cache, data)) best = std::max(best, g.value);
  return best;
}

// Keeps cache columns in sync with prune().
void prune_with_cache(MixingDistribution& q, ProbCache& cache, double eps_tol) {
  const auto keep = prune(q, eps_tol);
  cache.keep_columns(keep);
  cache.refresh_mixed(q.weights());
}

std::vector<double> heaviest_cov(const MixingDistribution& q) {
  std::size_t best = 0;
  for (std::size_t s = 1; s < q.size(); ++s)
    if (q.components[s].weight > q.components[best].weight) best = s;
  return q.components[best].cov_diag;
}

}  // namespace

void AdaptConfig::set_box(std::size_t d, double lo, double hi) {
  lower.assign(d, lo);
  upper.assign(d, hi);
}

void AdaptConfig::validate(std::size_t d) const {
  if (lower.size() != d || upper.size() != d)
    throw Error("adapt: bounds do not match the mixed dimension " + std::to_string(d));
  for (std::size_t k = 0; k < d; ++k)
    if (!(upper[k] > lower[k])) throw Error("adapt: degenerate bounds");
  if (std::abs(split_weights[0] + split_weights[1] + split_weights[2] - 1.0) > 1e-12)
    throw Error("adapt: split weights must sum to one");
  if (std::abs(split_offsets[0] + split_offsets[2]) > 1e-12 || split_offsets[1] != 0.0)
    throw Error("adapt: split offsets must be symmetric around zero");
  if (grid_iters < 1 || outer_rounds < 1) throw Error("adapt: round counts must be >= 1");
  if (n_g == 0 || mh_thin == 0) throw Error("adapt: n_g and mh_thin must be positive");
  if (!(eps_tol > 0.0) || !(split_var_factor > 0.0)) throw Error("adapt: bad tolerance");
  if (grid_var < 0.0 || em_var < 0.0) throw Error("adapt: negative component variance");
}

std::size_t grid_points_per_axis(std::size_t grid_target, std::size_t d) {
  if (d == 0) throw Error("grid: dimension must be positive");
  std::size_t x = 1;
  while (true) {
    std::size_t pow = 1;
    bool over = false;
    for (std::size_t k = 0; k < d && !over; ++k) {
      pow *= x + 1;
      over = pow > grid_target;
    }
    if (over) return x;
    ++x;
  }
}

MixingDistribution init_grid(std::span<const double> lower, std::span<const double> upper,
                             double cov0, std::size_t grid_target, const KernelSpec& kernel) {
  const std::size_t d = kernel.mixed_dim();
  if (lower.size() != d || upper.size() != d) throw Error("init_grid: bounds dimension mismatch");
  for (std::size_t k = 0; k < d; ++k)
    if (!(upper[k] > lower[k])) throw Error("init_grid: degenerate bounds");
  if (cov0 < 0.0) throw Error("init_grid: negative variance");
  const std::size_t x = grid_points_per_axis(grid_target, d);
  if (x < 2) throw Error("init_grid: grid target too small for dimension " + std::to_string(d));
  double total = 1.0;
  for (std::size_t k = 0; k < d; ++k) total *= static_cast<double>(x);
  if (total > static_cast<double>(kMaxGrid))
    throw Error("init_grid: " + std::to_string(static_cast<long long>(total)) +
                " grid points exceed the cap of " + std::to_string(kMaxGrid));

  MixingDistribution q;
  q.kernel = kernel;
  const auto pts = tensor_grid(lower, upper, x);
  const double w = 1.0 / static_cast<double>(pts.size());
  for (const auto& p : pts) {
    Component c;
    c.location = p;
    c.cov_diag.assign(d, cov0);
    c.weight = w;
    q.components.push_back(std::move(c));
  }
  return q;
}

std::vector<Component> split_component(const Component& c, const AdaptConfig& cfg) {
  const std::size_t d = c.location.size();
  if (c.cov_diag.size() != d) throw Error("split_component: dimension mismatch");
  for (double v : c.cov_diag)
    if (!(v > 0.0)) throw Error("split_component: point masses cannot be split");
  std::size_t count = 1;
  for (std::size_t k = 0; k < d; ++k) count *= 3;

  std::vector<Component> children;
  children.reserve(count);
  for (std::size_t idx = 0; idx < count; ++idx) {
    Component child;
    child.location.resize(d);
    child.cov_diag.resize(d);
    child.weight = c.weight;
    std::size_t rem = idx;
    for (std::size_t k = d; k-- > 0;) {
      const std::size_t a = rem % 3;
      rem /= 3;
      const double sd = std::sqrt(c.cov_diag[k]);
      child.location[k] = c.location[k] + cfg.split_offsets[a] * sd;
      child.cov_diag[k] = c.cov_diag[k] * cfg.split_var_factor;
      child.weight *= cfg.split_weights[a];
    }
    children.push_back(std::move(child));
  }
  return children;
}

void write_trace_csv(const Trace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write trace file " + path.string());
  out << "round,step,ll,n_components,max_D\n";
  for (const auto& r : trace)
    out << r.round << ',' << r.step << ',' << fmt17(r.ll) << ',' << r.n_components << ','
        << fmt17(r.max_D) << '\n';
}

RefineResult refine_grid(const Dataset& data, MixingDistribution q, const AdaptConfig& cfg,
                         const WeightSolveConfig& wcfg) {
  q.validate();
  cfg.validate(q.dim());
  RefineResult res;
  auto cache = build_cache(data, q);
  optimize_weights(q, cache, wcfg);
  double ll = scaled_loglik(cache);
  res.trace.push_back({0, "init", ll, q.size(), max_probe_gradient(data, q, cache, cfg, heaviest_cov(q))});

  for (std::size_t round = 1; round <= cfg.grid_iters; ++round) {
    MixingDistribution next = q;
    ProbCache next_cache = cache;

    // (b)-(c): split the m_l heaviest Gaussian components.
    std::vector<std::size_t> order(next.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return next.components[a].weight > next.components[b].weight;
    });
    std::vector<Component> children;
    for (std::size_t r = 0; r < std::min(cfg.m_l, order.size()); ++r) {
      const auto& parent = next.components[order[r]];
      if (parent.is_point_mass()) continue;
      for (auto& c : split_component(parent, cfg)) children.push_back(std::move(c));
    }

    // (d): keep children with positive directional derivative.
    const auto grads = gradient_D_batch(children, next, next_cache, data);
    std::vector<std::size_t> kept;
    for (std::size_t c = 0; c < children.size(); ++c)
      if (grads[c].value > 0.0) kept.push_back(c);

    if (!kept.empty()) {
      // (e): re-optimize over old + kept, seeding the children with 10% mass.
      const double share = 0.1 / static_cast<double>(kept.size());
      for (auto& c : next.components) c.weight *= 0.9;
      for (std::size_t c : kept) {
        Component child = children[c];
        child.weight = share;
        next.components.push_back(std::move(child));
        next_cache.append_column(grads[c].probs);
      }
      next_cache.refresh_mixed(next.weights());
      optimize_weights(next, next_cache, wcfg);
      // (f): prune, then settle the weights of the survivors.
      prune_with_cache(next, next_cache, cfg.eps_tol);
      optimize_weights(next, next_cache, wcfg);
    }

    const double next_ll = scaled_loglik(next_cache);
    if (next_ll >= ll) {
      q = std::move(next);
      cache = std::move(next_cache);
      ll = next_ll;
    }
    res.trace.push_back({round, "refine", ll, q.size(),
                         max_probe_gradient(data, q, cache, cfg, heaviest_cov(q))});
  }
  res.q = std::move(q);
  return res;
}

std::vector<std::vector<double>> mh_sample(const Criterion& criterion,
                                           std::span<const std::vector<double>> start_probes,
                                           std::span<const double> lower,
                                           std::span<const double> upper, std::size_t n_g,
                                           double proposal_scale, std::size_t thin, double eps,
                                           double min_gradient, std::uint64_t seed) {
  if (start_probes.empty()) throw Error("mh_sample: no start probes");
  if (!(proposal_scale > 0.0) || thin == 0 || !(eps > 0.0))
    throw Error("mh_sample: invalid chain settings");
  const std::size_t d = lower.size();

  std::size_t start = 0;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < start_probes.size(); ++k) {
    const double v = criterion(start_probes[k]);
    if (v > best) {
      best = v;
      start = k;
    }
  }
  if (!(best > min_gradient)) return {};

  auto eng = make_engine(seed, kMhStream);
  std::normal_distribution<double> step(0.0, proposal_scale);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  std::vector<double> cur = start_probes[start];
  double f_cur = std::max(best, 0.0) + eps;
  std::vector<double> prop(d);
  std::vector<std::vector<double>> out;
  out.reserve(n_g);
  std::size_t steps = 0;
  while (out.size() < n_g) {
    for (std::size_t k = 0; k < d; ++k) prop[k] = reflect(cur[k] + step(eng), lower[k], upper[k]);
    const double f_prop = std::max(criterion(prop), 0.0) + eps;
    if (u01(eng) * f_cur < f_prop) {
      cur = prop;
      f_cur = f_prop;
    }
    if (++steps % thin == 0) out.push_back(cur);
  }
  return out;
}

std::vector<std::vector<double>> mh_sample_support(const Dataset& data,
                                                   const MixingDistribution& q,
                                                   const ProbCache& cache,
                                                   std::span<const double> candidate_cov,
                                                   const AdaptConfig& cfg, std::uint64_t seed) {
  const std::size_t d = q.dim();
  cfg.validate(d);
  if (candidate_cov.size() != d) throw Error("mh_sample_support: covariance dimension mismatch");
  Component cand;
  cand.cov_diag.assign(candidate_cov.begin(), candidate_cov.end());
  Criterion crit = [&](std::span<const double> loc) {
    cand.location.assign(loc.begin(), loc.end());
    return gradient_D(cand, q, cache, data).value;
  };
  const auto probes = probe_grid(cfg, d);
  return mh_sample(crit, probes, cfg.lower, cfg.upper, cfg.n_g, default_scale(cfg, d),
                   cfg.mh_thin, cfg.mh_eps, cfg.mh_min_gradient, seed);
}

std::vector<Addition> group_and_add(const Dataset& data, MixingDistribution& q,
                                    ProbCache& cache, std::span<const Component> candidates,
                                    std::size_t m_groups, std::uint64_t seed) {
  std::vector<Addition> added;
  if (candidates.empty() || q.components.empty()) return added;
  const std::size_t d = q.dim();
  const std::size_t n = data.size();

  auto eng = make_engine(seed, kGroupStream);
  const std::size_t axis = std::uniform_int_distribution<std::size_t>(0, d - 1)(eng);

  // Group centres: all current support points, or the m_groups heaviest.
  std::vector<std::size_t> centres(q.size());
  std::iota(centres.begin(), centres.end(), 0);
  if (m_groups > 0 && m_groups < centres.size()) {
    std::stable_sort(centres.begin(), centres.end(), [&](std::size_t a, std::size_t b) {
      return q.components[a].weight > q.components[b].weight;
    });
    centres.resize(m_groups);
  }
  std::vector<double> centre_pos;
  for (std::size_t s : centres) centre_pos.push_back(q.components[s].location[axis]);

  std::vector<std::vector<std::size_t>> groups(centres.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const double v = candidates[c].location[axis];
    std::size_t best = 0;
    for (std::size_t g = 1; g < centre_pos.size(); ++g)
      if (std::abs(centre_pos[g] - v) < std::abs(centre_pos[best] - v)) best = g;
    groups[best].push_back(c);
  }

  // Candidate probabilities do not depend on Q; compute them once.
  std::vector<std::vector<double>> probs(candidates.size());
  const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(candidates.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t c = 0; c < m; ++c) probs[c] = candidate_probs(data, q.kernel, candidates[c]);

  auto duplicate = [&](const Component& c) {
    return std::any_of(q.components.begin(), q.components.end(), [&](const Component& e) {
      return e.location == c.location && e.cov_diag == c.cov_diag;
    });
  };

  for (std::size_t g = 0; g < groups.size(); ++g) {
    std::size_t pick = candidates.size();
    double best_d = 0.0;
    for (std::size_t c : groups[g]) {
      if (duplicate(candidates[c])) continue;
      const double dv = gradient_from_probs(cache.mixed(), probs[c]);
      if (dv > best_d) {
        best_d = dv;
        pick = c;
      }
    }
    if (pick == candidates.size()) continue;
    const double alpha = line_search_alpha(cache.mixed(), probs[pick]);
    if (!(alpha > 0.0)) continue;
    for (auto& comp : q.components) comp.weight *= 1.0 - alpha;
    Component c = candidates[pick];
    c.weight = alpha;
    q.components.push_back(std::move(c));
    q.normalize();
    cache.append_column(probs[pick]);
    cache.refresh_mixed(q.weights());
    added.push_back({g, best_d, alpha});
  }
  (void)n;
  return added;
}

std::string to_string(Mode m) {
  switch (m) {
    case Mode::GR: return "GR";
    case Mode::EM: return "EM";
    case Mode::EM_GR: return "EM-GR";
  }
  return "?";
}

Mode mode_from_string(const std::string& s) {
  if (s == "GR") return Mode::GR;
  if (s == "EM") return Mode::EM;
  if (s == "EM-GR" || s == "EM_GR") return Mode::EM_GR;
  throw Error("unknown estimation mode '" + s + "' (expected GR, EM or EM-GR)");
}

EstimateResult estimate(const Dataset& data, MixingDistribution q0, const EmConfig& em_cfg,
                        const AdaptConfig& cfg, const WeightSolveConfig& wcfg, Mode mode,
                        std::uint64_t seed) {
  q0.kernel.validate();
  q0.validate();
  em_cfg.validate();
  wcfg.validate();
  const std::size_t d = q0.dim();
  cfg.validate(d);

  EstimateResult res;
  if (mode == Mode::GR) {
    auto rr = refine_grid(data, std::move(q0), cfg, wcfg);
    res.q = std::move(rr.q);
    res.trace = std::move(rr.trace);
    res.loglik = res.trace.back().ll;
    res.over_soft_cap = !check_component_cap(res.q, data.size());
    return res;
  }

  const std::vector<double> cand_cov(d, cfg.em_var);
  auto q = std::move(q0);
  auto cache = build_cache(data, q);
  auto row = [&](std::size_t round, const char* step) {
    res.trace.push_back({round, step, scaled_loglik(cache), q.size(),
                         max_probe_gradient(data, q, cache, cfg, cand_cov)});
  };
  auto settle_weights = [&] {
    if (!optimize_weights(q, cache, wcfg).converged) ++res.weight_solver_warnings;
  };

  // Start from optimized, pruned weights so the EM steps only see live
  // components.
  settle_weights();
  prune_with_cache(q, cache, cfg.eps_tol);
  settle_weights();
  row(0, "init");
  double ll_prev = res.trace.back().ll;

  for (std::size_t round = 1; round <= cfg.outer_rounds; ++round) {
    const std::uint64_t round_seed = hash_combine(hash_combine(seed, kRoundStream), round);

    auto em = em_run(data, std::move(q), std::move(cache), em_cfg);
    q = std::move(em.q);
    cache = std::move(em.cache);
    row(round, "em");

    const auto locs = mh_sample_support(data, q, cache, cand_cov, cfg, round_seed);
    std::vector<Component> cands;
    for (const auto& l : locs) {
      Component c;
      c.location = l;
      c.cov_diag = cand_cov;
      cands.push_back(std::move(c));
    }
    group_and_add(data, q, cache, cands, cfg.groups, round_seed);
    row(round, "add");

    settle_weights();
    row(round, "weights");
    prune_with_cache(q, cache, cfg.eps_tol);
    settle_weights();
    if (!check_component_cap(q, data.size())) res.over_soft_cap = true;
    row(round, "prune");

    const double ll = res.trace.back().ll;
    if (ll - ll_prev < cfg.round_tol) break;
    ll_prev = ll;
  }
  if (res.over_soft_cap)
    std::clog << "warning: estimate has more than n+1 support points\n";
  res.loglik = res.trace.back().ll;
  res.q = std::move(q);
  return res;
}

}  // namespace npmle
