#include "npmle/kernel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include "npmle/data.hpp"
#include "npmle/error.hpp"
#include "npmle/mixture.hpp"

namespace npmle {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Gauss-Legendre abscissae/weights on [-1, 1] (positive half) for 6, 12 and
// 20 points, as used by the Drezner-Wesolowsky/Genz bivariate normal scheme.
constexpr std::array<double, 3> kW6 = {0.1713244923791705, 0.3607615730481384,
                                       0.4679139345726904};
constexpr std::array<double, 3> kX6 = {0.9324695142031522, 0.6612093864662647,
                                       0.2386191860831970};
constexpr std::array<double, 6> kW12 = {0.04717533638651177, 0.1069393259953183,
                                        0.1600783285433464,  0.2031674267230659,
                                        0.2334925365383547,  0.2491470458134029};
constexpr std::array<double, 6> kX12 = {0.9815606342467191, 0.9041172563704750,
                                        0.7699026741943050, 0.5873179542866171,
                                        0.3678314989981802, 0.1252334085114692};
constexpr std::array<double, 10> kW20 = {
    0.01761400713915212, 0.04060142980038694, 0.06267204833410906, 0.08327674157670475,
    0.1019301198172404,  0.1181945319615184,  0.1316886384491766,  0.1420961093183821,
    0.1491729864726037,  0.1527533871307259};
constexpr std::array<double, 10> kX20 = {
    0.9931285991850949, 0.9639719272779138, 0.9122344282513259, 0.8391169718222188,
    0.7463319064601508, 0.6360536807265150, 0.5108670019508271, 0.3737060887154196,
    0.2277858511416451, 0.07652652113349733};

// Upper orthant P(X > dh, Y > dk).
double bvn_upper(double dh, double dk, double r) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (dh == inf || dk == inf) return 0.0;
  if (dh == -inf) return dk == -inf ? 1.0 : normal_cdf(-dk);
  if (dk == -inf) return normal_cdf(-dh);
  if (r == 0.0) return normal_cdf(-dh) * normal_cdf(-dk);

  std::span<const double> w, x;
  const double ar = std::abs(r);
  if (ar < 0.3) {
    w = kW6;
    x = kX6;
  } else if (ar < 0.75) {
    w = kW12;
    x = kX12;
  } else {
    w = kW20;
    x = kX20;
  }

  double h = dh;
  double k = dk;
  double hk = h * k;
  double bvn = 0.0;

  if (ar < 0.925) {
    const double hs = (h * h + k * k) / 2.0;
    const double asr = std::asin(r) / 2.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      for (double sign : {-1.0, 1.0}) {
        const double sn = std::sin(asr * (1.0 + sign * x[i]));
        bvn += w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
      }
    }
    return std::clamp(bvn * asr / kTwoPi + normal_cdf(-h) * normal_cdf(-k), 0.0, 1.0);
  }

  if (r < 0.0) {
    k = -k;
    hk = -hk;
  }
  if (ar < 1.0) {
    const double as = (1.0 - r) * (1.0 + r);
    double a = std::sqrt(as);
    const double bs = (h - k) * (h - k);
    const double c = (4.0 - hk) / 8.0;
    const double d = (12.0 - hk) / 80.0;
    double asr = -(bs / as + hk) / 2.0;
    if (asr > -100.0) {
      bvn = a * std::exp(asr) *
            (1.0 - c * (bs - as) * (1.0 - d * bs) / 3.0 + c * d * as * as);
    }
    if (hk > -100.0) {
      const double b = std::sqrt(bs);
      const double sp = std::sqrt(kTwoPi) * normal_cdf(-b / a);
      bvn -= std::exp(-hk / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
    }
    a /= 2.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      for (double sign : {-1.0, 1.0}) {
        const double xs = (a * (1.0 + sign * x[i])) * (a * (1.0 + sign * x[i]));
        asr = -(bs / xs + hk) / 2.0;
        if (asr <= -100.0) continue;
        const double sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
        const double rs = std::sqrt(1.0 - xs);
        const double ep = std::exp(-(hk / 2.0) * xs / ((1.0 + rs) * (1.0 + rs))) / rs;
        sum += w[i] * std::exp(asr) * (sp - ep);
      }
    }
    bvn = (a * sum - bvn) / kTwoPi;
  }
  if (r > 0.0) {
    bvn += normal_cdf(-std::max(h, k));
  } else if (h >= k) {
    bvn = -bvn;
  } else {
    const double l = h < 0.0 ? normal_cdf(k) - normal_cdf(h) : normal_cdf(-h) - normal_cdf(-k);
    bvn = l - bvn;
  }
  return std::clamp(bvn, 0.0, 1.0);
}

// Probability that `chosen` has the largest utility; sigma is symmetrized.
double mnp_core(const double* v, const double* sigma, std::size_t n_alt, std::size_t chosen) {
  auto s = [&](std::size_t a, std::size_t b) {
    return 0.5 * (sigma[a * n_alt + b] + sigma[b * n_alt + a]);
  };
  const std::size_t j = chosen;
  if (n_alt == 2) {
    const std::size_t o = 1 - j;
    const double var = s(o, o) + s(j, j) - 2.0 * s(o, j);
    if (!(var > 0.0)) throw Error("mnp_prob: difference covariance is not positive-definite");
    return normal_cdf(-(v[o] - v[j]) / std::sqrt(var));
  }
  // W_k = U_k - U_j for the two other alternatives; P(W <= 0).
  std::array<std::size_t, 2> other{};
  for (std::size_t a = 0, m = 0; a < 3; ++a)
    if (a != j) other[m++] = a;
  const auto [p, q] = other;
  const double vp = s(p, p) + s(j, j) - 2.0 * s(p, j);
  const double vq = s(q, q) + s(j, j) - 2.0 * s(q, j);
  const double cpq = s(p, q) - s(p, j) - s(j, q) + s(j, j);
  if (!(vp > 0.0) || !(vq > 0.0))
    throw Error("mnp_prob: difference covariance is not positive-definite");
  const double sp = std::sqrt(vp);
  const double sq = std::sqrt(vq);
  const double rho = std::clamp(cpq / (sp * sq), -1.0, 1.0);
  return bvn_cdf(-(v[p] - v[j]) / sp, -(v[q] - v[j]) / sq, rho);
}

void check_positive_definite(std::span<const double> sigma, std::size_t n, const char* who) {
  // Cholesky on the symmetrized matrix.
  std::array<double, kMaxAlternatives * kMaxAlternatives> l{};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k <= i; ++k) {
      double sum = 0.5 * (sigma[i * n + k] + sigma[k * n + i]);
      for (std::size_t m = 0; m < k; ++m) sum -= l[i * n + m] * l[k * n + m];
      if (i == k) {
        if (!(sum > 1e-10)) throw Error(std::string(who) + ": covariance is not positive-definite");
        l[i * n + i] = std::sqrt(sum);
      } else {
        l[i * n + k] = sum / l[k * n + k];
      }
    }
  }
}

}  // namespace

std::string to_string(Family f) { return f == Family::MNL ? "MNL" : "MNP"; }

Family family_from_string(const std::string& s) {
  if (s == "MNL") return Family::MNL;
  if (s == "MNP") return Family::MNP;
  throw Error("unknown kernel family '" + s + "'");
}

std::size_t KernelSpec::mixed_dim() const {
  std::size_t d = slope.mixed ? 1 : 0;
  for (const auto& a : asc) d += a.mixed ? 1 : 0;
  return d;
}

void KernelSpec::validate() const {
  if (alternatives < 2 || alternatives > kMaxAlternatives)
    throw Error("kernel: number of alternatives must be in [2, " +
                std::to_string(kMaxAlternatives) + "]");
  if (asc.size() != alternatives) throw Error("kernel: need one ASC entry per alternative");
  const std::size_t d = mixed_dim();
  std::vector<int> seen(d, 0);
  auto mark = [&](const Coefficient& c) {
    if (!c.mixed) return;
    if (c.index >= d) throw Error("kernel: mixed index out of range");
    ++seen[c.index];
  };
  mark(slope);
  for (const auto& a : asc) mark(a);
  for (int s : seen)
    if (s != 1) throw Error("kernel: every mixed coordinate must be used exactly once");
  if (family == Family::MNP) {
    if (alternatives > 3) throw Error("kernel: MNP with more than 3 alternatives is unsupported");
    if (error_cov.size() != alternatives * alternatives)
      throw Error("kernel: error covariance has the wrong size");
    for (std::size_t i = 0; i < alternatives; ++i)
      for (std::size_t k = 0; k < i; ++k)
        if (std::abs(error_cov[i * alternatives + k] - error_cov[k * alternatives + i]) > 1e-10)
          throw Error("kernel: error covariance is not symmetric");
    check_positive_definite(error_cov, alternatives, "kernel");
  }
}

std::vector<double> identity_cov(std::size_t alternatives, double scale) {
  std::vector<double> m(alternatives * alternatives, 0.0);
  for (std::size_t i = 0; i < alternatives; ++i) m[i * alternatives + i] = scale;
  return m;
}

KernelSpec slope_mixed_kernel(std::vector<double> error_cov, std::size_t alternatives) {
  KernelSpec k;
  k.alternatives = alternatives;
  k.error_cov = std::move(error_cov);
  k.slope = Coefficient::mixed_at(0);
  k.asc.assign(alternatives, Coefficient::fixed(0.0));
  return k;
}

KernelSpec asc_mixed_kernel(std::vector<double> error_cov, double slope,
                            std::size_t alternatives) {
  KernelSpec k;
  k.alternatives = alternatives;
  k.error_cov = std::move(error_cov);
  k.slope = Coefficient::fixed(slope);
  k.asc.assign(alternatives, Coefficient::fixed(0.0));
  for (std::size_t j = 1; j < alternatives; ++j) k.asc[j] = Coefficient::mixed_at(j - 1);
  return k;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double bvn_cdf(double h, double k, double rho) {
  if (!(rho >= -1.0 && rho <= 1.0)) throw Error("bvn_cdf: correlation outside [-1, 1]");
  if (std::isnan(h) || std::isnan(k)) throw Error("bvn_cdf: NaN argument");
  return bvn_upper(-h, -k, rho);
}

std::vector<double> mnl_prob(std::span<const double> utilities) {
  if (utilities.empty()) throw Error("mnl_prob: empty utility vector");
  for (double u : utilities)
    if (std::isnan(u)) throw Error("mnl_prob: NaN utility");
  const double top = *std::max_element(utilities.begin(), utilities.end());
  std::vector<double> p(utilities.size());
  double sum = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    p[j] = std::exp(utilities[j] - top);
    sum += p[j];
  }
  for (double& v : p) v /= sum;
  return p;
}

double mnp_prob(std::span<const double> utilities, std::span<const double> sigma,
                std::size_t chosen) {
  const std::size_t n = utilities.size();
  if (n != 2 && n != 3) throw Error("mnp_prob: only 2 or 3 alternatives are supported");
  if (sigma.size() != n * n) throw Error("mnp_prob: covariance has the wrong size");
  if (chosen >= n) throw Error("mnp_prob: chosen alternative out of range");
  check_positive_definite(sigma, n, "mnp_prob");
  return mnp_core(utilities.data(), sigma.data(), n, chosen);
}

double component_prob_unchecked(std::span<const double> x, std::size_t chosen,
                                const KernelSpec& spec, std::span<const double> location,
                                std::span<const double> cov_diag) {
  const std::size_t n_alt = spec.alternatives;
  auto coef = [&](const Coefficient& c) { return c.mixed ? location[c.index] : c.value; };
  std::array<double, kMaxAlternatives> v{};
  const double slope = coef(spec.slope);
  for (std::size_t j = 0; j < n_alt; ++j) v[j] = x[j] * slope + coef(spec.asc[j]);

  bool gaussian = false;
  for (double s : cov_diag) gaussian = gaussian || s > 0.0;

  if (spec.family == Family::MNL) {
    if (gaussian) throw Error("component_prob: Gaussian component passed to the MNL kernel");
    double top = v[0];
    for (std::size_t j = 1; j < n_alt; ++j) top = std::max(top, v[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < n_alt; ++j) sum += std::exp(v[j] - top);
    return std::exp(v[chosen] - top) / sum;
  }

  if (!gaussian) return mnp_core(v.data(), spec.error_cov.data(), n_alt, chosen);

  // Absorb N(location, diag(cov_diag)) into the error covariance:
  // Sigma + A diag(cov) A' with A's column x for the slope and e_j for ASC j.
  std::array<double, 9> cov{};
  std::copy(spec.error_cov.begin(), spec.error_cov.end(), cov.begin());
  if (spec.slope.mixed) {
    const double var = cov_diag[spec.slope.index];
    if (var > 0.0)
      for (std::size_t a = 0; a < n_alt; ++a)
        for (std::size_t b = 0; b < n_alt; ++b) cov[a * n_alt + b] += var * x[a] * x[b];
  }
  for (std::size_t j = 0; j < n_alt; ++j)
    if (spec.asc[j].mixed) cov[j * n_alt + j] += cov_diag[spec.asc[j].index];
  return mnp_core(v.data(), cov.data(), n_alt, chosen);
}

double component_prob(const Dataset& data, std::size_t row, const KernelSpec& spec,
                      const Component& c) {
  if (row >= data.size()) throw Error("component_prob: row out of range");
  if (data.alternatives() != spec.alternatives)
    throw Error("component_prob: dataset and kernel disagree on the number of alternatives");
  const std::size_t d = spec.mixed_dim();
  if (c.location.size() != d || c.cov_diag.size() != d)
    throw Error("component_prob: component dimension " + std::to_string(c.location.size()) +
                " does not match the mixed map (" + std::to_string(d) + ")");
  if (spec.family == Family::MNP && spec.alternatives > 3)
    throw Error("component_prob: MNP with more than 3 alternatives is unsupported");
  return component_prob_unchecked(data.regressors(row), data.choice(row), spec, c.location,
                                  c.cov_diag);
}

}  // namespace npmle
