#include "npmle/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "npmle/error.hpp"
#include "npmle/mixture.hpp"
#include "npmle/rng.hpp"

namespace npmle {

namespace {

enum Stream : std::uint64_t { kRegressors = 1, kCoefficients = 2, kErrors = 3 };

const std::vector<double> kSigma0 = {1.0, 0.5, 0.0, 0.5, 1.25, 0.5, 0.0, 0.5, 1.25};
const std::vector<double> kSigmaShifted = {1.0, -0.5, 0.0, -0.5, 1.25, -0.5, 0.0, -0.5, 1.25};
constexpr std::array<double, 3> kShift = {0.0, 1.0, -1.0};

constexpr double kLogNormalSigma = 0.5;

std::array<double, 9> cholesky3(const std::vector<double>& m) {
  std::array<double, 9> l{};
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k <= i; ++k) {
      double s = m[i * 3 + k];
      for (std::size_t p = 0; p < k; ++p) s -= l[i * 3 + p] * l[k * 3 + p];
      l[i * 3 + k] = i == k ? std::sqrt(s) : s / l[k * 3 + k];
    }
  return l;
}

// 20-point Gauss-Legendre on [-1, 1], positive half.
constexpr std::array<double, 10> kGlX = {
    0.07652652113349733, 0.2277858511416451, 0.3737060887154196, 0.5108670019508271,
    0.6360536807265150,  0.7463319064601508, 0.8391169718222188, 0.9122344282513259,
    0.9639719272779138,  0.9931285991850949};
constexpr std::array<double, 10> kGlW = {
    0.1527533871307259, 0.1491729864726037, 0.1420961093183821, 0.1316886384491766,
    0.1181945319615184, 0.1019301198172404, 0.08327674157670475, 0.06267204833410906,
    0.04060142980038694, 0.01761400713915212};

double mnp_at_slope(std::span<const double> x, double beta, std::size_t chosen,
                    const std::vector<double>& cov) {
  const std::array<double, 3> v = {x[0] * beta, x[1] * beta, x[2] * beta};
  return mnp_prob(v, cov, chosen);
}

// E[p(chosen | beta)] for log(beta) ~ N(0, sigma^2), by composite
// Gauss-Legendre over the standardized log-coefficient on [-9, 9].
double lognormal_choice_prob(std::span<const double> x, std::size_t chosen) {
  const auto id = identity_cov(3);
  constexpr int kPanels = 36;
  constexpr double lo = -9.0, hi = 9.0;
  constexpr double width = (hi - lo) / kPanels;
  double total = 0.0;
  for (int p = 0; p < kPanels; ++p) {
    const double mid = lo + (p + 0.5) * width;
    for (std::size_t q = 0; q < kGlX.size(); ++q) {
      for (double sign : {-1.0, 1.0}) {
        const double z = mid + sign * kGlX[q] * width / 2.0;
        const double dens = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
        total += kGlW[q] * width / 2.0 * dens *
                 mnp_at_slope(x, std::exp(kLogNormalSigma * z), chosen, id);
      }
    }
  }
  return total;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(std::string_view s, std::size_t row) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw Error("dataset row " + std::to_string(row) + ": cannot parse number '" +
                std::string(s) + "'");
  return v;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

Dataset::Dataset(std::size_t alternatives, std::vector<double> x,
                 std::vector<std::size_t> choice, std::vector<double> true_prob)
    : alternatives_(alternatives),
      x_(std::move(x)),
      choice_(std::move(choice)),
      true_prob_(std::move(true_prob)) {
  if (alternatives_ < 2) throw Error("dataset: need at least two alternatives");
  if (x_.size() != choice_.size() * alternatives_)
    throw Error("dataset: regressor matrix does not match the number of rows");
  for (std::size_t i = 0; i < choice_.size(); ++i)
    if (choice_[i] >= alternatives_)
      throw Error("dataset row " + std::to_string(i) + ": choice out of range");
  if (!true_prob_.empty()) {
    if (true_prob_.size() != choice_.size())
      throw Error("dataset: true_prob must have one entry per row");
    for (std::size_t i = 0; i < true_prob_.size(); ++i)
      if (!(true_prob_[i] > 0.0 && true_prob_[i] < 1.0))
        throw Error("dataset row " + std::to_string(i) + ": true_prob outside (0, 1)");
  }
}

Dataset Dataset::head(std::size_t n) const {
  if (n > size()) throw Error("dataset: head larger than the dataset");
  std::vector<double> x(x_.begin(), x_.begin() + static_cast<std::ptrdiff_t>(n * alternatives_));
  std::vector<std::size_t> c(choice_.begin(), choice_.begin() + static_cast<std::ptrdiff_t>(n));
  std::vector<double> tp;
  if (has_true_prob())
    tp.assign(true_prob_.begin(), true_prob_.begin() + static_cast<std::ptrdiff_t>(n));
  return Dataset(alternatives_, std::move(x), std::move(c), std::move(tp));
}

std::string to_string(CaseId c) {
  switch (c) {
    case CaseId::C1a: return "1a";
    case CaseId::C1b: return "1b";
    case CaseId::C1c: return "1c";
    case CaseId::C2a: return "2a";
    case CaseId::C2b: return "2b";
  }
  return "?";
}

CaseId case_from_string(const std::string& s) {
  if (s == "1a") return CaseId::C1a;
  if (s == "1b") return CaseId::C1b;
  if (s == "1c") return CaseId::C1c;
  if (s == "2a") return CaseId::C2a;
  if (s == "2b") return CaseId::C2b;
  throw Error("unknown case '" + s + "' (expected 1a, 1b, 1c, 2a or 2b)");
}

TrueMixing TrueMixing::point_masses(std::vector<std::vector<double>> locations,
                                    std::vector<double> weights,
                                    std::vector<std::string> labels) {
  TrueMixing t;
  t.kind_ = Kind::PointMasses;
  t.locations_ = std::move(locations);
  t.weights_ = std::move(weights);
  t.labels_ = std::move(labels);
  return t;
}

TrueMixing TrueMixing::normal(double mean, double sd, std::string label) {
  TrueMixing t;
  t.kind_ = Kind::Normal;
  t.p1_ = mean;
  t.p2_ = sd;
  t.labels_ = {std::move(label)};
  return t;
}

TrueMixing TrueMixing::log_normal(double mu, double sigma, std::string label) {
  TrueMixing t;
  t.kind_ = Kind::LogNormal;
  t.p1_ = mu;
  t.p2_ = sigma;
  t.labels_ = {std::move(label)};
  return t;
}

double TrueMixing::cdf(std::span<const double> z) const {
  if (z.size() != dim()) throw Error("TrueMixing::cdf: dimension mismatch");
  switch (kind_) {
    case Kind::Normal:
      return normal_cdf((z[0] - p1_) / p2_);
    case Kind::LogNormal:
      return z[0] <= 0.0 ? 0.0 : normal_cdf((std::log(z[0]) - p1_) / p2_);
    case Kind::PointMasses: {
      double total = 0.0;
      for (std::size_t s = 0; s < weights_.size(); ++s) {
        bool below = true;
        for (std::size_t k = 0; k < z.size(); ++k) below = below && locations_[s][k] <= z[k];
        if (below) total += weights_[s];
      }
      return total;
    }
  }
  return 0.0;
}

std::vector<double> TrueMixing::mean() const {
  switch (kind_) {
    case Kind::Normal: return {p1_};
    case Kind::LogNormal: return {std::exp(p1_ + 0.5 * p2_ * p2_)};
    case Kind::PointMasses: {
      std::vector<double> m(dim(), 0.0);
      for (std::size_t s = 0; s < weights_.size(); ++s)
        for (std::size_t k = 0; k < m.size(); ++k) m[k] += weights_[s] * locations_[s][k];
      return m;
    }
  }
  return {};
}

double TrueMixing::negative_mass(std::size_t k) const {
  if (k >= dim()) throw Error("TrueMixing::negative_mass: coordinate out of range");
  switch (kind_) {
    case Kind::Normal: return normal_cdf(-p1_ / p2_);
    case Kind::LogNormal: return 0.0;
    case Kind::PointMasses: {
      double total = 0.0;
      for (std::size_t s = 0; s < weights_.size(); ++s)
        if (locations_[s][k] < 0.0) total += weights_[s];
      return total;
    }
  }
  return 0.0;
}

std::vector<double> case_error_cov(CaseId c) {
  return (c == CaseId::C2a || c == CaseId::C2b) ? kSigma0 : identity_cov(3);
}

std::vector<double> case2b_shifted_cov() { return kSigmaShifted; }

KernelSpec case_kernel(CaseId c, std::vector<double> error_cov) {
  if (c == CaseId::C2a || c == CaseId::C2b) return asc_mixed_kernel(std::move(error_cov), 1.0);
  return slope_mixed_kernel(std::move(error_cov));
}

TrueMixing true_mixing(CaseId c) {
  switch (c) {
    case CaseId::C1a:
      return TrueMixing::point_masses({{1.0}, {-1.0}}, {0.75, 0.25}, {"beta"});
    case CaseId::C1b:
      return TrueMixing::normal(1.0, 1.0, "beta");
    case CaseId::C1c:
      return TrueMixing::log_normal(0.0, kLogNormalSigma, "beta");
    case CaseId::C2a:
      return TrueMixing::point_masses({{0.0, 0.0}}, {1.0}, {"alpha2", "alpha3"});
    case CaseId::C2b:
      return TrueMixing::point_masses({{0.0, 0.0}, {kShift[1], kShift[2]}}, {0.5, 0.5},
                                      {"alpha2", "alpha3"});
  }
  throw Error("unknown case");
}

double true_choice_prob(CaseId c, std::span<const double> x, std::size_t chosen) {
  switch (c) {
    case CaseId::C1a: {
      const auto id = identity_cov(3);
      return 0.75 * mnp_at_slope(x, 1.0, chosen, id) + 0.25 * mnp_at_slope(x, -1.0, chosen, id);
    }
    case CaseId::C1b: {
      const auto kernel = slope_mixed_kernel(identity_cov(3));
      const std::array<double, 1> loc = {1.0};
      const std::array<double, 1> var = {1.0};
      return component_prob_unchecked(x, chosen, kernel, loc, var);
    }
    case CaseId::C1c:
      return lognormal_choice_prob(x, chosen);
    case CaseId::C2a:
      return mnp_at_slope(x, 1.0, chosen, kSigma0);
    case CaseId::C2b: {
      const std::array<double, 3> shifted = {x[0] + kShift[0], x[1] + kShift[1], x[2] + kShift[2]};
      return 0.5 * mnp_at_slope(x, 1.0, chosen, kSigma0) +
             0.5 * mnp_prob(shifted, kSigmaShifted, chosen);
    }
  }
  throw Error("unknown case");
}

SimulationDraws simulate_draws(CaseId c, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw Error("simulate: n must be at least 1");
  SimulationDraws d;
  d.x.resize(n * 3);
  d.beta.resize(n);
  d.asc.assign(n * 3, 0.0);
  d.errors.resize(n * 3);
  d.error_component.assign(n, 0);

  const auto l0 = cholesky3(kSigma0);
  const auto l1 = cholesky3(kSigmaShifted);
  std::normal_distribution<double> z01(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  for (std::size_t i = 0; i < n; ++i) {
    auto reg = make_engine(seed, kRegressors, i);
    for (std::size_t j = 0; j < 3; ++j) d.x[i * 3 + j] = 3.0 * z01(reg);

    auto coef = make_engine(seed, kCoefficients, i);
    switch (c) {
      case CaseId::C1a: d.beta[i] = u01(coef) < 0.75 ? 1.0 : -1.0; break;
      case CaseId::C1b: d.beta[i] = 1.0 + z01(coef); break;
      case CaseId::C1c: d.beta[i] = std::exp(kLogNormalSigma * z01(coef)); break;
      case CaseId::C2a:
      case CaseId::C2b: d.beta[i] = 1.0; break;
    }

    auto err = make_engine(seed, kErrors, i);
    std::array<double, 3> z{};
    if (c == CaseId::C2b) d.error_component[i] = u01(err) < 0.5 ? 0 : 1;
    for (double& v : z) v = z01(err);
    double* e = d.errors.data() + i * 3;
    if (c == CaseId::C2a || c == CaseId::C2b) {
      const auto& l = d.error_component[i] == 0 ? l0 : l1;
      for (std::size_t a = 0; a < 3; ++a) {
        e[a] = d.error_component[i] == 0 ? 0.0 : kShift[a];
        for (std::size_t b = 0; b <= a; ++b) e[a] += l[a * 3 + b] * z[b];
      }
    } else {
      std::copy(z.begin(), z.end(), e);
    }
  }
  return d;
}

Simulation simulate_case(CaseId c, std::size_t n, std::uint64_t seed) {
  auto draws = simulate_draws(c, n, seed);
  std::vector<std::size_t> choice(n);
  std::vector<double> true_prob(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    double best_u = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < 3; ++j) {
      const double u = draws.x[i * 3 + j] * draws.beta[i] + draws.asc[i * 3 + j] +
                       draws.errors[i * 3 + j];
      if (u > best_u) {
        best_u = u;
        best = j;
      }
    }
    choice[i] = best;
    const std::span<const double> x(draws.x.data() + i * 3, 3);
    // Clamp into (0, 1): a vanishing generating probability can underflow.
    true_prob[i] = std::clamp(true_choice_prob(c, x, best), 1e-300, 1.0 - 1e-16);
  }
  return {Dataset(3, std::move(draws.x), std::move(choice), std::move(true_prob)),
          true_mixing(c)};
}

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write dataset file " + path.string());
  out << "id,choice";
  for (std::size_t j = 0; j < d.alternatives(); ++j) out << ",x" << j + 1;
  if (d.has_true_prob()) out << ",true_prob";
  out << '\n';
  for (std::size_t i = 0; i < d.size(); ++i) {
    out << i + 1 << ',' << d.choice(i) + 1;
    for (double v : d.regressors(i)) out << ',' << format_double(v);
    if (d.has_true_prob()) out << ',' << format_double(d.true_prob()[i]);
    out << '\n';
  }
  if (!out) throw Error("error while writing dataset file " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open dataset file " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.empty()) throw Error("no observations");
  const auto header = split_csv(line);
  if (header.size() < 4 || header[0] != "id" || header[1] != "choice")
    throw Error("dataset header must start with 'id,choice,x1,x2'");
  const bool has_tp = header.back() == "true_prob";
  const std::size_t n_alt = header.size() - 2 - (has_tp ? 1 : 0);
  for (std::size_t j = 0; j < n_alt; ++j)
    if (header[2 + j] != "x" + std::to_string(j + 1))
      throw Error("dataset header: expected column x" + std::to_string(j + 1));

  std::vector<double> x;
  std::vector<std::size_t> choice;
  std::vector<double> tp;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != header.size())
      throw Error("dataset row " + std::to_string(row) + ": expected " +
                  std::to_string(header.size()) + " fields, found " +
                  std::to_string(fields.size()));
    const double c = parse_double(fields[1], row);
    if (c != std::floor(c) || c < 1.0 || c > static_cast<double>(n_alt))
      throw Error("dataset row " + std::to_string(row) + ": choice " + std::string(fields[1]) +
                  " outside 1.." + std::to_string(n_alt));
    choice.push_back(static_cast<std::size_t>(c) - 1);
    for (std::size_t j = 0; j < n_alt; ++j) x.push_back(parse_double(fields[2 + j], row));
    if (has_tp) tp.push_back(parse_double(fields.back(), row));
  }
  if (choice.empty()) throw Error("no observations");
  return Dataset(n_alt, std::move(x), std::move(choice), std::move(tp));
}

}  // namespace npmle
