#include "npmle/io.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "npmle/error.hpp"

namespace npmle {

namespace {

Json coefficient_to_json(const Coefficient& c) {
  if (c.mixed) return Json{{"mixed", c.index}};
  return Json{{"value", c.value}};
}

Coefficient coefficient_from_json(const Json& j) {
  if (j.contains("mixed")) return Coefficient::mixed_at(j.at("mixed").get<std::size_t>());
  return Coefficient::fixed(j.at("value").get<double>());
}

template <class F>
auto with_context(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const Json::exception& e) {
    throw Error(what + ": " + e.what());
  }
}

}  // namespace

Json kernel_to_json(const KernelSpec& k) {
  Json asc = Json::array();
  for (const auto& a : k.asc) asc.push_back(coefficient_to_json(a));
  return Json{{"family", to_string(k.family)},
              {"alternatives", k.alternatives},
              {"error_cov", k.error_cov},
              {"slope", coefficient_to_json(k.slope)},
              {"asc", asc}};
}

KernelSpec kernel_from_json(const Json& j) {
  return with_context("kernel", [&] {
    KernelSpec k;
    k.family = family_from_string(j.at("family").get<std::string>());
    k.alternatives = j.at("alternatives").get<std::size_t>();
    if (j.contains("error_cov")) k.error_cov = j.at("error_cov").get<std::vector<double>>();
    k.slope = coefficient_from_json(j.at("slope"));
    k.asc.clear();
    for (const auto& a : j.at("asc")) k.asc.push_back(coefficient_from_json(a));
    k.validate();
    return k;
  });
}

Json mixing_to_json(const MixingDistribution& q) {
  Json comps = Json::array();
  for (const auto& c : q.components)
    comps.push_back(Json{{"weight", c.weight}, {"location", c.location}, {"cov_diag", c.cov_diag}});
  return Json{{"kernel", kernel_to_json(q.kernel)}, {"components", comps}};
}

MixingDistribution mixing_from_json(const Json& j) {
  return with_context("mixing distribution", [&] {
    MixingDistribution q;
    q.kernel = kernel_from_json(j.at("kernel"));
    for (const auto& c : j.at("components")) {
      Component comp;
      comp.weight = c.at("weight").get<double>();
      comp.location = c.at("location").get<std::vector<double>>();
      comp.cov_diag = c.contains("cov_diag") ? c.at("cov_diag").get<std::vector<double>>()
                                             : std::vector<double>(comp.location.size(), 0.0);
      q.components.push_back(std::move(comp));
    }
    q.validate();
    return q;
  });
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

void write_json(const Json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

void save_mixing(const MixingDistribution& q, const std::filesystem::path& path) {
  write_json(mixing_to_json(q), path);
}

MixingDistribution load_mixing(const std::filesystem::path& path) {
  return mixing_from_json(read_json(path));
}

void save_truth(CaseId c, const std::filesystem::path& path) {
  const auto t = true_mixing(c);
  Json j{{"case", to_string(c)}, {"labels", t.labels()}, {"mean", t.mean()}};
  std::vector<double> neg;
  for (std::size_t k = 0; k < t.dim(); ++k) neg.push_back(t.negative_mass(k));
  j["negative_mass"] = neg;
  write_json(j, path);
}

CaseId load_truth_case(const std::filesystem::path& path) {
  const auto j = read_json(path);
  return with_context(path.string(),
                      [&] { return case_from_string(j.at("case").get<std::string>()); });
}

namespace {

using Setter = std::function<void(EstimatorSettings&, const Json&)>;

template <class T, class M>
Setter field(M member) {
  return [member](EstimatorSettings& s, const Json& v) { std::invoke(member, s) = v.get<T>(); };
}

std::vector<double> as_vector(const Json& v) {
  if (v.is_number()) return {v.get<double>()};
  return v.get<std::vector<double>>();
}

const std::vector<std::pair<std::string, Setter>>& setters() {
  static const std::vector<std::pair<std::string, Setter>> table = {
      {"n_em", field<std::size_t>([](EstimatorSettings& s) -> auto& { return s.em.n_em; })},
      {"mstep_max_evals",
       field<std::size_t>([](EstimatorSettings& s) -> auto& { return s.em.mstep_max_evals; })},
      {"mstep_tol", field<double>([](EstimatorSettings& s) -> auto& { return s.em.mstep_tol; })},
      {"mstep_step", field<double>([](EstimatorSettings& s) -> auto& { return s.em.mstep_step; })},
      {"n_g", field<std::size_t>([](EstimatorSettings& s) -> auto& { return s.adapt.n_g; })},
      {"grid_target",
       field<std::size_t>([](EstimatorSettings& s) -> auto& { return s.adapt.grid_target; })},
      {"m_l", field<std::size_t>([](EstimatorSettings& s) -> auto& { return s.adapt.m_l; })},
      {"split_var_factor",
       field<double>([](EstimatorSettings& s) -> auto& { return s.adapt.split_var_factor; })},
      {"grid_iters",
       field<std::size_t>([](EstimatorSettings& s) -> auto& { return s.adapt.grid_iters; })},
      {"outer_rounds",
       field<std::size_t>([](EstimatorSettings& s) -> auto& { return s.adapt.outer_rounds; })},
      {"eps_tol",
       [](EstimatorSettings& s, const Json& v) {
         s.adapt.eps_tol = v.get<double>();
         s.weights.active_tol = s.adapt.eps_tol;
       }},
      {"lower", [](EstimatorSettings& s, const Json& v) { s.adapt.lower = as_vector(v); }},
      {"upper", [](EstimatorSettings& s, const Json& v) { s.adapt.upper = as_vector(v); }},
      {"grid_var", field<double>([](EstimatorSettings& s) -> auto& { return s.adapt.grid_var; })},
      {"em_var", field<double>([](EstimatorSettings& s) -> auto& { return s.adapt.em_var; })},
      {"gr_kernel_scale",
       field<double>([](EstimatorSettings& s) -> auto& { return s.gr_kernel_scale; })},
      {"probe_points",
       field<std::size_t>([](EstimatorSettings& s) -> auto& { return s.adapt.probe_points; })},
      {"mh_thin", field<std::size_t>([](EstimatorSettings& s) -> auto& { return s.adapt.mh_thin; })},
      {"mh_eps", field<double>([](EstimatorSettings& s) -> auto& { return s.adapt.mh_eps; })},
      {"proposal_scale",
       field<double>([](EstimatorSettings& s) -> auto& { return s.adapt.proposal_scale; })},
      {"groups", field<std::size_t>([](EstimatorSettings& s) -> auto& { return s.adapt.groups; })},
      {"round_tol",
       field<double>([](EstimatorSettings& s) -> auto& { return s.adapt.round_tol; })},
      {"weight_max_iters",
       field<std::size_t>([](EstimatorSettings& s) -> auto& { return s.weights.max_iters; })},
      {"kkt_tol", field<double>([](EstimatorSettings& s) -> auto& { return s.weights.kkt_tol; })},
      {"single_start",
       field<bool>([](EstimatorSettings& s) -> auto& { return s.single_start; })},
  };
  return table;
}

const Setter* find_setter(const std::string& key) {
  for (const auto& [k, f] : setters())
    if (k == key) return &f;
  return nullptr;
}

}  // namespace

const std::vector<std::string>& setting_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, f] : setters()) k.push_back(name);
    return k;
  }();
  return keys;
}

void apply_setting(EstimatorSettings& s, const std::string& key, const Json& value) {
  const Setter* f = find_setter(key);
  if (!f) throw Error("unknown configuration key '" + key + "'");
  try {
    (*f)(s, value);
  } catch (const Json::exception& e) {
    throw Error("configuration key '" + key + "': " + e.what());
  }
}

void apply_setting_text(EstimatorSettings& s, const std::string& key, const std::string& text) {
  Json v = Json::parse(text, nullptr, false);
  if (v.is_discarded()) v = text;
  apply_setting(s, key, v);
}

std::vector<std::string> apply_settings(EstimatorSettings& s, const Json& object) {
  if (!object.is_object()) throw Error("configuration must be a JSON object");
  std::vector<std::string> rest;
  for (const auto& [key, value] : object.items()) {
    if (find_setter(key))
      apply_setting(s, key, value);
    else
      rest.push_back(key);
  }
  return rest;
}

std::string env_name(const std::string& key) {
  std::string name = "NPMLE_";
  for (char c : key) name += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return name;
}

void apply_env(EstimatorSettings& s) {
  for (const auto& key : setting_keys())
    if (const char* v = std::getenv(env_name(key).c_str())) apply_setting_text(s, key, v);
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string metrics_csv_header() {
  return "ll_gap,prob_mae,cdf_dist,cdf_ks,cdf_step,pct_neg_err,mean_err_norm";
}

std::string metrics_csv_row(const MetricsReport& m) {
  return format_double(m.ll_gap) + ',' + format_double(m.prob_mae) + ',' +
         format_double(m.cdf_dist) + ',' + format_double(m.cdf_ks) + ',' +
         format_double(m.cdf_step) + ',' + format_double(m.pct_neg_err) + ',' +
         format_double(m.mean_err_norm);
}

}  // namespace npmle
