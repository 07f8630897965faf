#pragma once

// JSON descriptors (mixing distributions, truth, scenarios) and the
// configuration-key layer shared by config files, environment variables and
// command-line overrides.

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "npmle/data.hpp"
#include "npmle/harness.hpp"
#include "npmle/metrics.hpp"
#include "npmle/mixture.hpp"

namespace npmle {

using Json = nlohmann::ordered_json;

Json kernel_to_json(const KernelSpec& k);
KernelSpec kernel_from_json(const Json& j);
Json mixing_to_json(const MixingDistribution& q);
MixingDistribution mixing_from_json(const Json& j);

void save_mixing(const MixingDistribution& q, const std::filesystem::path& path);
MixingDistribution load_mixing(const std::filesystem::path& path);

/// {"case": ..., "labels": [...], "mean": [...], ...}
void save_truth(CaseId c, const std::filesystem::path& path);
CaseId load_truth_case(const std::filesystem::path& path);

Json read_json(const std::filesystem::path& path);
void write_json(const Json& j, const std::filesystem::path& path);

/// Configuration keys accepted by apply_setting, in documentation order.
const std::vector<std::string>& setting_keys();

/// Sets one key from a JSON value. Throws Error on unknown keys or bad types.
void apply_setting(EstimatorSettings& s, const std::string& key, const Json& value);
/// Parses `text` as JSON when possible (numbers, arrays, booleans), else as a
/// string, then applies it.
void apply_setting_text(EstimatorSettings& s, const std::string& key, const std::string& text);
/// Applies every member of `object` whose key is a setting; others are left
/// to the caller and returned.
std::vector<std::string> apply_settings(EstimatorSettings& s, const Json& object);
/// NPMLE_<KEY> environment overrides, e.g. NPMLE_N_EM=3.
void apply_env(EstimatorSettings& s);
std::string env_name(const std::string& key);

/// Header and one row of a metrics report.
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsReport& m);

std::string format_double(double v);

}  // namespace npmle
