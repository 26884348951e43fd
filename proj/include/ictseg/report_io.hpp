#pragma once

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "ictseg/metrics.hpp"

namespace ictseg {

constexpr int kReportSchemaVersion = 1;

inline nlohmann::json report_json(const MetricReport& report) {
  nlohmann::json j;
  j["schema_version"] = kReportSchemaVersion;
  j["config_hash"] = report.config_hash;
  j["seed"] = report.seed;
  j["iteration"] = report.iteration;
  j["n_excluded"] = report.n_excluded;
  nlohmann::json per_class = nlohmann::json::object();
  for (const auto& [cls, m] : report.per_class) {
    nlohmann::json jm;
    jm["dsc"] = m.dsc;
    jm["asd"] = m.asd ? nlohmann::json(*m.asd) : nlohmann::json(nullptr);
    jm["hd"] = m.hd ? nlohmann::json(*m.hd) : nlohmann::json(nullptr);
    jm["defined"] = m.defined;
    per_class[std::to_string(cls)] = jm;
  }
  j["per_class"] = per_class;
  j["averaged"] = {{"dsc", report.dsc_avg},
                   {"asd", report.asd_avg ? nlohmann::json(*report.asd_avg) : nlohmann::json(nullptr)},
                   {"hd", report.hd_avg ? nlohmann::json(*report.hd_avg) : nlohmann::json(nullptr)}};
  return j;
}

inline MetricReport report_from_json(const nlohmann::json& j) {
  MetricReport report;
  try {
    if (j.at("schema_version").get<int>() != kReportSchemaVersion)
      throw VersionError("unsupported report schema version");
    report.config_hash = j.at("config_hash").get<std::string>();
    report.seed = j.at("seed").get<std::uint64_t>();
    report.iteration = j.at("iteration").get<long>();
    report.n_excluded = j.at("n_excluded").get<int>();
    for (const auto& [key, jm] : j.at("per_class").items()) {
      ClassMetrics m;
      m.dsc = jm.at("dsc").get<double>();
      if (!jm.at("asd").is_null()) m.asd = jm.at("asd").get<double>();
      if (!jm.at("hd").is_null()) m.hd = jm.at("hd").get<double>();
      m.defined = jm.at("defined").get<bool>();
      report.per_class[std::stoi(key)] = m;
    }
    const auto& avg = j.at("averaged");
    report.dsc_avg = avg.at("dsc").get<double>();
    if (!avg.at("asd").is_null()) report.asd_avg = avg.at("asd").get<double>();
    if (!avg.at("hd").is_null()) report.hd_avg = avg.at("hd").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError("report is missing fields: " + std::string(e.what()));
  }
  return report;
}

inline void write_report(const MetricReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << report_json(report).dump(2) << "\n";
}

inline MetricReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError("malformed report: " + std::string(e.what()));
  }
  return report_from_json(j);
}

}  // namespace ictseg
