#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "nls/harness/slope.hpp"

namespace nls::harness {

std::string version_string();
/// Shortest round-trip decimal form, so reruns emit identical bytes.
std::string format_number(double x);

/// Output directory that remembers every file it wrote, for the manifest and
/// for cleanup when an experiment fails midway.
class OutputDir {
 public:
  explicit OutputDir(std::string dir);

  const std::string& path() const { return dir_; }
  void write_text(const std::string& name, const std::string& content);
  void write_csv(const std::string& name, const std::string& header, const std::vector<std::vector<double>>& rows);
  void write_convergence(const std::string& name, const std::vector<ConvergenceRow>& rows);
  void write_json(const std::string& name, const nlohmann::json& j);
  /// Wall-clock data lives outside the manifest so manifest-listed files stay bit-reproducible.
  void write_timing(const nlohmann::json& j);
  /// Writes manifest.json listing every file written so far with its FNV-1a hash.
  nlohmann::json write_manifest(const nlohmann::json& metadata);
  void remove_written();
  const std::vector<std::string>& files() const { return files_; }

 private:
  std::string dir_;
  std::vector<std::string> files_;
  bool timing_written_ = false;
};

}  // namespace nls::harness
