#include "nls/harness/emit.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <fmt/format.h>

#include "nls/errors.hpp"
#include "nls/linalg.hpp"

namespace nls::harness {

namespace fs = std::filesystem;

std::string version_string() { return "nls-sim 1.0.0"; }

std::string format_number(double x) { return fmt::format("{}", x); }

OutputDir::OutputDir(std::string dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec || !fs::is_directory(dir_)) throw ConfigError("cannot create output directory '" + dir_ + "'");
  const fs::path probe = fs::path(dir_) / ".write_probe";
  {
    std::ofstream out(probe);
    if (!out) throw ConfigError("output directory '" + dir_ + "' is not writable");
  }
  fs::remove(probe, ec);
}

void OutputDir::write_text(const std::string& name, const std::string& content) {
  const fs::path p = fs::path(dir_) / name;
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << content;
  out.close();
  if (!out) throw std::runtime_error("failed to write " + p.string());
  if (std::find(files_.begin(), files_.end(), name) == files_.end()) files_.push_back(name);
}

void OutputDir::write_csv(const std::string& name, const std::string& header,
                          const std::vector<std::vector<double>>& rows) {
  std::string s = header + "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) s += ',';
      s += format_number(row[i]);
    }
    s += '\n';
  }
  write_text(name, s);
}

void OutputDir::write_convergence(const std::string& name, const std::vector<ConvergenceRow>& rows) {
  std::vector<std::vector<double>> r;
  for (const auto& row : rows) r.push_back({row.abscissa, row.l2_error, row.h1_error});
  write_csv(name, "abscissa,l2_error,h1_error", r);
}

void OutputDir::write_json(const std::string& name, const nlohmann::json& j) { write_text(name, j.dump(2) + "\n"); }

void OutputDir::write_timing(const nlohmann::json& j) {
  std::ofstream out(fs::path(dir_) / "timing.json");
  out << j.dump(2) << "\n";
  timing_written_ = true;
}

nlohmann::json OutputDir::write_manifest(const nlohmann::json& metadata) {
  nlohmann::json files = nlohmann::json::array();
  for (const auto& name : files_) {
    std::ifstream in(fs::path(dir_) / name, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string bytes = ss.str();
    std::ostringstream h;
    h << std::hex << std::setw(16) << std::setfill('0') << fnv1a(bytes.data(), bytes.size());
    files.push_back({{"file", name}, {"fnv1a64", h.str()}, {"bytes", bytes.size()}});
  }
  nlohmann::json manifest = metadata;
  manifest["version"] = version_string();
  manifest["files"] = files;
  std::ofstream out(fs::path(dir_) / "manifest.json");
  out << manifest.dump(2) << "\n";
  return manifest;
}

void OutputDir::remove_written() {
  std::error_code ec;
  for (const auto& name : files_) fs::remove(fs::path(dir_) / name, ec);
  if (timing_written_) fs::remove(fs::path(dir_) / "timing.json", ec);
  files_.clear();
}

}  // namespace nls::harness
