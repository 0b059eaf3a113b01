#pragma once

#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <string>
#include <vector>

#include "config.hpp"
#include "dsmcsg/analysis.hpp"

namespace dsmcsg::app {

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ExperimentResult {
  std::vector<Check> checks;
  std::vector<std::filesystem::path> files;

  bool passed() const;
};

/// Output directory: experiment.output_dir, else $DSMCSG_OUTPUT_DIR/<id>,
/// else ./dsmcsg-out/<id>.
std::filesystem::path output_directory(const ExperimentConfig& cfg);

/// Writes CSV rows prefixed by a "# config_hash=" comment and a header.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::string& config_hash,
            const std::vector<std::string>& columns);

  CsvWriter& cell(double x);
  CsvWriter& cell(std::size_t x);
  CsvWriter& cell(int x);
  void end_row();

 private:
  std::ofstream out_;
  std::filesystem::path path_;
  std::size_t columns_;
  std::size_t in_row_ = 0;
  std::string line_;
};

std::string format_real(double x);

ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out, std::ostream& log);

/// Re-runs a stored event log at another order with the model from cfg.
ExperimentResult replay_experiment(const ExperimentConfig& cfg, const std::string& log_path, int order,
                                   const std::filesystem::path& out, std::ostream& log);

void write_observables(const std::filesystem::path& path, const std::string& hash, const Trajectory& traj);

}  // namespace dsmcsg::app
