#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "sepbn/config.hpp"
#include "sepbn/data.hpp"
#include "sepbn/eval.hpp"

namespace sepbn {

// Process exit codes.
constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitCheckpoint = 4;

// Train and test splits for the config, subsets applied. The dataset root is
// data.root, else $SEPBN_DATA_ROOT.
std::pair<Dataset, Dataset> load_data(const DataConfig& data);

// Whether the branch's running statistics have been updated everywhere.
bool branch_initialized(const Network& net, BranchId branch);

// Each command writes resolved_config.json into `out` plus its artifacts.
void cmd_train(const ExperimentConfig& config, const std::filesystem::path& out);
void cmd_eval(const ExperimentConfig& config, const std::filesystem::path& checkpoint,
              const std::filesystem::path& out);
void cmd_fourier(const ExperimentConfig& config, const std::filesystem::path& checkpoint,
                 const std::filesystem::path& out);
void cmd_lowpass(const ExperimentConfig& config, const std::filesystem::path& checkpoint,
                 const std::filesystem::path& out);
void cmd_affinity(const ExperimentConfig& config, const std::filesystem::path& checkpoint,
                  const std::filesystem::path& out);
// Corrupted copies of the test split in CIFAR-10 binary layout, one file per
// (corruption, severity), plus a manifest.
void cmd_corrupt(const ExperimentConfig& config, const std::filesystem::path& out);

// Full command line: parses flags, runs the subcommand and maps errors to
// exit codes. Diagnostics go to stderr.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace sepbn
