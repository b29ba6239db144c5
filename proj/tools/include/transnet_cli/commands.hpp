#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "transnet/gradcheck.hpp"
#include "transnet/metrics.hpp"
#include "transnet_cli/run_config.hpp"

namespace transnet::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfigError = 1,
  kExitVerificationFailure = 2,
};

struct FoldOutcome {
  std::size_t fold = 0;  // 1-based
  std::size_t train_size = 0;
  std::size_t val_size = 0;
  History history;
  RocCurve roc;
  double accuracy = 0.0;
  ParameterStore store;  // final weights
};

/// Generated or manifest-backed data plus its fold plan over samples.
struct PreparedData {
  Dataset data;
  FoldPlan folds;
};

PreparedData prepare_data(const RunConfig& cfg);

/// Builds, initializes, trains and evaluates `preset` on every fold. Folds
/// run on up to cfg.jobs threads; results come back in fold order.
std::vector<FoldOutcome> cross_validate(const RunConfig& cfg, const std::string& preset,
                                        const PreparedData& prepared, std::ostream& log);

/// Per-fold history, ROC and checkpoint files plus summary.csv and
/// folds.csv under `dir`.
void write_fold_outputs(const std::filesystem::path& dir, const std::vector<FoldOutcome>& folds);

int cmd_train(const RunConfig& cfg, std::ostream& out);
int cmd_compare(const RunConfig& cfg, std::ostream& out);
int cmd_gradcheck(const GradcheckOptions& options, std::ostream& out, std::ostream& err);
int cmd_dump_arch(const std::string& preset, Shape4 input, std::size_t classes, std::ostream& out);
int cmd_synth(const SynthSpec& spec, std::uint64_t seed, const std::string& format,
              const std::filesystem::path& out_dir, std::ostream& out);

/// Parses `args` (without the program name) and dispatches. Maps errors to
/// exit codes: 1 for configuration and data problems, 2 for failed checks.
int run(std::vector<std::string> args, std::ostream& out, std::ostream& err);

}  // namespace transnet::cli
