#pragma once

// Command-line front end: train-baseline, train-adversary, retrain, evaluate,
// compare, plot and demo.

#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "advdrive/config.hpp"
#include "advdrive/metrics.hpp"

namespace advdrive {

// Exit codes: 0 success, 1 runtime failure, 2 usage error. Failures print a
// single "error: <kind>: <message>" line to `err`.
int Dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Victim checkpoints (<agent>.ckpt with a victim role) found directly in `dir`.
std::map<std::string, std::string> FindVictimCheckpoints(const std::string& dir);

struct PipelineResult {
  std::map<std::string, std::string> baseline;
  std::map<std::string, std::string> adversaries;  // reward kind -> checkpoint
  std::map<std::string, std::map<std::string, std::string>> retrained;  // reward kind -> victims
  std::vector<MetricsReport> reports;  // baseline, attack_*, retrained_*
  ComparisonTable table;
};

// Whole pipeline: baseline victims, one adversary per adversarial reward,
// victim retraining against each, evaluation of the five conditions, the
// comparison table and one trajectory plot per condition, all under `out`.
PipelineResult RunPipeline(const RunConfig& config, const std::string& out,
                           std::ostream* progress);

}  // namespace advdrive
