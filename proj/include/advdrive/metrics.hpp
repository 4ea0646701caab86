#pragma once

// Evaluation metrics per victim (vehicle-collision, offroad-collision and
// offroad-steering rates, time to first collision), condition comparison
// tables and trajectory plots.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "advdrive/orchestrator.hpp"

namespace advdrive {

struct EpisodeMetrics {
  double cv_rate = 0.0;
  double co_rate = 0.0;
  double os_rate = 0.0;  // ticks with IO or IOL set
  std::optional<double> ttfc;  // seconds; absent without a collision
  std::int64_t ticks = 0;      // ticks the agent was simulated for

  double Composite() const { return cv_rate + co_rate + os_rate; }
};

// Rates over the ticks the agent acted on; ttfc from the first CV or CO tick.
EpisodeMetrics ComputeEpisodeMetrics(const EpisodeLog& log, const std::string& agent_id);

struct VictimSummary {
  double cv_rate = 0.0;
  double co_rate = 0.0;
  double os_rate = 0.0;
  std::optional<double> ttfc;  // mean over episodes that collided
  int collided_episodes = 0;

  double Composite() const { return cv_rate + co_rate + os_rate; }
};

// Order-independent aggregation (sums run over sorted values).
VictimSummary Summarize(const std::vector<EpisodeMetrics>& episodes);

struct MetricsReport {
  std::string label;
  std::string fingerprint;
  int episodes = 0;
  int max_steps = 0;
  std::uint64_t seed = 0;
  bool greedy = false;
  std::vector<std::string> victims;
  std::map<std::string, VictimSummary> summary;
  std::map<std::string, std::vector<EpisodeMetrics>> per_episode;

  // Mean composite over victims.
  double Composite() const;

  nlohmann::json ToJson() const;
  static MetricsReport FromJson(const nlohmann::json& j);
  // Stable serialization: identical reports give identical bytes.
  std::string Serialize() const;
};

MetricsReport LoadReport(const std::string& path);
void SaveReport(const std::string& path, const MetricsReport& report);

// Identifies the evaluation setting independent of the policies: map, victim
// spawns and goals, dt, episode count, step cap and seed.
std::string ScenarioFingerprint(const ScenarioConfig& scenario, int episodes, int max_steps,
                                std::uint64_t seed);

struct EvaluationOptions {
  int episodes = 50;
  int max_steps = 2000;
  std::uint64_t seed = 0;
  bool greedy = false;
  int workers = 1;
  std::string label;
  RasterConfig raster;
  RewardParams reward;
  // Episode indices whose full logs are kept for plotting.
  std::vector<int> keep_logs;
};

struct EvaluationResult {
  MetricsReport report;
  std::map<int, EpisodeLog> logs;
};

// Runs the frozen policies; episodes are split across `workers` threads and
// the report does not depend on the worker count.
EvaluationResult Evaluate(const std::map<std::string, AgentPolicy>& policies,
                          const ScenarioConfig& scenario, const EvaluationOptions& options);

struct ComparisonRow {
  std::string victim;
  std::string metric;  // cv_rate, co_rate, os_rate, ttfc
  std::string condition;
  std::optional<double> value;
  std::optional<double> delta;  // versus the reference condition
  std::string verdict;          // "degradation", "improvement", "unchanged" or ""
  std::string reference;
};

struct ComparisonTable {
  std::vector<std::string> conditions;
  std::vector<std::string> victims;
  std::vector<ComparisonRow> rows;

  nlohmann::json ToJson() const;
  std::string ToText() const;
};

// Each report is compared with `references[label]` when given, otherwise
// with the report before it. Throws Error("fingerprint_mismatch") if the
// reports were produced under different settings.
ComparisonTable Compare(const std::vector<MetricsReport>& reports,
                        const std::map<std::string, std::string>& references = {});

// Aerial SVG of the map with every agent's path and flag events marked, plus
// a CSV with one row per tick per agent.
std::string TrajectorySvg(const EpisodeLog& log, const MapGeometry& map);
std::string TrajectoryCsv(const EpisodeLog& log);
void EmitTrajectoryPlot(const EpisodeLog& log, const MapGeometry& map, const std::string& stem);

}  // namespace advdrive
