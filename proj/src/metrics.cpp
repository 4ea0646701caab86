#include "advdrive/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "advdrive/checkpoint.hpp"
#include "advdrive/errors.hpp"
#include "advdrive/random.hpp"

namespace advdrive {

using nlohmann::json;

EpisodeMetrics ComputeEpisodeMetrics(const EpisodeLog& log, const std::string& agent_id) {
  EpisodeMetrics m;
  std::int64_t cv = 0, co = 0, os = 0;
  for (const TickRecord& r : log.records) {
    if (r.agent_id != agent_id || r.tick == 0 || !r.active) continue;
    m.ticks += 1;
    cv += r.flags.cv;
    co += r.flags.co;
    os += r.flags.io || r.flags.iol;
    if (!m.ttfc && (r.flags.cv || r.flags.co)) m.ttfc = static_cast<double>(r.tick) * log.dt;
  }
  if (m.ticks > 0) {
    const double n = static_cast<double>(m.ticks);
    m.cv_rate = static_cast<double>(cv) / n;
    m.co_rate = static_cast<double>(co) / n;
    m.os_rate = static_cast<double>(os) / n;
  }
  return m;
}

namespace {

double SortedMean(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

json Optional(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> OptionalFrom(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

VictimSummary Summarize(const std::vector<EpisodeMetrics>& episodes) {
  std::vector<double> cv, co, os, ttfc;
  for (const auto& e : episodes) {
    cv.push_back(e.cv_rate);
    co.push_back(e.co_rate);
    os.push_back(e.os_rate);
    if (e.ttfc) ttfc.push_back(*e.ttfc);
  }
  VictimSummary s;
  s.cv_rate = SortedMean(cv);
  s.co_rate = SortedMean(co);
  s.os_rate = SortedMean(os);
  s.collided_episodes = static_cast<int>(ttfc.size());
  if (!ttfc.empty()) s.ttfc = SortedMean(ttfc);
  return s;
}

double MetricsReport::Composite() const {
  std::vector<double> v;
  for (const auto& [_, s] : summary) v.push_back(s.Composite());
  return SortedMean(v);
}

json MetricsReport::ToJson() const {
  json j;
  j["label"] = label;
  j["fingerprint"] = fingerprint;
  j["episodes"] = episodes;
  j["max_steps"] = max_steps;
  j["seed"] = seed;
  j["greedy"] = greedy;
  j["victims"] = victims;
  json summ = json::object();
  for (const auto& [id, s] : summary) {
    summ[id] = {{"cv_rate", s.cv_rate},
                {"co_rate", s.co_rate},
                {"os_rate", s.os_rate},
                {"ttfc", Optional(s.ttfc)},
                {"collided_episodes", s.collided_episodes}};
  }
  j["summary"] = summ;
  json per = json::object();
  for (const auto& [id, eps] : per_episode) {
    json arr = json::array();
    for (const auto& e : eps) {
      arr.push_back({{"cv_rate", e.cv_rate},
                     {"co_rate", e.co_rate},
                     {"os_rate", e.os_rate},
                     {"ttfc", Optional(e.ttfc)},
                     {"ticks", e.ticks}});
    }
    per[id] = arr;
  }
  j["per_episode"] = per;
  return j;
}

MetricsReport MetricsReport::FromJson(const json& j) {
  MetricsReport r;
  try {
    r.label = j.at("label").get<std::string>();
    r.fingerprint = j.at("fingerprint").get<std::string>();
    r.episodes = j.at("episodes").get<int>();
    r.max_steps = j.at("max_steps").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.greedy = j.at("greedy").get<bool>();
    r.victims = j.at("victims").get<std::vector<std::string>>();
    for (const auto& [id, s] : j.at("summary").items()) {
      VictimSummary v;
      v.cv_rate = s.at("cv_rate").get<double>();
      v.co_rate = s.at("co_rate").get<double>();
      v.os_rate = s.at("os_rate").get<double>();
      v.ttfc = OptionalFrom(s.at("ttfc"));
      v.collided_episodes = s.at("collided_episodes").get<int>();
      r.summary[id] = v;
    }
    for (const auto& [id, arr] : j.at("per_episode").items()) {
      auto& eps = r.per_episode[id];
      for (const auto& e : arr) {
        EpisodeMetrics m;
        m.cv_rate = e.at("cv_rate").get<double>();
        m.co_rate = e.at("co_rate").get<double>();
        m.os_rate = e.at("os_rate").get<double>();
        m.ttfc = OptionalFrom(e.at("ttfc"));
        m.ticks = e.at("ticks").get<std::int64_t>();
        eps.push_back(m);
      }
    }
  } catch (const json::exception& e) {
    throw Error("report_format", std::string("malformed metrics report: ") + e.what());
  }
  return r;
}

std::string MetricsReport::Serialize() const { return ToJson().dump(2) + "\n"; }

MetricsReport LoadReport(const std::string& path) {
  json j;
  try {
    j = json::parse(ReadFile(path));
  } catch (const json::parse_error& e) {
    throw Error("report_format", "cannot parse report '" + path + "': " + e.what());
  }
  return MetricsReport::FromJson(j);
}

void SaveReport(const std::string& path, const MetricsReport& report) {
  WriteFileAtomic(path, report.Serialize());
}

std::string ScenarioFingerprint(const ScenarioConfig& scenario, int episodes, int max_steps,
                                std::uint64_t seed) {
  json j;
  j["map"] = scenario.map_kind;
  j["lane_width"] = scenario.lane_width;
  j["dt"] = scenario.sim.dt;
  j["goal_tolerance"] = scenario.sim.goal_tolerance;
  j["spawn_jitter"] = scenario.sim.spawn_jitter;
  j["episodes"] = episodes;
  j["max_steps"] = max_steps;
  j["seed"] = seed;
  json victims = json::array();
  for (const auto& a : scenario.agents) {
    if (a.role != Role::kVictim) continue;
    victims.push_back({{"id", a.id},
                       {"spawn", {a.spawn.x, a.spawn.y}},
                       {"goal", {a.goal.x, a.goal.y}}});
  }
  j["victims"] = victims;
  return Sha256Hex(j.dump()).substr(0, 16);
}

EvaluationResult Evaluate(const std::map<std::string, AgentPolicy>& policies,
                          const ScenarioConfig& base, const EvaluationOptions& options) {
  if (options.episodes <= 0) throw ConfigError("evaluation.episodes must be positive");
  if (options.max_steps <= 0) throw ConfigError("evaluation.max_steps must be positive");
  const ScenarioConfig scenario = ScenarioFor(base, policies);
  std::vector<const AgentPolicy*> acting;
  for (const auto& a : scenario.agents) acting.push_back(&policies.at(a.id));
  const std::vector<std::string> victims = scenario.AgentIds(Role::kVictim);
  if (victims.empty()) throw ConfigError("evaluation needs at least one victim");

  EpisodeOptions ep_options;
  ep_options.raster = options.raster;
  ep_options.reward = options.reward;
  ep_options.greedy = options.greedy;

  const std::set<int> keep(options.keep_logs.begin(), options.keep_logs.end());
  std::vector<std::map<std::string, EpisodeMetrics>> metrics(options.episodes);
  std::vector<std::optional<EpisodeLog>> logs(options.episodes);
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (int e = next++; e < options.episodes; e = next++) {
      try {
        const std::uint64_t seed =
            DeriveSeed(options.seed, "evaluation", static_cast<std::uint64_t>(e));
        EpisodeResult r = RunEpisode(acting, scenario, options.max_steps, seed, ep_options);
        for (const auto& id : victims) metrics[e][id] = ComputeEpisodeMetrics(r.log, id);
        if (keep.count(e)) logs[e] = std::move(r.log);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = options.episodes;
      }
    }
  };
  const int n_threads = std::clamp(options.workers, 1, options.episodes);
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  EvaluationResult result;
  MetricsReport& report = result.report;
  report.label = options.label;
  report.fingerprint =
      ScenarioFingerprint(scenario, options.episodes, options.max_steps, options.seed);
  report.episodes = options.episodes;
  report.max_steps = options.max_steps;
  report.seed = options.seed;
  report.greedy = options.greedy;
  report.victims = victims;
  for (const auto& id : victims) {
    auto& eps = report.per_episode[id];
    for (int e = 0; e < options.episodes; ++e) eps.push_back(metrics[e].at(id));
    report.summary[id] = Summarize(eps);
  }
  for (int e = 0; e < options.episodes; ++e) {
    if (logs[e]) result.logs.emplace(e, std::move(*logs[e]));
  }
  return result;
}

namespace {

std::string Fixed(double v, bool sign = false) {
  std::ostringstream ss;
  if (sign) ss << std::showpos;
  ss << std::fixed << std::setprecision(4) << v;
  return ss.str();
}

std::optional<double> MetricValue(const VictimSummary& s, const std::string& metric) {
  if (metric == "cv_rate") return s.cv_rate;
  if (metric == "co_rate") return s.co_rate;
  if (metric == "os_rate") return s.os_rate;
  return s.ttfc;
}

const std::vector<std::string> kMetrics = {"cv_rate", "co_rate", "os_rate", "ttfc"};

}  // namespace

ComparisonTable Compare(const std::vector<MetricsReport>& reports,
                        const std::map<std::string, std::string>& references) {
  ComparisonTable table;
  if (reports.empty()) return table;
  std::map<std::string, const MetricsReport*> by_label;
  for (const auto& r : reports) {
    if (r.fingerprint != reports.front().fingerprint) {
      throw Error("fingerprint_mismatch", "report '" + r.label + "' (" + r.fingerprint +
                                              ") was produced under a different setting than '" +
                                              reports.front().label + "' (" +
                                              reports.front().fingerprint + ")");
    }
    if (by_label.count(r.label)) throw Error("duplicate_label", "duplicate label '" + r.label + "'");
    by_label[r.label] = &r;
    table.conditions.push_back(r.label);
  }
  table.victims = reports.front().victims;

  for (std::size_t i = 0; i < reports.size(); ++i) {
    const MetricsReport& r = reports[i];
    const MetricsReport* ref = nullptr;
    auto it = references.find(r.label);
    if (it != references.end()) {
      if (!by_label.count(it->second)) {
        throw Error("unknown_reference", "no report labeled '" + it->second + "'");
      }
      ref = by_label.at(it->second);
    } else if (i > 0) {
      ref = &reports[i - 1];
    }
    for (const auto& victim : table.victims) {
      for (const auto& metric : kMetrics) {
        ComparisonRow row;
        row.victim = victim;
        row.metric = metric;
        row.condition = r.label;
        row.value = MetricValue(r.summary.at(victim), metric);
        if (ref) {
          row.reference = ref->label;
          const auto base = MetricValue(ref->summary.at(victim), metric);
          // Rates: higher is worse. TTFC: an earlier first collision is worse,
          // and a collision appearing where there was none is a degradation.
          if (row.value && base) {
            row.delta = *row.value - *base;
            const double worse = metric == "ttfc" ? -*row.delta : *row.delta;
            row.verdict = worse > 0 ? "degradation" : worse < 0 ? "improvement" : "unchanged";
          } else if (row.value && !base) {
            row.verdict = "degradation";
          } else if (!row.value && base) {
            row.verdict = "improvement";
          } else {
            row.verdict = "unchanged";
          }
        }
        table.rows.push_back(row);
      }
    }
  }
  return table;
}

json ComparisonTable::ToJson() const {
  json rows_json = json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"victim", r.victim},
                         {"metric", r.metric},
                         {"condition", r.condition},
                         {"value", Optional(r.value)},
                         {"delta", Optional(r.delta)},
                         {"reference", r.reference},
                         {"verdict", r.verdict}});
  }
  return {{"conditions", conditions}, {"victims", victims}, {"rows", rows_json}};
}

std::string ComparisonTable::ToText() const {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header = {"victim", "metric"};
  for (const auto& c : conditions) header.push_back(c);
  cells.push_back(header);
  for (const auto& victim : victims) {
    for (const auto& metric : kMetrics) {
      std::vector<std::string> line = {victim, metric};
      for (const auto& c : conditions) {
        std::string cell = "-";
        for (const auto& r : rows) {
          if (r.victim != victim || r.metric != metric || r.condition != c) continue;
          if (r.value) cell = Fixed(*r.value);
          if (r.delta) cell += " (" + Fixed(*r.delta, true) + ")";
          if (!r.verdict.empty() && r.verdict != "unchanged") cell += " " + r.verdict;
        }
        line.push_back(cell);
      }
      cells.push_back(line);
    }
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  }
  std::ostringstream out;
  for (std::size_t l = 0; l < cells.size(); ++l) {
    for (std::size_t i = 0; i < cells[l].size(); ++i) {
      if (i + 1 < cells[l].size()) {
        out << std::left << std::setw(static_cast<int>(width[i])) << cells[l][i] << "  ";
      } else {
        out << cells[l][i] << "\n";
      }
    }
    if (l == 0) {
      std::size_t total = 0;
      for (std::size_t w : width) total += w + 2;
      out << std::string(total - 2, '-') << "\n";
    }
  }
  out << "deltas are relative to the previous condition unless a reference is given\n";
  return out.str();
}

namespace {

const char* kAgentColors[] = {"#1f77b4", "#2ca02c", "#d62728", "#9467bd", "#ff7f0e", "#8c564b"};

}  // namespace

std::string TrajectorySvg(const EpisodeLog& log, const MapGeometry& map) {
  double min_x = 1e300, min_y = 1e300, max_x = -1e300, max_y = -1e300;
  auto extend = [&](Vec2 p) {
    min_x = std::min(min_x, p.x);
    min_y = std::min(min_y, p.y);
    max_x = std::max(max_x, p.x);
    max_y = std::max(max_y, p.y);
  };
  for (const auto& poly : map.drivable) {
    for (const auto& p : poly.vertices) extend(p);
  }
  for (const auto& r : log.records) extend(r.position);
  const double margin = 5.0, scale = 8.0;
  min_x -= margin;
  min_y -= margin;
  max_x += margin;
  max_y += margin;
  const double w = (max_x - min_x) * scale, h = (max_y - min_y) * scale;
  // Map y points north; SVG y points down.
  auto px = [&](Vec2 p) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f,%.2f", (p.x - min_x) * scale, (max_y - p.y) * scale);
    return std::string(buf);
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << Fixed(w) << "\" height=\""
      << Fixed(h) << "\" viewBox=\"0 0 " << Fixed(w) << " " << Fixed(h) << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"#3a3a3a\"/>\n";
  for (const auto& poly : map.drivable) {
    svg << "<polygon fill=\"#8c8c8c\" points=\"";
    for (const auto& p : poly.vertices) svg << px(p) << " ";
    svg << "\"/>\n";
  }
  if (map.intersection_region.vertices.size() >= 3) {
    svg << "<polygon fill=\"none\" stroke=\"#d0d0d0\" stroke-dasharray=\"4,4\" points=\"";
    for (const auto& p : map.intersection_region.vertices) svg << px(p) << " ";
    svg << "\"/>\n";
  }
  for (const auto& m : map.markings) {
    svg << "<polyline fill=\"none\" stroke=\"white\" stroke-width=\"1\" points=\"";
    for (const auto& p : m.points()) svg << px(p) << " ";
    svg << "\"/>\n";
  }

  for (std::size_t a = 0; a < log.agent_ids.size(); ++a) {
    const std::string& id = log.agent_ids[a];
    const char* color = kAgentColors[a % std::size(kAgentColors)];
    svg << "<polyline id=\"path-" << id << "\" fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"2\" points=\"";
    const TickRecord* first = nullptr;
    for (const auto& r : log.records) {
      if (r.agent_id != id) continue;
      if (!first) first = &r;
      svg << px(r.position) << " ";
    }
    svg << "\"/>\n";
    if (first) {
      const std::string xy = px(first->position);
      const auto comma = xy.find(',');
      svg << "<circle class=\"start\" cx=\"" << xy.substr(0, comma) << "\" cy=\""
          << xy.substr(comma + 1) << "\" r=\"4\" fill=\"" << color << "\"/>\n";
      svg << "<text x=\"" << xy.substr(0, comma) << "\" y=\"" << xy.substr(comma + 1)
          << "\" dx=\"6\" dy=\"-6\" fill=\"white\" font-size=\"12\">" << id << "</text>\n";
    }
  }

  // Collisions get a cross at every flagged tick; lane departures only where a
  // run of flagged ticks begins.
  std::map<std::pair<std::string, std::string>, std::int64_t> last_tick;
  for (const auto& e : log.events) {
    const std::string xy = px(e.position);
    const auto comma = xy.find(',');
    const std::string cx = xy.substr(0, comma), cy = xy.substr(comma + 1);
    if (e.kind == "cv" || e.kind == "co") {
      const char* color = e.kind == "cv" ? "#ff2020" : "#ffd000";
      svg << "<g class=\"marker-" << e.kind << "\" data-agent=\"" << e.agent_id << "\" data-tick=\""
          << e.tick << "\" transform=\"translate(" << cx << "," << cy << ")\">"
          << "<path d=\"M-6,-6 L6,6 M-6,6 L6,-6\" stroke=\"" << color
          << "\" stroke-width=\"3\"/></g>\n";
    } else if (e.kind == "io" || e.kind == "iol") {
      auto key = std::make_pair(e.agent_id, e.kind);
      auto it = last_tick.find(key);
      const bool onset = it == last_tick.end() || it->second != e.tick - 1;
      last_tick[key] = e.tick;
      if (onset) {
        svg << "<circle class=\"marker-" << e.kind << "\" data-agent=\"" << e.agent_id
            << "\" data-tick=\"" << e.tick << "\" cx=\"" << cx << "\" cy=\"" << cy
            << "\" r=\"3\" fill=\"none\" stroke=\"#ff8c00\" stroke-width=\"1.5\"/>\n";
      }
    } else if (e.kind == "goal") {
      svg << "<circle class=\"marker-goal\" data-agent=\"" << e.agent_id << "\" cx=\"" << cx
          << "\" cy=\"" << cy << "\" r=\"5\" fill=\"none\" stroke=\"#28dc28\" stroke-width=\"2\"/>\n";
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string TrajectoryCsv(const EpisodeLog& log) {
  std::ostringstream csv;
  csv << "tick,agent,x,y,heading,speed,active,cv,co,io,iol\n";
  csv << std::setprecision(10);
  for (const auto& r : log.records) {
    csv << r.tick << ',' << r.agent_id << ',' << r.position.x << ',' << r.position.y << ','
        << r.heading << ',' << r.speed << ',' << r.active << ',' << r.flags.cv << ','
        << r.flags.co << ',' << r.flags.io << ',' << r.flags.iol << '\n';
  }
  return csv.str();
}

void EmitTrajectoryPlot(const EpisodeLog& log, const MapGeometry& map, const std::string& stem) {
  WriteFileAtomic(stem + ".svg", TrajectorySvg(log, map));
  WriteFileAtomic(stem + ".csv", TrajectoryCsv(log));
}

}  // namespace advdrive
