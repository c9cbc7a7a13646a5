#pragma once

#include <map>
#include <optional>
#include <string>

#include "json.hpp"

#include "ptmpo/models.hpp"
#include "ptmpo/propagate.hpp"

namespace ptmpo {

// Flat `key = value` configuration with a [scenario] section marker and
// `#` comments; unknown keys are rejected, not ignored.
struct ScenarioConfig {
  std::string kind;
  std::map<std::string, std::string> values;

  static ScenarioConfig parse_file(const std::string& path);
  static ScenarioConfig parse_text(const std::string& text);

  // Typed access; consumed keys are tracked so leftovers can be rejected.
  std::string get_string(const std::string& key, const std::string& def);
  double get_double(const std::string& key, std::optional<double> def = {});
  int get_int(const std::string& key, std::optional<int> def = {});
  std::vector<double> get_double_list(const std::string& key);
  void reject_unknown() const;

 private:
  std::map<std::string, bool> consumed_;
};

struct RunOptions {
  std::string out_path;      // overrides config `out`
  std::string save_pt_path;  // serialize built PT-MPO(s)
  std::string load_pt_path;  // reuse previously built PT-MPO(s)
};

struct RunResult {
  TimeSeries series;
  nlohmann::json report;
  int exit_code = 0;  // 0 ok, 2 validation failure, 3 numerical abort
};

// Builds the scenario, propagates, and fills the verification report.
// Does not write files; see run() for the CLI entry point.
RunResult run_scenario(ScenarioConfig config, const RunOptions& opts = {});

// Full CLI semantics: run_scenario plus CSV/report output. Returns the
// process exit code; failures are reported on the returned json.
int run(const std::string& config_path, const RunOptions& opts,
        std::ostream& diagnostics);

void emit_csv(const TimeSeries& series, std::ostream& os);
void emit_csv(const TimeSeries& series, const std::string& path);

}  // namespace ptmpo
