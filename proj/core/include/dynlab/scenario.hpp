#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dynlab/boundary.hpp"
#include "dynlab/control.hpp"
#include "dynlab/cost.hpp"
#include "dynlab/diffusion.hpp"
#include "dynlab/grid.hpp"
#include "dynlab/obstacle.hpp"

namespace dynlab {

/// Flat-section key/value scenario description. All function entries are
/// expressions in x1..xn; the diffusion kind selects a catalog preset:
///   constant         - numeric mu/sigma entries, coefficients cached
///   sinusoidal-drift - mu_n = drift_amplitude * sin(x1), diagonal sigma
///   expression       - free-form entries
struct Scenario {
    std::string name;
    int dim = 1;
    std::uint64_t seed = 1;
    std::string output_dir;
    std::vector<double> x0;

    // [diffusion]
    std::string diffusion_kind = "constant";
    std::vector<std::string> mu_exprs;     // n entries
    std::vector<std::string> sigma_exprs;  // n*m entries, row-major
    int noise_dim = 1;
    double alpha = 1.0;
    double drift_amplitude = 0.0;  // sinusoidal-drift preset only

    // [cost]
    std::string source_expr = "0";
    std::string f1_expr = "1";
    std::string f2_expr = "1";

    // [grid]
    GridSpec grid;

    // [bands] outer comparison bands, expressions of the lateral variables
    std::string a_band_expr = "0";
    std::string b_band_expr = "0";

    // [solver]
    PsorParams solver;

    // [game]
    McParams mc_game;
    double alternative_shift = 0.25;

    // [control]
    long control_paths = 20000;
    double control_t_max = 10.0;

    void validate() const;
};

/// Built-in catalog ("s1", "s2") or throws ConfigError.
Scenario builtin_scenario(const std::string& name);
std::vector<std::string> builtin_scenario_names();

/// Structured-text round trip. parse(serialize(s)) reproduces s exactly;
/// serialization is canonical, so its hash identifies the scenario.
Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::string& name_or_path);
std::string serialize_scenario(const Scenario& scenario);
std::uint64_t scenario_hash(const Scenario& scenario);

/// Runtime objects assembled from the textual scenario.
struct ScenarioRuntime {
    DiffusionSpec spec;
    CostSpec cost;
    GridSpec grid;
    std::function<double(std::span<const double>)> a_band;
    std::function<double(std::span<const double>)> b_band;
};
ScenarioRuntime assemble(const Scenario& scenario);

enum class Stage { kSolve, kBoundary, kBuildW, kGame, kControl, kVerify,
                   kAppendix };
const char* stage_name(Stage stage);
Stage stage_from_name(const std::string& name);
std::vector<Stage> all_stages();

struct StageEntry {
    std::string name;
    std::string status;  // "ok" or "skipped"
};

struct ArtifactEntry {
    std::string file;
    std::string checksum;  // fnv1a64, hex
};

struct RunManifest {
    std::string scenario_hash_hex;
    std::string tool_version;
    std::vector<StageEntry> stages;
    std::vector<ArtifactEntry> artifacts;
};

/// Executes the requested stages in dependency order inside
/// scenario.output_dir (overridable), writes CSV/JSON artifacts plus
/// manifest.json, and returns the manifest. Missing upstream artifacts
/// raise ConfigError naming the stage that produces them.
RunManifest run_pipeline(const Scenario& scenario,
                         const std::set<Stage>& stages,
                         const std::filesystem::path& out_override = {});

/// Convenience: single-expression evaluation used by the CLI and tests.
double expression_eval(const std::string& expr, std::span<const double> point);

}  // namespace dynlab
