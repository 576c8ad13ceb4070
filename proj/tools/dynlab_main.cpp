// Command-line front end: solve the two-obstacle problem, extract free
// boundaries, build the control value, run the Monte Carlo game and
// reflected-control studies, and emit CSV/JSON artifacts.

#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <set>
#include <string>

#include "dynlab/errors.hpp"
#include "dynlab/scenario.hpp"

namespace {

// exit codes: 0 ok, 2 config error, 3 numeric/convergence error,
// 4 verification-check failure
constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitCheckFailed = 4;

struct Options {
    std::string scenario;
    std::string out;
    std::string stages;
};

int run_stages(const Options& opt, const std::set<dynlab::Stage>& stages) {
    dynlab::Scenario scenario = dynlab::load_scenario(opt.scenario);
    dynlab::RunManifest manifest =
        dynlab::run_pipeline(scenario, stages, opt.out);
    for (const auto& stage : manifest.stages) {
        std::printf("%-10s %s\n", stage.name.c_str(), stage.status.c_str());
    }
    std::printf("scenario hash %s\n", manifest.scenario_hash_hex.c_str());
    return kExitOk;
}

std::set<dynlab::Stage> parse_stage_list(const std::string& list) {
    std::set<dynlab::Stage> stages;
    std::string cur;
    for (char c : list + ",") {
        if (c == ',') {
            if (!cur.empty()) stages.insert(dynlab::stage_from_name(cur));
            cur.clear();
        } else if (!std::isspace(static_cast<unsigned char>(c))) {
            cur += c;
        }
    }
    if (stages.empty()) {
        throw dynlab::ConfigError("--stages: empty stage list");
    }
    return stages;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dynlab: two-obstacle games and reflected singular control"};
    app.require_subcommand(1);

    Options opt;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--scenario", opt.scenario,
                        "built-in scenario name (s1, s2) or config file path")
            ->required();
        sub->add_option("--out", opt.out,
                        "output directory (overrides the scenario setting)");
        return sub;
    };

    struct SubcommandSpec {
        const char* name;
        const char* help;
        std::set<dynlab::Stage> stages;
    };
    const std::vector<SubcommandSpec> subs = {
        {"solve-vi", "solve the two-obstacle problem",
         {dynlab::Stage::kSolve}},
        {"boundary", "extract free boundaries and run diagnostics",
         {dynlab::Stage::kBoundary}},
        {"build-w", "integrate the game value into the control value",
         {dynlab::Stage::kBuildW}},
        {"game", "Monte Carlo saddle-point study",
         {dynlab::Stage::kGame}},
        {"control", "reflected-policy cost at the extracted band",
         {dynlab::Stage::kControl}},
        {"verify", "policy table: optimal vs perturbed bands",
         {dynlab::Stage::kVerify}},
        {"appendix", "scalar-model densities and pairing studies",
         {dynlab::Stage::kAppendix}},
    };

    std::map<const CLI::App*, std::set<dynlab::Stage>> dispatch;
    for (const auto& spec : subs) {
        CLI::App* sub = add_common(app.add_subcommand(spec.name, spec.help));
        dispatch[sub] = spec.stages;
    }

    CLI::App* run = add_common(
        app.add_subcommand("run", "run the full pipeline (or --stages)"));
    run->add_option("--stages", opt.stages,
                    "comma-separated stage subset (default: all)");

    CLI11_PARSE(app, argc, argv);

    try {
        for (const auto& [sub, stages] : dispatch) {
            if (sub->parsed()) return run_stages(opt, stages);
        }
        if (run->parsed()) {
            std::set<dynlab::Stage> stages;
            if (opt.stages.empty()) {
                for (auto st : dynlab::all_stages()) stages.insert(st);
            } else {
                stages = parse_stage_list(opt.stages);
            }
            return run_stages(opt, stages);
        }
    } catch (const dynlab::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const dynlab::NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        // a failed verification table is a check failure, not a solver fault
        if (std::string(e.what()).find("verification failed") == 0) {
            return kExitCheckFailed;
        }
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNumeric;
    }
    return kExitOk;
}
