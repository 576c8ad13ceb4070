#include "dynlab/scenario.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "dynlab/errors.hpp"
#include "dynlab/expression.hpp"
#include "dynlab/io.hpp"
#include "dynlab/one_dim.hpp"
#include "dynlab/rng.hpp"

namespace dynlab {

namespace {

constexpr const char* kToolVersion = "dynlab 0.1.0";

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// flat-section key/value text
// ---------------------------------------------------------------------------

using SectionMap = std::map<std::string, std::map<std::string, std::string>>;

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

SectionMap parse_sections(const std::string& text) {
    SectionMap sections;
    std::istringstream stream(text);
    std::string line;
    std::string current;
    int lineno = 0;
    while (std::getline(stream, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[') {
            if (t.back() != ']') {
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": unterminated section header");
            }
            current = trim(t.substr(1, t.size() - 2));
            sections[current];
            continue;
        }
        std::size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": expected key = value");
        }
        if (current.empty()) {
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": key outside a section");
        }
        sections[current][trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }
    return sections;
}

class SectionReader {
public:
    SectionReader(const SectionMap& map, std::string section)
        : map_(map), section_(std::move(section)) {}

    std::optional<std::string> get(const std::string& key) const {
        auto sit = map_.find(section_);
        if (sit == map_.end()) return std::nullopt;
        auto kit = sit->second.find(key);
        if (kit == sit->second.end()) return std::nullopt;
        return kit->second;
    }

    std::string require(const std::string& key) const {
        auto v = get(key);
        if (!v) {
            throw ConfigError("config: missing [" + section_ + "]." + key);
        }
        return *v;
    }

    std::string str(const std::string& key, const std::string& dflt) const {
        return get(key).value_or(dflt);
    }

    double number(const std::string& key, double dflt) const {
        auto v = get(key);
        return v ? parse_number(key, *v) : dflt;
    }

    double require_number(const std::string& key) const {
        return parse_number(key, require(key));
    }

    long integer(const std::string& key, long dflt) const {
        auto v = get(key);
        if (!v) return dflt;
        return parse_integer(key, *v);
    }

    std::vector<double> number_list(const std::string& key) const {
        std::vector<double> out;
        for (const auto& item : split(require(key), ',')) {
            out.push_back(parse_number(key, item));
        }
        return out;
    }

    std::vector<std::string> string_list(const std::string& key, char sep) const {
        auto v = get(key);
        if (!v || trim(*v).empty()) return {};
        return split(*v, sep);
    }

    static std::vector<std::string> split(const std::string& s, char sep) {
        std::vector<std::string> out;
        std::string cur;
        std::istringstream stream(s);
        while (std::getline(stream, cur, sep)) out.push_back(trim(cur));
        return out;
    }

private:
    double parse_number(const std::string& key, const std::string& v) const {
        try {
            std::size_t used = 0;
            double x = std::stod(v, &used);
            if (trim(v.substr(used)).empty()) return x;
        } catch (const std::exception&) {
        }
        throw ConfigError("config: bad number at [" + section_ + "]." + key);
    }

    long parse_integer(const std::string& key, const std::string& v) const {
        try {
            std::size_t used = 0;
            long x = std::stol(v, &used);
            if (trim(v.substr(used)).empty()) return x;
        } catch (const std::exception&) {
        }
        throw ConfigError("config: bad integer at [" + section_ + "]." + key);
    }

    const SectionMap& map_;
    std::string section_;
};

std::string join(const std::vector<std::string>& items, const char* sep) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += sep;
        out += items[i];
    }
    return out;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// scenario parse / serialize / catalog
// ---------------------------------------------------------------------------

void Scenario::validate() const {
    if (dim < 1) throw ConfigError("scenario: dim must be >= 1");
    if (name.empty()) throw ConfigError("scenario: name must not be empty");
    if (diffusion_kind != "constant" && diffusion_kind != "sinusoidal-drift" &&
        diffusion_kind != "expression") {
        throw ConfigError("scenario: unknown diffusion kind '" +
                          diffusion_kind + "'");
    }
    if (static_cast<int>(mu_exprs.size()) != dim) {
        throw ConfigError("scenario: [diffusion].mu needs dim entries");
    }
    if (noise_dim < dim) {
        throw ConfigError("scenario: noise_dim must be >= dim");
    }
    if (static_cast<int>(sigma_exprs.size()) != dim * noise_dim) {
        throw ConfigError("scenario: [diffusion].sigma needs dim*noise_dim entries");
    }
    if (!(alpha > 0.0) || !std::isfinite(alpha)) {
        throw ConfigError("scenario: alpha must be finite and > 0");
    }
    if (static_cast<int>(x0.size()) != dim) {
        throw ConfigError("scenario: x0 needs dim entries");
    }
    for (double c : x0) {
        if (!std::isfinite(c)) throw ConfigError("scenario: non-finite x0");
    }
    grid.validate();
    if (grid.dim() != dim) {
        throw ConfigError("scenario: grid dimension does not match dim");
    }
    if (!(solver.omega > 0.0 && solver.omega < 2.0)) {
        throw ConfigError("scenario: [solver].omega must lie in (0, 2)");
    }
    mc_game.validate();
    if (control_paths <= 0 || !(control_t_max > 0.0)) {
        throw ConfigError("scenario: bad [control] parameters");
    }
    if (!(alternative_shift > 0.0)) {
        throw ConfigError("scenario: alternative_shift must be > 0");
    }
}

Scenario parse_scenario(const std::string& text) {
    SectionMap map = parse_sections(text);
    Scenario s;

    SectionReader sc(map, "scenario");
    s.name = sc.require("name");
    s.dim = static_cast<int>(sc.integer("dim", 1));
    s.seed = static_cast<std::uint64_t>(sc.integer("seed", 1));
    s.output_dir = sc.str("output_dir", "out/" + s.name);
    s.x0 = sc.number_list("x0");

    SectionReader di(map, "diffusion");
    s.diffusion_kind = di.str("kind", "constant");
    s.mu_exprs = di.string_list("mu", ';');
    s.sigma_exprs = di.string_list("sigma", ';');
    s.noise_dim = static_cast<int>(di.integer("noise_dim", s.dim));
    s.alpha = di.require_number("alpha");
    s.drift_amplitude = di.number("drift_amplitude", 0.0);
    if (s.diffusion_kind == "sinusoidal-drift" && s.mu_exprs.empty()) {
        s.mu_exprs.assign(s.dim, "0");
        s.mu_exprs[s.dim - 1] =
            format_double(s.drift_amplitude) + "*sin(x1)";
    }

    SectionReader co(map, "cost");
    s.source_expr = co.require("H");
    s.f1_expr = co.require("f1");
    s.f2_expr = co.require("f2");

    SectionReader gr(map, "grid");
    s.grid.lower = gr.number_list("lower");
    s.grid.upper = gr.number_list("upper");
    for (const auto& c : SectionReader::split(gr.require("counts"), ',')) {
        try {
            s.grid.counts.push_back(static_cast<int>(std::stol(c)));
        } catch (const std::exception&) {
            throw ConfigError("config: bad integer at [grid].counts");
        }
    }
    s.grid.lateral_bc.clear();
    for (const auto& bc : gr.string_list("lateral_bc", ',')) {
        if (bc == "neumann") s.grid.lateral_bc.push_back(LateralBc::kNeumann);
        else if (bc == "periodic") s.grid.lateral_bc.push_back(LateralBc::kPeriodic);
        else throw ConfigError("config: bad [grid].lateral_bc entry '" + bc + "'");
    }
    if (s.grid.lateral_bc.empty() && s.dim > 1) {
        s.grid.lateral_bc.assign(s.dim - 1, LateralBc::kNeumann);
    }

    SectionReader ba(map, "bands");
    s.a_band_expr = ba.require("A");
    s.b_band_expr = ba.require("B");

    SectionReader so(map, "solver");
    s.solver.omega = so.number("omega", 1.5);
    s.solver.tol = so.number("tol", 1e-8);
    s.solver.max_iter = so.integer("max_iter", 100000);
    s.solver.tol_label = so.number("tol_label", 1e-6);

    SectionReader ga(map, "game");
    s.mc_game.paths = ga.integer("paths", 100000);
    s.mc_game.dt = ga.number("dt", 1e-3);
    s.mc_game.t_max = ga.number("t_max", 20.0);
    s.mc_game.seed = s.seed;
    s.alternative_shift = ga.number("alternative_shift", 0.25);

    SectionReader ct(map, "control");
    s.control_paths = ct.integer("paths", 20000);
    s.control_t_max = ct.number("t_max", 10.0);

    s.validate();
    return s;
}

std::string serialize_scenario(const Scenario& s) {
    std::string out;
    auto line = [&](const std::string& k, const std::string& v) {
        out += k;
        out += " = ";
        out += v;
        out += '\n';
    };
    auto numbers = [&](std::span<const double> v) {
        std::vector<std::string> parts;
        for (double x : v) parts.push_back(format_double(x));
        return join(parts, ",");
    };

    out += "[scenario]\n";
    line("name", s.name);
    line("dim", std::to_string(s.dim));
    line("seed", std::to_string(s.seed));
    line("output_dir", s.output_dir);
    line("x0", numbers(s.x0));

    out += "\n[diffusion]\n";
    line("kind", s.diffusion_kind);
    line("mu", join(s.mu_exprs, "; "));
    line("sigma", join(s.sigma_exprs, "; "));
    line("noise_dim", std::to_string(s.noise_dim));
    line("alpha", format_double(s.alpha));
    line("drift_amplitude", format_double(s.drift_amplitude));

    out += "\n[cost]\n";
    line("H", s.source_expr);
    line("f1", s.f1_expr);
    line("f2", s.f2_expr);

    out += "\n[grid]\n";
    line("lower", numbers(s.grid.lower));
    line("upper", numbers(s.grid.upper));
    {
        std::vector<std::string> parts;
        for (int c : s.grid.counts) parts.push_back(std::to_string(c));
        line("counts", join(parts, ","));
    }
    {
        std::vector<std::string> parts;
        for (LateralBc bc : s.grid.lateral_bc) {
            parts.push_back(bc == LateralBc::kNeumann ? "neumann" : "periodic");
        }
        line("lateral_bc", join(parts, ","));
    }

    out += "\n[bands]\n";
    line("A", s.a_band_expr);
    line("B", s.b_band_expr);

    out += "\n[solver]\n";
    line("omega", format_double(s.solver.omega));
    line("tol", format_double(s.solver.tol));
    line("max_iter", std::to_string(s.solver.max_iter));
    line("tol_label", format_double(s.solver.tol_label));

    out += "\n[game]\n";
    line("paths", std::to_string(s.mc_game.paths));
    line("dt", format_double(s.mc_game.dt));
    line("t_max", format_double(s.mc_game.t_max));
    line("alternative_shift", format_double(s.alternative_shift));

    out += "\n[control]\n";
    line("paths", std::to_string(s.control_paths));
    line("t_max", format_double(s.control_t_max));
    return out;
}

std::uint64_t scenario_hash(const Scenario& scenario) {
    return fnv1a64(serialize_scenario(scenario));
}

Scenario builtin_scenario(const std::string& name) {
    Scenario s;
    if (name == "s1") {
        s.name = "s1";
        s.dim = 1;
        s.seed = 42;
        s.output_dir = "out/s1";
        s.x0 = {0.0};
        s.diffusion_kind = "constant";
        s.mu_exprs = {"0"};
        s.sigma_exprs = {"1"};
        s.noise_dim = 1;
        s.alpha = 1.0;
        s.source_expr = "x1";
        s.f1_expr = "1";
        s.f2_expr = "1";
        s.grid.lower = {-4.0};
        s.grid.upper = {4.0};
        s.grid.counts = {801};
        s.a_band_expr = "-2.6";
        s.b_band_expr = "2.6";
        s.mc_game.paths = 100000;
        s.mc_game.dt = 1e-3;
        s.mc_game.t_max = 20.0;
        s.mc_game.seed = s.seed;
        s.control_paths = 20000;
        s.control_t_max = 10.0;
    } else if (name == "s2") {
        s.name = "s2";
        s.dim = 2;
        s.seed = 43;
        s.output_dir = "out/s2";
        s.x0 = {0.0, 0.0};
        s.diffusion_kind = "constant";
        s.mu_exprs = {"0", "0"};
        s.sigma_exprs = {"1", "0", "0", "1"};
        s.noise_dim = 2;
        s.alpha = 1.0;
        s.source_expr = "x2 + 0.5*sin(x1)";
        s.f1_expr = "1";
        s.f2_expr = "1";
        s.grid.lower = {-3.14159265358979323846, -4.0};
        s.grid.upper = {3.14159265358979323846, 4.0};
        s.grid.counts = {129, 257};
        s.grid.lateral_bc = {LateralBc::kPeriodic};
        s.a_band_expr = "-2.8";
        s.b_band_expr = "2.8";
        s.mc_game.paths = 40000;
        s.mc_game.dt = 1e-3;
        s.mc_game.t_max = 20.0;
        s.mc_game.seed = s.seed;
        s.control_paths = 10000;
        s.control_t_max = 10.0;
    } else {
        throw ConfigError("unknown built-in scenario '" + name + "'");
    }
    s.validate();
    return s;
}

std::vector<std::string> builtin_scenario_names() { return {"s1", "s2"}; }

Scenario load_scenario(const std::string& name_or_path) {
    for (const auto& name : builtin_scenario_names()) {
        if (name == name_or_path) return builtin_scenario(name);
    }
    if (!std::filesystem::exists(name_or_path)) {
        throw ConfigError("scenario '" + name_or_path +
                          "' is neither built-in nor a readable file");
    }
    return parse_scenario(read_text_file(name_or_path));
}

// ---------------------------------------------------------------------------
// runtime assembly
// ---------------------------------------------------------------------------

namespace {

std::vector<Expression> compile_all(const std::vector<std::string>& exprs,
                                    const char* what, int max_dim) {
    std::vector<Expression> out;
    out.reserve(exprs.size());
    for (const auto& text : exprs) {
        Expression e = Expression::parse(text);
        if (e.max_variable() > max_dim) {
            throw ConfigError(std::string("config: ") + what +
                              " references x" + std::to_string(e.max_variable()) +
                              " beyond the problem dimension");
        }
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace

ScenarioRuntime assemble(const Scenario& s) {
    s.validate();
    ScenarioRuntime rt;
    rt.grid = s.grid;

    auto mu = compile_all(s.mu_exprs, "[diffusion].mu", s.dim);
    auto sg = compile_all(s.sigma_exprs, "[diffusion].sigma", s.dim);

    bool constant = true;
    for (const auto& e : mu) constant = constant && e.max_variable() == 0;
    for (const auto& e : sg) constant = constant && e.max_variable() == 0;
    if (s.diffusion_kind == "constant" && !constant) {
        throw ConfigError(
            "config: diffusion kind 'constant' requires constant mu/sigma");
    }

    rt.spec.dim = s.dim;
    rt.spec.noise_dim = s.noise_dim;
    rt.spec.alpha = s.alpha;
    rt.spec.constant_coefficients = constant;
    rt.spec.drift = [mu](std::span<const double> x, std::span<double> out) {
        for (std::size_t i = 0; i < mu.size(); ++i) out[i] = mu[i].eval(x);
    };
    rt.spec.sigma = [sg](std::span<const double> x, std::span<double> out) {
        for (std::size_t i = 0; i < sg.size(); ++i) out[i] = sg[i].eval(x);
    };

    Expression source = Expression::parse(s.source_expr);
    Expression f1 = Expression::parse(s.f1_expr);
    Expression f2 = Expression::parse(s.f2_expr);
    for (const Expression* e : {&source, &f1, &f2}) {
        if (e->max_variable() > s.dim) {
            throw ConfigError("config: cost expression references x" +
                              std::to_string(e->max_variable()) +
                              " beyond the problem dimension");
        }
    }
    rt.cost.source = [source](std::span<const double> x) { return source.eval(x); };
    rt.cost.f1 = [f1](std::span<const double> x) { return f1.eval(x); };
    rt.cost.f2 = [f2](std::span<const double> x) { return f2.eval(x); };
    rt.cost.grad_f1 = fd_gradient(rt.cost.f1);
    rt.cost.grad_f2 = fd_gradient(rt.cost.f2);

    Expression a_band = Expression::parse(s.a_band_expr);
    Expression b_band = Expression::parse(s.b_band_expr);
    if (a_band.max_variable() > s.dim - 1 || b_band.max_variable() > s.dim - 1) {
        throw ConfigError(
            "config: band expressions may only use the lateral variables");
    }
    rt.a_band = [a_band](std::span<const double> xbar) { return a_band.eval(xbar); };
    rt.b_band = [b_band](std::span<const double> xbar) { return b_band.eval(xbar); };
    return rt;
}

double expression_eval(const std::string& expr, std::span<const double> point) {
    return Expression::parse(expr).eval(point);
}

// ---------------------------------------------------------------------------
// pipeline
// ---------------------------------------------------------------------------

const char* stage_name(Stage stage) {
    switch (stage) {
        case Stage::kSolve: return "solve";
        case Stage::kBoundary: return "boundary";
        case Stage::kBuildW: return "build_w";
        case Stage::kGame: return "game";
        case Stage::kControl: return "control";
        case Stage::kVerify: return "verify";
        case Stage::kAppendix: return "appendix";
    }
    return "?";
}

Stage stage_from_name(const std::string& name) {
    for (Stage st : all_stages()) {
        if (name == stage_name(st)) return st;
    }
    throw ConfigError("unknown stage '" + name + "'");
}

std::vector<Stage> all_stages() {
    return {Stage::kSolve, Stage::kBoundary, Stage::kBuildW, Stage::kGame,
            Stage::kControl, Stage::kVerify, Stage::kAppendix};
}

namespace {

constexpr const char* kSolutionCsv = "solution.csv";
constexpr const char* kBoundaryCsv = "boundary.csv";
constexpr const char* kBoundaryJson = "boundary_report.json";
constexpr const char* kWhCsv = "wh_field.csv";
constexpr const char* kCCsv = "c_curve.csv";
constexpr const char* kGameJson = "game_report.json";
constexpr const char* kControlJson = "control_report.json";
constexpr const char* kVerifyJson = "verification.json";
constexpr const char* kVerifyTxt = "verification.txt";
constexpr const char* kAppendixJson = "appendix_report.json";
constexpr const char* kScaleSpeedCsv = "scale_speed.csv";
constexpr const char* kManifestJson = "manifest.json";

double label_code(RegionLabel lab) {
    switch (lab) {
        case RegionLabel::kE1: return -1.0;
        case RegionLabel::kE: return 0.0;
        case RegionLabel::kE2: return 1.0;
    }
    return 0.0;
}

RegionLabel label_from_code(double code) {
    if (code < -0.5) return RegionLabel::kE1;
    if (code > 0.5) return RegionLabel::kE2;
    return RegionLabel::kE;
}

// exclusive-create lock file; released (unlinked) on scope exit
class DirectoryLock {
public:
    explicit DirectoryLock(const std::filesystem::path& dir)
        : path_(dir / ".lock") {
        int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd < 0) {
            throw ConfigError("output directory is locked: " + path_.string());
        }
        ::close(fd);
    }
    ~DirectoryLock() {
        std::error_code ec;
        std::filesystem::remove(path_, ec);
    }
    DirectoryLock(const DirectoryLock&) = delete;
    DirectoryLock& operator=(const DirectoryLock&) = delete;

private:
    std::filesystem::path path_;
};

struct PipelineContext {
    const Scenario& scenario;
    ScenarioRuntime rt;
    std::filesystem::path out;
    std::vector<std::string> written;

    void record(const std::string& file) { written.push_back(file); }

    std::filesystem::path artifact(const char* file) const { return out / file; }

    void require_artifact(const char* file, Stage producer) const {
        if (!std::filesystem::exists(out / file)) {
            throw ConfigError(std::string("missing artifact '") + file +
                              "'; run stage '" + stage_name(producer) +
                              "' first");
        }
    }
};

ObstacleProblem make_problem(PipelineContext& ctx) {
    ObstacleProblem problem;
    problem.spec = ctx.rt.spec;
    problem.grid = ctx.rt.grid;
    problem.source = sample_field(ctx.rt.grid, ctx.rt.cost.source);
    problem.f1 = sample_field(ctx.rt.grid, ctx.rt.cost.f1);
    problem.f2 = sample_field(ctx.rt.grid, ctx.rt.cost.f2);
    return problem;
}

void write_solution_csv(PipelineContext& ctx, const ObstacleSolution& sol) {
    const GridSpec& g = ctx.rt.grid;
    CsvTable table;
    for (int ax = 0; ax < g.dim(); ++ax) {
        table.header.push_back("x" + std::to_string(ax + 1));
    }
    table.header.push_back("V");
    table.header.push_back("label");
    std::vector<int> idx(g.dim());
    std::vector<double> point(g.dim());
    for (std::size_t flat = 0; flat < sol.value.values.size(); ++flat) {
        g.unflatten(flat, idx);
        g.node_point(idx, point);
        std::vector<double> row(point.begin(), point.end());
        row.push_back(sol.value.values[flat]);
        row.push_back(label_code(sol.labels[flat]));
        table.rows.push_back(std::move(row));
    }
    write_csv(ctx.artifact(kSolutionCsv), table);
    ctx.record(kSolutionCsv);
}

ObstacleSolution load_solution(PipelineContext& ctx) {
    ctx.require_artifact(kSolutionCsv, Stage::kSolve);
    CsvTable table = read_csv(ctx.artifact(kSolutionCsv));
    const GridSpec& g = ctx.rt.grid;
    if (table.rows.size() != g.num_nodes()) {
        throw ConfigError("solution.csv does not match the scenario grid");
    }
    ObstacleSolution sol;
    sol.value = GridField(g);
    sol.labels.resize(g.num_nodes());
    const std::size_t vcol = g.dim();
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        sol.value.values[i] = table.rows[i][vcol];
        sol.labels[i] = label_from_code(table.rows[i][vcol + 1]);
    }
    return sol;
}

void write_boundary_csv(PipelineContext& ctx, const FreeBoundary& fb,
                        const ComparisonCurves& cc) {
    const GridSpec& g = ctx.rt.grid;
    CsvTable table;
    for (int ax = 0; ax + 1 < g.dim(); ++ax) {
        table.header.push_back("x" + std::to_string(ax + 1));
    }
    table.header.insert(table.header.end(),
                        {"a_tilde", "b_tilde", "a", "b"});
    for (std::size_t col = 0; col < fb.a_tilde.size(); ++col) {
        std::vector<double> row = g.column_point(col);
        row.push_back(fb.a_tilde[col]);
        row.push_back(fb.b_tilde[col]);
        row.push_back(cc.a[col]);
        row.push_back(cc.b[col]);
        table.rows.push_back(std::move(row));
    }
    write_csv(ctx.artifact(kBoundaryCsv), table);
    ctx.record(kBoundaryCsv);
}

struct BoundaryArtifacts {
    FreeBoundary fb;
    ComparisonCurves cc;
};

BoundaryArtifacts load_boundary(PipelineContext& ctx) {
    ctx.require_artifact(kBoundaryCsv, Stage::kBoundary);
    CsvTable table = read_csv(ctx.artifact(kBoundaryCsv));
    const GridSpec& g = ctx.rt.grid;
    if (table.rows.size() != g.num_columns()) {
        throw ConfigError("boundary.csv does not match the scenario grid");
    }
    BoundaryArtifacts ba;
    ba.fb.grid = g;
    const std::size_t base = g.dim() - 1;
    for (const auto& row : table.rows) {
        ba.fb.a_tilde.push_back(row[base]);
        ba.fb.b_tilde.push_back(row[base + 1]);
        ba.cc.a.push_back(row[base + 2]);
        ba.cc.b.push_back(row[base + 3]);
    }
    return ba;
}

// Outer-band admissibility probe: from (xbar, A) the discounted running
// payoff up to the hit of the curve a plus the worst-case discounted
// terminal bound M must stay below -f1; mirrored above B.
Json validate_bands_mc(PipelineContext& ctx, const ComparisonCurves& cc,
                       double obstacle_bound) {
    const GridSpec& g = ctx.rt.grid;
    const int n = g.dim();
    McParams mc;
    mc.paths = 2000;
    mc.dt = 2e-3;
    mc.t_max = 40.0;
    mc.seed = derive_seed(ctx.scenario.seed, "bands");

    std::vector<std::size_t> probe_cols;
    const std::size_t ncols = g.num_columns();
    probe_cols.push_back(0);
    if (ncols > 2) probe_cols.push_back(ncols / 2);
    if (ncols > 1) probe_cols.push_back(ncols - 1);

    StoppingStrategy never;
    never.in_region = [](std::span<const double>) { return false; };
    never.kind = StoppingStrategy::Kind::kStopMax;
    never.name = "never";

    // piecewise-linear interpolation of the a/b curves over the columns
    FreeBoundary curves;
    curves.grid = g;
    curves.a_tilde = cc.a;
    curves.b_tilde = cc.b;

    Json rows = Json::array();
    bool all_pass = true;
    for (std::size_t col : probe_cols) {
        auto xbar = g.column_point(col);
        std::vector<double> x(n);
        std::copy(xbar.begin(), xbar.end(), x.begin());

        // lower side: stop on {x_n >= a(xbar)} collecting +M
        x[n - 1] = cc.a_band[col];
        CostSpec probe = ctx.rt.cost;
        probe.f2 = [obstacle_bound](std::span<const double>) {
            return obstacle_bound;
        };
        StoppingStrategy hit_a;
        hit_a.kind = StoppingStrategy::Kind::kStopMin;
        hit_a.name = "hit_a";
        hit_a.in_region = [curves](std::span<const double> p) {
            const std::size_t last = p.size() - 1;
            return p[last] >= curves.a_at(p.subspan(0, last));
        };
        GameEstimate lower = evaluate_game(ctx.rt.spec, probe, x, hit_a, never,
                                           mc, obstacle_bound);
        const double f1_here = ctx.rt.cost.f1(x);
        bool lower_ok = lower.mean + 3.0 * lower.std_error < -f1_here;

        // upper side: stop on {x_n <= b(xbar)} collecting -M
        x[n - 1] = cc.b_band[col];
        CostSpec probe2 = ctx.rt.cost;
        probe2.f1 = [obstacle_bound](std::span<const double>) {
            return obstacle_bound;
        };
        StoppingStrategy hit_b;
        hit_b.kind = StoppingStrategy::Kind::kStopMax;
        hit_b.name = "hit_b";
        hit_b.in_region = [curves](std::span<const double> p) {
            const std::size_t last = p.size() - 1;
            return p[last] <= curves.b_at(p.subspan(0, last));
        };
        GameEstimate upper = evaluate_game(ctx.rt.spec, probe2, x, never, hit_b,
                                           mc, obstacle_bound);
        const double f2_here = ctx.rt.cost.f2(x);
        bool upper_ok = upper.mean - 3.0 * upper.std_error > f2_here;

        all_pass = all_pass && lower_ok && upper_ok;
        rows.push_back(Json{{"column", col},
                            {"a", cc.a[col]},
                            {"lower_estimate", lower.mean},
                            {"lower_se", lower.std_error},
                            {"lower_bound", -f1_here},
                            {"lower_ok", lower_ok},
                            {"upper_estimate", upper.mean},
                            {"upper_se", upper.std_error},
                            {"upper_bound", f2_here},
                            {"upper_ok", upper_ok}});
    }
    return Json{{"pass", all_pass}, {"probes", rows}};
}

void stage_solve(PipelineContext& ctx) {
    ObstacleProblem problem = make_problem(ctx);
    ObstacleSolution sol = solve_two_obstacle(problem, ctx.scenario.solver);
    write_solution_csv(ctx, sol);
}

void stage_boundary(PipelineContext& ctx) {
    ObstacleProblem problem = make_problem(ctx);
    ObstacleSolution sol = load_solution(ctx);
    FreeBoundary fb = extract_boundaries(sol, problem);
    ComparisonCurves cc = analytic_ab(ctx.rt.spec, ctx.rt.cost, ctx.rt.grid,
                                      ctx.rt.a_band, ctx.rt.b_band);

    const double slack = 2.0 * ctx.rt.grid.spacing(ctx.rt.grid.dim() - 1);
    OrderingReport ordering = ordering_check(fb, cc, slack);
    ConnectivityReport connectivity =
        connectivity_check(ctx.rt.grid, sol.labels);
    LipschitzEstimate lip_a = lipschitz_estimate(ctx.rt.grid, fb.a_tilde);
    LipschitzEstimate lip_b = lipschitz_estimate(ctx.rt.grid, fb.b_tilde);
    Json bands = validate_bands_mc(ctx, cc, problem.obstacle_bound());

    write_boundary_csv(ctx, fb, cc);

    Json report{
        {"ordering",
         Json{{"pass", ordering.pass}, {"detail", ordering.detail}}},
        {"connectivity",
         Json{{"pass", connectivity.pass},
              {"e_connected", connectivity.e_connected},
              {"e1_connected", connectivity.e1_connected},
              {"e2_connected", connectivity.e2_connected},
              {"columns_banded", connectivity.columns_banded},
              {"detail", connectivity.detail}}},
        {"lipschitz",
         Json{{"a_tilde", lip_a.value},
              {"b_tilde", lip_b.value},
              {"single_column", lip_a.single_column}}},
        {"outer_bands", bands},
    };
    write_text_file(ctx.artifact(kBoundaryJson), report.dump(2) + "\n");
    ctx.record(kBoundaryJson);
    if (!ordering.pass || !connectivity.pass) {
        throw NumericError("boundary stage diagnostics failed: " +
                           ordering.detail + connectivity.detail);
    }
}

void stage_build_w(PipelineContext& ctx) {
    ObstacleSolution sol = load_solution(ctx);
    BoundaryArtifacts ba = load_boundary(ctx);

    GridField w = build_w(sol.value, ba.fb);
    ValueW vw = build_h(sol.value, w,
                        sample_field(ctx.rt.grid, ctx.rt.cost.source), ba.fb,
                        ctx.rt.spec);

    const GridSpec& g = ctx.rt.grid;
    CsvTable table;
    for (int ax = 0; ax < g.dim(); ++ax) {
        table.header.push_back("x" + std::to_string(ax + 1));
    }
    table.header.push_back("W");
    table.header.push_back("h");
    std::vector<int> idx(g.dim());
    std::vector<double> point(g.dim());
    for (std::size_t flat = 0; flat < vw.w.values.size(); ++flat) {
        g.unflatten(flat, idx);
        g.node_point(idx, point);
        std::vector<double> row(point.begin(), point.end());
        row.push_back(vw.w.values[flat]);
        row.push_back(vw.h.values[flat]);
        table.rows.push_back(std::move(row));
    }
    write_csv(ctx.artifact(kWhCsv), table);
    ctx.record(kWhCsv);

    CsvTable ctable;
    for (int ax = 0; ax + 1 < g.dim(); ++ax) {
        ctable.header.push_back("x" + std::to_string(ax + 1));
    }
    ctable.header.push_back("C");
    for (std::size_t col = 0; col < vw.c_per_column.size(); ++col) {
        std::vector<double> row = g.column_point(col);
        row.push_back(vw.c_per_column[col]);
        ctable.rows.push_back(std::move(row));
    }
    write_csv(ctx.artifact(kCCsv), ctable);
    ctx.record(kCCsv);
}

ValueW load_wh(PipelineContext& ctx) {
    ctx.require_artifact(kWhCsv, Stage::kBuildW);
    CsvTable table = read_csv(ctx.artifact(kWhCsv));
    const GridSpec& g = ctx.rt.grid;
    if (table.rows.size() != g.num_nodes()) {
        throw ConfigError("wh_field.csv does not match the scenario grid");
    }
    ValueW vw;
    vw.w = GridField(g);
    vw.h = GridField(g);
    const std::size_t wcol = g.dim();
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        vw.w.values[i] = table.rows[i][wcol];
        vw.h.values[i] = table.rows[i][wcol + 1];
    }
    return vw;
}

StoppingStrategy region_below(const FreeBoundary& fb, double shift,
                              std::string name) {
    StoppingStrategy s;
    s.kind = StoppingStrategy::Kind::kStopMax;
    s.name = std::move(name);
    s.in_region = [fb, shift](std::span<const double> p) {
        const std::size_t last = p.size() - 1;
        return p[last] <= fb.a_at(p.subspan(0, last)) + shift;
    };
    return s;
}

StoppingStrategy region_above(const FreeBoundary& fb, double shift,
                              std::string name) {
    StoppingStrategy s;
    s.kind = StoppingStrategy::Kind::kStopMin;
    s.name = std::move(name);
    s.in_region = [fb, shift](std::span<const double> p) {
        const std::size_t last = p.size() - 1;
        return p[last] >= fb.b_at(p.subspan(0, last)) + shift;
    };
    return s;
}

StoppingStrategy region_everywhere(StoppingStrategy::Kind kind,
                                   std::string name) {
    StoppingStrategy s;
    s.kind = kind;
    s.name = std::move(name);
    s.in_region = [](std::span<const double>) { return true; };
    return s;
}

void stage_game(PipelineContext& ctx) {
    ObstacleProblem problem = make_problem(ctx);
    ObstacleSolution sol = load_solution(ctx);
    BoundaryArtifacts ba = load_boundary(ctx);

    const double v_ref = interpolate(sol.value, ctx.scenario.x0);
    const double shift = ctx.scenario.alternative_shift;
    StoppingStrategy tau_hat = region_above(ba.fb, 0.0, "tau_hat");
    StoppingStrategy sigma_hat = region_below(ba.fb, 0.0, "sigma_hat");
    std::vector<StoppingStrategy> alternatives{
        region_below(ba.fb, -shift, "sigma_down"),
        region_below(ba.fb, +shift, "sigma_up"),
        region_above(ba.fb, -shift, "tau_down"),
        region_above(ba.fb, +shift, "tau_up"),
        region_everywhere(StoppingStrategy::Kind::kStopMax, "sigma_immediate"),
        region_everywhere(StoppingStrategy::Kind::kStopMin, "tau_immediate"),
    };

    McParams mc = ctx.scenario.mc_game;
    mc.seed = derive_seed(ctx.scenario.seed, "game");
    SaddleReport report =
        saddle_check(ctx.rt.spec, ctx.rt.cost, ctx.scenario.x0, tau_hat,
                     sigma_hat, alternatives, mc, problem.obstacle_bound(),
                     v_ref);

    Json comparisons = Json::array();
    for (const auto& alt : report.alternatives) {
        comparisons.push_back(Json{
            {"name", alt.name},
            {"kind", alt.kind == StoppingStrategy::Kind::kStopMax ? "sigma"
                                                                  : "tau"},
            {"estimate", alt.estimate},
            {"std_error", alt.std_error},
            {"diff", alt.diff},
            {"diff_se", alt.diff_se},
            {"pass", alt.pass}});
    }
    Json out{
        {"estimate", report.hat.mean},
        {"std_error", report.hat.std_error},
        {"paths", report.hat.paths},
        {"dt", mc.dt},
        {"t_max", mc.t_max},
        {"seed", mc.seed},
        {"truncation_bias_bound", report.hat.truncation_bias_bound},
        {"source_tail_bound", report.hat.source_tail_bound},
        {"truncated_paths", report.hat.truncated_paths},
        {"v_reference", report.v_reference},
        {"value_match", report.value_match},
        {"comparisons", comparisons},
        {"all_pass", report.all_pass},
    };
    write_text_file(ctx.artifact(kGameJson), out.dump(2) + "\n");
    ctx.record(kGameJson);
}

std::vector<Band> verification_bands(const FreeBoundary& fb) {
    std::vector<Band> bands;
    bands.push_back(band_from_boundary(fb, 0.0, 0.0, "optimal"));
    bands.push_back(band_from_boundary(fb, -0.25, 0.25, "outward_0.25"));
    bands.push_back(band_from_boundary(fb, 0.25, -0.25, "inward_0.25"));
    bands.push_back(band_from_boundary(fb, -0.5, 0.5, "outward_0.5"));
    bands.push_back(band_from_boundary(fb, 0.5, -0.5, "inward_0.5"));
    bands.push_back(band_from_boundary(fb, -0.5, 0.0, "asymmetric_lower_0.5"));
    return bands;
}

void stage_control(PipelineContext& ctx) {
    BoundaryArtifacts ba = load_boundary(ctx);
    ValueW vw = load_wh(ctx);

    McParams mc;
    mc.paths = ctx.scenario.control_paths;
    mc.dt = ctx.scenario.mc_game.dt;
    mc.t_max = ctx.scenario.control_t_max;
    mc.seed = derive_seed(ctx.scenario.seed, "control");

    Band optimal = band_from_boundary(ba.fb, 0.0, 0.0, "optimal");
    CostEstimate est = evaluate_cost(ctx.rt.spec, ctx.rt.cost, vw.h, optimal,
                                     ctx.scenario.x0, mc);
    const double w0 = w_extended(vw.w, ctx.rt.cost, ctx.scenario.x0);
    const bool match = std::abs(est.mean - w0) <= 3.0 * est.std_error;

    Json out{
        {"policy", "optimal"},
        {"estimate", est.mean},
        {"std_error", est.std_error},
        {"paths", est.paths},
        {"dt", mc.dt},
        {"t_max", mc.t_max},
        {"seed", mc.seed},
        {"truncation_bias_bound", est.truncation_bias_bound},
        {"mean_holding", est.mean_holding},
        {"mean_control", est.mean_control},
        {"mean_jump", est.mean_jump},
        {"mean_a1", est.mean_a1},
        {"mean_a2", est.mean_a2},
        {"w_at_x0", w0},
        {"diff", est.mean - w0},
        {"matches_value", match},
    };
    write_text_file(ctx.artifact(kControlJson), out.dump(2) + "\n");
    ctx.record(kControlJson);
}

void stage_verify(PipelineContext& ctx) {
    BoundaryArtifacts ba = load_boundary(ctx);
    ValueW vw = load_wh(ctx);

    McParams mc;
    mc.paths = ctx.scenario.control_paths;
    mc.dt = ctx.scenario.mc_game.dt;
    mc.t_max = ctx.scenario.control_t_max;
    mc.seed = derive_seed(ctx.scenario.seed, "verify");

    std::vector<Band> bands = verification_bands(ba.fb);
    VerificationReport report = verification_report(
        ctx.rt.spec, ctx.rt.cost, vw, bands, ctx.scenario.x0, mc);

    Json rows = Json::array();
    std::string text =
        "policy                 k_hat        se           k_hat-W(x0)  pass\n";
    for (const auto& row : report.rows) {
        rows.push_back(Json{{"policy", row.policy},
                            {"k_hat", row.k_hat},
                            {"std_error", row.std_error},
                            {"excess", row.excess},
                            {"pass", row.pass_inequality},
                            {"matches_value", row.matches_value}});
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%-22s %-12.6g %-12.6g %-12.6g %s\n",
                      row.policy.c_str(), row.k_hat, row.std_error, row.excess,
                      row.pass_inequality ? "yes" : "NO");
        text += buf;
    }
    Json out{
        {"w_at_x0", report.w_at_x0},
        {"paths", mc.paths},
        {"dt", mc.dt},
        {"t_max", mc.t_max},
        {"seed", mc.seed},
        {"optimal_matches", report.optimal_matches},
        {"all_pass", report.all_pass},
        {"rows", rows},
    };
    write_text_file(ctx.artifact(kVerifyJson), out.dump(2) + "\n");
    ctx.record(kVerifyJson);
    write_text_file(ctx.artifact(kVerifyTxt), text);
    ctx.record(kVerifyTxt);
    if (!report.all_pass) {
        throw NumericError("verification failed: policy table has failures");
    }
}

// pairing-residual refinement study on the canonical compatible and
// incompatible models, both generator choices
Json pairing_study() {
    auto run = [&](const OneDimModel& model) {
        Json per_choice = Json::object();
        for (GeneratorChoice choice :
             {GeneratorChoice::kL, GeneratorChoice::kLGamma}) {
            Json arr = Json::array();
            for (int counts : {65, 129, 257}) {
                GridSpec g;
                g.lower = {model.x_min};
                g.upper = {model.x_max};
                g.counts = {counts};
                const double len = model.x_max - model.x_min;
                // cosine-bump combinations: zero derivative at both ends,
                // mixed parity so no pairing term cancels by symmetry
                GridField u = sample_field(g, [&](std::span<const double> p) {
                    const double s =
                        std::numbers::pi * (p[0] - model.x_min) / len;
                    return std::cos(s) + std::cos(2.0 * s);
                });
                GridField v = sample_field(g, [&](std::span<const double> p) {
                    const double s =
                        std::numbers::pi * (p[0] - model.x_min) / len;
                    return std::cos(2.0 * s) + std::cos(3.0 * s);
                });
                arr.push_back(Json{
                    {"counts", counts},
                    {"residual", dirichlet_pairing_residual(model, u, v, choice)}});
            }
            per_choice[choice == GeneratorChoice::kL ? "L" : "L_gamma"] = arr;
        }
        return per_choice;
    };

    OneDimModel compat;
    compat.mu = [](double x) { return 0.5 * (x + 2.0); };
    compat.sigma = [](double x) { return x + 2.0; };
    compat.sigma_prime = [](double) { return 1.0; };
    compat.alpha = 1.0;
    compat.x_min = -1.0;
    compat.x_max = 1.0;

    OneDimModel incompat;
    incompat.mu = [](double x) { return 0.4 * x; };
    incompat.sigma = [](double) { return 1.0; };
    incompat.sigma_prime = [](double) { return 0.0; };
    incompat.alpha = 1.0;
    incompat.x_min = -1.0;
    incompat.x_max = 1.0;

    return Json{{"compatible", run(compat)}, {"incompatible", run(incompat)}};
}

void stage_appendix(PipelineContext& ctx) {
    Json report{{"pairing_study", pairing_study()}};

    if (ctx.scenario.dim == 1) {
        // scalar-model diagnostics on the scenario grid
        OneDimModel model;
        const DiffusionSpec spec = ctx.rt.spec;
        model.mu = [spec](double x) {
            double out;
            spec.drift({&x, 1}, {&out, 1});
            return out;
        };
        model.sigma = [spec](double x) {
            double out;
            spec.sigma({&x, 1}, {&out, 1});
            return out;
        };
        auto sigma_fn = model.sigma;
        model.sigma_prime = [sigma_fn](double x) {
            const double h = 1e-6;
            return (sigma_fn(x + h) - sigma_fn(x - h)) / (2.0 * h);
        };
        model.alpha = ctx.rt.spec.alpha;
        model.x_min = ctx.rt.grid.lower[0];
        model.x_max = ctx.rt.grid.upper[0];

        CsvTable table;
        table.header = {"x", "s_dot", "m_dot", "gamma", "compat_residual"};
        std::vector<double> pts;
        const int m = std::min(ctx.rt.grid.counts[0], 201);
        for (int i = 0; i < m; ++i) {
            double x = model.x_min + (model.x_max - model.x_min) * i / (m - 1);
            ScaleSpeed ss = scale_speed(model, x);
            double res = std::abs(2.0 * model.mu(x) -
                                  model.sigma(x) * model.sigma_prime(x));
            table.rows.push_back(
                {x, ss.s_dot, ss.m_dot, corrected_drift(model, x), res});
            pts.push_back(x);
        }
        write_csv(ctx.artifact(kScaleSpeedCsv), table);
        ctx.record(kScaleSpeedCsv);
        report["scenario_model"] =
            Json{{"compatibility_residual", compatibility_residual(model, pts)}};
    }

    write_text_file(ctx.artifact(kAppendixJson), report.dump(2) + "\n");
    ctx.record(kAppendixJson);
}

}  // namespace

RunManifest run_pipeline(const Scenario& scenario,
                         const std::set<Stage>& stages,
                         const std::filesystem::path& out_override) {
    scenario.validate();

    std::filesystem::path out = out_override.empty()
                                    ? std::filesystem::path(scenario.output_dir)
                                    : out_override;
    if (const char* root = std::getenv("DYNLAB_OUT_ROOT");
        root && out.is_relative()) {
        out = std::filesystem::path(root) / out;
    }
    std::filesystem::create_directories(out);
    DirectoryLock lock(out);

    PipelineContext ctx{scenario, assemble(scenario), out, {}};

    RunManifest manifest;
    manifest.scenario_hash_hex = hex64(scenario_hash(scenario));
    manifest.tool_version = kToolVersion;

    for (Stage st : all_stages()) {
        if (!stages.count(st)) {
            manifest.stages.push_back({stage_name(st), "skipped"});
            continue;
        }
        switch (st) {
            case Stage::kSolve: stage_solve(ctx); break;
            case Stage::kBoundary: stage_boundary(ctx); break;
            case Stage::kBuildW: stage_build_w(ctx); break;
            case Stage::kGame: stage_game(ctx); break;
            case Stage::kControl: stage_control(ctx); break;
            case Stage::kVerify: stage_verify(ctx); break;
            case Stage::kAppendix: stage_appendix(ctx); break;
        }
        manifest.stages.push_back({stage_name(st), "ok"});
    }

    for (const std::string& file : ctx.written) {
        manifest.artifacts.push_back(
            {file, hex64(file_checksum(out / file))});
    }

    Json mj{{"scenario_hash", manifest.scenario_hash_hex},
            {"tool_version", manifest.tool_version}};
    Json stages_json = Json::array();
    for (const auto& entry : manifest.stages) {
        stages_json.push_back(Json{{"name", entry.name},
                                   {"status", entry.status}});
    }
    mj["stages"] = stages_json;
    Json artifacts_json = Json::array();
    for (const auto& entry : manifest.artifacts) {
        artifacts_json.push_back(
            Json{{"file", entry.file}, {"checksum", entry.checksum}});
    }
    mj["artifacts"] = artifacts_json;
    write_text_file(out / kManifestJson, mj.dump(2) + "\n");

    return manifest;
}

}  // namespace dynlab
