#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "chd/driver.hpp"

using namespace chd;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / ("chd_test_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string small_run_text(const fs::path& out, const std::string& extra = "") {
    std::ostringstream os;
    os << "[grid]\ndim = 1\ncells = 24\n"
       << "[delay]\nT = 0.05\nN = 4\nM = 2\n"
       << "[output]\ndir = " << out.string() << "\nstride = 1\n"
       << extra;
    return os.str();
}

std::string strip_timestamp(const std::string& text) {
    std::istringstream in(text);
    std::ostringstream out;
    std::string line;
    while (std::getline(in, line))
        if (line.find("generated_at") == std::string::npos) out << line << "\n";
    return out.str();
}

}  // namespace

TEST_CASE("config: minimal document materializes the documented defaults") {
    RunConfig cfg = parse_config("");
    CHECK(cfg.delay.N == 16);
    CHECK(cfg.delay.M == 4);
    CHECK(cfg.eps_auto);
    CHECK(cfg.delay.eps_eff() == doctest::Approx(cfg.delay.tau()));
    CHECK(cfg.dim == 1);
    CHECK(cfg.cells == std::vector<int>{64});
    CHECK(cfg.lengths == std::vector<double>{1.0});
    CHECK(cfg.graph == "log");
    CHECK(cfg.stride == 8);
}

TEST_CASE("config: violations are aggregated with key paths") {
    const std::string text =
        "[delay]\nN = 0\nM = -2\n[physics]\ngraph = banana\n[grid]\ncells = 0\n";
    try {
        parse_config(text);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("delay.N") != std::string::npos);
        CHECK(msg.find("delay.M") != std::string::npos);
        CHECK(msg.find("physics.graph") != std::string::npos);
        CHECK(msg.find("grid.cells") != std::string::npos);
    }
}

TEST_CASE("config: unknown keys are a hard error, syntax errors are ParseError") {
    CHECK_THROWS_AS(parse_config("[delay]\nbogus = 1\n"), ValidationError);
    CHECK_THROWS_AS(parse_config("[nosuch]\nx = 1\n"), ValidationError);
    CHECK_THROWS_AS(parse_config("key_without_section = 1\n"), ParseError);
    CHECK_THROWS_AS(parse_config("[delay\nN = 4\n"), ParseError);
    CHECK_THROWS_AS(parse_config("[delay]\nN\n"), ParseError);
    CHECK_THROWS_AS(parse_config("[delay]\nN = 4\nN = 5\n"), ParseError);
}

TEST_CASE("config: the log graph round-trips through the registry") {
    RunConfig cfg = parse_config("[physics]\ngraph = log\ngraph.c = 1.0\n");
    RunInputs in = build_inputs(cfg);
    CHECK(eval_f1(in.spec, 0.5) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(eval_f1(in.spec, -0.1) == kInf);
    CHECK(beta_resolvent(in.spec.graph, 1.0, 0.5) == doctest::Approx(0.5));
    CHECK(in.spec.pi(0.5) == doctest::Approx(0.0));
}

TEST_CASE("field csv: round trip is bit-exact, corrupt files are rejected") {
    fs::path dir = fresh_dir("fieldcsv");
    Grid g = Grid::box(5, 3, 2.0, 1.5);
    Field f(g);
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    for (auto& x : f.v) x = u(rng);
    f.v[7] = 1.0 / 3.0;

    write_field_csv(dir / "f.csv", f);
    Field back = read_field_csv(dir / "f.csv");
    CHECK(back.grid == g);
    for (int i = 0; i < f.size(); ++i) CHECK(back[i] == f[i]);

    {
        std::ofstream bad(dir / "bad.csv");
        bad << field_csv_header(g) << "\n";
        for (int i = 0; i < g.cells(); ++i) bad << (i == 4 ? "nan" : "1.0") << "\n";
    }
    try {
        read_field_csv(dir / "bad.csv");
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("bad.csv") != std::string::npos);
    }

    {
        std::ofstream trunc(dir / "short.csv");
        trunc << field_csv_header(g) << "\n1.0\n2.0\n";
    }
    CHECK_THROWS_AS(read_field_csv(dir / "short.csv"), FormatError);
    {
        std::ofstream noheader(dir / "nohdr.csv");
        noheader << "1.0\n";
    }
    CHECK_THROWS_AS(read_field_csv(dir / "nohdr.csv"), FormatError);
}

TEST_CASE("atomic write leaves no temporary behind") {
    fs::path dir = fresh_dir("atomic");
    atomic_write(dir / "x.txt", "payload");
    CHECK(read_text(dir / "x.txt") == "payload");
    int entries = 0;
    for (auto& _ : fs::directory_iterator(dir)) {
        (void)_;
        ++entries;
    }
    CHECK(entries == 1);
}

TEST_CASE("series csv: round trip preserves doubles") {
    fs::path dir = fresh_dir("seriescsv");
    StepSeries s;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int k = 0; k < 7; ++k) {
        for (auto* f : series_fields(s)) f->push_back(u(rng));
    }
    write_series_csv(dir / "series.csv", s);
    StepSeries back = read_series_csv(dir / "series.csv");
    auto a = series_fields(s);
    auto b = series_fields(back);
    for (size_t c = 0; c < a.size(); ++c) {
        REQUIRE(b[c]->size() == a[c]->size());
        for (size_t k = 0; k < a[c]->size(); ++k) CHECK((*b[c])[k] == (*a[c])[k]);
    }
}

TEST_CASE("solve command: default small config passes and writes artifacts") {
    fs::path out = fresh_dir("solve_ok");
    RunConfig cfg = parse_config(small_run_text(out));
    std::ostringstream log;
    CHECK(run_solve(cfg, log) == kExitPass);
    CHECK(fs::exists(out / "report.json"));
    CHECK(fs::exists(out / "series.csv"));
    CHECK(fs::exists(out / "index.json"));
    CHECK(fs::exists(out / "mu_00000.csv"));
    CHECK(log.str().find("[pass] weighted_energy") != std::string::npos);

    Json report = Json::parse(read_text(out / "report.json"));
    for (const auto& a : report["audits"]) CHECK(a["verdict"] == "pass");
}

TEST_CASE("solve command: zero initial mu stays identically zero") {
    fs::path out = fresh_dir("solve_zero");
    RunConfig cfg = parse_config(
        small_run_text(out, "[initial]\nprofile = constant\nmu0.base = 0.0\nrho0.base = 0.4\n"));
    std::ostringstream log;
    CHECK(run_solve(cfg, log) == kExitPass);
    Json index = Json::parse(read_text(out / "index.json"));
    const auto& last = index["steps"].back();
    Field mu = read_field_csv(out / last["mu"].get<std::string>());
    for (double x : mu.v) CHECK(x == 0.0);
}

TEST_CASE("solve command: adversarially large h fails loudly with a stable code") {
    // h = 40 makes the phase-step Jacobian diagonal 1/h + pi' = 0.025 - 6
    // negative; the automatic substep fallback cannot rescue three halvings.
    fs::path out = fresh_dir("solve_lp");
    const std::string text =
        "[grid]\ndim = 1\ncells = 4\n"
        "[physics]\ngraph = zero\nkappa = const\nkappa.kmin = 1.0\n"
        "[delay]\nT = 40\nN = 1\nM = 1\n"
        "[initial]\nprofile = constant\nmu0.base = 1.0\nrho0.base = 0.5\n"
        "[output]\ndir = " + out.string() + "\n";
    RunConfig cfg = parse_config(text);
    std::ostringstream log;
    CHECK(run_solve(cfg, log) == kExitSolverFailure);
    Json err = Json::parse(read_text(out / "error.json"));
    CHECK(err["error"]["code"] == "IndefiniteJacobian");
    CHECK(err["error"]["message"].get<std::string>().find("step 1") != std::string::npos);
}

TEST_CASE("verify reproduces the solve report byte for byte (modulo timestamp)") {
    fs::path out = fresh_dir("verify_ok");
    RunConfig cfg = parse_config(small_run_text(out));
    std::ostringstream log;
    REQUIRE(run_solve(cfg, log) == kExitPass);
    CHECK(run_verify(out, {}, log) == kExitPass);
    CHECK(strip_timestamp(read_text(out / "verify_report.json")) ==
          strip_timestamp(read_text(out / "report.json")));
}

TEST_CASE("verify with decimated snapshots still re-verdicts from the series") {
    fs::path out = fresh_dir("verify_stride");
    RunConfig cfg = parse_config(small_run_text(out));
    cfg.stride = 4;
    std::ostringstream log;
    REQUIRE(run_solve(cfg, log) == kExitPass);
    CHECK(run_verify(out, {}, log) == kExitPass);
    CHECK(strip_timestamp(read_text(out / "verify_report.json")) ==
          strip_timestamp(read_text(out / "report.json")));
}

TEST_CASE("verify: corrupt snapshot raises FormatError naming the file") {
    fs::path out = fresh_dir("verify_nan");
    RunConfig cfg = parse_config(small_run_text(out));
    std::ostringstream log;
    REQUIRE(run_solve(cfg, log) == kExitPass);

    Field mu = read_field_csv(out / "mu_00004.csv");
    {
        std::ofstream f(out / "mu_00004.csv");
        f << field_csv_header(mu.grid) << "\n";
        for (int i = 0; i < mu.size(); ++i) f << (i == 2 ? "nan" : fmt_double(mu[i])) << "\n";
    }
    CHECK(run_verify(out, {}, log) == kExitConfigError);
    Json err = Json::parse(read_text(out / "error.json"));
    CHECK(err["error"]["code"] == "FormatError");
    CHECK(err["error"]["message"].get<std::string>().find("mu_00004.csv") !=
          std::string::npos);
}

TEST_CASE("verify: structurally wrong index is a FormatError, not a crash") {
    fs::path out = fresh_dir("verify_types");
    RunConfig cfg = parse_config(small_run_text(out));
    std::ostringstream log;
    REQUIRE(run_solve(cfg, log) == kExitPass);
    Json index = Json::parse(read_text(out / "index.json"));
    index["steps"] = 42;  // wrong type
    atomic_write(out / "index.json", index.dump());
    CHECK(run_verify(out, {}, log) == kExitConfigError);
}

TEST_CASE("verify: truncated index emits no partial verdicts") {
    fs::path out = fresh_dir("verify_trunc");
    RunConfig cfg = parse_config(small_run_text(out));
    std::ostringstream log;
    REQUIRE(run_solve(cfg, log) == kExitPass);

    std::string index_text = read_text(out / "index.json");
    atomic_write(out / "index.json", index_text.substr(0, index_text.size() / 2));
    CHECK(run_verify(out, {}, log) == kExitConfigError);
    CHECK(!fs::exists(out / "verify_report.json"));
}

TEST_CASE("study command: linear decoupled scenario collapses to solver noise") {
    fs::path out = fresh_dir("study_lin");
    const std::string text =
        "[grid]\ndim = 1\ncells = 16\n"
        "[physics]\ngraph = zero\nf2.a = 0\nf2.b = 0\ng = const\ng.param = 0.1\n"
        "kappa = const\nkappa.kmin = 1.0\n"
        "[delay]\nT = 0.05\nN = 2\nM = 2\n"
        "[initial]\nprofile = constant\nmu0.base = 1.0\nrho0.base = 0.4\n"
        "[output]\ndir = " + out.string() + "\n";
    RunConfig cfg = parse_config(text);
    std::ostringstream log;
    CHECK(run_study(cfg, 3, log) == kExitPass);
    CHECK(fs::exists(out / "study.csv"));
}

TEST_CASE("study command: nonlinear default decreases monotonically") {
    fs::path out = fresh_dir("study_nl");
    RunConfig cfg = parse_config(small_run_text(out));
    std::ostringstream log;
    CHECK(run_study(cfg, 3, log) == kExitPass);
    const std::string csv = read_text(out / "study.csv");
    CHECK(csv.find("diff_mu_L2Q") != std::string::npos);
    CHECK(run_study(cfg, 1, log) == kExitConfigError);
}

TEST_CASE("shipped sample configs stay parseable") {
    const fs::path configs = fs::path(CHD_SOURCE_DIR) / "configs";
    int seen = 0;
    for (const auto& entry : fs::directory_iterator(configs)) {
        if (entry.path().extension() != ".ini") continue;
        ++seen;
        CHECK_NOTHROW(parse_config(read_text(entry.path())));
    }
    CHECK(seen >= 4);
}

TEST_CASE("cli binary: solve + verify round trip through a real process") {
    fs::path out = fresh_dir("cli_roundtrip");
    fs::path cfg_file = out / "run.ini";
    atomic_write(cfg_file, small_run_text(out / "artifacts"));

    const std::string cli = CHD_CLI_PATH;
    auto run = [&](const std::string& args) {
        const std::string cmd = cli + " " + args + " > /dev/null 2>&1";
        return std::system(cmd.c_str());
    };
    CHECK(WEXITSTATUS(run("solve " + cfg_file.string())) == 0);
    CHECK(WEXITSTATUS(run("verify " + (out / "artifacts").string())) == 0);
    CHECK(WEXITSTATUS(run("verify " + (out / "artifacts").string() +
                          " --audits nonnegativity,xi_l6")) == 0);
    CHECK(WEXITSTATUS(run("bogus-subcommand")) == kExitConfigError);
    CHECK(WEXITSTATUS(run("solve /nonexistent.ini")) == kExitConfigError);

    // environment override of the output directory
    fs::path alt = out / "alt";
    const std::string cmd = "CHD_OUTPUT_DIR=" + alt.string() + " " + cli + " solve " +
                            cfg_file.string() + " > /dev/null 2>&1";
    CHECK(WEXITSTATUS(std::system(cmd.c_str())) == 0);
    CHECK(fs::exists(alt / "report.json"));
}
