// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "fsilab/cli.hpp"
#include "fsilab/config.hpp"
#include "fsilab/errors.hpp"
#include "fsilab/io.hpp"

using namespace fsilab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("fsilab_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string small_config(const fs::path& out, const std::string& extra) {
    return "[run]\nout_dir = \"" + out.string() + "\"\n[mesh]\nbody = \"disk\"\nR = 3.0\nh = 0.5\n" + extra;
}

int run_text(const std::string& cmd, const std::string& text, std::string* err_text = nullptr) {
    std::ostringstream out, err;
    int code;
    try {
        code = run_command(cmd, parse_run_config(text), out, err);
    } catch (const ConfigError& e) {
        err << e.what();
        code = kExitValidation;
    }
    if (err_text) *err_text = err.str();
    return code;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST(ConfigParser, SectionsValuesAndComments) {
    ConfigDocument d = parse_config_text(
        "# comment\n[mesh]\nbody = \"disk\"  # trailing\nR = 8\n[sweep]\nlambda = [0.05, 1e-1, inf]\n"
        "[run]\nplots = false\n");
    EXPECT_EQ(std::get<std::string>(d.sections["mesh"]["body"]), "disk");
    EXPECT_EQ(std::get<double>(d.sections["mesh"]["R"]), 8.0);
    auto arr = std::get<std::vector<double>>(d.sections["sweep"]["lambda"]);
    ASSERT_EQ(arr.size(), 3u);
    EXPECT_EQ(arr[1], 0.1);
    EXPECT_TRUE(std::isinf(arr[2]));
    EXPECT_FALSE(std::get<bool>(d.sections["run"]["plots"]));
    EXPECT_EQ(d.lines["mesh.R"], 4);
}

TEST(ConfigParser, MalformedLinesRejected) {
    EXPECT_THROW(parse_config_text("[mesh\nR = 1\n"), ConfigError);
    EXPECT_THROW(parse_config_text("[mesh]\nR 1\n"), ConfigError);
    EXPECT_THROW(parse_config_text("[mesh]\nR = \"open\n"), ConfigError);
    EXPECT_THROW(parse_config_text("[mesh]\nR = 1\nR = 2\n"), ConfigError);
}

TEST(RunConfig, UnknownKeyNamesField) {
    try {
        parse_run_config("[mesh]\nfoo = 1\n");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("mesh.foo"), std::string::npos);
    }
    EXPECT_THROW(parse_run_config("[nonsense]\nx = 1\n"), ConfigError);
}

TEST(RunConfig, ValidationErrors) {
    EXPECT_THROW(parse_run_config("[physical]\nnu = 0.0\n"), ConfigError);
    EXPECT_THROW(parse_run_config("[transient]\ndt = -0.1\n"), ConfigError);
    EXPECT_THROW(parse_run_config("[thresholds]\ntol = 0\n"), ConfigError);
    EXPECT_THROW(parse_run_config("[bifurcation]\nlambda_min = 2\nlambda_max = 1\n"), ConfigError);
    EXPECT_THROW(parse_run_config("[params]\nlambda = 1\n[physical]\nV = 1\n"), ConfigError);
    EXPECT_THROW(parse_run_config("[mesh]\nR = \"big\"\n"), ConfigError);
}

TEST(RunConfig, PhysicalParametersAreNondimensionalized) {
    RunConfig c = parse_run_config("[physical]\nV = 2\nL = 1\nnu = 0.5\nrho = 1\nM = 2\nell = 8\n");
    EXPECT_NEAR(c.params.lambda, 4.0, 1e-14);
    EXPECT_NEAR(c.params.omega_n2, 16.0, 1e-14);
    EXPECT_NEAR(c.params.varpi, 0.5, 1e-14);
}

TEST(RunConfig, ShippedExamplesParse) {
    for (const auto& e : fs::directory_iterator(fs::path(FSILAB_SOURCE_DIR) / "configs"))
        if (e.path().extension() == ".toml") EXPECT_NO_THROW(load_run_config(e.path().string())) << e.path();
}

TEST(Csv, InfSentinelAndNaNRejection) {
    EXPECT_EQ(format_number(std::numeric_limits<double>::infinity()), "inf");
    EXPECT_EQ(format_number(0.1), "0.10000000000000001");
    EXPECT_THROW(format_number(std::nan("")), NaNOutput);
    CsvWriter w({"a", "b"});
    w.row({1.5, std::numeric_limits<double>::infinity()});
    EXPECT_EQ(w.str(), "a,b\n1.5,inf\n");
    EXPECT_THROW(w.row({1.0}), PreconditionViolation);
}

TEST(Commands, SteadySingleStateAndManifest) {
    fs::path out = scratch("steady");
    ASSERT_EQ(run_text("steady", small_config(out, "[sweep]\nlambda = [0]\n")), kExitOk);
    std::string csv = slurp(out / "steady.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
    EXPECT_TRUE(verify_manifest((out / manifest_name("steady")).string()).empty());
    auto man = nlohmann::json::parse(slurp(out / manifest_name("steady")));
    EXPECT_EQ(man["command"], "steady");
    EXPECT_EQ(man["status"], "ok");
    EXPECT_FALSE(man["files"].empty());
    fs::remove_all(out);
}

TEST(Commands, ManifestDetectsTamperedFile) {
    fs::path out = scratch("tamper");
    ASSERT_EQ(run_text("steady", small_config(out, "[sweep]\nlambda = [0, 0.5]\n")), kExitOk);
    { std::ofstream(out / "steady.csv", std::ios::app) << "tampered\n"; }
    auto bad = verify_manifest((out / manifest_name("steady")).string());
    ASSERT_EQ(bad.size(), 1u);
    EXPECT_EQ(bad[0], "steady.csv");
    fs::remove_all(out);
}

TEST(Commands, RerunsAreBitIdentical) {
    fs::path a = scratch("rerun_a"), b = scratch("rerun_b");
    const std::string extra = "[sweep]\nlambda = [0.1, 0.3]\n";
    ASSERT_EQ(run_text("steady", small_config(a, extra)), kExitOk);
    ASSERT_EQ(run_text("steady", small_config(b, extra)), kExitOk);
    EXPECT_EQ(slurp(a / "steady.csv"), slurp(b / "steady.csv"));
    auto ma = nlohmann::json::parse(slurp(a / manifest_name("steady")));
    auto mb = nlohmann::json::parse(slurp(b / manifest_name("steady")));
    EXPECT_EQ(ma["files"], mb["files"]);
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Commands, ZeroBaseFlowThresholdsPrintInf) {
    fs::path out = scratch("zero");
    ASSERT_EQ(run_text("thresholds", small_config(out, "[thresholds]\nsource = \"zero\"\n")), kExitOk);
    std::string csv = slurp(out / "thresholds.csv");
    EXPECT_NE(csv.find(",inf,inf,"), std::string::npos) << csv;
    fs::remove_all(out);
}

TEST(Commands, MissingBranchIsValidationError) {
    fs::path out = scratch("nobranch");
    EXPECT_EQ(run_text("thresholds", small_config(out, "[thresholds]\nbranch = \"/nonexistent/branch\"\n")),
              kExitValidation);
    fs::remove_all(out);
}

TEST(Commands, ZeroViscosityIsValidationError) {
    fs::path out = scratch("nu0");
    std::string err;
    EXPECT_EQ(run_text("steady", small_config(out, "[physical]\nnu = 0.0\n"), &err), kExitValidation);
    EXPECT_NE(err.find("nu"), std::string::npos);
    fs::remove_all(out);
}

TEST(Commands, ZeroAmplitudeTransientIsFlat) {
    fs::path out = scratch("eps0");
    ASSERT_EQ(run_text("transient", small_config(out, "[params]\nlambda = 0.05\n[transient]\nepsilon = 0.0\n"
                                                      "t_end = 0.5\ndt = 0.1\n")),
              kExitOk);
    std::istringstream csv(slurp(out / "energy.csv"));
    std::string line;
    std::getline(csv, line);
    int rows = 0;
    while (std::getline(csv, line)) {
        ++rows;
        EXPECT_NE(line.find(",0,0,0,"), std::string::npos) << line;
    }
    EXPECT_EQ(rows, 6);
    fs::remove_all(out);
}

TEST(Commands, BifurcateWithoutCrossing) {
    fs::path out = scratch("nocross");
    const std::string extra =
        "[bifurcation]\nbase_flow = \"strain\"\nkappa = 1.0\nlambda_min = 0.1\nlambda_max = 0.3\nsamples = 3\n";
    ASSERT_EQ(run_text("bifurcate", small_config(out, extra)), kExitOk);
    auto rep = nlohmann::json::parse(slurp(out / "report.json"));
    EXPECT_EQ(rep["verdict"], "no candidate");
    fs::remove_all(out);
}

TEST(Binary, ExitCodes) {
    fs::path out = scratch("binary");
    const std::string bin = FSILAB_CLI_PATH;
    auto status = [](const std::string& cmd) {
        int rc = std::system((cmd + " > /dev/null 2>&1").c_str());
        return WEXITSTATUS(rc);
    };
    fs::path cfg = out / "bad.toml";
    { std::ofstream(cfg) << "[physical]\nnu = 0.0\n"; }
    EXPECT_EQ(status(bin + " steady --config " + cfg.string()), 2);
    EXPECT_EQ(status(bin + " steady"), 2);
    EXPECT_EQ(status(bin + " nosuchcommand --config " + cfg.string()), 2);
    fs::path good = out / "good.toml";
    { std::ofstream(good) << small_config(out / "run", "[sweep]\nlambda = [0]\n"); }
    EXPECT_EQ(status(bin + " mesh --config " + good.string()), 0);
    EXPECT_TRUE(fs::exists(out / "run" / "mesh.vtk"));
    fs::remove_all(out);
}
