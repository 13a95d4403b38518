#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "hamsplit/cli.hpp"
#include "hamsplit/config.hpp"

using namespace hamsplit;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& tag) {
    const fs::path p = fs::temp_directory_path() / ("hamsplit-cfg-" + tag + "-" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string first_line(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    return line;
}

void expect_config_error(const std::string& text, const std::string& fragment) {
    try {
        (void)parse_config_text(text);
        ADD_FAILURE() << "accepted: " << text;
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
    }
}

// Short-horizon configuration that keeps the reference cheap.
ExperimentConfig quick_config(ModelId model, const fs::path& out) {
    ExperimentConfig c = default_config(model);
    c.T = 1.0;
    c.h_ref = std::ldexp(1.0, -13);
    c.h_ladder = {std::ldexp(1.0, -5), std::ldexp(1.0, -6)};
    c.energy_h = std::ldexp(1.0, -6);
    c.output_dir = out;
    validate(c);
    return c;
}

int run_cli(const std::string& args, const fs::path& err_file) {
    const std::string cmd = std::string(HAMSPLIT_CLI) + " " + args + " >/dev/null 2>" + err_file.string();
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(Config, EmptyObjectGivesKleinGordonDefaults) {
    const ExperimentConfig c = parse_config_text("{}");
    const models::KleinGordonParams kp;
    EXPECT_EQ(c.model, ModelId::klein_gordon);
    EXPECT_EQ(c.params.at("gamma"), kp.gamma);
    EXPECT_EQ(c.params.at("omega"), kp.omega);
    EXPECT_EQ(c.grid.N, 20);
    EXPECT_EQ(c.T, 50.0);
    EXPECT_EQ(c.sav_shift_C, 10.0);
    EXPECT_EQ(c.h_ladder, (std::vector<double>{1.0 / 32, 1.0 / 64, 1.0 / 128, 1.0 / 256}));
    EXPECT_EQ(c.methods.size(), 8u);
    EXPECT_EQ(c.experiments.size(), 4u);
}

TEST(Config, ModelDefaults) {
    const auto g = parse_config_text(R"({"model": "gkdv"})");
    EXPECT_EQ(g.h_ladder.front(), 1.0 / 64);
    for (MethodId m : g.methods) EXPECT_TRUE(is_splitting(m)) << to_string(m);
    const auto f = parse_config_text(R"({"model": "afpu", "formulation": "dissipative"})");
    ASSERT_TRUE(f.formulation.has_value());
    EXPECT_EQ(*f.formulation, models::FpuFormulation::dissipative);
    EXPECT_EQ(build_problem(f).system.name, "afpu_dissipative");
}

TEST(Config, Rejections) {
    expect_config_error(R"({"model": "gkdv", "methods": ["avf"]})", "not applicable");
    expect_config_error(R"({"h_ladder": [0.3]})", "does not divide");
    expect_config_error(R"({"bogus": 1})", "bogus");
    expect_config_error(R"({"params": {"nu": 1}})", "nu");
    expect_config_error(R"({"model": "heat"})", "unknown model");
    expect_config_error(R"({"methods": ["rk4"]})", "rk4");
    expect_config_error(R"({"formulation": "dissipative"})", "afpu");
    expect_config_error(R"({"T": -1})", "T");
    expect_config_error(R"({"h_ref": 0.3})", "h_ref");
    expect_config_error(R"({"model": "gkdv", "params": {"k": 2.5}})", "k");
    expect_config_error(R"({"controls": {"newton_tol": 0}})", "controls");
    expect_config_error("{not json", "");
}

TEST(Config, SerializeIsIdempotent) {
    for (const char* text : {"{}", R"({"model": "afpu", "T": 10})", R"({"model": "gkdv", "methods": ["seisav"]})"}) {
        const std::string once = serialize(parse_config_text(text));
        EXPECT_EQ(serialize(parse_config_text(once)), once) << text;
    }
}

TEST(Config, ParamsReachTheModel) {
    const auto c = parse_config_text(R"({"params": {"gamma": 0.0}, "sav_shift_C": 25})");
    const auto p = build_problem(c);
    EXPECT_TRUE(p.system.damping.at(0.0).isZero());
    EXPECT_EQ(p.system.sav_shift, 25.0);
}

TEST(Config, SampleFilesParse) {
    const fs::path dir = fs::path(HAMSPLIT_SOURCE_DIR) / "samples";
    int seen = 0;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().extension() != ".json") continue;
        EXPECT_NO_THROW((void)parse_config_file(e.path())) << e.path();
        ++seen;
    }
    EXPECT_GE(seen, 3);
}

TEST(Cli, VerifyCertifiesKleinGordon) {
    const fs::path out = scratch("verify");
    cli::Session s(quick_config(ModelId::klein_gordon, out));
    std::ostringstream log;
    EXPECT_EQ(cli::cmd_verify(s, log), 0) << log.str();
    const auto report = nlohmann::json::parse(slurp(out / "verify.json"));
    ASSERT_TRUE(report.is_array());
    int required = 0;
    for (const auto& item : report) {
        if (item.at("required").get<bool>()) {
            ++required;
            EXPECT_TRUE(item.at("is_psd").get<bool>()) << item.dump();
        }
    }
    EXPECT_EQ(required, 4);
    fs::remove_all(out);
}

TEST(Cli, RunWritesEveryArtifact) {
    const fs::path out = scratch("run");
    ::setenv("HAMSPLIT_CACHE_DIR", (out / "cache").c_str(), 1);
    auto cfg = quick_config(ModelId::klein_gordon, out);
    cfg.methods = {MethodId::seisav, MethodId::seilm, MethodId::avf};
    cli::write_config_snapshot(cfg);
    cli::Session s(cfg);
    std::ostringstream log;
    EXPECT_EQ(cli::cmd_run(s, log), 0) << log.str();
    EXPECT_EQ(first_line(out / "convergence.csv"), "method,h,error,observed_order");
    EXPECT_EQ(first_line(out / "efficiency.csv"), "method,h,error,wall_time_s,fp_iters,newton_iters");
    EXPECT_EQ(first_line(out / "energy_errors.csv"), "method,t,E_H");
    EXPECT_EQ(first_line(out / "trajectory_seisav.csv"), "step,t,H,aux_energy");
    for (const char* f : {"convergence.svg", "efficiency.svg", "energy.svg", "energy_error.svg", "verify.json",
                          "config.json", "energy_monotonicity.csv"}) {
        EXPECT_TRUE(fs::exists(out / f)) << f;
    }
    EXPECT_EQ(serialize(parse_config_file(out / "config.json")), serialize(cfg));
    EXPECT_FALSE(fs::is_empty(out / "cache"));
    ::unsetenv("HAMSPLIT_CACHE_DIR");
    fs::remove_all(out);
}

TEST(Cli, BinaryExitCodes) {
    const fs::path out = scratch("bin");
    const fs::path err = out / "stderr.txt";
    EXPECT_EQ(run_cli("verify --model gkdv --methods avf --out " + out.string(), err), 2);
    const std::string msg = slurp(err);
    EXPECT_NE(msg.find("\"status\":\"error\""), std::string::npos) << msg;
    EXPECT_NE(msg.find("not applicable"), std::string::npos) << msg;
    EXPECT_EQ(run_cli("verify --h-ladder 0.3 --out " + out.string(), err), 2);
    EXPECT_EQ(run_cli("verify --config " + (out / "missing.json").string(), err), 2);
    EXPECT_EQ(run_cli("verify --model klein_gordon --T 1 --h-ref 0.00048828125 --h-ladder 2^-5,2^-6 --out " + out.string(), err),
              0)
        << slurp(err);
    EXPECT_TRUE(fs::exists(out / "verify.json"));
    fs::remove_all(out);
}
