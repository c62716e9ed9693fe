#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "flowmixer/config.hpp"
#include "flowmixer/datagen.hpp"
#include "flowmixer/metrics.hpp"
#include "flowmixer/model.hpp"
#include "flowmixer/training.hpp"
#include "manifest.hpp"
#include "presets.hpp"

using namespace flowmixer;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run flowmixer_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "flowmixer");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(int(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("flowmixer_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

const std::vector<std::string> kSmallData = {"--set", "generate.steps=3000", "--set", "generate.transient=100"};
const std::vector<std::string> kSmallModel = {
    "--set", "model.input_len=16", "--set", "model.h=8",      "--set", "train.batch=16",
    "--set", "train.epochs=3",     "--set", "train.optim=AdamW", "--set", "train.init_lr=3e-3"};

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

// Generates a small Lorenz dataset and trains a model on it; returns the directory.
fs::path trained(const std::string& name) {
    const fs::path dir = scratch(name);
    const std::string d = dir.string();
    REQUIRE(flowmixer_cli(cat({"--out-dir", d, "generate", "lorenz"}, kSmallData)).code == cli::kOk);
    const auto r = flowmixer_cli(cat({"--out-dir", d, "train", "--quiet", "--data", d + "/lorenz.fmxa"}, kSmallModel));
    REQUIRE_MESSAGE(r.code == cli::kOk, r.err);
    return dir;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit with the config code") {
    CHECK(flowmixer_cli({}).code == cli::kConfigError);
    CHECK(flowmixer_cli({"generate", "henon"}).code == cli::kConfigError);
    CHECK(flowmixer_cli({"frobnicate"}).code == cli::kConfigError);
    CHECK(flowmixer_cli({"--help"}).code == cli::kOk);

    const std::string d = scratch("usage").string();
    CHECK(flowmixer_cli({"--out-dir", d, "generate", "lorenz", "--preset", "nope"}).code == cli::kConfigError);
    CHECK(flowmixer_cli({"--out-dir", d, "generate", "lorenz", "--set", "novalue"}).code == cli::kConfigError);
    CHECK(flowmixer_cli({"--out-dir", d, "generate", "lorenz", "--set", "system.omega=1"}).code == cli::kConfigError);
    CHECK(flowmixer_cli({"--out-dir", d, "generate", "lorenz", "--set", "generate.dt=-1"}).code == cli::kConfigError);
}

TEST_CASE("numeric failure exits with code 3") {
    const std::string d = scratch("numeric").string();
    const auto r = flowmixer_cli({"--out-dir", d, "simulate", "--set", "cfd.nx=64", "--set", "cfd.ny=32", "--set",
                                  "cfd.dt=0.5", "--set", "cfd.total_time=5"});
    CHECK(r.code == cli::kNumericError);
    CHECK(r.err.find("numeric") != std::string::npos);
}

TEST_CASE("generate is deterministic per seed") {
    const fs::path dir = scratch("digest");
    const std::string d = dir.string();
    auto digest_of = [&](const std::string& seed, const std::string& name) {
        const auto r = flowmixer_cli(cat({"--seed", seed, "--out-dir", d, "generate", "rossler", "--name", name}, kSmallData));
        REQUIRE(r.code == cli::kOk);
        const auto man = Config::load(dir / (name + ".manifest.ini"));
        CHECK(man.get("result", "digest") == cli::file_digest(dir / (name + ".fmxa")));
        return man.get("result", "digest");
    };
    const auto a = digest_of("0", "a"), b = digest_of("0", "b"), c = digest_of("7", "c"), e = digest_of("7", "e");
    CHECK(a == b);
    CHECK(c == e);
    CHECK(a != c);

    // The manifest is itself a config that reproduces the run.
    const auto again = flowmixer_cli({"--out-dir", d, "generate", "rossler", "--name", "r", "--config", (dir / "a.manifest.ini").string()});
    REQUIRE(again.code == cli::kOk);
    CHECK(Config::load(dir / "r.manifest.ini").get("result", "digest") == a);
}

TEST_CASE("csv export matches the archive") {
    const fs::path dir = scratch("csv");
    REQUIRE(flowmixer_cli(cat({"--out-dir", dir.string(), "generate", "aizawa", "--csv"}, kSmallData)).code == cli::kOk);
    const auto raw = datagen::load_csv(dir / "aizawa.csv");
    const auto ds = datagen::load_dataset(dir / "aizawa.fmxa");
    CHECK(raw.rows() == 2900);
    CHECK(linalg::max_abs_diff(raw, ds.raw) == 0.0);
}

TEST_CASE("presets map to valid configurations") {
    for (const char* ds : {"etth1", "etth2", "ettm1", "ettm2", "weather", "electricity", "traffic"})
        for (int h : {96, 192, 336, 720}) {
            const std::string name = std::string(ds) + "_h" + std::to_string(h);
            REQUIRE_MESSAGE(cli::has_preset(name), name);
            Config c = cli::preset(name);
            c.set("model", "n_f", "7");
            const auto mc = model::MixerConfig::from_config(c);
            CHECK(mc.horizon == std::size_t(h));
            CHECK_NOTHROW(training::TrainConfig::from_config(c));
        }
    for (const auto& name : cli::preset_names()) {
        Config c = cli::preset(name);
        c.set("model", "n_f", "3");
        CHECK_NOTHROW(model::MixerConfig::from_config(c));
        CHECK_NOTHROW(training::TrainConfig::from_config(c));
    }
    const auto chaos = cli::preset("chaos_default");
    CHECK(chaos.get("model", "sobr_time_dim") == "1024");
    CHECK(chaos.get("train", "optim") == "AdamW");
    CHECK(cli::preset("cylinder_default").get("cfd", "nx") == "400");
    CHECK_THROWS_AS(cli::preset("etth1_h100"), ConfigError);
}

TEST_CASE("predict then eval reproduces the forecast MSE") {
    const fs::path dir = trained("predict");
    const std::string d = dir.string();
    const auto p = flowmixer_cli({"--out-dir", d, "predict", "--checkpoint", d + "/checkpoint", "--data", d + "/lorenz.fmxa"});
    REQUIRE(p.code == cli::kOk);
    const double mse_pred = Config::load(dir / "forecast.manifest.ini").get_double("result", "mse_scaled", -1);
    const auto e = flowmixer_cli({"--out-dir", d, "eval", "--pred", d + "/forecast.csv", "--truth", d + "/forecast_truth.csv"});
    REQUIRE(e.code == cli::kOk);
    const double mse_eval = Config::load(dir / "metrics.manifest.ini").get_double("result", "mse", -2);
    CHECK(std::abs(mse_eval - mse_pred) < 1e-9);

    // Same number straight from the library.
    const auto m = model::load_checkpoint(dir / "checkpoint");
    const auto ds = datagen::load_dataset(dir / "lorenz.fmxa");
    const double lib = training::evaluate(m, ds.data, training::split_windows(ds, datagen::Split::test, m.config, 1));
    CHECK(std::abs(lib - mse_pred) < 1e-9);

    // Shorter horizon keeps the leading rows; raw output undoes the scaling.
    REQUIRE(flowmixer_cli({"--out-dir", d, "predict", "--checkpoint", d + "/checkpoint", "--data", d + "/lorenz.fmxa",
                           "--horizon", "3", "--raw", "--name", "short"})
                .code == cli::kOk);
    const auto full = datagen::load_csv(dir / "forecast.csv"), shrt = datagen::load_csv(dir / "short.csv");
    REQUIRE(shrt.rows() * 8 == full.rows() * 3);
    const auto back = ds.apply_scale(shrt);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t j = 0; j < 3; ++j) CHECK(back(r, j) == doctest::Approx(full(r, j)).epsilon(1e-9));
    CHECK(flowmixer_cli({"--out-dir", d, "predict", "--checkpoint", d + "/checkpoint", "--data", d + "/lorenz.fmxa",
                         "--horizon", "9"})
              .code == cli::kConfigError);
}

TEST_CASE("modes and morph") {
    const fs::path dir = trained("modes");
    const std::string d = dir.string();
    const std::vector<std::string> src = {"--checkpoint", d + "/checkpoint", "--data", d + "/lorenz.fmxa", "--window", "5"};
    REQUIRE(flowmixer_cli(cat({"--out-dir", d, "modes"}, src)).code == cli::kOk);
    std::ifstream f(dir / "modes.csv");
    std::size_t lines = 0;
    for (std::string s; std::getline(f, s);) ++lines;
    CHECK(lines == 1 + 16 * 3);

    REQUIRE(flowmixer_cli(cat({"--out-dir", d, "morph", "--t", "1", "2"}, src)).code == cli::kOk);
    REQUIRE(flowmixer_cli({"--out-dir", d, "predict", "--checkpoint", d + "/checkpoint", "--data", d + "/lorenz.fmxa"}).code ==
            cli::kOk);
    const auto morph = datagen::load_csv(dir / "morph_t1.csv"), pred = datagen::load_csv(dir / "forecast.csv");
    REQUIRE(morph.rows() == 8);
    for (std::size_t r = 0; r < 8; ++r)
        for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(morph(r, j) - pred(5 * 8 + r, j)) < 1e-6);
    CHECK(fs::exists(dir / "morph_t2.csv"));
    CHECK(flowmixer_cli(cat({"--out-dir", d, "modes", "--window", "100000"}, {"--checkpoint", d + "/checkpoint", "--data", d + "/lorenz.fmxa"})).code ==
          cli::kConfigError);
}

TEST_CASE("ablation table") {
    const fs::path dir = trained("ablate");
    const std::string d = dir.string();
    const auto r = flowmixer_cli(cat({"--out-dir", d, "ablate", "--data", d + "/lorenz.fmxa", "--seeds", "2", "--epochs", "1"}, kSmallModel));
    REQUIRE_MESSAGE(r.code == cli::kOk, r.err);
    std::ifstream f(dir / "ablation.csv");
    std::vector<std::string> rows;
    for (std::string s; std::getline(f, s);) rows.push_back(s);
    REQUIRE(rows.size() == 8);
    CHECK(rows[0] == "variant,mean_mse,std_mse,seed_0,seed_1");
    CHECK(rows[1].rfind("\"FlowMixer\",", 0) == 0);
    CHECK(rows[7].rfind("\"w/o Adaptive Skip Connection\",", 0) == 0);
}

}  // TEST_SUITE
