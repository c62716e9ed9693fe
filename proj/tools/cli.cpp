#include "cli.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>

#include "flowmixer/archive.hpp"
#include "flowmixer/cfd.hpp"
#include "flowmixer/datagen.hpp"
#include "flowmixer/error.hpp"
#include "flowmixer/metrics.hpp"
#include "flowmixer/model.hpp"
#include "flowmixer/spectral.hpp"
#include "flowmixer/training.hpp"
#include "manifest.hpp"
#include "presets.hpp"

namespace fs = std::filesystem;

namespace flowmixer::cli {

namespace {

using linalg::Matrix;

struct Globals {
    std::uint64_t seed = 0;
    int threads = 1;
    std::string out_dir = ".";
    std::vector<std::string> argv;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
};

struct ConfigOpts {
    std::string preset;
    std::vector<std::string> files;
    std::vector<std::string> sets;
};

void add_config_options(CLI::App* app, ConfigOpts& o) {
    app->add_option("--preset", o.preset, "Built-in configuration (see `flowmixer presets`)");
    app->add_option("--config", o.files, "Config file(s), applied after the preset")->check(CLI::ExistingFile);
    app->add_option("--set", o.sets, "Override as section.key=value, applied last");
}

Config load_config(const ConfigOpts& o) {
    Config c;
    if (!o.preset.empty()) c = preset(o.preset);
    for (const auto& f : o.files) c.merge(Config::load(f));
    for (const auto& s : o.sets) {
        const auto eq = s.find('='), dot = s.find('.');
        if (eq == std::string::npos || dot == std::string::npos || dot > eq)
            throw ConfigError("--set expects section.key=value, got '" + s + "'");
        c.set(s.substr(0, dot), s.substr(dot + 1, eq - dot - 1), s.substr(eq + 1));
    }
    return c;
}

fs::path out_path(const Globals& g, const std::string& name) {
    fs::create_directories(g.out_dir);
    return fs::path(g.out_dir) / name;
}

RunManifest manifest_for(const Globals& g, const std::string& command, const Config& cfg) {
    RunManifest m;
    m.command = command;
    m.argv = g.argv;
    m.config = cfg;
    m.seeds = {g.seed};
    m.start = g.start;
    m.config.set("run", "threads", std::to_string(g.threads));
    m.config.set("run", "out_dir", g.out_dir);
    return m;
}

std::vector<std::string> feature_header(std::size_t n) {
    std::vector<std::string> h(n);
    for (std::size_t j = 0; j < n; ++j) h[j] = "f" + std::to_string(j);
    return h;
}

std::string full(double x) {
    std::ostringstream os;
    os << std::setprecision(17) << x;
    return os.str();
}

datagen::Split parse_split(const std::string& s) {
    if (s == "train") return datagen::Split::train;
    if (s == "val") return datagen::Split::val;
    if (s == "test") return datagen::Split::test;
    throw ConfigError("unknown split '" + s + "' (train, val, test)");
}

std::array<double, 3> ratios_of(const Config& cfg, std::array<double, 3> fallback) {
    const auto r = cfg.get_double_list("data", "ratios");
    if (r.empty()) return fallback;
    if (r.size() != 3) throw ConfigError("data.ratios needs three values");
    return {r[0], r[1], r[2]};
}

// ---------------------------------------------------------------------------
// generate / simulate

struct CylinderRun {
    cfd::SimulationResult result;
    Matrix frames;  // one flattened vorticity frame per row
};

CylinderRun run_cylinder(const cfd::FlowConfig& fc, std::ostream& out) {
    std::vector<double> flat;
    std::size_t count = 0;
    const std::size_t cells = fc.nx * fc.ny;
    const std::size_t report = std::max<std::size_t>(1, fc.steps() / 10);
    CylinderRun run;
    run.result = cfd::simulate(fc, [&](std::size_t step, double time, const Matrix& w) {
        flat.insert(flat.end(), w.data(), w.data() + cells);
        ++count;
        if (step / fc.snapshot_every % std::max<std::size_t>(1, report / fc.snapshot_every) == 0)
            out << "  t = " << time << " (" << count << " frames)\n" << std::flush;
    });
    run.frames = Matrix(count, cells, std::move(flat));
    return run;
}

void save_snapshots(const fs::path& path, const cfd::FlowConfig& fc, const CylinderRun& run) {
    const auto& r = run.result;
    Archive ar;
    ar.put("omega", run.frames);
    ar.put("grid", Matrix{{double(fc.ny), double(fc.nx), fc.dx(), fc.dy()}});
    ar.put("snapshot_times", Matrix(1, r.snapshot_times.size(), r.snapshot_times));
    std::vector<double> steps(r.snapshot_steps.begin(), r.snapshot_steps.end());
    ar.put("snapshot_steps", Matrix(1, steps.size(), steps));
    ar.put("times", Matrix(1, r.times.size(), r.times));
    ar.put("cd", Matrix(1, r.cd.size(), r.cd));
    ar.put("cl", Matrix(1, r.cl.size(), r.cl));
    ar.put("probe", Matrix(1, r.probe.size(), r.probe));
    ar.save(path);
}

void report_flow(const cfd::FlowConfig& fc, const cfd::SimulationResult& r, RunManifest& man, std::ostream& out) {
    out << "max divergence (>= 2 cells from body) " << r.max_divergence << ", max CFL " << r.max_cfl << "\n";
    man.result("max_divergence", r.max_divergence);
    man.result("max_cfl", r.max_cfl);
    if (r.cl.size() < 64) return;
    const std::size_t skip = r.cl.size() / 2;
    const std::vector<double> tail(r.cl.begin() + std::ptrdiff_t(skip), r.cl.end());
    try {
        const double st = metrics::strouhal(tail, fc.dt, fc.u_ref, fc.diameter);
        out << "Strouhal number (second half of the record) " << st << "\n";
        man.result("strouhal", st);
    } catch (const NumericError& e) {
        out << "Strouhal number unavailable: " << e.what() << "\n";
    }
}

int cmd_generate(const Globals& g, const ConfigOpts& co, const std::string& kind, std::string name, bool csv,
                 std::ostream& out) {
    Config cfg = load_config(co);
    if (name.empty()) name = kind;

    if (kind == "cylinder") {
        const auto fc = cfd::FlowConfig::from_config(cfg);
        fc.to_config(cfg);
        out << "simulating " << fc.nx << "x" << fc.ny << " for " << fc.total_time << " time units\n";
        const CylinderRun run = run_cylinder(fc, out);
        auto man = manifest_for(g, "generate cylinder", cfg);
        const fs::path snaps = out_path(g, name + "_snapshots.fmxa"), data = out_path(g, name + ".fmxa");
        save_snapshots(snaps, fc, run);
        const auto scaling = datagen::parse_scaling(cfg.get("data", "scaling", "none"));
        auto ds = datagen::make_dataset(run.frames, scaling, ratios_of(cfg, {0.7, 0.15, 0.15}));
        datagen::save_dataset(data, ds);
        report_flow(fc, run.result, man, out);
        man.add_output(snaps);
        man.add_output(data);
        man.result("frames", double(run.frames.rows()));
        man.result("digest", file_digest(data));
        man.write(out_path(g, name + ".manifest.ini"));
        out << "wrote " << data.string() << " (" << run.frames.rows() << " frames x " << run.frames.cols()
            << " grid points)\n";
        return kOk;
    }

    auto sys = datagen::OdeSystem::make(kind);
    for (const auto& key : cfg.keys("system")) {
        if (!sys.params.count(key)) throw ConfigError("system." + key + " is not a parameter of " + kind);
        sys.params[key] = cfg.get_double("system", key, 0.0);
    }
    const double dt = cfg.get_double("generate", "dt", 0.01);
    const auto steps = cfg.get_int("generate", "steps", 12500);
    const auto transient = cfg.get_int("generate", "transient", 500);
    const auto factor = cfg.get_int("generate", "subsample", 1);
    if (!(dt > 0) || steps <= 0 || transient < 0 || transient >= steps || factor < 1)
        throw ConfigError("generate: need dt > 0, 0 <= transient < steps and subsample >= 1");
    auto x0v = cfg.get_double_list("generate", "x0");
    if (x0v.empty()) x0v = {1.0, 1.0, 1.0};
    if (x0v.size() != 3) throw ConfigError("generate.x0 needs three values");
    datagen::State x0{x0v[0], x0v[1], x0v[2]};
    if (g.seed != 0) {
        // Seeded runs start from a slightly perturbed initial condition.
        std::mt19937_64 rng(g.seed);
        std::normal_distribution<double> jitter(0.0, 1e-3);
        for (double& v : x0) v += jitter(rng);
    }
    Matrix traj = datagen::rk4_integrate(sys, x0, dt, std::size_t(steps), std::size_t(transient));
    if (factor > 1) traj = datagen::subsample(traj, std::size_t(factor));
    const auto scaling = datagen::parse_scaling(cfg.get("data", "scaling", "minmax"));
    auto ds = datagen::make_dataset(traj, scaling, ratios_of(cfg, {0.7, 0.15, 0.15}));

    cfg.set("generate", "system", kind);
    cfg.set("generate", "dt", format_number(dt));
    cfg.set("generate", "steps", std::to_string(steps));
    cfg.set("generate", "transient", std::to_string(transient));
    cfg.set("generate", "subsample", std::to_string(factor));
    cfg.set("generate", "x0", format_number(x0v[0]) + ", " + format_number(x0v[1]) + ", " + format_number(x0v[2]));
    for (const auto& [k, v] : sys.params) cfg.set("system", k, format_number(v));
    cfg.set("data", "scaling", datagen::to_string(scaling));

    const fs::path data = out_path(g, name + ".fmxa");
    datagen::save_dataset(data, ds);
    auto man = manifest_for(g, "generate " + kind, cfg);
    man.add_output(data);
    if (csv) {
        const fs::path p = out_path(g, name + ".csv");
        datagen::write_csv(p, traj, {"x", "y", "z"});
        man.add_output(p);
    }
    const std::string digest = file_digest(data);
    man.result("rows", double(traj.rows()));
    man.result("digest", digest);
    man.write(out_path(g, name + ".manifest.ini"));
    out << "wrote " << data.string() << " (" << traj.rows() << " rows, digest " << digest << ")\n";
    return kOk;
}

int cmd_simulate(const Globals& g, const ConfigOpts& co, const std::string& name, std::ostream& out) {
    Config cfg = load_config(co);
    const auto fc = cfd::FlowConfig::from_config(cfg);
    fc.to_config(cfg);
    out << "simulating " << fc.nx << "x" << fc.ny << " (" << cfd::to_string(fc.bc) << ") for " << fc.total_time
        << " time units\n";
    const CylinderRun run = run_cylinder(fc, out);
    auto man = manifest_for(g, "simulate", cfg);
    const fs::path p = out_path(g, name + ".fmxa");
    save_snapshots(p, fc, run);
    report_flow(fc, run.result, man, out);
    man.add_output(p);
    man.result("frames", double(run.frames.rows()));
    man.write(out_path(g, name + ".manifest.ini"));
    out << "wrote " << p.string() << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// train / predict / eval

struct TrainSetup {
    model::MixerConfig mc;
    training::TrainConfig tc;
    Config cfg;
};

TrainSetup train_setup(const Globals& g, Config cfg, const datagen::SeriesDataset& ds, std::optional<std::size_t> epochs) {
    cfg.set("model", "n_f", std::to_string(ds.features()));
    if (epochs) cfg.set("train", "epochs", std::to_string(*epochs));
    cfg.set("train", "seed", std::to_string(g.seed));
    TrainSetup s{model::MixerConfig::from_config(cfg), training::TrainConfig::from_config(cfg), cfg};
    s.mc.to_config(s.cfg);
    s.tc.to_config(s.cfg);
    return s;
}

int cmd_train(const Globals& g, const ConfigOpts& co, const std::string& data, std::optional<std::size_t> epochs,
              const std::string& name, bool quiet, std::ostream& out) {
    const auto ds = datagen::load_dataset(data);
    auto s = train_setup(g, load_config(co), ds, epochs);
    auto cb = [&](const training::EpochRecord& r) {
        if (quiet) return;
        out << "epoch " << r.epoch << "  train " << r.train_mse << "  val " << r.val_mse << "  lr " << r.lr << "  "
            << std::fixed << std::setprecision(1) << r.seconds << "s" << std::defaultfloat << std::setprecision(6)
            << "\n"
            << std::flush;
    };
    const auto res = training::train(ds, s.mc, s.tc, cb);
    const fs::path dir = out_path(g, name);
    model::save_checkpoint(dir, res.model);
    res.history.write_csv(dir / "history.csv");
    auto man = manifest_for(g, "train", s.cfg);
    man.add_input(data);
    man.add_output(dir);
    man.add_output(dir / "history.csv");
    man.result("best_epoch", double(res.history.best_epoch));
    man.result("best_val_mse", res.history.best_val);
    man.write(dir / "manifest.ini");
    out << "best validation MSE " << full(res.history.best_val) << " at epoch " << res.history.best_epoch << "\n"
        << "checkpoint " << dir.string() << "\n";
    return kOk;
}

struct Forecasts {
    Matrix pred, truth;
};

Forecasts forecast_split(const model::FlowMixer& m, const datagen::SeriesDataset& ds, datagen::Split split,
                         std::size_t k, std::size_t stride) {
    const auto& c = m.config;
    const auto starts = training::split_windows(ds, split, c, stride);
    if (starts.empty()) throw ConfigError("predict: the split has no complete windows");
    const auto mix = model::build_mixing(m.weights, c);
    Forecasts f{Matrix(starts.size() * k, c.n_f), Matrix(starts.size() * k, c.n_f)};
    for (std::size_t w = 0; w < starts.size(); ++w) {
        const auto win = training::make_window(ds.data, starts[w], c);
        const Matrix p = model::forecast_block(model::forward_with(win.x, m, mix), c);
        const Matrix t = model::forecast_block(win.target, c);
        for (std::size_t r = 0; r < k; ++r)
            for (std::size_t j = 0; j < c.n_f; ++j) {
                f.pred(w * k + r, j) = p(r, j);
                f.truth(w * k + r, j) = t(r, j);
            }
    }
    return f;
}

int cmd_predict(const Globals& g, const std::string& ckpt, const std::string& data, const std::string& split_name,
                std::size_t horizon, std::size_t stride, bool raw, const std::string& name, std::ostream& out) {
    const auto m = model::load_checkpoint(ckpt);
    const auto ds = datagen::load_dataset(data);
    if (ds.features() != m.config.n_f)
        throw DimensionError("predict: dataset has " + std::to_string(ds.features()) + " features, model expects " +
                             std::to_string(m.config.n_f));
    const std::size_t k = horizon ? horizon : m.config.horizon;
    if (k > m.config.horizon)
        throw ConfigError("predict: horizon " + std::to_string(k) + " exceeds the model horizon " +
                          std::to_string(m.config.horizon));
    auto f = forecast_split(m, ds, parse_split(split_name), k, stride);
    const double mse = metrics::mse(f.pred, f.truth);
    if (raw) f.pred = ds.inverse_scale(f.pred), f.truth = ds.inverse_scale(f.truth);
    const fs::path pp = out_path(g, name + ".csv"), tp = out_path(g, name + "_truth.csv");
    datagen::write_csv(pp, f.pred, feature_header(m.config.n_f));
    datagen::write_csv(tp, f.truth, feature_header(m.config.n_f));
    Config cfg;
    m.config.to_config(cfg);
    cfg.set("predict", "split", split_name);
    cfg.set("predict", "horizon", std::to_string(k));
    cfg.set("predict", "stride", std::to_string(stride));
    cfg.set("predict", "raw", raw ? "true" : "false");
    auto man = manifest_for(g, "predict", cfg);
    man.add_input(ckpt);
    man.add_input(data);
    man.add_output(pp);
    man.add_output(tp);
    man.result("mse_scaled", mse);
    man.write(out_path(g, name + ".manifest.ini"));
    out << "forecast rows " << f.pred.rows() << ", MSE (scaled units) " << full(mse) << "\nwrote " << pp.string()
        << " and " << tp.string() << "\n";
    return kOk;
}

int cmd_eval(const Globals& g, const std::string& pred_path, const std::string& truth_path, bool corrdim,
             const std::string& name, std::ostream& out) {
    const Matrix pred = datagen::load_csv(pred_path), truth = datagen::load_csv(truth_path);
    std::vector<std::pair<std::string, double>> rows{{"mse", metrics::mse(pred, truth)},
                                                     {"mae", metrics::mae(pred, truth)},
                                                     {"rows", double(pred.rows())},
                                                     {"cols", double(pred.cols())}};
    if (corrdim) {
        const auto dp = metrics::correlation_dimension(pred), dt = metrics::correlation_dimension(truth);
        rows.push_back({"d2_pred", dp.d2});
        rows.push_back({"d2_truth", dt.d2});
        rows.push_back({"d2_ratio", dp.d2 / dt.d2});
    }
    const fs::path p = out_path(g, name + ".csv");
    {
        std::ofstream f(p, std::ios::trunc);
        if (!f) throw ConfigError("cannot write " + p.string());
        f << "metric,value\n" << std::setprecision(17);
        for (const auto& [k, v] : rows) f << k << ',' << v << '\n';
    }
    Config cfg;
    cfg.set("eval", "corrdim", corrdim ? "true" : "false");
    auto man = manifest_for(g, "eval", cfg);
    man.add_input(pred_path);
    man.add_input(truth_path);
    man.add_output(p);
    for (const auto& [k, v] : rows) {
        man.result(k, v);
        out << std::left << std::setw(10) << k << full(v) << "\n";
    }
    man.write(out_path(g, name + ".manifest.ini"));
    return kOk;
}

// ---------------------------------------------------------------------------
// modes / morph

struct WindowState {
    model::FlowMixer m;
    Matrix x;
    model::Trace trace;
    spectral::KKSpectrum spectrum;
};

WindowState analyse_window(const std::string& ckpt, const std::string& data, const std::string& split,
                           std::size_t index) {
    WindowState s{model::load_checkpoint(ckpt), {}, {}, {}};
    const auto ds = datagen::load_dataset(data);
    const auto& c = s.m.config;
    if (ds.features() != c.n_f) throw DimensionError("dataset feature count differs from the model");
    const auto starts = training::split_windows(ds, parse_split(split), c, 1);
    if (index >= starts.size())
        throw ConfigError("window index " + std::to_string(index) + " out of range (" + std::to_string(starts.size()) +
                          " windows)");
    s.x = training::make_window(ds.data, starts[index], c).x;
    const auto mix = model::build_mixing(s.m.weights, c);
    model::forward_with(s.x, s.m, mix, {}, &s.trace);
    const Matrix wt = mix.wt_identity ? Matrix::identity(c.time_dim()) : mix.wt;
    const Matrix wf = mix.wf_identity ? Matrix::identity(c.feature_dim()) : mix.wf;
    s.spectrum = spectral::kk_decompose(wt, wf);
    return s;
}

int cmd_modes(const Globals& g, const std::string& ckpt, const std::string& data, const std::string& split,
              std::size_t index, const std::string& name, std::ostream& out) {
    const auto s = analyse_window(ckpt, data, split, index);
    const auto modes = spectral::project(s.trace.mixed_in, s.spectrum);
    const fs::path stem = out_path(g, name);
    spectral::export_modes(stem, s.spectrum, modes);
    const auto rep = spectral::stability_report(s.spectrum);
    Config cfg;
    s.m.config.to_config(cfg);
    cfg.set("modes", "split", split);
    cfg.set("modes", "window", std::to_string(index));
    auto man = manifest_for(g, "modes", cfg);
    man.add_input(ckpt);
    man.add_input(data);
    man.add_output(stem.string() + ".fmxa");
    man.add_output(stem.string() + ".csv");
    man.result("spectral_radius_time", rep.spectral_radius_time);
    man.result("spectral_radius_feature", rep.spectral_radius_feature);
    man.result("max_product_modulus", rep.max_product_modulus);
    man.result("modes", double(s.spectrum.time_dim() * s.spectrum.feature_dim()));
    man.write(out_path(g, name + ".manifest.ini"));
    out << "modes " << s.spectrum.time_dim() << " x " << s.spectrum.feature_dim() << "\n"
        << "spectral radius W_t " << rep.spectral_radius_time << ", W_f " << rep.spectral_radius_feature
        << ", max |mu lam| " << rep.max_product_modulus << (rep.inside_unit_circle ? " (inside unit circle)" : "")
        << "\nwrote " << stem.string() << ".csv\n";
    return kOk;
}

int cmd_morph(const Globals& g, const std::string& ckpt, const std::string& data, const std::string& split,
              std::size_t index, const std::vector<double>& ts, const std::string& name, std::ostream& out) {
    const auto s = analyse_window(ckpt, data, split, index);
    const auto& c = s.m.config;
    Config cfg;
    c.to_config(cfg);
    cfg.set("morph", "split", split);
    cfg.set("morph", "window", std::to_string(index));
    auto man = manifest_for(g, "morph", cfg);
    man.add_input(ckpt);
    man.add_input(data);
    for (double t : ts) {
        double imag = 0;
        const Matrix y = spectral::morph_horizon(s.trace.mixed_in, s.spectrum, t, &imag);
        const Matrix z = s.m.sobr ? model::sobr_invert(y, *s.m.sobr) : y;
        const Matrix full_out = model::revin_invert(z, s.trace.stats, s.m.weights, c);
        const Matrix fc = model::forecast_block(full_out, c);
        const fs::path p = out_path(g, name + "_t" + format_number(t) + ".csv");
        datagen::write_csv(p, fc, feature_header(c.n_f));
        man.add_output(p);
        man.result("imag_residue_t" + format_number(t), imag);
        out << "t = " << t << ": wrote " << p.string() << " (discarded imaginary part " << imag << ")\n";
    }
    man.write(out_path(g, name + ".manifest.ini"));
    return kOk;
}

// ---------------------------------------------------------------------------
// ablate

struct Variant {
    const char* label;
    const char* key;
    const char* value;
};

constexpr Variant kVariants[] = {
    {"FlowMixer", nullptr, nullptr},
    {"w/o RevIN", "revin", "identity"},
    {"w/o Feature Mixing", "feature_mix", "false"},
    {"w/o Time Mixing", "time_mix", "false"},
    {"w/o Positive Time Mixing", "positivity", "false"},
    {"w/o Static Attention", "static_attention", "false"},
    {"w/o Adaptive Skip Connection", "skip", "false"},
};

int cmd_ablate(const Globals& g, const ConfigOpts& co, const std::string& data, std::size_t seeds,
               std::optional<std::size_t> epochs, const std::string& name, std::ostream& out) {
    if (seeds == 0) throw ConfigError("ablate: --seeds must be at least 1");
    const auto ds = datagen::load_dataset(data);
    const Config base = load_config(co);
    const fs::path p = out_path(g, name + ".csv");
    std::ofstream f(p, std::ios::trunc);
    if (!f) throw ConfigError("cannot write " + p.string());
    f << "variant,mean_mse,std_mse";
    for (std::size_t s = 0; s < seeds; ++s) f << ",seed_" << g.seed + s;
    f << '\n' << std::setprecision(17);

    Config snapshot;
    std::vector<std::uint64_t> seed_list;
    for (std::size_t s = 0; s < seeds; ++s) seed_list.push_back(g.seed + s);
    out << std::left << std::setw(32) << "variant" << "test MSE (mean +- std over " << seeds << " seeds)\n";
    for (const auto& v : kVariants) {
        std::vector<double> mses;
        for (auto seed : seed_list) {
            Config cfg = base;
            if (v.key) cfg.set("model", v.key, v.value);
            Globals gs = g;
            gs.seed = seed;
            auto st = train_setup(gs, cfg, ds, epochs);
            if (!v.key) snapshot = st.cfg;
            const auto res = training::train(ds, st.mc, st.tc);
            mses.push_back(training::evaluate(res.model, ds.data,
                                              training::split_windows(ds, datagen::Split::test, st.mc, 1)));
        }
        const double mean = std::accumulate(mses.begin(), mses.end(), 0.0) / double(mses.size());
        double var = 0;
        for (double x : mses) var += (x - mean) * (x - mean);
        const double sd = mses.size() > 1 ? std::sqrt(var / double(mses.size() - 1)) : 0.0;
        f << '"' << v.label << "\"," << mean << ',' << sd;
        for (double x : mses) f << ',' << x;
        f << '\n' << std::flush;
        out << std::left << std::setw(32) << v.label << std::fixed << std::setprecision(4) << mean << " +- " << sd
            << std::defaultfloat << std::setprecision(6) << "\n"
            << std::flush;
    }
    auto man = manifest_for(g, "ablate", snapshot);
    man.seeds = seed_list;
    man.add_input(data);
    man.add_output(p);
    man.write(out_path(g, name + ".manifest.ini"));
    out << "wrote " << p.string() << "\n";
    return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"FlowMixer forecasting, spectral analysis, chaos and flow data generation"};
    app.require_subcommand(1);
    Globals g;
    for (int i = 0; i < argc; ++i) g.argv.emplace_back(argv[i]);
    app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
    app.add_option("--threads", g.threads, "Eigen worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--out-dir", g.out_dir, "Directory for every artifact")->capture_default_str();

    ConfigOpts co;
    std::string kind, name, data, ckpt, split = "test", pred, truth;
    bool csv = false, raw = false, quiet = false, corrdim = false;
    std::size_t horizon = 0, stride = 1, window = 0, seeds = 3, epochs_value = 0;
    std::vector<double> ts{1.0};

    auto* gen = app.add_subcommand("generate", "Generate a chaotic trajectory or cylinder-flow dataset");
    gen->add_option("kind", kind, "lorenz | rossler | aizawa | cylinder")
        ->required()
        ->check(CLI::IsMember({"lorenz", "rossler", "aizawa", "cylinder"}));
    add_config_options(gen, co);
    gen->add_option("--name", name, "Output file stem (default: kind)");
    gen->add_flag("--csv", csv, "Also write the raw trajectory as CSV");

    auto* sim = app.add_subcommand("simulate", "Run the cylinder-flow solver and store vorticity snapshots");
    add_config_options(sim, co);
    sim->add_option("--name", name, "Output file stem (default: flow)");

    auto* tr = app.add_subcommand("train", "Train a model on a dataset archive");
    tr->add_option("--data", data, "Dataset archive")->required()->check(CLI::ExistingFile);
    add_config_options(tr, co);
    auto* epochs_opt = tr->add_option("--epochs", epochs_value, "Override the epoch limit");
    tr->add_option("--name", name, "Checkpoint directory name (default: checkpoint)");
    tr->add_flag("--quiet", quiet, "No per-epoch output");

    auto* pr = app.add_subcommand("predict", "Forecast every window of a split");
    pr->add_option("--checkpoint", ckpt, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
    pr->add_option("--data", data, "Dataset archive")->required()->check(CLI::ExistingFile);
    pr->add_option("--split", split, "train | val | test")->capture_default_str();
    pr->add_option("--horizon", horizon, "Keep forecast rows 1..h (default: model horizon)");
    pr->add_option("--stride", stride, "Window stride")->check(CLI::PositiveNumber)->capture_default_str();
    pr->add_flag("--raw", raw, "Write values in the original units");
    pr->add_option("--name", name, "Output stem (default: forecast)");

    auto* ev = app.add_subcommand("eval", "Compare a forecast CSV with its truth");
    ev->add_option("--pred", pred, "Forecast CSV")->required()->check(CLI::ExistingFile);
    ev->add_option("--truth", truth, "Ground-truth CSV")->required()->check(CLI::ExistingFile);
    ev->add_flag("--corrdim", corrdim, "Also compare correlation dimensions (needs >= 200 rows)");
    ev->add_option("--name", name, "Output stem (default: metrics)");

    auto* mo = app.add_subcommand("modes", "Export the Kronecker-Koopman modes of one window");
    auto* mp = app.add_subcommand("morph", "Forecast one window at rescaled horizons");
    for (auto* sc : {mo, mp}) {
        sc->add_option("--checkpoint", ckpt, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
        sc->add_option("--data", data, "Dataset archive")->required()->check(CLI::ExistingFile);
        sc->add_option("--split", split, "train | val | test")->capture_default_str();
        sc->add_option("--window", window, "Window index within the split")->capture_default_str();
    }
    mo->add_option("--name", name, "Output stem (default: modes)");
    mp->add_option("--t", ts, "Horizon scale factors, e.g. --t 0.5 1 2")->capture_default_str();
    mp->add_option("--name", name, "Output stem (default: morph)");

    auto* ab = app.add_subcommand("ablate", "Train the ablation variants over several seeds");
    ab->add_option("--data", data, "Dataset archive")->required()->check(CLI::ExistingFile);
    add_config_options(ab, co);
    ab->add_option("--seeds", seeds, "Number of seeds (consecutive from --seed)")->capture_default_str();
    auto* ab_epochs = ab->add_option("--epochs", epochs_value, "Override the epoch limit");
    ab->add_option("--name", name, "Output stem (default: ablation)");

    auto* ps = app.add_subcommand("presets", "List the built-in configurations, or print one");
    std::string show;
    ps->add_option("name", show, "Preset to print");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        Eigen::setNbThreads(g.threads);
        g.start = std::chrono::steady_clock::now();
        auto epochs = [](CLI::Option* o, std::size_t v) {
            return o->count() ? std::optional<std::size_t>(v) : std::nullopt;
        };
        auto stem = [&](const char* fallback) { return name.empty() ? std::string(fallback) : name; };
        if (*gen) return cmd_generate(g, co, kind, name, csv, out);
        if (*sim) return cmd_simulate(g, co, stem("flow"), out);
        if (*tr) return cmd_train(g, co, data, epochs(epochs_opt, epochs_value), stem("checkpoint"), quiet, out);
        if (*pr) return cmd_predict(g, ckpt, data, split, horizon, stride, raw, stem("forecast"), out);
        if (*ev) return cmd_eval(g, pred, truth, corrdim, stem("metrics"), out);
        if (*mo) return cmd_modes(g, ckpt, data, split, window, stem("modes"), out);
        if (*mp) return cmd_morph(g, ckpt, data, split, window, ts, stem("morph"), out);
        if (*ab) return cmd_ablate(g, co, data, seeds, epochs(ab_epochs, epochs_value), stem("ablation"), out);
        if (*ps) {
            if (show.empty())
                for (const auto& n : preset_names()) out << n << "\n";
            else
                out << preset(show).to_string();
            return kOk;
        }
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const DimensionError& e) {
        err << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const NumericError& e) {
        err << "numeric failure: " << e.what() << "\n";
        return kNumericError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kFailure;
}

}  // namespace flowmixer::cli
