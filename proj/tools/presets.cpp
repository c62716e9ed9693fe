#include "presets.hpp"

#include <algorithm>
#include <cctype>

#include "flowmixer/error.hpp"

namespace flowmixer::cli {

namespace {

struct Row {
    const char* dataset;
    int h;
    int input_len;
    int batch;
    const char* optim;
    const char* lr;
    const char* wd;
    const char* revin;
    bool expm;
    const char* periods;
};

// Hyperparameter table, one entry per (dataset, horizon).
constexpr Row kRows[] = {
    {"ETTh1", 96, 1344, 16, "SGD", "1e-1", "1e-6", "RevIN", true, "24, 168"},
    {"ETTh1", 192, 1344, 16, "SGD", "1e-1", "1e-6", "RevIN", true, "24, 168"},
    {"ETTh1", 336, 1344, 16, "SGD", "1e-1", "1e-6", "RevIN", true, "24, 168"},
    {"ETTh1", 720, 1344, 16, "SGD", "1e-1", "1e-6", "RevIN", true, "24, 168"},
    {"ETTh2", 96, 1344, 16, "SGD", "1e-1", "1e-5", "RevIN", false, "-"},
    {"ETTh2", 192, 1344, 16, "SGD", "1e-1", "1e-5", "RevIN", false, "-"},
    {"ETTh2", 336, 1344, 16, "SGD", "1e-1", "1e-5", "RevIN", true, "24, 168"},
    {"ETTh2", 720, 1344, 16, "SGD", "1e-1", "1e-5", "RevIN", true, "24, 168"},
    {"ETTm1", 96, 1344, 16, "AdamW", "1e-3", "1e-6", "TD-RevIN", false, "-"},
    {"ETTm1", 192, 1344, 16, "AdamW", "1e-3", "1e-6", "TD-RevIN", true, "96, 672"},
    {"ETTm1", 336, 1344, 16, "AdamW", "1e-3", "1e-6", "TD-RevIN", true, "96, 672"},
    {"ETTm1", 720, 1344, 16, "AdamW", "1e-3", "1e-6", "TD-RevIN", true, "96, 672"},
    {"ETTm2", 96, 1344, 16, "SGD", "1e-1", "1e-6", "RevIN", false, "-"},
    {"ETTm2", 192, 1344, 16, "SGD", "1e-1", "1e-6", "RevIN", false, "-"},
    {"ETTm2", 336, 1344, 16, "SGD", "1e-1", "1e-6", "RevIN", false, "-"},
    {"ETTm2", 720, 1344, 16, "SGD", "1e-1", "1e-6", "RevIN", false, "-"},
    {"Weather", 96, 1344, 16, "AdamW", "1e-3", "1e-6", "TD-RevIN", false, "-"},
    {"Weather", 192, 1344, 16, "AdamW", "1e-3", "1e-6", "TD-RevIN", false, "-"},
    {"Weather", 336, 1344, 16, "AdamW", "1e-3", "1e-6", "TD-RevIN", false, "-"},
    {"Weather", 720, 1344, 16, "AdamW", "1e-3", "1e-6", "TD-RevIN", true, "-"},
    {"Electricity", 96, 2688, 16, "AdamW", "1e-4", "1e-6", "RevIN", false, "-"},
    {"Electricity", 192, 2688, 16, "AdamW", "1e-4", "1e-6", "RevIN", false, "-"},
    {"Electricity", 336, 2688, 16, "AdamW", "1e-4", "1e-6", "RevIN", false, "-"},
    {"Electricity", 720, 2688, 16, "AdamW", "1e-4", "1e-6", "RevIN", false, "-"},
    {"Traffic", 96, 4032, 16, "AdamW", "1e-3", "1e-6", "TD-RevIN", false, "-"},
    {"Traffic", 192, 4032, 16, "AdamW", "1e-3", "1e-6", "TD-RevIN", false, "24, 168"},
    {"Traffic", 336, 4032, 16, "AdamW", "1e-3", "1e-6", "TD-RevIN", false, "24, 168"},
    {"Traffic", 720, 4032, 16, "AdamW", "1e-3", "1e-6", "TD-RevIN", false, "-"},
};

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return char(std::tolower(c)); });
    return s;
}

std::string row_name(const Row& r) { return lower(r.dataset) + "_h" + std::to_string(r.h); }

void common_schedule(Config& c) {
    c.set("train", "epochs", "100");
    c.set("train", "momentum", "0.9");
    c.set("train", "plateau_factor", "0.1");
    c.set("train", "plateau_patience", "5");
    c.set("train", "early_stop", "10");
}

Config from_row(const Row& r) {
    Config c;
    c.set("model", "input_len", std::to_string(r.input_len));
    c.set("model", "h", std::to_string(r.h));
    c.set("model", "revin", r.revin);
    c.set("model", "expm", r.expm ? "true" : "false");
    c.set("model", "periodicities", r.periods);
    c.set("train", "batch", std::to_string(r.batch));
    c.set("train", "optim", r.optim);
    c.set("train", "init_lr", r.lr);
    c.set("train", "w_decay", r.wd);
    common_schedule(c);
    const bool ett = lower(r.dataset).rfind("ett", 0) == 0;
    c.set("data", "scaling", "zscore");
    c.set("data", "ratios", ett ? "0.6, 0.2, 0.2" : "0.7, 0.1, 0.2");
    return c;
}

void chaos_generation(Config& c) {
    c.set("generate", "system", "lorenz");
    c.set("generate", "dt", "0.01");
    c.set("generate", "steps", "12500");
    c.set("generate", "transient", "500");
    c.set("generate", "x0", "1, 1, 1");
    c.set("generate", "subsample", "1");
    c.set("data", "scaling", "minmax");
    c.set("data", "ratios", "0.7, 0.15, 0.15");
}

Config chaos_default() {
    Config c;
    c.set("model", "input_len", "16");
    c.set("model", "h", "16");
    c.set("model", "revin", "RevIN");
    c.set("model", "sobr", "true");
    c.set("model", "sobr_time_dim", "1024");
    c.set("model", "sobr_dim", "64");
    c.set("model", "sobr_slope", "0.1");
    c.set("model", "dropout", "0.5");
    c.set("train", "optim", "AdamW");
    c.set("train", "init_lr", "3e-3");
    c.set("train", "w_decay", "1e-7");
    c.set("train", "batch", "32");
    common_schedule(c);
    chaos_generation(c);
    return c;
}

Config chaos_table3() {
    Config c;
    c.set("model", "input_len", "32");
    c.set("model", "h", "32");
    c.set("model", "revin", "TD-RevIN");
    c.set("model", "sobr", "true");
    c.set("model", "sobr_time_dim", "1024");
    c.set("model", "sobr_dim", "64");
    c.set("model", "sobr_slope", "0.1");
    c.set("train", "optim", "AdamW");
    c.set("train", "init_lr", "1e-3");
    c.set("train", "w_decay", "1e-6");
    c.set("train", "batch", "32");
    common_schedule(c);
    chaos_generation(c);
    return c;
}

Config cylinder(bool smoke) {
    Config c;
    c.set("model", "input_len", "64");
    c.set("model", "h", "64");
    c.set("model", "revin", "RevIN");
    c.set("model", "feature_mix", "false");
    c.set("train", "optim", "SGD");
    c.set("train", "init_lr", "1e-1");
    c.set("train", "momentum", "0.9");
    c.set("train", "w_decay", "1e-6");
    c.set("train", "batch", "4");
    c.set("train", "epochs", "100");
    c.set("train", "plateau_factor", "0.15");
    c.set("train", "plateau_patience", "12");
    c.set("train", "early_stop", "24");
    c.set("data", "scaling", "none");
    c.set("data", "ratios", "0.7, 0.15, 0.15");
    c.set("generate", "system", "cylinder");
    c.set("cfd", "nx", smoke ? "200" : "400");
    c.set("cfd", "ny", smoke ? "80" : "160");
    c.set("cfd", "dt", smoke ? "0.01" : "0.005");
    c.set("cfd", "snapshot_every", smoke ? "10" : "20");
    c.set("cfd", "total_time", "80");
    c.set("cfd", "record_from", "20");
    return c;
}

}  // namespace

std::vector<std::string> preset_names() {
    std::vector<std::string> out;
    for (const auto& r : kRows) out.push_back(row_name(r));
    out.insert(out.end(), {"chaos_default", "chaos_table3", "cylinder_default", "cylinder_smoke"});
    return out;
}

bool has_preset(const std::string& name) {
    const auto names = preset_names();
    return std::find(names.begin(), names.end(), name) != names.end();
}

Config preset(const std::string& name) {
    for (const auto& r : kRows)
        if (row_name(r) == name) return from_row(r);
    if (name == "chaos_default") return chaos_default();
    if (name == "chaos_table3") return chaos_table3();
    if (name == "cylinder_default") return cylinder(false);
    if (name == "cylinder_smoke") return cylinder(true);
    throw ConfigError("unknown preset '" + name + "'");
}

}  // namespace flowmixer::cli
