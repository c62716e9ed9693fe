#include "flowmixer/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "flowmixer/archive.hpp"
#include "flowmixer/error.hpp"

namespace flowmixer::model {

using linalg::hadamard;
using linalg::matmul;
using linalg::matmul_nt;
using linalg::matmul_tn;

namespace {

std::string lower_norm(std::string s) {
    for (auto& ch : s) {
        ch = char(std::tolower(static_cast<unsigned char>(ch)));
        if (ch == '-') ch = '_';
    }
    return s;
}

Matrix pos(const Matrix& w, bool positivity) { return positivity ? hadamard(w, w) : w; }

Matrix softmax_rows(const Matrix& logits) {
    Matrix s(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        auto in = logits.row(i);
        auto out = s.row(i);
        const double mx = *std::max_element(in.begin(), in.end());
        double z = 0.0;
        for (std::size_t j = 0; j < in.size(); ++j) z += out[j] = std::exp(in[j] - mx);
        for (double& v : out) v /= z;
    }
    return s;
}

std::size_t affine_row(const MixerConfig& c, std::size_t t) { return c.norm_mode == NormMode::td_revin ? t : 0; }

}  // namespace

std::string to_string(TimeMode m) {
    switch (m) {
        case TimeMode::linear: return "linear";
        case TimeMode::expm: return "expm";
        case TimeMode::periodic: return "periodic";
    }
    return "?";
}

std::string to_string(NormMode m) {
    switch (m) {
        case NormMode::revin: return "RevIN";
        case NormMode::td_revin: return "TD-RevIN";
        case NormMode::identity: return "none";
    }
    return "?";
}

TimeMode parse_time_mode(const std::string& s) {
    const std::string t = lower_norm(s);
    if (t == "linear" || t == "quadratic") return TimeMode::linear;
    if (t == "expm") return TimeMode::expm;
    if (t == "periodic") return TimeMode::periodic;
    throw ConfigError("unknown time mixing mode '" + s + "' (linear, expm, periodic)");
}

NormMode parse_norm_mode(const std::string& s) {
    const std::string t = lower_norm(s);
    if (t == "revin") return NormMode::revin;
    if (t == "td_revin") return NormMode::td_revin;
    if (t == "none" || t == "identity" || t == "off" || t == "false") return NormMode::identity;
    throw ConfigError("unknown normalization '" + s + "' (RevIN, TD-RevIN, none)");
}

void MixerConfig::validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
    if (n_t < 2) fail("input_len must be at least 2");
    if (n_f < 1) fail("n_f must be at least 1");
    if (horizon < 1 || horizon > n_t) fail("h must satisfy 1 <= h <= input_len");
    if (d_k < 1) fail("d_k must be at least 1");
    if (!(dropout >= 0.0 && dropout <= 0.7)) fail("dropout must lie in [0, 0.7]");
    if (!(epsilon > 0.0)) fail("epsilon must be positive");
    if (sobr) {
        if (sobr->d_t < n_t) fail("sobr_time_dim must be >= input_len");
        if (sobr->d_f < n_f) fail("sobr_dim must be >= n_f");
        if (!(sobr->leaky_slope > 0.0 && sobr->leaky_slope <= 1.0)) fail("sobr_slope must lie in (0, 1]");
    }
    if (time_mode == TimeMode::periodic) {
        if (periodicities.empty()) fail("periodic time mixing needs at least one periodicity");
        for (auto p : periodicities)
            if (p == 0 || time_dim() % p != 0) {
                fail("periodicity " + std::to_string(p) + " does not divide the time dimension " +
                     std::to_string(time_dim()));
            }
    }
}

MixerConfig MixerConfig::from_config(const Config& cfg, const std::string& sec) {
    MixerConfig c;
    auto count = [&](const char* key, std::size_t fallback) {
        const long long v = cfg.get_int(sec, key, (long long)fallback);
        if (v < 0) throw ConfigError("model config: key '" + std::string(key) + "' must be non-negative");
        return std::size_t(v);
    };
    c.n_t = count("input_len", c.n_t);
    c.n_f = count("n_f", c.n_f);
    c.horizon = count("h", c.horizon);
    for (auto p : cfg.get_int_list(sec, "periodicities")) {
        if (p <= 0) throw ConfigError("model config: periodicities must be positive");
        c.periodicities.push_back(std::size_t(p));
    }
    if (auto tm = cfg.find(sec, "time_mode")) {
        c.time_mode = parse_time_mode(*tm);
    } else if (!c.periodicities.empty()) {
        c.time_mode = TimeMode::periodic;
    } else if (cfg.get_bool(sec, "expm", false)) {
        c.time_mode = TimeMode::expm;
    }
    c.d_k = count("d_k", c.d_k);
    c.toggles.feature_mix = cfg.get_bool(sec, "feature_mix", true);
    c.toggles.time_mix = cfg.get_bool(sec, "time_mix", true);
    c.toggles.positivity = cfg.get_bool(sec, "positivity", true);
    c.toggles.static_attention = cfg.get_bool(sec, "static_attention", true);
    c.toggles.skip = cfg.get_bool(sec, "skip", true);
    c.norm_mode = parse_norm_mode(cfg.get(sec, "revin", "RevIN"));
    if (cfg.get_bool(sec, "sobr", false)) {
        SOBRConfig s;
        s.d_t = count("sobr_time_dim", s.d_t);
        s.d_f = count("sobr_dim", s.d_f);
        s.leaky_slope = cfg.get_double(sec, "sobr_slope", s.leaky_slope);
        s.seed = std::uint64_t(cfg.get_int(sec, "sobr_seed", 0));
        c.sobr = s;
    }
    c.dropout = cfg.get_double(sec, "dropout", c.dropout);
    c.epsilon = cfg.get_double(sec, "epsilon", c.epsilon);
    const std::string rows = lower_norm(cfg.get(sec, "forecast_rows", "head"));
    if (rows == "head") c.forecast_rows = ForecastRows::head;
    else if (rows == "tail") c.forecast_rows = ForecastRows::tail;
    else throw ConfigError("model config: forecast_rows must be head or tail");
    c.validate();
    return c;
}

void MixerConfig::to_config(Config& cfg, const std::string& sec) const {
    auto b = [](bool v) { return std::string(v ? "true" : "false"); };
    cfg.set(sec, "input_len", std::to_string(n_t));
    cfg.set(sec, "n_f", std::to_string(n_f));
    cfg.set(sec, "h", std::to_string(horizon));
    cfg.set(sec, "time_mode", to_string(time_mode));
    cfg.set(sec, "expm", b(time_mode == TimeMode::expm));
    std::string ps;
    for (std::size_t i = 0; i < periodicities.size(); ++i) ps += (i ? ", " : "") + std::to_string(periodicities[i]);
    cfg.set(sec, "periodicities", ps.empty() ? "-" : ps);
    cfg.set(sec, "d_k", std::to_string(d_k));
    cfg.set(sec, "feature_mix", b(toggles.feature_mix));
    cfg.set(sec, "time_mix", b(toggles.time_mix));
    cfg.set(sec, "positivity", b(toggles.positivity));
    cfg.set(sec, "static_attention", b(toggles.static_attention));
    cfg.set(sec, "skip", b(toggles.skip));
    cfg.set(sec, "revin", to_string(norm_mode));
    cfg.set(sec, "sobr", b(sobr.has_value()));
    if (sobr) {
        cfg.set(sec, "sobr_time_dim", std::to_string(sobr->d_t));
        cfg.set(sec, "sobr_dim", std::to_string(sobr->d_f));
        cfg.set(sec, "sobr_slope", format_number(sobr->leaky_slope));
        cfg.set(sec, "sobr_seed", std::to_string(sobr->seed));
    }
    cfg.set(sec, "dropout", format_number(dropout));
    cfg.set(sec, "epsilon", format_number(epsilon));
    cfg.set(sec, "forecast_rows", forecast_rows == ForecastRows::head ? "head" : "tail");
}

MixerWeights MixerWeights::zeros_like(const MixerConfig& c) {
    c.validate();
    MixerWeights w;
    const std::size_t m = c.time_dim(), f = c.feature_dim();
    if (c.time_mode == TimeMode::periodic) {
        for (auto p : c.periodicities) w.periodic.push_back({Matrix(m / p, m / p), Matrix(p, p)});
    } else {
        w.w0 = Matrix(m, m);
    }
    w.alpha = 0.0;
    w.beta = 0.0;
    w.q = Matrix(f, c.d_k);
    w.k = Matrix(f, c.d_k);
    if (c.toggles.feature_mix && !c.toggles.static_attention) w.wf_free = Matrix(f, f);
    switch (c.norm_mode) {
        case NormMode::revin: w.revin_a = w.revin_b = Matrix(1, c.n_f); break;
        case NormMode::td_revin: w.revin_a = w.revin_b = Matrix(c.n_t, c.n_f); break;
        case NormMode::identity: break;
    }
    w.epsilon = c.epsilon;
    return w;
}

MixerWeights MixerWeights::init(const MixerConfig& c, std::uint64_t seed) {
    MixerWeights w = zeros_like(c);
    std::mt19937_64 rng(seed);
    auto fill = [&](Matrix& a, double sd) {
        std::normal_distribution<double> g(0.0, sd);
        for (double& x : a.flat()) x = g(rng);
    };
    if (c.time_mode == TimeMode::periodic) {
        for (auto& pf : w.periodic) {
            fill(pf.r, 1.0 / double(pf.r.rows()));
            fill(pf.s, 1.0 / double(pf.s.rows()));
        }
    } else {
        fill(w.w0, 1.0 / double(c.time_dim()));
    }
    w.alpha = 1.0;
    fill(w.q, 1.0 / std::sqrt(double(c.d_k)));
    fill(w.k, 1.0 / std::sqrt(double(c.d_k)));
    w.beta = 1.0;
    if (!w.wf_free.empty()) w.wf_free = Matrix::identity(w.wf_free.rows());
    for (double& x : w.revin_a.flat()) x = 1.0;
    return w;
}

std::vector<std::span<double>> MixerWeights::params() {
    std::vector<std::span<double>> out;
    out.push_back(w0.flat());
    for (auto& pf : periodic) {
        out.push_back(pf.r.flat());
        out.push_back(pf.s.flat());
    }
    out.push_back({&alpha, 1});
    out.push_back(q.flat());
    out.push_back(k.flat());
    out.push_back({&beta, 1});
    out.push_back(wf_free.flat());
    out.push_back(revin_a.flat());
    out.push_back(revin_b.flat());
    return out;
}

std::vector<std::span<const double>> MixerWeights::params() const {
    std::vector<std::span<const double>> out;
    for (auto s : const_cast<MixerWeights*>(this)->params()) out.emplace_back(s.data(), s.size());
    return out;
}

std::vector<std::string> MixerWeights::param_names() const {
    std::vector<std::string> out{"w0"};
    for (std::size_t i = 0; i < periodic.size(); ++i) {
        out.push_back("periodic." + std::to_string(i) + ".r");
        out.push_back("periodic." + std::to_string(i) + ".s");
    }
    for (const char* n : {"alpha", "q", "k", "beta", "wf_free", "revin_a", "revin_b"}) out.emplace_back(n);
    return out;
}

SOBRMaps SOBRMaps::make(const MixerConfig& c) {
    if (!c.sobr) throw ConfigError("SOBR maps requested for a config without SOBR");
    SOBRMaps s;
    s.u_t = linalg::semi_orthogonal(c.sobr->d_t, c.n_t, c.sobr->seed);
    s.u_f = linalg::semi_orthogonal(c.sobr->d_f, c.n_f, c.sobr->seed + 1);
    s.leaky_slope = c.sobr->leaky_slope;
    return s;
}

FlowMixer FlowMixer::create(const MixerConfig& c, std::uint64_t seed) {
    FlowMixer m;
    m.config = c;
    m.weights = MixerWeights::init(c, seed);
    if (c.sobr) m.sobr = SOBRMaps::make(c);
    return m;
}

Matrix build_time_mix(const MixerWeights& w, const MixerConfig& c) { return build_mixing(w, c).wt; }

Matrix build_feature_mix(const MixerWeights& w, const MixerConfig& c) {
    Mixing mix = build_mixing(w, c);
    if (mix.wf_identity) return Matrix::identity(c.feature_dim());
    return mix.wf;
}

Mixing build_mixing(const MixerWeights& w, const MixerConfig& c) {
    const std::size_t m = c.time_dim(), f = c.feature_dim();
    const bool posv = c.toggles.positivity;
    Mixing mix;

    if (!c.toggles.time_mix) {
        mix.wt = Matrix::identity(m);
        mix.wt_identity = true;
    } else if (c.time_mode == TimeMode::periodic) {
        if (w.periodic.size() != c.periodicities.size()) throw DimensionError("periodic factor count mismatch");
        mix.wt = Matrix(m, m);
        for (std::size_t i = 0; i < w.periodic.size(); ++i) {
            const auto& pf = w.periodic[i];
            const std::size_t p = c.periodicities[i];
            if (pf.s.rows() != p || pf.s.cols() != p || pf.r.rows() != m / p || pf.r.cols() != m / p) {
                throw DimensionError("periodic factor shapes do not match periodicity " + std::to_string(p));
            }
            mix.wt += linalg::kron(pos(pf.r, posv), pos(pf.s, posv));
        }
        if (c.toggles.skip)
            for (std::size_t i = 0; i < m; ++i) mix.wt(i, i) += w.alpha;
    } else {
        if (w.w0.rows() != m || w.w0.cols() != m) throw DimensionError("W0 must be " + std::to_string(m) + " square");
        if (c.time_mode == TimeMode::linear) {
            mix.wt = pos(w.w0, posv);
            if (c.toggles.skip)
                for (std::size_t i = 0; i < m; ++i) mix.wt(i, i) += w.alpha;
        } else {
            mix.pos_w0 = pos(w.w0, posv);
            mix.expm_value = linalg::expm(mix.pos_w0);
            if (c.toggles.skip) {
                mix.wt = mix.expm_value * w.alpha;
            } else {
                // Without the skip the identity term of the series is removed.
                mix.wt = mix.expm_value;
                for (std::size_t i = 0; i < m; ++i) mix.wt(i, i) -= 1.0;
            }
        }
    }

    if (!c.toggles.feature_mix) {
        mix.wf_identity = true;
    } else if (!c.toggles.static_attention) {
        if (w.wf_free.rows() != f || w.wf_free.cols() != f) throw DimensionError("free feature matrix shape mismatch");
        mix.wf = w.wf_free;
    } else {
        if (w.q.rows() != f || w.k.rows() != f || w.q.cols() != c.d_k || w.k.cols() != c.d_k) {
            throw DimensionError("Q and K must be " + std::to_string(f) + "x" + std::to_string(c.d_k));
        }
        Matrix logits = matmul_nt(w.q, w.k);
        logits *= 1.0 / std::sqrt(double(c.d_k));
        mix.softmax = softmax_rows(logits);
        const double b2 = w.beta * w.beta;
        mix.wf = mix.softmax * (b2 / (1.0 + b2));
        for (std::size_t i = 0; i < f; ++i) mix.wf(i, i) += 1.0 / (1.0 + b2);
    }
    return mix;
}

namespace {

InstanceStats capture_stats(const Matrix& x, double eps) {
    const std::size_t n = x.rows(), f = x.cols();
    InstanceStats s;
    s.mean.assign(f, 0.0);
    s.std.assign(f, 0.0);
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t j = 0; j < f; ++j) s.mean[j] += x(t, j);
    for (auto& v : s.mean) v /= double(n);
    std::vector<double> var(f, 0.0);
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t j = 0; j < f; ++j) {
            const double d = x(t, j) - s.mean[j];
            var[j] += d * d;
        }
    for (std::size_t j = 0; j < f; ++j) s.std[j] = std::sqrt(var[j] / double(n) + eps);
    return s;
}

void check_affine(const MixerWeights& w, const MixerConfig& c) {
    const std::size_t rows = c.norm_mode == NormMode::td_revin ? c.n_t : 1;
    if (w.revin_a.rows() != rows || w.revin_a.cols() != c.n_f || !w.revin_a.same_shape(w.revin_b)) {
        throw DimensionError("normalization affine parameters have the wrong shape");
    }
}

Matrix normalize(const Matrix& x, const InstanceStats& s, const MixerWeights& w, const MixerConfig& c, Matrix* xhat) {
    check_affine(w, c);
    Matrix n(x.rows(), x.cols());
    if (xhat) *xhat = Matrix(x.rows(), x.cols());
    for (std::size_t t = 0; t < x.rows(); ++t) {
        const std::size_t r = affine_row(c, t);
        for (std::size_t j = 0; j < x.cols(); ++j) {
            const double h = (x(t, j) - s.mean[j]) / s.std[j];
            if (xhat) (*xhat)(t, j) = h;
            n(t, j) = w.revin_a(r, j) * h + w.revin_b(r, j);
        }
    }
    return n;
}

void check_input(const Matrix& x, const MixerConfig& c) {
    if (x.rows() != c.n_t || x.cols() != c.n_f) {
        throw DimensionError("input must be " + std::to_string(c.n_t) + "x" + std::to_string(c.n_f) + ", got " +
                             std::to_string(x.rows()) + "x" + std::to_string(x.cols()));
    }
}

}  // namespace

std::pair<Matrix, InstanceStats> revin_apply(const Matrix& x, const MixerWeights& w, const MixerConfig& c) {
    check_input(x, c);
    if (c.norm_mode == NormMode::identity) return {x, InstanceStats{}};
    InstanceStats s = capture_stats(x, w.epsilon);
    Matrix n = normalize(x, s, w, c, nullptr);
    return {std::move(n), std::move(s)};
}

Matrix revin_apply_frozen(const Matrix& x, const InstanceStats& stats, const MixerWeights& w, const MixerConfig& c) {
    check_input(x, c);
    if (c.norm_mode == NormMode::identity) return x;
    if (stats.mean.size() != c.n_f || stats.std.size() != c.n_f) throw DimensionError("stats do not match n_f");
    return normalize(x, stats, w, c, nullptr);
}

Matrix revin_invert(const Matrix& y, const InstanceStats& stats, const MixerWeights& w, const MixerConfig& c) {
    check_input(y, c);
    if (c.norm_mode == NormMode::identity) return y;
    check_affine(w, c);
    if (stats.mean.size() != c.n_f || stats.std.size() != c.n_f) throw DimensionError("stats do not match n_f");
    Matrix x(y.rows(), y.cols());
    for (std::size_t t = 0; t < y.rows(); ++t) {
        const std::size_t r = affine_row(c, t);
        for (std::size_t j = 0; j < y.cols(); ++j) {
            const double a = w.revin_a(r, j);
            if (a == 0.0) {
                throw NumericError("revin_invert: affine scale is zero at row " + std::to_string(r) + ", feature " +
                                   std::to_string(j));
            }
            x(t, j) = (y(t, j) - w.revin_b(r, j)) / a * stats.std[j] + stats.mean[j];
        }
    }
    return x;
}

double leaky(double x, double slope) { return x > 0.0 ? x : slope * x; }
double leaky_inverse(double y, double slope) { return y > 0.0 ? y : y / slope; }

Matrix sobr_apply(const Matrix& x, const SOBRMaps& s) {
    if (x.rows() != s.u_t.cols() || x.cols() != s.u_f.cols()) throw DimensionError("sobr_apply: input shape mismatch");
    Matrix a = matmul_nt(matmul(s.u_t, x), s.u_f);
    for (double& v : a.flat()) v = leaky(v, s.leaky_slope);
    return a;
}

Matrix sobr_invert(const Matrix& z, const SOBRMaps& s) {
    if (z.rows() != s.u_t.rows() || z.cols() != s.u_f.rows()) throw DimensionError("sobr_invert: input shape mismatch");
    Matrix y = z;
    for (double& v : y.flat()) v = leaky_inverse(v, s.leaky_slope);
    return matmul(matmul_tn(s.u_t, y), s.u_f);
}

Matrix mixing_input(const Matrix& x, const FlowMixer& m, const ForwardOptions& opt, Trace& tr, bool keep) {
    const MixerConfig& c = m.config;
    check_input(x, c);

    // phi
    Matrix n;
    if (c.norm_mode == NormMode::identity) {
        tr.stats = {};
        n = x;
        if (keep) tr.xhat = x;
    } else {
        tr.stats = opt.frozen_stats ? *opt.frozen_stats : capture_stats(x, m.weights.epsilon);
        if (tr.stats.mean.size() != c.n_f) throw DimensionError("frozen stats do not match n_f");
        n = normalize(x, tr.stats, m.weights, c, keep ? &tr.xhat : nullptr);
    }

    Matrix d;
    if (c.sobr) {
        if (!m.sobr) throw ConfigError("model config enables SOBR but the lifts are missing");
        tr.lifted = matmul_nt(matmul(m.sobr->u_t, n), m.sobr->u_f);
        d = tr.lifted;
        for (double& v : d.flat()) v = leaky(v, m.sobr->leaky_slope);
    } else {
        d = std::move(n);
    }

    tr.mask = Matrix();
    if (opt.training && c.dropout > 0.0) {
        if (!opt.rng) throw ConfigError("dropout in training mode needs a random generator");
        std::bernoulli_distribution keep_entry(1.0 - c.dropout);
        const double scale = 1.0 / (1.0 - c.dropout);
        tr.mask = Matrix(d.rows(), d.cols());
        for (std::size_t i = 0; i < d.size(); ++i) {
            const double mk = keep_entry(*opt.rng) ? scale : 0.0;
            tr.mask.data()[i] = mk;
            d.data()[i] *= mk;
        }
    }
    if (keep) tr.mixed_in = d;
    return d;
}

Matrix finish_forward(Matrix y, const FlowMixer& m, Trace& tr, bool keep) {
    const MixerConfig& c = m.config;
    Matrix z;
    if (c.sobr) {
        if (keep) tr.y = y;
        for (double& v : y.flat()) v = leaky_inverse(v, m.sobr->leaky_slope);
        z = matmul(matmul_tn(m.sobr->u_t, y), m.sobr->u_f);
    } else {
        if (keep) tr.y = y;
        z = std::move(y);
    }

    Matrix out = c.norm_mode == NormMode::identity ? z : revin_invert(z, tr.stats, m.weights, c);
    if (keep) {
        tr.z = std::move(z);
        tr.out = out;
    }
    return out;
}

Matrix forward_with(const Matrix& x, const FlowMixer& m, const Mixing& mix, const ForwardOptions& opt, Trace* trace) {
    Trace local;
    Trace& tr = trace ? *trace : local;
    Matrix d = mixing_input(x, m, opt, tr, trace != nullptr);
    Matrix y = mix.wf_identity ? std::move(d) : matmul_nt(d, mix.wf);
    if (!mix.wt_identity) y = matmul(mix.wt, y);
    return finish_forward(std::move(y), m, tr, trace != nullptr);
}

Matrix hcat(const std::vector<Matrix>& blocks) {
    if (blocks.empty()) return {};
    const std::size_t r = blocks[0].rows(), c = blocks[0].cols();
    Matrix out(r, c * blocks.size());
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        if (blocks[b].rows() != r || blocks[b].cols() != c) throw DimensionError("hcat: blocks differ in shape");
        for (std::size_t i = 0; i < r; ++i)
            std::copy_n(blocks[b].data() + i * c, c, out.data() + i * out.cols() + b * c);
    }
    return out;
}

Matrix hblock(const Matrix& m, std::size_t b, std::size_t cols) {
    Matrix out(m.rows(), cols);
    for (std::size_t i = 0; i < m.rows(); ++i) std::copy_n(m.data() + i * m.cols() + b * cols, cols, out.data() + i * cols);
    return out;
}

std::vector<Matrix> forward_batch(const std::vector<const Matrix*>& xs, const FlowMixer& m, const Mixing& mix) {
    std::vector<Matrix> outs;
    if (xs.empty()) return outs;
    std::vector<Trace> trs(xs.size());
    std::vector<Matrix> ds;
    for (std::size_t b = 0; b < xs.size(); ++b) {
        Matrix d = mixing_input(*xs[b], m, {}, trs[b], false);
        ds.push_back(mix.wf_identity ? std::move(d) : matmul_nt(d, mix.wf));
    }
    const std::size_t cols = ds[0].cols();
    Matrix y = hcat(ds);
    ds.clear();
    if (!mix.wt_identity) y = matmul(mix.wt, y);
    for (std::size_t b = 0; b < xs.size(); ++b) outs.push_back(finish_forward(hblock(y, b, cols), m, trs[b], false));
    return outs;
}

Matrix forward(const Matrix& x, const FlowMixer& m, const ForwardOptions& opt) {
    return forward_with(x, m, build_mixing(m.weights, m.config), opt);
}

Matrix apply_mixing(const Matrix& x, const FlowMixer& m, const Matrix& wt, const Matrix& wf,
                    const InstanceStats* frozen_stats) {
    const std::size_t tm = m.config.time_dim(), fm = m.config.feature_dim();
    if (wt.rows() != tm || wt.cols() != tm) throw DimensionError("apply_mixing: W_t has the wrong shape");
    if (wf.rows() != fm || wf.cols() != fm) throw DimensionError("apply_mixing: W_f has the wrong shape");
    Mixing mix;
    mix.wt = wt;
    mix.wf = wf;
    ForwardOptions opt;
    opt.frozen_stats = frozen_stats;
    return forward_with(x, m, mix, opt);
}

MixingPair compose(const FlowMixer& m1, const FlowMixer& m2) {
    if (m1.config.sobr || m2.config.sobr) {
        throw ConfigError("compose: SOBR lifting breaks the semi-group property");
    }
    const auto& c1 = m1.config;
    const auto& c2 = m2.config;
    if (c1.n_t != c2.n_t || c1.n_f != c2.n_f) throw DimensionError("compose: models have different shapes");
    if (c1.norm_mode != c2.norm_mode || !(m1.weights.revin_a == m2.weights.revin_a) ||
        !(m1.weights.revin_b == m2.weights.revin_b) || m1.weights.epsilon != m2.weights.epsilon) {
        throw ConfigError("compose: models do not share the same normalization");
    }
    return {matmul(build_time_mix(m2.weights, c2), build_time_mix(m1.weights, c1)),
            matmul(build_feature_mix(m2.weights, c2), build_feature_mix(m1.weights, c1))};
}

Matrix forecast_block(const Matrix& out, const MixerConfig& c) {
    if (out.rows() != c.n_t) throw DimensionError("forecast_block: output has the wrong number of rows");
    const std::size_t off = c.forecast_offset();
    Matrix f(c.horizon, out.cols());
    for (std::size_t t = 0; t < c.horizon; ++t)
        std::copy(out.row(off + t).begin(), out.row(off + t).end(), f.row(t).begin());
    return f;
}

void save_checkpoint(const std::filesystem::path& dir, const FlowMixer& m) {
    std::filesystem::create_directories(dir);
    Config cfg;
    m.config.to_config(cfg);
    cfg.save(dir / "model.ini");

    Archive ar;
    const auto& w = m.weights;
    auto scalar = [](double v) { return Matrix(1, 1, v); };
    if (!w.w0.empty()) ar.put("w0", w.w0);
    for (std::size_t i = 0; i < w.periodic.size(); ++i) {
        ar.put("periodic." + std::to_string(i) + ".r", w.periodic[i].r);
        ar.put("periodic." + std::to_string(i) + ".s", w.periodic[i].s);
    }
    ar.put("alpha", scalar(w.alpha));
    ar.put("q", w.q);
    ar.put("k", w.k);
    ar.put("beta", scalar(w.beta));
    if (!w.wf_free.empty()) ar.put("wf_free", w.wf_free);
    if (!w.revin_a.empty()) {
        ar.put("revin_a", w.revin_a);
        ar.put("revin_b", w.revin_b);
    }
    ar.put("epsilon", scalar(w.epsilon));
    if (m.sobr) {
        ar.put("sobr.u_t", m.sobr->u_t);
        ar.put("sobr.u_f", m.sobr->u_f);
        ar.put("sobr.slope", scalar(m.sobr->leaky_slope));
    }
    ar.save(dir / "weights.fmxa");
}

FlowMixer load_checkpoint(const std::filesystem::path& dir) {
    FlowMixer m;
    m.config = MixerConfig::from_config(Config::load(dir / "model.ini"));
    const Archive ar = Archive::load(dir / "weights.fmxa");
    MixerWeights w = MixerWeights::zeros_like(m.config);
    auto take = [&](const std::string& name, Matrix& dst) {
        const Matrix& src = ar.real(name);
        if (!src.same_shape(dst)) throw ConfigError("checkpoint: array '" + name + "' has the wrong shape");
        dst = src;
    };
    if (!w.w0.empty()) take("w0", w.w0);
    for (std::size_t i = 0; i < w.periodic.size(); ++i) {
        take("periodic." + std::to_string(i) + ".r", w.periodic[i].r);
        take("periodic." + std::to_string(i) + ".s", w.periodic[i].s);
    }
    w.alpha = ar.real("alpha")(0, 0);
    take("q", w.q);
    take("k", w.k);
    w.beta = ar.real("beta")(0, 0);
    if (!w.wf_free.empty()) take("wf_free", w.wf_free);
    if (!w.revin_a.empty()) {
        take("revin_a", w.revin_a);
        take("revin_b", w.revin_b);
    }
    w.epsilon = ar.real("epsilon")(0, 0);
    m.weights = std::move(w);
    if (m.config.sobr) {
        SOBRMaps s;
        s.u_t = ar.real("sobr.u_t");
        s.u_f = ar.real("sobr.u_f");
        s.leaky_slope = ar.real("sobr.slope")(0, 0);
        if (s.u_t.rows() != m.config.sobr->d_t || s.u_t.cols() != m.config.n_t || s.u_f.rows() != m.config.sobr->d_f ||
            s.u_f.cols() != m.config.n_f) {
            throw ConfigError("checkpoint: SOBR lifts do not match the model config");
        }
        m.sobr = std::move(s);
    }
    return m;
}

}  // namespace flowmixer::model
