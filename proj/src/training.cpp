#include "flowmixer/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "flowmixer/error.hpp"

namespace flowmixer::training {

using linalg::matmul;
using linalg::matmul_nt;
using linalg::matmul_tn;
using model::Mixing;
using model::NormMode;
using model::TimeMode;

std::string to_string(Optimizer o) { return o == Optimizer::adamw ? "AdamW" : "SGD"; }

Optimizer parse_optimizer(const std::string& s) {
    std::string t = s;
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return char(std::tolower(c)); });
    if (t == "adamw" || t == "adam") return Optimizer::adamw;
    if (t == "sgd" || t == "sgd_momentum") return Optimizer::sgd_momentum;
    throw ConfigError("unknown optimizer '" + s + "' (SGD, AdamW)");
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
    if (!(lr > 0)) fail("init_lr must be positive");
    if (!(momentum >= 0 && momentum < 1)) fail("momentum must lie in [0, 1)");
    if (!(weight_decay >= 0)) fail("w_decay must be non-negative");
    if (batch_size < 1) fail("batch must be at least 1");
    if (!(plateau_factor > 0 && plateau_factor < 1)) fail("plateau_factor must lie in (0, 1)");
    if (stride < 1) fail("stride must be at least 1");
}

TrainConfig TrainConfig::from_config(const Config& c, const std::string& s) {
    TrainConfig t;
    auto count = [&](const char* key, std::size_t fb) {
        const long long v = c.get_int(s, key, (long long)fb);
        if (v < 0) throw ConfigError("train config: key '" + std::string(key) + "' must be non-negative");
        return std::size_t(v);
    };
    if (auto o = c.find(s, "optim")) t.optimizer = parse_optimizer(*o);
    t.lr = c.get_double(s, "init_lr", t.lr);
    t.momentum = c.get_double(s, "momentum", t.momentum);
    t.weight_decay = c.get_double(s, "w_decay", t.weight_decay);
    t.batch_size = count("batch", t.batch_size);
    t.max_epochs = count("epochs", t.max_epochs);
    t.plateau_factor = c.get_double(s, "plateau_factor", t.plateau_factor);
    t.plateau_patience = count("plateau_patience", t.plateau_patience);
    t.early_stop_patience = count("early_stop", t.early_stop_patience);
    t.seed = std::uint64_t(c.get_int(s, "seed", (long long)t.seed));
    t.stride = count("stride", t.stride);
    t.max_train_windows = count("max_train_windows", t.max_train_windows);
    t.max_val_windows = count("max_val_windows", t.max_val_windows);
    t.validate();
    return t;
}

void TrainConfig::to_config(Config& c, const std::string& s) const {
    c.set(s, "optim", to_string(optimizer));
    c.set(s, "init_lr", format_number(lr));
    c.set(s, "momentum", format_number(momentum));
    c.set(s, "w_decay", format_number(weight_decay));
    c.set(s, "batch", std::to_string(batch_size));
    c.set(s, "epochs", std::to_string(max_epochs));
    c.set(s, "plateau_factor", format_number(plateau_factor));
    c.set(s, "plateau_patience", std::to_string(plateau_patience));
    c.set(s, "early_stop", std::to_string(early_stop_patience));
    c.set(s, "seed", std::to_string(seed));
    c.set(s, "stride", std::to_string(stride));
    c.set(s, "max_train_windows", std::to_string(max_train_windows));
    c.set(s, "max_val_windows", std::to_string(max_val_windows));
}

void TrainHistory::write_csv(const std::filesystem::path& path) const {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw ConfigError("cannot write " + path.string());
    f << "epoch,train_mse,val_mse,lr,seconds\n";
    f.precision(17);
    for (const auto& e : epochs) f << e.epoch << ',' << e.train_mse << ',' << e.val_mse << ',' << e.lr << ',' << e.seconds << '\n';
}

double loss_masked_mse(const Matrix& pred, const Matrix& target, std::size_t h, std::size_t offset) {
    if (!pred.same_shape(target)) throw DimensionError("loss_masked_mse: prediction and target shapes differ");
    if (h < 1 || offset + h > pred.rows()) throw DimensionError("loss_masked_mse: mask rows out of range");
    double s = 0.0;
    for (std::size_t t = offset; t < offset + h; ++t)
        for (std::size_t j = 0; j < pred.cols(); ++j) {
            const double d = pred(t, j) - target(t, j);
            s += d * d;
        }
    return s / double(h * pred.cols());
}

namespace {

bool finite_all(const Gradients& g) {
    for (auto p : g.params())
        for (double v : p)
            if (!std::isfinite(v)) return false;
    return true;
}

/// Pulls gradients of W_t and W_f back onto the parameters.
void mixing_adjoint(const MixerWeights& w, const MixerConfig& c, const Mixing& mix, const Matrix& dwt,
                    const Matrix& dwf, Gradients& g) {
    const bool posv = c.toggles.positivity;
    if (!mix.wt_identity) {
        const std::size_t m = c.time_dim();
        if (c.time_mode == TimeMode::expm) {
            Matrix dp;
            if (c.toggles.skip) {
                double da = 0.0;
                for (std::size_t i = 0; i < dwt.size(); ++i) da += dwt.data()[i] * mix.expm_value.data()[i];
                g.alpha += da;
                dp = linalg::expm_frechet_adjoint(mix.pos_w0, dwt) * w.alpha;
            } else {
                dp = linalg::expm_frechet_adjoint(mix.pos_w0, dwt);
            }
            g.w0 += posv ? linalg::hadamard(w.w0, dp) * 2.0 : dp;
        } else {
            if (c.toggles.skip) g.alpha += linalg::trace(dwt);
            if (c.time_mode == TimeMode::linear) {
                g.w0 += posv ? linalg::hadamard(w.w0, dwt) * 2.0 : dwt;
            } else {
                for (std::size_t f = 0; f < w.periodic.size(); ++f) {
                    const Matrix& r = w.periodic[f].r;
                    const Matrix& s = w.periodic[f].s;
                    const std::size_t nr = r.rows(), p = s.rows();
                    const Matrix a = posv ? linalg::hadamard(r, r) : r;
                    const Matrix b = posv ? linalg::hadamard(s, s) : s;
                    Matrix da(nr, nr), db(p, p);
                    for (std::size_t i = 0; i < nr; ++i)
                        for (std::size_t j = 0; j < nr; ++j) {
                            double acc = 0.0;
                            const double aij = a(i, j);
                            for (std::size_t k = 0; k < p; ++k) {
                                const double* grow = dwt.data() + (i * p + k) * m + j * p;
                                const double* brow = b.data() + k * p;
                                double* dbrow = db.data() + k * p;
                                for (std::size_t l = 0; l < p; ++l) {
                                    acc += grow[l] * brow[l];
                                    dbrow[l] += grow[l] * aij;
                                }
                            }
                            da(i, j) = acc;
                        }
                    g.periodic[f].r += posv ? linalg::hadamard(r, da) * 2.0 : da;
                    g.periodic[f].s += posv ? linalg::hadamard(s, db) * 2.0 : db;
                }
            }
        }
    }

    if (!mix.wf_identity) {
        if (!c.toggles.static_attention) {
            g.wf_free += dwf;
        } else {
            const std::size_t f = c.feature_dim();
            const double cc = w.beta * w.beta;
            const Matrix& sm = mix.softmax;
            double dc = 0.0;
            for (std::size_t i = 0; i < f; ++i)
                for (std::size_t j = 0; j < f; ++j) dc += dwf(i, j) * (sm(i, j) - (i == j ? 1.0 : 0.0));
            dc /= (1.0 + cc) * (1.0 + cc);
            g.beta += 2.0 * w.beta * dc;
            const double ks = cc / (1.0 + cc);
            Matrix dlog(f, f);
            for (std::size_t i = 0; i < f; ++i) {
                double rd = 0.0;
                for (std::size_t j = 0; j < f; ++j) rd += ks * dwf(i, j) * sm(i, j);
                for (std::size_t j = 0; j < f; ++j) dlog(i, j) = sm(i, j) * (ks * dwf(i, j) - rd);
            }
            const double inv = 1.0 / std::sqrt(double(c.d_k));
            g.q += matmul(dlog, w.k) * inv;
            g.k += matmul_tn(dlog, w.q) * inv;
        }
    }
}

}  // namespace

LossGrad backward_batch(const std::vector<const Matrix*>& xs, const std::vector<const Matrix*>& targets,
                        const FlowMixer& m, std::mt19937_64* rng) {
    if (xs.size() != targets.size() || xs.empty()) throw DimensionError("backward_batch: empty or mismatched batch");
    const MixerConfig& c = m.config;
    const MixerWeights& w = m.weights;
    const Mixing mix = model::build_mixing(w, c);
    const std::size_t mt = c.time_dim(), mf = c.feature_dim();
    const std::size_t h = c.horizon, off = c.forecast_offset();
    const double inv_b = 1.0 / double(xs.size());

    LossGrad out;
    out.grads = MixerWeights::zeros_like(c);
    Gradients& g = out.grads;
    Matrix dwt = mix.wt_identity ? Matrix() : Matrix(mt, mt);
    Matrix dwf = mix.wf_identity ? Matrix() : Matrix(mf, mf);

    model::ForwardOptions opt;
    opt.training = rng != nullptr;
    opt.rng = rng;

    // Windows are mixed side by side so the W_t products run as a few large GEMMs.
    // Y_b = W_t D_b W_f^T gives dW_t = sum dY_b W_f D_b^T, dW_f = sum (W_t^T dY_b)^T D_b
    // and dD_b = (W_t^T dY_b) W_f.
    const std::size_t chunk = std::max<std::size_t>(1, (std::size_t(1) << 21) / (mt * mf));
    for (std::size_t lo = 0; lo < xs.size(); lo += chunk) {
        const std::size_t nb = std::min(chunk, xs.size() - lo);
        std::vector<model::Trace> trs(nb);
        std::vector<Matrix> blocks(nb);
        for (std::size_t b = 0; b < nb; ++b) {
            Matrix d = model::mixing_input(*xs[lo + b], m, opt, trs[b], true);
            blocks[b] = mix.wf_identity ? std::move(d) : matmul_nt(d, mix.wf);
        }
        Matrix ycat = model::hcat(blocks);
        if (!mix.wt_identity) ycat = matmul(mix.wt, ycat);

        for (std::size_t b = 0; b < nb; ++b) {
            model::Trace& tr = trs[b];
            const Matrix& target = *targets[lo + b];
            const Matrix outv = model::finish_forward(model::hblock(ycat, b, mf), m, tr, true);
            if (!target.same_shape(outv)) throw DimensionError("backward: target must have the output's shape");
            out.loss += loss_masked_mse(outv, target, h, off) * inv_b;

            const double scale = 2.0 * inv_b / double(h * c.n_f);
            Matrix dz(c.n_t, c.n_f);
            for (std::size_t t = off; t < off + h; ++t)
                for (std::size_t j = 0; j < c.n_f; ++j) dz(t, j) = scale * (outv(t, j) - target(t, j));

            // Denormalization.
            if (c.norm_mode != NormMode::identity) {
                for (std::size_t t = 0; t < c.n_t; ++t) {
                    const std::size_t r = c.norm_mode == NormMode::td_revin ? t : 0;
                    for (std::size_t j = 0; j < c.n_f; ++j) {
                        const double a = w.revin_a(r, j), sd = tr.stats.std[j];
                        const double d = dz(t, j) * sd / a;
                        g.revin_a(r, j) -= d * (tr.z(t, j) - w.revin_b(r, j)) / a;
                        g.revin_b(r, j) -= d;
                        dz(t, j) = d;
                    }
                }
            }

            if (c.sobr) {
                blocks[b] = matmul_nt(matmul(m.sobr->u_t, dz), m.sobr->u_f);
                const double inv_slope = 1.0 / m.sobr->leaky_slope;
                for (std::size_t i = 0; i < blocks[b].size(); ++i)
                    if (!(tr.y.data()[i] > 0.0)) blocks[b].data()[i] *= inv_slope;
            } else {
                blocks[b] = std::move(dz);
            }
            tr.y = tr.z = tr.out = Matrix();
        }
        ycat = Matrix();

        if (!mix.wt_identity) {
            std::vector<Matrix> g1(nb), ds(nb);
            for (std::size_t b = 0; b < nb; ++b) {
                g1[b] = mix.wf_identity ? blocks[b] : matmul(blocks[b], mix.wf);
                ds[b] = trs[b].mixed_in;
            }
            dwt += matmul_nt(model::hcat(g1), model::hcat(ds));
        }
        Matrix hcat_dy = model::hcat(blocks);
        blocks.clear();
        if (!mix.wt_identity) hcat_dy = matmul_tn(mix.wt, hcat_dy);

        for (std::size_t b = 0; b < nb; ++b) {
            model::Trace& tr = trs[b];
            const Matrix hb = model::hblock(hcat_dy, b, mf);
            if (!mix.wf_identity) dwf += matmul_tn(hb, tr.mixed_in);
            Matrix dd = mix.wf_identity ? hb : matmul(hb, mix.wf);

            if (!tr.mask.empty())
                for (std::size_t i = 0; i < dd.size(); ++i) dd.data()[i] *= tr.mask.data()[i];

            Matrix dn;
            if (c.sobr) {
                const double slope = m.sobr->leaky_slope;
                for (std::size_t i = 0; i < dd.size(); ++i)
                    if (!(tr.lifted.data()[i] > 0.0)) dd.data()[i] *= slope;
                dn = matmul(matmul_tn(m.sobr->u_t, dd), m.sobr->u_f);
            } else {
                dn = std::move(dd);
            }

            if (c.norm_mode != NormMode::identity) {
                for (std::size_t t = 0; t < c.n_t; ++t) {
                    const std::size_t r = c.norm_mode == NormMode::td_revin ? t : 0;
                    for (std::size_t j = 0; j < c.n_f; ++j) {
                        g.revin_a(r, j) += dn(t, j) * tr.xhat(t, j);
                        g.revin_b(r, j) += dn(t, j);
                    }
                }
            }
        }
    }

    mixing_adjoint(w, c, mix, dwt, dwf, g);
    if (!std::isfinite(out.loss) || !finite_all(g)) throw NumericError("backward: non-finite loss or gradient");
    return out;
}

LossGrad backward(const Matrix& x, const Matrix& target, const FlowMixer& m, std::size_t h, std::mt19937_64* rng) {
    if (h != m.config.horizon) {
        FlowMixer copy = m;
        copy.config.horizon = h;
        copy.config.validate();
        return backward_batch({&x}, {&target}, copy, rng);
    }
    return backward_batch({&x}, {&target}, m, rng);
}

namespace {

void ensure_state(OptimizerState& s, const MixerWeights& w, bool second) {
    auto ps = w.params();
    if (s.m1.size() != ps.size()) {
        s.m1.clear();
        for (auto p : ps) s.m1.emplace_back(p.size(), 0.0);
    }
    if (second && s.m2.size() != ps.size()) {
        s.m2.clear();
        for (auto p : ps) s.m2.emplace_back(p.size(), 0.0);
    }
}

}  // namespace

void sgd_momentum_step(MixerWeights& w, const Gradients& g, OptimizerState& s, const TrainConfig& cfg, double lr) {
    ensure_state(s, w, false);
    auto ps = w.params();
    auto gs = g.params();
    if (ps.size() != gs.size()) throw DimensionError("sgd step: gradient layout mismatch");
    const double decay = 1.0 - lr * cfg.weight_decay;
    ++s.t;
    for (std::size_t k = 0; k < ps.size(); ++k) {
        if (ps[k].size() != gs[k].size()) throw DimensionError("sgd step: gradient shape mismatch");
        auto& v = s.m1[k];
        for (std::size_t i = 0; i < ps[k].size(); ++i) {
            ps[k][i] *= decay;
            v[i] = cfg.momentum * v[i] + gs[k][i];
            ps[k][i] -= lr * v[i];
        }
    }
}

void adamw_step(MixerWeights& w, const Gradients& g, OptimizerState& s, const TrainConfig& cfg, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ensure_state(s, w, true);
    auto ps = w.params();
    auto gs = g.params();
    if (ps.size() != gs.size()) throw DimensionError("adamw step: gradient layout mismatch");
    ++s.t;
    const double c1 = 1.0 - std::pow(b1, double(s.t));
    const double c2 = 1.0 - std::pow(b2, double(s.t));
    const double decay = 1.0 - lr * cfg.weight_decay;
    for (std::size_t k = 0; k < ps.size(); ++k) {
        if (ps[k].size() != gs[k].size()) throw DimensionError("adamw step: gradient shape mismatch");
        auto& m1 = s.m1[k];
        auto& m2 = s.m2[k];
        for (std::size_t i = 0; i < ps[k].size(); ++i) {
            const double gi = gs[k][i];
            ps[k][i] *= decay;
            m1[i] = b1 * m1[i] + (1 - b1) * gi;
            m2[i] = b2 * m2[i] + (1 - b2) * gi * gi;
            ps[k][i] -= lr * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + eps);
        }
    }
}

void clamp_affine(MixerWeights& w) {
    constexpr double floor = 1e-4;
    for (double& a : w.revin_a.flat())
        if (std::abs(a) < floor) a = a < 0 ? -floor : floor;
}

std::vector<std::size_t> window_starts(std::size_t lo, std::size_t hi, std::size_t n_t, std::size_t h,
                                       std::size_t stride, std::size_t first_input) {
    if (stride < 1) throw ConfigError("window stride must be at least 1");
    std::vector<std::size_t> out;
    std::size_t s = std::max(first_input, lo >= n_t ? lo - n_t : std::size_t(0));
    for (; s + n_t + h <= hi; s += stride) out.push_back(s);
    return out;
}

Window make_window(const Matrix& series, std::size_t start, const MixerConfig& c) {
    if (start + c.n_t + c.horizon > series.rows() || series.cols() != c.n_f) {
        throw DimensionError("make_window: window exceeds the series or feature count differs");
    }
    Window w{Matrix(c.n_t, c.n_f), Matrix(c.n_t, c.n_f)};
    std::copy(series.row(start).data(), series.row(start).data() + c.n_t * c.n_f, w.x.data());
    const std::size_t off = c.forecast_offset();
    std::copy(series.row(start + c.n_t).data(), series.row(start + c.n_t).data() + c.horizon * c.n_f,
              w.target.row(off).data());
    return w;
}

std::vector<Window> sliding_windows(const Matrix& series, std::size_t n_t, std::size_t h, std::size_t stride) {
    if (series.rows() < n_t + h) {
        throw DimensionError("sliding_windows: series of length " + std::to_string(series.rows()) +
                             " is shorter than n_t + h = " + std::to_string(n_t + h));
    }
    MixerConfig c;
    c.n_t = n_t;
    c.n_f = series.cols();
    c.horizon = h;
    std::vector<Window> out;
    for (auto s : window_starts(0, series.rows(), n_t, h, stride)) out.push_back(make_window(series, s, c));
    return out;
}

std::vector<std::size_t> split_windows(const datagen::SeriesDataset& ds, datagen::Split split, const MixerConfig& c,
                                       std::size_t stride) {
    auto [lo, hi] = ds.bounds(split);
    return window_starts(lo, hi, c.n_t, c.horizon, stride);
}

double evaluate(const FlowMixer& m, const Matrix& series, const std::vector<std::size_t>& starts) {
    if (starts.empty()) throw ConfigError("evaluate: no windows");
    const Mixing mix = model::build_mixing(m.weights, m.config);
    double total = 0.0;
    const std::size_t chunk = std::max<std::size_t>(1, (std::size_t(1) << 21) / (m.config.time_dim() * m.config.feature_dim()));
    for (std::size_t lo = 0; lo < starts.size(); lo += chunk) {
        std::vector<Window> ws;
        std::vector<const Matrix*> xs;
        for (std::size_t i = lo; i < std::min(starts.size(), lo + chunk); ++i) ws.push_back(make_window(series, starts[i], m.config));
        for (const auto& w : ws) xs.push_back(&w.x);
        const auto outs = model::forward_batch(xs, m, mix);
        for (std::size_t i = 0; i < ws.size(); ++i)
            total += loss_masked_mse(outs[i], ws[i].target, m.config.horizon, m.config.forecast_offset());
    }
    return total / double(starts.size());
}

namespace {

std::vector<std::size_t> thin(const std::vector<std::size_t>& v, std::size_t cap) {
    if (cap == 0 || v.size() <= cap) return v;
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < cap; ++i) out.push_back(v[i * v.size() / cap]);
    return out;
}

}  // namespace

TrainResult train(const datagen::SeriesDataset& ds, const MixerConfig& mc, const TrainConfig& tc,
                  const EpochCallback& on_epoch) {
    mc.validate();
    tc.validate();
    if (ds.features() != mc.n_f) {
        throw ConfigError("dataset has " + std::to_string(ds.features()) + " features, model expects " +
                          std::to_string(mc.n_f));
    }
    const auto train_starts = split_windows(ds, datagen::Split::train, mc, tc.stride);
    const auto val_starts = thin(split_windows(ds, datagen::Split::val, mc, 1), tc.max_val_windows);
    if (train_starts.empty()) throw ConfigError("training split has no complete window of input_len + h rows");
    if (val_starts.empty()) throw ConfigError("validation split has no complete window");

    TrainResult res;
    FlowMixer m = FlowMixer::create(mc, tc.seed);
    FlowMixer best = m;
    std::mt19937_64 order_rng(tc.seed * 0x9E3779B97F4A7C15ULL + 1);
    std::mt19937_64 dropout_rng(tc.seed * 0x9E3779B97F4A7C15ULL + 2);
    OptimizerState state;
    double lr = tc.lr;
    double best_val = std::numeric_limits<double>::infinity();
    double sched_best = best_val;
    std::size_t bad = 0, since_best = 0;

    for (std::size_t epoch = 1; epoch <= tc.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<std::size_t> order = train_starts;
        std::shuffle(order.begin(), order.end(), order_rng);
        if (tc.max_train_windows && order.size() > tc.max_train_windows) order.resize(tc.max_train_windows);

        double loss_sum = 0.0;
        std::vector<Window> batch;
        std::vector<const Matrix*> xs, ts;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += tc.batch_size) {
            const std::size_t b1 = std::min(order.size(), b0 + tc.batch_size);
            batch.clear();
            for (std::size_t i = b0; i < b1; ++i) batch.push_back(make_window(ds.data, order[i], mc));
            xs.clear();
            ts.clear();
            for (const auto& w : batch) {
                xs.push_back(&w.x);
                ts.push_back(&w.target);
            }
            LossGrad lg;
            try {
                lg = backward_batch(xs, ts, m, mc.dropout > 0 ? &dropout_rng : nullptr);
            } catch (const NumericError& e) {
                throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(b0 / tc.batch_size) + ": " + e.what());
            }
            loss_sum += lg.loss * double(b1 - b0);
            if (tc.optimizer == Optimizer::adamw) adamw_step(m.weights, lg.grads, state, tc, lr);
            else sgd_momentum_step(m.weights, lg.grads, state, tc, lr);
            clamp_affine(m.weights);
        }

        const double val = evaluate(m, ds.data, val_starts);
        if (!std::isfinite(val)) throw NumericError("training diverged: validation loss is not finite at epoch " + std::to_string(epoch));
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_mse = loss_sum / double(order.size());
        rec.val_mse = val;
        rec.lr = lr;
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        res.history.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);

        if (val < best_val) {
            best_val = val;
            best = m;
            res.history.best_epoch = epoch;
            since_best = 0;
        } else {
            ++since_best;
        }
        if (val < sched_best * (1.0 - 1e-4)) {
            sched_best = val;
            bad = 0;
        } else if (++bad > tc.plateau_patience) {
            lr *= tc.plateau_factor;
            bad = 0;
        }
        if (tc.early_stop_patience && since_best >= tc.early_stop_patience) break;
    }
    res.history.best_val = best_val;
    res.model = std::move(best);
    return res;
}

Matrix rollout(const FlowMixer& m, const Matrix& history, std::size_t steps) {
    const MixerConfig& c = m.config;
    if (history.rows() < c.n_t || history.cols() != c.n_f) {
        throw DimensionError("rollout: history must have at least input_len rows and n_f columns");
    }
    const Mixing mix = model::build_mixing(m.weights, c);
    Matrix window(c.n_t, c.n_f);
    std::copy(history.row(history.rows() - c.n_t).data(), history.data() + history.size(), window.data());
    Matrix out(steps, c.n_f);
    std::size_t done = 0;
    while (done < steps) {
        const Matrix f = model::forecast_block(model::forward_with(window, m, mix), c);
        const std::size_t take = std::min(c.horizon, steps - done);
        std::copy(f.data(), f.data() + take * c.n_f, out.row(done).data());
        done += take;
        // Slide the window forward by the full horizon.
        Matrix next(c.n_t, c.n_f);
        const std::size_t keep = c.n_t - c.horizon;
        std::copy(window.row(c.horizon).data(), window.row(c.horizon).data() + keep * c.n_f, next.data());
        std::copy(f.data(), f.data() + c.horizon * c.n_f, next.row(keep).data());
        window = std::move(next);
    }
    return out;
}

}  // namespace flowmixer::training
