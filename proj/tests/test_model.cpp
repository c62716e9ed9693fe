#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "flowmixer/model.hpp"
#include "oracles.hpp"

using namespace flowmixer;
using namespace flowmixer::model;
using linalg::Matrix;

namespace {

MixerConfig cfg(std::size_t nt, std::size_t nf, std::size_t h) {
    MixerConfig c;
    c.n_t = nt;
    c.n_f = nf;
    c.horizon = h;
    c.d_k = 3;
    return c;
}

Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

void perturb(FlowMixer& m, std::uint64_t seed, double sd = 0.3) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, sd);
    for (auto p : m.weights.params())
        for (double& v : p) v += g(rng);
    for (double& a : m.weights.revin_a.flat()) a = 1.0 + 0.1 * g(rng);
}

std::vector<MixerConfig> ablation_grid() {
    std::vector<MixerConfig> out;
    const MixerConfig base = cfg(12, 4, 6);
    out.push_back(base);
    auto add = [&](auto f) {
        MixerConfig c = base;
        f(c);
        out.push_back(c);
    };
    add([](MixerConfig& c) { c.norm_mode = NormMode::identity; });
    add([](MixerConfig& c) { c.toggles.feature_mix = false; });
    add([](MixerConfig& c) { c.toggles.time_mix = false; });
    add([](MixerConfig& c) { c.toggles.positivity = false; });
    add([](MixerConfig& c) { c.toggles.static_attention = false; });
    add([](MixerConfig& c) { c.toggles.skip = false; });
    add([](MixerConfig& c) { c.norm_mode = NormMode::td_revin; });
    add([](MixerConfig& c) { c.time_mode = TimeMode::expm; });
    add([](MixerConfig& c) { c.time_mode = TimeMode::periodic, c.periodicities = {3, 4}; });
    add([](MixerConfig& c) { c.sobr = SOBRConfig{24, 7, 0.1, 3}; });
    return out;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("config validation") {
    MixerConfig c = cfg(12, 4, 6);
    CHECK_NOTHROW(c.validate());
    c.horizon = 13;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = cfg(12, 4, 6);
    c.time_mode = TimeMode::periodic;
    c.periodicities = {5};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = cfg(12, 4, 6);
    c.dropout = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = cfg(12, 4, 6);
    c.sobr = SOBRConfig{8, 4, 0.1, 0};
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("config round-trips through text") {
    MixerConfig c = cfg(24, 3, 8);
    c.time_mode = TimeMode::periodic;
    c.periodicities = {4, 6};
    c.toggles.skip = false;
    c.norm_mode = NormMode::td_revin;
    c.sobr = SOBRConfig{48, 9, 0.2, 7};
    c.dropout = 0.25;
    c.forecast_rows = ForecastRows::tail;
    Config text;
    c.to_config(text);
    auto back = MixerConfig::from_config(Config::parse(text.to_string()));
    CHECK(back.n_t == 24);
    CHECK(back.n_f == 3);
    CHECK(back.horizon == 8);
    CHECK(back.time_mode == TimeMode::periodic);
    CHECK(back.periodicities == std::vector<std::size_t>{4, 6});
    CHECK_FALSE(back.toggles.skip);
    CHECK(back.norm_mode == NormMode::td_revin);
    REQUIRE(back.sobr);
    CHECK(back.sobr->d_t == 48);
    CHECK(back.sobr->d_f == 9);
    CHECK(back.sobr->leaky_slope == 0.2);
    CHECK(back.sobr->seed == 7);
    CHECK(back.dropout == 0.25);
    CHECK(back.forecast_rows == ForecastRows::tail);

    auto t = MixerConfig::from_config(Config::parse("[model]\ninput_len = 16\nn_f = 2\nh = 4\nexpm = true\n"));
    CHECK(t.time_mode == TimeMode::expm);
    CHECK_THROWS_AS(MixerConfig::from_config(Config::parse("[model]\ninput_len = 16\nn_f = 2\nh = 4\nrevin = maybe\n")),
                    ConfigError);
}

TEST_CASE("time mixing builders") {
    MixerConfig c = cfg(4, 2, 2);
    auto w = MixerWeights::zeros_like(c);
    w.alpha = 1.0;
    CHECK(linalg::max_abs_diff(build_time_mix(w, c), identity(4)) == 0.0);

    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) w.w0(i, j) = (i + j) % 2 ? -1.0 : 2.0;
    auto wt = build_time_mix(w, c);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            if (i == j) continue;
            CHECK(wt(i, j) >= 0.0);
            CHECK((wt(i, j) == 1.0 || wt(i, j) == 4.0));
        }

    c.toggles.positivity = false;
    CHECK(build_time_mix(w, c)(0, 1) == -1.0);
    c.toggles.skip = false;
    CHECK(build_time_mix(w, c)(0, 0) == 2.0);
    c.toggles.time_mix = false;
    CHECK(linalg::max_abs_diff(build_time_mix(w, c), identity(4)) == 0.0);

    // expm mode with W0 = 0 gives alpha I; skip off subtracts the identity.
    MixerConfig e = cfg(5, 2, 2);
    e.time_mode = TimeMode::expm;
    auto we = MixerWeights::zeros_like(e);
    we.alpha = 0.7;
    auto wte = build_time_mix(we, e);
    for (std::size_t i = 0; i < 5; ++i) CHECK(wte(i, i) == doctest::Approx(0.7).epsilon(1e-15));
    std::mt19937_64 rng(8);
    we.w0 = oracle::random_matrix(5, 5, rng, 0.4);
    auto pos = linalg::hadamard(we.w0, we.w0);
    CHECK(linalg::max_abs_diff(build_time_mix(we, e), linalg::expm(pos) * 0.7) < 1e-14);
}

TEST_CASE("periodic factor shapes") {
    MixerConfig c = cfg(1344, 7, 96);
    c.time_mode = TimeMode::periodic;
    c.periodicities = {24, 168};
    auto w = MixerWeights::zeros_like(c);
    REQUIRE(w.periodic.size() == 2);
    CHECK(w.periodic[0].r.rows() == 56);
    CHECK(w.periodic[0].s.rows() == 24);
    CHECK(w.periodic[1].r.rows() == 8);
    CHECK(w.periodic[1].s.rows() == 168);
    CHECK(w.w0.size() == 0);

    MixerConfig s = cfg(12, 2, 3);
    s.time_mode = TimeMode::periodic;
    s.periodicities = {3};
    auto ws = MixerWeights::init(s, 4);
    auto expect = identity(12) * ws.alpha +
                  linalg::kron(linalg::hadamard(ws.periodic[0].r, ws.periodic[0].r),
                               linalg::hadamard(ws.periodic[0].s, ws.periodic[0].s));
    CHECK(linalg::max_abs_diff(build_time_mix(ws, s), expect) < 1e-15);
}

TEST_CASE("feature mixing builder") {
    MixerConfig c = cfg(6, 5, 2);
    auto w = MixerWeights::init(c, 3);
    w.beta = 0.0;
    CHECK(linalg::max_abs_diff(build_feature_mix(w, c), identity(5)) == 0.0);

    w.beta = 1.0;
    w.q = Matrix(5, 3);
    w.k = Matrix(5, 3);
    auto wf = build_feature_mix(w, c);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) CHECK(wf(i, j) == doctest::Approx(((i == j) + 0.2) / 2).epsilon(1e-15));

    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        auto wr = MixerWeights::init(c, std::uint64_t(trial));
        wr.q = oracle::random_matrix(5, 3, rng, 2.0);
        wr.k = oracle::random_matrix(5, 3, rng, 2.0);
        wr.beta = std::uniform_real_distribution<double>(-3, 3)(rng);
        auto f = build_feature_mix(wr, c);
        for (std::size_t i = 0; i < 5; ++i) {
            double s = 0;
            for (std::size_t j = 0; j < 5; ++j) {
                s += f(i, j);
                CHECK(f(i, j) >= 0.0);
            }
            CHECK(std::abs(s - 1.0) < 1e-12);
        }
        auto eig = linalg::eig_general(f);
        double top = 0;
        std::size_t arg = 0;
        for (std::size_t k = 0; k < eig.values.size(); ++k)
            if (std::abs(eig.values[k]) > top) top = std::abs(eig.values[k]), arg = k;
        CHECK(std::abs(top - 1.0) < 1e-10);
        for (std::size_t i = 1; i < 5; ++i) CHECK(std::abs(eig.vectors(i, arg) - eig.vectors(0, arg)) < 1e-8);
    }

    c.toggles.static_attention = false;
    auto wfree = MixerWeights::init(c, 1);
    CHECK(linalg::max_abs_diff(build_feature_mix(wfree, c), identity(5)) == 0.0);
    wfree.wf_free(1, 2) = -4.0;
    CHECK(build_feature_mix(wfree, c)(1, 2) == -4.0);
    c.toggles.feature_mix = false;
    CHECK(linalg::max_abs_diff(build_feature_mix(wfree, c), identity(5)) == 0.0);
}

TEST_CASE("revin normalization") {
    MixerConfig c = cfg(8, 3, 2);
    auto w = MixerWeights::init(c, 0);
    std::mt19937_64 rng(2);
    Matrix x = oracle::random_matrix(8, 3, rng);
    // Make columns exactly zero mean and unit population variance.
    for (std::size_t j = 0; j < 3; ++j) {
        double m = 0, v = 0;
        for (std::size_t i = 0; i < 8; ++i) m += x(i, j) / 8;
        for (std::size_t i = 0; i < 8; ++i) v += (x(i, j) - m) * (x(i, j) - m) / 8;
        for (std::size_t i = 0; i < 8; ++i) x(i, j) = (x(i, j) - m) / std::sqrt(v);
    }
    auto [xn, st] = revin_apply(x, w, c);
    CHECK(linalg::max_abs_diff(xn, x) < 1e-5);

    Matrix k(8, 3, 4.25);
    auto [kn, ks] = revin_apply(k, w, c);
    CHECK(linalg::max_abs(kn) == 0.0);
    CHECK(linalg::max_abs_diff(revin_invert(kn, ks, w, c), k) == 0.0);

    for (auto mode : {NormMode::revin, NormMode::td_revin}) {
        MixerConfig cm = c;
        cm.norm_mode = mode;
        FlowMixer m = FlowMixer::create(cm, 1);
        perturb(m, 9);
        Matrix r = oracle::random_matrix(8, 3, rng, 5.0);
        auto [rn, rs] = revin_apply(r, m.weights, cm);
        CHECK(linalg::max_abs_diff(revin_invert(rn, rs, m.weights, cm), r) < 1e-10);
    }

    MixerConfig id = c;
    id.norm_mode = NormMode::identity;
    auto wid = MixerWeights::init(id, 0);
    Matrix y = oracle::random_matrix(8, 3, rng);
    CHECK(linalg::max_abs_diff(revin_invert(y, InstanceStats{}, wid, id), y) == 0.0);

    // td_revin inverts row t with parameter row t.
    MixerConfig td = c;
    td.norm_mode = NormMode::td_revin;
    auto wt = MixerWeights::init(td, 0);
    for (std::size_t t = 0; t < 8; ++t)
        for (std::size_t j = 0; j < 3; ++j) wt.revin_a(t, j) = 0.5 + double(t), wt.revin_b(t, j) = double(j) - 1;
    InstanceStats s{{1.0, -2.0, 0.5}, {2.0, 0.5, 3.0}};
    Matrix inv = revin_invert(y, s, wt, td);
    for (std::size_t t = 0; t < 8; ++t)
        for (std::size_t j = 0; j < 3; ++j) {
            const double direct = (y(t, j) - (double(j) - 1)) / (0.5 + double(t)) * s.std[j] + s.mean[j];
            CHECK(inv(t, j) == doctest::Approx(direct).epsilon(1e-14));
        }
    wt.revin_a(3, 1) = 0.0;
    CHECK_THROWS_AS(revin_invert(y, s, wt, td), NumericError);
}

TEST_CASE("sobr lift") {
    // 0.1 is not a binary fraction, so the round trip is exact only to one ulp.
    CHECK(std::abs(leaky_inverse(leaky(-3.0, 0.1), 0.1) + 3.0) <= 4.5e-16);
    CHECK(leaky_inverse(leaky(-3.0, 0.125), 0.125) == -3.0);
    CHECK(leaky(-3.0, 0.1) == doctest::Approx(-0.3));
    CHECK(leaky(2.0, 0.1) == 2.0);

    MixerConfig c = cfg(32, 3, 8);
    c.sobr = SOBRConfig{1024, 64, 0.1, 0};
    auto maps = SOBRMaps::make(c);
    CHECK(maps.u_t.rows() == 1024);
    CHECK(maps.u_f.rows() == 64);
    auto gt = linalg::matmul_tn(maps.u_t, maps.u_t);
    auto gf = linalg::matmul_tn(maps.u_f, maps.u_f);
    CHECK(linalg::max_abs_diff(gt, identity(32)) < 1e-12);
    CHECK(linalg::max_abs_diff(gf, identity(3)) < 1e-12);
    std::mt19937_64 rng(6);
    Matrix x = oracle::random_matrix(32, 3, rng);
    auto z = sobr_apply(x, maps);
    CHECK(z.rows() == 1024);
    CHECK(z.cols() == 64);
    CHECK(linalg::max_abs_diff(sobr_invert(z, maps), x) < 1e-9);
    CHECK(linalg::max_abs(sobr_invert(Matrix(1024, 64), maps)) == 0.0);

    maps.leaky_slope = 1.0;
    auto zl = sobr_apply(x, maps);
    auto lin = linalg::matmul_nt(linalg::matmul(maps.u_t, x), maps.u_f);
    CHECK(linalg::max_abs_diff(zl, lin) < 1e-14);
    CHECK(linalg::max_abs_diff(sobr_invert(zl, maps), x) < 1e-10);
    CHECK_THROWS_AS(sobr_apply(Matrix(31, 3), maps), DimensionError);

    // Same seed gives the same lift.
    auto again = SOBRMaps::make(c);
    CHECK(linalg::max_abs_diff(again.u_t, SOBRMaps::make(c).u_t) == 0.0);
}

TEST_CASE("forward") {
    MixerConfig c = cfg(6, 3, 2);
    c.norm_mode = NormMode::identity;
    c.toggles.feature_mix = false;
    c.toggles.time_mix = false;
    FlowMixer m = FlowMixer::create(c, 1);
    std::mt19937_64 rng(3);
    Matrix x = oracle::random_matrix(6, 3, rng);
    CHECK(linalg::max_abs_diff(forward(x, m), x) == 0.0);

    MixerConfig two = cfg(2, 2, 1);
    two.norm_mode = NormMode::identity;
    two.toggles.static_attention = false;
    two.toggles.positivity = false;
    two.toggles.skip = false;
    FlowMixer m2 = FlowMixer::create(two, 0);
    m2.weights.w0 = Matrix{{1, 2}, {3, 4}};
    m2.weights.wf_free = Matrix{{0, 1}, {1, 1}};
    Matrix x2{{1, -1}, {2, 0.5}};
    // W_t X = [[5, 0], [11, -1]]; times W_f^T = [[0, 1], [1, 1]].
    Matrix expect{{0, 5}, {-1, 10}};
    CHECK(linalg::max_abs_diff(forward(x2, m2), expect) < 1e-15);

    std::uint64_t seed = 1;
    for (const auto& gc : ablation_grid()) {
        FlowMixer gm = FlowMixer::create(gc, seed++);
        Matrix gx = oracle::random_matrix(gc.n_t, gc.n_f, rng);
        auto out = forward(gx, gm);
        CHECK(out.rows() == gc.n_t);
        CHECK(out.cols() == gc.n_f);
        CHECK(linalg::all_finite(out));
    }
    CHECK_THROWS_AS(forward(Matrix(5, 3), m), DimensionError);
}

TEST_CASE("dropout is inactive at inference and scales by the keep rate in training") {
    MixerConfig c = cfg(8, 3, 2);
    c.dropout = 0.5;
    FlowMixer m = FlowMixer::create(c, 1);
    std::mt19937_64 rng(3);
    Matrix x = oracle::random_matrix(8, 3, rng);
    auto a = forward(x, m);
    auto b = forward(x, m);
    CHECK(linalg::max_abs_diff(a, b) == 0.0);
    ForwardOptions opt;
    opt.training = true;
    opt.rng = &rng;
    Trace tr;
    forward_with(x, m, build_mixing(m.weights, c), opt, &tr);
    REQUIRE(tr.mask.size() == 24);
    for (double v : tr.mask.flat()) CHECK((v == 0.0 || v == 2.0));
}

TEST_CASE("kronecker vec identity on built mixing matrices") {
    std::mt19937_64 rng(14);
    for (const auto& gc : ablation_grid()) {
        if (gc.sobr) continue;
        MixerConfig c = gc;
        c.norm_mode = NormMode::identity;
        FlowMixer m = FlowMixer::create(c, 3);
        perturb(m, 5);
        auto wt = build_time_mix(m.weights, c);
        auto wf = build_feature_mix(m.weights, c);
        Matrix x = oracle::random_matrix(c.n_t, c.n_f, rng);
        auto lhs = linalg::vec(forward(x, m));
        auto rhs = linalg::matmul(linalg::kron(wf, wt), linalg::vec(x));
        CHECK(linalg::max_abs_diff(lhs, rhs) < 1e-10);
    }
}

TEST_CASE("composition") {
    MixerConfig c = cfg(6, 4, 3);
    c.norm_mode = NormMode::identity;
    FlowMixer a = FlowMixer::create(c, 1), b = FlowMixer::create(c, 2);
    perturb(a, 3);
    perturb(b, 4);
    std::mt19937_64 rng(5);
    Matrix x = oracle::random_matrix(6, 4, rng);
    auto pair = compose(a, b);
    auto two = forward(forward(x, a), b);
    CHECK(linalg::max_abs_diff(two, apply_mixing(x, a, pair.wt, pair.wf)) < 1e-12);

    MixerConfig idc = c;
    idc.toggles.time_mix = false;
    idc.toggles.feature_mix = false;
    FlowMixer id = FlowMixer::create(idc, 0);
    auto with_id = compose(a, id);
    CHECK(linalg::max_abs_diff(with_id.wt, build_time_mix(a.weights, c)) < 1e-15);
    CHECK(linalg::max_abs_diff(with_id.wf, build_feature_mix(a.weights, c)) < 1e-15);

    // Shared frozen RevIN statistics.
    MixerConfig rc = c;
    rc.norm_mode = NormMode::revin;
    FlowMixer ra = FlowMixer::create(rc, 1), rb = FlowMixer::create(rc, 2);
    perturb(ra, 6);
    rb.weights.revin_a = ra.weights.revin_a;
    rb.weights.revin_b = ra.weights.revin_b;
    perturb(rb, 7);
    rb.weights.revin_a = ra.weights.revin_a;
    rb.weights.revin_b = ra.weights.revin_b;
    auto [xn, st] = revin_apply(x, ra.weights, rc);
    ForwardOptions fo;
    fo.frozen_stats = &st;
    auto seq = forward(forward(x, ra, fo), rb, fo);
    auto rp = compose(ra, rb);
    CHECK(linalg::max_abs_diff(seq, apply_mixing(x, ra, rp.wt, rp.wf, &st)) < 1e-11);

    MixerConfig s5 = cfg(5, 2, 2);
    s5.norm_mode = NormMode::identity;
    s5.toggles.feature_mix = false;
    FlowMixer p = FlowMixer::create(s5, 8);
    perturb(p, 9);
    auto sq = compose(p, p);
    auto e1 = linalg::eig_general(build_time_mix(p.weights, s5));
    auto e2 = linalg::eig_general(sq.wt);
    std::vector<linalg::cdouble> squares;
    for (auto v : e1.values) squares.push_back(v * v);
    for (auto v : e2.values) {
        double best = 1e300;
        for (auto s : squares) best = std::min(best, std::abs(s - v));
        CHECK(best < 1e-9 * std::max(1.0, std::abs(v)));
    }

    MixerConfig sc = c;
    sc.sobr = SOBRConfig{12, 6, 0.1, 0};
    FlowMixer sa = FlowMixer::create(sc, 0);
    CHECK_THROWS_AS(compose(sa, sa), ConfigError);
    MixerConfig other = c;
    other.norm_mode = NormMode::revin;
    CHECK_THROWS_AS(compose(a, FlowMixer::create(other, 0)), ConfigError);
}

TEST_CASE("checkpoint round-trip") {
    auto dir = std::filesystem::temp_directory_path() / "flowmixer_ckpt_test";
    std::filesystem::remove_all(dir);
    for (const auto& gc : ablation_grid()) {
        FlowMixer m = FlowMixer::create(gc, 21);
        perturb(m, 22);
        save_checkpoint(dir, m);
        FlowMixer back = load_checkpoint(dir);
        std::mt19937_64 rng(1);
        Matrix x = oracle::random_matrix(gc.n_t, gc.n_f, rng);
        CHECK(linalg::max_abs_diff(forward(x, m), forward(x, back)) == 0.0);
    }
    std::filesystem::remove_all(dir);
    CHECK_THROWS(load_checkpoint(dir));
}

TEST_CASE("initialization is seeded") {
    MixerConfig c = cfg(10, 3, 2);
    auto a = MixerWeights::init(c, 5), b = MixerWeights::init(c, 5), d = MixerWeights::init(c, 6);
    CHECK(linalg::max_abs_diff(a.w0, b.w0) == 0.0);
    CHECK(linalg::max_abs_diff(a.w0, d.w0) > 0.0);
    CHECK(a.alpha == 1.0);
    CHECK(a.beta == 1.0);
}

}
