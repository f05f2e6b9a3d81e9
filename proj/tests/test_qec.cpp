#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "resq/qec.hpp"

using namespace resq;

namespace {

DeviceParams noiseless_device() {
    auto cfg = default_device_config();
    cfg["device.T1"] = "1e9";
    cfg["device.T2echo"] = "2e9";
    return derive_params(cfg);
}

}  // namespace

TEST_CASE("ideal outcome sequences") {
    CHECK(ideal_outcome(Variant::flipping, 1) == 0);
    CHECK(ideal_outcome(Variant::flipping, 2) == 1);
    CHECK(ideal_outcome(Variant::flipping, 5) == 0);
    CHECK(ideal_outcome(Variant::nonflipping_0, 7) == 0);
    CHECK(ideal_outcome(Variant::nonflipping_1, 7) == 1);
}

TEST_CASE("event classification basics") {
    std::vector<int> clean = {0, 1, 0, 1, 0};
    CHECK(!classify_event(clean, Variant::flipping).has_value());

    std::vector<int> flip = {0, 1, 0, 0, 1};  // complement continues: bit flip
    auto rec = classify_event(flip, Variant::flipping);
    REQUIRE(rec.has_value());
    CHECK(rec->rounds_to_event == 4);
    CHECK(rec->type == 's');

    std::vector<int> meas = {0, 1, 0, 0, 0};  // ideal resumes: measurement error
    rec = classify_event(meas, Variant::flipping);
    REQUIRE(rec.has_value());
    CHECK(rec->rounds_to_event == 4);
    CHECK(rec->type == 'd');

    std::vector<int> nf = {0, 0, 1, 1};
    rec = classify_event(nf, Variant::nonflipping_0);
    REQUIRE(rec.has_value());
    CHECK(rec->rounds_to_event == 3);
    CHECK(rec->type == 's');

    std::vector<int> truncated = {0, 1, 0, 0};
    CHECK_THROWS_WITH_AS(classify_event(truncated, Variant::flipping),
                         doctest::Contains("TruncatedAfterEvent"), Error);
}

TEST_CASE("all four error mechanisms classify as s, s, d, d in both variants") {
    // flipping variant (ideal 0,1,0,1,0,1)
    std::vector<std::vector<int>> fl = {
        {0, 1, 0, 0, 1, 0},  // single ancilla flip: complement from round 4
        {0, 1, 0, 0, 1, 1},  // measurement errors in rounds 4 and 5
        {0, 1, 0, 0, 0, 1},  // single measurement error in round 4
        {0, 1, 0, 0, 0, 1},  // flips in rounds 4 and 5 (same signature)
    };
    // nonflipping_0 variant (ideal all zeros)
    std::vector<std::vector<int>> nf = {
        {0, 0, 0, 1, 1, 1},  // single flip
        {0, 0, 0, 1, 1, 0},  // double measurement error
        {0, 0, 0, 1, 0, 0},  // single measurement error
        {0, 0, 0, 1, 0, 0},  // double flip
    };
    const char expected[4] = {'s', 's', 'd', 'd'};
    for (int m = 0; m < 4; ++m) {
        auto a = classify_event(fl[m], Variant::flipping);
        auto b = classify_event(nf[m], Variant::nonflipping_0);
        REQUIRE(a.has_value());
        REQUIRE(b.has_value());
        CHECK(a->rounds_to_event == 4);
        CHECK(b->rounds_to_event == 4);
        CHECK(a->type == expected[m]);
        CHECK(b->type == expected[m]);
    }
}

TEST_CASE("probability conservation through one cycle") {
    auto p = default_device();
    CycleConfig cfg;
    Branch b;
    b.rho = QubitDensityMatrix::equator();
    b.field_label = 1;
    b.weight = 0.73;
    auto out = simple_model_cycle({b}, cfg, p);
    double total = 0;
    for (const auto& sb : out) total += sb.weight * sb.rho.trace();
    CHECK(total == doctest::Approx(0.73).epsilon(1e-12));
}

TEST_CASE("invalid branch weights are rejected") {
    auto p = default_device();
    CycleConfig cfg;
    Branch b;
    b.weight = 1.5;
    CHECK_THROWS_WITH_AS(simple_model_cycle({b}, cfg, p),
                         doctest::Contains("InvalidBranchWeights"), Error);
    b.weight = -0.1;
    CHECK_THROWS_WITH_AS(simple_model_cycle({b}, cfg, p),
                         doctest::Contains("InvalidBranchWeights"), Error);
}

TEST_CASE("extensive model requires an envelope and the low-photon regime") {
    auto p = default_device();
    CycleConfig cfg;
    cfg.model = Model::extensive;
    Branch b;
    b.rho = QubitDensityMatrix::basis(1);
    b.field_label = 1;
    CHECK_THROWS_WITH_AS(extensive_model_cycle({b}, cfg, p),
                         doctest::Contains("EnvelopeMissing"), Error);

    ResidualFieldInput env;
    env.nbar[0] = env.nbar[1] = 50.0;  // >= 8 at the window start
    cfg.photons = env;
    cfg.tau_d = 100e-9;
    CHECK_THROWS_WITH_AS(extensive_model_cycle({b}, cfg, p),
                         doctest::Contains("PhotonRegimeViolation"), Error);
}

TEST_CASE("simple and extensive models coincide at zero photons") {
    auto p = default_device();
    CycleConfig simple_cfg;
    CycleConfig ext_cfg;
    ext_cfg.model = Model::extensive;
    ext_cfg.photons = ResidualFieldInput{};  // identically zero field
    std::vector<Branch> in;
    Branch b;
    b.rho = QubitDensityMatrix::equator(0.6);
    b.field_label = 0;
    b.weight = 0.5;
    in.push_back(b);
    b.rho = QubitDensityMatrix::basis(1);
    b.field_label = 1;
    b.weight = 0.3;
    in.push_back(b);
    auto s = simple_model_cycle(in, simple_cfg, p);
    auto e = extensive_model_cycle(in, ext_cfg, p);
    REQUIRE(s.size() == e.size());
    for (size_t k = 0; k < s.size(); ++k) {
        CHECK(s[k].weight == doctest::Approx(e[k].weight).epsilon(1e-12));
        CHECK(s[k].outcome == e[k].outcome);
        CHECK(s[k].field_label == e[k].field_label);
        CHECK(std::abs(s[k].rho.m01 - e[k].rho.m01) < 1e-12);
        CHECK(std::abs(s[k].rho.m11 - e[k].rho.m11) < 1e-12);
    }
}

TEST_CASE("photon integrals match numerical quadrature") {
    auto p = default_device();
    ResidualFieldInput env;
    env.nbar[0] = 1.7;
    env.nbar[1] = 0.6;
    env.tau_ref = 400e-9;
    env.theta0 = 0.9;
    double t0 = 520e-9, t1 = 600e-9;
    for (int label = 0; label < 2; ++label) {
        double two_chi = 2.0 * p.chi;
        auto gd = [&](double t) {
            return two_chi * env.nbar[label] * std::exp(-p.kappa * (t - env.tau_ref)) *
                   std::sin(two_chi * t + env.theta0);
        };
        auto bb = [&](double t) {
            return two_chi * env.nbar[label] * std::exp(-p.kappa * (t - env.tau_ref)) *
                   std::cos(two_chi * t + env.theta0);
        };
        // Simpson's rule oracle
        auto simpson = [&](auto f) {
            const int n = 20000;
            double h = (t1 - t0) / n;
            double acc = f(t0) + f(t1);
            for (int k = 1; k < n; ++k) acc += f(t0 + k * h) * (k % 2 ? 4.0 : 2.0);
            return acc * h / 3.0;
        };
        CHECK(gamma_d_integral(env, label, t0, t1, p) ==
              doctest::Approx(simpson(gd)).epsilon(1e-8));
        CHECK(stark_integral(env, label, t0, t1, p) ==
              doctest::Approx(simpson(bb)).epsilon(1e-8));
    }
}

TEST_CASE("Stark phase cancels for a field symmetric about the pi pulse") {
    // kappa -> 0 and theta0 aligned to the echo midpoint make B(t) symmetric
    auto cfg_map = default_device_config();
    cfg_map["device.inv_kappa"] = "1e3";  // effectively undamped over 160 ns
    auto p = derive_params(cfg_map);
    CycleConfig cfg;
    double ta0 = cfg.tau_d + CycleConfig::kGatePad;
    double t_mid = ta0 + CycleConfig::kEchoWindow / 2;
    ResidualFieldInput env;
    env.nbar[0] = 2.0;
    env.theta0 = -2.0 * p.chi * t_mid;
    double a = stark_integral(env, 0, ta0, t_mid, p);
    double b = stark_integral(env, 0, t_mid, t_mid + CycleConfig::kEchoWindow / 2, p);
    CHECK(std::abs(a - b) < 1e-9 * std::max(1.0, std::abs(a)));
}

TEST_CASE("measurement-error-only chain is geometric with RTE 1000") {
    auto p = noiseless_device();
    CycleConfig cfg;  // f_d = 0.999
    auto stats = rte_exact(cfg, p);
    CHECK(stats.rte == doctest::Approx(1000.0).epsilon(1e-3));
    CHECK(stats.p_d == doctest::Approx(0.001).epsilon(0.01));
    CHECK(stats.p_s < 5e-6);
    CHECK(stats.residual < 1e-6);

    auto mc = rte_monte_carlo(cfg, p, 20000, 20000, 99, 4);
    CHECK(mc.rte_defined);
    CHECK(std::abs(mc.rte - stats.rte) < 3.0 * mc.rte_err);
}

TEST_CASE("nonflipping ceiling matches the closed form") {
    auto p = default_device();
    CycleConfig cfg;
    cfg.variant = Variant::nonflipping_0;
    auto stats = rte_exact(cfg, p);
    double h = CycleConfig::kEchoWindow / 2.0;
    double p_phi = 0.5 * (1.0 - std::exp(-2.0 * h / p.T2echo));
    double p1 = p_phi * std::exp(-CycleConfig::kGatePad / p.T1);
    double q = 1.0 - std::exp(-p.tau_r / p.T1);
    double p_dev = (1.0 - p1) * (1.0 - cfg.f_d) +
                   p1 * ((1.0 - q) * cfg.f_d + 0.5 * q);
    CHECK(stats.rte == doctest::Approx(1.0 / p_dev).epsilon(1e-3));
}

TEST_CASE("deterministic error-free chain: all traces censored") {
    auto p = noiseless_device();
    CycleConfig cfg;
    cfg.f_d = 1.0;
    auto mc = rte_monte_carlo(cfg, p, 50, 200, 7);
    CHECK_FALSE(mc.rte_defined);
    CHECK(mc.n_censored == 50);
    CHECK(mc.n_events == 0);
    CHECK_THROWS_WITH_AS(rte_exact(cfg, p), doctest::Contains("NonConvergent"),
                         Error);
}

TEST_CASE("Monte Carlo agrees with exact for a decohering flipping chain") {
    auto p = default_device();
    CycleConfig cfg;
    cfg.tau_d = 1000e-9;
    auto exact = rte_exact(cfg, p);
    auto mc = rte_monte_carlo(cfg, p, 30000, 2000, 4242, 4);
    CHECK(std::abs(mc.rte - exact.rte) < 3.0 * mc.rte_err);
    CHECK(mc.frac_s + mc.frac_d == doctest::Approx(1.0).epsilon(1e-12));
    double se_frac = std::sqrt(mc.frac_s * (1 - mc.frac_s) / double(mc.n_events));
    CHECK(std::abs(mc.frac_s - exact.frac_s) < 4.0 * se_frac + 1e-6);
}

TEST_CASE("Monte Carlo results are independent of the worker count") {
    auto p = default_device();
    CycleConfig cfg;
    std::vector<std::vector<int>> t1, t4;
    auto a = rte_monte_carlo(cfg, p, 3000, 500, 11, 1, &t1);
    auto b = rte_monte_carlo(cfg, p, 3000, 500, 11, 4, &t4);
    CHECK(a.rte == b.rte);
    CHECK(a.n_events == b.n_events);
    CHECK(a.frac_s == b.frac_s);
    REQUIRE(t1.size() == t4.size());
    for (size_t k = 0; k < t1.size(); ++k) CHECK(t1[k] == t4[k]);
}

TEST_CASE("split_seed decorrelates and reproduces") {
    CHECK(split_seed(1, 0) == split_seed(1, 0));
    CHECK(split_seed(1, 0) != split_seed(1, 1));
    CHECK(split_seed(1, 0) != split_seed(2, 0));
}

TEST_CASE("tau_d sweep marks gated points and matches single calls") {
    auto p = default_device();
    CycleConfig tmpl;
    tmpl.model = Model::extensive;
    ResidualFieldInput env;
    env.nbar[0] = 40.0;  // violates the regime gate for small tau_d
    env.nbar[1] = 20.0;
    env.tau_ref = 0;
    tmpl.photons = env;
    std::vector<double> taus = {100e-9, 1500e-9};
    auto pts = sweep_tau_d(tmpl, taus, p, 2);
    REQUIRE(pts.size() == 2);
    CHECK(pts[0].gated);
    CHECK_FALSE(pts[1].gated);
    CycleConfig one = tmpl;
    one.tau_d = 1500e-9;
    auto direct = rte_exact(one, p);
    CHECK(pts[1].rte == doctest::Approx(direct.rte).epsilon(1e-12));
}

TEST_CASE("residual photons shorten the flipping RTE") {
    auto p = default_device();
    CycleConfig clean;
    clean.tau_d = 700e-9;
    CycleConfig dirty = clean;
    dirty.model = Model::extensive;
    ResidualFieldInput env;
    env.nbar[0] = 4.0;
    env.nbar[1] = 2.0;
    env.tau_ref = 0;
    dirty.photons = env;
    auto r_clean = rte_exact(clean, p);
    auto r_dirty = rte_exact(dirty, p);
    CHECK(r_dirty.rte < r_clean.rte);
}
