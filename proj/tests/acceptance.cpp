// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Each check carries its own independent oracle or reference value.
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "resq/cavity.hpp"
#include "resq/depletion.hpp"
#include "resq/params.hpp"
#include "resq/powell.hpp"
#include "resq/qec.hpp"
#include "resq/qubit.hpp"
#include "resq/readout.hpp"

using namespace resq;

namespace {

struct Criterion {
    std::string name;
    std::function<bool(std::string&)> run;
};

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

double wrap_diff(double a, double b) {
    double d = std::fmod(std::abs(a - b), kTwoPi);
    return std::min(d, kTwoPi - d);
}

// ---- 1: linear-cavity integrator vs piecewise analytic solution ----------
bool crit_linear_cavity(std::string& info) {
    auto p = default_device();
    PulseSequence seq;
    seq.tones.push_back(make_tone(6.8488e9, p, 0.0, 300e-9, 1.8e7, 0.3));
    seq.tones.push_back(make_tone(6.8506e9, p, 300e-9, 630e-9, 9e6, 4.1));
    seq.tones.push_back(make_tone(6.8480e9, p, 300e-9, 630e-9, 6e6, 1.2));
    seq.tones.push_back(make_tone(6.8496e9, p, 1800e-9, 2300e-9, 1.2e7, 2.6));
    seq.total_duration = 3e-6;
    double worst = 0;
    for (int state = 0; state < 2; ++state) {
        auto traj = evolve_field(seq, state, p, 1e-9);
        double peak = 0;
        for (size_t k = 0; k < traj.alpha.size(); ++k)
            peak = std::max(peak, std::abs(traj.alpha[k]));
        for (size_t k = 0; k < traj.alpha.size(); ++k) {
            double t = traj.t0 + double(k) * traj.dt;
            cplx ref = analytic_linear_field(seq, state, p, t);
            worst = std::max(worst, std::abs(traj.alpha[k] - ref) / peak);
        }
    }
    info = "worst relative error " + num(worst);
    return worst <= 1e-6;
}

// ---- 2: ringdown decay-rate recovery -------------------------------------
bool crit_decay_rate(std::string& info) {
    auto p = default_device();
    PulseSequence seq;
    seq.tones.push_back(make_tone(6.8488e9, p, 0.0, 300e-9, 1.8e7, 0.0));
    seq.total_duration = 1800e-9;
    auto traj = evolve_field(seq, 0, p, 1e-9);
    std::vector<double> nb;
    for (size_t k = 400; k < traj.alpha.size(); ++k) nb.push_back(traj.nbar(k));
    auto fit = fit_exponential_decay(nb, 1e-9);
    double inv_kappa_ns = 1e9 / fit.rate;
    info = "fitted 1/kappa " + num(inv_kappa_ns) +
           " ns (configured 250, measured reference 255 +/- 5)";
    return std::abs(inv_kappa_ns - 250.0) <= 2.5;
}

// ---- 3: optimizer correctness --------------------------------------------
bool crit_powell(std::string& info) {
    auto rosen = [](const std::vector<double>& x) {
        double a = 1.0 - x[0], b = x[1] - x[0] * x[0];
        return a * a + 100.0 * b * b;
    };
    OptimizerOptions opt;
    opt.initial = {-1.2, 1.0};
    opt.max_evaluations = 2000;
    opt.f_tol = 1e-14;
    opt.x_tol = 1e-12;
    auto res = minimize(rosen, opt);
    bool rosen_ok = std::abs(res.best_point[0] - 1.0) < 1e-4 &&
                    std::abs(res.best_point[1] - 1.0) < 1e-4 &&
                    res.evaluations <= 2000;

    int failures = 0;
    for (int n : {2, 4}) {
        std::mt19937_64 rng(1000 + n);
        std::normal_distribution<double> g(0.0, 1.0);
        for (int seed = 0; seed < 100; ++seed) {
            std::vector<std::vector<double>> m(n, std::vector<double>(n));
            for (auto& row : m)
                for (auto& v : row) v = g(rng);
            std::vector<std::vector<double>> a(n, std::vector<double>(n, 0.0));
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    for (int k = 0; k < n; ++k) a[i][j] += m[k][i] * m[k][j];
                    if (i == j) a[i][j] += n;
                }
            std::vector<double> c(n);
            for (auto& v : c) v = g(rng);
            auto f = [&](const std::vector<double>& x) {
                double s = 0;
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j)
                        s += (x[i] - c[i]) * a[i][j] * (x[j] - c[j]);
                return s;
            };
            OptimizerOptions qo;
            qo.initial.assign(n, 0.0);
            qo.line_tol = 1e-10;
            qo.f_tol = 1e-20;
            qo.x_tol = 1e-14;
            auto qr = minimize(f, qo);
            int reached = -1;
            for (const auto& rec : qr.trace) {
                double err = 0;
                for (int i = 0; i < n; ++i)
                    err = std::max(err, std::abs(rec.point[i] - c[i]));
                if (err < 1e-3) {
                    reached = rec.iteration;
                    break;
                }
            }
            if (reached < 0 || reached > n) ++failures;
        }
    }
    info = "Rosenbrock evals " + std::to_string(res.evaluations) +
           ", quadratic failures " + std::to_string(failures) + "/200";
    return rosen_ok && failures == 0;
}

// ---- 4: depletion tuneup recovers the linear oracle ----------------------
bool crit_depletion_oracle(std::string& info) {
    auto p = default_device();
    ReadoutConfig meas;
    meas.amplitude = 1.8e7;
    TwoStepOptions opt;
    opt.fine_tau_d = 400e-9;
    auto rep = two_step_optimize(DepletionKind::unconditional, {}, {}, meas, p,
                                 opt);
    auto oracle =
        linear_oracle_unconditional(meas, rep.unconditional.tau_p, p);
    double amp_err = 0, ph_err = 0;
    for (int j = 0; j < 2; ++j) {
        amp_err = std::max(amp_err,
                           std::abs(rep.unconditional.amplitude[j] -
                                    oracle.amplitude[j]) /
                               oracle.amplitude[j]);
        ph_err = std::max(ph_err, wrap_diff(rep.unconditional.phase[j],
                                            oracle.phase[j]));
    }
    double resid = std::max(rep.residual[0], rep.residual[1]);
    info = "amp err " + num(amp_err) + ", phase err " + num(ph_err) +
           " rad, residual nbar " + num(resid);
    return amp_err <= 0.01 && ph_err <= 0.02 && resid < 1e-4;
}

// ---- 5: nonlinear-regime benefit (Kerr test value K = 3e4 rad/s) ---------
bool crit_kerr_benefit(std::string& info) {
    auto cfg = default_device_config();
    cfg["device.kerr"] = "3e4";
    auto p = derive_params(cfg);
    ReadoutConfig meas;
    meas.amplitude = 1.8e7;
    TwoStepOptions opt;
    opt.fine_tau_d = 400e-9;
    auto rep = two_step_optimize(DepletionKind::unconditional, {}, {}, meas, p,
                                 opt);
    PulseSequence bare;
    bare.tones.push_back(
        make_tone(meas.f_rf, p, 0.0, meas.tau_r, meas.amplitude, 0.0));
    bare.total_duration = meas.tau_r;
    double t_eval = meas.tau_r + 400e-9;
    double worst_ratio = 1e300;
    for (int s = 0; s < 2; ++s) {
        double passive = residual_nbar(bare, s, t_eval, p);
        double active = std::max(rep.residual[s], 1e-30);
        worst_ratio = std::min(worst_ratio, passive / active);
    }
    info = "passive/active ratio " + num(worst_ratio);
    return worst_ratio >= 10.0;
}

// ---- 6: geometric RTE with measurement errors only -----------------------
bool crit_rte_geometric(std::string& info) {
    auto cfg = default_device_config();
    cfg["device.T1"] = "1e9";
    cfg["device.T2echo"] = "2e9";
    auto p = derive_params(cfg);
    CycleConfig cc;  // f_d = 0.999
    auto exact = rte_exact(cc, p);
    auto mc = rte_monte_carlo(cc, p, 100000, 20000, 20260823, 4);
    double pull = std::abs(mc.rte - exact.rte) / mc.rte_err;
    info = "exact " + num(exact.rte) + ", MC " + num(mc.rte) + " +/- " +
           num(mc.rte_err) + " (" + num(pull) + " sigma)";
    return std::abs(exact.rte - 1000.0) <= 1.0 && mc.rte_defined && pull <= 3.0;
}

// ---- 7: exact vs Monte Carlo across the tau_d grid -----------------------
bool crit_exact_vs_mc(std::string& info) {
    auto p = default_device();
    struct Scheme {
        const char* name;
        double nbar[2];
        double tau_ref;
    };
    const Scheme schemes[] = {{"conditional", {2.1, 0.7}, 360e-9},
                              {"unconditional", {0.8, 0.4}, 330e-9}};
    const double taus[] = {700e-9, 1000e-9, 1500e-9, 2200e-9, 3000e-9};
    double worst_pull = 0;
    uint64_t task = 0;
    for (const auto& s : schemes) {
        CycleConfig cc;
        cc.model = Model::extensive;
        ResidualFieldInput env;
        env.nbar[0] = s.nbar[0];
        env.nbar[1] = s.nbar[1];
        env.tau_ref = s.tau_ref;
        cc.photons = env;
        for (double tau : taus) {
            cc.tau_d = tau;
            auto exact = rte_exact(cc, p);
            auto mc = rte_monte_carlo(cc, p, 20000, 5000,
                                      split_seed(7, task++), 4);
            worst_pull = std::max(
                worst_pull, std::abs(mc.rte - exact.rte) / mc.rte_err);
        }
    }
    info = "worst pull " + num(worst_pull) + " sigma over 10 grid points";
    return worst_pull <= 3.0;
}

// ---- 8: depletion-scheme RTE trend and magnitude -------------------------
bool crit_rte_trend(std::string& info) {
    auto p = default_device();
    struct Scheme {
        const char* name;
        double nbar[2];
        double tau_ref;
        double theta0;
    };
    // Photon-history calibration: post-depletion residuals for the active
    // schemes; for passive, a strong measurement leaves the full field at the
    // measurement end (here ~3 n_crit for the ground-state envelope).
    const Scheme schemes[] = {{"passive", {100.0, 235.0}, 0.0, 0.0},
                              {"conditional", {2.1, 0.7}, 360e-9, 0.0},
                              {"unconditional", {0.8, 0.4}, 330e-9, 0.0}};
    double best[3] = {0, 0, 0}, best_tau[3] = {0, 0, 0};
    std::vector<double> taus;
    for (double t = 400e-9; t <= 4000e-9; t += 100e-9) taus.push_back(t);
    for (int si = 0; si < 3; ++si) {
        CycleConfig tmpl;
        tmpl.model = Model::extensive;
        ResidualFieldInput env;
        env.nbar[0] = schemes[si].nbar[0];
        env.nbar[1] = schemes[si].nbar[1];
        env.tau_ref = schemes[si].tau_ref;
        env.theta0 = schemes[si].theta0;
        tmpl.photons = env;
        auto pts = sweep_tau_d(tmpl, taus, p, 4);
        for (const auto& pt : pts)
            if (!pt.gated && pt.rte > best[si]) {
                best[si] = pt.rte;
                best_tau[si] = pt.tau_d;
            }
    }
    bool passive_ok = best[0] >= 14.6 * 0.6 && best[0] <= 14.6 * 1.4 &&
                      best_tau[0] >= 1500e-9 && best_tau[0] <= 3000e-9;
    bool uncond_ok = best[2] >= 39.5 * 0.6 && best[2] <= 39.5 * 1.4 &&
                     best_tau[2] < best_tau[0];
    bool order_ok = best[0] < best[1] && best[1] < best[2];
    info = "passive " + num(best[0]) + "@" + num(best_tau[0] * 1e9) +
           "ns, conditional " + num(best[1]) + ", unconditional " +
           num(best[2]) + "@" + num(best_tau[2] * 1e9) + "ns";
    return passive_ok && uncond_ok && order_ok;
}

// ---- 9: non-flipping ceiling vs closed form ------------------------------
bool crit_nonflipping_ceiling(std::string& info) {
    auto p = default_device();
    CycleConfig cc;
    cc.variant = Variant::nonflipping_0;
    cc.tau_d = 2000e-9;
    auto stats = rte_exact(cc, p);
    double h = CycleConfig::kEchoWindow / 2.0;
    double p_phi = 0.5 * (1.0 - std::exp(-2.0 * h / p.T2echo));
    double p1 = p_phi * std::exp(-CycleConfig::kGatePad / p.T1);
    double q = 1.0 - std::exp(-p.tau_r / p.T1);
    double p_dev =
        (1.0 - p1) * (1.0 - cc.f_d) + p1 * ((1.0 - q) * cc.f_d + 0.5 * q);
    double rel = std::abs(stats.rte - 1.0 / p_dev) * p_dev;
    info = "RTE " + num(stats.rte) + " vs closed form " + num(1.0 / p_dev) +
           " (rel err " + num(rel) + "); measured reference ceiling ~168";
    return rel <= 1e-3;
}

// ---- 10: classification-rule coverage ------------------------------------
bool crit_classification(std::string& info) {
    const std::vector<std::vector<int>> fl = {{0, 1, 0, 0, 1, 0},
                                              {0, 1, 0, 0, 1, 1},
                                              {0, 1, 0, 0, 0, 1},
                                              {0, 1, 0, 0, 0, 1}};
    const std::vector<std::vector<int>> nf = {{0, 0, 0, 1, 1, 1},
                                              {0, 0, 0, 1, 1, 0},
                                              {0, 0, 0, 1, 0, 0},
                                              {0, 0, 0, 1, 0, 0}};
    const char expected[4] = {'s', 's', 'd', 'd'};
    bool ok = true;
    std::string got;
    for (int m = 0; m < 4; ++m) {
        auto a = classify_event(fl[m], Variant::flipping);
        auto b = classify_event(nf[m], Variant::nonflipping_0);
        ok = ok && a && b && a->type == expected[m] && b->type == expected[m] &&
             a->rounds_to_event == 4 && b->rounds_to_event == 4;
        got += a ? a->type : '?';
    }
    info = "flip, double-meas, single-meas, double-flip -> " + got;
    return ok;
}

// ---- 11: echo invariants --------------------------------------------------
bool crit_echo(std::string& info) {
    // (a) Stark phase cancels when B(t) is symmetric about the pi pulse.
    auto cfg = default_device_config();
    cfg["device.inv_kappa"] = "1e3";
    auto slow = derive_params(cfg);
    CycleConfig cc;
    double ta0 = cc.tau_d + CycleConfig::kGatePad;
    double mid = ta0 + CycleConfig::kEchoWindow / 2;
    ResidualFieldInput env;
    env.nbar[0] = 2.0;
    env.theta0 = -2.0 * slow.chi * mid;
    double a = stark_integral(env, 0, ta0, mid, slow);
    double b = stark_integral(env, 0, mid, mid + CycleConfig::kEchoWindow / 2,
                              slow);
    double stark_resid = std::abs(a - b) / std::max(1.0, std::abs(a));

    // (b) coherence decays exactly as exp(-integral Gamma_d).
    auto p = default_device();
    ResidualFieldInput genv;
    genv.nbar[0] = 1.3;
    genv.theta0 = 0.4;
    double t0 = 100e-9, t1 = 400e-9;
    auto gd = [&](double t) {
        return 2.0 * p.chi * genv.nbar[0] * std::exp(-p.kappa * t) *
               std::sin(2.0 * p.chi * t + genv.theta0);
    };
    auto cfg2 = default_device_config();
    cfg2["device.T1"] = "1e9";
    cfg2["device.T2echo"] = "2e9";
    auto pure = derive_params(cfg2);
    auto rho = evolve_qubit(QubitDensityMatrix::equator(), t0, t1 - t0, nullptr,
                            gd, 0.0, 0.0, pure);
    double measured = std::abs(rho.m01) / 0.5;
    double predicted = std::exp(-gamma_d_integral(genv, 0, t0, t1, p));
    double gd_resid = std::abs(measured - predicted);

    info = "Stark residual " + num(stark_resid) + ", Gamma_d residual " +
           num(gd_resid);
    return stark_resid <= 1e-9 && gd_resid <= 1e-8;
}

// ---- 12: detector linearity and inversion --------------------------------
bool crit_detector(std::string& info) {
    auto p = default_device();
    DetectorOptions opt;
    opt.pulse_duration = 3e-9;
    opt.sigma_e = 0.002;
    opt.seed = 5;
    std::vector<double> grid = {0, 3, 6, 9, 12, 15, 18, 21, 24, 27, 30};
    auto calib = calibrate_detector(p, 3e-6, grid, opt);
    double r2 = std::min(calib.r2[0], calib.r2[1]);

    std::mt19937_64 rng(99);
    double worst = 0;
    for (double truth : {4.5, 12.5, 22.0}) {
        for (int state = 0; state < 2; ++state) {
            double acc = 0;
            const int reps = 25;
            for (int k = 0; k < reps; ++k) {
                double e = detector_reading(truth, calib, state, rng);
                acc += estimate_nbar(e, calib, state).nbar;
            }
            worst = std::max(worst, std::abs(acc / reps - truth));
        }
    }
    info = "R^2 " + num(r2) + ", delta_nbar " + num(calib.delta_nbar) +
           ", worst inversion error " + num(worst);
    return r2 >= 0.98 && calib.delta_nbar <= 0.3 && worst <= 0.3;
}

// ---- 13: readout metrics --------------------------------------------------
bool crit_readout_metrics(std::string& info) {
    ShotSet shots;
    for (int k = 0; k < 1000; ++k) {
        shots.prepared.push_back(0);
        shots.declared.push_back(k < 1 ? 1 : 0);
        shots.prepared.push_back(1);
        shots.declared.push_back(k < 23 ? 0 : 1);
    }
    shots.value.assign(shots.prepared.size(), 0.0);
    auto fa = assignment_fidelity(shots);
    bool fa_ok = std::abs(fa.f_a - 0.988) < 1e-12 &&
                 std::abs(fa.eps01 - 0.001) < 1e-12 &&
                 std::abs(fa.eps10 - 0.023) < 1e-12;

    double worst = 0;
    for (double sep = 1.0; sep <= 8.0; sep += 0.5) {
        GaussianFit g0{0.0, 1.0}, g1{sep, 1.0};
        double ref = 1.0 - std::erfc(sep / (2.0 * std::sqrt(2.0)));
        worst = std::max(worst,
                         std::abs((1.0 - gaussian_overlap(g0, g1)) - ref));
    }
    info = "F_a " + num(fa.f_a) + ", worst F_d error " + num(worst);
    return fa_ok && worst <= 1e-3;
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {"linear-cavity oracle equivalence", crit_linear_cavity},
        {"ringdown decay-rate recovery", crit_decay_rate},
        {"Powell optimizer correctness", crit_powell},
        {"depletion tuneup vs linear oracle", crit_depletion_oracle},
        {"nonlinear-regime depletion benefit", crit_kerr_benefit},
        {"geometric RTE, measurement errors only", crit_rte_geometric},
        {"exact vs Monte Carlo RTE agreement", crit_exact_vs_mc},
        {"depletion-scheme RTE trend and magnitude", crit_rte_trend},
        {"non-flipping ceiling closed form", crit_nonflipping_ceiling},
        {"event-classification mechanism coverage", crit_classification},
        {"echo Stark/dephasing invariants", crit_echo},
        {"detector linearity and inversion", crit_detector},
        {"readout fidelity metrics", crit_readout_metrics},
    };
    int failures = 0;
    for (size_t k = 0; k < criteria.size(); ++k) {
        auto t0 = std::chrono::steady_clock::now();
        std::string detail;
        bool ok = false;
        try {
            ok = criteria[k].run(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        double secs = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
        std::printf("[%2zu] %s  %-42s (%6.2f s)  %s\n", k + 1,
                    ok ? "PASS" : "FAIL", criteria[k].name.c_str(), secs,
                    detail.c_str());
        std::fflush(stdout);
        if (!ok) ++failures;
    }
    if (failures) std::printf("%d criterion(s) failed\n", failures);
    return failures == 0 ? 0 : 1;
}
