#include "cli_app.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "resq/cavity.hpp"
#include "resq/depletion.hpp"
#include "resq/errors.hpp"
#include "resq/params.hpp"
#include "resq/powell.hpp"
#include "resq/qec.hpp"
#include "resq/qubit.hpp"
#include "resq/readout.hpp"

namespace resq {
namespace {

using nlohmann::json;

constexpr const char* kArtifactVersion = "1.0.0";

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double num_or(const Config& c, const std::string& key, double fallback) {
    return c.count(key) ? config_num(c, key) : fallback;
}

// Everything resolved for one run: flag > config file > built-in default,
// with RESQ_OUT overriding the out-dir default only.
struct Ctx {
    std::string subcommand;
    Config cfg;        // raw loaded config file
    Config snapshot;   // every resolved value, as strings
    DeviceParams device;
    uint64_t seed = 1;
    int workers = 1;
    std::string out_dir = ".";
    uint64_t hash = 0;
    long evaluations = 0;
    std::chrono::steady_clock::time_point t0 =
        std::chrono::steady_clock::now();

    void note(const std::string& key, const std::string& value) {
        snapshot[key] = value;
    }
    void note(const std::string& key, double value) { note(key, fmt(value)); }

    void seal() {
        std::ostringstream canon;
        canon << subcommand << '\n';
        for (const auto& [k, v] : snapshot) canon << k << '=' << v << '\n';
        hash = fnv1a(canon.str());
    }

    std::ofstream open_csv(const std::string& name) {
        std::filesystem::create_directories(out_dir);
        std::ofstream f(std::filesystem::path(out_dir) / name);
        if (!f) throw Error("ConfigError", "cannot write to out dir: " + out_dir);
        f.precision(12);
        f << "# manifest " << hex64(hash) << "\n";
        return f;
    }

    void write_manifest(json extras = json::object()) {
        json m;
        m["subcommand"] = subcommand;
        m["artifact_version"] = kArtifactVersion;
        m["seed"] = seed;
        m["workers"] = workers;
        m["out_dir"] = out_dir;
        m["manifest_hash"] = hex64(hash);
        m["config"] = json::object();
        for (const auto& [k, v] : snapshot) m["config"][k] = v;
        m["evaluations"] = evaluations;
        m["wall_ms"] =
            std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - t0)
                .count();
        m["results"] = std::move(extras);
        std::filesystem::create_directories(out_dir);
        std::ofstream f(std::filesystem::path(out_dir) / "run_manifest.json");
        if (!f) throw Error("ConfigError", "cannot write to out dir: " + out_dir);
        f << m.dump(2) << "\n";
    }
};

ReadoutConfig readout_from(const Ctx& ctx) {
    ReadoutConfig r;
    r.f_rf = num_or(ctx.cfg, "readout.f_rf", r.f_rf);
    r.amplitude = num_or(ctx.cfg, "readout.amplitude", 1.8e7);
    r.tau_r = num_or(ctx.cfg, "readout.tau_r", ctx.device.tau_r);
    r.tau_int = num_or(ctx.cfg, "readout.tau_int", ctx.device.tau_int);
    r.noise_sigma = num_or(ctx.cfg, "readout.noise_sigma", 0.0);
    r.dt = num_or(ctx.cfg, "readout.dt", r.dt);
    return r;
}

void note_readout(Ctx& ctx, const ReadoutConfig& r) {
    ctx.note("readout.f_rf", r.f_rf);
    ctx.note("readout.amplitude", r.amplitude);
    ctx.note("readout.tau_r", r.tau_r);
    ctx.note("readout.tau_int", r.tau_int);
    ctx.note("readout.noise_sigma", r.noise_sigma);
    ctx.note("readout.dt", r.dt);
}

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw Error("ConfigError", "bad number in list: " + item);
        }
    }
    if (out.empty()) throw Error("ConfigError", "empty numeric list");
    return out;
}

std::string join(const std::vector<double>& v) {
    std::string s;
    for (size_t k = 0; k < v.size(); ++k) s += (k ? "," : "") + fmt(v[k]);
    return s;
}

// --- subcommands ---------------------------------------------------------

void run_simulate_cavity(Ctx& ctx, double duration, double dt) {
    auto meas = readout_from(ctx);
    PulseSequence seq;
    seq.tones.push_back(
        make_tone(meas.f_rf, ctx.device, 0.0, meas.tau_r, meas.amplitude, 0.0));
    seq.total_duration = duration;
    ctx.note("cavity.duration", duration);
    ctx.note("cavity.dt", dt);
    note_readout(ctx, meas);
    ctx.seal();

    auto traj0 = evolve_field(seq, 0, ctx.device, dt, 0.0, duration);
    auto traj1 = evolve_field(seq, 1, ctx.device, dt, 0.0, duration);
    auto obs = photon_observables(traj0, traj1, ctx.device);
    ctx.evaluations = long(traj0.alpha.size());

    auto csv = ctx.open_csv("cavity.csv");
    write_trajectory_csv(csv, traj0, traj1, obs);

    // Fit the passive ringdown after the measurement tone.
    json extras;
    size_t k0 = size_t((meas.tau_r + 100e-9) / dt);
    if (k0 + 100 < traj0.alpha.size()) {
        std::vector<double> nb;
        for (size_t k = k0; k < traj0.alpha.size(); ++k)
            nb.push_back(traj0.nbar(k));
        auto fit = fit_exponential_decay(nb, dt);
        extras["fitted_inv_kappa_ns"] = 1e9 / fit.rate;
    }
    ctx.write_manifest(extras);
}

void run_calibrate_detector(Ctx& ctx, DetectorOptions opt, double drive_duration,
                            std::vector<double> grid) {
    opt.f_drive = num_or(ctx.cfg, "detector.f_drive", opt.f_drive);
    opt.seed = ctx.seed;
    ctx.note("detector.f_drive", opt.f_drive);
    ctx.note("detector.tau_d_eval", opt.tau_d_eval);
    ctx.note("detector.sigma_e", opt.sigma_e);
    ctx.note("detector.pulse_duration", opt.pulse_duration);
    ctx.note("detector.drive_duration", drive_duration);
    ctx.note("detector.grid", join(grid));
    ctx.seal();

    CalibrationCurve curve;
    auto calib = calibrate_detector(ctx.device, drive_duration, grid, opt, &curve);
    ctx.evaluations = long(grid.size()) * 2 * 21;

    auto csv = ctx.open_csv("detector_curve.csv");
    csv << "nbar,e_in0,e_in1\n";
    for (size_t k = 0; k < curve.nbar.size(); ++k)
        csv << curve.nbar[k] << ',' << curve.e[0][k] << ',' << curve.e[1][k]
            << '\n';

    {
        auto txt = ctx.open_csv("detector_calibration.txt");
        txt << calib.serialize();
    }
    json extras;
    extras["alpha"] = {calib.alpha_coef[0], calib.alpha_coef[1]};
    extras["beta"] = {calib.beta_offset[0], calib.beta_offset[1]};
    extras["r2"] = {calib.r2[0], calib.r2[1]};
    extras["delta_nbar"] = calib.delta_nbar;
    ctx.write_manifest(extras);
}

void run_readout_map(Ctx& ctx, std::vector<double> amps,
                     std::vector<double> freqs, long shots) {
    auto base = readout_from(ctx);
    note_readout(ctx, base);
    ctx.note("map.amps", join(amps));
    ctx.note("map.freqs", join(freqs));
    ctx.note("map.shots", double(shots));
    ctx.seal();

    auto cells = fidelity_map(amps, freqs, base, ctx.device, ctx.seed, shots,
                              ctx.workers);
    ctx.evaluations = long(cells.size()) * shots * 2;

    auto csv = ctx.open_csv("readout_map.csv");
    csv << "amplitude,f_rf,f_a,eps01,eps10\n";
    double best = 0;
    for (const auto& c : cells) {
        csv << c.amplitude << ',' << c.f_rf << ',' << c.f_a << ',' << c.eps01
            << ',' << c.eps10 << '\n';
        best = std::max(best, c.f_a);
    }
    ctx.write_manifest({{"best_f_a", best}});
}

void write_trace_csv(Ctx& ctx, const std::string& name,
                     const OptimizerResult& res) {
    auto csv = ctx.open_csv(name);
    csv << "iteration,evaluations,best_value\n";
    for (const auto& rec : res.trace)
        csv << rec.iteration << ',' << rec.evals << ',' << rec.best_value
            << '\n';
}

void run_optimize_depletion(Ctx& ctx, const std::string& kind_name,
                            double tau_p, double coarse_tau_d,
                            double fine_tau_d) {
    auto kind = kind_name == "conditional" ? DepletionKind::conditional
                                           : DepletionKind::unconditional;
    auto meas = readout_from(ctx);
    ConditionalPulseParams init_cond;
    UnconditionalPulseParams init_uncond;
    if (tau_p > 0) {
        init_cond.tau_p = tau_p;
        init_uncond.tau_p = tau_p;
    }
    init_cond.latency = ctx.device.latency_feedback;
    TwoStepOptions opt;
    opt.coarse_tau_d = coarse_tau_d;
    opt.fine_tau_d = fine_tau_d > 0
                         ? fine_tau_d
                         : (kind == DepletionKind::unconditional ? 400e-9 : 500e-9);
    opt.cost.seed = ctx.seed;
    note_readout(ctx, meas);
    ctx.note("depletion.kind", kind_name);
    ctx.note("depletion.tau_p", kind == DepletionKind::conditional
                                    ? init_cond.tau_p
                                    : init_uncond.tau_p);
    ctx.note("depletion.coarse_tau_d", opt.coarse_tau_d);
    ctx.note("depletion.fine_tau_d", opt.fine_tau_d);
    ctx.seal();

    auto report =
        two_step_optimize(kind, init_cond, init_uncond, meas, ctx.device, opt);
    ctx.evaluations =
        report.coarse_trace.evaluations + report.fine_trace.evaluations;

    auto csv = ctx.open_csv("depletion_report.csv");
    csv << "kind,amp0,phase0,amp1,phase1,tau_p,residual0,residual1,"
           "passive0,passive1,savings0,savings1\n";
    const double* a = kind == DepletionKind::conditional
                          ? report.conditional.amplitude
                          : report.unconditional.amplitude;
    const double* ph = kind == DepletionKind::conditional
                           ? report.conditional.phase
                           : report.unconditional.phase;
    double tp = kind == DepletionKind::conditional ? report.conditional.tau_p
                                                   : report.unconditional.tau_p;
    csv << kind_name << ',' << a[0] << ',' << ph[0] << ',' << a[1] << ','
        << ph[1] << ',' << tp << ',' << report.residual[0] << ','
        << report.residual[1] << ',' << report.passive[0] << ','
        << report.passive[1] << ',' << report.savings[0] << ','
        << report.savings[1] << '\n';
    write_trace_csv(ctx, "coarse_trace.csv", report.coarse_trace);
    write_trace_csv(ctx, "fine_trace.csv", report.fine_trace);
    ctx.write_manifest({{"residual", {report.residual[0], report.residual[1]}},
                        {"savings", {report.savings[0], report.savings[1]}}});
}

void run_sweep_pulse_length(Ctx& ctx, const std::string& kind_name,
                            std::vector<double> tau_p_list, double tau_d,
                            bool with_fidelity) {
    auto kind = kind_name == "conditional" ? DepletionKind::conditional
                                           : DepletionKind::unconditional;
    auto meas = readout_from(ctx);
    TwoStepOptions base;
    base.fine_tau_d = tau_d;
    base.cost.seed = ctx.seed;
    note_readout(ctx, meas);
    ctx.note("sweep.kind", kind_name);
    ctx.note("sweep.tau_p_list", join(tau_p_list));
    ctx.note("sweep.tau_d", tau_d);
    ctx.note("sweep.with_fidelity", with_fidelity ? 1.0 : 0.0);
    ctx.seal();

    auto rows = sweep_pulse_length(kind, tau_p_list, tau_d, meas, ctx.device,
                                   base, with_fidelity, ctx.workers);
    auto csv = ctx.open_csv("pulse_sweep.csv");
    csv << "tau_p,amp0,phase0,amp1,phase1,nbar0,nbar1,f_d\n";
    for (const auto& r : rows)
        csv << r.tau_p << ',' << r.amplitude[0] << ',' << r.phase[0] << ','
            << r.amplitude[1] << ',' << r.phase[1] << ',' << r.nbar[0] << ','
            << r.nbar[1] << ',' << r.f_d << '\n';
    ctx.write_manifest({{"points", rows.size()}});
}

// Residual-photon presets per depletion scheme. Conditional/unconditional
// use the calibrated post-depletion photon numbers; passive starts from the
// simulated measurement-end field.
ResidualFieldInput scheme_photons(const std::string& scheme, const Ctx& ctx) {
    ResidualFieldInput env;
    if (scheme == "passive") {
        auto meas = readout_from(ctx);
        PulseSequence seq;
        seq.tones.push_back(make_tone(meas.f_rf, ctx.device, 0.0, meas.tau_r,
                                      meas.amplitude, 0.0));
        seq.total_duration = meas.tau_r;
        cplx a0 = analytic_linear_field(seq, 0, ctx.device, meas.tau_r);
        cplx a1 = analytic_linear_field(seq, 1, ctx.device, meas.tau_r);
        env.nbar[0] = num_or(ctx.cfg, "rte.passive_nbar0", std::norm(a0));
        env.nbar[1] = num_or(ctx.cfg, "rte.passive_nbar1", std::norm(a1));
        env.tau_ref = 0;
        env.theta0 = wrap_phase(std::arg(a0 * std::conj(a1)));
    } else if (scheme == "conditional") {
        env.nbar[0] = num_or(ctx.cfg, "rte.conditional_nbar0", 2.1);
        env.nbar[1] = num_or(ctx.cfg, "rte.conditional_nbar1", 0.7);
        env.tau_ref = ctx.device.latency_feedback + 30e-9;
    } else if (scheme == "unconditional") {
        env.nbar[0] = num_or(ctx.cfg, "rte.unconditional_nbar0", 0.8);
        env.nbar[1] = num_or(ctx.cfg, "rte.unconditional_nbar1", 0.4);
        env.tau_ref = 330e-9;
    } else {
        throw Error("ConfigError", "unknown scheme: " + scheme);
    }
    return env;
}

void run_rte_sweep(Ctx& ctx, const std::string& variant_name,
                   const std::string& schemes_text,
                   std::vector<double> tau_d_list, long mc_traces) {
    Variant variant = Variant::flipping;
    if (variant_name == "nonflipping-0")
        variant = Variant::nonflipping_0;
    else if (variant_name == "nonflipping-1")
        variant = Variant::nonflipping_1;
    else if (variant_name != "flipping")
        throw Error("ConfigError", "unknown variant: " + variant_name);

    std::vector<std::string> schemes;
    {
        std::stringstream ss(schemes_text);
        std::string item;
        while (std::getline(ss, item, ','))
            if (!item.empty()) schemes.push_back(item);
    }
    double f_d = num_or(ctx.cfg, "rte.f_d", 0.999);
    ctx.note("rte.variant", variant_name);
    ctx.note("rte.schemes", schemes_text);
    ctx.note("rte.tau_d_list", join(tau_d_list));
    ctx.note("rte.f_d", f_d);
    ctx.note("rte.mc_traces", double(mc_traces));
    for (const auto& s : schemes) {
        auto env = scheme_photons(s, ctx);
        ctx.note("rte." + s + ".nbar0", env.nbar[0]);
        ctx.note("rte." + s + ".nbar1", env.nbar[1]);
        ctx.note("rte." + s + ".tau_ref", env.tau_ref);
        ctx.note("rte." + s + ".theta0", env.theta0);
    }
    ctx.seal();

    auto csv = ctx.open_csv("rte_sweep.csv");
    csv << "scheme,tau_d,rte,p_s,p_d,gated";
    if (mc_traces > 0) csv << ",mc_rte,mc_rte_err";
    csv << '\n';

    json best = json::object();
    uint64_t task = 0;
    for (const auto& s : schemes) {
        CycleConfig tmpl;
        tmpl.variant = variant;
        tmpl.model = Model::extensive;
        tmpl.f_d = f_d;
        tmpl.photons = scheme_photons(s, ctx);
        auto pts = sweep_tau_d(tmpl, tau_d_list, ctx.device, ctx.workers);
        double best_rte = 0, best_tau = 0;
        for (const auto& pt : pts) {
            csv << s << ',' << pt.tau_d << ',' << pt.rte << ',' << pt.p_s << ','
                << pt.p_d << ',' << (pt.gated ? 1 : 0);
            if (mc_traces > 0) {
                if (pt.gated) {
                    csv << ",nan,nan";
                } else {
                    CycleConfig one = tmpl;
                    one.tau_d = pt.tau_d;
                    auto mc = rte_monte_carlo(one, ctx.device, mc_traces,
                                              long(50 * pt.rte) + 100,
                                              split_seed(ctx.seed, task),
                                              ctx.workers);
                    csv << ',' << mc.rte << ',' << mc.rte_err;
                }
            }
            csv << '\n';
            ++task;
            if (!pt.gated && pt.rte > best_rte) {
                best_rte = pt.rte;
                best_tau = pt.tau_d;
            }
        }
        best[s] = {{"rte", best_rte}, {"tau_d", best_tau}};
        ctx.evaluations += long(pts.size());
    }
    ctx.write_manifest({{"best", best}});
}

int run_validate(Ctx& ctx) {
    ctx.seal();
    int failures = 0;
    auto check = [&](const std::string& name, bool ok) {
        std::cout << (ok ? "ok   " : "FAIL ") << name << "\n";
        if (!ok) ++failures;
    };
    const auto& p = ctx.device;

    {  // linear cavity integrator vs closed form
        PulseSequence seq;
        seq.tones.push_back(make_tone(6.8488e9, p, 0.0, 300e-9, 1.8e7, 0.4));
        seq.total_duration = 600e-9;
        auto traj = evolve_field(seq, 0, p, 1e-9);
        double worst = 0;
        for (size_t k = 0; k < traj.alpha.size(); k += 7) {
            double t = traj.t0 + double(k) * traj.dt;
            cplx ref = analytic_linear_field(seq, 0, p, t);
            worst = std::max(worst, std::abs(traj.alpha[k] - ref));
        }
        check("cavity-linear-oracle", worst < 1e-6 * 40.0);
    }
    {  // ringdown rate recovery
        PulseSequence seq;
        seq.tones.push_back(make_tone(6.8488e9, p, 0.0, 300e-9, 1.8e7, 0.0));
        seq.total_duration = 1500e-9;
        auto traj = evolve_field(seq, 0, p, 1e-9);
        std::vector<double> nb;
        for (size_t k = 400; k < traj.alpha.size(); ++k)
            nb.push_back(traj.nbar(k));
        auto fit = fit_exponential_decay(nb, 1e-9);
        check("cavity-decay-rate", std::abs(fit.rate - p.kappa) < 0.01 * p.kappa);
    }
    {  // event classification mechanisms
        auto a = classify_event(std::vector<int>{0, 1, 0, 0, 1}, Variant::flipping);
        auto b = classify_event(std::vector<int>{0, 1, 0, 0, 0}, Variant::flipping);
        check("event-classification",
              a && a->type == 's' && b && b->type == 'd');
    }
    {  // geometric RTE with measurement errors only
        auto cfgm = default_device_config();
        cfgm["device.T1"] = "1e9";
        cfgm["device.T2echo"] = "2e9";
        auto ideal = derive_params(cfgm);
        CycleConfig cc;
        auto stats = rte_exact(cc, ideal);
        check("rte-geometric", std::abs(stats.rte - 1000.0) < 1.0);
    }
    {  // Gaussian overlap closed form
        GaussianFit g0{0.0, 1.0}, g1{4.0, 1.0};
        double ov = gaussian_overlap(g0, g1);
        double ref = std::erfc(4.0 / (2.0 * std::sqrt(2.0)));
        check("gaussian-overlap", std::abs(ov - ref) < 1e-6);
    }
    {  // optimizer sanity on Rosenbrock
        auto f = [](const std::vector<double>& x) {
            double a = 1.0 - x[0], b = x[1] - x[0] * x[0];
            return a * a + 100.0 * b * b;
        };
        OptimizerOptions opt;
        opt.initial = {-1.2, 1.0};
        opt.max_evaluations = 2000;
        auto res = minimize(f, opt);
        check("powell-rosenbrock", std::abs(res.best_point[0] - 1.0) < 1e-4 &&
                                       std::abs(res.best_point[1] - 1.0) < 1e-4);
        ctx.evaluations += res.evaluations;
    }
    ctx.write_manifest({{"failures", failures}});
    return failures == 0 ? 0 : 1;
}

int dispatch(const std::vector<std::string>& args) {
    static const std::vector<std::string> known = {
        "simulate-cavity", "calibrate-detector", "readout-map",
        "optimize-depletion", "sweep-pulse-length", "rte-sweep", "validate"};
    std::string sub;
    for (const auto& a : args) {
        if (a == "-h" || a == "--help") break;
        if (!a.empty() && a[0] != '-') {
            sub = a;
            break;
        }
    }
    bool help = std::find(args.begin(), args.end(), std::string("--help")) !=
                    args.end() ||
                std::find(args.begin(), args.end(), std::string("-h")) !=
                    args.end();
    if (!help && std::find(known.begin(), known.end(), sub) == known.end())
        throw Error("UnknownSubcommand",
                    sub.empty() ? "no subcommand given" : sub);

    CLI::App app{"resonator-reset experiment harness"};
    app.fallthrough(true);
    app.require_subcommand(0, 1);
    std::string config_path, out_flag;
    uint64_t seed_flag = 1;
    int workers_flag = 1;
    auto* oc = app.add_option("--config", config_path, "config file (INI-style)");
    auto* os = app.add_option("--seed", seed_flag, "master RNG seed");
    auto* oo = app.add_option("--out", out_flag, "output directory");
    auto* ow = app.add_option("--workers", workers_flag, "worker threads");

    auto* sc = app.add_subcommand("simulate-cavity",
                                  "measurement-pulse cavity trajectories");
    double duration = 3e-6, dt = 1e-9;
    sc->add_option("--duration", duration, "simulated span, s");
    sc->add_option("--dt", dt, "integrator step, s");

    auto* cd = app.add_subcommand("calibrate-detector",
                                  "photon-number detector calibration");
    DetectorOptions det;
    det.pulse_duration = 3e-9;
    double drive_duration = 3e-6;
    std::string grid_text = "0,2,5,10,15,20,25,30";
    cd->add_option("--pulse-duration", det.pulse_duration, "detector pulse, s");
    cd->add_option("--sigma-e", det.sigma_e, "detector noise on E");
    cd->add_option("--tau-d", det.tau_d_eval, "evaluation delay, s");
    cd->add_option("--drive-duration", drive_duration, "fill drive, s");
    cd->add_option("--grid", grid_text, "comma list of target nbar");

    auto* rm = app.add_subcommand("readout-map", "assignment-fidelity map");
    std::string amps_text = "1.2e7,1.8e7,2.4e7";
    std::string freqs_text = "6.8468e9,6.8488e9,6.8508e9";
    long shots = 2000;
    rm->add_option("--amps", amps_text, "amplitude grid, rad/s");
    rm->add_option("--freqs", freqs_text, "tone frequency grid, Hz");
    rm->add_option("--shots", shots, "shots per state per cell");

    auto* od = app.add_subcommand("optimize-depletion",
                                  "two-step depletion pulse tuneup");
    std::string kind = "unconditional";
    double tau_p = -1, coarse_tau_d = 1000e-9, fine_tau_d = -1;
    od->add_option("--kind", kind, "conditional | unconditional")
        ->check(CLI::IsMember({"conditional", "unconditional"}));
    od->add_option("--tau-p", tau_p, "pulse length, s");
    od->add_option("--coarse-tau-d", coarse_tau_d, "coarse evaluation delay, s");
    od->add_option("--fine-tau-d", fine_tau_d, "fine evaluation delay, s");

    auto* sp = app.add_subcommand("sweep-pulse-length",
                                  "residual photons vs pulse length");
    std::string kind2 = "unconditional";
    std::string taup_text = "1e-7,2e-7,3.3e-7";
    double sweep_tau_dd = 400e-9;
    bool with_fid = false;
    sp->add_option("--kind", kind2, "conditional | unconditional")
        ->check(CLI::IsMember({"conditional", "unconditional"}));
    sp->add_option("--tau-p-list", taup_text, "comma list of pulse lengths, s");
    sp->add_option("--tau-d", sweep_tau_dd, "evaluation delay, s");
    sp->add_flag("--with-fidelity", with_fid, "also evaluate F_d per point");

    auto* rs = app.add_subcommand("rte-sweep", "rounds-to-event vs tau_d");
    std::string variant = "flipping";
    std::string schemes = "passive,conditional,unconditional";
    std::string taud_text = "4e-7,7e-7,1e-6,1.5e-6,2.2e-6,3e-6";
    long mc_traces = 0;
    rs->add_option("--variant", variant,
                   "flipping | nonflipping-0 | nonflipping-1");
    rs->add_option("--scheme", schemes, "comma list of depletion schemes");
    rs->add_option("--tau-d-list", taud_text, "comma list of tau_d, s");
    rs->add_option("--mc", mc_traces, "Monte Carlo traces per point (0 = off)");

    app.add_subcommand("validate", "run the built-in invariant checks");

    std::vector<const char*> argv;
    argv.push_back("resq");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(int(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    Ctx ctx;
    auto* active = app.get_subcommands().empty() ? nullptr
                                                 : app.get_subcommands().front();
    if (!active) return 0;  // bare --help
    ctx.subcommand = active->get_name();
    if (!config_path.empty()) {
        ctx.cfg = load_config(config_path);
        for (const auto& k : unknown_keys(ctx.cfg))
            std::cerr << "warning: unrecognized config key: " << k << "\n";
    }
    // device: config file overlays the built-in device table
    Config dev = default_device_config();
    for (const auto& [k, v] : ctx.cfg)
        if (k.rfind("device.", 0) == 0) dev[k] = v;
    ctx.device = derive_params(dev);
    for (const auto& [k, v] : dev) ctx.note(k, v);

    ctx.seed = os->count() ? seed_flag
                           : uint64_t(num_or(ctx.cfg, "cli.seed", 1.0));
    ctx.workers =
        ow->count() ? workers_flag : int(num_or(ctx.cfg, "cli.workers", 1.0));
    if (ctx.workers < 1) throw Error("ConfigError", "cli.workers must be >= 1");
    const char* env_out = std::getenv("RESQ_OUT");
    if (oo->count())
        ctx.out_dir = out_flag;
    else if (env_out && *env_out)
        ctx.out_dir = env_out;
    else if (ctx.cfg.count("cli.out"))
        ctx.out_dir = ctx.cfg.at("cli.out");
    // seed is part of the reproducibility contract; out dir and worker count
    // must not change anything numeric, so they stay out of the hash.
    ctx.note("cli.seed", double(ctx.seed));
    (void)oc;

    if (active == sc) {
        run_simulate_cavity(ctx, duration, dt);
    } else if (active == cd) {
        run_calibrate_detector(ctx, det, drive_duration, parse_list(grid_text));
    } else if (active == rm) {
        run_readout_map(ctx, parse_list(amps_text), parse_list(freqs_text),
                        shots);
    } else if (active == od) {
        run_optimize_depletion(ctx, kind, tau_p, coarse_tau_d, fine_tau_d);
    } else if (active == sp) {
        run_sweep_pulse_length(ctx, kind2, parse_list(taup_text), sweep_tau_dd,
                               with_fid);
    } else if (active == rs) {
        run_rte_sweep(ctx, variant, schemes, parse_list(taud_text), mc_traces);
    } else {
        return run_validate(ctx);
    }
    return 0;
}

}  // namespace

int cli_run(const std::vector<std::string>& args) {
    try {
        return dispatch(args);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        if (e.code() == "UnknownSubcommand") return 2;
        if (e.code() == "ConfigError" || e.code() == "MissingKey" ||
            e.code() == "BadValue" || e.code() == "NegativeRate" ||
            e.code() == "InconsistentChi")
            return 3;
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: Internal: " << e.what() << "\n";
        return 5;
    }
}

}  // namespace resq
