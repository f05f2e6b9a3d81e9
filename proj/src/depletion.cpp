#include "resq/depletion.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <random>
#include <thread>

namespace resq {

namespace {

constexpr cplx kI{0.0, 1.0};

double res_freq(const DeviceParams& p, int j) { return j == 0 ? p.f_r0 : p.f_r1; }

TonePulse measurement_tone(const ReadoutConfig& meas, const DeviceParams& p) {
    return make_tone(meas.f_rf, p, 0.0, meas.tau_r, meas.amplitude, 0.0);
}

// Deterministic per-evaluation noise stream: identical parameters and seed
// give identical detector draws.
uint64_t mix_hash(uint64_t h, double v) {
    uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    h ^= bits + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return h;
}

double detector_cost(double nbar_true, int input_state, const CostOptions& opt,
                     uint64_t param_hash) {
    if (!opt.detector) throw Error("MissingKey", "allxy cost mode requires a detector calibration");
    std::mt19937_64 rng(param_hash);
    double e = detector_reading(nbar_true, *opt.detector, input_state, rng);
    auto est = estimate_nbar(e, *opt.detector, input_state);
    if (est.saturated)
        throw Error("DetectorSaturated", "photon number above detector validity ceiling");
    return std::max(0.0, est.nbar);
}

}  // namespace

void ConditionalPulseParams::validate() const {
    if (!(tau_p > 0)) throw Error("BadValue", "tau_p must be > 0");
    if (amplitude[0] < 0 || amplitude[1] < 0)
        throw Error("BadValue", "amplitudes must be >= 0");
}

void UnconditionalPulseParams::validate() const {
    if (!(tau_p > 0)) throw Error("BadValue", "tau_p must be > 0");
    for (double v : {amplitude[0], amplitude[1], phase[0], phase[1]})
        if (!std::isfinite(v)) throw Error("BadValue", "parameters must be finite");
}

PulseSequence build_conditional_sequence(const ConditionalPulseParams& params,
                                         int declared, const ReadoutConfig& meas,
                                         const DeviceParams& p) {
    params.validate();
    if (declared != 0 && declared != 1) throw Error("BadValue", "declared outcome must be 0 or 1");
    double start = meas.tau_r + params.latency;
    if (start < meas.tau_r)
        throw Error("OverlapViolation", "conditional pulse may not overlap the measurement tone");
    PulseSequence seq;
    seq.tones.push_back(measurement_tone(meas, p));
    if (params.amplitude[declared] > 0)
        seq.tones.push_back(make_tone(res_freq(p, declared), p, start,
                                      start + params.tau_p,
                                      params.amplitude[declared],
                                      params.phase[declared]));
    seq.total_duration = start + params.tau_p;
    return seq;
}

PulseSequence build_unconditional_sequence(const UnconditionalPulseParams& params,
                                           const ReadoutConfig& meas,
                                           const DeviceParams& p) {
    params.validate();
    PulseSequence seq;
    seq.tones.push_back(measurement_tone(meas, p));
    for (int j = 0; j < 2; ++j) {
        if (params.amplitude[j] == 0) continue;
        seq.tones.push_back(make_tone(res_freq(p, j), p, meas.tau_r,
                                      meas.tau_r + params.tau_p,
                                      params.amplitude[j], params.phase[j]));
    }
    seq.total_duration = meas.tau_r + params.tau_p;
    return seq;
}

double residual_nbar(const PulseSequence& seq, int state, double t_eval,
                     const DeviceParams& p, double dt) {
    auto traj = evolve_field(seq, state, p, dt, 0.0, t_eval);
    return std::norm(traj.at_time(t_eval));
}

double conditional_cost(const ConditionalPulseParams& params, int prepared,
                        const ReadoutConfig& meas, const DeviceParams& p,
                        const CostOptions& opt) {
    if (opt.tau_d < 0) throw Error("BadValue", "tau_d must be >= 0");
    double t_eval = meas.tau_r + opt.tau_d;
    double e = opt.assignment_error;
    double nbar = 0;
    for (int declared = 0; declared < 2; ++declared) {
        double weight = declared == prepared ? 1.0 - e : e;
        if (weight == 0) continue;
        auto seq = build_conditional_sequence(params, declared, meas, p);
        nbar += weight * residual_nbar(seq, prepared, t_eval, p, opt.dt);
    }
    if (opt.mode == CostMode::direct) return nbar;
    uint64_t h = opt.seed;
    h = mix_hash(h, params.amplitude[prepared]);
    h = mix_hash(h, params.phase[prepared]);
    h = mix_hash(h, opt.tau_d);
    return detector_cost(nbar, prepared, opt, h);
}

double unconditional_cost(const UnconditionalPulseParams& params,
                          const ReadoutConfig& meas, const DeviceParams& p,
                          const CostOptions& opt) {
    if (opt.tau_d < 0) throw Error("BadValue", "tau_d must be >= 0");
    double t_eval = meas.tau_r + opt.tau_d;
    auto seq = build_unconditional_sequence(params, meas, p);
    double cost = 0;
    for (int state = 0; state < 2; ++state) {
        double nbar = residual_nbar(seq, state, t_eval, p, opt.dt);
        if (opt.mode == CostMode::direct) {
            cost += nbar;
        } else {
            uint64_t h = opt.seed + uint64_t(state);
            for (int j = 0; j < 2; ++j) {
                h = mix_hash(h, params.amplitude[j]);
                h = mix_hash(h, params.phase[j]);
            }
            cost += detector_cost(nbar, state, opt, h);
        }
    }
    return cost;
}

UnconditionalPulseParams linear_oracle_unconditional(const ReadoutConfig& meas,
                                                     double tau_p,
                                                     const DeviceParams& p) {
    if (p.kerr != 0) throw Error("NonlinearRegime", "linear oracle requires K = 0");
    if (!(tau_p > 0)) throw Error("BadValue", "tau_p must be > 0");
    double t_end = meas.tau_r + tau_p;

    PulseSequence meas_seq;
    meas_seq.tones.push_back(measurement_tone(meas, p));
    meas_seq.total_duration = t_end;

    cplx pvec[2], m[2][2];
    for (int state = 0; state < 2; ++state) {
        pvec[state] = analytic_linear_field(meas_seq, state, p, t_end);
        for (int k = 0; k < 2; ++k) {
            PulseSequence unit;
            unit.tones.push_back(make_tone(res_freq(p, k), p, meas.tau_r, t_end, 1.0, 0.0));
            unit.total_duration = t_end;
            m[state][k] = analytic_linear_field(unit, state, p, t_end);
        }
    }
    cplx det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    double scale = std::abs(m[0][0]) * std::abs(m[1][1]) +
                   std::abs(m[0][1]) * std::abs(m[1][0]);
    if (std::abs(det) < 1e-12 * std::max(scale, 1e-300))
        throw Error("SingularSystem", "tone responses are degenerate (chi = 0?)");

    cplx c0 = (-pvec[0] * m[1][1] + pvec[1] * m[0][1]) / det;
    cplx c1 = (-pvec[1] * m[0][0] + pvec[0] * m[1][0]) / det;

    UnconditionalPulseParams out;
    out.tau_p = tau_p;
    out.amplitude[0] = std::abs(c0);
    out.amplitude[1] = std::abs(c1);
    out.phase[0] = out.amplitude[0] > 0 ? std::arg(c0) : 0.0;
    out.phase[1] = out.amplitude[1] > 0 ? std::arg(c1) : 0.0;
    return out;
}

namespace {

OptimizerOptions make_opts(const OptimizerOptions& base,
                           std::vector<double> initial, double amp_cap) {
    OptimizerOptions o = base;
    o.initial = initial;
    size_t n = initial.size();
    if (o.scale.empty()) {
        o.scale.resize(n);
        for (size_t k = 0; k < n; ++k)
            o.scale[k] = k % 2 == 0 ? 0.05 * amp_cap : 0.3;  // amplitude, phase pairs
    }
    if (o.lower.empty()) {
        o.lower.resize(n);
        o.upper.resize(n);
        for (size_t k = 0; k < n; ++k) {
            bool is_amp = k % 2 == 0;
            o.lower[k] = is_amp ? 0.0 : -kTwoPi;  // phases in [-2pi, 4pi]
            o.upper[k] = is_amp ? amp_cap : 2.0 * kTwoPi;
        }
    }
    return o;
}

}  // namespace

double passive_savings(double n_active, double n_passive, double tau_d,
                       const ReadoutConfig& meas, int state,
                       const DeviceParams& p) {
    n_active = std::max(n_active, 1e-300);
    if (!(n_passive > n_active)) return 0.0;
    if (p.kerr == 0) return std::log(n_passive / n_active);

    // Nonlinear regime: walk the simulated passive curve to the matching nbar.
    PulseSequence seq;
    seq.tones.push_back(measurement_tone(meas, p));
    double t_ref = meas.tau_r + tau_d;
    double horizon = t_ref + 60.0 / p.kappa;
    seq.total_duration = horizon;
    auto traj = evolve_field(seq, state, p, 1e-9, 0.0, horizon);
    size_t k_ref = size_t(std::round(t_ref / traj.dt));
    for (size_t k = k_ref; k < traj.alpha.size(); ++k) {
        double nb = std::norm(traj.alpha[k]);
        if (nb <= n_active) {
            // log-linear interpolation between the straddling samples
            double t = traj.t0 + double(k) * traj.dt;
            if (k > k_ref) {
                double prev = std::norm(traj.alpha[k - 1]);
                if (prev > nb && prev > 0 && nb > 0) {
                    double f = (std::log(prev) - std::log(n_active)) /
                               (std::log(prev) - std::log(nb));
                    t = traj.t0 + (double(k - 1) + f) * traj.dt;
                }
            }
            return p.kappa * (t - t_ref);
        }
    }
    return p.kappa * (horizon - t_ref);  // lower bound: horizon exhausted
}

DepletionReport two_step_optimize(DepletionKind kind,
                                  const ConditionalPulseParams& init_cond,
                                  const UnconditionalPulseParams& init_uncond,
                                  const ReadoutConfig& meas,
                                  const DeviceParams& p,
                                  const TwoStepOptions& opt) {
    DepletionReport report;
    report.kind = kind;
    report.conditional = init_cond;
    report.unconditional = init_uncond;

    double amp_cap = 30.0 * (meas.amplitude + 1.0);

    // At A_j = 0 the phase coordinates are exactly degenerate and the
    // amplitude axes at phi = 0 can point uphill, so a passive start stalls
    // coordinate descent. Seed each zero-amplitude pair with a small probe
    // amplitude at the best of eight phases (deterministic, cheap).
    auto seed_zero_amplitudes = [&](const ObjectiveFn& obj,
                                    std::vector<double> x0) {
        double base = obj(x0);
        double probe = 0.01 * amp_cap;
        for (size_t k = 0; k + 1 < x0.size(); k += 2) {
            if (x0[k] != 0.0) continue;
            double best = base, best_amp = 0.0, best_phase = x0[k + 1];
            for (int m = 0; m < 8; ++m) {
                auto y = x0;
                y[k] = probe;
                y[k + 1] = kTwoPi * double(m) / 8.0;
                double v = obj(y);
                if (v < best) {
                    best = v;
                    best_amp = probe;
                    best_phase = y[k + 1];
                }
            }
            x0[k] = best_amp;
            x0[k + 1] = best_phase;
            base = best;
        }
        return x0;
    };

    auto run_step = [&](double tau_d) -> OptimizerResult {
        CostOptions cost = opt.cost;
        cost.tau_d = tau_d;
        if (kind == DepletionKind::unconditional) {
            auto obj = [&](const std::vector<double>& x) {
                UnconditionalPulseParams q = report.unconditional;
                q.amplitude[0] = x[0];
                q.phase[0] = x[1];
                q.amplitude[1] = x[2];
                q.phase[1] = x[3];
                return unconditional_cost(q, meas, p, cost);
            };
            auto o = make_opts(opt.optimizer,
                               seed_zero_amplitudes(
                                   obj, {report.unconditional.amplitude[0],
                                         report.unconditional.phase[0],
                                         report.unconditional.amplitude[1],
                                         report.unconditional.phase[1]}),
                               amp_cap);
            auto r = minimize(obj, o);
            report.unconditional.amplitude[0] = r.best_point[0];
            report.unconditional.phase[0] = r.best_point[1];
            report.unconditional.amplitude[1] = r.best_point[2];
            report.unconditional.phase[1] = r.best_point[3];
            return r;
        }
        // Conditional: tune D_0 against prepared |0>, then D_1 against |1>,
        // each with the other's current pulse in the misassignment branch.
        OptimizerResult merged;
        for (int prepared = 0; prepared < 2; ++prepared) {
            auto obj = [&, prepared](const std::vector<double>& x) {
                ConditionalPulseParams q = report.conditional;
                q.amplitude[prepared] = x[0];
                q.phase[prepared] = x[1];
                return conditional_cost(q, prepared, meas, p, cost);
            };
            auto o = make_opts(opt.optimizer,
                               seed_zero_amplitudes(
                                   obj, {report.conditional.amplitude[prepared],
                                         report.conditional.phase[prepared]}),
                               amp_cap);
            auto r = minimize(obj, o);
            report.conditional.amplitude[prepared] = r.best_point[0];
            report.conditional.phase[prepared] = r.best_point[1];
            merged.evaluations += r.evaluations;
            merged.best_value += r.best_value;
            for (auto rec : r.trace) {
                rec.iteration += int(merged.trace.size());
                merged.trace.push_back(std::move(rec));
            }
            merged.termination = r.termination;
        }
        if (!merged.trace.empty()) merged.best_point = merged.trace.back().point;
        return merged;
    };

    report.coarse_trace = run_step(opt.coarse_tau_d);
    report.fine_trace = run_step(opt.fine_tau_d);

    // Residual and passive photon numbers at the fine evaluation delay.
    double t_eval = meas.tau_r + opt.fine_tau_d;
    PulseSequence passive_seq;
    passive_seq.tones.push_back(measurement_tone(meas, p));
    passive_seq.total_duration = t_eval;
    for (int state = 0; state < 2; ++state) {
        double nbar;
        if (kind == DepletionKind::unconditional) {
            auto seq = build_unconditional_sequence(report.unconditional, meas, p);
            nbar = residual_nbar(seq, state, t_eval, p, opt.cost.dt);
        } else {
            double e = opt.cost.assignment_error;
            auto seq_ok = build_conditional_sequence(report.conditional, state, meas, p);
            auto seq_bad = build_conditional_sequence(report.conditional, 1 - state, meas, p);
            nbar = (1.0 - e) * residual_nbar(seq_ok, state, t_eval, p, opt.cost.dt) +
                   e * residual_nbar(seq_bad, state, t_eval, p, opt.cost.dt);
        }
        report.residual[state] = nbar;
        report.passive[state] = residual_nbar(passive_seq, state, t_eval, p, opt.cost.dt);
        report.savings[state] = passive_savings(nbar, report.passive[state],
                                                opt.fine_tau_d, meas, state, p);
    }
    return report;
}

std::vector<SweepRow> sweep_pulse_length(DepletionKind kind,
                                         std::span<const double> tau_p_list,
                                         double fixed_tau_d,
                                         const ReadoutConfig& meas,
                                         const DeviceParams& p,
                                         const TwoStepOptions& base,
                                         bool with_fidelity, int workers) {
    if (tau_p_list.empty()) throw Error("BadValue", "tau_p list must be non-empty");
    std::vector<SweepRow> rows(tau_p_list.size());
    auto work = [&](size_t idx) {
        TwoStepOptions opt = base;
        opt.fine_tau_d = fixed_tau_d;
        ConditionalPulseParams cond;
        cond.tau_p = tau_p_list[idx];
        UnconditionalPulseParams uncond;
        uncond.tau_p = tau_p_list[idx];
        auto report = two_step_optimize(kind, cond, uncond, meas, p, opt);
        SweepRow row;
        row.tau_p = tau_p_list[idx];
        for (int j = 0; j < 2; ++j) {
            if (kind == DepletionKind::unconditional) {
                row.amplitude[j] = report.unconditional.amplitude[j];
                row.phase[j] = report.unconditional.phase[j];
            } else {
                row.amplitude[j] = report.conditional.amplitude[j];
                row.phase[j] = report.conditional.phase[j];
            }
            row.nbar[j] = report.residual[j];
        }
        if (with_fidelity && kind == DepletionKind::unconditional &&
            meas.noise_sigma > 0) {
            // Analytic F_d including any depletion overlap with the
            // integration window: weighted-sum Gaussians share sigma.
            auto seq = build_unconditional_sequence(report.unconditional, meas, p);
            auto tr0 = evolve_field(seq, 0, p, meas.dt, 0.0, meas.tau_int);
            auto tr1 = evolve_field(seq, 1, p, meas.dt, 0.0, meas.tau_int);
            cplx second = 0.0;
            for (size_t k = 0; k < tr0.alpha.size(); ++k) {
                cplx d = tr1.alpha[k] - tr0.alpha[k];
                second += d * d;
            }
            double phi = std::abs(second) > 0 ? 0.5 * std::arg(second) : 0.0;
            std::vector<double> s0(tr0.alpha.size()), s1(tr0.alpha.size());
            for (size_t k = 0; k < s0.size(); ++k) {
                s0[k] = (tr0.alpha[k] * std::exp(-kI * phi)).real();
                s1[k] = (tr1.alpha[k] * std::exp(-kI * phi)).real();
            }
            auto w = optimal_weights(s0, s1);
            double mu0 = 0, mu1 = 0, w2 = 0;
            for (size_t k = 0; k < w.size(); ++k) {
                mu0 += w[k] * s0[k];
                mu1 += w[k] * s1[k];
                w2 += w[k] * w[k];
            }
            double sigma = meas.noise_sigma * std::sqrt(w2);
            if (sigma > 0) {
                GaussianFit g0{mu0 * meas.dt, sigma * meas.dt};
                GaussianFit g1{mu1 * meas.dt, sigma * meas.dt};
                row.f_d = 1.0 - gaussian_overlap(g0, g1);
            }
        }
        rows[idx] = row;
    };
    if (workers <= 1) {
        for (size_t idx = 0; idx < rows.size(); ++idx) work(idx);
    } else {
        std::atomic<size_t> next{0};
        std::vector<std::thread> pool;
        for (int t = 0; t < workers; ++t)
            pool.emplace_back([&] {
                for (size_t idx = next++; idx < rows.size(); idx = next++) work(idx);
            });
        for (auto& th : pool) th.join();
    }
    return rows;
}

}  // namespace resq
