#include "resq/qec.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <thread>

namespace resq {

namespace {

constexpr cplx kI{0.0, 1.0};

// Antiderivatives of exp(-kappa t) {sin, cos}(omega t + theta).
double anti_sin(double kappa, double omega, double theta, double t) {
    return std::exp(-kappa * t) *
           (-kappa * std::sin(omega * t + theta) - omega * std::cos(omega * t + theta)) /
           (kappa * kappa + omega * omega);
}
double anti_cos(double kappa, double omega, double theta, double t) {
    return std::exp(-kappa * t) *
           (-kappa * std::cos(omega * t + theta) + omega * std::sin(omega * t + theta)) /
           (kappa * kappa + omega * omega);
}

void amp_damp(QubitDensityMatrix& rho, double t, const DeviceParams& p) {
    double g = std::exp(-t / p.T1);
    double p1 = rho.m11.real() * g;
    rho.m00 += rho.m11 - cplx(p1, 0.0);
    rho.m11 = p1;
    cplx c = rho.m01 * std::sqrt(g);
    rho.m01 = c;
    rho.m10 = std::conj(c);
}

void coherence_factor(QubitDensityMatrix& rho, cplx f) {
    rho.m01 *= f;
    rho.m10 *= std::conj(f);
}

// Rotation about y by the given angle: U = exp(-i angle sigma_y / 2),
// i.e. U = [[c, -s], [s, c]] with c = cos(angle/2), s = sin(angle/2).
void rotate_y(QubitDensityMatrix& rho, double angle) {
    double c = std::cos(angle / 2), s = std::sin(angle / 2);
    cplx a = rho.m00, b = rho.m01, bc = rho.m10, d = rho.m11;
    cplx u00 = c * a - s * bc, u01 = c * b - s * d;
    cplx u10 = s * a + c * bc, u11 = s * b + c * d;
    rho.m00 = u00 * c - u01 * s;
    rho.m01 = u00 * s + u01 * c;
    rho.m10 = u10 * c - u11 * s;
    rho.m11 = u10 * s + u11 * c;
}

struct PhotonFactors {
    cplx half_a{1.0, 0.0}, half_b{1.0, 0.0};
};

PhotonFactors photon_factors(const CycleConfig& cfg, int label,
                             const DeviceParams& p) {
    PhotonFactors f;
    if (cfg.model != Model::extensive) return f;
    if (!cfg.photons) throw Error("EnvelopeMissing", "extensive model requires a photon envelope");
    const auto& env = *cfg.photons;
    double ta0 = cfg.tau_d + CycleConfig::kGatePad;
    double ta1 = ta0 + CycleConfig::kEchoWindow / 2;
    double tb1 = ta1 + CycleConfig::kEchoWindow / 2;
    double n_start = env.nbar[label] * std::exp(-p.kappa * (ta0 - env.tau_ref));
    if (n_start >= 8.0)
        throw Error("PhotonRegimeViolation",
                    "extensive model restricted to nbar < 8 in the coherent window");
    double ga = gamma_d_integral(env, label, ta0, ta1, p);
    double gb = gamma_d_integral(env, label, ta1, tb1, p);
    double ba = stark_integral(env, label, ta0, ta1, p);
    double bb = stark_integral(env, label, ta1, tb1, p);
    // The dephasing multiplier is capped at 1 per half-window: transiently
    // negative Gamma_d may not regrow coherence in this effective model.
    f.half_a = std::min(1.0, std::exp(-ga)) * std::exp(-kI * ba);
    f.half_b = std::min(1.0, std::exp(-gb)) * std::exp(-kI * bb);
    return f;
}

QubitDensityMatrix coherent_step(QubitDensityMatrix rho, const CycleConfig& cfg,
                                 int label, const DeviceParams& p) {
    auto photons = photon_factors(cfg, label, p);
    double half = CycleConfig::kEchoWindow / 2;
    // Extra pure dephasing on top of T1 so the echo window decays at 1/T2echo.
    double deph = std::exp(-p.gamma_phi * half);

    amp_damp(rho, cfg.tau_d + CycleConfig::kGatePad, p);
    rotate_y(rho, kTwoPi / 4);  // pi/2
    amp_damp(rho, half, p);
    coherence_factor(rho, deph * photons.half_a);
    rotate_y(rho, kTwoPi / 2);  // echo pi
    amp_damp(rho, half, p);
    coherence_factor(rho, deph * photons.half_b);
    rotate_y(rho, cfg.variant == Variant::flipping ? -kTwoPi / 4 : kTwoPi / 4);
    amp_damp(rho, CycleConfig::kGatePad, p);
    return rho;
}

std::vector<Branch> model_cycle(const std::vector<Branch>& branches,
                                const CycleConfig& cfg, const DeviceParams& p) {
    double total = 0;
    for (const auto& b : branches) {
        if (b.weight < -1e-12) throw Error("InvalidBranchWeights", "negative branch weight");
        total += b.weight * b.rho.trace();
    }
    if (total > 1.0 + 1e-9)
        throw Error("InvalidBranchWeights", "branch weights exceed unit trace");

    double q = 1.0 - std::exp(-p.tau_r / p.T1);  // |1> decay in the S1->S2 window
    std::vector<Branch> out;
    out.reserve(branches.size() * 6);
    for (const auto& b : branches) {
        if (b.weight == 0) continue;
        auto rho = coherent_step(b.rho, cfg, b.field_label, p);
        double p0 = rho.m00.real(), p1 = rho.m11.real();
        auto emit = [&](double w, int a_next, int label, int outcome) {
            if (w <= 0) return;
            out.push_back({QubitDensityMatrix::basis(a_next), label, outcome,
                           b.weight * w});
        };
        // S1 = 0: no decay channel.
        emit(p0 * cfg.f_d, 0, 0, 0);
        emit(p0 * (1.0 - cfg.f_d), 0, 0, 1);
        // S1 = 1, survives the decay window.
        emit(p1 * (1.0 - q) * cfg.f_d, 1, 1, 1);
        emit(p1 * (1.0 - q) * (1.0 - cfg.f_d), 1, 1, 0);
        // S1 = 1, decays before S2: either outcome equally likely.
        emit(p1 * q * 0.5, 0, 1, 0);
        emit(p1 * q * 0.5, 0, 1, 1);
    }
    return out;
}

// Internal compact state index over reachable (a = post-S2, j = field label):
// 0 -> (0,0), 1 -> (1,1), 2 -> (0,1).
constexpr int kNumStates = 3;
int state_index(int a, int j) {
    if (a == 0 && j == 0) return 0;
    if (a == 1 && j == 1) return 1;
    return 2;  // (0,1)
}

struct CycleOperators {
    // t[s][o][s']: probability of declared outcome o and next state s'.
    double t[kNumStates][2][kNumStates] = {};
    // pout[s][o]: outcome marginal.
    double pout[kNumStates][2] = {};
};

CycleOperators build_operators(const CycleConfig& cfg, const DeviceParams& p) {
    CycleOperators ops;
    const int a_of[kNumStates] = {0, 1, 0};
    const int j_of[kNumStates] = {0, 1, 1};
    for (int s = 0; s < kNumStates; ++s) {
        Branch b;
        b.rho = QubitDensityMatrix::basis(a_of[s]);
        b.field_label = j_of[s];
        b.weight = 1.0;
        auto subs = model_cycle({b}, cfg, p);
        for (const auto& sb : subs) {
            int a_next = sb.rho.m11.real() > 0.5 ? 1 : 0;
            int sn = state_index(a_next, sb.field_label);
            ops.t[s][sb.outcome][sn] += sb.weight;
            ops.pout[s][sb.outcome] += sb.weight;
        }
    }
    return ops;
}

int initial_state_index(Variant v) {
    return v == Variant::nonflipping_0 ? state_index(0, 0) : state_index(1, 1);
}

}  // namespace

uint64_t split_seed(uint64_t master, uint64_t index) {
    // splitmix64 on master + index * golden gamma
    uint64_t z = master + index * 0x9e3779b97f4a7c15ull + 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

int ideal_outcome(Variant variant, long round) {
    switch (variant) {
        case Variant::flipping: return int((round - 1) % 2);
        case Variant::nonflipping_0: return 0;
        case Variant::nonflipping_1: return 1;
    }
    return 0;
}

std::optional<EventRecord> classify_event(std::span<const int> outcomes,
                                          Variant variant) {
    for (size_t k = 0; k < outcomes.size(); ++k) {
        long round = long(k) + 1;
        if (outcomes[k] == ideal_outcome(variant, round)) continue;
        if (k + 1 >= outcomes.size())
            throw Error("TruncatedAfterEvent", "the classifying round is missing");
        EventRecord rec;
        rec.rounds_to_event = round;
        rec.type = outcomes[k + 1] == ideal_outcome(variant, round + 1) ? 'd' : 's';
        return rec;
    }
    return std::nullopt;
}

std::vector<Branch> simple_model_cycle(const std::vector<Branch>& branches,
                                       const CycleConfig& cfg,
                                       const DeviceParams& p) {
    CycleConfig c = cfg;
    c.model = Model::simple;
    return model_cycle(branches, c, p);
}

std::vector<Branch> extensive_model_cycle(const std::vector<Branch>& branches,
                                          const CycleConfig& cfg,
                                          const DeviceParams& p) {
    CycleConfig c = cfg;
    c.model = Model::extensive;
    return model_cycle(branches, c, p);
}

double gamma_d_integral(const ResidualFieldInput& env, int label, double t0,
                        double t1, const DeviceParams& p) {
    double two_chi = 2.0 * p.chi;
    double scale = two_chi * env.nbar[label] * std::exp(p.kappa * env.tau_ref);
    return scale * (anti_sin(p.kappa, two_chi, env.theta0, t1) -
                    anti_sin(p.kappa, two_chi, env.theta0, t0));
}

double stark_integral(const ResidualFieldInput& env, int label, double t0,
                      double t1, const DeviceParams& p) {
    double two_chi = 2.0 * p.chi;
    double scale = two_chi * env.nbar[label] * std::exp(p.kappa * env.tau_ref);
    return scale * (anti_cos(p.kappa, two_chi, env.theta0, t1) -
                    anti_cos(p.kappa, two_chi, env.theta0, t0));
}

RTEStats rte_exact(const CycleConfig& cfg, const DeviceParams& p) {
    auto ops = build_operators(cfg, p);

    double surv[kNumStates] = {0, 0, 0};
    surv[initial_state_index(cfg.variant)] = 1.0;

    double sum_k = 0, mass_events = 0, frac_s = 0, frac_d = 0;
    double last_ev_s = 0, last_ev_d = 0;
    double prev_mass = 1.0, prev2_mass = 1.0;
    const long max_rounds = 10000000;
    long k = 0;
    double mass = 1.0;
    for (k = 1; k <= max_rounds; ++k) {
        int ideal = ideal_outcome(cfg.variant, k);
        int ideal_next = ideal_outcome(cfg.variant, k + 1);

        double next_surv[kNumStates] = {0, 0, 0};
        double ev[kNumStates] = {0, 0, 0};
        for (int s = 0; s < kNumStates; ++s) {
            if (surv[s] == 0) continue;
            for (int sn = 0; sn < kNumStates; ++sn) {
                next_surv[sn] += surv[s] * ops.t[s][ideal][sn];
                ev[sn] += surv[s] * ops.t[s][1 - ideal][sn];
            }
        }
        // Classify the removed mass by evolving one more cycle.
        double ev_d = 0, ev_s = 0, ev_total = 0;
        for (int sn = 0; sn < kNumStates; ++sn) {
            ev_d += ev[sn] * ops.pout[sn][ideal_next];
            ev_s += ev[sn] * ops.pout[sn][1 - ideal_next];
            ev_total += ev[sn];
        }
        sum_k += double(k) * ev_total;
        mass_events += ev_total;
        frac_s += ev_s;
        frac_d += ev_d;
        last_ev_s = ev_s;
        last_ev_d = ev_d;

        prev2_mass = prev_mass;
        prev_mass = mass;
        mass = next_surv[0] + next_surv[1] + next_surv[2];
        std::copy(next_surv, next_surv + kNumStates, surv);

        if (k == 4 && 1.0 - mass < 1e-12)
            throw Error("NonConvergent", "per-round event probability below 1e-12");
        if (mass < 1e-6) break;
    }

    // Geometric tail beyond round k: survival ratio from the last period
    // (two rounds, to wash out the flipping parity).
    if (mass > 0 && prev2_mass > 0) {
        double r2 = mass / prev2_mass;
        double r = std::sqrt(std::min(r2, 1.0 - 1e-15));
        double tail_mean = double(k) + 1.0 / (1.0 - r);
        sum_k += mass * tail_mean;
        mass_events += mass;
        double last_total = last_ev_s + last_ev_d;
        if (last_total > 0) {
            frac_s += mass * last_ev_s / last_total;
            frac_d += mass * last_ev_d / last_total;
        }
    }

    RTEStats stats;
    stats.residual = mass;
    stats.rte = sum_k / mass_events;
    stats.frac_s = frac_s / mass_events;
    stats.frac_d = frac_d / mass_events;
    stats.p_s = stats.frac_s / stats.rte;
    stats.p_d = stats.frac_d / stats.rte;
    return stats;
}

RTEStats rte_monte_carlo(const CycleConfig& cfg, const DeviceParams& p,
                         long n_traces, long max_rounds, uint64_t seed,
                         int workers, std::vector<std::vector<int>>* traces_out) {
    if (n_traces < 1) throw Error("BadValue", "n_traces must be >= 1");
    if (max_rounds < 2) throw Error("BadValue", "max_rounds must be >= 2");
    auto ops = build_operators(cfg, p);

    if (traces_out) traces_out->assign(size_t(n_traces), {});

    struct Tally {
        long n_events = 0, n_censored = 0, n_s = 0, n_d = 0;
        double rounds_total = 0;    // observed rounds incl. censored
        double sum_k = 0, sum_k2 = 0;  // event rounds only
    };
    std::vector<Tally> tallies(size_t(std::max(workers, 1)));

    auto run_trace = [&](long idx, Tally& t) {
        std::mt19937_64 rng(split_seed(seed, uint64_t(idx)));
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        int s = initial_state_index(cfg.variant);
        std::vector<int>* trace = traces_out ? &(*traces_out)[size_t(idx)] : nullptr;

        auto step = [&](int& state) -> int {
            double u = uni(rng);
            for (int o = 0; o < 2; ++o)
                for (int sn = 0; sn < kNumStates; ++sn) {
                    u -= ops.t[state][o][sn];
                    if (u <= 0) {
                        state = sn;
                        return o;
                    }
                }
            state = kNumStates - 1;
            return 1;  // numerical remainder
        };

        long event_round = 0;
        for (long k = 1; k <= max_rounds; ++k) {
            int o = step(s);
            if (trace) trace->push_back(o);
            if (o != ideal_outcome(cfg.variant, k)) {
                event_round = k;
                break;
            }
        }
        if (event_round == 0) {
            ++t.n_censored;
            t.rounds_total += double(max_rounds);
            return;
        }
        // The classifying round is always simulated, even past the horizon.
        int o_next = step(s);
        if (trace) trace->push_back(o_next);
        ++t.n_events;
        t.rounds_total += double(event_round);
        t.sum_k += double(event_round);
        t.sum_k2 += double(event_round) * double(event_round);
        if (o_next == ideal_outcome(cfg.variant, event_round + 1))
            ++t.n_d;
        else
            ++t.n_s;
    };

    if (workers <= 1) {
        for (long i = 0; i < n_traces; ++i) run_trace(i, tallies[0]);
    } else {
        std::atomic<long> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                for (long i = next++; i < n_traces; i = next++)
                    run_trace(i, tallies[size_t(w)]);
            });
        for (auto& th : pool) th.join();
    }

    Tally t;
    for (const auto& part : tallies) {
        t.n_events += part.n_events;
        t.n_censored += part.n_censored;
        t.n_s += part.n_s;
        t.n_d += part.n_d;
        t.rounds_total += part.rounds_total;
        t.sum_k += part.sum_k;
        t.sum_k2 += part.sum_k2;
    }

    RTEStats stats;
    stats.n_events = t.n_events;
    stats.n_censored = t.n_censored;
    if (t.n_events == 0) {
        stats.rte_defined = false;
        return stats;
    }
    // Censoring-aware estimator: total observed rounds per event.
    stats.rte = t.rounds_total / double(t.n_events);
    double mean_ev = t.sum_k / double(t.n_events);
    double var = t.sum_k2 / double(t.n_events) - mean_ev * mean_ev;
    stats.rte_err = std::sqrt(std::max(var, stats.rte * stats.rte) /
                              double(t.n_events));
    stats.frac_s = double(t.n_s) / double(t.n_events);
    stats.frac_d = double(t.n_d) / double(t.n_events);
    stats.p_s = stats.frac_s / stats.rte;
    stats.p_d = stats.frac_d / stats.rte;
    return stats;
}

std::vector<RtePoint> sweep_tau_d(const CycleConfig& tmpl,
                                  std::span<const double> tau_d_list,
                                  const DeviceParams& p, int workers) {
    if (tau_d_list.empty()) throw Error("BadValue", "tau_d list must be non-empty");
    std::vector<RtePoint> points(tau_d_list.size());
    auto work = [&](size_t idx) {
        CycleConfig cfg = tmpl;
        cfg.tau_d = tau_d_list[idx];
        RtePoint pt;
        pt.tau_d = cfg.tau_d;
        try {
            auto stats = rte_exact(cfg, p);
            pt.rte = stats.rte;
            pt.p_s = stats.p_s;
            pt.p_d = stats.p_d;
        } catch (const Error& e) {
            if (std::string(e.code()) == "PhotonRegimeViolation")
                pt.gated = true;
            else
                throw;
        }
        points[idx] = pt;
    };
    if (workers <= 1) {
        for (size_t idx = 0; idx < points.size(); ++idx) work(idx);
    } else {
        std::atomic<size_t> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (size_t idx = next++; idx < points.size(); idx = next++) work(idx);
            });
        for (auto& th : pool) th.join();
    }
    return points;
}

}  // namespace resq
