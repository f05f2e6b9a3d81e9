#include "resq/readout.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

namespace resq {

namespace {

constexpr cplx kI{0.0, 1.0};

FieldTrajectory measurement_trajectory(int state, const ReadoutConfig& cfg,
                                       const DeviceParams& p) {
    PulseSequence seq;
    if (cfg.amplitude > 0) {
        seq.tones.push_back(make_tone(cfg.f_rf, p, 0.0, cfg.tau_r, cfg.amplitude, 0.0));
    }
    seq.total_duration = cfg.tau_int;
    return evolve_field(seq, state, p, cfg.dt);
}

// LO phase maximizing integral of Re[e^{-i phi}(a1-a0)]^2; closed form via
// the second moment of the complex difference.
double best_lo_phase(const FieldTrajectory& t0, const FieldTrajectory& t1) {
    cplx second = 0.0;
    for (size_t k = 0; k < t0.alpha.size(); ++k) {
        cplx d = t1.alpha[k] - t0.alpha[k];
        second += d * d;
    }
    if (std::abs(second) < 1e-300) return 0.0;
    return 0.5 * std::arg(second);
}

}  // namespace

void ReadoutConfig::validate() const {
    if (!(tau_r > 0) || !(tau_int > 0)) throw Error("BadValue", "readout windows must be > 0");
    if (noise_sigma < 0) throw Error("BadValue", "noise_sigma must be >= 0");
    if (amplitude < 0) throw Error("BadValue", "amplitude must be >= 0");
}

std::vector<double> simulate_transient(int state, const ReadoutConfig& cfg,
                                       const DeviceParams& p) {
    cfg.validate();
    auto traj0 = measurement_trajectory(0, cfg, p);
    auto traj1 = measurement_trajectory(1, cfg, p);
    double phi = best_lo_phase(traj0, traj1);
    const auto& traj = state == 0 ? traj0 : traj1;
    std::vector<double> s(traj.alpha.size());
    for (size_t k = 0; k < s.size(); ++k)
        s[k] = (traj.alpha[k] * std::exp(-kI * phi)).real();
    return s;
}

std::vector<double> optimal_weights(std::span<const double> trace0,
                                    std::span<const double> trace1) {
    if (trace0.size() != trace1.size())
        throw Error("GridMismatch", "weight traces must share a grid");
    std::vector<double> w(trace0.size());
    double peak = 0;
    for (size_t k = 0; k < w.size(); ++k) {
        w[k] = trace1[k] - trace0[k];
        peak = std::max(peak, std::abs(w[k]));
    }
    if (peak > 0)
        for (auto& v : w) v /= peak;
    return w;
}

void ShotSet::declare(double thr, bool one_is_above) {
    threshold = thr;
    declared.resize(value.size());
    for (size_t k = 0; k < value.size(); ++k)
        declared[k] = (value[k] > thr) == one_is_above ? 1 : 0;
}

ShotSet sample_shots(long n_shots, int state, const ReadoutConfig& cfg,
                     const DeviceParams& p, uint64_t seed) {
    if (n_shots < 1) throw Error("BadValue", "n_shots must be >= 1");
    cfg.validate();
    auto s0 = simulate_transient(0, cfg, p);
    auto s1 = simulate_transient(1, cfg, p);
    auto w = optimal_weights(s0, s1);
    const auto& tmpl = state == 0 ? s0 : s1;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
    std::exponential_distribution<double> jump(1.0 / p.T1);

    ShotSet shots;
    shots.value.resize(n_shots);
    shots.prepared.assign(n_shots, state);
    for (long i = 0; i < n_shots; ++i) {
        size_t jump_index = tmpl.size();
        if (state == 1 && cfg.t1_decay) {
            double tj = jump(rng);
            if (tj < cfg.tau_int) jump_index = size_t(tj / cfg.dt);
        }
        double u = 0;
        for (size_t k = 0; k < tmpl.size(); ++k) {
            double sig = k < jump_index ? tmpl[k] : s0[k];
            if (cfg.noise_sigma > 0) sig += noise(rng);
            u += w[k] * sig;
        }
        shots.value[i] = u * cfg.dt;
    }
    return shots;
}

ShotSet merge_shots(const ShotSet& a, const ShotSet& b) {
    ShotSet m = a;
    m.value.insert(m.value.end(), b.value.begin(), b.value.end());
    m.prepared.insert(m.prepared.end(), b.prepared.begin(), b.prepared.end());
    m.declared.clear();
    return m;
}

ThresholdChoice choose_threshold(const ShotSet& shots) {
    // Scan midpoints of the sorted pooled values; O(n log n).
    std::vector<size_t> order(shots.value.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return shots.value[a] < shots.value[b]; });
    long n0 = std::count(shots.prepared.begin(), shots.prepared.end(), 0);
    long n1 = long(shots.prepared.size()) - n0;
    if (n0 == 0 || n1 == 0) throw Error("MissingState", "need shots for both states");

    // below(th): counts with value <= th. F_a for "one above" polarity:
    // 1 - (p(1 below) + p(0 above))/2.
    long below0 = 0, below1 = 0;
    double best = -1;
    ThresholdChoice choice;
    auto consider = [&](double th) {
        double e10 = double(below1) / double(n1);          // declared 0 given 1
        double e01 = double(n0 - below0) / double(n0);     // declared 1 given 0
        double fa_above = 1.0 - 0.5 * (e10 + e01);
        double fa_below = 1.0 - fa_above;
        if (fa_above > best) {
            best = fa_above;
            choice = {th, true};
        }
        if (fa_below > best) {
            best = fa_below;
            choice = {th, false};
        }
    };
    for (size_t k = 0; k + 1 < order.size(); ++k) {
        if (shots.prepared[order[k]] == 0) ++below0; else ++below1;
        consider(0.5 * (shots.value[order[k]] + shots.value[order[k + 1]]));
    }
    return choice;
}

AssignmentFidelity assignment_fidelity(const ShotSet& shots) {
    long n0 = 0, n1 = 0, w01 = 0, w10 = 0;
    if (shots.declared.size() != shots.value.size())
        throw Error("MissingState", "shots not yet declared");
    for (size_t k = 0; k < shots.value.size(); ++k) {
        if (shots.prepared[k] == 0) {
            ++n0;
            if (shots.declared[k] == 1) ++w01;
        } else {
            ++n1;
            if (shots.declared[k] == 0) ++w10;
        }
    }
    if (n0 == 0 || n1 == 0) throw Error("MissingState", "need both prepared states");
    AssignmentFidelity f;
    f.eps01 = double(w01) / double(n0);
    f.eps10 = double(w10) / double(n1);
    f.f_a = 1.0 - 0.5 * (f.eps01 + f.eps10);
    return f;
}

GaussianFit fit_dominant_gaussian(std::span<const double> values) {
    if (values.size() < 100) throw Error("FitDiverged", "need at least 100 shots per state");
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    double med = v[v.size() / 2];
    std::vector<double> dev(v.size());
    for (size_t k = 0; k < v.size(); ++k) dev[k] = std::abs(v[k] - med);
    std::sort(dev.begin(), dev.end());
    double sigma = 1.4826 * dev[dev.size() / 2];
    if (!(sigma > 0)) sigma = 1e-12;

    // Iterative 3-sigma trimmed ML with truncated-normal variance correction.
    // Var of N(0,1) truncated to [-3,3] is 1 - 6*phi(3)/(2*Phi(3)-1).
    const double kTruncCorr = 0.97332855;
    double mean = med;
    for (int it = 0; it < 4; ++it) {
        double lo = mean - 3.0 * sigma, hi = mean + 3.0 * sigma;
        double s = 0, s2 = 0;
        long n = 0;
        for (double x : v) {
            if (x < lo || x > hi) continue;
            s += x;
            s2 += x * x;
            ++n;
        }
        if (n < 10) throw Error("FitDiverged", "dominant mode collapsed");
        mean = s / double(n);
        double var = s2 / double(n) - mean * mean;
        if (!(var > 0)) throw Error("FitDiverged", "degenerate variance");
        sigma = std::sqrt(var / kTruncCorr);
    }
    return {mean, sigma};
}

double gaussian_overlap(const GaussianFit& a, const GaussianFit& b) {
    // integral of min(pdf_a, pdf_b); Simpson on a bracketing range.
    double lo = std::min(a.mean - 10 * a.sigma, b.mean - 10 * b.sigma);
    double hi = std::max(a.mean + 10 * a.sigma, b.mean + 10 * b.sigma);
    const int n = 20000;  // even
    double h = (hi - lo) / n;
    auto f = [&](double x) {
        double pa = std::exp(-0.5 * std::pow((x - a.mean) / a.sigma, 2)) /
                    (a.sigma * std::sqrt(kTwoPi));
        double pb = std::exp(-0.5 * std::pow((x - b.mean) / b.sigma, 2)) /
                    (b.sigma * std::sqrt(kTwoPi));
        return std::min(pa, pb);
    };
    double sum = f(lo) + f(hi);
    for (int k = 1; k < n; ++k) sum += f(lo + k * h) * (k % 2 ? 4.0 : 2.0);
    return sum * h / 3.0;
}

double discrimination_fidelity(const ShotSet& shots) {
    std::vector<double> v0, v1;
    for (size_t k = 0; k < shots.value.size(); ++k)
        (shots.prepared[k] == 0 ? v0 : v1).push_back(shots.value[k]);
    if (v0.size() < 100 || v1.size() < 100)
        throw Error("FitDiverged", "need at least 100 shots per state");
    auto g0 = fit_dominant_gaussian(v0);
    auto g1 = fit_dominant_gaussian(v1);
    return 1.0 - gaussian_overlap(g0, g1);
}

std::vector<MapCell> fidelity_map(std::span<const double> amplitude_grid,
                                  std::span<const double> freq_grid,
                                  const ReadoutConfig& base,
                                  const DeviceParams& p, uint64_t seed,
                                  long shots_per_state, int workers) {
    if (amplitude_grid.empty() || freq_grid.empty())
        throw Error("BadValue", "fidelity_map grids must be non-empty");
    std::vector<MapCell> cells(amplitude_grid.size() * freq_grid.size());
    auto work = [&](size_t idx) {
        size_t ia = idx / freq_grid.size(), jf = idx % freq_grid.size();
        ReadoutConfig cfg = base;
        cfg.amplitude = amplitude_grid[ia];
        cfg.f_rf = freq_grid[jf];
        uint64_t cell_seed = seed * 0x9e3779b97f4a7c15ull + idx;
        auto sh0 = sample_shots(shots_per_state, 0, cfg, p, cell_seed);
        auto sh1 = sample_shots(shots_per_state, 1, cfg, p, cell_seed + 0x51ul);
        auto all = merge_shots(sh0, sh1);
        auto th = choose_threshold(all);
        all.declare(th.threshold, th.one_is_above);
        auto fa = assignment_fidelity(all);
        cells[idx] = {cfg.amplitude, cfg.f_rf, fa.f_a, fa.eps01, fa.eps10};
    };
    if (workers <= 1) {
        for (size_t idx = 0; idx < cells.size(); ++idx) work(idx);
    } else {
        std::vector<std::thread> pool;
        std::atomic<size_t> next{0};
        for (int t = 0; t < workers; ++t)
            pool.emplace_back([&] {
                for (size_t idx = next++; idx < cells.size(); idx = next++) work(idx);
            });
        for (auto& th : pool) th.join();
    }
    return cells;
}

}  // namespace resq
