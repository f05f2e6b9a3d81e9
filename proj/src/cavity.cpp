#include "resq/cavity.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace resq {

namespace {

constexpr cplx kI{0.0, 1.0};

// Tone membership is decided at t_gate (the RK4 step midpoint) so that every
// integration step sees a continuous right-hand side; the oscillation phase
// still uses the true sample time t. Exact for grid-aligned tone edges.
cplx drive_sum(const PulseSequence& seq, double t, double t_gate) {
    cplx d = 0.0;
    for (const auto& tone : seq.tones) {
        if (t_gate >= tone.t_start && t_gate < tone.t_stop)
            d += tone.amplitude * std::exp(kI * (tone.phase - tone.detuning * t));
    }
    return d;
}

}  // namespace

cplx FieldTrajectory::at_time(double t) const {
    if (alpha.empty()) return 0.0;
    double x = (t - t0) / dt;
    if (x <= 0) return alpha.front();
    if (x >= double(alpha.size() - 1)) return alpha.back();
    size_t k = size_t(x);
    double f = x - double(k);
    return alpha[k] * (1.0 - f) + alpha[k + 1] * f;
}

double PhotonObservables::sample(const std::vector<double>& v, double t) const {
    if (v.empty()) return 0.0;
    double x = (t - t0) / dt;
    if (x <= 0) return v.front();
    if (x >= double(v.size() - 1)) return v.back();
    size_t k = size_t(x);
    double f = x - double(k);
    return v[k] * (1.0 - f) + v[k + 1] * f;
}

FieldTrajectory evolve_field(const PulseSequence& seq, int qubit_state,
                             const DeviceParams& p, double dt, cplx init,
                             double t_end) {
    if (dt > 2e-9 || dt <= 0) throw Error("StepTooLarge", "evolve_field requires 0 < dt <= 2 ns");
    seq.validate();
    if (t_end < 0) t_end = seq.total_duration;

    const double delta_res = p.delta_res(qubit_state);
    const cplx damp = kI * delta_res + p.kappa / 2.0;
    const double kerr = p.kerr;

    double half_dt = dt / 2;
    auto rhs = [&](double t, double t_gate, cplx a) {
        return -(damp + kI * kerr * std::norm(a)) * a - kI * drive_sum(seq, t, t_gate);
    };

    size_t n = size_t(std::ceil(t_end / dt - 1e-9)) + 1;
    FieldTrajectory traj;
    traj.t0 = 0;
    traj.dt = dt;
    traj.qubit_state = qubit_state;
    traj.alpha.resize(n);
    cplx a = init;
    traj.alpha[0] = a;
    for (size_t k = 1; k < n; ++k) {
        double t = double(k - 1) * dt;
        double tm = t + half_dt;
        cplx k1 = rhs(t, tm, a);
        cplx k2 = rhs(tm, tm, a + dt / 2 * k1);
        cplx k3 = rhs(tm, tm, a + dt / 2 * k2);
        cplx k4 = rhs(t + dt, tm, a + dt * k3);
        a += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!std::isfinite(a.real()) || !std::isfinite(a.imag()))
            throw Error("NonFiniteAmplitude", "field blew up; check Kerr/drive combination");
        traj.alpha[k] = a;
    }
    return traj;
}

cplx analytic_linear_field(const PulseSequence& seq, int qubit_state,
                           const DeviceParams& p, double t, cplx init) {
    if (p.kerr != 0) throw Error("NonlinearRegime", "analytic solution requires K = 0");
    seq.validate();

    const double delta_res = p.delta_res(qubit_state);
    const cplx lam = kI * delta_res + p.kappa / 2.0;  // decay constant of the homogeneous part

    cplx a = init * std::exp(-lam * t);
    for (const auto& tone : seq.tones) {
        if (t <= tone.t_start) continue;
        double t1 = std::min(t, tone.t_stop);
        // Response to drive -i*eps*exp(i*phi)*exp(-i*delta_k*s) over [t_start, t1],
        // then free decay to t.
        cplx eps = tone.amplitude * std::exp(kI * tone.phase);
        cplx denom = lam - kI * tone.detuning;
        cplx part;
        if (std::abs(denom) < 1e-300) {
            // resonant in the rotating frame sense: secular growth
            part = -kI * eps * std::exp(-kI * tone.detuning * t1) * (t1 - tone.t_start);
        } else {
            part = -kI * eps / denom *
                   (std::exp(-kI * tone.detuning * t1) -
                    std::exp(-kI * tone.detuning * tone.t_start) * std::exp(-lam * (t1 - tone.t_start)));
        }
        a += part * std::exp(-lam * (t - t1));
    }
    return a;
}

PhotonObservables photon_observables(const FieldTrajectory& traj0,
                                     const FieldTrajectory& traj1,
                                     const DeviceParams& p) {
    if (traj0.alpha.size() != traj1.alpha.size() || traj0.t0 != traj1.t0 ||
        traj0.dt != traj1.dt)
        throw Error("GridMismatch", "photon_observables requires matching grids");
    PhotonObservables obs;
    obs.t0 = traj0.t0;
    obs.dt = traj0.dt;
    size_t n = traj0.alpha.size();
    obs.nbar0.resize(n);
    obs.nbar1.resize(n);
    obs.gamma_d.resize(n);
    obs.stark.resize(n);
    for (size_t k = 0; k < n; ++k) {
        cplx cross = traj0.alpha[k] * std::conj(traj1.alpha[k]);
        obs.nbar0[k] = std::norm(traj0.alpha[k]);
        obs.nbar1[k] = std::norm(traj1.alpha[k]);
        obs.gamma_d[k] = 2.0 * p.chi * cross.imag();
        obs.stark[k] = 2.0 * p.chi * cross.real();
    }
    return obs;
}

DecayFit fit_exponential_decay(std::span<const double> nbar, double dt) {
    if (nbar.size() < 10) throw Error("TooFewPoints", "need at least 10 samples");
    size_t n = nbar.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t k = 0; k < n; ++k) {
        if (!(nbar[k] > 0)) throw Error("NonPositiveSample", "log fit requires nbar > 0");
        double x = double(k) * dt;
        double y = std::log(nbar[k]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    double dn = double(n);
    double denom = dn * sxx - sx * sx;
    double slope = (dn * sxy - sx * sy) / denom;
    double intercept = (sy - slope * sx) / dn;
    double ssr = 0;
    for (size_t k = 0; k < n; ++k) {
        double x = double(k) * dt;
        double r = std::log(nbar[k]) - (intercept + slope * x);
        ssr += r * r;
    }
    DecayFit fit;
    fit.rate = -slope;
    if (n > 2) fit.uncertainty = std::sqrt(ssr / double(n - 2) * dn / denom);
    return fit;
}

void write_trajectory_csv(std::ostream& out, const FieldTrajectory& traj0,
                          const FieldTrajectory& traj1,
                          const PhotonObservables& obs) {
    out << "t,re_alpha0,im_alpha0,re_alpha1,im_alpha1,nbar0,nbar1,gamma_d,stark\n";
    for (size_t k = 0; k < traj0.alpha.size(); ++k) {
        double t = traj0.t0 + double(k) * traj0.dt;
        out << t << ',' << traj0.alpha[k].real() << ',' << traj0.alpha[k].imag() << ','
            << traj1.alpha[k].real() << ',' << traj1.alpha[k].imag() << ','
            << obs.nbar0[k] << ',' << obs.nbar1[k] << ',' << obs.gamma_d[k] << ','
            << obs.stark[k] << '\n';
    }
}

}  // namespace resq
