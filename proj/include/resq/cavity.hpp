#pragma once

#include <complex>
#include <iosfwd>
#include <span>
#include <vector>

#include "resq/params.hpp"

namespace resq {

using cplx = std::complex<double>;

// Time-sampled cavity amplitude for one qubit state, in the frame rotating at
// f_bare. Sample k sits at t0 + k*dt.
struct FieldTrajectory {
    double t0 = 0;
    double dt = 0;
    int qubit_state = 0;
    std::vector<cplx> alpha;

    double t_end() const { return t0 + dt * double(alpha.size() - 1); }
    cplx at_index(size_t k) const { return alpha[k]; }
    // Linear interpolation; clamped at the ends.
    cplx at_time(double t) const;
    double nbar(size_t k) const { return std::norm(alpha[k]); }
};

// Pointwise photon-field observables on a common grid.
struct PhotonObservables {
    double t0 = 0;
    double dt = 0;
    std::vector<double> nbar0, nbar1;  // photons
    std::vector<double> gamma_d;       // measurement-induced dephasing, 1/s
    std::vector<double> stark;         // AC Stark shift, rad/s

    double sample(const std::vector<double>& v, double t) const;
    double gamma_d_at(double t) const { return sample(gamma_d, t); }
    double stark_at(double t) const { return sample(stark, t); }
    double nbar_at(int state, double t) const {
        return sample(state == 0 ? nbar0 : nbar1, t);
    }
    double t_end() const { return t0 + dt * double(gamma_d.size() - 1); }
};

// Integrates dalpha/dt = -(i*delta_res + i*K*|alpha|^2 + kappa/2)*alpha
//                        - i*sum_k eps_k*exp(i*(phi_k - delta_k*t))
// with classical fixed-step RK4. delta_res is the state-conditioned resonator
// detuning from the f_bare frame; delta_k the tone detunings from that frame.
// t_end < 0 means run to seq.total_duration.
FieldTrajectory evolve_field(const PulseSequence& seq, int qubit_state,
                             const DeviceParams& p, double dt = 1e-9,
                             cplx init = 0.0, double t_end = -1.0);

// Exact piecewise-exponential solution for K=0 (superposition of per-tone
// responses). Oracle for evolve_field.
cplx analytic_linear_field(const PulseSequence& seq, int qubit_state,
                           const DeviceParams& p, double t, cplx init = 0.0);

// Gamma_d = 2*chi*Im(alpha0*conj(alpha1)), B = 2*chi*Re(alpha0*conj(alpha1)).
PhotonObservables photon_observables(const FieldTrajectory& traj0,
                                     const FieldTrajectory& traj1,
                                     const DeviceParams& p);

struct DecayFit {
    double rate = 0;         // 1/s
    double uncertainty = 0;  // standard error of the rate
};

// Least-squares slope of log(nbar) vs t on a uniform grid.
DecayFit fit_exponential_decay(std::span<const double> nbar, double dt);

// CSV export: t, Re a0, Im a0, Re a1, Im a1, nbar0, nbar1, Gamma_d, B.
void write_trajectory_csv(std::ostream& out, const FieldTrajectory& traj0,
                          const FieldTrajectory& traj1,
                          const PhotonObservables& obs);

}  // namespace resq
