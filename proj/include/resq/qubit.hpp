#pragma once

#include <array>
#include <complex>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "resq/cavity.hpp"
#include "resq/params.hpp"

namespace resq {

// 2x2 Hermitian (possibly unnormalized) ancilla state. Entry (0,0) is the
// ground-state population.
struct QubitDensityMatrix {
    cplx m00{1.0, 0.0}, m01{0.0, 0.0}, m10{0.0, 0.0}, m11{0.0, 0.0};

    static QubitDensityMatrix ground() { return {}; }
    static QubitDensityMatrix excited() { return {0.0, 0.0, 0.0, 1.0}; }
    static QubitDensityMatrix basis(int state) { return state == 0 ? ground() : excited(); }
    // (|0> + e^{i*phase}|1>)/sqrt(2)
    static QubitDensityMatrix equator(double phase = 0.0);

    double trace() const { return m00.real() + m11.real(); }
    double p_excited() const { return m11.real(); }
    cplx coherence() const { return m01; }

    // Hermiticity / positivity / trace bounds. Throws NonHermitianInput.
    void validate(double tol = 1e-9) const;
    double min_eigenvalue() const;
};

// Rate-vs-time callbacks use absolute time on the caller's clock.
using RateFn = std::function<double(double)>;

// One window of the driven two-level master equation:
//   drho/dt = -i[(B/2) sz + (rabi/2)(cos(phase) sx + sin(phase) sy), rho]
//             + gamma1 D[s-] rho + ((gamma_phi + Gd)/2) D[sz] rho
// integrated with fixed-step RK4 over [t0, t0 + duration].
QubitDensityMatrix evolve_qubit(const QubitDensityMatrix& rho, double t0,
                                double duration, const RateFn& stark,
                                const RateFn& dephasing, double rabi,
                                double drive_phase, const DeviceParams& p);

// Square Rabi pulse of the given rotation angle (signed; |angle| pi or pi/2)
// about x (axis 0) or y (axis 1), with photon-induced detuning/dephasing from
// env active during the pulse. env == nullptr means photon-free.
QubitDensityMatrix apply_finite_pulse(const QubitDensityMatrix& rho, int axis,
                                      double angle, double pulse_duration,
                                      const PhotonObservables* env,
                                      double t_offset, const DeviceParams& p);

struct AllXYResult {
    std::array<double, 21> f1{};  // excited-state fidelity per pulse pair

    static const std::array<std::string, 21>& labels();
    // Two-step staircase for the given initial state (inverted for |1>).
    static std::array<double, 21> ideal(int initial_state);
};

struct AllXYOptions {
    double pulse_duration = 20e-9;
};

// Runs the 21-pair sequence on the given initial state; pulses start at
// t_start_pulses on env's clock; final readout is ideal.
AllXYResult run_allxy(int initial_state, const PhotonObservables* env,
                      double t_start_pulses, const DeviceParams& p,
                      const AllXYOptions& opt = {});

// Same, starting from an arbitrary (e.g. partially decayed) state.
AllXYResult run_allxy_from(const QubitDensityMatrix& rho0,
                           const PhotonObservables* env, double t_start_pulses,
                           const DeviceParams& p, const AllXYOptions& opt = {});

// Mean absolute deviation from the ideal staircase.
double allxy_error(const AllXYResult& r, int initial_state = 0);

struct DetectorCalibration {
    double alpha_coef[2] = {0, 0};   // E per photon, per input state
    double beta_offset[2] = {0, 0};  // E at nbar = 0
    double r2[2] = {0, 0};           // fit quality
    double nbar_max = 30.0;          // validity ceiling
    double sigma_e = 0;              // detector noise on E
    double delta_nbar = 0;           // sensitivity floor, sigma_e / alpha

    std::string serialize() const;
    static DetectorCalibration deserialize(const std::string& text);
};

struct DetectorOptions {
    double f_drive = 6.8488e9;   // calibration tone frequency, Hz
    double tau_d_eval = 500e-9;  // delay between drive end and AllXY pulses
    double sigma_e = 0.004;      // additive Gaussian noise on E
    double pulse_duration = 20e-9;
    uint64_t seed = 1;
};

struct CalibrationCurve {
    std::vector<double> nbar;   // injected nbar at tau_d
    std::vector<double> e[2];   // noisy E readings per input state
};

// Populates the cavity to each nbar on the grid (at tau_d_eval after the
// drive ends), runs the AllXY detector for both input states, and fits
// E = alpha*nbar + beta per state. Throws PoorLinearity when R^2 < 0.95.
DetectorCalibration calibrate_detector(const DeviceParams& p,
                                       double steady_drive_duration,
                                       std::span<const double> nbar_grid,
                                       const DetectorOptions& opt = {},
                                       CalibrationCurve* curve_out = nullptr);

struct NbarEstimate {
    double nbar = 0;
    bool saturated = false;
    bool underflow = false;
};

NbarEstimate estimate_nbar(double e, const DetectorCalibration& calib, int input_state);

// Simulated noisy detector reading for a known photon number.
double detector_reading(double nbar_true, const DetectorCalibration& calib,
                        int input_state, std::mt19937_64& rng);

}  // namespace resq
