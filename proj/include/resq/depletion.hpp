#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "resq/cavity.hpp"
#include "resq/params.hpp"
#include "resq/powell.hpp"
#include "resq/qubit.hpp"
#include "resq/readout.hpp"

namespace resq {

enum class DepletionKind { conditional, unconditional };
enum class CostMode { direct, allxy };

// Outcome-conditioned square pulse D_j at f_r|j>, applied after a feedback
// latency once the measurement tone ends.
struct ConditionalPulseParams {
    double amplitude[2] = {0, 0};  // A_j, rad/s
    double phase[2] = {0, 0};      // phi_j, rad
    double tau_p = 30e-9;
    double latency = 330e-9;

    void validate() const;
};

// Universal pulse D_U: two summed square tones at f_r|0> and f_r|1> starting
// at the measurement end (no latency).
struct UnconditionalPulseParams {
    double amplitude[2] = {0, 0};
    double phase[2] = {0, 0};
    double tau_p = 330e-9;

    void validate() const;
};

// Full drive sequence for one (prepared-state-independent) declared outcome:
// measurement tone over [0, tau_r], then the depletion tone(s).
PulseSequence build_conditional_sequence(const ConditionalPulseParams& params,
                                         int declared, const ReadoutConfig& meas,
                                         const DeviceParams& p);
PulseSequence build_unconditional_sequence(const UnconditionalPulseParams& params,
                                           const ReadoutConfig& meas,
                                           const DeviceParams& p);

struct CostOptions {
    CostMode mode = CostMode::direct;
    double tau_d = 500e-9;           // evaluation delay after measurement end
    double assignment_error = 0.0;   // conditional: P(declared != prepared)
    const DetectorCalibration* detector = nullptr;  // required for allxy mode
    uint64_t seed = 1;
    double dt = 1e-9;
};

// n_j at measurement end + tau_d for one sequence and prepared state.
double residual_nbar(const PulseSequence& seq, int state, double t_eval,
                     const DeviceParams& p, double dt = 1e-9);

// Cost for one prepared state: declared-outcome mixture of D_0/D_1 branches.
double conditional_cost(const ConditionalPulseParams& params, int prepared,
                        const ReadoutConfig& meas, const DeviceParams& p,
                        const CostOptions& opt);
// Sum of residual n over both prepared states under the single pulse D_U.
double unconditional_cost(const UnconditionalPulseParams& params,
                          const ReadoutConfig& meas, const DeviceParams& p,
                          const CostOptions& opt);

// K=0 ground truth: tone amplitudes/phases that zero both alpha_0 and
// alpha_1 exactly at the pulse end (2x2 complex linear solve).
UnconditionalPulseParams linear_oracle_unconditional(const ReadoutConfig& meas,
                                                     double tau_p,
                                                     const DeviceParams& p);

struct DepletionReport {
    DepletionKind kind;
    ConditionalPulseParams conditional;
    UnconditionalPulseParams unconditional;
    double residual[2] = {0, 0};  // n_j at the fine tau_d
    double passive[2] = {0, 0};   // passive n_j at the same tau_d
    double savings[2] = {0, 0};   // units of 1/kappa
    OptimizerResult coarse_trace, fine_trace;
};

struct TwoStepOptions {
    double coarse_tau_d = 1000e-9;
    double fine_tau_d = 500e-9;     // 400e-9 for unconditional by convention
    CostOptions cost;               // cost.tau_d is overridden per step
    OptimizerOptions optimizer;     // initial point filled from params
};

DepletionReport two_step_optimize(DepletionKind kind,
                                  const ConditionalPulseParams& init_cond,
                                  const UnconditionalPulseParams& init_uncond,
                                  const ReadoutConfig& meas,
                                  const DeviceParams& p,
                                  const TwoStepOptions& opt);

// kappa * (extra passive decay time needed to reach n_active); log formula
// for K=0, bisection on the simulated passive curve otherwise.
double passive_savings(double n_active, double n_passive, double tau_d,
                       const ReadoutConfig& meas, int state,
                       const DeviceParams& p);

struct SweepRow {
    double tau_p;
    double amplitude[2], phase[2];
    double nbar[2];
    double f_d = -1;  // <0 when not evaluated
};

std::vector<SweepRow> sweep_pulse_length(DepletionKind kind,
                                         std::span<const double> tau_p_list,
                                         double fixed_tau_d,
                                         const ReadoutConfig& meas,
                                         const DeviceParams& p,
                                         const TwoStepOptions& base,
                                         bool with_fidelity = false,
                                         int workers = 1);

}  // namespace resq
