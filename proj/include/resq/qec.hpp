#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "resq/params.hpp"
#include "resq/qubit.hpp"

namespace resq {

enum class Variant { flipping, nonflipping_0, nonflipping_1 };
enum class Model { simple, extensive };

// Residual post-measurement cavity field per previous-measurement outcome
// label j: nbar_j(t) = nbar[j] * exp(-kappa (t - tau_ref)), with the branch
// relative phase theta0 + 2 chi t (t measured from the measurement end).
struct ResidualFieldInput {
    double nbar[2] = {0, 0};
    double tau_ref = 0;
    double theta0 = 0;
};

struct CycleConfig {
    Variant variant = Variant::flipping;
    Model model = Model::simple;
    double tau_d = 500e-9;
    double f_d = 0.999;  // readout discrimination fidelity
    std::optional<ResidualFieldInput> photons;

    static constexpr double kEchoWindow = 160e-9;
    static constexpr double kGatePad = 20e-9;

    double cycle_time(const DeviceParams& p) const {
        return tau_d + kEchoWindow + 2 * kGatePad + p.tau_r;
    }
};

struct EventRecord {
    long rounds_to_event = 0;  // 1-based round index of the first deviation
    char type = '?';           // 's' or 'd'
};

// Ideal outcome at 1-based round k for the given variant
// (flipping: 0,1,0,1,...; nonflipping_j: constant j).
int ideal_outcome(Variant variant, long round);

// First deviation from the ideal sequence, classified by the following round.
// Returns nullopt when the sequence never deviates.
std::optional<EventRecord> classify_event(std::span<const int> outcomes,
                                          Variant variant);

// One unnormalized branch of the cycle bookkeeping. field_label is the
// qubit state during the previous measurement (selects the photon envelope);
// outcome is the declared measurement result of the cycle that produced it.
struct Branch {
    QubitDensityMatrix rho;
    int field_label = 0;
    int outcome = -1;
    double weight = 1.0;
};

// Applies one full cycle (coherent step + S1/decay/S2 measurement) to every
// input branch, emitting outcome-labeled sub-branches with exact weights.
std::vector<Branch> simple_model_cycle(const std::vector<Branch>& branches,
                                       const CycleConfig& cfg,
                                       const DeviceParams& p);
std::vector<Branch> extensive_model_cycle(const std::vector<Branch>& branches,
                                          const CycleConfig& cfg,
                                          const DeviceParams& p);

// Photon-envelope integrals over [t0, t1] (t from measurement end) for
// envelope label j: dephasing integral of Gamma_d and Stark integral of B.
double gamma_d_integral(const ResidualFieldInput& env, int label, double t0,
                        double t1, const DeviceParams& p);
double stark_integral(const ResidualFieldInput& env, int label, double t0,
                      double t1, const DeviceParams& p);

struct RTEStats {
    double rte = 0;
    double rte_err = 0;
    double p_s = 0, p_d = 0;      // per-round event rates by type
    double frac_s = 0, frac_d = 0;  // event-type fractions
    long n_events = 0, n_censored = 0;  // Monte Carlo accounting
    double residual = 0;          // exact-mode terminal unclassified mass
    bool rte_defined = true;      // false when every trace is censored
};

RTEStats rte_exact(const CycleConfig& cfg, const DeviceParams& p);

RTEStats rte_monte_carlo(const CycleConfig& cfg, const DeviceParams& p,
                         long n_traces, long max_rounds, uint64_t seed,
                         int workers = 1,
                         std::vector<std::vector<int>>* traces_out = nullptr);

struct RtePoint {
    double tau_d = 0;
    double rte = 0, p_s = 0, p_d = 0;
    bool gated = false;  // photon-regime gate tripped; values invalid
};

std::vector<RtePoint> sweep_tau_d(const CycleConfig& tmpl,
                                  std::span<const double> tau_d_list,
                                  const DeviceParams& p, int workers = 1);

// Counter-based seed splitting for parallel reproducibility.
uint64_t split_seed(uint64_t master, uint64_t index);

}  // namespace resq
