#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "resq/cavity.hpp"
#include "resq/params.hpp"

namespace resq {

struct ReadoutConfig {
    double f_rf = 6.8488e9;      // measurement tone, Hz
    double amplitude = 0;        // drive strength epsilon, rad/s
    double tau_r = 300e-9;       // s
    double tau_int = 400e-9;     // s
    double noise_sigma = 0;      // homodyne units per sample
    double threshold = 0;        // homodyne units (integrated)
    bool t1_decay = true;        // exponential |1>->|0> jumps during readout
    double dt = 1e-9;

    void validate() const;
};

// Noiseless homodyne transient for one prepared state over [0, tau_int];
// fixed-quadrature projection of the cavity field.
std::vector<double> simulate_transient(int state, const ReadoutConfig& cfg,
                                       const DeviceParams& p);

// Difference of the two averaged transients, normalized to unit maximum
// magnitude. Zero-difference input yields all-zero weights (degenerate).
std::vector<double> optimal_weights(std::span<const double> trace0,
                                    std::span<const double> trace1);

struct ShotSet {
    std::vector<double> value;    // integrated homodyne value per shot
    std::vector<int> prepared;    // true prepared state per shot
    std::vector<int> declared;    // thresholded outcome per shot
    double threshold = 0;

    void declare(double threshold, bool one_is_above);
};

// Draws n_shots integrated values for one prepared state. Weights are the
// optimal weights for cfg; T1 jumps switch the |1> transient to the |0>
// template at an exponentially distributed time.
ShotSet sample_shots(long n_shots, int state, const ReadoutConfig& cfg,
                     const DeviceParams& p, uint64_t seed);

// Merges per-state shot sets.
ShotSet merge_shots(const ShotSet& a, const ShotSet& b);

// Threshold that maximizes empirical assignment fidelity (exhaustive scan
// over candidate midpoints). Returns threshold and polarity.
struct ThresholdChoice {
    double threshold = 0;
    bool one_is_above = true;
};
ThresholdChoice choose_threshold(const ShotSet& shots);

struct AssignmentFidelity {
    double f_a = 0;
    double eps01 = 0;  // declared 1 given prepared 0
    double eps10 = 0;  // declared 0 given prepared 1
};
AssignmentFidelity assignment_fidelity(const ShotSet& shots);

struct GaussianFit {
    double mean = 0, sigma = 0;
};
// ML fit of the dominant mode (3-sigma trimmed, truncation-corrected).
GaussianFit fit_dominant_gaussian(std::span<const double> values);

// 1 - overlap area of the two per-state Gaussian best fits.
double discrimination_fidelity(const ShotSet& shots);
double gaussian_overlap(const GaussianFit& a, const GaussianFit& b);

struct MapCell {
    double amplitude, f_rf, f_a, eps01, eps10;
};
// F_a over an amplitude x frequency grid; 4000 shots per state per cell.
std::vector<MapCell> fidelity_map(std::span<const double> amplitude_grid,
                                  std::span<const double> freq_grid,
                                  const ReadoutConfig& base,
                                  const DeviceParams& p, uint64_t seed,
                                  long shots_per_state = 4000, int workers = 1);

}  // namespace resq
