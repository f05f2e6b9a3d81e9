#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "resq/errors.hpp"

namespace resq {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

// Wraps an angle into [0, 2*pi).
double wrap_phase(double phase);

// Physical device constants plus derived quantities. Frequencies are stored
// in Hz, all rates in rad/s (or 1/s for decay rates); conversions between the
// two live here and nowhere else.
struct DeviceParams {
    // configured
    double f_q = 0;        // qubit transition, Hz
    double f_r0 = 0;       // resonator fundamental, qubit in |0>, Hz
    double f_r1 = 0;       // resonator fundamental, qubit in |1>, Hz
    double f_bare = 0;     // bare resonator fundamental, Hz
    double kappa = 0;      // resonator linewidth, 1/s
    double chi = 0;        // dispersive half-shift, rad/s (2*chi = shift/photon)
    double kerr = 0;       // self-Kerr, rad/s per photon (0 = linear)
    double T1 = 0;         // relaxation time, s
    double T2echo = 0;     // echo dephasing time, s
    double tau_r = 0;      // measurement pulse duration, s
    double tau_int = 0;    // integration window, s
    double latency_feedback = 0;  // conditional pulse arrival delay, s

    // derived
    double g = 0;          // qubit-resonator coupling, rad/s
    double gamma1 = 0;     // 1/T1, 1/s
    double gamma_phi = 0;  // pure dephasing rate, 1/s
    double n_crit = 0;     // critical photon number

    // Detuning of the state-conditioned resonator fundamental from the
    // rotating frame (always referenced to f_bare), rad/s.
    double delta_res(int qubit_state) const {
        return kTwoPi * ((qubit_state == 0 ? f_r0 : f_r1) - f_bare);
    }
};

// One square drive tone. amplitude is the field drive strength epsilon in
// rad/s (steady-state photons = eps^2 / (delta^2 + kappa^2/4), with delta the
// detuning from the state-conditioned resonance). detuning is relative to the
// f_bare rotating frame.
struct TonePulse {
    double t_start = 0;   // s
    double t_stop = 0;    // s
    double amplitude = 0; // rad/s
    double phase = 0;     // rad, in [0, 2*pi)
    double detuning = 0;  // rad/s

    void validate() const;
};

// Helper: tone at an absolute frequency (Hz), detuning filled in from f_bare.
TonePulse make_tone(double f_tone_hz, const DeviceParams& p, double t_start,
                    double t_stop, double amplitude, double phase);

struct PulseSequence {
    std::vector<TonePulse> tones;  // may overlap in time
    double total_duration = 0;     // >= max t_stop

    void validate() const;
    double max_stop() const;
};

// Flat key-value configuration (optional [section] headers flatten to
// "section.key").
using Config = std::map<std::string, std::string>;

Config load_config(const std::string& path);
Config parse_config(const std::string& text);

double config_num(const Config& c, const std::string& key);
double config_num(const Config& c, const std::string& key, double fallback);

// Keys understood by derive_params.
const std::vector<std::string>& device_config_keys();

// Returns keys in c that no schema section recognizes (loader warning list).
std::vector<std::string> unknown_keys(const Config& c);

// Builds and validates DeviceParams from a config. Throws Error with codes
// MissingKey, NegativeRate, InconsistentChi, BadValue.
DeviceParams derive_params(const Config& raw);

// Serializes the configured fields with enough digits that
// derive_params(to_config(p)) reproduces p bit-for-bit.
Config to_config(const DeviceParams& p);

// Device values used throughout the experiments this artifact mirrors.
DeviceParams default_device();
Config default_device_config();

}  // namespace resq
