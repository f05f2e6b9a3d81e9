#include "resq/params.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace resq {

double wrap_phase(double phase) {
    double w = std::fmod(phase, kTwoPi);
    if (w < 0) w += kTwoPi;
    return w;
}

void TonePulse::validate() const {
    if (!(t_stop > t_start)) throw Error("BadValue", "tone t_stop must exceed t_start");
    if (amplitude < 0) throw Error("BadValue", "tone amplitude must be >= 0");
    if (phase < 0 || phase >= kTwoPi) throw Error("BadValue", "tone phase must lie in [0, 2*pi)");
}

TonePulse make_tone(double f_tone_hz, const DeviceParams& p, double t_start,
                    double t_stop, double amplitude, double phase) {
    TonePulse t;
    t.t_start = t_start;
    t.t_stop = t_stop;
    t.amplitude = amplitude;
    t.phase = wrap_phase(phase);
    t.detuning = kTwoPi * (f_tone_hz - p.f_bare);
    return t;
}

double PulseSequence::max_stop() const {
    double m = 0;
    for (const auto& t : tones) m = std::max(m, t.t_stop);
    return m;
}

void PulseSequence::validate() const {
    for (const auto& t : tones) t.validate();
    if (total_duration < max_stop())
        throw Error("BadValue", "sequence total_duration shorter than last tone");
}

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

Config parse_config(const std::string& text) {
    Config cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw Error("ConfigError", "malformed section header at line " + std::to_string(lineno));
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw Error("ConfigError", "expected key=value at line " + std::to_string(lineno));
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty()) throw Error("ConfigError", "empty key at line " + std::to_string(lineno));
        if (!section.empty()) key = section + "." + key;
        cfg[key] = val;
    }
    return cfg;
}

Config load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("ConfigError", "cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

double config_num(const Config& c, const std::string& key) {
    auto it = c.find(key);
    if (it == c.end()) throw Error("MissingKey", key);
    try {
        size_t pos = 0;
        double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw Error("BadValue", key + " = '" + it->second + "' is not numeric");
    }
}

double config_num(const Config& c, const std::string& key, double fallback) {
    return c.count(key) ? config_num(c, key) : fallback;
}

const std::vector<std::string>& device_config_keys() {
    static const std::vector<std::string> keys = {
        "device.f_q",     "device.f_r0",   "device.f_r1",    "device.f_bare",
        "device.inv_kappa", "device.chi",  "device.kerr",    "device.T1",
        "device.T2echo",  "device.tau_r",  "device.tau_int", "device.latency_feedback",
    };
    return keys;
}

std::vector<std::string> unknown_keys(const Config& c) {
    // Non-device sections are consumed by the CLI/experiment layers; only a
    // fixed set of section prefixes is recognized.
    static const std::vector<std::string> sections = {
        "device.", "measurement.", "detector.", "readout.", "depletion.",
        "optimizer.", "qec.", "run.", "rte.", "cli.", "cavity.",
    };
    std::vector<std::string> unknown;
    const auto& dev = device_config_keys();
    for (const auto& [key, _] : c) {
        if (std::find(dev.begin(), dev.end(), key) != dev.end()) continue;
        bool known_section = false;
        for (const auto& s : sections) {
            if (key.rfind(s, 0) == 0 && key != s) known_section = true;
        }
        if (key.rfind("device.", 0) == 0) known_section = false;  // unlisted device key
        if (!known_section) unknown.push_back(key);
    }
    return unknown;
}

DeviceParams derive_params(const Config& raw) {
    DeviceParams p;
    p.f_q = config_num(raw, "device.f_q");
    p.f_r0 = config_num(raw, "device.f_r0");
    p.f_r1 = config_num(raw, "device.f_r1");
    p.f_bare = config_num(raw, "device.f_bare");
    double inv_kappa = config_num(raw, "device.inv_kappa");
    p.kerr = config_num(raw, "device.kerr", 0.0);
    p.T1 = config_num(raw, "device.T1");
    p.T2echo = config_num(raw, "device.T2echo");
    p.tau_r = config_num(raw, "device.tau_r");
    p.tau_int = config_num(raw, "device.tau_int");
    p.latency_feedback = config_num(raw, "device.latency_feedback");

    for (auto [name, v] : {std::pair<const char*, double>{"inv_kappa", inv_kappa},
                           {"T1", p.T1},
                           {"T2echo", p.T2echo},
                           {"tau_r", p.tau_r},
                           {"tau_int", p.tau_int}}) {
        if (!(v > 0)) throw Error("BadValue", std::string("device.") + name + " must be > 0");
    }
    if (p.latency_feedback < 0) throw Error("BadValue", "device.latency_feedback must be >= 0");

    p.kappa = 1.0 / inv_kappa;
    p.gamma1 = 1.0 / p.T1;
    p.gamma_phi = 1.0 / p.T2echo - 0.5 / p.T1;
    if (p.gamma_phi < 0)
        throw Error("NegativeRate", "T2echo exceeds 2*T1; pure dephasing rate would be negative");

    // chi/pi equals the frequency splitting f_r1 - f_r0 (full dispersive
    // shift 2*chi per photon).
    double chi_from_freq = (kTwoPi / 2.0) * (p.f_r1 - p.f_r0);
    if (raw.count("device.chi")) {
        p.chi = config_num(raw, "device.chi");
        double scale = std::max(std::abs(p.chi), std::abs(chi_from_freq));
        if (scale > 0 && std::abs(p.chi - chi_from_freq) > 1e-9 * scale)
            throw Error("InconsistentChi", "stored chi disagrees with f_r0 - f_r1");
    } else {
        p.chi = chi_from_freq;
    }

    // g from the dispersive pull of the |0> fundamental, n_crit from it.
    double delta = kTwoPi * (p.f_q - p.f_bare);
    double pull = p.f_r0 - p.f_bare;
    double g2 = std::abs(delta) * kTwoPi * std::abs(pull);
    p.g = std::sqrt(g2);
    if (g2 > 0) p.n_crit = delta * delta / (4.0 * g2);

    return p;
}

Config to_config(const DeviceParams& p) {
    auto fmt = [](double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    Config c;
    c["device.f_q"] = fmt(p.f_q);
    c["device.f_r0"] = fmt(p.f_r0);
    c["device.f_r1"] = fmt(p.f_r1);
    c["device.f_bare"] = fmt(p.f_bare);
    c["device.inv_kappa"] = fmt(1.0 / p.kappa);
    c["device.chi"] = fmt(p.chi);
    c["device.kerr"] = fmt(p.kerr);
    c["device.T1"] = fmt(p.T1);
    c["device.T2echo"] = fmt(p.T2echo);
    c["device.tau_r"] = fmt(p.tau_r);
    c["device.tau_int"] = fmt(p.tau_int);
    c["device.latency_feedback"] = fmt(p.latency_feedback);
    return c;
}

Config default_device_config() {
    Config c;
    c["device.f_q"] = "6.477e9";
    c["device.f_r0"] = "6.8506e9";
    c["device.f_r1"] = "6.8480e9";
    c["device.f_bare"] = "6.8478e9";
    c["device.inv_kappa"] = "250e-9";
    c["device.kerr"] = "0";
    c["device.T1"] = "25e-6";
    c["device.T2echo"] = "39e-6";
    c["device.tau_r"] = "300e-9";
    c["device.tau_int"] = "400e-9";
    c["device.latency_feedback"] = "330e-9";
    return c;
}

DeviceParams default_device() { return derive_params(default_device_config()); }

}  // namespace resq
