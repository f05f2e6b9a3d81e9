#include "resq/qubit.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace resq {

namespace {

constexpr cplx kI{0.0, 1.0};

struct Rho {
    cplx m00, m01, m11;  // m10 = conj(m01)
};

Rho rhs(const Rho& r, double b, double gd_plus_gphi, double gamma1, cplx h01) {
    // -i[H,rho] with H = [[b/2, h01],[conj(h01), -b/2]], plus relaxation and
    // pure dephasing.
    cplx comm00 = -kI * (h01 * std::conj(r.m01) - r.m01 * std::conj(h01));
    cplx comm01 = -kI * (b * r.m01 + h01 * (r.m11 - r.m00));
    Rho d;
    d.m00 = comm00 + gamma1 * r.m11;
    d.m11 = -comm00 - gamma1 * r.m11;
    d.m01 = comm01 - (gamma1 / 2.0 + gd_plus_gphi) * r.m01;
    return d;
}

}  // namespace

QubitDensityMatrix QubitDensityMatrix::equator(double phase) {
    QubitDensityMatrix r;
    r.m00 = 0.5;
    r.m11 = 0.5;
    r.m01 = 0.5 * std::exp(-kI * phase);
    r.m10 = std::conj(r.m01);
    return r;
}

double QubitDensityMatrix::min_eigenvalue() const {
    double mean = 0.5 * (m00.real() + m11.real());
    double half = 0.5 * (m00.real() - m11.real());
    return mean - std::sqrt(half * half + std::norm(m01));
}

void QubitDensityMatrix::validate(double tol) const {
    if (std::abs(m00.imag()) > tol || std::abs(m11.imag()) > tol ||
        std::abs(m01 - std::conj(m10)) > tol)
        throw Error("NonHermitianInput", "density matrix is not Hermitian");
    if (min_eigenvalue() < -std::max(tol, 1e-12))
        throw Error("NonHermitianInput", "density matrix has a negative eigenvalue");
    double tr = trace();
    if (!(tr > 0) || tr > 1 + 1e-9)
        throw Error("NonHermitianInput", "trace outside (0, 1]");
}

QubitDensityMatrix evolve_qubit(const QubitDensityMatrix& rho, double t0,
                                double duration, const RateFn& stark,
                                const RateFn& dephasing, double rabi,
                                double drive_phase, const DeviceParams& p) {
    if (duration < 0) throw Error("BadValue", "negative evolution window");
    rho.validate(1e-9);
    if (duration == 0) return rho;

    cplx h01 = 0.5 * rabi * std::exp(-kI * drive_phase);
    size_t n = size_t(std::ceil(duration / 0.05e-9));
    n = std::min<size_t>(std::max<size_t>(n, 20), 400000);
    double dt = duration / double(n);

    auto b_at = [&](double t) { return stark ? stark(t) : 0.0; };
    auto gd_at = [&](double t) {
        return p.gamma_phi + (dephasing ? dephasing(t) : 0.0);
    };

    Rho r{rho.m00, rho.m01, rho.m11};
    for (size_t k = 0; k < n; ++k) {
        double t = t0 + double(k) * dt;
        double tm = t + dt / 2, te = t + dt;
        Rho k1 = rhs(r, b_at(t), gd_at(t), p.gamma1, h01);
        Rho a{r.m00 + dt / 2 * k1.m00, r.m01 + dt / 2 * k1.m01, r.m11 + dt / 2 * k1.m11};
        Rho k2 = rhs(a, b_at(tm), gd_at(tm), p.gamma1, h01);
        Rho b{r.m00 + dt / 2 * k2.m00, r.m01 + dt / 2 * k2.m01, r.m11 + dt / 2 * k2.m11};
        Rho k3 = rhs(b, b_at(tm), gd_at(tm), p.gamma1, h01);
        Rho c{r.m00 + dt * k3.m00, r.m01 + dt * k3.m01, r.m11 + dt * k3.m11};
        Rho k4 = rhs(c, b_at(te), gd_at(te), p.gamma1, h01);
        r.m00 += dt / 6.0 * (k1.m00 + 2.0 * k2.m00 + 2.0 * k3.m00 + k4.m00);
        r.m01 += dt / 6.0 * (k1.m01 + 2.0 * k2.m01 + 2.0 * k3.m01 + k4.m01);
        r.m11 += dt / 6.0 * (k1.m11 + 2.0 * k2.m11 + 2.0 * k3.m11 + k4.m11);
    }
    QubitDensityMatrix out;
    out.m00 = r.m00.real();
    out.m11 = r.m11.real();
    out.m01 = r.m01;
    out.m10 = std::conj(r.m01);
    return out;
}

QubitDensityMatrix apply_finite_pulse(const QubitDensityMatrix& rho, int axis,
                                      double angle, double pulse_duration,
                                      const PhotonObservables* env,
                                      double t_offset, const DeviceParams& p) {
    if (!(pulse_duration > 0)) throw Error("BadValue", "pulse_duration must be > 0");
    double rabi = std::abs(angle) / pulse_duration;
    double phase = (axis == 0 ? 0.0 : kTwoPi / 4.0);
    if (angle < 0) phase += kTwoPi / 2.0;
    RateFn stark, deph;
    if (env) {
        stark = [env](double t) { return env->stark_at(t); };
        deph = [env](double t) { return env->gamma_d_at(t); };
    }
    return evolve_qubit(rho, t_offset, pulse_duration, stark, deph, rabi, phase, p);
}

namespace {

// Pair encoding: I=0, X=1, Y=2, x=3, y=4 (capitals are pi pulses).
struct PulseSpec {
    int axis;      // 0=x, 1=y, -1=identity
    double angle;  // rad
};

PulseSpec decode(char c) {
    switch (c) {
        case 'I': return {-1, 0.0};
        case 'X': return {0, kTwoPi / 2.0};
        case 'Y': return {1, kTwoPi / 2.0};
        case 'x': return {0, kTwoPi / 4.0};
        case 'y': return {1, kTwoPi / 4.0};
    }
    throw Error("BadValue", "unknown pulse label");
}

QubitDensityMatrix apply_labeled(const QubitDensityMatrix& rho, char label,
                                 double duration, const PhotonObservables* env,
                                 double t, const DeviceParams& p) {
    PulseSpec s = decode(label);
    if (s.axis < 0) {
        RateFn stark, deph;
        if (env) {
            stark = [env](double tt) { return env->stark_at(tt); };
            deph = [env](double tt) { return env->gamma_d_at(tt); };
        }
        return evolve_qubit(rho, t, duration, stark, deph, 0.0, 0.0, p);
    }
    return apply_finite_pulse(rho, s.axis, s.angle, duration, env, t, p);
}

}  // namespace

const std::array<std::string, 21>& AllXYResult::labels() {
    static const std::array<std::string, 21> kLabels = {
        "II", "XX", "YY", "XY", "YX",                               // ideal |0>
        "xI", "yI", "xy", "yx", "xY", "yX", "Xy", "Yx", "xX", "Xx",
        "yY", "Yy",                                                 // ideal equator
        "XI", "YI", "xx", "yy"};                                    // ideal |1>
    return kLabels;
}

std::array<double, 21> AllXYResult::ideal(int initial_state) {
    std::array<double, 21> v{};
    for (int k = 0; k < 21; ++k) {
        double f = k < 5 ? 0.0 : (k < 17 ? 0.5 : 1.0);
        v[k] = initial_state == 0 ? f : 1.0 - f;
    }
    return v;
}

AllXYResult run_allxy_from(const QubitDensityMatrix& rho0,
                           const PhotonObservables* env, double t_start_pulses,
                           const DeviceParams& p, const AllXYOptions& opt) {
    double span = 2.0 * opt.pulse_duration;
    if (env && env->t_end() + 1e-12 < t_start_pulses + span)
        throw Error("EnvelopeTooShort", "photon envelope does not cover the pulse pair");
    AllXYResult out;
    const auto& labels = AllXYResult::labels();
    for (int k = 0; k < 21; ++k) {
        QubitDensityMatrix rho = rho0;
        rho = apply_labeled(rho, labels[k][0], opt.pulse_duration, env, t_start_pulses, p);
        rho = apply_labeled(rho, labels[k][1], opt.pulse_duration, env,
                            t_start_pulses + opt.pulse_duration, p);
        out.f1[k] = rho.p_excited() / rho.trace();
    }
    return out;
}

AllXYResult run_allxy(int initial_state, const PhotonObservables* env,
                      double t_start_pulses, const DeviceParams& p,
                      const AllXYOptions& opt) {
    return run_allxy_from(QubitDensityMatrix::basis(initial_state), env,
                          t_start_pulses, p, opt);
}

double allxy_error(const AllXYResult& r, int initial_state) {
    auto ideal = AllXYResult::ideal(initial_state);
    double sum = 0;
    for (int k = 0; k < 21; ++k) sum += std::abs(r.f1[k] - ideal[k]);
    return sum / 21.0;
}

std::string DetectorCalibration::serialize() const {
    std::ostringstream out;
    out.precision(17);
    out << "alpha0 = " << alpha_coef[0] << "\nalpha1 = " << alpha_coef[1]
        << "\nbeta0 = " << beta_offset[0] << "\nbeta1 = " << beta_offset[1]
        << "\nr2_0 = " << r2[0] << "\nr2_1 = " << r2[1]
        << "\nnbar_max = " << nbar_max << "\nsigma_e = " << sigma_e
        << "\ndelta_nbar = " << delta_nbar << "\n";
    return out.str();
}

DetectorCalibration DetectorCalibration::deserialize(const std::string& text) {
    Config c = parse_config(text);
    DetectorCalibration d;
    d.alpha_coef[0] = config_num(c, "alpha0");
    d.alpha_coef[1] = config_num(c, "alpha1");
    d.beta_offset[0] = config_num(c, "beta0");
    d.beta_offset[1] = config_num(c, "beta1");
    d.r2[0] = config_num(c, "r2_0", 1.0);
    d.r2[1] = config_num(c, "r2_1", 1.0);
    d.nbar_max = config_num(c, "nbar_max");
    d.sigma_e = config_num(c, "sigma_e");
    d.delta_nbar = config_num(c, "delta_nbar");
    return d;
}

namespace {

struct LineFit {
    double slope, intercept, r2;
};

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    double n = double(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t k = 0; k < x.size(); ++k) {
        sx += x[k];
        sy += y[k];
        sxx += x[k] * x[k];
        sxy += x[k] * y[k];
    }
    LineFit f;
    f.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    f.intercept = (sy - f.slope * sx) / n;
    double ss_res = 0, ss_tot = 0, ym = sy / n;
    for (size_t k = 0; k < x.size(); ++k) {
        double r = y[k] - (f.intercept + f.slope * x[k]);
        ss_res += r * r;
        ss_tot += (y[k] - ym) * (y[k] - ym);
    }
    f.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
    return f;
}

}  // namespace

DetectorCalibration calibrate_detector(const DeviceParams& p,
                                       double steady_drive_duration,
                                       std::span<const double> nbar_grid,
                                       const DetectorOptions& opt,
                                       CalibrationCurve* curve_out) {
    if (nbar_grid.empty()) throw Error("BadValue", "empty nbar grid");
    for (double nb : nbar_grid)
        if (nb < 0 || nb > 30.0 + 1e-9)
            throw Error("BadValue", "nbar grid must lie within [0, 30]");

    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> noise(0.0, opt.sigma_e);

    double allxy_span = 2.0 * opt.pulse_duration;

    std::vector<double> xs(nbar_grid.begin(), nbar_grid.end());
    std::vector<double> es[2];
    for (int state = 0; state < 2; ++state) {
        double delta_tone = kTwoPi * (opt.f_drive - p.f_bare);
        double det = delta_tone - p.delta_res(state);
        double lorentz = det * det + p.kappa * p.kappa / 4.0;
        for (double target : nbar_grid) {
            // Drive amplitude that leaves the requested photon number at
            // tau_d_eval after the (steady-state) drive ends; exact for K=0.
            double n_ss = target * std::exp(p.kappa * opt.tau_d_eval);
            double eps = std::sqrt(n_ss * lorentz);

            cplx alpha_end = 0.0;
            if (eps > 0) {
                PulseSequence drive;
                drive.tones.push_back(
                    make_tone(opt.f_drive, p, 0.0, steady_drive_duration, eps, 0.0));
                drive.total_duration = steady_drive_duration;
                auto traj = evolve_field(drive, state, p, 1e-9);
                alpha_end = traj.alpha.back();
            }

            // Free decay in the prepared state's frame until the pulses start;
            // the qubit is diagonal over this window, so only the magnitude
            // matters for it.
            cplx lam{p.kappa / 2.0, p.delta_res(state)};
            cplx alpha_at_pulses =
                alpha_end * std::exp(-cplx(lam.real(), lam.imag()) * opt.tau_d_eval);

            // Branch fields separate when the first pulse creates coherence:
            // both start from the common field at tau_d. Env clock: t = 0 at
            // the start of the pulses.
            PulseSequence free_seq;
            free_seq.total_duration = allxy_span + 50e-9;
            auto traj0 = evolve_field(free_seq, 0, p, 1e-9, alpha_at_pulses);
            auto traj1 = evolve_field(free_seq, 1, p, 1e-9, alpha_at_pulses);
            auto env = photon_observables(traj0, traj1, p);

            // Idle relaxation between drive end and the AllXY pulses.
            QubitDensityMatrix rho = QubitDensityMatrix::basis(state);
            rho = evolve_qubit(rho, 0.0, opt.tau_d_eval, nullptr, nullptr, 0.0, 0.0, p);

            AllXYOptions aopt;
            aopt.pulse_duration = opt.pulse_duration;
            auto res = run_allxy_from(rho, &env, 0.0, p, aopt);
            double e = allxy_error(res, state) + noise(rng);
            es[state].push_back(e);
        }
    }

    if (curve_out) {
        curve_out->nbar = xs;
        curve_out->e[0] = es[0];
        curve_out->e[1] = es[1];
    }

    DetectorCalibration d;
    d.sigma_e = opt.sigma_e;
    d.nbar_max = *std::max_element(xs.begin(), xs.end());
    for (int state = 0; state < 2; ++state) {
        LineFit f = fit_line(xs, es[state]);
        d.alpha_coef[state] = f.slope;
        d.beta_offset[state] = f.intercept;
        d.r2[state] = f.r2;
        if (xs.size() >= 3 && f.r2 < 0.95)
            throw Error("PoorLinearity",
                        "detector response R^2 < 0.95 for input state " + std::to_string(state));
    }
    double alpha_mean = 0.5 * (d.alpha_coef[0] + d.alpha_coef[1]);
    d.delta_nbar = alpha_mean > 0 ? d.sigma_e / alpha_mean : 0.0;
    return d;
}

NbarEstimate estimate_nbar(double e, const DetectorCalibration& calib, int input_state) {
    if (e < 0) throw Error("BadValue", "E must be >= 0");
    NbarEstimate out;
    double raw = (e - calib.beta_offset[input_state]) / calib.alpha_coef[input_state];
    if (raw < 0) {
        out.nbar = 0;
        out.underflow = true;
    } else {
        out.nbar = raw;
    }
    if (out.nbar > calib.nbar_max) out.saturated = true;
    return out;
}

double detector_reading(double nbar_true, const DetectorCalibration& calib,
                        int input_state, std::mt19937_64& rng) {
    std::normal_distribution<double> noise(0.0, calib.sigma_e);
    double e = calib.alpha_coef[input_state] * nbar_true +
               calib.beta_offset[input_state] + noise(rng);
    return std::max(0.0, e);
}

}  // namespace resq
