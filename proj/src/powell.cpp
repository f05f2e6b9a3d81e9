#include "resq/powell.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace resq {

namespace {

constexpr double kGolden = 1.618033988749895;
constexpr double kCGold = 0.3819660112501051;  // 2 - golden ratio

// Determinant of the row-normalized direction matrix; degeneracy detector.
double normalized_determinant(std::vector<std::vector<double>> m) {
    size_t n = m.size();
    for (auto& row : m) {
        double norm = 0;
        for (double v : row) norm += v * v;
        norm = std::sqrt(norm);
        if (!(norm > 0)) return 0.0;
        for (double& v : row) v /= norm;
    }
    double det = 1.0;
    for (size_t c = 0; c < n; ++c) {
        size_t piv = c;
        for (size_t r = c + 1; r < n; ++r)
            if (std::abs(m[r][c]) > std::abs(m[piv][c])) piv = r;
        if (std::abs(m[piv][c]) < 1e-300) return 0.0;
        if (piv != c) {
            std::swap(m[piv], m[c]);
            det = -det;
        }
        det *= m[c][c];
        for (size_t r = c + 1; r < n; ++r) {
            double fac = m[r][c] / m[c][c];
            for (size_t k = c; k < n; ++k) m[r][k] -= fac * m[c][k];
        }
    }
    return det;
}

}  // namespace

Bracket bracket_minimum(const LineFn& f, double a, double b, int max_expansions) {
    double fa = f(a), fb = f(b);
    if (!std::isfinite(fa) || !std::isfinite(fb))
        throw Error("NonFiniteObjective", "bracket endpoints must be finite");
    if (fb > fa) {
        std::swap(a, b);
        std::swap(fa, fb);
    } else if (fb == fa) {
        // Symmetric start (e.g. even function): try the midpoint first.
        double m = 0.5 * (a + b);
        double fm = f(m);
        if (fm < fb) return {a, m, b, fa, fm, fb};
    }
    double c = b + kGolden * (b - a);
    double fc = f(c);
    for (int it = 0; it < max_expansions; ++it) {
        if (fb < fc) return {a, b, c, fa, fb, fc};
        a = b;
        fa = fb;
        b = c;
        fb = fc;
        c = b + kGolden * (b - a);
        fc = f(c);
        if (!std::isfinite(fc))
            throw Error("NonFiniteObjective", "objective became non-finite while bracketing");
    }
    throw Error("NoBracketFound", "objective appears monotone along the search line");
}

LineMinResult brent_line_min(const LineFn& f, const Bracket& br, double tol,
                             int max_iter) {
    double a = std::min(br.a, br.c), b = std::max(br.a, br.c);
    double x = br.b, w = br.b, v = br.b;
    double fx = br.fb, fw = br.fb, fv = br.fb;
    double d = 0, e = 0;
    long evals = 0;
    for (int iter = 0; iter < max_iter; ++iter) {
        double xm = 0.5 * (a + b);
        double tol1 = tol * std::abs(x) + 1e-15;
        double tol2 = 2.0 * tol1;
        if (std::abs(x - xm) <= tol2 - 0.5 * (b - a)) return {x, fx, evals};
        bool golden = true;
        if (std::abs(e) > tol1) {
            // Trial parabolic fit through x, v, w.
            double r = (x - w) * (fx - fv);
            double q = (x - v) * (fx - fw);
            double p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if (q > 0) p = -p;
            q = std::abs(q);
            double etmp = e;
            e = d;
            if (std::abs(p) < std::abs(0.5 * q * etmp) && p > q * (a - x) &&
                p < q * (b - x)) {
                d = p / q;
                double u = x + d;
                if (u - a < tol2 || b - u < tol2) d = std::copysign(tol1, xm - x);
                golden = false;
            }
        }
        if (golden) {
            e = (x >= xm ? a : b) - x;
            d = kCGold * e;
        }
        double u = std::abs(d) >= tol1 ? x + d : x + std::copysign(tol1, d);
        double fu = f(u);
        ++evals;
        if (fu <= fx) {
            if (u >= x) a = x; else b = x;
            v = w; fv = fw;
            w = x; fw = fx;
            x = u; fx = fu;
        } else {
            if (u < x) a = u; else b = u;
            if (fu <= fw || w == x) {
                v = w; fv = fw;
                w = u; fw = fu;
            } else if (fu <= fv || v == x || v == w) {
                v = u; fv = fu;
            }
        }
    }
    throw Error("MaxIterExceeded", "Brent line minimization failed to converge");
}

void OptimizerOptions::validate() const {
    size_t n = initial.size();
    if (n == 0) throw Error("BadValue", "initial point must be non-empty");
    if (!scale.empty() && scale.size() != n)
        throw Error("BadValue", "scale dimension mismatch");
    for (double s : scale)
        if (!(s > 0)) throw Error("BadValue", "scales must be > 0");
    if (lower.size() != upper.size() || (!lower.empty() && lower.size() != n))
        throw Error("BadValue", "bounds dimension mismatch");
    for (size_t k = 0; k < lower.size(); ++k)
        if (!(lower[k] < upper[k])) throw Error("BadValue", "bounds require lower < upper");
    if (!directions.empty()) {
        if (directions.size() != n) throw Error("BadValue", "direction-set dimension mismatch");
        for (const auto& d : directions)
            if (d.size() != n) throw Error("BadValue", "direction dimension mismatch");
    }
    if (noise_average < 1) throw Error("BadValue", "noise-averaging count m must be >= 1");
    if (max_iterations < 1 || max_evaluations < 1)
        throw Error("BadValue", "budgets must be >= 1");
}

OptimizerResult minimize(const ObjectiveFn& f, const OptimizerOptions& opts) {
    opts.validate();
    const size_t n = opts.initial.size();
    std::vector<double> scale = opts.scale;
    if (scale.empty()) scale.assign(n, 1.0);

    OptimizerResult res;
    res.evaluations = 0;
    bool out_of_budget = false;

    auto clamp = [&](std::vector<double>& x) {
        if (opts.lower.empty()) return;
        for (size_t k = 0; k < n; ++k)
            x[k] = std::clamp(x[k], opts.lower[k], opts.upper[k]);
    };
    auto eval = [&](std::vector<double> x) -> double {
        clamp(x);
        if (res.evaluations + opts.noise_average > opts.max_evaluations) {
            out_of_budget = true;
            throw Error("MaxEvalExceeded", "evaluation budget exhausted");
        }
        double acc = 0;
        for (int k = 0; k < opts.noise_average; ++k) acc += f(x);
        res.evaluations += opts.noise_average;
        double v = acc / opts.noise_average;
        if (!std::isfinite(v))
            throw Error("NonFiniteObjective", "objective returned a non-finite value");
        return v;
    };

    std::vector<std::vector<double>> dirs = opts.directions;
    if (dirs.empty()) {
        dirs.assign(n, std::vector<double>(n, 0.0));
        for (size_t k = 0; k < n; ++k) dirs[k][k] = scale[k];
    }

    std::vector<double> p = opts.initial;
    clamp(p);
    double fp;
    try {
        fp = eval(p);
    } catch (const Error& e) {
        if (std::string(e.code()) == "MaxEvalExceeded")
            throw Error("MaxEvalExceeded", "budget too small for a single evaluation");
        throw;
    }
    res.best_point = p;
    res.best_value = fp;
    res.trace.push_back({0, res.evaluations, fp, p});

    auto line_minimize = [&](std::vector<double>& x, double fx,
                             const std::vector<double>& dir) -> double {
        auto g = [&](double t) {
            std::vector<double> y = x;
            for (size_t k = 0; k < n; ++k) y[k] += t * dir[k];
            return eval(std::move(y));
        };
        // Feasible parameter segment: x + t*dir stays inside the box.
        double t_lo = -std::numeric_limits<double>::infinity();
        double t_hi = std::numeric_limits<double>::infinity();
        if (!opts.lower.empty()) {
            for (size_t k = 0; k < n; ++k) {
                if (dir[k] > 0) {
                    t_hi = std::min(t_hi, (opts.upper[k] - x[k]) / dir[k]);
                    t_lo = std::max(t_lo, (opts.lower[k] - x[k]) / dir[k]);
                } else if (dir[k] < 0) {
                    t_hi = std::min(t_hi, (opts.lower[k] - x[k]) / dir[k]);
                    t_lo = std::max(t_lo, (opts.upper[k] - x[k]) / dir[k]);
                }
            }
        }
        double ta = 0.0, fa = fx;
        double tb = std::min(1.0, t_hi);
        if (tb == 0.0) tb = std::max(-1.0, t_lo);
        if (tb == 0.0) return fx;  // degenerate segment
        double fb = g(tb);
        if (fb > fa) {
            std::swap(ta, tb);
            std::swap(fa, fb);
        }
        double best_t = 0.0, best_f = fx;
        for (int it = 0; it < 60; ++it) {
            double tc = std::clamp(tb + kGolden * (tb - ta), t_lo, t_hi);
            if (tc == tb) {
                // walked into a segment boundary while still descending
                if (fb < fa) { best_t = tb; best_f = fb; }
                break;
            }
            double fc = g(tc);
            if (fb < fc) {
                auto lm = brent_line_min(g, {ta, tb, tc, fa, fb, fc}, opts.line_tol);
                best_t = lm.x;
                best_f = lm.f;
                break;
            }
            ta = tb; fa = fb;
            tb = tc; fb = fc;
            if (it == 59 && fb < best_f) { best_t = tb; best_f = fb; }
        }
        if (best_f < fx) {
            for (size_t k = 0; k < n; ++k) x[k] += best_t * dir[k];
            clamp(x);
            return best_f;
        }
        return fx;
    };

    res.termination = "max_iterations";
    int ftol_streak = 0;  // noisy objectives: demand two consecutive stalls
    try {
        for (int iter = 1; iter <= opts.max_iterations; ++iter) {
            std::vector<double> p0 = p;
            double f0 = fp;
            for (size_t i = 0; i < n; ++i) fp = line_minimize(p, fp, dirs[i]);

            // Original update rule: always adopt the net displacement as a new
            // direction and line-minimize along it. This builds mutually
            // conjugate directions on quadratics (n-iteration termination).
            std::vector<double> disp(n);
            double disp2 = 0;
            for (size_t k = 0; k < n; ++k) {
                disp[k] = p[k] - p0[k];
                disp2 += disp[k] * disp[k];
            }
            if (disp2 > 0) {
                fp = line_minimize(p, fp, disp);
                dirs.erase(dirs.begin());
                dirs.push_back(disp);
                if (std::abs(normalized_determinant(dirs)) < 1e-6) {
                    dirs.assign(n, std::vector<double>(n, 0.0));
                    for (size_t k = 0; k < n; ++k) dirs[k][k] = scale[k];
                }
            }
            // With a stochastic objective the line-search minimum is biased low
            // (min statistics over noisy draws); record a fresh estimate at the
            // iterate so trace values stay comparable and a lucky draw cannot
            // become an unbeatable stale reference.
            if (opts.noise_average > 1) fp = eval(p);
            res.trace.push_back({iter, res.evaluations, fp, p});

            if (2.0 * (f0 - fp) <=
                opts.f_tol * (std::abs(f0) + std::abs(fp)) + 1e-300) {
                if (++ftol_streak >= (opts.noise_average > 1 ? 2 : 1)) {
                    res.termination = "f_tol";
                    break;
                }
            } else {
                ftol_streak = 0;
            }
            double step2 = 0;
            for (size_t k = 0; k < n; ++k) step2 += (p[k] - p0[k]) * (p[k] - p0[k]);
            if (std::sqrt(step2) < opts.x_tol) {
                res.termination = "x_tol";
                break;
            }
        }
    } catch (const Error& e) {
        if (std::string(e.code()) == "MaxEvalExceeded" && out_of_budget) {
            res.termination = "max_evaluations";
            res.budget_exhausted = true;
        } else {
            throw;
        }
    }

    if (fp < res.best_value || res.best_point.empty()) {
        res.best_point = p;
        res.best_value = fp;
    }
    for (const auto& rec : res.trace)
        if (rec.best_value < res.best_value) {
            res.best_value = rec.best_value;
            res.best_point = rec.point;
        }
    return res;
}

void write_trace_csv(std::ostream& out, const OptimizerResult& result) {
    out << "iter,evals,best_value";
    if (!result.trace.empty())
        for (size_t k = 0; k < result.trace.front().point.size(); ++k)
            out << ",x" << k;
    out << '\n';
    for (const auto& rec : result.trace) {
        out << rec.iteration << ',' << rec.evals << ',' << rec.best_value;
        for (double v : rec.point) out << ',' << v;
        out << '\n';
    }
}

}  // namespace resq
