#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "resq/errors.hpp"

namespace resq {

using ObjectiveFn = std::function<double(const std::vector<double>&)>;
using LineFn = std::function<double(double)>;

struct Bracket {
    double a, b, c;    // f(b) < f(a), f(b) < f(c)
    double fa, fb, fc;
};

// Golden-ratio expansion bracketing starting from (a, b).
Bracket bracket_minimum(const LineFn& f, double a, double b,
                        int max_expansions = 60);

struct LineMinResult {
    double x, f;
    long evals = 0;
};

// Brent's method (parabolic interpolation with golden-section fallback).
LineMinResult brent_line_min(const LineFn& f, const Bracket& br, double tol,
                             int max_iter = 200);

struct OptimizerOptions {
    std::vector<double> initial;
    std::vector<std::vector<double>> directions;  // empty -> coordinate axes
    std::vector<double> scale;                    // per-coordinate step scale
    std::vector<double> lower, upper;             // empty -> unbounded
    int max_iterations = 200;
    long max_evaluations = 100000;
    double f_tol = 1e-10;
    double x_tol = 1e-10;
    double line_tol = 1e-10;
    int noise_average = 1;  // m draws averaged per evaluation

    void validate() const;
};

struct IterationRecord {
    int iteration;
    long evals;
    double best_value;
    std::vector<double> point;
};

struct OptimizerResult {
    std::vector<double> best_point;
    double best_value = 0;
    long evaluations = 0;
    std::vector<IterationRecord> trace;
    std::string termination;  // "f_tol" | "x_tol" | "max_iterations" | "max_evaluations"
    bool budget_exhausted = false;
};

// Powell's direction-set method with bound clamping and noise averaging.
OptimizerResult minimize(const ObjectiveFn& f, const OptimizerOptions& opts);

void write_trace_csv(std::ostream& out, const OptimizerResult& result);

}  // namespace resq
