// Chain-of-thought versus one-pass error bounds for the T-bit Parity task,
// and a simulation of the executable chain-of-thought construction.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "specflat/bounds.hpp"

namespace specflat {

struct CotBoundInputs {
    double T = 8;
    double m = 8192;
    double Sigma = 0.01;
    double sigma = 1e-4;
    BoundVariant variant = BoundVariant::Truncated;
    PEmpProvider p_emp{};  ///< required for SemiAnalytic
};

/// Perturbation term P(sigma, 1, degree, T) under the chosen variant
/// (width d = T + 1 and the construction's parameter count).
double cot_p(const CotBoundInputs& in, double degree);

/// Natural logarithms of the two bounds (the linear values overflow easily).
double log_b_cot(const CotBoundInputs& in);
double log_b_op(const CotBoundInputs& in);
/// Linear values; may be +inf.
double b_cot(const CotBoundInputs& in);
double b_op(const CotBoundInputs& in);

struct SeparationRow {
    double T = 0, m = 0, Sigma = 0, sigma = 0;
    double log_b_cot = 0, log_b_op = 0;
    double lhs = 0;  ///< log of the one-pass core B_OP / 4
    double rhs = 0;  ///< T log(B_CoT / 4T) + (m / 8 Sigma^2)(T - 1)
    bool holds = false;
    bool premise_gu = false;  ///< 2 G_u(1, T) >= T * 2 G_u(1, 2)
    bool premise_l = false;   ///< L(1, T, T) >= T * L(1, 2, T)
    bool no_flip_ok = true;   ///< sigma satisfies the no-flip condition at degree T
};

struct SeparationReport {
    std::vector<SeparationRow> rows;
    std::vector<std::string> violations;  ///< one message per failing tuple
    bool all_hold() const { return violations.empty(); }
};

/// Checks the core inequality B_OP/4 >= (B_CoT/4T)^T e^{(m/8 Sigma^2)(T-1)}
/// in log space at each T of `t_list` (all other inputs from `base`).
SeparationReport verify_separation(const CotBoundInputs& base, const std::vector<int>& t_list);

struct CotSimulation {
    int T = 0;
    int trials = 0;
    int errors = 0;
    double error_rate = 0.0;
    double stderr_ = 0.0;
    double flip_prob = 0.0;    ///< per-step Pr[|noise| >= 0.5]
    double union_bound = 0.0;  ///< min(1, T * flip_prob)
};

/// Runs the idealized chain-of-thought construction on `trials` uniformly
/// random inputs, adding N(0, noise_std^2) to every step's output before
/// rounding, and counts wrong final parities.
CotSimulation cot_error_simulation(int T, int trials, double noise_std, std::uint64_t seed);

}  // namespace specflat
