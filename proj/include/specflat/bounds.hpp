// Closed-form gradient, norm, Hessian and perturbation bounds for the
// construction, the assembled PAC-Bayes generalization bound, a norm-based
// covering-number comparison, and sub-Gaussian constant fitting.
// All logarithms are natural.
#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "specflat/common.hpp"

namespace specflat {

/// Squared gradient-norm bound, uniform in the input.
double g_u(double omega, double degree);
/// Squared Frobenius-norm bound of all parameters.
double l_norm(double omega, double degree, double T);
/// Operator-norm bound of the output Hessian (six-term sum).
double h_u(double omega, double degree, double d);
/// Output perturbation bound (full three-term sum).
double t_p(double sigma, double omega, double degree, double T, double d);
/// Gradient perturbation bound (nine printed terms).
double g_p(double sigma, double omega, double degree, double T, double d);
/// Hessian perturbation bound (seven printed terms).
double h_p(double sigma, double omega, double degree, double T, double d);
/// P = 2 sqrt(G_u) G_p + G_p^2 + 2 T_p |Theta| (H_u + H_p).
double p_analytic(double sigma, double omega, double degree, double T, double d, double theta_count);
/// Chi tail factor R(delta, d).
double r_factor(double delta, double d);
/// No-neuron-flip condition sigma <= 1 / (16 d D_f).
bool no_flip(double sigma, double d, double degree);

/// Trainable parameter count of the one-hot construction with width d+1.
double construction_param_count(double d, double degree);

struct BoundInputs {
    double omega = 10, degree = 2, T = 20;
    double d = 0;            ///< 0 selects T+1
    double m = 1e6;
    double Sigma = 0.01;
    double delta = 0.05;
    double sigma = 2.27e-3;
    double theta_count = 0;  ///< 0 selects construction_param_count(d, degree)

    double width() const { return d > 0 ? d : T + 1; }
    double params() const { return theta_count > 0 ? theta_count : construction_param_count(width(), degree); }
};

enum class BoundVariant { Truncated, SemiAnalytic, FullyAnalytic };
std::string to_string(BoundVariant v);
BoundVariant parse_variant(const std::string& s);

/// Sharpness coefficient: Half gives sigma^2 (G_u + P/2), Full gives sigma^2 (2 G_u + P).
enum class SharpnessCoefficient { Half, Full };

/// Empirical perturbation provider: P_emp(sigma, omega, degree, T).
using PEmpProvider = std::function<double(double, int, int, int)>;

struct BoundBreakdown {
    double sigma = 0.0;
    double sharpness_term = 0.0;
    double norm_term = 0.0;
    double total = 0.0;
    bool no_flip_ok = true;
    std::map<std::string, double> components;
};

BoundBreakdown pac_bayes_gap(const BoundInputs& in, BoundVariant variant, const PEmpProvider& p_emp = {},
                             SharpnessCoefficient coef = SharpnessCoefficient::Half);

/// Closed-form optimum of the truncated bound, ignoring ln(1/delta).
double sigma_star_truncated(double omega, double degree, double T, double m, double Sigma);

/// The default sigma mesh: 20 evenly spaced values from 1e-5 to 1e-2.
std::vector<double> default_sigma_mesh();

enum class OptimizeMethod { Mesh, Continuous };
OptimizeMethod parse_optimize(const std::string& s);

BoundBreakdown optimize_sigma(const BoundInputs& in, BoundVariant variant, OptimizeMethod method,
                              const std::vector<double>& mesh = default_sigma_mesh(), const PEmpProvider& p_emp = {},
                              SharpnessCoefficient coef = SharpnessCoefficient::Half);

/// Smallest m (to relative precision 1e-6) at which the sigma-optimized total drops below `target`.
double min_nonvacuous_m(const BoundInputs& in, BoundVariant variant, double target = 1.0,
                        const PEmpProvider& p_emp = {}, double m_lo = 1.0, double m_hi = 1e15);

/// Sum of the per-matrix (2,1)-norm bounds of the construction.
double edelman_c21(double omega, double degree, double T, double d);
/// C21 * sqrt(ln(d m T) / m).
double edelman_gap(double omega, double degree, double T, double d, double m);

/// Derivative-free 1-D minimization: dense bracketing on [lo, hi] followed by golden-section refinement.
struct ScalarMinimum {
    double x = 0.0;
    double fx = 0.0;
};
ScalarMinimum minimize_bracketed(const std::function<double(double)>& f, double lo, double hi, int coarse = 200,
                                 double tol = 1e-12);
/// Golden-section search on [a, b] assuming a unimodal objective.
ScalarMinimum golden_section(const std::function<double(double)>& f, double a, double b, double tol = 1e-12);

struct SubgaussianOptions {
    double grid_start = 1e-6;   ///< smallest candidate Sigma
    double grid_ratio = 1.01;   ///< geometric step between candidates
    int max_steps = 5000;
};
/// Symmetric t-grid scaled to the sample spread: +-(k/n_pos) * t_max / s_hat.
std::vector<double> default_t_grid(const std::vector<double>& losses, int n_pos = 40, double t_max = 3.0);
/// Smallest Sigma on a geometric grid whose Gaussian MGF dominates the
/// empirical MGF of the centered losses at every t in the grid.
double subgaussian_sigma(const std::vector<double>& losses, const std::vector<double>& t_grid,
                         const SubgaussianOptions& opt = {});

}  // namespace specflat
