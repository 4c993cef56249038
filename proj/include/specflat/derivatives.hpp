// Gradients, Hessian traces and perturbed losses of the construction's
// pointwise quadratic loss L(x) = (T(x; Theta) - f(x))^2.
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "specflat/construction.hpp"

namespace specflat {

struct Dataset {
    std::vector<BitString> xs;
    std::vector<double> ys;
    std::size_t size() const { return xs.size(); }
};

/// Exhaustive inputs when sample_size == 0 (T <= 20), otherwise a seeded
/// sample with replacement; targets are f evaluated exactly.
Dataset make_dataset(const SparseSpectrum& f, std::size_t sample_size, std::uint64_t seed);

/// Cached forward pass at fixed (Theta, x) that evaluates the output after a
/// single-coordinate perturbation theta_k += delta without a full recompute.
class ProbeEngine {
public:
    ProbeEngine(const ConstructionParams& p, const BitString& x);
    ProbeEngine(const ConstructionParams& p, const Matrix& X, const Matrix& Xpos, const AttentionMasks& masks);

    double output() const { return tr_.output; }
    const ActivationTrace& trace() const { return tr_; }
    const AttentionMasks& masks() const { return masks_; }

    /// Output at Theta + delta * e_k.
    double output_with(std::size_t k, double delta);

    /// Exact gradient of the output by reverse-mode differentiation.
    Vector backprop() const;

private:
    void init();
    double finish_rows(const std::vector<int>& rows);
    double finish_column(int k, const Vector& dh);
    double finish_softmax(const Vector& logits, const Vector& values) const;

    const ConstructionParams& p_;
    AttentionMasks masks_;
    ActivationTrace tr_;
    std::vector<std::size_t> off_;
    int n_ = 0, hp_ = 0, K_ = 0, last_ = 0;
    Vector FU_, FV_;
    std::vector<std::vector<int>> x_col_rows_;  ///< rows r with X(r, a) != 0, per column a
    std::vector<char> x_col_nonzero_;
    std::vector<char> m_row_nonzero_;
    Matrix dH_;       ///< scratch, kept zero between calls
    Vector logits_, values_, rowbuf_, arow_;
};

double loss(const ConstructionParams& p, const BitString& x, double y);
double dataset_loss(const ConstructionParams& p, const Dataset& data);

/// Default finite-difference steps.
struct FdSteps {
    double grad_rel = 1e-5;     ///< gradient step h = max(grad_rel, grad_rel * |theta|)
    double second_rel = 1e-3;   ///< second-difference step h = second_rel * max(1, |theta|)
};

/// Central-difference gradient of the transformer output.
Vector fd_gradient(const ConstructionParams& p, const BitString& x, const FdSteps& steps = {});

struct AnalyticGradient {
    Vector grad;            ///< gradient of the output, flat parameter order
    bool off_grid = false;  ///< some read-out MLP pre-activation sits within 1e-9 of a kink
};
AnalyticGradient analytic_gradient(const ConstructionParams& p, const BitString& x);

/// Squared 2-norm of each parameter block of a flat vector.
std::map<std::string, double> block_norms_sq(const ConstructionParams& p, const Vector& v);

struct BlockComparison {
    double analytic_norm = 0.0;
    double fd_norm = 0.0;
    double rel_err = 0.0;  ///< ||analytic - fd|| / ||analytic||; 0 for zero blocks
    bool zero = false;     ///< analytic block is zero up to roundoff (<= 1e-12 of the full gradient norm)
};
struct GradientComparison {
    std::map<std::string, BlockComparison> blocks;
    double max_rel_err = 0.0;          ///< over nonzero blocks
    double max_zero_block_fd = 0.0;    ///< largest finite-difference norm of a zero block
    bool off_grid = false;
};
/// Analytic gradient against central differences, block by block.
GradientComparison compare_gradients(const ConstructionParams& p, const BitString& x, const FdSteps& steps = {});

struct PointSharpness {
    double output = 0.0;
    double target = 0.0;
    double grad_norm_sq = 0.0;  ///< finite-difference ||grad T||^2
    double trace = 0.0;         ///< finite-difference trace of the loss Hessian
};
PointSharpness point_sharpness(const ConstructionParams& p, const BitString& x, double y, const FdSteps& steps = {});

struct SharpnessSummary {
    double mean_trace = 0.0;
    double mean_grad_norm_sq = 0.0;
    double max_trace = 0.0;
    double max_grad_norm_sq = 0.0;
    double max_identity_gap = 0.0;   ///< max_x |trace(x) - 2 ||grad T(x)||^2|
    double max_loss = 0.0;
    std::vector<PointSharpness> points;
};
SharpnessSummary dataset_sharpness(const ConstructionParams& p, const Dataset& data, const FdSteps& steps = {},
                                   bool with_gradient = true);

/// Finite-difference tolerance for trace(x) = 2 ||grad T(x)||^2 at an exact
/// interpolator: 1e-6 absolute plus 1e-5 relative to the trace.
double identity_tolerance(double trace);
/// True when every point of the summary satisfies the identity within tolerance.
bool identity_holds(const SharpnessSummary& s);

/// Dataset-mean trace of the loss Hessian by second differences.
double fd_hessian_trace(const ConstructionParams& p, const Dataset& data, const FdSteps& steps = {});

struct Estimate {
    double mean = 0.0;
    double stderr_ = 0.0;
};

/// Sample mean and its standard error.
Estimate mean_stderr(const std::vector<double>& v);

/// Trace of the Hessian of an arbitrary objective by central second differences
/// (step second_rel * max(1, |theta_k|)).
double fd_trace(const std::function<double(const Vector&)>& L, const Vector& theta, const FdSteps& steps = {});

/// Hutchinson estimate of the Hessian trace of an objective given its
/// gradient: mean of v^T H v over Rademacher probes, Hv by central differences.
Estimate hutchinson(const std::function<Vector(const Vector&)>& grad, const Vector& theta, int probes,
                    std::uint64_t seed, double eps = 1e-4);

/// Hutchinson estimate of the dataset-mean Hessian trace with Rademacher
/// probes; Hv is a central difference of the analytic loss gradient.
Estimate hutchinson_trace(const ConstructionParams& p, const Dataset& data, int probes, std::uint64_t seed,
                          double eps = 1e-4);

/// Monte-Carlo mean of the dataset loss at Theta + eps, eps ~ N(0, sigma^2 I).
Estimate mc_perturbed_loss(const ConstructionParams& p, const Dataset& data, double sigma, int draws,
                           std::uint64_t seed);

/// Draws Theta + eps (redrawing when a pre-activation lands within 1e-9 of a
/// ReLU kink on the dataset); returns the perturbed parameters.
ConstructionParams perturb_params(const ConstructionParams& p, const Dataset& data, double sigma, std::uint64_t seed);

/// Finite-difference Hessian trace at a single isotropic Gaussian perturbation.
double perturbed_fd_trace(const ConstructionParams& p, const Dataset& data, double sigma, std::uint64_t seed,
                          const FdSteps& steps = {});

}  // namespace specflat
