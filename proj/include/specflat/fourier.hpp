// Functions on the Boolean cube {0,1}^T in the even-parity indicator basis.
//
// chi_S(x) = (1 + (-1)^{sum_{i in S} x_i}) / 2 takes values in {0,1}; a sparse
// function is f(x) = c_0 + sum_t c_t chi_{S_t}(x). Positions are 1-indexed.
// Dense tables and Walsh coefficient tables are indexed little-endian: bit
// (i-1) of the index holds x_i.
#pragma once

#include <cstdint>
#include <vector>

#include "specflat/common.hpp"

namespace specflat {

using BitString = std::vector<std::uint8_t>;

struct Component {
    std::vector<int> subset;  ///< sorted, 1-indexed positions
    double coeff = 0.0;
};

struct SparseSpectrum {
    int T = 0;
    double constant = 0.0;
    std::vector<Component> components;

    /// Throws ErrorKind::Input when any structural invariant is violated.
    void validate() const;
    int degree() const;
    int sparsity() const { return static_cast<int>(components.size()); }
};

struct DenseTable {
    int T = 0;
    std::vector<double> values;  ///< size 2^T
};

struct SpectrumStats {
    int degree = 0;
    int sparsity = 0;
    double l2_coeff_norm = 0.0;
    std::vector<double> sorted_sq_coeffs;  ///< descending squared coefficients

    /// Sum of squared coefficients outside the k largest by magnitude.
    double tail_energy_beyond(int k) const;
};

/// Maximum T for dense tables (default 22, overridable via SPECFLAT_FWHT_LIMIT).
int dense_limit();

std::uint64_t subset_mask(const std::vector<int>& subset);
std::vector<int> mask_subset(std::uint64_t mask);
std::uint64_t bits_to_index(const BitString& x);
BitString index_to_bits(std::uint64_t index, int T);

int chi_indicator(const std::vector<int>& subset, const BitString& x);
double eval_sparse(const SparseSpectrum& f, const BitString& x);

/// Precomputed masks for fast evaluation at a packed input (T <= 64).
class CompiledSpectrum {
public:
    explicit CompiledSpectrum(const SparseSpectrum& f);
    double operator()(std::uint64_t x) const;
    int T() const { return T_; }

private:
    int T_;
    double constant_;
    std::vector<std::uint64_t> masks_;
    std::vector<double> coeffs_;
};

/// Exhaustive table of f (requires T <= dense_limit()).
DenseTable tabulate(const SparseSpectrum& f);

/// Unnormalized in-place Walsh-Hadamard butterfly; applying it twice scales by 2^T.
void fwht_inplace(std::vector<double>& v);

/// Analysis direction: coefficients w_S with f(x) = sum_S w_S (-1)^{x.S}.
std::vector<double> walsh_transform(const DenseTable& table);
/// Synthesis direction: table from Walsh coefficients.
DenseTable inverse_walsh(const std::vector<double>& coeffs, int T);

/// Walsh coefficients of a sparse chi-basis function (dense, T <= dense_limit()).
std::vector<double> from_chi_basis(const SparseSpectrum& f);
/// Chi-basis spectrum from Walsh coefficients; entries with |w| <= tol are dropped.
SparseSpectrum to_chi_basis(const std::vector<double>& coeffs, int T, double tol = 0.0);

/// Constant-degree random spectrum: the first omega subsets of a seeded random
/// permutation of all size-degree subsets, coefficients |N(0,1)| (or signed
/// N(0,1) when positive is false) normalized to unit 2-norm.
SparseSpectrum sample_random_function(int T, int degree, int omega, std::uint64_t seed, bool positive = true);

SpectrumStats spectrum_stats(const SparseSpectrum& f);

/// Binomial coefficient as a double (exact for the sizes used here).
double binomial(int n, int k);

}  // namespace specflat
