// Black-box testers that upper-bound the degree and the sparsity of a
// real-valued function on {0,1}^T from a small number of queries.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "specflat/fourier.hpp"

namespace specflat {

/// Query access to f: {0,1}^T -> R with an exact query counter.
class FunctionOracle {
public:
    /// `f` takes a packed input (bit i-1 holds x_i); requires T <= 64.
    FunctionOracle(int T, std::function<double(std::uint64_t)> f);
    static FunctionOracle from_spectrum(const SparseSpectrum& f);

    int T() const { return T_; }
    double query(const BitString& x);
    double query_index(std::uint64_t x);
    std::uint64_t queries() const { return count_; }

private:
    int T_;
    std::function<double(std::uint64_t)> f_;
    std::uint64_t count_ = 0;
};

enum class TestKind { Degree, Sparsity };
std::string to_string(TestKind k);

struct TestVerdict {
    bool accept = false;
    std::uint64_t queries_used = 0;
    int trials = 0;      ///< trials prescribed by (eps, delta)
    int trials_run = 0;  ///< trials executed (stops at the first rejection)
    double eps = 0.0, delta = 0.0;
    int level = 0;       ///< tested degree or sparsity
    int k = 0;           ///< restriction size (sparsity test only)
};

/// ceil((2/eps) ln(1/delta)).
int degree_test_trials(double eps, double delta);
/// ceil(2 ln(1/delta)).
int sparsity_test_trials(double delta);

/// One trial: a random point x and a random coordinate set A with |A| = d+1;
/// true iff the (d+1)-fold discrete derivative of f along A at x is zero
/// (|.| <= 1e-9). Uses 2^{d+1} queries.
bool low_degree_trial(FunctionOracle& oracle, int d, Rng& rng);
TestVerdict low_degree_test(FunctionOracle& oracle, int d, double eps, double delta, std::uint64_t seed);

/// One trial: restrict f to a random k-subset of coordinates under random
/// fixings of the rest, Walsh-transform the 2^k table, and return the energy
/// outside the omega largest non-constant coefficients. Uses 2^k queries.
double sparsity_trial_tail(FunctionOracle& oracle, int omega, int k, Rng& rng);
TestVerdict sparsity_test(FunctionOracle& oracle, int omega, double eps, double delta, int k, std::uint64_t seed);

struct SweepResult {
    std::optional<int> level;  ///< smallest accepted level
    std::uint64_t queries = 0;
    std::vector<TestVerdict> verdicts;
};

/// Tests levels 1, 2, ..., max_level in turn and stops at the first
/// acceptance. Degree levels >= T are accepted without queries.
SweepResult first_accept_sweep(FunctionOracle& oracle, int max_level, double eps, double delta, TestKind kind,
                               std::uint64_t seed, int k = 12);

}  // namespace specflat
