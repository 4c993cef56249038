// Empirical worst-case sharpness perturbation P_emp(sigma; omega, degree, T),
// measured on exact constructions of random sparse functions.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "specflat/bounds.hpp"
#include "specflat/derivatives.hpp"

namespace specflat {

struct PerturbationStudyConfig {
    std::vector<double> sigma_mesh = default_sigma_mesh();
    std::vector<int> omega_list = {1, 7, 14, 20};
    std::vector<int> degree_list = {1, 2, 3, 4, 5};
    std::vector<int> t_list = {20, 30, 40, 50, 60};
    int n_functions = 10;
    int n_draws = 1;              ///< draws per function and sigma; aggregated by max
    double percentile = 90.0;     ///< in (0, 100]
    std::size_t dataset_size = 32;  ///< sampled inputs per function
    std::uint64_t master_seed = 0;
    FdSteps steps{};

    void validate() const;
};

struct PEmpRow {
    double sigma = 0.0;
    int omega = 0, degree = 0, t = 0;
    double p90 = 0.0;   ///< configured percentile across functions
    double pmax = 0.0;  ///< maximum across functions
    int n = 0;          ///< number of functions aggregated
};

struct PEmpTable {
    std::vector<PEmpRow> rows;
    std::vector<std::string> skipped;  ///< one message per skipped cell

    /// Conservative lookup: the value at the smallest mesh sigma >= query.
    /// `use_max` selects pmax instead of the percentile column.
    double lookup(double sigma, int omega, int degree, int t, bool use_max = false) const;
    /// Adapter for the semi-analytic bound.
    PEmpProvider provider(bool use_max = false) const;
};

/// Linear-interpolation percentile (q in (0, 100]) of a nonempty sample.
double percentile(std::vector<double> values, double q);

/// Per cell and function: build the exact construction, measure the dataset
/// Hessian trace before and after one isotropic Gaussian perturbation per
/// sigma (the same direction reused across sigma), and clamp the increase at
/// zero. Deterministic in the config, independent of the thread count.
PEmpTable run_study(const PerturbationStudyConfig& cfg);

void write_pemp_csv(const PEmpTable& table, std::ostream& out);
PEmpTable read_pemp_csv(std::istream& in);

}  // namespace specflat
