#include "specflat/property_testing.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

namespace specflat {

FunctionOracle::FunctionOracle(int T, std::function<double(std::uint64_t)> f) : T_(T), f_(std::move(f)) {
    if (T < 1 || T > 64) fail(ErrorKind::Input, "oracle dimension must lie in [1, 64]");
}

FunctionOracle FunctionOracle::from_spectrum(const SparseSpectrum& f) {
    f.validate();
    CompiledSpectrum c(f);
    return FunctionOracle(f.T, [c](std::uint64_t x) { return c(x); });
}

double FunctionOracle::query(const BitString& x) {
    if (static_cast<int>(x.size()) != T_) fail(ErrorKind::Input, "query length does not match the oracle dimension");
    return query_index(bits_to_index(x));
}

double FunctionOracle::query_index(std::uint64_t x) {
    ++count_;
    return f_(x);
}

std::string to_string(TestKind k) { return k == TestKind::Degree ? "degree" : "sparsity"; }

namespace {

void check_eps_delta(double eps, double delta) {
    if (!(eps > 0.0 && eps <= 1.0)) fail(ErrorKind::Input, "eps must lie in (0, 1]");
    if (!(delta > 0.0 && delta < 1.0)) fail(ErrorKind::Input, "delta must lie in (0, 1)");
}

// Uniform random packed point of {0,1}^T.
std::uint64_t random_point(int T, Rng& rng) {
    const std::uint64_t r = rng();
    return T == 64 ? r : (r & ((std::uint64_t{1} << T) - 1));
}

// Uniform random size-k subset of {0, ..., T-1} (bit positions), by partial Fisher-Yates.
std::vector<int> random_coordinates(int T, int k, Rng& rng) {
    std::vector<int> idx(static_cast<std::size_t>(T));
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < k; ++i) {
        std::uniform_int_distribution<int> pick(i, T - 1);
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
    }
    idx.resize(static_cast<std::size_t>(k));
    return idx;
}

}  // namespace

int degree_test_trials(double eps, double delta) {
    check_eps_delta(eps, delta);
    return static_cast<int>(std::ceil(2.0 / eps * std::log(1.0 / delta)));
}

int sparsity_test_trials(double delta) {
    check_eps_delta(1.0, delta);
    return static_cast<int>(std::ceil(2.0 * std::log(1.0 / delta)));
}

bool low_degree_trial(FunctionOracle& oracle, int d, Rng& rng) {
    const int T = oracle.T();
    if (d < 0 || d >= T) fail(ErrorKind::Input, "tested degree must satisfy 0 <= d < T");
    const std::uint64_t x = random_point(T, rng);
    const std::vector<int> A = random_coordinates(T, d + 1, rng);
    const std::uint64_t n = std::uint64_t{1} << (d + 1);
    double sum = 0.0;
    for (std::uint64_t z = 0; z < n; ++z) {
        std::uint64_t flip = 0;
        for (int j = 0; j <= d; ++j)
            if ((z >> j) & 1U) flip |= std::uint64_t{1} << A[static_cast<std::size_t>(j)];
        const double v = oracle.query_index(x ^ flip);
        sum += (std::popcount(z) & 1) ? -v : v;
    }
    return std::abs(sum) <= 1e-9;
}

TestVerdict low_degree_test(FunctionOracle& oracle, int d, double eps, double delta, std::uint64_t seed) {
    TestVerdict v;
    v.trials = degree_test_trials(eps, delta);
    v.eps = eps;
    v.delta = delta;
    v.level = d;
    const std::uint64_t before = oracle.queries();
    Rng rng(seed);
    v.accept = true;
    for (int t = 0; t < v.trials; ++t) {
        ++v.trials_run;
        if (!low_degree_trial(oracle, d, rng)) {
            v.accept = false;
            break;
        }
    }
    v.queries_used = oracle.queries() - before;
    return v;
}

double sparsity_trial_tail(FunctionOracle& oracle, int omega, int k, Rng& rng) {
    const int T = oracle.T();
    if (k < 1 || k > T) fail(ErrorKind::Input, "restriction size must satisfy 1 <= k <= T");
    if (k > dense_limit()) fail(ErrorKind::Resource, "restriction size exceeds the dense transform limit");
    if (omega < 0) fail(ErrorKind::Input, "tested sparsity must be nonnegative");
    const std::vector<int> K = random_coordinates(T, k, rng);
    std::uint64_t kmask = 0;
    for (int b : K) kmask |= std::uint64_t{1} << b;
    const std::uint64_t base = random_point(T, rng) & ~kmask;
    const std::size_t n = std::size_t{1} << k;
    std::vector<double> table(n);
    for (std::size_t y = 0; y < n; ++y) {
        std::uint64_t x = base;
        for (int j = 0; j < k; ++j)
            if ((y >> j) & 1U) x |= std::uint64_t{1} << K[static_cast<std::size_t>(j)];
        table[y] = oracle.query_index(x);
    }
    fwht_inplace(table);
    std::vector<double> sq;
    sq.reserve(n - 1);
    for (std::size_t s = 1; s < n; ++s) {
        const double w = table[s] / static_cast<double>(n);
        sq.push_back(w * w);
    }
    const std::size_t keep = std::min(sq.size(), static_cast<std::size_t>(omega));
    std::nth_element(sq.begin(), sq.begin() + static_cast<std::ptrdiff_t>(keep), sq.end(), std::greater<>());
    double tail = 0.0;
    for (std::size_t i = keep; i < sq.size(); ++i) tail += sq[i];
    return tail;
}

TestVerdict sparsity_test(FunctionOracle& oracle, int omega, double eps, double delta, int k, std::uint64_t seed) {
    check_eps_delta(eps, delta);
    TestVerdict v;
    v.trials = sparsity_test_trials(delta);
    v.eps = eps;
    v.delta = delta;
    v.level = omega;
    v.k = k;
    const std::uint64_t before = oracle.queries();
    Rng rng(seed);
    v.accept = true;
    for (int t = 0; t < v.trials; ++t) {
        ++v.trials_run;
        if (sparsity_trial_tail(oracle, omega, k, rng) > eps / 2.0) {
            v.accept = false;
            break;
        }
    }
    v.queries_used = oracle.queries() - before;
    return v;
}

SweepResult first_accept_sweep(FunctionOracle& oracle, int max_level, double eps, double delta, TestKind kind,
                               std::uint64_t seed, int k) {
    if (max_level < 1) fail(ErrorKind::Input, "max_level must be at least 1");
    SweepResult r;
    const std::uint64_t before = oracle.queries();
    for (int level = 1; level <= max_level; ++level) {
        const std::uint64_t s = derive_seed(seed, {static_cast<std::uint64_t>(level)});
        TestVerdict v;
        if (kind == TestKind::Degree) {
            if (level >= oracle.T()) {
                v.accept = true;
                v.level = level;
                v.eps = eps;
                v.delta = delta;
            } else {
                v = low_degree_test(oracle, level, eps, delta, s);
            }
        } else {
            v = sparsity_test(oracle, level, eps, delta, std::min(k, oracle.T()), s);
        }
        r.verdicts.push_back(v);
        if (v.accept) {
            r.level = level;
            break;
        }
    }
    r.queries = oracle.queries() - before;
    return r;
}

}  // namespace specflat
