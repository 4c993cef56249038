#include "specflat/fourier.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <set>
#include <string>
#include <unordered_map>

namespace specflat {

void SparseSpectrum::validate() const {
    if (T < 1) fail(ErrorKind::Input, "context length T must be positive, got " + std::to_string(T));
    if (!std::isfinite(constant)) fail(ErrorKind::Input, "constant term is not finite");
    std::set<std::vector<int>> seen;
    for (const auto& c : components) {
        if (c.subset.empty()) fail(ErrorKind::Input, "component subsets must be nonempty");
        for (std::size_t i = 0; i < c.subset.size(); ++i) {
            if (c.subset[i] < 1 || c.subset[i] > T)
                fail(ErrorKind::Input, "subset position " + std::to_string(c.subset[i]) + " outside [1, T]");
            if (i > 0 && c.subset[i] <= c.subset[i - 1])
                fail(ErrorKind::Input, "subset positions must be strictly ascending");
        }
        if (!std::isfinite(c.coeff) || c.coeff == 0.0)
            fail(ErrorKind::Input, "component coefficients must be finite and nonzero");
        if (!seen.insert(c.subset).second) fail(ErrorKind::Input, "duplicate component subset");
    }
}

int SparseSpectrum::degree() const {
    int d = 0;
    for (const auto& c : components) d = std::max(d, static_cast<int>(c.subset.size()));
    return d;
}

double SpectrumStats::tail_energy_beyond(int k) const {
    double s = 0.0;
    for (std::size_t i = static_cast<std::size_t>(std::max(k, 0)); i < sorted_sq_coeffs.size(); ++i)
        s += sorted_sq_coeffs[i];
    return s;
}

int dense_limit() {
    if (const char* env = std::getenv("SPECFLAT_FWHT_LIMIT")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v >= 1 && v <= 40) return static_cast<int>(v);
    }
    return 22;
}

std::uint64_t subset_mask(const std::vector<int>& subset) {
    std::uint64_t m = 0;
    for (int i : subset) {
        if (i < 1 || i > 64) fail(ErrorKind::Resource, "packed masks need positions in [1, 64]");
        m |= std::uint64_t{1} << (i - 1);
    }
    return m;
}

std::vector<int> mask_subset(std::uint64_t mask) {
    std::vector<int> s;
    for (int i = 0; mask != 0; ++i, mask >>= 1)
        if (mask & 1u) s.push_back(i + 1);
    return s;
}

std::uint64_t bits_to_index(const BitString& x) {
    if (x.size() > 64) fail(ErrorKind::Input, "bit string longer than 64");
    std::uint64_t idx = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i]) idx |= std::uint64_t{1} << i;
    return idx;
}

BitString index_to_bits(std::uint64_t index, int T) {
    BitString x(static_cast<std::size_t>(T));
    for (int i = 0; i < T; ++i) x[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>((index >> i) & 1u);
    return x;
}

int chi_indicator(const std::vector<int>& subset, const BitString& x) {
    int parity = 0;
    for (int i : subset) {
        if (i < 1 || static_cast<std::size_t>(i) > x.size())
            fail(ErrorKind::Input, "position " + std::to_string(i) + " outside the bit string");
        parity ^= (x[static_cast<std::size_t>(i - 1)] & 1);
    }
    return parity == 0 ? 1 : 0;
}

double eval_sparse(const SparseSpectrum& f, const BitString& x) {
    if (static_cast<int>(x.size()) != f.T)
        fail(ErrorKind::Input, "bit string length " + std::to_string(x.size()) + " != T=" + std::to_string(f.T));
    double s = f.constant;
    for (const auto& c : f.components) s += c.coeff * chi_indicator(c.subset, x);
    return s;
}

CompiledSpectrum::CompiledSpectrum(const SparseSpectrum& f) : T_(f.T), constant_(f.constant) {
    if (f.T > 64) fail(ErrorKind::Resource, "packed evaluation needs T <= 64");
    for (const auto& c : f.components) {
        masks_.push_back(subset_mask(c.subset));
        coeffs_.push_back(c.coeff);
    }
}

double CompiledSpectrum::operator()(std::uint64_t x) const {
    double s = constant_;
    for (std::size_t t = 0; t < masks_.size(); ++t)
        if ((std::popcount(masks_[t] & x) & 1) == 0) s += coeffs_[t];
    return s;
}

namespace {
void check_dense(int T) {
    if (T < 0) fail(ErrorKind::Input, "negative T");
    if (T > dense_limit())
        fail(ErrorKind::Resource, "T=" + std::to_string(T) + " exceeds the dense-table limit " +
                                      std::to_string(dense_limit()));
}
}  // namespace

DenseTable tabulate(const SparseSpectrum& f) {
    check_dense(f.T);
    CompiledSpectrum cf(f);
    DenseTable t{f.T, std::vector<double>(std::size_t{1} << f.T)};
    for (std::size_t i = 0; i < t.values.size(); ++i) t.values[i] = cf(i);
    return t;
}

void fwht_inplace(std::vector<double>& v) {
    const std::size_t n = v.size();
    if (n == 0 || (n & (n - 1)) != 0) fail(ErrorKind::Input, "Walsh transform length must be a power of two");
    for (std::size_t len = 1; len < n; len <<= 1)
        for (std::size_t i = 0; i < n; i += len << 1)
            for (std::size_t j = i; j < i + len; ++j) {
                const double a = v[j], b = v[j + len];
                v[j] = a + b;
                v[j + len] = a - b;
            }
}

std::vector<double> walsh_transform(const DenseTable& table) {
    check_dense(table.T);
    if (table.values.size() != (std::size_t{1} << table.T)) fail(ErrorKind::Input, "dense table has wrong length");
    std::vector<double> w = table.values;
    fwht_inplace(w);
    const double scale = std::ldexp(1.0, -table.T);
    for (double& x : w) x *= scale;
    return w;
}

DenseTable inverse_walsh(const std::vector<double>& coeffs, int T) {
    check_dense(T);
    if (coeffs.size() != (std::size_t{1} << T)) fail(ErrorKind::Input, "coefficient table has wrong length");
    DenseTable t{T, coeffs};
    fwht_inplace(t.values);
    return t;
}

std::vector<double> from_chi_basis(const SparseSpectrum& f) {
    check_dense(f.T);
    std::vector<double> w(std::size_t{1} << f.T, 0.0);
    double half_sum = 0.0;
    for (const auto& c : f.components) {
        w[subset_mask(c.subset)] += 0.5 * c.coeff;
        half_sum += 0.5 * c.coeff;
    }
    w[0] += f.constant + half_sum;
    return w;
}

SparseSpectrum to_chi_basis(const std::vector<double>& coeffs, int T, double tol) {
    check_dense(T);
    if (coeffs.size() != (std::size_t{1} << T)) fail(ErrorKind::Input, "coefficient table has wrong length");
    SparseSpectrum f;
    f.T = T;
    double constant = coeffs[0];
    for (std::size_t s = 1; s < coeffs.size(); ++s) {
        if (std::abs(coeffs[s]) <= tol) continue;
        f.components.push_back({mask_subset(s), 2.0 * coeffs[s]});
        constant -= coeffs[s];
    }
    f.constant = constant;
    return f;
}

double binomial(int n, int k) {
    if (k < 0 || k > n) return 0.0;
    k = std::min(k, n - k);
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return std::round(r);
}

namespace {
// Lexicographic unranking of size-k subsets of [1, n].
std::vector<int> unrank_combination(std::uint64_t rank, int n, int k) {
    std::vector<int> s;
    int next = 1;
    for (int remaining = k; remaining > 0; --remaining) {
        for (;; ++next) {
            const auto block = static_cast<std::uint64_t>(binomial(n - next, remaining - 1));
            if (rank < block) break;
            rank -= block;
        }
        s.push_back(next++);
    }
    return s;
}
}  // namespace

SparseSpectrum sample_random_function(int T, int degree, int omega, std::uint64_t seed, bool positive) {
    if (T < 1) fail(ErrorKind::Input, "T must be positive");
    if (degree < 1 || degree > T) fail(ErrorKind::Input, "degree must be in [1, T]");
    if (omega < 1) fail(ErrorKind::Input, "sparsity must be positive");
    const double total = binomial(T, degree);
    if (total > 4.0e18) fail(ErrorKind::Resource, "too many subsets to enumerate");
    if (static_cast<double>(omega) > total)
        fail(ErrorKind::Input, "sparsity " + std::to_string(omega) + " exceeds C(T, degree)");
    const auto n = static_cast<std::uint64_t>(total);

    Rng rng(seed);
    // Partial Fisher-Yates over the implicit index array [0, n).
    std::unordered_map<std::uint64_t, std::uint64_t> swapped;
    auto at = [&](std::uint64_t i) {
        auto it = swapped.find(i);
        return it == swapped.end() ? i : it->second;
    };
    std::vector<std::uint64_t> ranks;
    for (std::uint64_t i = 0; i < static_cast<std::uint64_t>(omega); ++i) {
        std::uniform_int_distribution<std::uint64_t> pick(i, n - 1);
        const std::uint64_t j = pick(rng);
        const std::uint64_t vi = at(i), vj = at(j);
        swapped[i] = vj;
        swapped[j] = vi;
        ranks.push_back(vj);
    }

    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> c(static_cast<std::size_t>(omega));
    double norm2 = 0.0;
    for (double& v : c) {
        do {
            v = gauss(rng);
        } while (v == 0.0);
        if (positive) v = std::abs(v);
        norm2 += v * v;
    }
    const double inv = 1.0 / std::sqrt(norm2);

    SparseSpectrum f;
    f.T = T;
    for (std::size_t t = 0; t < ranks.size(); ++t)
        f.components.push_back({unrank_combination(ranks[t], T, degree), c[t] * inv});
    return f;
}

SpectrumStats spectrum_stats(const SparseSpectrum& f) {
    SpectrumStats s;
    s.degree = f.degree();
    s.sparsity = f.sparsity();
    double n2 = 0.0;
    for (const auto& c : f.components) {
        s.sorted_sq_coeffs.push_back(c.coeff * c.coeff);
        n2 += c.coeff * c.coeff;
    }
    std::sort(s.sorted_sq_coeffs.begin(), s.sorted_sq_coeffs.end(), std::greater<>());
    s.l2_coeff_norm = std::sqrt(n2);
    return s;
}

}  // namespace specflat
