#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "specflat/bounds.hpp"
#include "specflat/construction.hpp"
#include "specflat/derivatives.hpp"

using namespace specflat;

namespace {

SparseSpectrum single(int T, std::vector<int> subset, double c = 1.0) {
    SparseSpectrum f;
    f.T = T;
    f.components.push_back({std::move(subset), c});
    return f;
}

// Number of grid points h = i/D with m(h) = 1 (m is 0 or 1 on the grid).
int ones_on_grid(int D) {
    int n = 0;
    for (int i = 0; i <= D; ++i) n += mlp_profile(static_cast<double>(i) / D, D) == 1.0;
    return n;
}

}  // namespace

TEST(Build, MlpOutputColumnForTwoParity) {
    const auto p = build(single(4, {1, 2}));
    const std::vector<double> expect = {8, -8, -8, 8, 0, 0, 0, 0, 8, -8, -8, 8};
    ASSERT_EQ(p.F.rows(), 12);
    for (int k = 0; k < 12; ++k) EXPECT_DOUBLE_EQ(p.F(k, p.F.cols() - 1), expect[static_cast<std::size_t>(k)]);
}

TEST(Build, SecondLayerLogitWeight) {
    const auto p = build(single(20, {3, 7}));
    EXPECT_NEAR(p.W2(20, 0), std::log(400.0), 1e-12);
    EXPECT_NEAR(p.W2(20, 0), 5.9915, 1e-4);
}

TEST(Build, BiasQuadrupleForDegreeOne) {
    const auto p = build(single(4, {2}));
    EXPECT_DOUBLE_EQ(p.Gamma(0), -0.5);
    EXPECT_DOUBLE_EQ(p.Gamma(1), -0.25);
    EXPECT_DOUBLE_EQ(p.Gamma(2), 0.25);
    EXPECT_DOUBLE_EQ(p.Gamma(3), 0.5);
}

TEST(Build, StructuralSparsityPatterns) {
    const auto f = sample_random_function(9, 3, 6, 4);
    const auto p = build(f);
    const int hp = p.hidden(), last = hp - 1;
    EXPECT_EQ(hp, f.T + 2);
    for (int i = 0; i < hp; ++i)
        for (int j = 0; j < hp; ++j) {
            EXPECT_EQ(p.V1(i, j), (i == last && j == last) ? 1.0 : 0.0);
            if (i != f.T) EXPECT_EQ(p.W2(i, j), 0.0);
        }
    for (int k = 0; k < p.F.rows(); ++k)
        for (int j = 0; j < last; ++j) EXPECT_EQ(p.F(k, j), 0.0);
    double D = 0.0;
    for (const auto& c : f.components) D += c.coeff;
    for (int j = 0; j < last; ++j) EXPECT_EQ(p.V2(j), 0.0);
    EXPECT_NEAR(p.V2(last), D, 1e-15);
    for (int k = 0; k < p.F.rows(); ++k) {
        const double h = static_cast<double>(k / 4) / f.degree();
        EXPECT_NEAR(std::abs(p.F(k, last)), 4.0 * mlp_profile(h, f.degree()) * f.degree(), 1e-15);
    }
}

TEST(Build, RejectsUnsupportedRegimes) {
    SparseSpectrum mixed = single(5, {1, 2});
    mixed.components.push_back({{3}, 0.5});
    try {
        build(mixed);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Unsupported);
    }
    try {
        build(single(5, {1, 2}, -0.5));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Unsupported);
    }
    SparseSpectrum with_constant = single(5, {1, 2});
    with_constant.constant = 0.25;
    EXPECT_THROW(build(with_constant), Error);
}

TEST(Build, SparsityAboveTIsInputError) {
    SparseSpectrum f;
    f.T = 4;
    for (std::vector<int> s : {std::vector<int>{1, 2}, {1, 3}, {1, 4}, {2, 3}, {2, 4}})
        f.components.push_back({s, 0.3});
    try {
        build(f);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Input);
    }
}

TEST(Forward, TwoParityExamples) {
    const auto p = build(single(4, {1, 2}));
    EXPECT_NEAR(forward(p, {1, 1, 0, 0}).output, 1.0, 1e-15);
    EXPECT_NEAR(forward(p, {1, 0, 0, 0}).output, 0.0, 1e-15);
}

TEST(Forward, IdealizedExactOnRandomSpectra) {
    Rng rng(2024);
    for (int rep = 0; rep < 40; ++rep) {
        std::uniform_int_distribution<int> Td(4, 10);
        const int T = Td(rng);
        const int D = std::uniform_int_distribution<int>(1, std::min(4, T))(rng);
        const int wmax = static_cast<int>(std::min<double>(T, binomial(T, D)));
        const int w = std::uniform_int_distribution<int>(1, wmax)(rng);
        const auto f = sample_random_function(T, D, w, rng());
        const auto p = build(f);
        const CompiledSpectrum cf(f);
        for (std::uint64_t i = 0; i < (std::uint64_t{1} << T); ++i)
            ASSERT_NEAR(forward(p, index_to_bits(i, T)).output, cf(i), 1e-9) << "T=" << T << " D=" << D;
    }
}

TEST(Forward, AttentionRowsAndIdealizedWeights) {
    const auto f = sample_random_function(10, 2, 5, 8);
    double D = 0.0;
    for (const auto& c : f.components) D += c.coeff;
    for (auto mode : {AttentionMode::Idealized, AttentionMode::Softmax}) {
        ConstructionConfig cfg;
        cfg.mode = mode;
        const auto p = build(f, cfg);
        const auto r = forward(p, {1, 0, 1, 1, 0, 0, 1, 0, 1, 1}, true);
        const auto& tr = *r.trace;
        for (int i = 0; i < tr.attn1.rows(); ++i) EXPECT_NEAR(tr.attn1.row(i).sum(), 1.0, 1e-12);
        EXPECT_NEAR(tr.attn2.sum(), 1.0, 1e-12);
        if (mode == AttentionMode::Idealized) {
            for (int t = 0; t < 5; ++t) {
                EXPECT_NEAR(tr.attn2(t), f.components[static_cast<std::size_t>(t)].coeff / D, 1e-15);
                for (int j : f.components[static_cast<std::size_t>(t)].subset)
                    EXPECT_NEAR(tr.attn1(t, j - 1), 0.5, 1e-15);
            }
            for (int t = 5; t < tr.attn2.size(); ++t) EXPECT_EQ(tr.attn2(t), 0.0);
        }
    }
}

TEST(Forward, LengthMismatchIsInputError) {
    const auto p = build(single(4, {1, 2}));
    EXPECT_THROW(forward(p, {1, 0, 1}), Error);
}

namespace {
struct TolRow {
    int t, omega, degree, samples;
    std::uint64_t seed;
    double max_err, tol;
};
std::vector<TolRow> load_tolerances() {
    std::ifstream in(std::string(SPECFLAT_FIXTURE_DIR) + "/softmax_tolerance.csv");
    std::vector<TolRow> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line[0] == 't') continue;
        for (char& c : line)
            if (c == ',') c = ' ';
        std::istringstream ss(line);
        TolRow r{};
        ss >> r.t >> r.omega >> r.degree >> r.samples >> r.seed >> r.max_err >> r.tol;
        rows.push_back(r);
    }
    return rows;
}
}  // namespace

TEST(Forward, SoftmaxWithinMeasuredToleranceShrinkingInT) {
    const auto rows = load_tolerances();
    ASSERT_EQ(rows.size(), 4U);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto& r = rows[k];
        if (k > 0) EXPECT_LT(r.tol, rows[k - 1].tol);
        const auto f = sample_random_function(r.t, r.degree, r.omega, r.seed);
        ConstructionConfig cfg;
        cfg.mode = AttentionMode::Softmax;
        const auto p = build(f, cfg);
        // Fresh inputs, not those used to derive the tolerance.
        const auto data = make_dataset(f, 200, r.seed + 7);
        double mx = 0.0;
        for (std::size_t i = 0; i < data.size(); ++i)
            mx = std::max(mx, std::abs(forward(p, data.xs[i]).output - data.ys[i]));
        EXPECT_LE(mx, r.tol) << "T=" << r.t;
    }
}

TEST(Forward, SoftmaxMedianErrorNonincreasingInT) {
    double prev = std::numeric_limits<double>::infinity();
    for (int T : {20, 40, 80}) {
        const auto f = sample_random_function(T, 2, 10, 5000 + static_cast<std::uint64_t>(T));
        ConstructionConfig cfg;
        cfg.mode = AttentionMode::Softmax;
        const auto p = build(f, cfg);
        const auto data = make_dataset(f, 101, 17);
        std::vector<double> errs;
        for (std::size_t i = 0; i < data.size(); ++i) errs.push_back(std::abs(forward(p, data.xs[i]).output - data.ys[i]));
        std::nth_element(errs.begin(), errs.begin() + 50, errs.end());
        EXPECT_LE(errs[50], prev) << "T=" << T;
        prev = errs[50];
    }
}

TEST(Norms, BlockNormsByDirectSummation) {
    for (int D = 1; D <= 5; ++D) {
        const auto f = sample_random_function(12, D, 3, 31 + static_cast<std::uint64_t>(D));
        const auto r = frobenius_report(build(f));
        EXPECT_NEAR(r.M, 4.0 * (D + 1), 1e-12);
        EXPECT_NEAR(r.F, 64.0 * D * D * ones_on_grid(D), 1e-9);
        EXPECT_NEAR(r.V1, 1.0, 0.0);
        EXPECT_LE(r.Gamma, 4.0 * (D + 1));
        const double l = std::log(12.0);
        EXPECT_NEAR(r.W1, 4.0 * l * l * D * 3, 1e-9);
    }
}

TEST(Norms, DegreeOneFBlock) {
    // Entries +-4 on the single grid point with m(h) = 1.
    const auto r = frobenius_report(build(single(4, {2})));
    EXPECT_DOUBLE_EQ(r.F, 64.0);
}

TEST(Norms, TotalWithinNormBoundAtTwoParityTiling) {
    const auto f = sample_random_function(20, 2, 10, 7);
    const double L = l_norm(10, 2, 20);
    EXPECT_NEAR(L, 1303.93, 0.01);
    EXPECT_LE(frobenius_report(build(f)).total, L);
}

TEST(Params, CountFromShapes) {
    EXPECT_EQ(param_count(build(single(4, {2}))), 218U);
    const auto p = build(sample_random_function(20, 2, 10, 1));
    const double d = 21;
    EXPECT_EQ(static_cast<double>(param_count(p)), 3 * (d + 1) * (d + 1) + (d + 1) + (8 * d + 12) * 3);
    EXPECT_EQ(static_cast<double>(param_count(p)), construction_param_count(d, 2));
    const auto p3 = build(sample_random_function(20, 3, 10, 1));
    EXPECT_EQ(param_count(p3) - param_count(p), 4U * (2U * 22U + 1U));
}

TEST(Params, VectorRoundTrip) {
    const auto p = build(sample_random_function(8, 2, 4, 3));
    const Vector v = to_vector(p);
    ConstructionParams q = p;
    from_vector(q, 2.0 * v);
    EXPECT_TRUE(to_vector(q).isApprox(2.0 * v));
    from_vector(q, v);
    EXPECT_EQ(to_vector(q), v);
    for (std::size_t k = 0; k < param_count(p); k += 37) EXPECT_EQ(param_value(p, param_index(p, k)), v(static_cast<Eigen::Index>(k)));
}

TEST(Jll, WidthAndGramDistortion) {
    const int T = 20;
    const double eps = 0.5;
    ConstructionConfig cfg;
    cfg.projection = Projection::RandomJLL;
    cfg.eps_p = eps;
    cfg.seed = 3;
    const auto f = sample_random_function(T, 2, 10, 9);
    const auto p = build(f, cfg);
    EXPECT_GT(p.d, 8.0 * std::log(T) / (eps * eps));
    EXPECT_EQ(p.d, jll_min_width(T, eps));
    const double delta_p = 2.0 * std::exp(-(p.d / 2.0) * (eps * eps / 2.0 - eps * eps * eps / 3.0));
    const Matrix gram = p.J.topRows(T + 1) * p.J.topRows(T + 1).transpose();
    int good = 0, total = 0;
    for (int i = 0; i <= T; ++i)
        for (int j = 0; j <= T; ++j) {
            ++total;
            good += std::abs(gram(i, j) - (i == j ? 1.0 : 0.0)) <= eps;
        }
    EXPECT_GE(static_cast<double>(good) / total, 1.0 - delta_p);
    cfg.d = p.d - 1;
    EXPECT_THROW(build(f, cfg), Error);
}

TEST(Cot, StepOneAndPrefixParities) {
    const auto p = build_cot(4);
    const auto r = run_cot_parity(p, {1, 0, 1, 1});
    EXPECT_EQ(r.steps, (std::vector<int>{1, 1, 0, 1}));
    EXPECT_EQ(r.final_bit, 1);
}

TEST(Cot, ExhaustiveParityAtEightBits) {
    const auto p = build_cot(8);
    for (std::uint64_t i = 0; i < 256; ++i) {
        const BitString x = index_to_bits(i, 8);
        int parity = 0;
        std::vector<int> prefix;
        for (auto b : x) prefix.push_back(parity ^= b);
        const auto r = run_cot_parity(p, x);
        ASSERT_EQ(r.steps, prefix) << i;
        ASSERT_EQ(r.final_bit, parity);
        for (double y : r.raw) ASSERT_NEAR(y, std::round(y), 1e-9);
    }
}

TEST(Cot, UniformAttentionOverCurrentAndTwin) {
    const int T = 5;
    const auto p = build_cot(T);
    BitString seq = {1, 0, 1, 1, 0, 0, 1};  // x, CLS, f_1
    Matrix X, Xpos;
    AttentionMasks masks;
    embed_cot(p, seq, X, Xpos, masks);
    ActivationTrace tr;
    forward_core(p, X, Xpos, masks, tr);
    const int last = static_cast<int>(seq.size()) - 1;  // position 7, encoding 1
    EXPECT_NEAR(tr.attn1(last, last), 0.5, 1e-15);
    EXPECT_NEAR(tr.attn1(last, last - T), 0.5, 1e-15);
}
