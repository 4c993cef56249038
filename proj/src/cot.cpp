#include "specflat/cot.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "specflat/construction.hpp"

namespace specflat {

double cot_p(const CotBoundInputs& in, double degree) {
    const double d = in.T + 1.0;
    switch (in.variant) {
        case BoundVariant::Truncated: return 0.0;
        case BoundVariant::SemiAnalytic:
            if (!in.p_emp) fail(ErrorKind::Lookup, "semi-analytic bound needs an empirical perturbation table");
            return in.p_emp(in.sigma, 1, static_cast<int>(degree), static_cast<int>(in.T));
        case BoundVariant::FullyAnalytic:
            return p_analytic(in.sigma, 1.0, degree, in.T, d, construction_param_count(d, degree));
    }
    return 0.0;
}

namespace {

void check(const CotBoundInputs& in) {
    if (!(in.T >= 1 && in.m > 0 && in.Sigma > 0 && in.sigma > 0))
        fail(ErrorKind::Input, "chain-of-thought bound inputs must be positive");
}

// Exponent shared by both bounds, without the prefactor.
double log_core(const CotBoundInputs& in, double degree) {
    const double S2 = in.Sigma * in.Sigma, s2 = in.sigma * in.sigma;
    return -in.m / (8.0 * S2) + in.m * s2 / (4.0 * S2) * (2.0 * g_u(1.0, degree) + cot_p(in, degree)) +
           l_norm(1.0, degree, in.T) / (2.0 * s2);
}

}  // namespace

double log_b_cot(const CotBoundInputs& in) {
    check(in);
    return std::log(4.0 * in.T) + log_core(in, 2.0);
}

double log_b_op(const CotBoundInputs& in) {
    check(in);
    return std::log(4.0) + log_core(in, in.T);
}

double b_cot(const CotBoundInputs& in) { return std::exp(log_b_cot(in)); }
double b_op(const CotBoundInputs& in) { return std::exp(log_b_op(in)); }

SeparationReport verify_separation(const CotBoundInputs& base, const std::vector<int>& t_list) {
    if (t_list.empty()) fail(ErrorKind::Input, "empty T list");
    SeparationReport rep;
    for (int T : t_list) {
        if (T < 1) fail(ErrorKind::Input, "T must be positive");
        CotBoundInputs in = base;
        in.T = T;
        SeparationRow r;
        r.T = T;
        r.m = in.m;
        r.Sigma = in.Sigma;
        r.sigma = in.sigma;
        r.log_b_cot = log_b_cot(in);
        r.log_b_op = log_b_op(in);
        r.lhs = r.log_b_op - std::log(4.0);
        r.rhs = T * (r.log_b_cot - std::log(4.0 * T)) + in.m / (8.0 * in.Sigma * in.Sigma) * (T - 1.0);
        r.holds = r.lhs >= r.rhs;
        r.premise_gu = 2.0 * g_u(1.0, T) >= T * 2.0 * g_u(1.0, 2.0);
        r.premise_l = l_norm(1.0, T, T) >= T * l_norm(1.0, 2.0, T);
        r.no_flip_ok = no_flip(in.sigma, T + 1.0, T);
        if (!r.holds) {
            std::ostringstream msg;
            msg.precision(10);
            msg << "separation fails at (T=" << T << ", m=" << in.m << ", Sigma=" << in.Sigma
                << ", sigma=" << in.sigma << ", variant=" << to_string(in.variant) << "): log lhs " << r.lhs
                << " < log rhs " << r.rhs;
            rep.violations.push_back(msg.str());
        }
        rep.rows.push_back(r);
    }
    return rep;
}

CotSimulation cot_error_simulation(int T, int trials, double noise_std, std::uint64_t seed) {
    if (T < 2) fail(ErrorKind::Input, "T must be at least 2");
    if (trials < 1) fail(ErrorKind::Input, "need at least one trial");
    if (noise_std < 0.0) fail(ErrorKind::Input, "noise_std must be nonnegative");
    const ConstructionParams p = build_cot(T);
    constexpr std::size_t kChunk = 64;
    const std::size_t n = static_cast<std::size_t>(trials);
    const std::size_t chunks = (n + kChunk - 1) / kChunk;
    std::vector<int> wrong(chunks, 0);
    parallel_chunks(chunks, [&](std::size_t c) {
        for (std::size_t i = c * kChunk; i < std::min(n, (c + 1) * kChunk); ++i) {
            Rng rng(derive_seed(seed, {i}));
            std::bernoulli_distribution coin(0.5);
            std::normal_distribution<double> noise(0.0, 1.0);
            BitString x(static_cast<std::size_t>(T));
            int parity = 0;
            for (auto& b : x) {
                b = coin(rng) ? 1 : 0;
                parity ^= b;
            }
            std::function<double(double)> perturb;
            if (noise_std > 0.0) perturb = [&](double y) { return y + noise_std * noise(rng); };
            if (run_cot_parity(p, x, perturb).final_bit != parity) ++wrong[c];
        }
    });
    CotSimulation s;
    s.T = T;
    s.trials = trials;
    for (int w : wrong) s.errors += w;
    s.error_rate = static_cast<double>(s.errors) / trials;
    s.stderr_ = std::sqrt(s.error_rate * (1.0 - s.error_rate) / trials);
    s.flip_prob = noise_std > 0.0 ? std::erfc(0.5 / noise_std / std::sqrt(2.0)) : 0.0;
    s.union_bound = std::min(1.0, T * s.flip_prob);
    return s;
}

}  // namespace specflat
