#include "specflat/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace specflat {

double g_u(double w, double D) { return 4.0 + 4.0 * w * (2.0 + D + 32.0 * D * D + 32.0 * D * D * D); }

double l_norm(double w, double D, double T) {
    const double l = std::log(T);
    return 16.0 * (D + 1.0) * D * D + 8.0 * (D + 1.0) + 1.0 + 4.0 * l * l * D * w + 4.0 * w * l * l + w;
}

double h_u(double w, double D, double d) {
    return 4.0 * std::sqrt(2.0) * d * w                          //
           + 16.0 * D * std::sqrt(2.0 * (D + 1.0) * w * (d + 1.0))  //
           + 16.0 * D * w * std::sqrt(D + 1.0)                    //
           + 4.0 * std::sqrt(w * (D + 1.0))                       //
           + 2.0 * std::sqrt(w)                                   //
           + 8.0 * (D + 1.0) * std::sqrt(d * w);
}

double t_p(double s, double w, double D, double T, double d) {
    const double l = std::log(T);
    return s * std::sqrt(2.0 * d) + 32.0 * std::sqrt(w) * s * D * D + 256.0 * s * d * D * D * w * l;
}

double g_p(double s, double w, double D, double T, double d) {
    const double l = std::log(T), r2 = std::sqrt(2.0), sw = std::sqrt(w);
    return 256.0 * r2 * s * d * D * D * sw * l           // V2 block
           + 192.0 * s * sw * D * D                       // W2 block
           + 128.0 * r2 * s * D * D * w * w * l           // W1 block
           + 64.0 * r2 * s * d * D * D * w * w * l        // V1 block
           + 128.0 * s * d * w * w * l * std::pow(D, 1.5)  // M block
           + 2048.0 * s * d * std::pow(D, 3.5) * w * w * l + 8.0 * s * std::sqrt(D) * sw * l * d  // Gamma block
           + 512.0 * s * std::pow(D, 2.5) * w * w * d * d + 32.0 * s * std::sqrt(D) * w * w * d * d;  // F block
}

double h_p(double s, double w, double D, double T, double d) {
    const double l = std::log(T), w15 = std::pow(w, 1.5), w25 = std::pow(w, 2.5);
    return 1536.0 * std::sqrt(2.0) * s * D * D * w15 * d * d * l          //
           + 2048.0 * s * d * d * std::pow(D, 3.5) * w15 * l              //
           + 2048.0 * s * d * std::pow(D, 3.5) * w15 * l                  //
           + 1024.0 * s * std::pow(D, 2.5) * w15 * d * d * d * l          //
           + 3072.0 * s * std::pow(D, 3.5) * w25 * std::pow(d, 1.5) * l * l  //
           + 1536.0 * s * D * D * w25 * d * d * l * l + 16.0 * s * w * w * std::pow(d, 2.5) * l;
}

double p_analytic(double s, double w, double D, double T, double d, double n) {
    const double G = g_u(w, D), gp = g_p(s, w, D, T, d);
    return 2.0 * std::sqrt(G) * gp + gp * gp + 2.0 * t_p(s, w, D, T, d) * n * (h_u(w, D, d) + h_p(s, w, D, T, d));
}

double r_factor(double delta, double d) {
    if (!(delta > 0.0 && delta < 1.0)) fail(ErrorKind::Input, "delta must lie in (0, 1)");
    if (!(d >= 1.0)) fail(ErrorKind::Input, "d must be at least 1");
    const double l = std::log(1.0 / delta);
    return std::sqrt(1.0 + 2.0 * std::sqrt(l / d) + 2.0 * l / d);
}

bool no_flip(double sigma, double d, double D) { return sigma <= 1.0 / (16.0 * d * D); }

double construction_param_count(double d, double D) {
    const double hp = d + 1.0, K = 4.0 * (D + 1.0);
    return 3.0 * hp * hp + hp + K * (2.0 * hp + 1.0);
}

std::string to_string(BoundVariant v) {
    switch (v) {
        case BoundVariant::Truncated: return "truncated";
        case BoundVariant::SemiAnalytic: return "semi";
        case BoundVariant::FullyAnalytic: return "analytic";
    }
    return "?";
}

BoundVariant parse_variant(const std::string& s) {
    if (s == "truncated") return BoundVariant::Truncated;
    if (s == "semi" || s == "semi-analytic") return BoundVariant::SemiAnalytic;
    if (s == "analytic" || s == "fully-analytic") return BoundVariant::FullyAnalytic;
    fail(ErrorKind::Input, "unknown bound variant '" + s + "' (expected truncated|semi|analytic)");
}

OptimizeMethod parse_optimize(const std::string& s) {
    if (s == "mesh") return OptimizeMethod::Mesh;
    if (s == "continuous") return OptimizeMethod::Continuous;
    fail(ErrorKind::Input, "unknown optimizer '" + s + "' (expected mesh|continuous)");
}

namespace {
void check_inputs(const BoundInputs& in) {
    if (!(in.omega > 0 && in.degree > 0 && in.T >= 2 && in.m > 0 && in.Sigma > 0 && in.sigma >= 0))
        fail(ErrorKind::Input, "bound inputs must be positive (T >= 2)");
    if (!(in.delta > 0.0 && in.delta < 1.0)) fail(ErrorKind::Input, "delta must lie in (0, 1)");
}
}  // namespace

BoundBreakdown pac_bayes_gap(const BoundInputs& in, BoundVariant variant, const PEmpProvider& p_emp,
                             SharpnessCoefficient coef) {
    check_inputs(in);
    const double s = in.sigma, d = in.width();
    const double G = g_u(in.omega, in.degree);
    const double L = l_norm(in.omega, in.degree, in.T);
    double P = 0.0;
    switch (variant) {
        case BoundVariant::Truncated: break;
        case BoundVariant::SemiAnalytic:
            if (!p_emp) fail(ErrorKind::Lookup, "semi-analytic bound needs an empirical perturbation table");
            P = p_emp(s, static_cast<int>(in.omega), static_cast<int>(in.degree), static_cast<int>(in.T));
            break;
        case BoundVariant::FullyAnalytic: P = p_analytic(s, in.omega, in.degree, in.T, d, in.params()); break;
    }
    const double lninv = std::log(1.0 / in.delta);
    const double kl = L / (2.0 * s * s) + lninv;
    BoundBreakdown b;
    b.sigma = s;
    b.sharpness_term = coef == SharpnessCoefficient::Half ? s * s * (G + 0.5 * P) : s * s * (2.0 * G + P);
    b.norm_term = 2.0 * std::sqrt(in.Sigma * in.Sigma / (2.0 * in.m) * kl);
    b.total = b.sharpness_term + b.norm_term;
    b.no_flip_ok = no_flip(s, d, in.degree);
    b.components = {{"G_u", G},
                    {"P", P},
                    {"L", L},
                    {"ln_inv_delta", lninv},
                    {"lambda", std::sqrt(2.0 * in.m / (in.Sigma * in.Sigma) * kl)},
                    {"theta_count", in.params()},
                    {"d", d}};
    return b;
}

double sigma_star_truncated(double w, double D, double T, double m, double Sigma) {
    const double G = g_u(w, D);
    return std::pow(Sigma * Sigma * l_norm(w, D, T) / (4.0 * m * G * G), 1.0 / 6.0);
}

std::vector<double> default_sigma_mesh() {
    std::vector<double> mesh;
    for (int i = 0; i < 20; ++i) mesh.push_back(1e-5 + (1e-2 - 1e-5) * i / 19.0);
    return mesh;
}

ScalarMinimum golden_section(const std::function<double(double)>& f, double a, double b, double tol) {
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - invphi * (b - a), d = a + invphi * (b - a);
    double fc = f(c), fd = f(d);
    while (std::abs(b - a) > tol * (1.0 + std::abs(a) + std::abs(b))) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = f(d);
        }
    }
    const double x = 0.5 * (a + b);
    const double fx = f(x);
    if (fc <= fx && fc <= fd) return {c, fc};
    if (fd < fx) return {d, fd};
    return {x, fx};
}

ScalarMinimum minimize_bracketed(const std::function<double(double)>& f, double lo, double hi, int coarse, double tol) {
    if (!(hi > lo) || coarse < 2) fail(ErrorKind::Input, "invalid bracketing interval");
    int best = -1;
    double fbest = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= coarse; ++i) {
        const double x = lo + (hi - lo) * i / coarse;
        const double fx = f(x);
        if (std::isfinite(fx) && fx < fbest) {
            fbest = fx;
            best = i;
        }
    }
    if (best < 0) fail(ErrorKind::Optimization, "objective is not finite anywhere on the search interval");
    const double a = lo + (hi - lo) * std::max(best - 1, 0) / coarse;
    const double b = lo + (hi - lo) * std::min(best + 1, coarse) / coarse;
    ScalarMinimum r = golden_section(f, a, b, tol);
    if (!(r.fx <= fbest)) r = {lo + (hi - lo) * best / coarse, fbest};
    return r;
}

BoundBreakdown optimize_sigma(const BoundInputs& in, BoundVariant variant, OptimizeMethod method,
                              const std::vector<double>& mesh, const PEmpProvider& p_emp, SharpnessCoefficient coef) {
    auto at = [&](double sigma) {
        BoundInputs q = in;
        q.sigma = sigma;
        return pac_bayes_gap(q, variant, p_emp, coef);
    };
    if (method == OptimizeMethod::Mesh) {
        BoundBreakdown best;
        best.total = std::numeric_limits<double>::infinity();
        for (double s : mesh) {
            if (!(s > 0.0)) continue;
            const BoundBreakdown b = at(s);
            if (std::isfinite(b.total) && b.total < best.total) best = b;
        }
        if (!std::isfinite(best.total)) fail(ErrorKind::Optimization, "bound is not finite on the sigma mesh");
        return best;
    }
    const auto r = minimize_bracketed([&](double ls) { return at(std::exp(ls)).total; }, std::log(1e-9), 0.0, 400,
                                      1e-13);
    return at(std::exp(r.x));
}

double min_nonvacuous_m(const BoundInputs& in, BoundVariant variant, double target, const PEmpProvider& p_emp,
                        double m_lo, double m_hi) {
    auto total = [&](double m) {
        BoundInputs q = in;
        q.m = m;
        return optimize_sigma(q, variant, OptimizeMethod::Continuous, {}, p_emp).total;
    };
    if (total(m_hi) >= target) return std::numeric_limits<double>::infinity();
    if (total(m_lo) < target) return m_lo;
    double lo = std::log(m_lo), hi = std::log(m_hi);
    while (hi - lo > 1e-7) {
        const double mid = 0.5 * (lo + hi);
        if (total(std::exp(mid)) < target)
            hi = mid;
        else
            lo = mid;
    }
    return std::exp(hi);
}

double edelman_c21(double w, double D, double T, double /*d*/) {
    const double l = std::log(T), r = std::sqrt(T + 2.0);
    return 4.0 * D * std::sqrt(D + 1.0)                       // F
           + 2.0 * std::sqrt(D + 1.0)                         // Gamma
           + 4.0 * (D + 1.0)                                  // M
           + 1.0                                              // V1
           + r * 2.0 * l * std::sqrt(D * w + (T + 1.0 - w))   // W1
           + r * std::sqrt(2.0 * w * l)                       // W2
           + std::sqrt(w);                                    // V2
}

double edelman_gap(double w, double D, double T, double d, double m) {
    return edelman_c21(w, D, T, d) * std::sqrt(std::log(d * m * T) / m);
}

std::vector<double> default_t_grid(const std::vector<double>& losses, int n_pos, double t_max) {
    if (losses.empty()) fail(ErrorKind::Input, "empty loss sample");
    double mean = 0.0;
    for (double x : losses) mean += x;
    mean /= static_cast<double>(losses.size());
    double var = 0.0;
    for (double x : losses) var += (x - mean) * (x - mean);
    const double sd = losses.size() > 1 ? std::sqrt(var / static_cast<double>(losses.size() - 1)) : 0.0;
    const double scale = sd > 0.0 ? t_max / sd : 1.0;
    std::vector<double> grid;
    for (int k = n_pos; k >= 1; --k) grid.push_back(-scale * k / n_pos);
    for (int k = 1; k <= n_pos; ++k) grid.push_back(scale * k / n_pos);
    return grid;
}

double subgaussian_sigma(const std::vector<double>& losses, const std::vector<double>& t_grid,
                         const SubgaussianOptions& opt) {
    if (losses.size() < 2) fail(ErrorKind::Input, "sub-Gaussian fitting needs at least 2 samples");
    double mean = 0.0;
    for (double x : losses) mean += x;
    mean /= static_cast<double>(losses.size());
    // log of the empirical MGF of the centered sample, via log-sum-exp.
    std::vector<std::pair<double, double>> log_mgf;
    for (double t : t_grid) {
        if (t == 0.0) continue;
        double mx = -std::numeric_limits<double>::infinity();
        for (double x : losses) mx = std::max(mx, t * (x - mean));
        double s = 0.0;
        for (double x : losses) s += std::exp(t * (x - mean) - mx);
        log_mgf.emplace_back(t, mx + std::log(s / static_cast<double>(losses.size())));
    }
    auto dominates = [&](double S) {
        for (const auto& [t, lm] : log_mgf)
            if (lm > 0.5 * S * S * t * t) return false;
        return true;
    };
    double S = opt.grid_start;
    for (int k = 0; k <= opt.max_steps; ++k, S *= opt.grid_ratio)
        if (dominates(S)) return S;
    fail(ErrorKind::Optimization, "no sub-Gaussian constant found on the search grid");
}

}  // namespace specflat
