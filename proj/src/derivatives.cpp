#include "specflat/derivatives.hpp"

#include <algorithm>
#include <cmath>

namespace specflat {

Dataset make_dataset(const SparseSpectrum& f, std::size_t sample_size, std::uint64_t seed) {
    Dataset d;
    if (sample_size == 0) {
        const CompiledSpectrum cf(f);
        if (f.T > 20) fail(ErrorKind::Resource, "exhaustive datasets need T <= 20");
        const std::uint64_t n = std::uint64_t{1} << f.T;
        for (std::uint64_t i = 0; i < n; ++i) {
            d.xs.push_back(index_to_bits(i, f.T));
            d.ys.push_back(cf(i));
        }
        return d;
    }
    Rng rng(seed);
    std::uniform_int_distribution<int> bit(0, 1);
    for (std::size_t s = 0; s < sample_size; ++s) {
        BitString x(static_cast<std::size_t>(f.T));
        for (auto& b : x) b = static_cast<std::uint8_t>(bit(rng));
        d.ys.push_back(eval_sparse(f, x));
        d.xs.push_back(std::move(x));
    }
    return d;
}

// ---------------------------------------------------------------------------
// ProbeEngine

ProbeEngine::ProbeEngine(const ConstructionParams& p, const BitString& x) : p_(p) {
    Matrix X, Xpos;
    embed_input(p, x, X, Xpos);
    masks_ = construction_masks(p, p.T + 1);
    forward_core(p, X, Xpos, masks_, tr_);
    init();
}

ProbeEngine::ProbeEngine(const ConstructionParams& p, const Matrix& X, const Matrix& Xpos, const AttentionMasks& masks)
    : p_(p), masks_(masks) {
    forward_core(p, X, Xpos, masks_, tr_);
    init();
}

void ProbeEngine::init() {
    off_ = block_offsets(p_);
    n_ = static_cast<int>(tr_.X.rows());
    hp_ = p_.hidden();
    K_ = p_.units();
    last_ = n_ - 1;
    FU_ = p_.F * tr_.u;
    FV_ = p_.F * p_.V2;
    x_col_rows_.assign(static_cast<std::size_t>(hp_), {});
    x_col_nonzero_.assign(static_cast<std::size_t>(hp_), 0);
    for (int a = 0; a < hp_; ++a)
        for (int r = 0; r < n_; ++r)
            if (tr_.X(r, a) != 0.0) {
                x_col_rows_[static_cast<std::size_t>(a)].push_back(r);
                x_col_nonzero_[static_cast<std::size_t>(a)] = 1;
            }
    m_row_nonzero_.assign(static_cast<std::size_t>(hp_), 0);
    for (int a = 0; a < hp_; ++a) m_row_nonzero_[static_cast<std::size_t>(a)] = p_.M.row(a).squaredNorm() > 0.0;
    dH_ = Matrix::Zero(n_, K_);
    logits_.resize(n_);
    values_.resize(n_);
    rowbuf_.resize(n_);
    arow_.resize(n_);
}

double ProbeEngine::finish_softmax(const Vector& logits, const Vector& values) const {
    Vector phi(n_);
    masked_softmax(logits.data(), n_, masks_.layer2, phi.data());
    return phi.dot(values);
}

double ProbeEngine::finish_rows(const std::vector<int>& rows) {
    logits_ = tr_.s2;
    values_ = tr_.v;
    bool last_changed = false;
    for (int r : rows) {
        logits_(r) += dH_.row(r).dot(FU_);
        values_(r) += dH_.row(r).dot(FV_);
        if (r == last_ && dH_.row(r).squaredNorm() > 0.0) last_changed = true;
    }
    if (last_changed) {
        const Vector dg = p_.F.transpose() * dH_.row(last_).transpose();
        const Vector du = p_.W2.transpose() * dg;
        logits_.noalias() += tr_.G * du;
        const Vector Fdu = p_.F * du;
        for (int r : rows) logits_(r) += dH_.row(r).dot(Fdu);
    }
    for (int r : rows) dH_.row(r).setZero();
    return finish_softmax(logits_, values_);
}

double ProbeEngine::finish_column(int k, const Vector& dh) {
    logits_ = tr_.s2 + FU_(k) * dh;
    values_ = tr_.v + FV_(k) * dh;
    if (dh(last_) != 0.0) {
        const Vector dg = dh(last_) * p_.F.row(k).transpose();
        const Vector du = p_.W2.transpose() * dg;
        logits_.noalias() += tr_.G * du;
        logits_ += p_.F.row(k).dot(du) * dh;
    }
    return finish_softmax(logits_, values_);
}

double ProbeEngine::output_with(std::size_t k, double delta) {
    int b = 0;
    while (k >= off_[static_cast<std::size_t>(b) + 1]) ++b;
    const auto local = static_cast<int>(k - off_[static_cast<std::size_t>(b)]);
    const auto blk = static_cast<Block>(b);
    static const std::vector<int> kAll;

    switch (blk) {
        case Block::W1: {
            const int a = local / hp_, c = local % hp_;
            const auto& rows = x_col_rows_[static_cast<std::size_t>(a)];
            if (rows.empty() || !x_col_nonzero_[static_cast<std::size_t>(c)]) return tr_.output;
            for (int r : rows) {
                rowbuf_ = tr_.S1.row(r).transpose() + (delta * tr_.X(r, a)) * tr_.X.col(c);
                const auto& allowed = masks_.layer1.empty() ? kAll : masks_.layer1[static_cast<std::size_t>(r)];
                masked_softmax(rowbuf_.data(), n_, allowed, arow_.data());
                arow_ -= tr_.attn1.row(r).transpose();
                const Eigen::RowVectorXd dB = arow_.transpose() * tr_.XV;
                dH_.row(r) = (tr_.Pre.row(r) + dB * p_.M).cwiseMax(0.0) - tr_.H.row(r);
            }
            return finish_rows(rows);
        }
        case Block::V1: {
            const int a = local / hp_, c = local % hp_;
            if (!m_row_nonzero_[static_cast<std::size_t>(c)]) return tr_.output;
            std::vector<int> rows;
            for (int r = 0; r < n_; ++r)
                if (tr_.AX(r, a) != 0.0) {
                    rows.push_back(r);
                    dH_.row(r) = (tr_.Pre.row(r) + (delta * tr_.AX(r, a)) * p_.M.row(c)).cwiseMax(0.0) - tr_.H.row(r);
                }
            return finish_rows(rows);
        }
        case Block::M: {
            const int a = local / K_, u = local % K_;
            const Vector dh = (tr_.Pre.col(u) + delta * tr_.B.col(a)).cwiseMax(0.0) - tr_.H.col(u);
            return finish_column(u, dh);
        }
        case Block::Gamma: {
            const Vector dh = (tr_.Pre.col(local).array() + delta).max(0.0).matrix() - tr_.H.col(local);
            return finish_column(local, dh);
        }
        case Block::F: {
            const int u = local / hp_, j = local % hp_;
            const auto h = tr_.H.col(u);
            logits_ = tr_.s2 + (delta * tr_.u(j)) * h;
            values_ = tr_.v + (delta * p_.V2(j)) * h;
            if (h(last_) != 0.0) {
                const Vector du = (delta * h(last_)) * p_.W2.row(j).transpose();
                logits_.noalias() += tr_.G * du;
                logits_ += (delta * du(j)) * h;
            }
            return finish_softmax(logits_, values_);
        }
        case Block::W2: {
            const int a = local / hp_, c = local % hp_;
            logits_ = tr_.s2 + (delta * tr_.G(last_, a)) * tr_.G.col(c);
            return finish_softmax(logits_, tr_.v);
        }
        case Block::V2: {
            values_ = tr_.v + delta * tr_.G.col(local);
            return finish_softmax(tr_.s2, values_);
        }
    }
    return tr_.output;
}

Vector ProbeEngine::backprop() const {
    const ConstructionParams& p = p_;
    const ActivationTrace& t = tr_;
    Vector grad(static_cast<Eigen::Index>(off_.back()));

    const Vector& phi = t.attn2;
    const Vector w = phi.cwiseProduct((t.v.array() - t.output).matrix());
    Matrix dG = phi * p.V2.transpose();
    dG.noalias() += w * t.u.transpose();
    const Vector du = t.G.transpose() * w;
    dG.row(last_) += (p.W2 * du).transpose();
    const Vector dV2 = t.G.transpose() * phi;
    const Matrix dW2 = t.G.row(last_).transpose() * du.transpose();

    const Matrix dF = t.H.transpose() * dG;
    Matrix dPre = dG * p.F.transpose();
    for (Eigen::Index i = 0; i < dPre.rows(); ++i)
        for (Eigen::Index j = 0; j < dPre.cols(); ++j)
            if (!(t.Pre(i, j) > 0.0)) dPre(i, j) = 0.0;
    const Matrix dM = t.B.transpose() * dPre;
    const Vector dGamma = dPre.colwise().sum().transpose();
    const Matrix dB = dPre * p.M.transpose();
    const Matrix dA = dB * t.XV.transpose();
    const Matrix dV1 = t.X.transpose() * (t.attn1.transpose() * dB);
    Matrix dS = t.attn1.cwiseProduct(dA);
    const Vector rowdot = dS.rowwise().sum();
    dS -= t.attn1.cwiseProduct(rowdot.replicate(1, dS.cols()));
    const Matrix dW1 = t.X.transpose() * dS * t.X;

    auto put = [&](Block b, const Matrix& m) {
        Eigen::Index k = static_cast<Eigen::Index>(off_[static_cast<std::size_t>(b)]);
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) grad(k++) = m(i, j);
    };
    put(Block::W1, dW1);
    put(Block::V1, dV1);
    put(Block::M, dM);
    put(Block::Gamma, dGamma);
    put(Block::F, dF);
    put(Block::W2, dW2);
    put(Block::V2, dV2);
    return grad;
}

// ---------------------------------------------------------------------------

double loss(const ConstructionParams& p, const BitString& x, double y) {
    const double e = forward(p, x).output - y;
    return e * e;
}

double dataset_loss(const ConstructionParams& p, const Dataset& data) {
    if (data.size() == 0) fail(ErrorKind::Input, "empty dataset");
    double s = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) s += loss(p, data.xs[i], data.ys[i]);
    return s / static_cast<double>(data.size());
}

Vector fd_gradient(const ConstructionParams& p, const BitString& x, const FdSteps& steps) {
    ProbeEngine eng(p, x);
    const Vector theta = to_vector(p);
    Vector g(theta.size());
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
        const double h = std::max(steps.grad_rel, steps.grad_rel * std::abs(theta(k)));
        const auto kk = static_cast<std::size_t>(k);
        g(k) = (eng.output_with(kk, h) - eng.output_with(kk, -h)) / (2.0 * h);
    }
    return g;
}

AnalyticGradient analytic_gradient(const ConstructionParams& p, const BitString& x) {
    ProbeEngine eng(p, x);
    AnalyticGradient r;
    r.grad = eng.backprop();
    const auto& t = eng.trace();
    std::vector<int> rows = eng.masks().layer2;
    if (rows.empty())
        for (int i = 0; i < t.Pre.rows(); ++i) rows.push_back(i);
    for (int i : rows)
        for (Eigen::Index j = 0; j < t.Pre.cols(); ++j)
            if (std::abs(t.Pre(i, j)) < 1e-9) r.off_grid = true;
    return r;
}

std::map<std::string, double> block_norms_sq(const ConstructionParams& p, const Vector& v) {
    const auto off = block_offsets(p);
    std::map<std::string, double> m;
    for (int b = 0; b < kBlockCount; ++b) {
        const auto s = static_cast<Eigen::Index>(off[static_cast<std::size_t>(b)]);
        const auto e = static_cast<Eigen::Index>(off[static_cast<std::size_t>(b) + 1]);
        m[block_name(static_cast<Block>(b))] = v.segment(s, e - s).squaredNorm();
    }
    return m;
}

GradientComparison compare_gradients(const ConstructionParams& p, const BitString& x, const FdSteps& steps) {
    const auto an = analytic_gradient(p, x);
    const Vector fd = fd_gradient(p, x, steps);
    const auto na = block_norms_sq(p, an.grad), nf = block_norms_sq(p, fd), nd = block_norms_sq(p, an.grad - fd);
    const double scale = an.grad.norm();
    GradientComparison r;
    r.off_grid = an.off_grid;
    for (const auto& [name, v] : na) {
        BlockComparison b;
        b.analytic_norm = std::sqrt(v);
        b.fd_norm = std::sqrt(nf.at(name));
        b.zero = b.analytic_norm <= 1e-12 * std::max(1.0, scale);
        if (b.zero) {
            r.max_zero_block_fd = std::max(r.max_zero_block_fd, b.fd_norm);
        } else {
            b.rel_err = std::sqrt(nd.at(name) / v);
            r.max_rel_err = std::max(r.max_rel_err, b.rel_err);
        }
        r.blocks[name] = b;
    }
    return r;
}

namespace {

PointSharpness sharpness_with_engine(ProbeEngine& eng, const Vector& theta, double y, const FdSteps& steps,
                                     bool with_gradient) {
    PointSharpness ps;
    ps.output = eng.output();
    ps.target = y;
    const double e0 = ps.output - y;
    const double L0 = e0 * e0;
    double trace = 0.0, g2 = 0.0;
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
        const auto kk = static_cast<std::size_t>(k);
        const double h2 = steps.second_rel * std::max(1.0, std::abs(theta(k)));
        const double ep = eng.output_with(kk, h2) - y;
        const double em = eng.output_with(kk, -h2) - y;
        trace += (ep * ep - 2.0 * L0 + em * em) / (h2 * h2);
        if (with_gradient) {
            const double h1 = std::max(steps.grad_rel, steps.grad_rel * std::abs(theta(k)));
            const double gk = (eng.output_with(kk, h1) - eng.output_with(kk, -h1)) / (2.0 * h1);
            g2 += gk * gk;
        }
    }
    ps.trace = trace;
    ps.grad_norm_sq = g2;
    return ps;
}

}  // namespace


PointSharpness point_sharpness(const ConstructionParams& p, const BitString& x, double y, const FdSteps& steps) {
    ProbeEngine eng(p, x);
    return sharpness_with_engine(eng, to_vector(p), y, steps, true);
}

SharpnessSummary dataset_sharpness(const ConstructionParams& p, const Dataset& data, const FdSteps& steps,
                                   bool with_gradient) {
    if (data.size() == 0) fail(ErrorKind::Input, "empty dataset");
    SharpnessSummary s;
    s.points.resize(data.size());
    const Vector theta = to_vector(p);
    constexpr std::size_t kChunk = 16;
    const std::size_t chunks = (data.size() + kChunk - 1) / kChunk;
    parallel_chunks(chunks, [&](std::size_t c) {
        for (std::size_t i = c * kChunk; i < std::min(data.size(), (c + 1) * kChunk); ++i) {
            ProbeEngine eng(p, data.xs[i]);
            s.points[i] = sharpness_with_engine(eng, theta, data.ys[i], steps, with_gradient);
        }
    });
    for (const auto& ps : s.points) {
        s.mean_trace += ps.trace;
        s.mean_grad_norm_sq += ps.grad_norm_sq;
        s.max_trace = std::max(s.max_trace, ps.trace);
        s.max_grad_norm_sq = std::max(s.max_grad_norm_sq, ps.grad_norm_sq);
        s.max_identity_gap = std::max(s.max_identity_gap, std::abs(ps.trace - 2.0 * ps.grad_norm_sq));
        const double e = ps.output - ps.target;
        s.max_loss = std::max(s.max_loss, e * e);
    }
    s.mean_trace /= static_cast<double>(data.size());
    s.mean_grad_norm_sq /= static_cast<double>(data.size());
    return s;
}

double identity_tolerance(double trace) { return 1e-6 + 1e-5 * std::abs(trace); }

bool identity_holds(const SharpnessSummary& s) {
    for (const auto& pt : s.points)
        if (std::abs(pt.trace - 2.0 * pt.grad_norm_sq) > identity_tolerance(pt.trace)) return false;
    return !s.points.empty();
}

double fd_hessian_trace(const ConstructionParams& p, const Dataset& data, const FdSteps& steps) {
    return dataset_sharpness(p, data, steps, false).mean_trace;
}

namespace {

// Gradient of the dataset-mean loss.
Vector loss_gradient(const ConstructionParams& p, const Dataset& data) {
    Vector g = Vector::Zero(static_cast<Eigen::Index>(param_count(p)));
    for (std::size_t i = 0; i < data.size(); ++i) {
        ProbeEngine eng(p, data.xs[i]);
        g += (2.0 * (eng.output() - data.ys[i])) * eng.backprop();
    }
    return g / static_cast<double>(data.size());
}

}  // namespace

Estimate mean_stderr(const std::vector<double>& v) {
    Estimate e;
    const double n = static_cast<double>(v.size());
    for (double x : v) e.mean += x;
    e.mean /= n;
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - e.mean) * (x - e.mean);
        e.stderr_ = std::sqrt(ss / (n - 1.0) / n);
    }
    return e;
}

double fd_trace(const std::function<double(const Vector&)>& L, const Vector& theta, const FdSteps& steps) {
    const double L0 = L(theta);
    double trace = 0.0;
    Vector t = theta;
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
        const double h = steps.second_rel * std::max(1.0, std::abs(theta(k)));
        t(k) = theta(k) + h;
        const double lp = L(t);
        t(k) = theta(k) - h;
        const double lm = L(t);
        t(k) = theta(k);
        trace += (lp - 2.0 * L0 + lm) / (h * h);
    }
    return trace;
}

Estimate hutchinson(const std::function<Vector(const Vector&)>& grad, const Vector& theta, int probes,
                    std::uint64_t seed, double eps) {
    if (probes < 2) fail(ErrorKind::Input, "Hutchinson estimation needs at least 2 probes");
    std::vector<double> samples(static_cast<std::size_t>(probes));
    parallel_chunks(static_cast<std::size_t>(probes), [&](std::size_t i) {
        Rng rng(derive_seed(seed, {0x487574ULL, i}));
        std::bernoulli_distribution coin(0.5);
        Vector v(theta.size());
        for (Eigen::Index k = 0; k < v.size(); ++k) v(k) = coin(rng) ? 1.0 : -1.0;
        const Vector Hv = (grad(theta + eps * v) - grad(theta - eps * v)) / (2.0 * eps);
        samples[i] = v.dot(Hv);
    });
    return mean_stderr(samples);
}

Estimate hutchinson_trace(const ConstructionParams& p, const Dataset& data, int probes, std::uint64_t seed,
                          double eps) {
    if (data.size() == 0) fail(ErrorKind::Input, "empty dataset");
    return hutchinson(
        [&](const Vector& theta) {
            ConstructionParams q = p;
            from_vector(q, theta);
            return loss_gradient(q, data);
        },
        to_vector(p), probes, seed, eps);
}

Estimate mc_perturbed_loss(const ConstructionParams& p, const Dataset& data, double sigma, int draws,
                           std::uint64_t seed) {
    if (sigma < 0.0) fail(ErrorKind::Input, "sigma must be nonnegative");
    if (draws < 1) fail(ErrorKind::Input, "need at least one draw");
    const Vector theta = to_vector(p);
    std::vector<double> samples(static_cast<std::size_t>(draws));
    parallel_chunks(static_cast<std::size_t>(draws), [&](std::size_t i) {
        Rng rng(derive_seed(seed, {0x4d43ULL, i}));
        std::normal_distribution<double> g(0.0, 1.0);
        Vector e(theta.size());
        for (Eigen::Index k = 0; k < e.size(); ++k) e(k) = sigma * g(rng);
        ConstructionParams q = p;
        from_vector(q, theta + e);
        samples[i] = dataset_loss(q, data);
    });
    return mean_stderr(samples);
}

ConstructionParams perturb_params(const ConstructionParams& p, const Dataset& data, double sigma, std::uint64_t seed) {
    const Vector theta = to_vector(p);
    if (sigma == 0.0) return p;
    for (std::uint64_t attempt = 0; attempt < 64; ++attempt) {
        Rng rng(derive_seed(seed, {0x5045ULL, attempt}));
        std::normal_distribution<double> g(0.0, 1.0);
        Vector z(theta.size());
        for (Eigen::Index k = 0; k < z.size(); ++k) z(k) = g(rng);
        ConstructionParams q = p;
        from_vector(q, theta + sigma * z);
        bool near_kink = false;
        for (std::size_t i = 0; i < data.size() && !near_kink; ++i) {
            ProbeEngine eng(q, data.xs[i]);
            near_kink = (eng.trace().Pre.array().abs() < 1e-9).any();
        }
        if (!near_kink) return q;
    }
    fail(ErrorKind::Verification, "could not draw a perturbation away from MLP kinks");
}

double perturbed_fd_trace(const ConstructionParams& p, const Dataset& data, double sigma, std::uint64_t seed,
                          const FdSteps& steps) {
    return fd_hessian_trace(perturb_params(p, data, sigma, seed), data, steps);
}

}  // namespace specflat
