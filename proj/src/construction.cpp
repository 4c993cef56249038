#include "specflat/construction.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace specflat {

std::string to_string(AttentionMode m) { return m == AttentionMode::Idealized ? "idealized" : "softmax"; }
std::string to_string(Projection p) { return p == Projection::OneHot ? "onehot" : "jll"; }

AttentionMode parse_mode(const std::string& s) {
    if (s == "idealized") return AttentionMode::Idealized;
    if (s == "softmax") return AttentionMode::Softmax;
    fail(ErrorKind::Input, "unknown attention mode '" + s + "' (expected idealized|softmax)");
}

const char* block_name(Block b) {
    switch (b) {
        case Block::W1: return "W1";
        case Block::V1: return "V1";
        case Block::M: return "M";
        case Block::Gamma: return "Gamma";
        case Block::F: return "F";
        case Block::W2: return "W2";
        case Block::V2: return "V2";
    }
    return "?";
}

Matrix& ConstructionParams::block(Block b) {
    switch (b) {
        case Block::W1: return W1;
        case Block::V1: return V1;
        case Block::M: return M;
        case Block::F: return F;
        case Block::W2: return W2;
        default: fail(ErrorKind::Input, "block is a vector");
    }
}
const Matrix& ConstructionParams::block(Block b) const { return const_cast<ConstructionParams*>(this)->block(b); }
Vector& ConstructionParams::vec_block(Block b) {
    if (b == Block::Gamma) return Gamma;
    if (b == Block::V2) return V2;
    fail(ErrorKind::Input, "block is a matrix");
}
const Vector& ConstructionParams::vec_block(Block b) const {
    return const_cast<ConstructionParams*>(this)->vec_block(b);
}

double mlp_profile(double x, int degree) {
    const double m = 0.5 * (1.0 + std::sin(std::numbers::pi * (degree * x + 0.5)));
    // Grid points evaluate to exactly 0 or 1 in exact arithmetic.
    if (std::abs(m) < 1e-12) return 0.0;
    if (std::abs(m - 1.0) < 1e-12) return 1.0;
    return m;
}

int jll_min_width(int T, double eps) {
    return static_cast<int>(std::floor(8.0 * std::log(static_cast<double>(T)) / (eps * eps))) + 1;
}

namespace {

// Random projection J: (T+2) x (d+1); Gaussian block on the positional part,
// the bit coordinate is carried through unchanged.
Matrix make_projection(int T, int d, const ConstructionConfig& cfg) {
    const int rows = T + 2;
    if (cfg.projection == Projection::OneHot) return Matrix::Identity(rows, rows);
    Matrix J = Matrix::Zero(rows, d + 1);
    Rng rng(derive_seed(cfg.seed, {0x4a4c4cULL, static_cast<std::uint64_t>(T), static_cast<std::uint64_t>(d)}));
    std::normal_distribution<double> g(0.0, 1.0);
    const double s = 1.0 / std::sqrt(static_cast<double>(d));
    for (int i = 0; i < T + 1; ++i)
        for (int j = 0; j < d; ++j) J(i, j) = g(rng) * s;
    J(T + 1, d) = 1.0;
    return J;
}

// Shared MLP blocks (pre-projection): M-bar, Gamma, F-bar for degree D.
// With odd_parity the memorized grid values are 1 - m(h_i) (XOR instead of XNOR).
void fill_mlp(int rows, int degree, Matrix& Mbar, Vector& Gamma, Matrix& Fbar, bool odd_parity = false) {
    const int K = 4 * (degree + 1);
    const double a = 1.0 / (4.0 * degree);
    Mbar = Matrix::Zero(rows, K);
    Mbar.row(rows - 1).setOnes();
    Gamma.resize(K);
    Fbar = Matrix::Zero(K, rows);
    const double sign[4] = {+1.0, -1.0, -1.0, +1.0};
    const double offset[4] = {-2.0 * a, -a, +a, +2.0 * a};
    for (int i = 0; i <= degree; ++i) {
        const double h = static_cast<double>(i) / degree;
        const double m = odd_parity ? 1.0 - mlp_profile(h, degree) : mlp_profile(h, degree);
        for (int q = 0; q < 4; ++q) {
            Gamma(4 * i + q) = -h + offset[q];
            Fbar(4 * i + q, rows - 1) = sign[q] * 4.0 * m * degree;
        }
    }
}

void project(ConstructionParams& p, const Matrix& W1bar, const Matrix& V1bar, const Matrix& Mbar, const Matrix& Fbar,
             const Matrix& W2bar, const Vector& V2bar) {
    const Matrix& J = p.J;
    if (p.config.projection == Projection::OneHot) {
        p.W1 = W1bar;
        p.V1 = V1bar;
        p.M = Mbar;
        p.F = Fbar;
        p.W2 = W2bar;
        p.V2 = V2bar;
        return;
    }
    p.W1 = J.transpose() * W1bar * J;
    p.V1 = J.transpose() * V1bar * J;
    p.M = J.transpose() * Mbar;
    p.F = Fbar * J;
    p.W2 = J.transpose() * W2bar * J;
    p.V2 = J.transpose() * V2bar;
}

void resolve_width(ConstructionParams& p, const ConstructionConfig& cfg) {
    if (cfg.projection == Projection::OneHot) {
        if (cfg.d != 0 && cfg.d != p.T + 1)
            fail(ErrorKind::Input, "one-hot projection requires d = T+1");
        p.d = p.T + 1;
        return;
    }
    if (!(cfg.eps_p > 0.0 && cfg.eps_p < 1.0)) fail(ErrorKind::Input, "JLL distortion must lie in (0, 1)");
    const int dmin = jll_min_width(p.T, cfg.eps_p);
    p.d = cfg.d == 0 ? dmin : cfg.d;
    if (p.d < dmin)
        fail(ErrorKind::Input, "JLL width d=" + std::to_string(p.d) + " must exceed 8 ln(T)/eps^2 (d >= " +
                                   std::to_string(dmin) + ")");
}

}  // namespace

ConstructionParams build(const SparseSpectrum& f, const ConstructionConfig& cfg) {
    f.validate();
    if (f.T < 2) fail(ErrorKind::Input, "construction needs T >= 2");
    const int omega = f.sparsity();
    if (omega < 1) fail(ErrorKind::Unsupported, "construction needs at least one component");
    if (omega > f.T) fail(ErrorKind::Input, "sparsity exceeds T");
    if (f.constant != 0.0) fail(ErrorKind::Unsupported, "construction does not represent a constant term");
    const int D = f.degree();
    for (const auto& c : f.components) {
        if (static_cast<int>(c.subset.size()) != D)
            fail(ErrorKind::Unsupported, "construction needs every component to have the same degree");
        if (!(c.coeff > 0.0)) fail(ErrorKind::Unsupported, "construction needs strictly positive coefficients");
    }

    ConstructionParams p;
    p.T = f.T;
    p.degree = D;
    p.omega = omega;
    p.config = cfg;
    p.spectrum = f;
    resolve_width(p, cfg);
    p.J = make_projection(p.T, p.d, cfg);

    const int rows = p.T + 2;   // one-hot positions 1..T+1 plus the bit coordinate
    const int out_pos = p.T;    // 0-based coordinate of position T+1
    const double lnT = std::log(static_cast<double>(p.T));

    Matrix W1bar = Matrix::Zero(rows, rows);
    double Dsum = 0.0;
    for (int i = 0; i < omega; ++i) {
        for (int j : f.components[static_cast<std::size_t>(i)].subset) W1bar(i, j - 1) = 2.0 * lnT;
        Dsum += f.components[static_cast<std::size_t>(i)].coeff;
    }
    Matrix V1bar = Matrix::Zero(rows, rows);
    V1bar(rows - 1, rows - 1) = 1.0;
    Matrix Mbar, Fbar;
    fill_mlp(rows, D, Mbar, p.Gamma, Fbar);
    Matrix W2bar = Matrix::Zero(rows, rows);
    for (int t = 0; t < omega; ++t)
        W2bar(out_pos, t) = std::log(f.components[static_cast<std::size_t>(t)].coeff * p.T * p.T);
    Vector V2bar = Vector::Zero(rows);
    V2bar(rows - 1) = Dsum;
    project(p, W1bar, V1bar, Mbar, Fbar, W2bar, V2bar);
    return p;
}

void embed_input(const ConstructionParams& p, const BitString& x, Matrix& X, Matrix& Xpos) {
    if (static_cast<int>(x.size()) != p.T)
        fail(ErrorKind::Input, "input length " + std::to_string(x.size()) + " != T=" + std::to_string(p.T));
    const int n = p.T + 1, rows = p.T + 2;
    Matrix Y = Matrix::Zero(n, rows);
    for (int t = 0; t < n; ++t) Y(t, t) = 1.0;
    Matrix Ypos = Y;
    for (int t = 0; t < p.T; ++t) Y(t, rows - 1) = x[static_cast<std::size_t>(t)] ? 1.0 : 0.0;
    if (p.config.projection == Projection::OneHot) {
        X = std::move(Y);
        Xpos = std::move(Ypos);
    } else {
        X = Y * p.J;
        Xpos = Ypos * p.J;
    }
}

AttentionMasks construction_masks(const ConstructionParams& p, int rows) {
    AttentionMasks m;
    if (p.config.mode == AttentionMode::Softmax) return m;
    m.layer1.assign(static_cast<std::size_t>(rows), {});
    for (int i = 0; i < p.omega; ++i)
        for (int j : p.spectrum.components[static_cast<std::size_t>(i)].subset) m.layer1[static_cast<std::size_t>(i)].push_back(j - 1);
    for (int t = 0; t < p.omega; ++t) m.layer2.push_back(t);
    return m;
}

void masked_softmax(const double* logits, int n, const std::vector<int>& allowed, double* out) {
    if (allowed.empty()) {
        double mx = logits[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, logits[j]);
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += (out[j] = std::exp(logits[j] - mx));
        const double inv = 1.0 / s;
        for (int j = 0; j < n; ++j) out[j] *= inv;
        return;
    }
    for (int j = 0; j < n; ++j) out[j] = 0.0;
    double mx = logits[allowed[0]];
    for (int j : allowed) mx = std::max(mx, logits[j]);
    double s = 0.0;
    for (int j : allowed) s += (out[j] = std::exp(logits[j] - mx));
    const double inv = 1.0 / s;
    for (int j : allowed) out[j] *= inv;
}

void forward_core(const ConstructionParams& p, const Matrix& X, const Matrix& Xpos, const AttentionMasks& masks,
                  ActivationTrace& tr) {
    const int n = static_cast<int>(X.rows());
    static const std::vector<int> kAll;
    tr.X = X;
    tr.Xpos = Xpos;
    tr.XV.noalias() = X * p.V1;
    tr.S1.noalias() = X * p.W1 * X.transpose();
    tr.attn1.resize(n, n);
    // Row-major scratch so each softmax row is contiguous.
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> S = tr.S1, A(n, n);
    for (int i = 0; i < n; ++i) {
        const auto& allowed = masks.layer1.empty() ? kAll : masks.layer1[static_cast<std::size_t>(i)];
        masked_softmax(S.row(i).data(), n, allowed, A.row(i).data());
    }
    tr.attn1 = A;
    tr.AX.noalias() = tr.attn1 * X;
    tr.B.noalias() = tr.attn1 * tr.XV;
    tr.Pre.noalias() = tr.B * p.M;
    tr.Pre.rowwise() += p.Gamma.transpose();
    tr.H = tr.Pre.cwiseMax(0.0);
    tr.G.noalias() = tr.H * p.F;
    tr.G += Xpos;
    tr.u.noalias() = p.W2.transpose() * tr.G.row(n - 1).transpose();
    tr.s2.noalias() = tr.G * tr.u;
    tr.attn2.resize(n);
    masked_softmax(tr.s2.data(), n, masks.layer2, tr.attn2.data());
    tr.v.noalias() = tr.G * p.V2;
    tr.output = tr.attn2.dot(tr.v);
}

ForwardResult forward(const ConstructionParams& p, const BitString& x, bool want_trace) {
    if (p.cot_period > 0) fail(ErrorKind::Input, "use run_cot_parity for the chain-of-thought construction");
    Matrix X, Xpos;
    embed_input(p, x, X, Xpos);
    ActivationTrace tr;
    forward_core(p, X, Xpos, construction_masks(p, p.T + 1), tr);
    ForwardResult r;
    r.output = tr.output;
    if (want_trace) r.trace = std::move(tr);
    return r;
}

NormReport frobenius_report(const ConstructionParams& p) {
    NormReport r;
    r.F = p.F.squaredNorm();
    r.Gamma = p.Gamma.squaredNorm();
    r.M = p.M.squaredNorm();
    r.V1 = p.V1.squaredNorm();
    r.W1 = p.W1.squaredNorm();
    r.W2 = p.W2.squaredNorm();
    r.V2 = p.V2.squaredNorm();
    r.total = r.F + r.Gamma + r.M + r.V1 + r.W1 + r.W2 + r.V2;
    return r;
}

std::vector<std::size_t> block_offsets(const ConstructionParams& p) {
    const auto hp = static_cast<std::size_t>(p.hidden());
    const auto K = static_cast<std::size_t>(p.units());
    const std::size_t sizes[kBlockCount] = {hp * hp, hp * hp, hp * K, K, K * hp, hp * hp, hp};
    std::vector<std::size_t> off(kBlockCount + 1, 0);
    for (int b = 0; b < kBlockCount; ++b) off[static_cast<std::size_t>(b) + 1] = off[static_cast<std::size_t>(b)] + sizes[b];
    return off;
}

std::size_t param_count(const ConstructionParams& p) { return block_offsets(p).back(); }

ParamIndex param_index(const ConstructionParams& p, std::size_t k) {
    const auto off = block_offsets(p);
    if (k >= off.back()) fail(ErrorKind::Input, "parameter index out of range");
    int b = 0;
    while (k >= off[static_cast<std::size_t>(b) + 1]) ++b;
    const auto local = static_cast<int>(k - off[static_cast<std::size_t>(b)]);
    const auto blk = static_cast<Block>(b);
    if (blk == Block::Gamma || blk == Block::V2) return {blk, local, 0};
    const int cols = static_cast<int>(p.block(blk).cols());
    return {blk, local / cols, local % cols};
}

double& param_ref(ConstructionParams& p, const ParamIndex& idx) {
    if (idx.block == Block::Gamma || idx.block == Block::V2) return p.vec_block(idx.block)(idx.row);
    return p.block(idx.block)(idx.row, idx.col);
}

double param_value(const ConstructionParams& p, const ParamIndex& idx) {
    return param_ref(const_cast<ConstructionParams&>(p), idx);
}

Vector to_vector(const ConstructionParams& p) {
    Vector theta(static_cast<Eigen::Index>(param_count(p)));
    Eigen::Index k = 0;
    for (int b = 0; b < kBlockCount; ++b) {
        const auto blk = static_cast<Block>(b);
        if (blk == Block::Gamma || blk == Block::V2) {
            const Vector& v = p.vec_block(blk);
            for (Eigen::Index i = 0; i < v.size(); ++i) theta(k++) = v(i);
        } else {
            const Matrix& m = p.block(blk);
            for (Eigen::Index i = 0; i < m.rows(); ++i)
                for (Eigen::Index j = 0; j < m.cols(); ++j) theta(k++) = m(i, j);
        }
    }
    return theta;
}

void from_vector(ConstructionParams& p, const Vector& theta) {
    if (static_cast<std::size_t>(theta.size()) != param_count(p))
        fail(ErrorKind::Input, "parameter vector has the wrong length");
    Eigen::Index k = 0;
    for (int b = 0; b < kBlockCount; ++b) {
        const auto blk = static_cast<Block>(b);
        if (blk == Block::Gamma || blk == Block::V2) {
            Vector& v = p.vec_block(blk);
            for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = theta(k++);
        } else {
            Matrix& m = p.block(blk);
            for (Eigen::Index i = 0; i < m.rows(); ++i)
                for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = theta(k++);
        }
    }
}

ConstructionParams build_cot(int T, const ConstructionConfig& cfg) {
    if (T < 2) fail(ErrorKind::Input, "chain-of-thought construction needs T >= 2");
    ConstructionParams p;
    p.T = T;
    p.degree = 2;
    p.omega = 1;
    p.cot_period = T;
    p.config = cfg;
    p.spectrum.T = 2 * T;
    p.spectrum.components.push_back({{1, T + 1}, 1.0});
    resolve_width(p, cfg);
    p.J = make_projection(T, p.d, cfg);

    const int rows = T + 2;
    const double lnT = std::log(static_cast<double>(T));
    // Every position attends to the positions sharing its (cyclic) encoding.
    Matrix W1bar = Matrix::Zero(rows, rows);
    for (int a = 0; a < T; ++a) W1bar(a, a) = 2.0 * lnT;
    Matrix V1bar = Matrix::Zero(rows, rows);
    V1bar(rows - 1, rows - 1) = 1.0;
    Matrix Mbar, Fbar;
    fill_mlp(rows, 2, Mbar, p.Gamma, Fbar, /*odd_parity=*/true);
    // The output query reads the positions sharing its encoding, coefficient 1.
    Matrix W2bar = Matrix::Zero(rows, rows);
    for (int a = 0; a < T; ++a) W2bar(a, a) = std::log(1.0 * T * T);
    Vector V2bar = Vector::Zero(rows);
    V2bar(rows - 1) = 1.0;
    project(p, W1bar, V1bar, Mbar, Fbar, W2bar, V2bar);
    return p;
}

void embed_cot(const ConstructionParams& p, const BitString& seq, Matrix& X, Matrix& Xpos, AttentionMasks& masks) {
    const int T = p.cot_period;
    const int n = static_cast<int>(seq.size());
    if (n < 1 || n > 2 * T) fail(ErrorKind::Input, "sequence exceeds the 2T context window");
    const int rows = T + 2;
    Matrix Y = Matrix::Zero(n, rows);
    for (int t = 0; t < n; ++t) Y(t, t % T) = 1.0;
    Matrix Ypos = Y;
    for (int t = 0; t < n; ++t) Y(t, rows - 1) = seq[static_cast<std::size_t>(t)] ? 1.0 : 0.0;
    if (p.config.projection == Projection::OneHot) {
        X = std::move(Y);
        Xpos = std::move(Ypos);
    } else {
        X = Y * p.J;
        Xpos = Ypos * p.J;
    }
    masks = {};
    if (p.config.mode == AttentionMode::Softmax) return;
    masks.layer1.assign(static_cast<std::size_t>(n), {});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i % T == j % T) masks.layer1[static_cast<std::size_t>(i)].push_back(j);
    for (int j = 0; j < n; ++j)
        if (j % T == (n - 1) % T) masks.layer2.push_back(j);
}

CotRun run_cot_parity(const ConstructionParams& p, const BitString& x, const std::function<double(double)>& perturb) {
    if (p.cot_period <= 0) fail(ErrorKind::Input, "parameters are not a chain-of-thought construction");
    const int T = p.cot_period;
    if (static_cast<int>(x.size()) != T) fail(ErrorKind::Input, "input length must equal T");
    BitString seq = x;
    seq.push_back(0);  // CLS token
    CotRun run;
    Matrix X, Xpos;
    AttentionMasks masks;
    ActivationTrace tr;
    for (int step = 1; step <= T; ++step) {
        embed_cot(p, seq, X, Xpos, masks);
        forward_core(p, X, Xpos, masks, tr);
        double y = tr.output;
        if (perturb) y = perturb(y);
        const int bit = y >= 0.5 ? 1 : 0;
        run.raw.push_back(y);
        run.steps.push_back(bit);
        if (step < T) seq.push_back(static_cast<std::uint8_t>(bit));
    }
    run.final_bit = run.steps.back();
    return run;
}

}  // namespace specflat
