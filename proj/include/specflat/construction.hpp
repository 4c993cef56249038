// Explicit two-layer attention + MLP transformer that represents a sparse,
// constant-degree function exactly, plus its forward pass.
//
// Layout (n = T+1 rows, hidden width p = d+1, K = 4(D_f+1) MLP units):
//   X  = Y J                  embedded input; Y row t = (one-hot of t, bit z_t)
//   A1 = softmax(X W1 X^T)    first attention (row = query position)
//   B  = A1 X V1              no residual after the first attention
//   G  = relu(B M + Gamma) F + Xpos   MLP with positional residual
//   phi = softmax(G W2^T g_n)  second attention, queried by the last row
//   out = phi . (G V2)
#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "specflat/fourier.hpp"

namespace specflat {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class AttentionMode {
    Idealized,  ///< support-masked softmax: exact 1/D_f and c_t/D weights at the construction
    Softmax,    ///< plain softmax over every position
};
enum class Projection { OneHot, RandomJLL };

std::string to_string(AttentionMode m);
std::string to_string(Projection p);
AttentionMode parse_mode(const std::string& s);

struct ConstructionConfig {
    AttentionMode mode = AttentionMode::Idealized;
    Projection projection = Projection::OneHot;
    double eps_p = 0.5;      ///< JLL distortion (RandomJLL only)
    int d = 0;               ///< 0 selects T+1 (OneHot) or the smallest valid JLL width
    std::uint64_t seed = 0;  ///< JLL projection seed
};

/// Parameter blocks in their canonical flattening order.
enum class Block { W1 = 0, V1, M, Gamma, F, W2, V2 };
constexpr int kBlockCount = 7;
const char* block_name(Block b);

struct ConstructionParams {
    int T = 0;       ///< number of input bits
    int d = 0;       ///< hidden width is d+1
    int degree = 0;  ///< D_f
    int omega = 0;   ///< number of components
    int cot_period = 0;  ///< > 0 for the cyclic chain-of-thought construction
    ConstructionConfig config;
    Matrix W1, V1, M, F, W2, J;
    Vector Gamma, V2;
    SparseSpectrum spectrum;

    int hidden() const { return d + 1; }
    int units() const { return static_cast<int>(Gamma.size()); }

    Matrix& block(Block b);
    const Matrix& block(Block b) const;
    Vector& vec_block(Block b);
    const Vector& vec_block(Block b) const;
};

/// Allowed key sets for the support-masked attention. Empty vectors mean "all".
struct AttentionMasks {
    std::vector<std::vector<int>> layer1;  ///< per query row; empty row = all keys
    std::vector<int> layer2;               ///< allowed rows for the output query; empty = all
};

struct ActivationTrace {
    Matrix X, Xpos;  ///< embedding and its positional part
    Matrix XV;       ///< X V1
    Matrix S1;       ///< first-layer logits
    Matrix attn1;    ///< first-layer attention weights
    Matrix AX;       ///< attn1 X
    Matrix B;        ///< post-attention activations
    Matrix Pre;      ///< MLP pre-activations
    Matrix H;        ///< MLP hidden activations
    Matrix G;        ///< post-MLP activations (with positional residual)
    Vector u;        ///< W2^T g_n
    Vector s2;       ///< second-layer logits
    Vector attn2;    ///< second-layer weights
    Vector v;        ///< G V2
    double output = 0.0;
};

ConstructionParams build(const SparseSpectrum& f, const ConstructionConfig& cfg = {});

/// Embedding (X, Xpos) and masks of the main construction for input x.
void embed_input(const ConstructionParams& p, const BitString& x, Matrix& X, Matrix& Xpos);
AttentionMasks construction_masks(const ConstructionParams& p, int rows);

/// Full forward pass over an arbitrary embedded sequence.
void forward_core(const ConstructionParams& p, const Matrix& X, const Matrix& Xpos, const AttentionMasks& masks,
                  ActivationTrace& out);

/// Softmax restricted to `allowed` (all entries when empty), with max-subtraction.
void masked_softmax(const double* logits, int n, const std::vector<int>& allowed, double* out);

struct ForwardResult {
    double output = 0.0;
    std::optional<ActivationTrace> trace;
};
ForwardResult forward(const ConstructionParams& p, const BitString& x, bool want_trace = false);

struct NormReport {
    double F = 0, Gamma = 0, M = 0, V1 = 0, W1 = 0, W2 = 0, V2 = 0, total = 0;
};
NormReport frobenius_report(const ConstructionParams& p);

/// Number of trainable entries (the projection J is fixed and excluded).
std::size_t param_count(const ConstructionParams& p);

/// Location of one flattened parameter.
struct ParamIndex {
    Block block;
    int row;
    int col;
};
/// Offset of each block in the flat vector (size kBlockCount + 1).
std::vector<std::size_t> block_offsets(const ConstructionParams& p);
ParamIndex param_index(const ConstructionParams& p, std::size_t k);
Vector to_vector(const ConstructionParams& p);
void from_vector(ConstructionParams& p, const Vector& theta);
double& param_ref(ConstructionParams& p, const ParamIndex& idx);
double param_value(const ConstructionParams& p, const ParamIndex& idx);

/// MLP target profile m(x) = (1 + sin(pi (D x + 1/2))) / 2.
double mlp_profile(double x, int degree);

/// Chain-of-thought construction for parity: context 2T, positional encodings
/// cyclic with period T, each step computes the XOR of the current bit and the
/// previous output.
ConstructionParams build_cot(int T, const ConstructionConfig& cfg = {});

struct CotRun {
    int final_bit = 0;
    std::vector<int> steps;       ///< rounded per-step outputs f_1..f_T
    std::vector<double> raw;      ///< unrounded per-step outputs
};
/// Runs T autoregressive steps; `perturb` (optional) maps each raw output before rounding.
CotRun run_cot_parity(const ConstructionParams& p, const BitString& x,
                      const std::function<double(double)>& perturb = {});
/// Embedding and masks of one chain-of-thought step for the given token sequence.
void embed_cot(const ConstructionParams& p, const BitString& seq, Matrix& X, Matrix& Xpos, AttentionMasks& masks);

/// Smallest JLL width satisfying d > 8 ln(T) / eps^2.
int jll_min_width(int T, double eps);

}  // namespace specflat
