// specflat: command-line front end for every workflow of the library.
//
// Exit codes: 0 success, 1 input error, 2 verification/optimization failure,
// 3 resource limit.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "specflat/bounds.hpp"
#include "specflat/construction.hpp"
#include "specflat/cot.hpp"
#include "specflat/derivatives.hpp"
#include "specflat/fourier.hpp"
#include "specflat/io.hpp"
#include "specflat/perturbation.hpp"
#include "specflat/property_testing.hpp"

using namespace specflat;
namespace fs = std::filesystem;

namespace {

struct Globals {
    unsigned threads = 0;
    std::uint64_t seed = 0;
};

// Collects what a subcommand produced and writes the manifest next to it.
class Run {
public:
    Run(std::string name, const CLI::App& sub, const Globals& g) : start_(std::chrono::steady_clock::now()) {
        m_.subcommand = std::move(name);
        for (const CLI::Option* opt : sub.get_options()) {
            if (opt->get_name() == "--help" || opt->get_name() == "-h") continue;
            if (opt->count() == 0) continue;
            const auto res = opt->results();
            m_.args[opt->get_name()] = res.size() == 1 ? Json(res.front()) : Json(res);
        }
        m_.args["--seed"] = g.seed;
        m_.args["--threads"] = g.threads;
        m_.seeds["master"] = g.seed;
    }

    void seed(const std::string& name, std::uint64_t v) { m_.seeds[name] = v; }

    /// Writes text to `out` (stdout when empty) and records the artifact.
    void emit(const std::string& out, const std::string& text) {
        if (out.empty() || out == "-") {
            std::cout << text;
            return;
        }
        write_text_file(out, text);
        m_.artifacts.emplace_back(out);
        if (manifest_path_.empty()) manifest_path_ = fs::path(out).string() + ".manifest.json";
    }
    void emit_json(const std::string& out, const Json& j) { emit(out, j.dump(2) + "\n"); }

    /// Records a file written by other means.
    void artifact(const fs::path& path) {
        m_.artifacts.push_back(path);
        if (manifest_path_.empty()) manifest_path_ = path.string() + ".manifest.json";
    }

    /// Records a directory artifact; the manifest goes inside it.
    void artifact_dir(const fs::path& dir) {
        m_.artifacts.push_back(dir);
        manifest_path_ = (dir / "run_manifest.json").string();
    }

    ~Run() {
        if (manifest_path_.empty()) return;
        m_.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        try {
            m_.write(manifest_path_);
        } catch (const std::exception& e) {
            std::cerr << "warning: could not write manifest: " << e.what() << "\n";
        }
    }

private:
    RunManifest m_;
    std::string manifest_path_;
    std::chrono::steady_clock::time_point start_;
};

std::string csv_num(double v) { return CsvWriter::num(v); }

BitString parse_bits(const std::string& s, int T) {
    BitString x;
    for (char c : s) {
        if (c != '0' && c != '1') fail(ErrorKind::Input, "bit strings may contain only 0 and 1");
        x.push_back(static_cast<std::uint8_t>(c - '0'));
    }
    if (static_cast<int>(x.size()) != T) fail(ErrorKind::Input, "bit string length must equal T");
    return x;
}

std::string bits_string(const BitString& x) {
    std::string s;
    for (auto b : x) s.push_back(static_cast<char>('0' + b));
    return s;
}

Json breakdown_json(const BoundBreakdown& b, BoundVariant v) {
    Json j;
    j["variant"] = to_string(v);
    j["sigma"] = b.sigma;
    j["sharpness_term"] = b.sharpness_term;
    j["norm_term"] = b.norm_term;
    j["total"] = b.total;
    j["no_flip_ok"] = b.no_flip_ok;
    j["components"] = b.components;
    return j;
}

std::vector<double> read_numbers(const std::string& path) {
    std::string text = read_text_file(path);
    for (char& c : text)
        if (c == ',' || c == ';') c = ' ';
    std::istringstream ss(text);
    std::vector<double> v;
    std::string tok;
    while (ss >> tok) {
        try {
            std::size_t used = 0;
            const double x = std::stod(tok, &used);
            if (used != tok.size()) throw std::invalid_argument(tok);
            v.push_back(x);
        } catch (const std::exception&) {
            if (v.empty()) continue;  // tolerate a header line
            fail(ErrorKind::Input, "non-numeric token '" + tok + "' in " + path);
        }
    }
    return v;
}

PerturbationStudyConfig study_from_json(const Json& j, std::uint64_t fallback_seed) {
    PerturbationStudyConfig c;
    c.master_seed = fallback_seed;
    try {
        if (j.contains("sigma_mesh")) c.sigma_mesh = j.at("sigma_mesh").get<std::vector<double>>();
        if (j.contains("omega_list")) c.omega_list = j.at("omega_list").get<std::vector<int>>();
        if (j.contains("degree_list")) c.degree_list = j.at("degree_list").get<std::vector<int>>();
        if (j.contains("t_list")) c.t_list = j.at("t_list").get<std::vector<int>>();
        if (j.contains("n_functions")) c.n_functions = j.at("n_functions").get<int>();
        if (j.contains("n_draws")) c.n_draws = j.at("n_draws").get<int>();
        if (j.contains("percentile")) c.percentile = j.at("percentile").get<double>();
        if (j.contains("dataset_size")) c.dataset_size = j.at("dataset_size").get<std::size_t>();
        if (j.contains("master_seed")) c.master_seed = j.at("master_seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Input, std::string("bad study config: ") + e.what());
    }
    c.validate();
    return c;
}

// Shared loaders for subcommands that accept either a spectrum or a parameter directory.
ConstructionParams params_from(const std::string& spectrum, const std::string& params_dir, const std::string& mode,
                               const std::string& projection, double eps_p, int d, std::uint64_t seed) {
    if (!params_dir.empty()) return load_params(params_dir);
    if (spectrum.empty()) fail(ErrorKind::Input, "either --spectrum or --params is required");
    ConstructionConfig cfg;
    cfg.mode = parse_mode(mode);
    cfg.projection = parse_projection(projection);
    cfg.eps_p = eps_p;
    cfg.d = d;
    cfg.seed = seed;
    return build(load_spectrum(spectrum), cfg);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"specflat: sparse Boolean functions, exact transformer constructions and flatness bounds"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--threads", g.threads, "worker threads (default: logical cores)");
    app.add_option("--seed", g.seed, "master seed; all randomness derives from it");

    // gen-fn ---------------------------------------------------------------
    auto* gen = app.add_subcommand("gen-fn", "sample a random constant-degree sparse spectrum");
    int gen_t = 20, gen_deg = 2, gen_omega = 10;
    bool gen_signed = false;
    std::string gen_out;
    gen->add_option("--t", gen_t, "number of input bits")->required();
    gen->add_option("--degree", gen_deg, "degree of every component")->required();
    gen->add_option("--omega", gen_omega, "number of components")->required();
    gen->add_flag("--signed", gen_signed, "signed instead of positive coefficients");
    gen->add_option("--out", gen_out, "output JSON (default stdout)");

    // fwht -----------------------------------------------------------------
    auto* fw = app.add_subcommand("fwht", "Walsh-Hadamard transform of a spectrum or dense table");
    std::string fw_spec, fw_table, fw_out, fw_table_out;
    double fw_tol = 1e-12;
    fw->add_option("--spectrum", fw_spec, "spectrum JSON");
    fw->add_option("--table", fw_table, "dense table binary");
    fw->add_option("--out", fw_out, "CSV of nonzero Walsh coefficients (default stdout)");
    fw->add_option("--table-out", fw_table_out, "also write the dense value table");
    fw->add_option("--tol", fw_tol, "drop coefficients with |w| <= tol");

    // build ----------------------------------------------------------------
    auto* bd = app.add_subcommand("build", "build the exact construction for a spectrum");
    std::string bd_spec, bd_mode = "idealized", bd_proj = "onehot", bd_out;
    double bd_eps = 0.5;
    int bd_d = 0;
    bd->add_option("--spectrum", bd_spec, "spectrum JSON")->required();
    bd->add_option("--mode", bd_mode, "idealized|softmax");
    bd->add_option("--projection", bd_proj, "onehot|jll");
    bd->add_option("--eps-p", bd_eps, "JLL distortion");
    bd->add_option("--d", bd_d, "hidden width minus one (0 = automatic)");
    bd->add_option("--out", bd_out, "output directory")->required();

    // verify ---------------------------------------------------------------
    auto* vf = app.add_subcommand("verify", "compare the forward pass with the spectrum");
    std::string vf_spec, vf_params, vf_mode = "idealized", vf_proj = "onehot", vf_out;
    bool vf_exh = false;
    std::size_t vf_samples = 1024;
    double vf_tol = -1.0, vf_eps = 0.5;
    int vf_d = 0;
    vf->add_option("--spectrum", vf_spec, "spectrum JSON");
    vf->add_option("--params", vf_params, "parameter directory (overrides --spectrum)");
    vf->add_option("--mode", vf_mode, "idealized|softmax");
    vf->add_option("--projection", vf_proj, "onehot|jll");
    vf->add_option("--eps-p", vf_eps, "JLL distortion");
    vf->add_option("--d", vf_d, "hidden width minus one (0 = automatic)");
    vf->add_flag("--exhaustive", vf_exh, "all 2^T inputs");
    vf->add_option("--samples", vf_samples, "random inputs when not exhaustive");
    vf->add_option("--tol", vf_tol, "failure threshold (default 1e-9 idealized, none for softmax)");
    vf->add_option("--out", vf_out, "output JSON (default stdout)");

    // grad-check -----------------------------------------------------------
    auto* gc = app.add_subcommand("grad-check", "analytic gradient versus central differences");
    std::string gc_spec, gc_x, gc_out;
    int gc_points = 1;
    double gc_tol = 1e-4;
    gc->add_option("--spectrum", gc_spec, "spectrum JSON")->required();
    gc->add_option("--x", gc_x, "input bit string (default: random)");
    gc->add_option("--points", gc_points, "random inputs when --x is absent");
    gc->add_option("--tol", gc_tol, "relative error threshold");
    gc->add_option("--out", gc_out, "output JSON (default stdout)");

    // sharpness ------------------------------------------------------------
    auto* sh = app.add_subcommand("sharpness", "Hessian trace, gradient norm and dominance checks");
    std::string sh_spec, sh_theta, sh_dataset, sh_out, sh_csv;
    int sh_probes = 0, sh_draws = 64, sh_trace_draws = 1;
    std::vector<double> sh_mesh;
    sh->add_option("--theta", sh_theta, "parameter directory written by build");
    sh->add_option("--spectrum", sh_spec, "spectrum JSON (built in idealized mode when --theta is absent)");
    sh->add_option("--dataset", sh_dataset, "exhaustive | sample:N (default: exhaustive for T <= 12, else 2^min(T,13) samples)");
    sh->add_option("--sigma-mesh", sh_mesh, "perturbation scales for perturbed traces and expected losses")->delimiter(',');
    sh->add_option("--draws", sh_draws, "Monte-Carlo draws per scale for the expected loss");
    sh->add_option("--trace-draws", sh_trace_draws, "perturbations per scale for the perturbed trace");
    sh->add_option("--hutchinson", sh_probes, "also estimate the trace with this many probes");
    sh->add_option("--out", sh_out, "report JSON (default stdout)");
    sh->add_option("--csv", sh_csv, "flat CSV sigma,trace,stderr (default <out>.csv when --out is given)");

    // norms ----------------------------------------------------------------
    auto* nm = app.add_subcommand("norms", "per-block squared Frobenius norms");
    std::string nm_spec, nm_params, nm_out;
    nm->add_option("--spectrum", nm_spec, "spectrum JSON");
    nm->add_option("--params", nm_params, "parameter directory (overrides --spectrum)");
    nm->add_option("--out", nm_out, "output JSON (default stdout)");

    // perturb-study --------------------------------------------------------
    auto* ps = app.add_subcommand("perturb-study", "empirical sharpness perturbation table");
    std::string ps_cfg, ps_out;
    ps->add_option("--config", ps_cfg, "study JSON (fields of the study config; defaults otherwise)");
    ps->add_option("--out", ps_out, "output CSV")->required();

    // bound / sweep-bound shared options -----------------------------------
    struct BoundOpts {
        double omega = 10, degree = 2, t = 20, m = 1e6, big_sigma = 0.01, delta = 0.05, sigma = -1, d = 0;
        std::string variant = "truncated", optimize = "continuous", pemp, coef = "half", out;
        bool use_max = false;
    };
    auto add_bound_opts = [](CLI::App* s, BoundOpts& o) {
        s->add_option("--t", o.t, "input length T");
        s->add_option("--m", o.m, "sample size");
        s->add_option("--big-sigma,--sigma-big", o.big_sigma, "sub-Gaussian constant of the loss");
        s->add_option("--delta", o.delta, "confidence parameter");
        s->add_option("--d", o.d, "width d (0 = T+1)");
        s->add_option("--variant", o.variant, "truncated|semi|analytic");
        s->add_option("--optimize", o.optimize, "mesh|continuous");
        s->add_option("--pemp", o.pemp, "perturbation table CSV (semi variant)");
        s->add_flag("--pemp-max", o.use_max, "use the max column of the table instead of the percentile");
        s->add_option("--coef", o.coef, "half|full sharpness coefficient");
        s->add_option("--out", o.out, "output file (default stdout)");
    };
    auto* bo = app.add_subcommand("bound", "PAC-Bayes generalization bound for the construction");
    BoundOpts bopt;
    std::string bo_csv;
    add_bound_opts(bo, bopt);
    bo->add_option("--csv", bo_csv, "CSV row output (default <out>.csv when --out is given)");
    bo->add_option("--omega", bopt.omega, "sparsity");
    bo->add_option("--degree", bopt.degree, "degree");
    bo->add_option("--sigma", bopt.sigma, "fixed posterior scale (skips optimization)");

    auto* sw = app.add_subcommand("sweep-bound", "bound over a (degree x sparsity) grid, long-format CSV");
    BoundOpts swopt;
    std::vector<int> sw_degrees = {1, 2, 3, 4, 5}, sw_omegas = {1, 5, 10, 15, 20};
    bool sw_min_m = false;
    add_bound_opts(sw, swopt);
    sw->add_option("--degrees", sw_degrees, "degrees")->delimiter(',');
    sw->add_option("--omegas", sw_omegas, "sparsities")->delimiter(',');
    sw->add_flag("--min-m", sw_min_m, "also search the smallest m with total < 1");

    // cot-compare ----------------------------------------------------------
    auto* cc = app.add_subcommand("cot-compare", "chain-of-thought versus one-pass Parity bounds");
    std::vector<int> cc_t = {2, 4, 8, 16};
    double cc_m = 8192, cc_sigma = 1e-4, cc_big = 0.01, cc_noise = 0.0;
    int cc_trials = 0;
    std::string cc_variant = "truncated", cc_pemp, cc_out;
    cc->add_option("--t-list", cc_t, "lengths")->delimiter(',');
    cc->add_option("--m", cc_m, "sample size");
    cc->add_option("--sigma", cc_sigma, "posterior scale");
    cc->add_option("--big-sigma,--sigma-big", cc_big, "sub-Gaussian constant");
    cc->add_option("--variant", cc_variant, "truncated|semi|analytic");
    cc->add_option("--pemp", cc_pemp, "perturbation table CSV (semi variant)");
    cc->add_option("--simulate", cc_trials, "also simulate the construction with this many trials per T");
    cc->add_option("--noise", cc_noise, "per-step output noise std for the simulation");
    cc->add_option("--out", cc_out, "output CSV (default stdout)");

    // edelman-compare ------------------------------------------------------
    auto* ed = app.add_subcommand("edelman-compare", "norm-based covering bound versus the PAC-Bayes bound");
    double ed_omega = 10, ed_deg = 2, ed_t = 20, ed_d = 0, ed_big = 0.01, ed_delta = 0.05;
    std::vector<double> ed_m = {8192, 1e6};
    std::string ed_out;
    ed->add_option("--omega", ed_omega, "sparsity");
    ed->add_option("--degree", ed_deg, "degree");
    ed->add_option("--t", ed_t, "input length");
    ed->add_option("--d", ed_d, "width d (0 = T+1)");
    ed->add_option("--m", ed_m, "sample sizes")->delimiter(',');
    ed->add_option("--big-sigma,--sigma-big", ed_big, "sub-Gaussian constant");
    ed->add_option("--delta", ed_delta, "confidence parameter");
    ed->add_option("--out", ed_out, "output CSV (default stdout)");

    // test-degree / test-sparsity -----------------------------------------
    struct TesterOpts {
        std::string spectrum, out;
        int max = 8, k = 12;
        double eps = 1e-3, delta = 1e-4;
    };
    TesterOpts td, ts;
    ts.max = 20;
    ts.delta = 1e-3;
    auto* tdc = app.add_subcommand("test-degree", "first accepted degree level of a black-box function");
    tdc->add_option("--spectrum", td.spectrum, "spectrum JSON")->required();
    tdc->add_option("--max", td.max, "largest level to test");
    tdc->add_option("--eps", td.eps, "proximity parameter");
    tdc->add_option("--delta", td.delta, "confidence parameter");
    tdc->add_option("--out", td.out, "output CSV (default stdout)");
    auto* tsc = app.add_subcommand("test-sparsity", "first accepted sparsity level of a black-box function");
    tsc->add_option("--spectrum", ts.spectrum, "spectrum JSON")->required();
    tsc->add_option("--max", ts.max, "largest level to test");
    tsc->add_option("--eps", ts.eps, "proximity parameter");
    tsc->add_option("--delta", ts.delta, "confidence parameter");
    tsc->add_option("--k", ts.k, "restriction size");
    tsc->add_option("--out", ts.out, "output CSV (default stdout)");

    // fit-subgaussian ------------------------------------------------------
    auto* fs_cmd = app.add_subcommand("fit-subgaussian", "smallest sub-Gaussian constant of a loss sample");
    std::string fs_losses, fs_out;
    int fs_nt = 40;
    double fs_tmax = 3.0;
    SubgaussianOptions fs_opt;
    fs_cmd->add_option("--losses", fs_losses, "file of loss values (whitespace or comma separated)")->required();
    fs_cmd->add_option("--n-t", fs_nt, "positive grid points of t");
    fs_cmd->add_option("--t-max", fs_tmax, "largest |t| in units of 1/sd");
    fs_cmd->add_option("--grid-start", fs_opt.grid_start, "smallest candidate constant");
    fs_cmd->add_option("--grid-ratio", fs_opt.grid_ratio, "geometric step between candidates");
    fs_cmd->add_option("--out", fs_out, "output JSON (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (g.threads > 0) set_thread_count(g.threads);

        if (*gen) {
            Run run("gen-fn", *gen, g);
            const auto f = sample_random_function(gen_t, gen_deg, gen_omega, g.seed, !gen_signed);
            run.emit_json(gen_out, spectrum_to_json(f));
        } else if (*fw) {
            Run run("fwht", *fw, g);
            DenseTable table;
            if (!fw_table.empty())
                table = read_dense_table(fw_table);
            else if (!fw_spec.empty())
                table = tabulate(load_spectrum(fw_spec));
            else
                fail(ErrorKind::Input, "either --spectrum or --table is required");
            if (!fw_table_out.empty()) {
                write_dense_table(fw_table_out, table);
                run.artifact(fw_table_out);
            }
            const auto w = walsh_transform(table);
            std::ostringstream csv;
            CsvWriter cw(csv);
            cw.header({"index", "subset", "walsh_coeff"});
            for (std::size_t s = 0; s < w.size(); ++s) {
                if (std::abs(w[s]) <= fw_tol) continue;
                std::string subset;
                for (int i : mask_subset(s)) subset += (subset.empty() ? "" : " ") + std::to_string(i);
                cw.row({std::to_string(s), subset, csv_num(w[s])});
            }
            run.emit(fw_out, csv.str());
        } else if (*bd) {
            Run run("build", *bd, g);
            const auto p = params_from(bd_spec, "", bd_mode, bd_proj, bd_eps, bd_d, g.seed);
            save_params(bd_out, p);
            run.artifact_dir(bd_out);
            std::cout << "built T=" << p.T << " d=" << p.d << " |Theta|=" << param_count(p) << " into " << bd_out
                      << "\n";
        } else if (*vf) {
            Run run("verify", *vf, g);
            const auto p = params_from(vf_spec, vf_params, vf_mode, vf_proj, vf_eps, vf_d, g.seed);
            if (p.cot_period > 0) fail(ErrorKind::Input, "verify expects a function construction");
            const Dataset data = make_dataset(p.spectrum, vf_exh ? 0 : vf_samples, derive_seed(g.seed, {1}));
            std::vector<double> err(data.size());
            parallel_chunks(data.size(), [&](std::size_t i) {
                err[i] = std::abs(forward(p, data.xs[i]).output - data.ys[i]);
            });
            double mx = 0.0, mean = 0.0;
            for (double e : err) {
                mx = std::max(mx, e);
                mean += e;
            }
            mean /= static_cast<double>(err.size());
            double tol = vf_tol;
            if (tol < 0.0) tol = p.config.mode == AttentionMode::Idealized ? 1e-9 : std::numeric_limits<double>::infinity();
            Json j{{"mode", to_string(p.config.mode)},
                   {"t", p.T},
                   {"points", data.size()},
                   {"exhaustive", vf_exh},
                   {"max_err", mx},
                   {"mean_err", mean},
                   {"tol", std::isfinite(tol) ? Json(tol) : Json(nullptr)},
                   {"ok", mx <= tol}};
            run.emit_json(vf_out, j);
            if (!(mx <= tol)) return exit_code_for(ErrorKind::Verification);
        } else if (*gc) {
            Run run("grad-check", *gc, g);
            const SparseSpectrum f = load_spectrum(gc_spec);
            const auto p = build(f);
            std::vector<BitString> xs;
            if (!gc_x.empty()) {
                xs.push_back(parse_bits(gc_x, f.T));
            } else {
                const Dataset d = make_dataset(f, static_cast<std::size_t>(std::max(1, gc_points)),
                                               derive_seed(g.seed, {2}));
                xs = d.xs;
            }
            Json points = Json::array();
            bool ok = true;
            for (const auto& x : xs) {
                const auto c = compare_gradients(p, x);
                Json blocks;
                for (const auto& [name, b] : c.blocks)
                    blocks[name] = {{"analytic_norm", b.analytic_norm}, {"fd_norm", b.fd_norm},
                                    {"rel_err", b.rel_err}, {"zero_block", b.zero}};
                const double worst = c.max_rel_err;
                const bool zero_ok = c.max_zero_block_fd <= 1e-6 && c.blocks.at("V1").fd_norm <= 1e-6 &&
                                     c.blocks.at("W1").fd_norm <= 1e-6;
                const bool pt_ok = worst <= gc_tol && zero_ok && !c.off_grid;
                ok = ok && pt_ok;
                points.push_back({{"x", bits_string(x)},
                                  {"max_rel_err", worst},
                                  {"v1_w1_zero", zero_ok},
                                  {"off_grid", c.off_grid},
                                  {"ok", pt_ok},
                                  {"blocks", blocks}});
            }
            run.emit_json(gc_out, {{"tol", gc_tol}, {"ok", ok}, {"points", points}});
            if (!ok) return exit_code_for(ErrorKind::Verification);
        } else if (*sh) {
            Run run("sharpness", *sh, g);
            const auto p = params_from(sh_spec, sh_theta, "idealized", "onehot", 0.5, 0, g.seed);
            const SparseSpectrum& f = p.spectrum;
            std::size_t samples = 0;
            if (sh_dataset.empty()) {
                samples = f.T <= 12 ? 0 : std::size_t{1} << std::min(f.T, 13);
            } else if (sh_dataset.rfind("sample:", 0) == 0) {
                samples = static_cast<std::size_t>(std::stoull(sh_dataset.substr(7)));
                if (samples == 0) fail(ErrorKind::Input, "sample:N needs N >= 1");
            } else if (sh_dataset != "exhaustive") {
                fail(ErrorKind::Input, "--dataset must be 'exhaustive' or 'sample:N'");
            }
            const std::uint64_t data_seed = derive_seed(g.seed, {3});
            run.seed("dataset", data_seed);
            const Dataset data = make_dataset(f, samples, data_seed);
            const auto s = dataset_sharpness(p, data);
            const double G = g_u(f.sparsity(), f.degree()), L = l_norm(f.sparsity(), f.degree(), f.T);
            const double norm_sq = frobenius_report(p).total;
            const bool identity = identity_holds(s);
            const bool dominance = s.max_trace <= 2.0 * G && s.max_grad_norm_sq <= G;
            const bool norm_ok = norm_sq <= L;
            Json j{{"t", f.T},
                   {"omega", f.sparsity()},
                   {"degree", f.degree()},
                   {"points", data.size()},
                   {"dataset", samples == 0 ? std::string("exhaustive") : "sample:" + std::to_string(samples)},
                   {"hessian_trace", s.mean_trace},
                   {"grad_norm_sq", s.mean_grad_norm_sq},
                   {"max_trace", s.max_trace},
                   {"max_grad_norm_sq", s.max_grad_norm_sq},
                   {"max_identity_gap", s.max_identity_gap},
                   {"max_loss", s.max_loss},
                   {"g_u", G},
                   {"two_g_u", 2.0 * G},
                   {"param_norm_sq", norm_sq},
                   {"l_norm", L},
                   {"identity_ok", identity},
                   {"dominance_ok", dominance},
                   {"norm_ok", norm_ok}};
            if (sh_probes > 0) {
                const auto h = hutchinson_trace(p, data, sh_probes, derive_seed(g.seed, {4}));
                j["hutchinson"] = {{"mean", h.mean}, {"stderr", h.stderr_}, {"probes", sh_probes}};
            }
            if (sh_trace_draws < 1) fail(ErrorKind::Input, "--trace-draws must be >= 1");
            std::ostringstream csv;
            CsvWriter cw(csv);
            cw.header({"sigma", "trace", "stderr"});
            Json perturbed = Json::array(), mc = Json::array();
            for (std::size_t i = 0; i < sh_mesh.size(); ++i) {
                const double sg = sh_mesh[i];
                if (!(sg >= 0.0)) fail(ErrorKind::Input, "sigma values must be nonnegative");
                std::vector<double> traces;
                for (int k = 0; k < sh_trace_draws; ++k)
                    traces.push_back(perturbed_fd_trace(p, data, sg, derive_seed(g.seed, {6, i, static_cast<std::uint64_t>(k)})));
                const Estimate pt = traces.size() > 1 ? mean_stderr(traces) : Estimate{traces.front(), 0.0};
                perturbed.push_back({{"sigma", sg}, {"trace", pt.mean}, {"stderr", pt.stderr_}});
                cw.row({csv_num(sg), csv_num(pt.mean), csv_num(pt.stderr_)});
                if (sg > 0.0) {
                    const auto e = mc_perturbed_loss(p, data, sg, sh_draws, derive_seed(g.seed, {5, i}));
                    mc.push_back({{"sigma", sg},
                                  {"mean_loss", e.mean},
                                  {"stderr", e.stderr_},
                                  {"implied_trace", 2.0 * e.mean / (sg * sg)}});
                }
            }
            j["perturbed_trace"] = perturbed;
            j["mc_expected_loss"] = mc;
            run.emit_json(sh_out, j);
            const std::string csv_path = !sh_csv.empty() ? sh_csv : (sh_out.empty() || sh_out == "-" ? "" : sh_out + ".csv");
            if (!csv_path.empty()) run.emit(csv_path, csv.str());
            if (!(identity && dominance && norm_ok)) return exit_code_for(ErrorKind::Verification);
        } else if (*nm) {
            Run run("norms", *nm, g);
            const auto p = params_from(nm_spec, nm_params, "idealized", "onehot", 0.5, 0, g.seed);
            const auto r = frobenius_report(p);
            Json j{{"F", r.F},   {"Gamma", r.Gamma}, {"M", r.M},         {"V1", r.V1},
                   {"W1", r.W1}, {"W2", r.W2},       {"V2", r.V2},       {"total", r.total},
                   {"param_count", param_count(p)}};
            if (p.cot_period == 0) j["l_norm"] = l_norm(p.omega, p.degree, p.T);
            run.emit_json(nm_out, j);
        } else if (*ps) {
            Run run("perturb-study", *ps, g);
            const auto cfg = study_from_json(ps_cfg.empty() ? Json::object() : load_json(ps_cfg), g.seed);
            run.seed("study", cfg.master_seed);
            const auto table = run_study(cfg);
            for (const auto& s : table.skipped) std::cerr << "note: " << s << "\n";
            std::ostringstream csv;
            write_pemp_csv(table, csv);
            run.emit(ps_out, csv.str());
        } else if (*bo || *sw) {
            const bool is_sweep = sw->parsed();
            BoundOpts& o = is_sweep ? swopt : bopt;
            Run run(is_sweep ? "sweep-bound" : "bound", is_sweep ? *sw : *bo, g);
            const BoundVariant var = parse_variant(o.variant);
            const OptimizeMethod meth = parse_optimize(o.optimize);
            if (o.coef != "half" && o.coef != "full") fail(ErrorKind::Input, "--coef must be half or full");
            const auto coef = o.coef == "half" ? SharpnessCoefficient::Half : SharpnessCoefficient::Full;
            PEmpProvider provider;
            if (!o.pemp.empty()) {
                std::istringstream in(read_text_file(o.pemp));
                provider = read_pemp_csv(in).provider(o.use_max);
            }
            auto inputs = [&](double w, double D) {
                BoundInputs in;
                in.omega = w;
                in.degree = D;
                in.T = o.t;
                in.m = o.m;
                in.Sigma = o.big_sigma;
                in.delta = o.delta;
                in.d = o.d;
                return in;
            };
            const std::vector<std::string> csv_head = {"omega", "degree", "t", "m", "variant", "sigma",
                                                       "sharpness_term", "norm_term", "total", "no_flip_ok"};
            auto csv_row = [&](const BoundInputs& in, const BoundBreakdown& b) {
                return std::vector<std::string>{csv_num(in.omega),        csv_num(in.degree),
                                                csv_num(in.T),            csv_num(in.m),
                                                to_string(var),           csv_num(b.sigma),
                                                csv_num(b.sharpness_term), csv_num(b.norm_term),
                                                csv_num(b.total),         b.no_flip_ok ? "1" : "0"};
            };
            if (!is_sweep) {
                BoundInputs in = inputs(o.omega, o.degree);
                BoundBreakdown b;
                if (o.sigma > 0) {
                    in.sigma = o.sigma;
                    b = pac_bayes_gap(in, var, provider, coef);
                } else {
                    b = optimize_sigma(in, var, meth, default_sigma_mesh(), provider, coef);
                }
                Json j = breakdown_json(b, var);
                j["optimize"] = o.sigma > 0 ? "fixed" : o.optimize;
                j["sigma_star_truncated"] = sigma_star_truncated(in.omega, in.degree, in.T, in.m, in.Sigma);
                run.emit_json(o.out, j);
                const std::string csv_path =
                    !bo_csv.empty() ? bo_csv : (o.out.empty() || o.out == "-" ? "" : o.out + ".csv");
                if (!csv_path.empty()) {
                    std::ostringstream csv;
                    CsvWriter cw(csv);
                    cw.header(csv_head);
                    cw.row(csv_row(in, b));
                    run.emit(csv_path, csv.str());
                }
            } else {
                std::ostringstream csv;
                CsvWriter cw(csv);
                std::vector<std::string> head = csv_head;
                if (sw_min_m) head.push_back("min_nonvacuous_m");
                cw.header(head);
                for (int D : sw_degrees)
                    for (int w : sw_omegas) {
                        const BoundInputs in = inputs(w, D);
                        const auto b = optimize_sigma(in, var, meth, default_sigma_mesh(), provider, coef);
                        std::vector<std::string> row = csv_row(in, b);
                        if (sw_min_m) row.push_back(csv_num(min_nonvacuous_m(in, var, 1.0, provider)));
                        cw.row(row);
                    }
                run.emit(o.out, csv.str());
            }
        } else if (*cc) {
            Run run("cot-compare", *cc, g);
            CotBoundInputs base;
            base.m = cc_m;
            base.sigma = cc_sigma;
            base.Sigma = cc_big;
            base.variant = parse_variant(cc_variant);
            if (!cc_pemp.empty()) {
                std::istringstream in(read_text_file(cc_pemp));
                base.p_emp = read_pemp_csv(in).provider();
            }
            const auto rep = verify_separation(base, cc_t);
            std::ostringstream csv;
            CsvWriter cw(csv);
            std::vector<std::string> head = {"T", "b_cot", "b_op", "ratio", "separation_ok", "log_b_cot", "log_b_op",
                                             "premise_gu", "premise_l", "no_flip_ok"};
            if (cc_trials > 0) {
                head.insert(head.end(), {"sim_error_rate", "sim_stderr", "union_bound"});
            }
            cw.header(head);
            for (const auto& r : rep.rows) {
                std::vector<std::string> row = {csv_num(r.T),
                                                csv_num(std::exp(r.log_b_cot)),
                                                csv_num(std::exp(r.log_b_op)),
                                                csv_num(std::exp(r.log_b_op - r.log_b_cot)),
                                                r.holds ? "1" : "0",
                                                csv_num(r.log_b_cot),
                                                csv_num(r.log_b_op),
                                                r.premise_gu ? "1" : "0",
                                                r.premise_l ? "1" : "0",
                                                r.no_flip_ok ? "1" : "0"};
                if (cc_trials > 0) {
                    const auto s = cot_error_simulation(static_cast<int>(r.T), cc_trials, cc_noise,
                                                        derive_seed(g.seed, {6, static_cast<std::uint64_t>(r.T)}));
                    row.insert(row.end(), {csv_num(s.error_rate), csv_num(s.stderr_), csv_num(s.union_bound)});
                }
                cw.row(row);
            }
            run.emit(cc_out, csv.str());
            for (const auto& v : rep.violations) std::cerr << "violation: " << v << "\n";
            if (!rep.all_hold()) return exit_code_for(ErrorKind::Verification);
        } else if (*ed) {
            Run run("edelman-compare", *ed, g);
            const double d = ed_d > 0 ? ed_d : ed_t + 1.0;
            std::ostringstream csv;
            CsvWriter cw(csv);
            cw.header({"omega", "degree", "t", "d", "m", "c21", "edelman_gap", "pac_bayes_truncated"});
            for (double m : ed_m) {
                BoundInputs in;
                in.omega = ed_omega;
                in.degree = ed_deg;
                in.T = ed_t;
                in.d = d;
                in.m = m;
                in.Sigma = ed_big;
                in.delta = ed_delta;
                const auto b = optimize_sigma(in, BoundVariant::Truncated, OptimizeMethod::Continuous);
                cw.row({csv_num(ed_omega), csv_num(ed_deg), csv_num(ed_t), csv_num(d), csv_num(m),
                        csv_num(edelman_c21(ed_omega, ed_deg, ed_t, d)), csv_num(edelman_gap(ed_omega, ed_deg, ed_t, d, m)),
                        csv_num(b.total)});
            }
            run.emit(ed_out, csv.str());
        } else if (*tdc || *tsc) {
            const bool deg = tdc->parsed();
            TesterOpts& o = deg ? td : ts;
            Run run(deg ? "test-degree" : "test-sparsity", deg ? *tdc : *tsc, g);
            const SparseSpectrum f = load_spectrum(o.spectrum);
            FunctionOracle oracle = FunctionOracle::from_spectrum(f);
            const auto r = first_accept_sweep(oracle, o.max, o.eps, o.delta,
                                              deg ? TestKind::Degree : TestKind::Sparsity, g.seed, o.k);
            std::ostringstream csv;
            CsvWriter cw(csv);
            cw.header({"true_level", "accepted_level", "queries"});
            cw.row({std::to_string(deg ? f.degree() : f.sparsity()), r.level ? std::to_string(*r.level) : "",
                    std::to_string(r.queries)});
            run.emit(o.out, csv.str());
        } else if (*fs_cmd) {
            Run run("fit-subgaussian", *fs_cmd, g);
            const auto losses = read_numbers(fs_losses);
            const auto grid = default_t_grid(losses, fs_nt, fs_tmax);
            const double S = subgaussian_sigma(losses, grid, fs_opt);
            double mean = 0.0;
            for (double x : losses) mean += x;
            mean /= static_cast<double>(losses.size());
            run.emit_json(fs_out, {{"Sigma", S}, {"n", losses.size()}, {"mean", mean}, {"t_points", grid.size()}});
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
