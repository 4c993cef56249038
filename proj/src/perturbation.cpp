#include "specflat/perturbation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <tuple>

namespace specflat {

void PerturbationStudyConfig::validate() const {
    if (sigma_mesh.empty() || omega_list.empty() || degree_list.empty() || t_list.empty())
        fail(ErrorKind::Input, "perturbation study lists must be nonempty");
    if (!(percentile > 0.0 && percentile <= 100.0)) fail(ErrorKind::Input, "percentile must lie in (0, 100]");
    if (n_functions < 1 || n_draws < 1) fail(ErrorKind::Input, "n_functions and n_draws must be positive");
    for (double s : sigma_mesh)
        if (!(s >= 0.0)) fail(ErrorKind::Input, "sigma values must be nonnegative");
    if (!std::is_sorted(sigma_mesh.begin(), sigma_mesh.end()))
        fail(ErrorKind::Input, "sigma mesh must be sorted ascending");
}

double percentile(std::vector<double> v, double q) {
    if (v.empty()) fail(ErrorKind::Input, "percentile of an empty sample");
    std::sort(v.begin(), v.end());
    const double pos = q / 100.0 * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

PEmpTable run_study(const PerturbationStudyConfig& cfg) {
    cfg.validate();
    struct Cell {
        int omega, degree, t;
    };
    std::vector<Cell> cells;
    for (int t : cfg.t_list)
        for (int D : cfg.degree_list)
            for (int w : cfg.omega_list) cells.push_back({w, D, t});

    const std::size_t nf = static_cast<std::size_t>(cfg.n_functions), ns = cfg.sigma_mesh.size();
    // excess[task][sigma], task = cell * nf + function
    std::vector<std::vector<double>> excess(cells.size() * nf);
    std::vector<std::string> errors(cells.size() * nf);

    parallel_chunks(cells.size() * nf, [&](std::size_t task) {
        const std::size_t ci = task / nf, fi = task % nf;
        const Cell& c = cells[ci];
        try {
            const std::uint64_t seed = derive_seed(cfg.master_seed, {ci, fi});
            const SparseSpectrum f = sample_random_function(c.t, c.degree, c.omega, derive_seed(seed, {1}));
            const ConstructionParams p = build(f, {});
            const Dataset data = make_dataset(f, cfg.dataset_size, derive_seed(seed, {2}));
            const double base = fd_hessian_trace(p, data, cfg.steps);
            std::vector<double> row(ns, 0.0);
            for (std::size_t si = 0; si < ns; ++si) {
                const double s = cfg.sigma_mesh[si];
                if (s == 0.0) continue;
                double worst = 0.0;
                for (int k = 0; k < cfg.n_draws; ++k) {
                    const auto dseed = derive_seed(seed, {3, static_cast<std::uint64_t>(k)});
                    worst = std::max(worst, perturbed_fd_trace(p, data, s, dseed, cfg.steps) - base);
                }
                row[si] = worst;
            }
            excess[task] = std::move(row);
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::Input || e.kind() == ErrorKind::Unsupported || e.kind() == ErrorKind::Resource)
                errors[task] = e.what();
            else
                throw;
        }
    });

    PEmpTable table;
    for (std::size_t ci = 0; ci < cells.size(); ++ci) {
        const Cell& c = cells[ci];
        std::vector<std::size_t> ok;
        for (std::size_t fi = 0; fi < nf; ++fi)
            if (errors[ci * nf + fi].empty()) ok.push_back(ci * nf + fi);
        if (ok.empty()) {
            std::ostringstream msg;
            msg << "cell omega=" << c.omega << " degree=" << c.degree << " T=" << c.t
                << " skipped: " << errors[ci * nf];
            table.skipped.push_back(msg.str());
            continue;
        }
        for (std::size_t si = 0; si < ns; ++si) {
            std::vector<double> vals;
            for (std::size_t task : ok) vals.push_back(excess[task][si]);
            PEmpRow r;
            r.sigma = cfg.sigma_mesh[si];
            r.omega = c.omega;
            r.degree = c.degree;
            r.t = c.t;
            r.p90 = percentile(vals, cfg.percentile);
            r.pmax = *std::max_element(vals.begin(), vals.end());
            r.n = static_cast<int>(vals.size());
            table.rows.push_back(r);
        }
    }
    return table;
}

double PEmpTable::lookup(double sigma, int omega, int degree, int t, bool use_max) const {
    const PEmpRow* best = nullptr;
    bool cell_found = false;
    for (const auto& r : rows) {
        if (r.omega != omega || r.degree != degree || r.t != t) continue;
        cell_found = true;
        if (r.sigma >= sigma && (!best || r.sigma < best->sigma)) best = &r;
    }
    std::ostringstream key;
    key << "(omega=" << omega << ", degree=" << degree << ", T=" << t << ")";
    if (!cell_found) fail(ErrorKind::Lookup, "no perturbation table cell " + key.str());
    if (!best) fail(ErrorKind::Lookup, "sigma above the largest mesh value for cell " + key.str());
    return use_max ? best->pmax : best->p90;
}

PEmpProvider PEmpTable::provider(bool use_max) const {
    return [table = *this, use_max](double s, int w, int D, int T) { return table.lookup(s, w, D, T, use_max); };
}

void write_pemp_csv(const PEmpTable& table, std::ostream& out) {
    out << "sigma,omega,degree,t,p90,pmax,n\n" << std::setprecision(17);
    for (const auto& r : table.rows)
        out << r.sigma << ',' << r.omega << ',' << r.degree << ',' << r.t << ',' << r.p90 << ',' << r.pmax << ','
            << r.n << '\n';
}

PEmpTable read_pemp_csv(std::istream& in) {
    PEmpTable table;
    std::string line;
    if (!std::getline(in, line)) fail(ErrorKind::Input, "empty perturbation table");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "sigma,omega,degree,t,p90,pmax,n") fail(ErrorKind::Input, "unexpected perturbation table header");
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ss(line);
        PEmpRow r;
        if (!(ss >> r.sigma >> r.omega >> r.degree >> r.t >> r.p90 >> r.pmax >> r.n))
            fail(ErrorKind::Input, "malformed perturbation table row " + std::to_string(lineno));
        table.rows.push_back(r);
    }
    return table;
}

}  // namespace specflat
