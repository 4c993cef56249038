#include "specflat/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

namespace specflat {

namespace fs = std::filesystem;

namespace {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

constexpr std::array<char, 4> kDenseMagic = {'S', 'F', 'D', 'T'};

std::ofstream open_out(const fs::path& path, bool binary) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
    if (!out) fail(ErrorKind::Input, "cannot open '" + path.string() + "' for writing");
    return out;
}

std::ifstream open_in(const fs::path& path, bool binary) {
    std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
    if (!in) fail(ErrorKind::Input, "cannot open '" + path.string() + "'");
    return in;
}

void write_blob(const fs::path& path, const double* data, std::size_t n) {
    auto out = open_out(path, true);
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
    if (!out) fail(ErrorKind::Input, "failed writing '" + path.string() + "'");
}

void read_blob(const fs::path& path, double* data, std::size_t n) {
    auto in = open_in(path, true);
    in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(n * sizeof(double)) || in.peek() != EOF)
        fail(ErrorKind::Input, "blob '" + path.string() + "' has the wrong size");
}

template <class T>
T get(const Json& j, const char* key) {
    if (!j.contains(key)) fail(ErrorKind::Input, std::string("missing JSON field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Input, std::string("bad JSON field '") + key + "': " + e.what());
    }
}

}  // namespace

Json spectrum_to_json(const SparseSpectrum& f) {
    Json j;
    j["t"] = f.T;
    j["constant"] = f.constant;
    Json comps = Json::array();
    for (const auto& c : f.components) comps.push_back({{"subset", c.subset}, {"coeff", c.coeff}});
    j["components"] = comps;
    return j;
}

SparseSpectrum spectrum_from_json(const Json& j) {
    if (!j.is_object()) fail(ErrorKind::Input, "spectrum JSON must be an object");
    SparseSpectrum f;
    f.T = get<int>(j, "t");
    f.constant = j.contains("constant") ? get<double>(j, "constant") : 0.0;
    const Json& comps = j.contains("components") ? j.at("components") : Json::array();
    if (!comps.is_array()) fail(ErrorKind::Input, "'components' must be an array");
    for (const auto& c : comps) {
        Component comp;
        comp.subset = get<std::vector<int>>(c, "subset");
        comp.coeff = get<double>(c, "coeff");
        f.components.push_back(std::move(comp));
    }
    f.validate();
    return f;
}

std::string read_text_file(const fs::path& path) {
    auto in = open_in(path, false);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
    auto out = open_out(path, false);
    out << text;
    if (!out) fail(ErrorKind::Input, "failed writing '" + path.string() + "'");
}

Json load_json(const fs::path& path) {
    try {
        return Json::parse(read_text_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorKind::Input, "invalid JSON in '" + path.string() + "': " + e.what());
    }
}

void save_spectrum(const fs::path& path, const SparseSpectrum& f) {
    write_text_file(path, spectrum_to_json(f).dump(2) + "\n");
}

SparseSpectrum load_spectrum(const fs::path& path) { return spectrum_from_json(load_json(path)); }

void write_dense_table(const fs::path& path, const DenseTable& table) {
    if (table.T < 0 || table.T > 63 || table.values.size() != (std::size_t{1} << table.T))
        fail(ErrorKind::Input, "dense table size does not match 2^T");
    auto out = open_out(path, true);
    const auto T = static_cast<std::uint32_t>(table.T);
    out.write(kDenseMagic.data(), 4);
    out.write(reinterpret_cast<const char*>(&T), 4);
    out.write(reinterpret_cast<const char*>(table.values.data()),
              static_cast<std::streamsize>(table.values.size() * sizeof(double)));
    if (!out) fail(ErrorKind::Input, "failed writing '" + path.string() + "'");
}

DenseTable read_dense_table(const fs::path& path) {
    auto in = open_in(path, true);
    std::array<char, 4> magic{};
    std::uint32_t T = 0;
    in.read(magic.data(), 4);
    in.read(reinterpret_cast<char*>(&T), 4);
    if (!in || magic != kDenseMagic) fail(ErrorKind::Input, "'" + path.string() + "' is not a dense table");
    if (static_cast<int>(T) > dense_limit()) fail(ErrorKind::Resource, "dense table exceeds the size limit");
    DenseTable t;
    t.T = static_cast<int>(T);
    t.values.resize(std::size_t{1} << T);
    in.read(reinterpret_cast<char*>(t.values.data()), static_cast<std::streamsize>(t.values.size() * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(t.values.size() * sizeof(double)) || in.peek() != EOF)
        fail(ErrorKind::Input, "dense table '" + path.string() + "' has the wrong length");
    return t;
}

Projection parse_projection(const std::string& s) {
    if (s == "onehot" || s == "one-hot") return Projection::OneHot;
    if (s == "jll" || s == "random-jll") return Projection::RandomJLL;
    fail(ErrorKind::Input, "unknown projection '" + s + "' (expected onehot|jll)");
}

void save_params(const fs::path& dir, const ConstructionParams& p) {
    fs::create_directories(dir);
    Json j;
    j["format"] = "specflat-params-1";
    j["t"] = p.T;
    j["d"] = p.d;
    j["degree"] = p.degree;
    j["omega"] = p.omega;
    j["cot_period"] = p.cot_period;
    j["mode"] = to_string(p.config.mode);
    j["projection"] = to_string(p.config.projection);
    j["eps_p"] = p.config.eps_p;
    j["requested_d"] = p.config.d;
    j["seed"] = p.config.seed;
    j["spectrum"] = spectrum_to_json(p.spectrum);
    Json blobs = Json::array();
    // Row-major blobs; Eigen stores column-major, so transpose-copy.
    auto put = [&](const std::string& name, const Matrix& m) {
        const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
        write_blob(dir / (name + ".bin"), rm.data(), static_cast<std::size_t>(rm.size()));
        blobs.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"file", name + ".bin"}});
    };
    put("W1", p.W1);
    put("V1", p.V1);
    put("M", p.M);
    put("Gamma", p.Gamma);
    put("F", p.F);
    put("W2", p.W2);
    put("V2", p.V2);
    put("J", p.J);
    j["blobs"] = blobs;
    write_text_file(dir / "manifest.json", j.dump(2) + "\n");
}

ConstructionParams load_params(const fs::path& dir) {
    const Json j = load_json(dir / "manifest.json");
    if (!j.contains("format") || j.at("format") != "specflat-params-1")
        fail(ErrorKind::Input, "'" + dir.string() + "' is not a parameter directory");
    ConstructionParams p;
    p.T = get<int>(j, "t");
    p.d = get<int>(j, "d");
    p.degree = get<int>(j, "degree");
    p.omega = get<int>(j, "omega");
    p.cot_period = get<int>(j, "cot_period");
    p.config.mode = parse_mode(get<std::string>(j, "mode"));
    p.config.projection = parse_projection(get<std::string>(j, "projection"));
    p.config.eps_p = get<double>(j, "eps_p");
    p.config.d = get<int>(j, "requested_d");
    p.config.seed = get<std::uint64_t>(j, "seed");
    p.spectrum = spectrum_from_json(j.at("spectrum"));
    std::map<std::string, Matrix> mats;
    for (const auto& b : j.at("blobs")) {
        const auto rows = get<Eigen::Index>(b, "rows"), cols = get<Eigen::Index>(b, "cols");
        if (rows < 0 || cols < 0 || rows * cols > (Eigen::Index{1} << 32))
            fail(ErrorKind::Input, "invalid blob dimensions");
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
        read_blob(dir / get<std::string>(b, "file"), rm.data(), static_cast<std::size_t>(rm.size()));
        mats[get<std::string>(b, "name")] = rm;
    }
    auto take = [&](const char* name) -> Matrix {
        auto it = mats.find(name);
        if (it == mats.end()) fail(ErrorKind::Input, std::string("missing blob '") + name + "'");
        return it->second;
    };
    p.W1 = take("W1");
    p.V1 = take("V1");
    p.M = take("M");
    p.Gamma = take("Gamma");
    p.F = take("F");
    p.W2 = take("W2");
    p.V2 = take("V2");
    p.J = take("J");
    const Eigen::Index hp = p.d + 1, K = p.Gamma.size();
    const bool ok = p.W1.rows() == hp && p.W1.cols() == hp && p.V1.rows() == hp && p.V1.cols() == hp &&
                    p.M.rows() == hp && p.M.cols() == K && p.F.rows() == K && p.F.cols() == hp &&
                    p.W2.rows() == hp && p.W2.cols() == hp && p.V2.size() == hp && p.J.cols() == hp;
    if (!ok) fail(ErrorKind::Input, "parameter blob shapes are inconsistent");
    return p;
}

std::string fnv1a_file(const fs::path& path) {
    auto in = open_in(path, true);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[static_cast<std::size_t>(i)]);
            h *= 0x100000001b3ULL;
        }
    }
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
    return hex;
}

const char* tool_version() { return "specflat 1.0.0"; }

Json RunManifest::to_json() const {
    Json j;
    j["subcommand"] = subcommand;
    j["args"] = args;
    j["seeds"] = seeds;
    Json arts = Json::object();
    for (const auto& a : artifacts) {
        if (fs::is_regular_file(a))
            arts[a.string()] = fnv1a_file(a);
        else if (fs::is_directory(a))
            for (const auto& e : fs::directory_iterator(a))
                if (e.is_regular_file()) arts[e.path().string()] = fnv1a_file(e.path());
    }
    j["artifacts"] = arts;
    j["tool_version"] = tool_version();
    j["wall_time_s"] = wall_time_s;
    return j;
}

void RunManifest::write(const fs::path& path) const { write_text_file(path, to_json().dump(2) + "\n"); }

void CsvWriter::row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out_ << ',';
        const std::string& f = fields[i];
        if (f.find_first_of(",\"\r\n") != std::string::npos) {
            out_ << '"';
            for (char c : f) {
                if (c == '"') out_ << '"';
                out_ << c;
            }
            out_ << '"';
        } else {
            out_ << f;
        }
    }
    out_ << '\n';
}

std::string CsvWriter::num(double v) {
    std::array<char, 32> buf{};
    const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), r.ptr);
}

}  // namespace specflat
