// File formats: spectrum JSON, dense-table binaries, parameter directories,
// run manifests and RFC-4180 CSV output.
//
// Spectrum JSON:  {"t": 20, "constant": 0.0, "components": [{"subset": [3, 8], "coeff": 0.41}, ...]}
// Dense table:    8-byte header ("SFDT", uint32 T little-endian) followed by
//                 2^T little-endian float64 values, index bit (i-1) = x_i.
// Parameters:     <dir>/manifest.json (dims, mode, projection, seed, spectrum,
//                 blob list) and one <dir>/<name>.bin per matrix holding
//                 rows*cols little-endian float64 values in row-major order.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "specflat/construction.hpp"

namespace specflat {

using Json = nlohmann::ordered_json;

Json spectrum_to_json(const SparseSpectrum& f);
SparseSpectrum spectrum_from_json(const Json& j);
void save_spectrum(const std::filesystem::path& path, const SparseSpectrum& f);
SparseSpectrum load_spectrum(const std::filesystem::path& path);

void write_dense_table(const std::filesystem::path& path, const DenseTable& table);
DenseTable read_dense_table(const std::filesystem::path& path);

void save_params(const std::filesystem::path& dir, const ConstructionParams& p);
ConstructionParams load_params(const std::filesystem::path& dir);

Projection parse_projection(const std::string& s);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);
Json load_json(const std::filesystem::path& path);

/// 64-bit FNV-1a digest of a file's bytes, as 16 hex digits.
std::string fnv1a_file(const std::filesystem::path& path);

/// Record written next to every output: enough to reproduce the run.
struct RunManifest {
    std::string subcommand;
    Json args = Json::object();
    std::map<std::string, std::uint64_t> seeds;
    std::vector<std::filesystem::path> artifacts;
    double wall_time_s = 0.0;

    Json to_json() const;  ///< hashes every artifact that exists
    void write(const std::filesystem::path& path) const;
};

/// Version string reported in manifests.
const char* tool_version();

/// Minimal RFC-4180 CSV writer (CRLF-free, quoting only when needed).
class CsvWriter {
public:
    explicit CsvWriter(std::ostream& out) : out_(out) {}
    void header(const std::vector<std::string>& names) { row(names); }
    void row(const std::vector<std::string>& fields);

    static std::string num(double v);  ///< round-trippable decimal
    static std::string num(long long v) { return std::to_string(v); }

private:
    std::ostream& out_;
};

}  // namespace specflat
