#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "specflat/derivatives.hpp"
#include "specflat/io.hpp"

using namespace specflat;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "specflat_test_io";
    fs::create_directories(dir);
    const fs::path p = dir / name;
    fs::remove_all(p);
    return p;
}

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorKind::Input;
}

}  // namespace

TEST(SpectrumJson, RoundTripIsBitExact) {
    auto f = sample_random_function(20, 3, 7, 5, true);
    f.constant = -0.125;
    const auto p = scratch("f.json");
    save_spectrum(p, f);
    const auto g = load_spectrum(p);
    EXPECT_EQ(g.T, 20);
    EXPECT_EQ(g.constant, f.constant);
    ASSERT_EQ(g.components.size(), f.components.size());
    for (std::size_t i = 0; i < f.components.size(); ++i) {
        EXPECT_EQ(g.components[i].subset, f.components[i].subset);
        EXPECT_EQ(g.components[i].coeff, f.components[i].coeff);
    }
}

TEST(SpectrumJson, Layout) {
    SparseSpectrum f;
    f.T = 4;
    f.components = {{{1, 3}, 0.5}};
    const Json j = spectrum_to_json(f);
    EXPECT_EQ(j.at("t"), 4);
    EXPECT_EQ(j.at("components")[0].at("subset"), Json::array({1, 3}));
    EXPECT_EQ(j.at("components")[0].at("coeff"), 0.5);
}

TEST(SpectrumJson, MalformedIsInputError) {
    EXPECT_EQ(kind_of([] { spectrum_from_json(Json::array()); }), ErrorKind::Input);
    EXPECT_EQ(kind_of([] { spectrum_from_json(Json{{"components", Json::array()}}); }), ErrorKind::Input);
    EXPECT_EQ(kind_of([] {
                  spectrum_from_json(Json::parse(R"({"t": 3, "components": [{"subset": [4], "coeff": 1}]})"));
              }),
              ErrorKind::Input);
    const auto p = scratch("bad.json");
    write_text_file(p, "{ not json");
    EXPECT_EQ(kind_of([&] { load_spectrum(p); }), ErrorKind::Input);
    EXPECT_EQ(kind_of([&] { load_spectrum(scratch("missing.json")); }), ErrorKind::Input);
}

TEST(DenseTable, RoundTripAndHeader) {
    const DenseTable t = tabulate(sample_random_function(10, 2, 4, 3));
    const auto p = scratch("t.sfdt");
    write_dense_table(p, t);
    EXPECT_EQ(fs::file_size(p), 8U + 8U * 1024U);
    std::ifstream in(p, std::ios::binary);
    char magic[4];
    in.read(magic, 4);
    EXPECT_EQ(std::string(magic, 4), "SFDT");
    const auto back = read_dense_table(p);
    EXPECT_EQ(back.T, 10);
    EXPECT_EQ(back.values, t.values);
}

TEST(DenseTable, CorruptFilesAreInputErrors) {
    const auto p = scratch("bad.sfdt");
    write_text_file(p, "XXXX1234");
    EXPECT_EQ(kind_of([&] { read_dense_table(p); }), ErrorKind::Input);
    const DenseTable t = tabulate(sample_random_function(4, 1, 2, 3));
    write_dense_table(p, t);
    fs::resize_file(p, fs::file_size(p) - 8);
    EXPECT_EQ(kind_of([&] { read_dense_table(p); }), ErrorKind::Input);
}

TEST(Params, RoundTripPreservesForwardPass) {
    ConstructionConfig cfg;
    cfg.projection = Projection::RandomJLL;
    cfg.seed = 11;
    const auto f = sample_random_function(12, 2, 3, 8);
    const auto p = build(f, cfg);
    const auto dir = scratch("theta");
    save_params(dir, p);
    EXPECT_TRUE(fs::exists(dir / "manifest.json"));
    for (const char* b : {"W1", "V1", "M", "Gamma", "F", "W2", "V2", "J"})
        EXPECT_TRUE(fs::exists(dir / (std::string(b) + ".bin"))) << b;
    const auto q = load_params(dir);
    EXPECT_EQ(to_vector(q), to_vector(p));
    EXPECT_EQ(q.J, p.J);
    EXPECT_EQ(q.config.projection, Projection::RandomJLL);
    Rng rng(1);
    for (int i = 0; i < 20; ++i) {
        BitString x(12);
        for (auto& b : x) b = static_cast<std::uint8_t>(rng() & 1U);
        EXPECT_EQ(forward(q, x).output, forward(p, x).output);
    }
}

TEST(Params, MissingDirectoryIsInputError) {
    EXPECT_EQ(kind_of([] { load_params(scratch("nowhere")); }), ErrorKind::Input);
}

TEST(Projection, Parse) {
    EXPECT_EQ(parse_projection("onehot"), Projection::OneHot);
    EXPECT_EQ(parse_projection("jll"), Projection::RandomJLL);
    EXPECT_EQ(kind_of([] { parse_projection("gauss"); }), ErrorKind::Input);
}

TEST(Csv, QuotingAndNumbers) {
    std::ostringstream out;
    CsvWriter w(out);
    w.header({"a", "b"});
    w.row({"x,y", "say \"hi\""});
    EXPECT_EQ(out.str(), "a,b\n\"x,y\",\"say \"\"hi\"\"\"\n");
    for (double v : {0.1, 1.0 / 3.0, 2.27e-3, 1e300, -0.0}) EXPECT_EQ(std::stod(CsvWriter::num(v)), v);
}

TEST(Manifest, RecordsArtifactsWithHashes) {
    const auto art = scratch("artifact.txt");
    write_text_file(art, "hello");
    RunManifest m;
    m.subcommand = "gen-fn";
    m.args["--t"] = 4;
    m.seeds["master"] = 7;
    m.artifacts.push_back(art);
    const Json j = m.to_json();
    EXPECT_EQ(j.at("subcommand"), "gen-fn");
    EXPECT_EQ(j.at("tool_version"), tool_version());
    EXPECT_EQ(j.at("seeds").at("master"), 7);
    ASSERT_EQ(j.at("artifacts").size(), 1U);
    EXPECT_EQ(j.at("artifacts").at(art.string()), fnv1a_file(art));
    EXPECT_EQ(fnv1a_file(art), "a430d84680aabd0b");  // FNV-1a 64 of "hello"
}
