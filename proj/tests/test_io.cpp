#include "aniso/io.hpp"
#include "aniso/mesh_gen.hpp"
#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <random>

using namespace aniso;
namespace io = aniso::io;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "aniso_test_io";
    fs::create_directories(dir);
    return dir / name;
}

std::string message_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const InvalidInput& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(FormatDouble, RoundTripsRandomBitPatterns) {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 20000; ++i) {
        double v;
        const std::uint64_t bits = rng();
        std::memcpy(&v, &bits, sizeof v);
        if (!std::isfinite(v)) continue;
        EXPECT_EQ(io::parse_double(io::format_double(v), "t"), v);
    }
}

TEST(FormatDouble, IsShortest) {
    EXPECT_EQ(io::format_double(0.1), "0.1");
    EXPECT_EQ(io::format_double(2.0), "2");
    EXPECT_EQ(io::format_double(-1e-300), "-1e-300");
}

TEST(ParseDouble, RejectsTrailingGarbage) {
    EXPECT_THROW(io::parse_double("1.5x", "t"), InvalidInput);
    EXPECT_THROW(io::parse_double("", "t"), InvalidInput);
    EXPECT_DOUBLE_EQ(io::parse_double(" +2.5 ", "t"), 2.5);
}

TEST(IntegrandJson, BuildsEveryKind) {
    const auto area = io::integrand_from_json(io::json::parse(R"({"kind":"area"})"));
    EXPECT_EQ(area.kind(), "area");
    const auto quad = io::integrand_from_json(
        io::json::parse(R"({"kind":"quadratic","matrix":[[2,0,0],[0,1,0],[0,0,1]]})"));
    const Vec nu = fixtures::v3(1, 0, 0);
    EXPECT_NEAR(quad.eval(Vec::Zero(3), nu), std::sqrt(2.0), 1e-15);
    const auto flat = io::integrand_from_json(io::json::parse(R"({"kind":"quadratic","matrix":[2,0,0,0,1,0,0,0,1]})"));
    EXPECT_NEAR(flat.eval(Vec::Zero(3), nu), std::sqrt(2.0), 1e-15);
    const auto mod = io::integrand_from_json(io::json::parse(
        R"({"kind":"modulated","base":{"kind":"area"},"amplitude":0.3,"wave":[1,0,0],"phase":0})"));
    EXPECT_EQ(mod.dim(), 3);
    const auto lp = io::integrand_from_json(io::json::parse(R"({"kind":"lp_smoothed","p":3,"eps":0.2})"));
    EXPECT_GT(lp.eval(Vec::Zero(3), nu), 0.0);
}

TEST(IntegrandJson, DiagnosticsNameTheKey) {
    EXPECT_NE(message_of([] { io::integrand_from_json(io::json::parse(R"({})")); }).find("integrand.kind"),
              std::string::npos);
    EXPECT_NE(message_of([] { io::integrand_from_json(io::json::parse(R"({"kind":"blob"})")); }).find("integrand.kind"),
              std::string::npos);
    EXPECT_NE(message_of([] { io::integrand_from_json(io::json::parse(R"({"kind":"lp_smoothed","p":3})")); })
                  .find("integrand.eps"),
              std::string::npos);
    EXPECT_NE(message_of([] {
                  io::integrand_from_json(io::json::parse(
                      R"({"kind":"modulated","base":{"kind":"quadratic"},"amplitude":0.1,"wave":[1,0,0]})"));
              }).find("integrand.base.matrix"),
              std::string::npos);
    EXPECT_NE(message_of([] {
                  io::integrand_from_json(
                      io::json::parse(R"({"kind":"modulated","base":{"kind":"area"},"amplitude":0.1,"wave":[1,0]})"));
              }).find("integrand.wave"),
              std::string::npos);
    EXPECT_NE(message_of([] { io::integrand_from_json(io::json::parse(R"({"kind":"quadratic","matrix":[1,2,3]})")); })
                  .find("integrand.matrix"),
              std::string::npos);
}

TEST(Off, RoundTripIsExact) {
    const TriMesh m = spherical_cap(6, 1.3, 0.9);
    const fs::path p = scratch("cap.off");
    io::write_text(p, io::format_off(m));
    const TriMesh back = io::read_off(p);
    ASSERT_EQ(back.vertices.size(), m.vertices.size());
    ASSERT_EQ(back.faces, m.faces);
    for (std::size_t i = 0; i < m.vertices.size(); ++i) EXPECT_EQ(back.vertices[i], m.vertices[i]);
}

TEST(Off, ToleratesCommentsAndRejectsPolygons) {
    std::istringstream ok("OFF # header\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n");
    EXPECT_EQ(io::parse_off(ok).faces.size(), 1u);
    std::istringstream quad("OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n");
    EXPECT_THROW(io::parse_off(quad), InvalidInput);
    std::istringstream bad("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n");
    EXPECT_THROW(io::parse_off(bad), InvalidInput);
    std::istringstream truncated("OFF\n3 1 0\n0 0 0\n");
    EXPECT_THROW(io::parse_off(truncated), InvalidInput);
}

TEST(VarifoldCsv, RoundTripIsExact) {
    const DiscreteVarifold V = from_mesh(icosphere(1));
    const std::string text = io::format_varifold_csv(V);
    EXPECT_EQ(text.substr(0, text.find('\n')), "x1,x2,x3,n1,n2,n3,w");
    const DiscreteVarifold back = io::parse_varifold_csv(text);
    ASSERT_EQ(back.size(), V.size());
    for (std::size_t i = 0; i < V.size(); ++i) {
        EXPECT_EQ(back.atoms()[i].x, V.atoms()[i].x);
        EXPECT_EQ(back.atoms()[i].w, V.atoms()[i].w);
    }
    EXPECT_EQ(io::format_varifold_csv(back), text);
}

TEST(VarifoldCsv, RejectsBadShapes) {
    EXPECT_THROW(io::parse_varifold_csv("x1,x2,w\n0,0,1\n"), InvalidInput);
    EXPECT_THROW(io::parse_varifold_csv("0,0,0,0,0,1,1\n0,0,0,0,0,1\n"), InvalidInput);
    EXPECT_THROW(io::parse_varifold_csv("0,0,0,0,0,1,abc\n"), InvalidInput);
}

TEST(PointsCsv, HeaderOptionalAndExact) {
    Mat P(3, 4);
    P << 0.1, 0.2, 0.3, 1e-17, -1, 2, 3, 4, 5, 6, 7, 8.125;
    const std::string text = io::format_points_csv(P);
    EXPECT_EQ(io::parse_points_csv(text), P);
    EXPECT_EQ(io::parse_points_csv("x,y,z\n" + text), P);
}

TEST(Manifest, RoundTripKeepsLabelsAndOrder) {
    MeasureSequence seq;
    for (long j = 1; j <= 4; ++j) {
        DiscreteVarifold V(3);
        V.add(fixtures::v3(0.1 * j, 0, 0), fixtures::v3(0, 0, 1), static_cast<double>(j));
        seq.push(V, 10 * j);
    }
    const fs::path p = scratch("seq/manifest.json");
    io::write_manifest(p, seq, "mu");
    const MeasureSequence back = io::read_manifest(p);
    ASSERT_EQ(back.size(), 4u);
    EXPECT_EQ(back.labels, seq.labels);
    EXPECT_EQ(back.entries[2].atoms()[0].w, 3.0);
    EXPECT_EQ(back.entries[3].atoms()[0].x, seq.entries[3].atoms()[0].x);
}

TEST(Manifest, MissingFileAndKey) {
    const fs::path p = scratch("broken/manifest.json");
    io::write_text(p, R"({"entries":[{"file":"nope.csv"}]})");
    EXPECT_NE(message_of([&] { io::read_manifest(p); }).find("nope.csv"), std::string::npos);
    io::write_text(p, R"({"items":[]})");
    EXPECT_NE(message_of([&] { io::read_manifest(p); }).find("entries"), std::string::npos);
}

TEST(Certificate, CarriesRequiredFields) {
    const auto cert = wedge_certificate(Vec::Zero(2), 0.25, area_integrand(3));
    const io::json j = io::certificate_json(cert.report);
    for (const char* key : {"paraboloid", "argmax", "lhs", "margin", "verdict"}) EXPECT_TRUE(j.contains(key)) << key;
    EXPECT_EQ(j["verdict"], "violation");
    EXPECT_GT(j["margin"].get<double>(), 0.0);
    EXPECT_EQ(j["paraboloid"]["A"].size(), 3u);
}

TEST(Certificate, NonFiniteBecomesNull) {
    TouchReport r;
    r.lhs = -std::numeric_limits<double>::infinity();
    r.margin = std::nan("");
    const io::json j = io::certificate_json(r);
    EXPECT_TRUE(j["lhs"].is_null());
    EXPECT_TRUE(j["margin"].is_null());
}

TEST(Table, HeaderAndRows) {
    EXPECT_EQ(io::format_table({"a", "b"}, {{1, 0.5}, {2, 0.25}}), "a,b\n1,0.5\n2,0.25\n");
}
