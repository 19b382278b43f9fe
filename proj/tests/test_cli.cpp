#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <map>
#include <vector>

#include "cli_io.hpp"
#include "commands.hpp"
#include "instances.hpp"
#include "secord/bounds.hpp"

using namespace secord;
using namespace secord::cli;
namespace fs = std::filesystem;

namespace {

int run_args(std::vector<std::string> args) {
    args.insert(args.begin(), "secord-cli");
    std::vector<const char*> argv;
    for (auto& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data());
}

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("secord_cli_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string write_json(const fs::path& dir, const std::string& name, const json& j) {
    std::string path = (dir / name).string();
    write_file(path, j.dump(2));
    return path;
}

json binary_source(double p0) {
    return json{{"alphabet", {{"name", "X"}, {"symbols", {"0", "1"}}}}, {"values", {p0, 1.0 - p0}}};
}
json hamming(const std::string& a, const std::string& b) {
    return json{{"alphabet", json::array({{{"name", a}, {"symbols", 2}}, {{"name", b}, {"symbols", 2}}})},
                {"values", {0, 1, 1, 0}}};
}

ParsedCsv load(const fs::path& p) { return parse_csv(read_file(p.string())); }

std::string body_of(const std::string& text) {
    std::string out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t e = text.find('\n', pos);
        std::string line = text.substr(pos, e - pos);
        if (line.empty() || line[0] != '#') out += line + "\n";
        pos = e == std::string::npos ? text.size() : e + 1;
    }
    return out;
}

void check_round_trip(const fs::path& dir) {
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().extension() != ".csv") continue;
        std::string text = read_file(e.path().string());
        CHECK(serialize_csv(parse_csv(text)) == text);
        CHECK(text.rfind("# command: ", 0) == 0);
    }
}

}  // namespace

TEST_CASE("number formatting") {
    CHECK(fmt_num(0.1) == "0.1");
    CHECK(fmt_num(1.0 / 3.0) == "0.333333333333333");
    CHECK(fmt_num(-0.0) == "0");
    CHECK(fmt_num(1e-20) == "1e-20");
    // a 15-digit string survives parse and reprint
    double v = std::strtod(fmt_num(M_PI).c_str(), nullptr);
    CHECK(fmt_num(v) == fmt_num(M_PI));
}

TEST_CASE("instance JSON forms agree") {
    auto r = testutil::lossy_reduction(make_pmf(Alphabet::range("X", 2), {0.3, 0.7}),
                                       testutil::hamming_distortion(Alphabet::range("X", 2), Alphabet::range("Z", 2)), 0.1);
    json j = instance_to_json(r.inst);
    CodingInstance back = instance_from_json(j);
    CHECK(instance_digest(back) == instance_digest(r.inst));
    CHECK(back.enc == r.inst.enc);
    CHECK(back.side == r.inst.side);
}

TEST_CASE("rd subcommand") {
    fs::path dir = scratch("rd");
    std::string inst = write_json(dir, "src.json", json{{"source", binary_source(0.5)}, {"distortion", hamming("X", "Z")}});
    REQUIRE(run_args({"rd", "--instance", inst, "--out", (dir / "sweep").string(), "--grid", "0.01:0.49:25"}) == 0);
    ParsedCsv c = load(dir / "sweep" / "rd.csv");
    CHECK(c.columns == std::vector<std::string>{"D", "R", "lambda", "V"});
    REQUIRE(c.rows.size() == 25);
    for (std::size_t i = 1; i < c.rows.size(); ++i) CHECK(std::stod(c.rows[i][1]) <= std::stod(c.rows[i - 1][1]) + 1e-12);

    REQUIRE(run_args({"rd", "--instance", inst, "--out", (dir / "one").string(), "--grid", "0.11"}) == 0);
    ParsedCsv one = load(dir / "one" / "rd.csv");
    RDSolution ref = blahut_arimoto_rd(make_pmf(Alphabet::range("X", 2), {0.5, 0.5}),
                                       testutil::hamming_distortion(Alphabet::range("X", 2), Alphabet::range("Z", 2)), 0.11);
    CHECK(std::stod(one.rows[0][1]) == doctest::Approx(ref.rate).epsilon(1e-13));
    CHECK(std::stod(one.rows[0][1]) == doctest::Approx(1.0 - testutil::hb(0.11)).epsilon(1e-9));
    check_round_trip(dir / "sweep");

    write_file((dir / "bad.json").string(), "{\"source\": [1, 2");
    CHECK(run_args({"rd", "--instance", (dir / "bad.json").string(), "--out", dir.string()}) == 2);
    CHECK(run_args({"rd", "--instance", (dir / "missing.json").string(), "--out", dir.string()}) == 2);
    CHECK(run_args({"nosuchcommand"}) == 2);
}

TEST_CASE("figure3 subcommand") {
    fs::path dir = scratch("fig3");
    REQUIRE(run_args({"figure3", "--p", "0.2", "--grid", "6", "--out", (dir / "a").string()}) == 0);
    REQUIRE(run_args({"figure3", "--p", "0.2", "--grid", "6", "--out", (dir / "b").string()}) == 0);
    ParsedCsv c = load(dir / "a" / "fig3_p0.2.csv");
    CHECK(c.columns == std::vector<std::string>{"D", "V_GCC", "V_VYAG", "V_WKT", "V_LA"});
    REQUIRE(c.rows.size() == 6);
    for (const auto& r : c.rows) {
        double g = std::stod(r[1]), vy = std::stod(r[2]), wk = std::stod(r[3]), la = std::stod(r[4]);
        CHECK(std::isfinite(g));
        CHECK(g <= la + 1e-9);
        CHECK(la <= vy + 1e-9);
        CHECK(wk <= vy + 1e-9);
    }
    CHECK(fs::exists(dir / "a" / "fig3_p0.2.gp"));
    CHECK(body_of(read_file((dir / "a" / "fig3_p0.2.csv").string())) ==
          body_of(read_file((dir / "b" / "fig3_p0.2.csv").string())));
    check_round_trip(dir / "a");
}

TEST_CASE("bound subcommand on the lossy reduction") {
    fs::path dir = scratch("bound");
    Alphabet X = Alphabet::range("X", 2), Z = Alphabet::range("Z", 2);
    ProbVec px = make_pmf(X, {0.3, 0.7});
    RealFunc d = testutil::hamming_distortion(X, Z);
    auto r = testutil::lossy_reduction(px, d, 0.1);
    std::string inst = write_json(dir, "inst.json", instance_to_json(r.inst));
    REQUIRE(run_args({"bound", "--instance", inst, "--out", dir.string(), "--n", "1000", "--epsilon", "0.01"}) == 0);
    ParsedCsv c = load(dir / "bound.csv");
    std::map<std::string, double> m;
    for (const auto& row : c.rows) m[row[0]] = std::stod(row[1]);
    double V = lsc_dispersion(px, d, 0.1).V;
    CHECK(m.at("V_GCC") == doctest::Approx(V).epsilon(1e-12));
    CHECK(m.at("first_order_rate") == doctest::Approx(r.rd.rate).epsilon(1e-9));
    CHECK(m.count("rate_at_epsilon") == 1);
    CHECK(c.header_lines[2] == "# instance_digest: " + instance_digest(r.inst));
    check_round_trip(dir);
}

TEST_CASE("simulate subcommand") {
    fs::path dir = scratch("sim");
    json tc = {{"from", {{"name", "X"}, {"symbols", 2}}}, {"to", {{"name", "Z"}, {"symbols", 2}}}, {"values", {0.8, 0.2, 0.2, 0.8}}};
    json inst = {{"variant", "LossySC"}, {"source", binary_source(0.5)}, {"test_channel", tc},
                 {"distortion", hamming("X", "Z")}, {"D", 1.0}, {"lambda", 1.0}};
    std::string path = write_json(dir, "lsc.json", inst);
    REQUIRE(run_args({"simulate", "--instance", path, "--n", "6", "--rate", "0.5", "--trials", "300", "--trace", "--out",
                      dir.string()}) == 0);
    ParsedCsv c = load(dir / "simulate.csv");
    std::map<std::string, double> m;
    for (const auto& row : c.rows) m[row[0]] = std::stod(row[1]);
    CHECK(m.at("errors") == 0.0);
    CHECK(m.at("trials") == 300.0);
    CHECK(load(dir / "trace.csv").rows.size() == 300);
    check_round_trip(dir);
    // ⌊2^{nR}⌋·|U|^n above 2^24
    CHECK(run_args({"simulate", "--instance", path, "--n", "24", "--rate", "0.5", "--out", dir.string()}) == 4);
    // binary family through the CLI
    std::string wz = write_json(dir, "wz.json", json{{"family", "wz_binary"}, {"p", 0.25}, {"D", 0.1}});
    CHECK(run_args({"simulate", "--instance", wz, "--n", "4", "--rate", "0.5", "--trials", "200", "--out",
                    (dir / "wz").string()}) == 0);
}

TEST_CASE("typedev and compare subcommands") {
    fs::path dir = scratch("diag");
    REQUIRE(run_args({"typedev", "--pmf", "0.3,0.7", "--grid", "10,100", "--trials", "300", "--out", dir.string()}) == 0);
    ParsedCsv t = load(dir / "typedev.csv");
    CHECK(t.rows.size() == 2);
    ParsedCsv s = load(dir / "selfinfo.csv");
    CHECK(s.columns == std::vector<std::string>{"n", "q95_type_class", "q95_mixture", "q95_iid"});
    std::string wz = write_json(dir, "wz.json", json{{"family", "wz_binary"}, {"p", 0.4}, {"D", 0.2}});
    REQUIRE(run_args({"compare", "--instance", wz, "--grid", "0.5", "--out", dir.string()}) == 0);
    ParsedCsv c = load(dir / "compare.csv");
    REQUIRE(c.rows.size() == 1);
    CHECK(std::stod(c.rows[0][1]) <= std::stod(c.rows[0][3]) + std::stod(c.rows[0][6]));
    check_round_trip(dir);
}
