#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "subradius/access_perturb.hpp"
#include "subradius/cli_io.hpp"
#include "subradius/probe.hpp"

using namespace subradius;
using nlohmann::json;

namespace {

namespace fs = std::filesystem;

// Per-process scratch directory; doctest runs cases in one thread.
const fs::path& scratch_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() /
                 ("subradius_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string path_of(const std::string& name) { return (scratch_dir() / name).string(); }

std::string write_text(const std::string& name, const std::string& text) {
  const std::string p = path_of(name);
  std::ofstream o(p, std::ios::binary | std::ios::trunc);
  o << text;
  return p;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct RunResult {
  int exit_code = 0;
  std::string out;
  std::string err;
  json report;  // parsed from out when out is nonempty JSON
};

RunResult run(std::vector<std::string> args) {
  std::ostringstream out, err;
  RunResult r;
  r.exit_code = run_command(args, out, err);
  r.out = out.str();
  r.err = err.str();
  if (!r.out.empty() && (r.out[0] == '{' || r.out[0] == '[')) {
    r.report = json::parse(r.out);
  }
  return r;
}

// The wall-time line is the only nondeterministic part of a report.
std::string strip_wall_time(const std::string& text) {
  std::string cleaned;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.find("\"wall_time_s\"") != std::string::npos) continue;
    cleaned += line;
    cleaned += "\n";
  }
  return cleaned;
}

std::string message_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("matrix-set files load, validate, and report schema errors precisely") {
  const std::string valid = R"({
    "dim": 2,
    "matrices": [
      {"label": "D", "rows": [[2, 0], [0, 0.125]]},
      {"label": "I", "rows": [[1, 0], [0, 1]]}
    ]
  })";
  const MatrixSet set = parse_matrix_set(valid, "valid.json");
  CHECK(set.dim() == 2);
  CHECK(set.size() == 2);
  CHECK(set.label(0) == "D");
  CHECK(set.label(1) == "I");
  CHECK(set.matrix(0)(0, 0) == 2.0);
  CHECK(set.matrix(0)(1, 1) == 0.125);

  const auto msg = [](const std::string& text) {
    return message_of([&] { parse_matrix_set(text, "f.json"); });
  };
  // Every schema failure names the file and points into the document.
  CHECK(msg("[1, 2]").find("top-level value must be a JSON object") != std::string::npos);
  CHECK(msg("{\"matrices\": []}").find("missing field 'dim'") != std::string::npos);
  CHECK(msg("{\"dim\": 0, \"matrices\": [1]}").find("positive integer") != std::string::npos);
  CHECK(msg("{\"dim\": 2.5, \"matrices\": [1]}").find("positive integer") != std::string::npos);
  CHECK(msg("{\"dim\": 2}").find("'matrices' must be a nonempty array") != std::string::npos);
  CHECK(msg("{\"dim\": 2, \"matrices\": []}").find("nonempty") != std::string::npos);
  CHECK(msg("{\"dim\": 2, \"matrices\": [5]}").find("matrices[0] must be an object") !=
        std::string::npos);
  CHECK(msg("{\"dim\": 2, \"matrices\": [{\"rows\": []}]}")
            .find("matrices[0]: missing string field 'label'") != std::string::npos);
  {
    const std::string m = msg(
        "{\"dim\": 2, \"matrices\": [{\"label\": \"A\", \"rows\": [[1, 0], [0, 1, 5]]}]}");
    CHECK(m.find("matrices[0] ('A')") != std::string::npos);
    CHECK(m.find("rows[1] has 3 entries, expected 2") != std::string::npos);
  }
  {
    const std::string m = msg(
        "{\"dim\": 2, \"matrices\": [{\"label\": \"A\", \"rows\": [[1, \"x\"], [0, 1]]}]}");
    CHECK(m.find("rows[0][1] must be a number") != std::string::npos);
  }
  {
    const std::string m =
        msg("{\"dim\": 2, \"matrices\": [{\"label\": \"A\", \"rows\": [[1, 0]]}]}");
    CHECK(m.find("expected 2 rows, got 1") != std::string::npos);
  }
  // Semantic failures surface the MatrixSet diagnostics, label included.
  {
    const std::string m = msg(
        "{\"dim\": 2, \"matrices\": [{\"label\": \"S\", \"rows\": [[1, 2], [2, 4]]}]}");
    CHECK(m.find("element 'S' is singular") != std::string::npos);
  }
  {
    const std::string m = msg(
        "{\"dim\": 2, \"matrices\": [{\"label\": \"A\", \"rows\": [[1, 0], [0, 1]]},"
        "{\"label\": \"A\", \"rows\": [[2, 0], [0, 2]]}]}");
    CHECK(m.find("duplicate label 'A'") != std::string::npos);
  }
  // Parse errors carry the origin.
  CHECK(msg("{nope").find("f.json") != std::string::npos);
}

TEST_CASE("matrix-set save and load round-trip byte-stably") {
  const MatrixSet set = gallery_simple();
  const std::string once = format_matrix_set(set);
  const std::string twice = format_matrix_set(parse_matrix_set(once, "once"));
  CHECK(once == twice);

  const MatrixSet back = parse_matrix_set(once, "once");
  CHECK(hausdorff_distance(set, back) == 0.0);
  CHECK(back.labels() == set.labels());

  // Hand-written integers and long decimals survive one normalization pass.
  const std::string hand = R"({"dim": 2, "matrices": [
    {"label": "T", "rows": [[0.3333333333333333, 3], [0, 1]]}]})";
  const std::string n1 = format_matrix_set(parse_matrix_set(hand, "hand"));
  const std::string n2 = format_matrix_set(parse_matrix_set(n1, "norm"));
  CHECK(n1 == n2);
  CHECK(n1.find("0.33333333333333331") != std::string::npos);

  // File-level API.
  const std::string p = path_of("roundtrip_set.json");
  save_matrix_set(set, p);
  const MatrixSet loaded = load_matrix_set(p);
  CHECK(hausdorff_distance(set, loaded) == 0.0);
  CHECK(slurp(p) == once);
}

TEST_CASE("fnv1a digest matches the reference vectors") {
  CHECK(fnv1a_digest("") == "fnv1a:cbf29ce484222325");
  CHECK(fnv1a_digest("a") == "fnv1a:af63dc4c8601ec8c");
  CHECK(fnv1a_digest("foobar") == "fnv1a:85944171f73967e8");
}

TEST_CASE("bracket subcommand emits a complete deterministic report") {
  const std::string p = path_of("simple_set.json");
  save_matrix_set(gallery_simple(), p);

  const RunResult r = run({"bracket", "--set", p, "--n-max", "8", "--upper"});
  REQUIRE(r.exit_code == 0);
  REQUIRE(r.report.is_object());
  CHECK(r.report["command"] == "bracket");
  CHECK(r.report["version"].is_string());
  CHECK(r.report["input_digest"] == fnv1a_digest(slurp(p)));
  CHECK(r.report["config"]["n_max"] == 8);
  const json& sub = r.report["outputs"]["subradius"];
  CHECK(sub["lower"].get<double>() == 1.0);
  CHECK(sub["upper"].get<double>() == 1.0);
  CHECK(sub["commuting_fast_path"] == true);
  CHECK(sub["best_word"]["labels"] == "I");
  const json& up = r.report["outputs"]["upper_radius"];
  CHECK(up["lower"].get<double>() == 2.0);  // rho(D) = 2 realized by a single letter
  CHECK(r.report["wall_time_s"].is_number());

  // Identical runs produce byte-identical reports aside from the wall time.
  const RunResult again = run({"bracket", "--set", p, "--n-max", "8", "--upper"});
  CHECK(strip_wall_time(r.out) == strip_wall_time(again.out));

  // --out writes the same report to a file.
  const std::string rp = path_of("bracket_report.json");
  const RunResult to_file = run({"bracket", "--set", p, "--n-max", "8", "--upper", "--out", rp});
  CHECK(to_file.exit_code == 0);
  CHECK(to_file.out.empty());
  CHECK(strip_wall_time(slurp(rp)) == strip_wall_time(r.out));

  // The det-wedge floor reappears when fast paths are disabled.
  const RunResult slow = run({"bracket", "--set", p, "--n-max", "8", "--no-fast-paths"});
  CHECK(slow.report["outputs"]["subradius"]["lower"].get<double>() == 0.5);
  CHECK(slow.report["outputs"]["subradius"]["commuting_fast_path"] == false);
}

TEST_CASE("strict mode turns undetermined verdicts into exit code 2") {
  const std::string p = path_of("nasty1_set.json");
  save_matrix_set(gallery_nasty1(), p);

  const RunResult lax = run({"probe", "continuity", "--set", p, "--n-max", "6"});
  CHECK(lax.exit_code == 0);
  CHECK(lax.report["outputs"]["outcome"] == "undetermined");

  const RunResult strict = run({"probe", "continuity", "--set", p, "--n-max", "6", "--strict"});
  CHECK(strict.exit_code == 2);

  // A decided verdict is unaffected by --strict.
  const std::string sp = path_of("simple_set2.json");
  save_matrix_set(gallery_simple(), sp);
  const RunResult decided = run({"probe", "continuity", "--set", sp, "--n-max", "8", "--strict"});
  CHECK(decided.exit_code == 0);
  CHECK(decided.report["outputs"]["outcome"] == "discontinuous");
  CHECK(decided.report["outputs"]["rhs_upper"].get<double>() == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("dominate subcommand reports per-k verdicts and the least index") {
  const std::string p = path_of("dom_simple.json");
  save_matrix_set(gallery_simple(), p);
  const RunResult scan = run({"dominate", "--set", p, "--n-max", "8"});
  REQUIRE(scan.exit_code == 0);
  CHECK(scan.report["outputs"]["index"]["ell"] == 2);
  CHECK(scan.report["outputs"]["index"]["per_k"][0]["verdict"] == "not-dominated");

  const std::string dp = path_of("dom_diag.json");
  save_matrix_set(MatrixSet(2, {(Matrix(2, 2) << 2, 0, 0, 0.125).finished()}, {"D"}), dp);
  const RunResult single = run({"dominate", "--set", dp, "--k", "1", "--n-max", "8", "--strict"});
  CHECK(single.exit_code == 0);
  CHECK(single.report["outputs"]["report"]["verdict"] == "dominated");
  CHECK(single.report["outputs"]["report"]["certified"] == true);
}

TEST_CASE("barabanov subcommand reports beta and writes the psi csv") {
  const std::string p = path_of("bar_diag.json");
  save_matrix_set(MatrixSet(2, {(Matrix(2, 2) << 2, 0, 0, 0.125).finished()}, {"D"}), p);
  const std::string csv = path_of("psi.csv");
  const RunResult r = run({"barabanov", "--set", p, "--grid", "1024", "--csv", csv});
  REQUIRE(r.exit_code == 0);
  CHECK(r.report["outputs"]["beta"].get<double>() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-6));
  CHECK(r.report["outputs"]["residual"].get<double>() <= 1e-9);
  CHECK(r.report["outputs"]["multicone"]["found"] == true);
  CHECK(r.report["outputs"]["csv"] == csv);

  const std::string text = slurp(csv);
  CHECK(text.rfind("angle,value\n", 0) == 0);
  const auto rows = static_cast<long>(std::count(text.begin(), text.end(), '\n'));
  CHECK(rows == r.report["outputs"]["psi"]["nodes"].get<long>() + 1);

  // Rotation-free but not 1-dominated input is a clean error.
  const std::string np = path_of("bar_nasty.json");
  save_matrix_set(gallery_nasty1(), np);
  const RunResult bad = run({"barabanov", "--set", np, "--grid", "256"});
  CHECK(bad.exit_code == 1);
  CHECK(bad.err.find("multicone") != std::string::npos);
}

TEST_CASE("zeta subcommand reports element and word profiles") {
  const std::string p = path_of("zeta_diag.json");
  save_matrix_set(MatrixSet(2, {(Matrix(2, 2) << 2, 0, 0, 0.125).finished()}, {"D"}), p);
  const RunResult r = run({"zeta", "--set", p, "--word", "0,0"});
  REQUIRE(r.exit_code == 0);
  const double two_ln2 = 2.0 * std::log(2.0);
  CHECK(r.report["outputs"]["elements"][0]["profile"]["zetas"][0].get<double>() ==
        doctest::Approx(two_ln2).epsilon(1e-12));
  CHECK(r.report["outputs"]["word"]["profile"]["zetas"][0].get<double>() ==
        doctest::Approx(2.0 * two_ln2).epsilon(1e-12));
  CHECK(r.report["outputs"]["word"]["pivot"]["p"] == 1);

  const RunResult z = run({"zeta", "--set", p, "--z-delta", "0.1", "--ell", "2", "--n-lo", "1",
                           "--n-hi", "3"});
  REQUIRE(z.exit_code == 0);
  CHECK(z.report["outputs"]["z_delta"]["points"].size() == 3);
  CHECK(z.report["outputs"]["z_delta"]["points"][0]["n"] == 1);

  const RunResult bad = run({"zeta", "--set", p, "--word", "0,7"});
  CHECK(bad.exit_code == 1);
}

TEST_CASE("perturb emits certificates that verify-cert accepts and tampering breaks") {
  const std::string p = path_of("pert_simple.json");
  save_matrix_set(gallery_simple(), p);
  const std::string cert = path_of("pert_cert.json");

  const RunResult search = run({"perturb", "--set", p, "--epsilon", "0.05", "--n-max", "8",
                                "--max-pivot-len", "64", "--cert-out", cert});
  REQUIRE(search.exit_code == 0);
  const json& c = search.report["outputs"]["certificate"];
  CHECK(c["success"] == true);
  CHECK(c["achieved_rate"].get<double>() < c["reference_rate"].get<double>());
  CHECK(search.report["outputs"]["max_letter_distance"].get<double>() <= 0.05);
  CHECK(search.report["outputs"]["hausdorff"].get<double>() <= 0.05);
  CHECK(search.report["outputs"]["certificate_file"] == cert);

  const RunResult ok = run({"perturb", "--verify-cert", cert});
  CHECK(ok.exit_code == 0);
  CHECK(ok.report["outputs"]["verified"] == true);
  CHECK(ok.report["outputs"]["rate_mismatch"].get<double>() <= 1e-12);

  // Cross-checking against the original set file also passes.
  const RunResult cross = run({"perturb", "--verify-cert", cert, "--set", p});
  CHECK(cross.exit_code == 0);
  CHECK(cross.report["outputs"]["verified"] == true);

  // Tampering with the claimed rate is caught.
  json tampered = json::parse(slurp(cert));
  tampered["certificate"]["achieved_rate"] =
      tampered["certificate"]["achieved_rate"].get<double>() * 0.5;
  const std::string tp = write_text("pert_cert_tampered.json", tampered.dump());
  const RunResult bad = run({"perturb", "--verify-cert", tp});
  CHECK(bad.exit_code == 1);
  CHECK(bad.report["outputs"]["verified"] == false);
  CHECK(bad.report["outputs"]["failure"].get<std::string>().find("rate") != std::string::npos);

  // Tampering with a perturbed letter breaks the alignment reproduction.
  json tampered2 = json::parse(slurp(cert));
  tampered2["certificate"]["perturbed_matrices"][0][0][0] =
      tampered2["certificate"]["perturbed_matrices"][0][0][0].get<double>() + 0.01;
  const std::string tp2 = write_text("pert_cert_tampered2.json", tampered2.dump());
  const RunResult bad2 = run({"perturb", "--verify-cert", tp2});
  CHECK(bad2.exit_code == 1);
  CHECK(bad2.report["outputs"]["verified"] == false);

  // A 1-dominated base records a theorem-backed failure, exit 0 even strict.
  const std::string dp = path_of("pert_diag.json");
  save_matrix_set(MatrixSet(2, {(Matrix(2, 2) << 2, 0, 0, 0.125).finished()}, {"D"}), dp);
  const RunResult dom = run({"perturb", "--set", dp, "--epsilon", "0.05", "--n-max", "6",
                             "--strict"});
  CHECK(dom.exit_code == 0);
  CHECK(dom.report["outputs"]["certificate"]["success"] == false);
  CHECK(dom.report["outputs"]["certificate"]["note"].get<std::string>().find("1-dominated") !=
        std::string::npos);
}

TEST_CASE("probe scan subcommand writes the fixed-column csv") {
  const std::string p = path_of("scan_simple.json");
  save_matrix_set(gallery_simple(), p);
  const std::string csv = path_of("scan.csv");
  const RunResult r = run({"probe", "scan", "--set", p, "--thetas",
                           "0,0.78539816339744828,1.5707963267948966", "--n-max", "6", "--csv",
                           csv});
  REQUIRE(r.exit_code == 0);
  CHECK(r.report["outputs"]["drop_detected"] == true);
  CHECK(r.report["outputs"]["drop_magnitude"].get<double>() >= 0.45);
  CHECK(r.report["outputs"]["thetas"].size() == 3);

  const std::string text = slurp(csv);
  REQUIRE(text.rfind("theta,upper_rate,lower_bound\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);
  // The quarter-turn column ends at the exact single-letter rate 0.5.
  CHECK(text.find("1.5707963267948966,0.5,0.5") != std::string::npos);

  // The default grid is symmetric around zero with the requested node count.
  const RunResult d = run({"probe", "scan", "--set", p, "--theta-max", "0.02", "--theta-count",
                           "5", "--n-max", "4"});
  REQUIRE(d.exit_code == 0);
  const auto thetas = d.report["outputs"]["thetas"].get<std::vector<double>>();
  REQUIRE(thetas.size() == 5);
  CHECK(thetas.front() == -0.02);
  CHECK(thetas[2] == 0.0);
  CHECK(thetas.back() == 0.02);
}

TEST_CASE("probe gallery exports byte-identical library constructions") {
  const std::string p = path_of("gallery_nasty1.json");
  const RunResult r = run({"probe", "gallery", "--name", "nasty1", "--set-out", p});
  REQUIRE(r.exit_code == 0);
  const std::string text = slurp(p);
  CHECK(text == format_matrix_set(gallery_nasty1()));
  CHECK(r.report["outputs"]["digest"] == fnv1a_digest(text));
  CHECK(r.report["input_digest"].is_null());

  const RunResult rr = run({"probe", "gallery", "--name", "rational-rotation", "--p", "3", "--q",
                            "1"});
  REQUIRE(rr.exit_code == 0);
  const MatrixSet lib = gallery_rational_rotation(3, 1);
  const MatrixSet cli = parse_matrix_set(rr.report["outputs"]["set"].dump(), "gallery");
  CHECK(hausdorff_distance(lib, cli) == 0.0);

  const RunResult bad = run({"probe", "gallery", "--name", "no-such-example"});
  CHECK(bad.exit_code == 1);
  CHECK(bad.err.find("unknown gallery name") != std::string::npos);
}

TEST_CASE("probe impurities subcommand reports the growth floor per epsilon") {
  const std::string p = path_of("imp_pair.json");
  const std::string pair = R"({
    "dim": 2,
    "matrices": [
      {"label": "H", "rows": [[2, 0], [0, 0.5]]},
      {"label": "R", "rows": [[0, -1], [1, 0]]}
    ]
  })";
  write_text("imp_pair.json", pair);
  const RunResult r = run({"probe", "impurities", "--set", p, "--eps", "0,0.5", "--n-max", "8"});
  REQUIRE(r.exit_code == 0);
  CHECK(r.report["outputs"]["h_label"] == "H");
  CHECK(r.report["outputs"]["lambda_est"][0].get<double>() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(r.report["outputs"]["lambda_est"][1].get<double>() ==
        doctest::Approx(0.0).epsilon(1e-12));
  CHECK(r.report["outputs"]["positive_with_margin"] == false);

  const std::string p3 = path_of("imp_three.json");
  save_matrix_set(MatrixSet(2, {Matrix::Identity(2, 2), Matrix::Identity(2, 2) * 2.0,
                                Matrix::Identity(2, 2) * 3.0}),
                  p3);
  const RunResult bad = run({"probe", "impurities", "--set", p3});
  CHECK(bad.exit_code == 1);
  CHECK(bad.err.find("exactly 2 elements") != std::string::npos);
}

TEST_CASE("cli errors exit with code 1 and helpful diagnostics") {
  CHECK(run({"no-such-command"}).exit_code == 1);
  CHECK(run({}).exit_code == 1);
  CHECK(run({"bracket"}).exit_code == 1);  // --set is required
  CHECK(run({"bracket", "--set", path_of("does_not_exist.json")}).exit_code == 1);
  CHECK(run({"probe"}).exit_code == 1);  // probe needs a nested subcommand
  {
    const RunResult r = run({"bracket", "--set", path_of("does_not_exist.json")});
    CHECK(r.err.find("does_not_exist.json") != std::string::npos);
  }
  {
    const RunResult r = run({"--help"});
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("bracket") != std::string::npos);
  }
  {
    const RunResult r = run({"bracket", "--set", "x.json", "--n-max", "banana"});
    CHECK(r.exit_code == 1);
  }
}

TEST_CASE("reports print every float with 17 significant digits") {
  Matrix t(2, 2);
  t << 1.0 / 3.0, 3.0, 0.0, 1.0;
  const std::string p = path_of("digits.json");
  save_matrix_set(MatrixSet(2, {t}, {"T"}), p);
  const std::string text = slurp(p);
  CHECK(text.find("0.33333333333333331") != std::string::npos);

  // The scan report carries the same convention for computed values.
  const RunResult r = run({"probe", "scan", "--set", p, "--thetas", "0.1", "--n-max", "3"});
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("0.1000000000000000") != std::string::npos);
}
