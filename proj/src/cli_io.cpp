#include "subradius/cli_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "subradius/access_perturb.hpp"
#include "subradius/barabanov.hpp"
#include "subradius/domination.hpp"
#include "subradius/estimators.hpp"
#include "subradius/probe.hpp"
#include "subradius/version.hpp"

namespace subradius {

namespace {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Deterministic JSON emission: fixed field order (insertion order of the
// ordered_json), 2-space indentation, and every floating-point number printed
// with 17 significant digits so values round-trip exactly. JSON has no
// non-finite literals, so infinities and NaN are emitted as the strings
// "inf", "-inf", "nan".
// ---------------------------------------------------------------------------

std::string num17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string dump_scalar(const Json& j) {
  if (j.is_number_float()) {
    const double v = j.get<double>();
    if (std::isnan(v)) return "\"nan\"";
    if (std::isinf(v)) return v > 0.0 ? "\"inf\"" : "\"-inf\"";
    return num17(v);
  }
  return j.dump();  // strings (escaped), integers, booleans, null
}

void dump_value(const Json& j, std::string& text, int depth) {
  const auto pad = [&text](int n) { text.append(static_cast<std::size_t>(n) * 2, ' '); };
  if (j.is_object()) {
    if (j.empty()) {
      text += "{}";
      return;
    }
    text += "{\n";
    bool first = true;
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!first) text += ",\n";
      first = false;
      pad(depth + 1);
      text += Json(it.key()).dump();
      text += ": ";
      dump_value(it.value(), text, depth + 1);
    }
    text += "\n";
    pad(depth);
    text += "}";
  } else if (j.is_array()) {
    if (j.empty()) {
      text += "[]";
      return;
    }
    bool flat = true;
    for (const auto& e : j) flat = flat && !e.is_object() && !e.is_array();
    if (flat) {
      text += "[";
      bool first = true;
      for (const auto& e : j) {
        if (!first) text += ", ";
        first = false;
        text += dump_scalar(e);
      }
      text += "]";
    } else {
      text += "[\n";
      bool first = true;
      for (const auto& e : j) {
        if (!first) text += ",\n";
        first = false;
        pad(depth + 1);
        dump_value(e, text, depth + 1);
      }
      text += "\n";
      pad(depth);
      text += "]";
    }
  } else {
    text += dump_scalar(j);
  }
}

std::string dump_json(const Json& j) {
  std::string text;
  dump_value(j, text, 0);
  text += "\n";
  return text;
}

// ---------------------------------------------------------------------------
// File IO
// ---------------------------------------------------------------------------

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream o(path, std::ios::binary | std::ios::trunc);
  if (!o) throw std::runtime_error("cannot write file: " + path);
  o << bytes;
  o.flush();
  if (!o.good()) throw std::runtime_error("failed while writing file: " + path);
}

// ---------------------------------------------------------------------------
// Matrix-set JSON conversion
// ---------------------------------------------------------------------------

Json matrix_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const Json& rows, int dim, const std::string& where) {
  if (!rows.is_array()) throw std::runtime_error(where + ": 'rows' must be an array");
  if (static_cast<int>(rows.size()) != dim) {
    throw std::runtime_error(where + ": expected " + std::to_string(dim) + " rows, got " +
                             std::to_string(rows.size()));
  }
  Matrix m(dim, dim);
  for (int r = 0; r < dim; ++r) {
    const Json& row = rows[static_cast<std::size_t>(r)];
    if (!row.is_array()) {
      throw std::runtime_error(where + ": rows[" + std::to_string(r) + "] must be an array");
    }
    if (static_cast<int>(row.size()) != dim) {
      throw std::runtime_error(where + ": rows[" + std::to_string(r) + "] has " +
                               std::to_string(row.size()) + " entries, expected " +
                               std::to_string(dim));
    }
    for (int c = 0; c < dim; ++c) {
      const Json& cell = row[static_cast<std::size_t>(c)];
      if (!cell.is_number()) {
        throw std::runtime_error(where + ": rows[" + std::to_string(r) + "][" +
                                 std::to_string(c) + "] must be a number");
      }
      m(r, c) = cell.get<double>();
    }
  }
  return m;
}

MatrixSet matrix_set_from_json(const Json& j, const std::string& origin) {
  if (!j.is_object()) throw std::runtime_error(origin + ": top-level value must be a JSON object");
  if (!j.contains("dim")) throw std::runtime_error(origin + ": missing field 'dim'");
  if (!j["dim"].is_number_integer() || j["dim"].get<long long>() < 1) {
    throw std::runtime_error(origin + ": 'dim' must be a positive integer");
  }
  const int dim = j["dim"].get<int>();
  if (!j.contains("matrices") || !j["matrices"].is_array() || j["matrices"].empty()) {
    throw std::runtime_error(origin + ": 'matrices' must be a nonempty array");
  }
  std::vector<Matrix> mats;
  std::vector<std::string> labels;
  const Json& arr = j["matrices"];
  for (std::size_t i = 0; i < arr.size(); ++i) {
    std::string where = origin + ": matrices[" + std::to_string(i) + "]";
    const Json& e = arr[i];
    if (!e.is_object()) throw std::runtime_error(where + " must be an object");
    if (!e.contains("label") || !e["label"].is_string()) {
      throw std::runtime_error(where + ": missing string field 'label'");
    }
    const std::string label = e["label"].get<std::string>();
    where += " ('" + label + "')";
    if (!e.contains("rows")) throw std::runtime_error(where + ": missing field 'rows'");
    mats.push_back(matrix_from_json(e["rows"], dim, where));
    labels.push_back(label);
  }
  try {
    return MatrixSet(dim, std::move(mats), std::move(labels));
  } catch (const std::invalid_argument& ex) {
    throw std::runtime_error(origin + ": " + ex.what());
  }
}

Json matrix_set_to_json(const MatrixSet& set) {
  Json j;
  j["dim"] = set.dim();
  Json mats = Json::array();
  for (int i = 0; i < set.size(); ++i) {
    Json e;
    e["label"] = set.label(i);
    e["rows"] = matrix_json(set.matrix(i));
    mats.push_back(std::move(e));
  }
  j["matrices"] = std::move(mats);
  return j;
}

// ---------------------------------------------------------------------------
// Result serialization
// ---------------------------------------------------------------------------

Json word_json(const MatrixSet& set, const Word& w) {
  Json j;
  j["indices"] = w.indices;
  j["labels"] = w.empty() ? std::string() : set.word_labels(w);
  j["length"] = w.length();
  return j;
}

Json subradius_bracket_json(const MatrixSet& set, const SubradiusBracket& b) {
  Json j;
  j["lower"] = b.lower;
  j["upper"] = b.upper;
  j["n_max"] = b.n_max;
  j["complete"] = b.complete;
  j["evaluations"] = b.evaluations;
  j["lower_method"] = to_string(b.lower_method);
  j["lower_sigma_chain"] = b.lower_sigma_chain;
  j["lower_det_wedge"] = b.lower_det_wedge;
  j["commuting_fast_path"] = b.commuting_fast_path;
  j["best_word"] = word_json(set, b.best_word);
  j["best_value_kind"] = to_string(b.best_value_kind);
  j["best_norm_word"] = word_json(set, b.best_norm_word);
  j["best_norm_rate"] = b.best_norm_rate;
  return j;
}

Json upper_bracket_json(const MatrixSet& set, const UpperRadiusBracket& b) {
  Json j;
  j["lower"] = b.lower;
  j["upper"] = b.upper;
  j["witness_word"] = word_json(set, b.witness_word);
  j["n_max"] = b.n_max;
  j["evaluations"] = b.evaluations;
  j["complete"] = b.complete;
  return j;
}

Json arc_union_json(const ArcUnion& u) {
  Json j;
  j["full"] = u.is_full();
  Json arcs = Json::array();
  for (const Arc& a : u.arcs()) {
    Json e;
    e["start"] = a.start;
    e["length"] = a.length;
    arcs.push_back(std::move(e));
  }
  j["arcs"] = std::move(arcs);
  j["total_length"] = u.total_length();
  return j;
}

Json multicone_json(const Multicone& m) {
  Json j;
  j["found"] = m.found;
  j["margin"] = m.margin;
  j["rounds"] = m.rounds;
  j["note"] = m.note;
  j["cone"] = arc_union_json(m.cone);
  return j;
}

Json ratio_profile_json(const MatrixSet& set, const RatioProfile& p) {
  Json j;
  j["k"] = p.k;
  j["n_max"] = p.n_max;
  j["evaluations"] = p.evaluations;
  j["complete"] = p.complete;
  j["max_ratio"] = p.max_ratio;
  Json w = Json::array();
  for (const Word& word : p.witness) w.push_back(set.word_labels(word));
  j["witnesses"] = std::move(w);
  return j;
}

Json domination_report_json(const MatrixSet& set, const DominationReport& r) {
  Json j;
  j["k"] = r.k;
  j["n_max"] = r.n_max;
  j["verdict"] = to_string(r.verdict);
  j["certified"] = r.certified;
  j["slope"] = r.slope;
  j["tau_fit"] = r.tau_fit;
  j["c_fit"] = r.c_fit;
  j["r_squared"] = r.r_squared;
  j["witness"] = r.witness ? word_json(set, *r.witness) : Json();
  j["multicone"] = r.multicone ? multicone_json(*r.multicone) : Json();
  j["note"] = r.note;
  j["profile"] = ratio_profile_json(set, r.profile);
  return j;
}

Json domination_index_json(const MatrixSet& set, const DominationIndex& di) {
  Json j;
  j["ell"] = di.ell;
  Json per = Json::array();
  for (const DominationReport& r : di.per_k) per.push_back(domination_report_json(set, r));
  j["per_k"] = std::move(per);
  return j;
}

Json continuity_json(const MatrixSet& set, const ContinuityVerdict& v) {
  Json j;
  j["outcome"] = to_string(v.outcome);
  j["ell"] = v.ell;
  j["reason"] = v.reason;
  j["margin"] = v.margin;
  j["rhs_lower"] = v.rhs_lower;
  j["rhs_upper"] = v.rhs_upper;
  j["rhs_exact"] = v.rhs_exact;
  j["lhs"] = subradius_bracket_json(set, v.lhs);
  j["domination"] = domination_index_json(set, v.domination);
  return j;
}

Json spectrum_profile_json(const SpectrumProfile& p) {
  Json j;
  j["lambdas"] = p.lambdas;
  j["taus"] = p.taus;
  j["zetas"] = p.zetas;
  return j;
}

Json certificate_json(const MatrixSet& set, const PerturbationCertificate& c) {
  Json j;
  j["success"] = c.success;
  j["base_set_id"] = c.base_set_id;
  j["epsilon"] = c.epsilon;
  j["ell"] = c.ell;
  j["reference_rate"] = c.reference_rate;
  j["achieved_rate"] = c.achieved_rate;
  j["theta"] = c.theta;
  j["gap_check"] = c.gap_check;
  j["pivot_index"] = c.pivot_index;
  j["pivot_gap"] = c.pivot_gap;
  j["total_length"] = c.total_length;
  j["pivot_word"] = word_json(set, c.pivot_word);
  j["connector_word"] = word_json(set, c.connector_word);
  j["full_word"] = c.full_word;
  j["source_indices"] = c.source_indices;
  Json mats = Json::array();
  for (const Matrix& m : c.perturbed_matrices) mats.push_back(matrix_json(m));
  j["perturbed_matrices"] = std::move(mats);
  j["needed_epsilon"] = c.needed_epsilon;
  j["note"] = c.note;
  return j;
}

Json certificate_file_json(const MatrixSet& set, const PerturbationCertificate& c) {
  Json f;
  f["kind"] = "perturbation-certificate";
  f["version"] = kVersion;
  f["base_set"] = matrix_set_to_json(set);
  f["certificate"] = certificate_json(set, c);
  return f;
}

Word word_from_json(const Json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("indices") || !j["indices"].is_array()) {
    throw std::runtime_error(where + ": expected an object with an 'indices' array");
  }
  Word w;
  for (const Json& e : j["indices"]) {
    if (!e.is_number_integer()) throw std::runtime_error(where + ": indices must be integers");
    w.indices.push_back(e.get<int>());
  }
  return w;
}

PerturbationCertificate certificate_from_json(const Json& c, const MatrixSet& set,
                                              const std::string& origin) {
  PerturbationCertificate cert;
  try {
    cert.success = c.at("success").get<bool>();
    cert.base_set_id = c.at("base_set_id").get<std::string>();
    cert.epsilon = c.at("epsilon").get<double>();
    cert.ell = c.at("ell").get<int>();
    cert.reference_rate = c.at("reference_rate").get<double>();
    cert.achieved_rate = c.at("achieved_rate").get<double>();
    cert.theta = c.at("theta").get<double>();
    cert.gap_check = c.at("gap_check").get<double>();
    cert.pivot_index = c.at("pivot_index").get<int>();
    cert.pivot_gap = c.at("pivot_gap").get<double>();
    cert.total_length = c.at("total_length").get<int>();
    cert.pivot_word = word_from_json(c.at("pivot_word"), origin + ": pivot_word");
    cert.connector_word = word_from_json(c.at("connector_word"), origin + ": connector_word");
    cert.full_word = c.at("full_word").get<std::string>();
    cert.source_indices = c.at("source_indices").get<std::vector<int>>();
    const Json& mats = c.at("perturbed_matrices");
    if (!mats.is_array()) throw std::runtime_error(origin + ": perturbed_matrices must be an array");
    for (std::size_t i = 0; i < mats.size(); ++i) {
      cert.perturbed_matrices.push_back(matrix_from_json(
          mats[i], set.dim(), origin + ": perturbed_matrices[" + std::to_string(i) + "]"));
    }
    cert.needed_epsilon = c.at("needed_epsilon").get<double>();
    cert.note = c.at("note").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(origin + ": malformed certificate: " + e.what());
  }
  return cert;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

void write_scan_csv(const std::string& path, const RotationScan& s) {
  std::string text = "theta,upper_rate,lower_bound\n";
  for (std::size_t i = 0; i < s.thetas.size(); ++i) {
    text += num17(s.thetas[i]);
    text += ",";
    text += num17(s.upper_rates[i]);
    text += ",";
    text += num17(s.lower_rates[i]);
    text += "\n";
  }
  write_file(path, text);
}

MatrixSet make_gallery(const std::string& name, int n, int m, int p, int q, double delta) {
  if (name == "simple") return gallery_simple();
  if (name == "simple-perturbed") return gallery_simple_perturbed(n);
  if (name == "nasty1") return gallery_nasty1();
  if (name == "no-discontinuity") return gallery_no_discontinuity();
  if (name == "non-dominated") return gallery_non_dom_invertibilized(m);
  if (name == "rational-rotation") return gallery_rational_rotation(p, q, delta);
  throw std::runtime_error("unknown gallery name '" + name +
                           "'; valid names: simple, simple-perturbed, nasty1, no-discontinuity, "
                           "non-dominated, rational-rotation");
}

}  // namespace

// ---------------------------------------------------------------------------
// Public surface
// ---------------------------------------------------------------------------

MatrixSet parse_matrix_set(const std::string& text, const std::string& origin) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(origin + ": " + e.what());
  }
  return matrix_set_from_json(j, origin);
}

MatrixSet load_matrix_set(const std::string& path) {
  return parse_matrix_set(read_file(path), path);
}

std::string format_matrix_set(const MatrixSet& set) { return dump_json(matrix_set_to_json(set)); }

void save_matrix_set(const MatrixSet& set, const std::string& path) {
  write_file(path, format_matrix_set(set));
}

std::string fnv1a_digest(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string("fnv1a:") + buf;
}

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"certified brackets, domination tests, Barabanov functions, perturbation "
               "certificates, and probes for sets of invertible matrices"};
  app.name("subradius");
  app.require_subcommand(1);

  std::string out_path;
  bool strict = false;
  std::uint64_t budget = BracketConfig{}.budget;
  int threads = 0;
  app.add_option("--out", out_path, "write the JSON run report to this file instead of stdout");
  app.add_flag("--strict", strict, "exit with code 2 when the reported verdict is undetermined");
  app.add_option("--budget", budget, "enumeration node budget for bracket searches");
  app.add_option("--threads", threads, "worker threads (0 = SUBRADIUS_THREADS or hardware)")
      ->check(CLI::Range(0, 4096));

  struct ReportParts {
    Json config = Json::object();
    Json outputs = Json::object();
    Json input_digest;  // null unless a set file was read
    bool undetermined = false;
    bool failed = false;
  };
  std::string command_name;
  std::function<ReportParts()> runner;

  const auto bracket_cfg = [&budget, &threads]() {
    BracketConfig cfg;
    cfg.budget = budget;
    cfg.threads = threads;
    return cfg;
  };
  // Loads the set named by `path` and records its digest in the report.
  const auto load_input = [](const std::string& path, ReportParts& parts) {
    const std::string bytes = read_file(path);
    parts.input_digest = fnv1a_digest(bytes);
    return parse_matrix_set(bytes, path);
  };
  const auto common_config = [&](Json& config, const std::string& set_path) {
    config["set"] = set_path;
    config["budget"] = budget;
    config["threads"] = threads;
  };

  // --- bracket ---------------------------------------------------------
  struct {
    std::string set;
    int n_max = 12;
    bool upper = false;
    bool no_fast_paths = false;
  } bo;
  auto* cmd_bracket = app.add_subcommand(
      "bracket", "two-sided bracket for the lower spectral radius (optionally the upper radius)");
  cmd_bracket->fallthrough();
  cmd_bracket->add_option("--set", bo.set, "matrix-set JSON file")->required();
  cmd_bracket->add_option("--n-max", bo.n_max, "maximal word length")->check(CLI::Range(1, 64));
  cmd_bracket->add_flag("--upper", bo.upper, "also bracket the upper (joint) spectral radius");
  cmd_bracket->add_flag("--no-fast-paths", bo.no_fast_paths,
                        "disable the diagonal / singleton shortcuts");
  cmd_bracket->callback([&] {
    command_name = "bracket";
    runner = [&]() {
      ReportParts parts;
      const MatrixSet set = load_input(bo.set, parts);
      BracketConfig cfg = bracket_cfg();
      cfg.allow_fast_paths = !bo.no_fast_paths;
      common_config(parts.config, bo.set);
      parts.config["n_max"] = bo.n_max;
      parts.config["fast_paths"] = cfg.allow_fast_paths;
      parts.config["upper"] = bo.upper;
      parts.outputs["subradius"] = subradius_bracket_json(set, subradius_bracket(set, bo.n_max, cfg));
      parts.outputs["upper_radius"] =
          bo.upper ? upper_bracket_json(set, upper_radius_bracket(set, bo.n_max, cfg)) : Json();
      return parts;
    };
  });

  // --- dominate --------------------------------------------------------
  struct {
    std::string set;
    int k = 0;
    int n_max = 12;
    double margin = 0.02;
  } dm;
  auto* cmd_dominate = app.add_subcommand(
      "dominate", "k-domination test, or the least domination index when --k is omitted");
  cmd_dominate->fallthrough();
  cmd_dominate->add_option("--set", dm.set, "matrix-set JSON file")->required();
  cmd_dominate->add_option("--k", dm.k, "index to test (0 = scan for the least index)")
      ->check(CLI::Range(0, 64));
  cmd_dominate->add_option("--n-max", dm.n_max, "maximal word length")->check(CLI::Range(1, 64));
  cmd_dominate->add_option("--margin", dm.margin, "minimal contraction accepted as dominated");
  cmd_dominate->callback([&] {
    command_name = "dominate";
    runner = [&]() {
      ReportParts parts;
      const MatrixSet set = load_input(dm.set, parts);
      common_config(parts.config, dm.set);
      parts.config["k"] = dm.k;
      parts.config["n_max"] = dm.n_max;
      parts.config["margin"] = dm.margin;
      if (dm.k == 0) {
        const DominationIndex di = least_domination_index(set, dm.n_max, bracket_cfg());
        parts.outputs["index"] = domination_index_json(set, di);
        for (const DominationReport& r : di.per_k) {
          if (r.k < di.ell && r.verdict == DominationVerdict::Undetermined) {
            parts.undetermined = true;  // the least-index claim rests on this k
          }
        }
      } else {
        const DominationReport rep = test_domination(set, dm.k, dm.n_max, dm.margin, bracket_cfg());
        parts.outputs["report"] = domination_report_json(set, rep);
        parts.undetermined = rep.verdict == DominationVerdict::Undetermined;
      }
      return parts;
    };
  });

  // --- barabanov -------------------------------------------------------
  struct {
    std::string set;
    int grid = 4096;
    double tol = 1e-9;
    int max_iter = 100000;
    bool upper = false;
    std::string csv;
  } ba;
  auto* cmd_barabanov = app.add_subcommand(
      "barabanov", "lower (or upper) Barabanov function on an invariant multicone");
  cmd_barabanov->fallthrough();
  cmd_barabanov->add_option("--set", ba.set, "matrix-set JSON file")->required();
  cmd_barabanov->add_option("--grid", ba.grid, "grid nodes on the multicone")
      ->check(CLI::Range(8, 1 << 22));
  cmd_barabanov->add_option("--tol", ba.tol, "residual and beta-increment tolerance");
  cmd_barabanov->add_option("--max-iter", ba.max_iter, "iteration cap")->check(CLI::Range(1, 1 << 30));
  cmd_barabanov->add_flag("--upper", ba.upper, "estimate the upper (joint) radius instead");
  cmd_barabanov->add_option("--csv", ba.csv, "write the psi nodes as CSV (angle,value)");
  cmd_barabanov->callback([&] {
    command_name = "barabanov";
    runner = [&]() {
      ReportParts parts;
      const MatrixSet set = load_input(ba.set, parts);
      common_config(parts.config, ba.set);
      parts.config["grid"] = ba.grid;
      parts.config["tol"] = ba.tol;
      parts.config["max_iter"] = ba.max_iter;
      parts.config["upper"] = ba.upper;
      const Multicone mc = find_multicone_2d(set);
      if (!mc.found) {
        throw std::runtime_error("no invariant multicone certifies 1-domination: " + mc.note);
      }
      BarabanovConfig bc;
      bc.grid_size = ba.grid;
      bc.tol = ba.tol;
      bc.max_iter = ba.max_iter;
      bc.threads = threads;
      const BarabanovResult r =
          ba.upper ? compute_upper_barabanov(set, mc, bc) : compute_barabanov(set, mc, bc);
      parts.outputs["multicone"] = multicone_json(mc);
      parts.outputs["beta"] = r.beta;
      parts.outputs["value"] = std::exp(r.beta);
      parts.outputs["residual"] = r.residual;
      parts.outputs["contraction_estimate"] = r.contraction_estimate;
      parts.outputs["iterations"] = r.iterations;
      parts.outputs["beta_error"] = r.beta_error;
      parts.outputs["lower_bound"] = barabanov_lower_bound(r);
      Json psi;
      psi["nodes"] = r.psi.size();
      psi["mean"] = r.psi.mean();
      psi["discrete_lipschitz"] = r.psi.discrete_lipschitz();
      psi["lipschitz_bound"] = r.psi.lipschitz_bound;
      parts.outputs["psi"] = std::move(psi);
      if (!ba.csv.empty()) {
        std::ostringstream ss;
        write_csv(r.psi, ss);
        write_file(ba.csv, ss.str());
      }
      parts.outputs["csv"] = ba.csv.empty() ? Json() : Json(ba.csv);
      return parts;
    };
  });

  // --- zeta ------------------------------------------------------------
  struct {
    std::string set;
    std::vector<int> word;
    int upto_k = 0;
    int ell = 2;
    double z_delta = std::numeric_limits<double>::quiet_NaN();
    int n_lo = 1;
    int n_hi = 6;
  } ze;
  auto* cmd_zeta = app.add_subcommand(
      "zeta", "singular-value profiles (lambda, tau, zeta) of the elements and of word products");
  cmd_zeta->fallthrough();
  cmd_zeta->add_option("--set", ze.set, "matrix-set JSON file")->required();
  cmd_zeta->add_option("--word", ze.word, "element indices of a word to profile, e.g. 0,1,0")
      ->delimiter(',');
  cmd_zeta->add_option("--k", ze.upto_k, "compute zeta_2..zeta_k only (0 = all)")
      ->check(CLI::Range(0, 64));
  cmd_zeta->add_option("--ell", ze.ell, "level for the pivot split and the z profile")
      ->check(CLI::Range(2, 64));
  cmd_zeta->add_option("--z-delta", ze.z_delta,
                       "also scan the alignment-obstruction profile z_n at this delta");
  cmd_zeta->add_option("--n-lo", ze.n_lo, "first word length of the z scan")->check(CLI::Range(1, 32));
  cmd_zeta->add_option("--n-hi", ze.n_hi, "last word length of the z scan")->check(CLI::Range(1, 32));
  cmd_zeta->callback([&] {
    command_name = "zeta";
    runner = [&]() {
      ReportParts parts;
      const MatrixSet set = load_input(ze.set, parts);
      common_config(parts.config, ze.set);
      parts.config["word"] = ze.word;
      parts.config["k"] = ze.upto_k;
      parts.config["ell"] = ze.ell;
      parts.config["z_delta"] = std::isfinite(ze.z_delta) ? Json(ze.z_delta) : Json();
      parts.config["n_lo"] = ze.n_lo;
      parts.config["n_hi"] = ze.n_hi;
      Json elements = Json::array();
      for (int i = 0; i < set.size(); ++i) {
        Json e;
        e["label"] = set.label(i);
        e["profile"] = spectrum_profile_json(spectrum_profile(set.matrix(i), ze.upto_k));
        elements.push_back(std::move(e));
      }
      parts.outputs["elements"] = std::move(elements);
      if (!ze.word.empty()) {
        const Word w{ze.word};
        set.validate_word(w);
        const ScaledMatrix sm = scaled_product(set, w);
        const SpectrumProfile prof = spectrum_profile(sm, ze.upto_k);
        Json wj;
        wj["word"] = word_json(set, w);
        wj["profile"] = spectrum_profile_json(prof);
        if (ze.ell <= set.dim()) {
          const PivotSplit split = pivot(prof, ze.ell);
          Json pj;
          pj["p"] = split.p;
          pj["gap"] = split.gap;
          wj["pivot"] = std::move(pj);
        } else {
          wj["pivot"] = Json();
        }
        parts.outputs["word"] = std::move(wj);
      } else {
        parts.outputs["word"] = Json();
      }
      if (std::isfinite(ze.z_delta)) {
        const ZDeltaProfile zp =
            z_delta_profile(set, ze.z_delta, ze.ell, ze.n_lo, ze.n_hi, bracket_cfg());
        Json zj;
        zj["ell"] = zp.ell;
        zj["delta"] = zp.delta;
        zj["wedge_upper"] = zp.wedge_upper;
        zj["evaluations"] = zp.evaluations;
        zj["complete"] = zp.complete;
        Json points = Json::array();
        for (const ZDeltaPoint& pt : zp.points) {
          Json pj;
          pj["n"] = pt.n;
          pj["z"] = pt.infinite ? Json(std::numeric_limits<double>::infinity()) : Json(pt.z);
          pj["infinite"] = pt.infinite;
          pj["qualifying"] = pt.qualifying;
          pj["witness"] = word_json(set, pt.witness);
          points.push_back(std::move(pj));
        }
        zj["points"] = std::move(points);
        parts.outputs["z_delta"] = std::move(zj);
      } else {
        parts.outputs["z_delta"] = Json();
      }
      return parts;
    };
  });

  // --- perturb ---------------------------------------------------------
  struct {
    std::string set;
    double epsilon = std::numeric_limits<double>::quiet_NaN();
    int n_max = 12;
    double target = 0.0;
    int max_pivot_len = 512;
    int connector_max_len = 2;
    int connector_power_cap = 256;
    int rounds = 4;
    double improve_tol = 1e-6;
    std::string cert_out;
    std::string verify_cert;
  } pe;
  auto* cmd_perturb = app.add_subcommand(
      "perturb", "search for (or verify) a rate-lowering perturbation certificate");
  cmd_perturb->fallthrough();
  cmd_perturb->add_option("--set", pe.set, "matrix-set JSON file");
  cmd_perturb->add_option("--epsilon", pe.epsilon, "perturbation budget in operator norm");
  cmd_perturb->add_option("--n-max", pe.n_max, "depth for the reference and pivot brackets")
      ->check(CLI::Range(1, 64));
  cmd_perturb->add_option("--target", pe.target, "stop improving once the rate reaches this");
  cmd_perturb->add_option("--max-pivot-len", pe.max_pivot_len, "cap on the repeated pivot length")
      ->check(CLI::Range(1, 1 << 20));
  cmd_perturb->add_option("--connector-max-len", pe.connector_max_len,
                          "base connector words up to this length")
      ->check(CLI::Range(1, 8));
  cmd_perturb->add_option("--connector-power-cap", pe.connector_power_cap,
                          "cap on connector repetitions")
      ->check(CLI::Range(1, 1 << 20));
  cmd_perturb->add_option("--rounds", pe.rounds, "greedy refinement rounds")->check(CLI::Range(1, 64));
  cmd_perturb->add_option("--improve-tol", pe.improve_tol,
                          "relative improvement needed to keep refining");
  cmd_perturb->add_option("--cert-out", pe.cert_out, "write a standalone certificate file here");
  cmd_perturb->add_option("--verify-cert", pe.verify_cert,
                          "re-check this certificate file instead of searching");
  cmd_perturb->callback([&] {
    command_name = "perturb";
    runner = [&]() {
      ReportParts parts;
      if (!pe.verify_cert.empty()) {
        const std::string bytes = read_file(pe.verify_cert);
        Json cj;
        try {
          cj = Json::parse(bytes);
        } catch (const nlohmann::json::parse_error& e) {
          throw std::runtime_error(pe.verify_cert + ": " + e.what());
        }
        if (!cj.is_object() || cj.value("kind", std::string()) != "perturbation-certificate") {
          throw std::runtime_error(pe.verify_cert + ": not a perturbation-certificate file");
        }
        const MatrixSet base = matrix_set_from_json(cj.at("base_set"), pe.verify_cert + ": base_set");
        if (!pe.set.empty()) {
          const MatrixSet given = load_input(pe.set, parts);
          if (given.dim() != base.dim() || given.labels() != base.labels() ||
              hausdorff_distance(given, base) != 0.0) {
            throw std::runtime_error("certificate base set does not match --set " + pe.set);
          }
        } else {
          parts.input_digest = fnv1a_digest(bytes);
        }
        const PerturbationCertificate cert =
            certificate_from_json(cj.at("certificate"), base, pe.verify_cert);
        common_config(parts.config, pe.set);
        parts.config["verify_cert"] = pe.verify_cert;
        const CertificateCheck chk = verify_certificate(base, cert);
        parts.outputs["verified"] = chk.verified;
        parts.outputs["failure"] = chk.verified ? Json() : Json(chk.failure);
        parts.outputs["recomputed_rate"] = chk.recomputed_rate;
        parts.outputs["recomputed_theta"] = chk.recomputed_theta;
        parts.outputs["max_letter_distance"] = chk.max_letter_distance;
        parts.outputs["hausdorff"] = chk.hausdorff;
        parts.outputs["letter_mismatch"] = chk.letter_mismatch;
        parts.outputs["rate_mismatch"] = chk.rate_mismatch;
        Json claimed;
        claimed["epsilon"] = cert.epsilon;
        claimed["achieved_rate"] = cert.achieved_rate;
        claimed["reference_rate"] = cert.reference_rate;
        claimed["theta"] = cert.theta;
        claimed["total_length"] = cert.total_length;
        claimed["full_word"] = cert.full_word;
        parts.outputs["claimed"] = std::move(claimed);
        parts.failed = !chk.verified;
        return parts;
      }

      if (pe.set.empty()) throw std::runtime_error("perturb: --set is required");
      if (!std::isfinite(pe.epsilon)) {
        throw std::runtime_error("perturb: --epsilon is required (or use --verify-cert)");
      }
      const MatrixSet set = load_input(pe.set, parts);
      PerturbConfig pc;
      pc.n_max = pe.n_max;
      pc.target = pe.target;
      pc.max_pivot_len = pe.max_pivot_len;
      pc.connector_max_len = pe.connector_max_len;
      pc.connector_power_cap = pe.connector_power_cap;
      pc.rounds = pe.rounds;
      pc.improve_tol = pe.improve_tol;
      pc.bracket = bracket_cfg();
      common_config(parts.config, pe.set);
      parts.config["epsilon"] = pe.epsilon;
      parts.config["n_max"] = pe.n_max;
      parts.config["target"] = pe.target;
      parts.config["max_pivot_len"] = pe.max_pivot_len;
      parts.config["connector_max_len"] = pe.connector_max_len;
      parts.config["connector_power_cap"] = pe.connector_power_cap;
      parts.config["rounds"] = pe.rounds;
      parts.config["improve_tol"] = pe.improve_tol;
      const PerturbationCertificate cert = perturb_reduce(set, pe.epsilon, pc);
      parts.outputs["certificate"] = certificate_json(set, cert);
      if (cert.success) {
        double maxd = 0.0;
        for (std::size_t i = 0; i < cert.perturbed_matrices.size(); ++i) {
          maxd = std::max(maxd, operator_norm(cert.perturbed_matrices[i] -
                                              set.matrix(cert.source_indices[i])));
        }
        std::vector<Matrix> joined = set.matrices();
        joined.insert(joined.end(), cert.perturbed_matrices.begin(),
                      cert.perturbed_matrices.end());
        parts.outputs["max_letter_distance"] = maxd;
        parts.outputs["hausdorff"] = hausdorff_distance(set, MatrixSet(set.dim(), std::move(joined)));
      } else {
        parts.outputs["max_letter_distance"] = Json();
        parts.outputs["hausdorff"] = Json();
      }
      if (!pe.cert_out.empty()) write_file(pe.cert_out, dump_json(certificate_file_json(set, cert)));
      parts.outputs["certificate_file"] = pe.cert_out.empty() ? Json() : Json(pe.cert_out);
      // A 1-dominated base is a theorem-backed impossibility; other failures
      // only say the search found nothing within its caps.
      parts.undetermined =
          !cert.success && cert.note.rfind("set is 1-dominated", 0) != 0;
      return parts;
    };
  });

  // --- probe -----------------------------------------------------------
  auto* cmd_probe = app.add_subcommand(
      "probe", "continuity verdicts, rotation scans, the example gallery, and impurity probes");
  cmd_probe->require_subcommand(1);
  cmd_probe->fallthrough();

  struct {
    std::string set;
    int n_max = 12;
  } pc_o;
  auto* cmd_continuity =
      cmd_probe->add_subcommand("continuity", "continuity verdict for the lower spectral radius");
  cmd_continuity->fallthrough();
  cmd_continuity->add_option("--set", pc_o.set, "matrix-set JSON file")->required();
  cmd_continuity->add_option("--n-max", pc_o.n_max, "maximal word length")->check(CLI::Range(1, 64));
  cmd_continuity->callback([&] {
    command_name = "probe continuity";
    runner = [&]() {
      ReportParts parts;
      const MatrixSet set = load_input(pc_o.set, parts);
      common_config(parts.config, pc_o.set);
      parts.config["n_max"] = pc_o.n_max;
      const ContinuityVerdict v = continuity_check(set, pc_o.n_max, bracket_cfg());
      parts.outputs = continuity_json(set, v);
      parts.undetermined = v.outcome == ContinuityOutcome::Undetermined;
      return parts;
    };
  });

  struct {
    std::string set;
    std::vector<double> thetas;
    double theta_max = 0.05;
    int theta_count = 11;
    int n_max = 10;
    std::string csv;
  } ps_o;
  auto* cmd_scan = cmd_probe->add_subcommand(
      "scan", "bracket the set with the rotation R_theta composed on the left, over a theta grid");
  cmd_scan->fallthrough();
  cmd_scan->add_option("--set", ps_o.set, "matrix-set JSON file")->required();
  cmd_scan->add_option("--thetas", ps_o.thetas, "explicit angle grid, e.g. 0,0.01,0.02")
      ->delimiter(',');
  cmd_scan->add_option("--theta-max", ps_o.theta_max,
                       "half-width of the symmetric default grid [-max, max]");
  cmd_scan->add_option("--theta-count", ps_o.theta_count, "node count of the default grid")
      ->check(CLI::Range(2, 20001));
  cmd_scan->add_option("--n-max", ps_o.n_max, "maximal word length per grid point")
      ->check(CLI::Range(1, 64));
  cmd_scan->add_option("--csv", ps_o.csv, "write the scan as CSV (theta,upper_rate,lower_bound)");
  cmd_scan->callback([&] {
    command_name = "probe scan";
    runner = [&]() {
      ReportParts parts;
      const MatrixSet set = load_input(ps_o.set, parts);
      std::vector<double> grid = ps_o.thetas;
      if (grid.empty()) {
        if (!(ps_o.theta_max > 0.0)) throw std::runtime_error("probe scan: --theta-max must be > 0");
        for (int i = 0; i < ps_o.theta_count; ++i) {
          grid.push_back(-ps_o.theta_max +
                         2.0 * ps_o.theta_max * i / static_cast<double>(ps_o.theta_count - 1));
        }
      }
      common_config(parts.config, ps_o.set);
      parts.config["thetas"] = grid;
      parts.config["n_max"] = ps_o.n_max;
      const RotationScan s = rotation_scan(set, grid, ps_o.n_max, bracket_cfg());
      parts.outputs["baseline_lower"] = s.baseline_lower;
      parts.outputs["baseline_upper"] = s.baseline_upper;
      parts.outputs["margin"] = s.margin;
      parts.outputs["drop_detected"] = s.drop_detected;
      parts.outputs["drop_magnitude"] = s.drop_magnitude;
      parts.outputs["thetas"] = s.thetas;
      parts.outputs["upper_rates"] = s.upper_rates;
      parts.outputs["lower_rates"] = s.lower_rates;
      if (!ps_o.csv.empty()) write_scan_csv(ps_o.csv, s);
      parts.outputs["csv"] = ps_o.csv.empty() ? Json() : Json(ps_o.csv);
      return parts;
    };
  });

  struct {
    std::string name;
    int n = 1;
    int m = 3;
    int p = 2;
    int q = 1;
    double delta = 0.0;
    std::string set_out;
  } pg_o;
  auto* cmd_gallery = cmd_probe->add_subcommand("gallery", "emit a named example set");
  cmd_gallery->fallthrough();
  cmd_gallery->add_option("--name", pg_o.name,
                          "simple | simple-perturbed | nasty1 | no-discontinuity | non-dominated "
                          "| rational-rotation")
      ->required();
  cmd_gallery->add_option("--n", pg_o.n, "rotation denominator for simple-perturbed: R_(pi/(2n))")
      ->check(CLI::Range(1, 1 << 20));
  cmd_gallery->add_option("--m", pg_o.m, "exponent for non-dominated: entries 2^-m")
      ->check(CLI::Range(0, 500));
  cmd_gallery->add_option("--p", pg_o.p, "rotation order for rational-rotation: R_(q pi / p)")
      ->check(CLI::Range(1, 1 << 16));
  cmd_gallery->add_option("--q", pg_o.q, "rotation numerator for rational-rotation");
  cmd_gallery->add_option("--delta", pg_o.delta,
                          "arc half-width for rational-rotation (0 = pi/(4p))");
  cmd_gallery->add_option("--set-out", pg_o.set_out, "also write the set to this file");
  cmd_gallery->callback([&] {
    command_name = "probe gallery";
    runner = [&]() {
      ReportParts parts;
      const MatrixSet g = make_gallery(pg_o.name, pg_o.n, pg_o.m, pg_o.p, pg_o.q, pg_o.delta);
      parts.config["name"] = pg_o.name;
      parts.config["n"] = pg_o.n;
      parts.config["m"] = pg_o.m;
      parts.config["p"] = pg_o.p;
      parts.config["q"] = pg_o.q;
      parts.config["delta"] = pg_o.delta;
      const std::string text = format_matrix_set(g);
      if (!pg_o.set_out.empty()) write_file(pg_o.set_out, text);
      parts.outputs["name"] = pg_o.name;
      parts.outputs["digest"] = fnv1a_digest(text);
      parts.outputs["path"] = pg_o.set_out.empty() ? Json() : Json(pg_o.set_out);
      parts.outputs["set"] = matrix_set_to_json(g);
      return parts;
    };
  });

  struct {
    std::string set;
    std::vector<double> eps = {0.0, 0.05, 0.1, 0.15, 0.2};
    int n_max = 12;
  } pi_o;
  auto* cmd_impurities = cmd_probe->add_subcommand(
      "impurities", "minimal norm growth of H-words carrying an epsilon fraction of R letters");
  cmd_impurities->fallthrough();
  cmd_impurities->add_option("--set", pi_o.set, "matrix-set JSON file with exactly 2 elements (H, R)")
      ->required();
  cmd_impurities->add_option("--eps", pi_o.eps, "impurity fractions, e.g. 0,0.05,0.1")
      ->delimiter(',');
  cmd_impurities->add_option("--n-max", pi_o.n_max, "maximal word length (exhaustive)")
      ->check(CLI::Range(1, 24));
  cmd_impurities->callback([&] {
    command_name = "probe impurities";
    runner = [&]() {
      ReportParts parts;
      const MatrixSet set = load_input(pi_o.set, parts);
      if (set.size() != 2) {
        throw std::runtime_error("probe impurities: the set must have exactly 2 elements (H, R)");
      }
      common_config(parts.config, pi_o.set);
      parts.config["eps"] = pi_o.eps;
      parts.config["n_max"] = pi_o.n_max;
      const ImpurityProbe ip =
          resists_impurities_probe(set.matrix(0), set.matrix(1), pi_o.eps, pi_o.n_max);
      parts.outputs["h_label"] = set.label(0);
      parts.outputs["r_label"] = set.label(1);
      parts.outputs["n_max"] = ip.n_max;
      parts.outputs["margin"] = ip.margin;
      parts.outputs["positive_with_margin"] = ip.positive_with_margin;
      parts.outputs["epsilons"] = ip.epsilons;
      parts.outputs["lambda_est"] = ip.lambda_est;
      Json ws = Json::array();
      for (const Word& w : ip.witnesses) ws.push_back(word_json(set, w));
      parts.outputs["witnesses"] = std::move(ws);
      return parts;
    };
  });

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  if (!runner) {
    err << "error: no subcommand selected\n";
    return 1;
  }

  ReportParts parts;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    parts = runner();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  Json report;
  report["command"] = command_name;
  report["version"] = kVersion;
  report["input_digest"] = parts.input_digest;
  report["config"] = parts.config;
  report["outputs"] = parts.outputs;
  report["wall_time_s"] = wall;
  const std::string text = dump_json(report);
  try {
    if (out_path.empty()) {
      out << text;
    } else {
      write_file(out_path, text);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  if (parts.failed) return 1;
  if (strict && parts.undetermined) return 2;
  return 0;
}

}  // namespace subradius
