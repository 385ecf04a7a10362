#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "sphere4/cdl.hpp"
#include "sphere4/landscape.hpp"
#include "sphere4/optimize.hpp"
#include "sphere4/recovery.hpp"

#ifndef SPHERE4_VERSION
#define SPHERE4_VERSION "0.0.0"
#endif

namespace sphere4::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Header comment lines identifying how a file was produced. No timestamps, so
/// reruns are byte-identical.
struct Provenance {
  std::string command;
  std::uint64_t seed = 0;

  [[nodiscard]] std::string header() const {
    std::string h = "# sphere4 " SPHERE4_VERSION "\n";
    h += "# command: " + command + "\n";
    h += "# seed: " + std::to_string(seed) + "\n";
    return h;
  }
  [[nodiscard]] json to_json() const {
    return {{"version", SPHERE4_VERSION}, {"command", command}, {"seed", seed}};
  }
};

/// Write via a sibling temp file + rename.
inline void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << content;
    if (!out.flush()) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// CSV matrices
// ---------------------------------------------------------------------------

inline std::string matrix_csv(const Mat& m, const std::string& header = {}) {
  std::string s = header;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) s += ',';
      s += fmt(m(i, j));
    }
    s += '\n';
  }
  return s;
}

/// Parses a numeric CSV; blank lines and lines starting with '#' are skipped.
inline Mat parse_matrix_csv(const std::string& text, const std::string& origin = "<csv>") {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      const std::size_t end = std::min(line.find(',', pos), line.size());
      const std::string cell = line.substr(pos, end - pos);
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw IoError(origin + ":" + std::to_string(lineno) + ": not a number: '" + cell + "'");
      }
      pos = end + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw IoError(origin + ":" + std::to_string(lineno) + ": ragged row");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) return Mat(0, 0);
  Mat m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

inline Mat read_matrix_csv(const fs::path& path) { return parse_matrix_csv(read_text(path), path.string()); }

/// Matrix CSV plus a JSON sidecar (<stem>.json) describing it. `layout` says
/// whether rows are samples ("rows=samples") or the matrix as-is ("matrix").
inline void write_matrix(const fs::path& csv, const Mat& m, const std::string& kind, const Provenance& prov,
                         const json& extra = json::object(), const std::string& layout = "matrix") {
  write_atomic(csv, matrix_csv(m, prov.header()));
  json side = {{"file", csv.filename().string()},
               {"kind", kind},
               {"rows", m.rows()},
               {"cols", m.cols()},
               {"layout", layout},
               {"provenance", prov.to_json()}};
  for (const auto& [k, v] : extra.items()) side[k] = v;
  fs::path js = csv;
  js.replace_extension(".json");
  write_atomic(js, side.dump(2) + "\n");
}

inline json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Result serialization
// ---------------------------------------------------------------------------

inline json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline json to_json(const Preconditioner& p) {
  return {{"n", p.size()},
          {"convention", std::string(to_string(p.convention()))},
          {"floored", p.floored()},
          {"spectrum_weights", vec_json(p.weights())}};
}

inline Preconditioner preconditioner_from_json(const json& j) {
  const int n = j.at("n").get<int>();
  const auto w = j.at("spectrum_weights").get<std::vector<double>>();
  if (static_cast<int>(w.size()) != n) throw IoError("preconditioner: weight count != n");
  Vec half(n / 2 + 1);
  for (int k = 0; k < half.size(); ++k) half(k) = w[static_cast<std::size_t>(k)];
  return Preconditioner(half, n, scale_convention_from_string(j.at("convention").get<std::string>()),
                        j.value("floored", false));
}

inline json to_json(const SolveResult& r, bool with_trace) {
  json j = {{"q_star", vec_json(r.q_star.coords())},
            {"iterations", r.iterations},
            {"final_grad_norm", r.final_grad_norm},
            {"termination", std::string(to_string(r.termination))},
            {"escapes_taken", r.escapes_taken}};
  if (with_trace) j["objective_trace"] = r.objective_trace;
  return j;
}

inline json to_json(const RecoveryOutcome& o) {
  return {{"rho_e", o.rho_e}, {"best_index", o.best_index}, {"success", o.success}};
}

inline json to_json(const Alignment& a) {
  return {{"shift", a.shift}, {"sign", a.sign}, {"error", a.error}};
}

inline json to_json(const LandscapeReport& r) {
  json j = {{"region", std::string(to_string(r.region.label))},
            {"phi_t", r.region.phi_t},
            {"region_threshold", r.region.threshold},
            {"grad_norm", r.grad_norm},
            {"alphas", vec_json(r.alphas)},
            {"betas", vec_json(r.betas)},
            {"big_count", r.big_count},
            {"cubic_residual", r.cubic_residual},
            {"cubic_residual_ok", r.cubic_residual_ok},
            {"hess_min_eig", r.hess_min_eig},
            {"hess_min_vec", vec_json(r.hess_min_vec)},
            {"curv_tol", r.curv_tol},
            {"best_index", r.best_index},
            {"best_inner", r.best_inner}};
  json c = {{"kind", std::string(to_string(r.classification.kind))}};
  if (r.classification.kind == PointClass::near_solution) {
    c["index"] = r.classification.index;
    c["inner_product"] = r.classification.inner_product;
  }
  j["classification"] = c;
  return j;
}

inline const char* kLandscapeCsvHeader = "seed,region,grad_norm,min_eig,classification,best_index,inner_product\n";

inline std::string landscape_csv_row(std::uint64_t seed, const LandscapeReport& r) {
  const bool near = r.classification.kind == PointClass::near_solution;
  const int idx = near ? r.classification.index : r.best_index;
  const double ip = near ? r.classification.inner_product : r.best_inner;
  return std::to_string(seed) + "," + std::string(to_string(r.region.label)) + "," + fmt(r.grad_norm) + "," +
         fmt(r.hess_min_eig) + "," + std::string(to_string(r.classification.kind)) + "," + std::to_string(idx) +
         "," + fmt(ip) + "\n";
}

inline const char* kCoverageCsvHeader = "trial,seed,rho_e,best_index,success,cumulative_covered\n";

inline std::string coverage_csv(const DictionaryCoverage& cov, std::uint64_t seed_base, const Provenance& prov) {
  std::string s = prov.header() + kCoverageCsvHeader;
  for (std::size_t t = 0; t < cov.per_trial.size(); ++t) {
    const RecoveryOutcome& o = cov.per_trial[t];
    s += std::to_string(t) + "," + std::to_string(trial_seed(seed_base, static_cast<int>(t))) + "," + fmt(o.rho_e) +
         "," + std::to_string(o.best_index) + "," + (o.success ? "1" : "0") + "," +
         std::to_string(cov.cumulative[t]) + "\n";
  }
  return s;
}

inline const char* kFilterCsvHeader = "filter,shift,sign,aligned_error,recovered\n";

inline std::string filter_csv(const FilterRecovery& fr, const Provenance& prov) {
  std::string s = prov.header() + kFilterCsvHeader;
  for (const FilterResult& f : fr.filters) {
    s += std::to_string(f.filter) + "," + std::to_string(f.best.shift) + "," + std::to_string(f.best.sign) + "," +
         fmt(f.best.error) + "," + (f.recovered ? "1" : "0") + "\n";
  }
  return s;
}

}  // namespace sphere4::io
