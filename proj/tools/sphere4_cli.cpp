// sphere4 command-line driver: gen / solve / sweep / landscape / align.
//
// Exit codes: 0 ok, 2 invalid arguments, 3 numerical failure, 4 I/O.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "sphere4/harness.hpp"
#include "sphere4/io.hpp"
#include "sphere4/sphere4.hpp"

namespace fs = std::filesystem;
using namespace sphere4;
using io::json;

namespace {

enum Exit { kOk = 0, kInternal = 1, kInvalid = 2, kNumerical = 3, kIo = 4 };

struct Global {
  std::uint64_t seed = 0;
  int threads = 0;
  std::string out_dir = ".";
  std::string format = "csv";
  std::string command;
};

struct SolverFlags {
  std::string method = "power";
  int max_iters = 10000;
  double grad_tol = 1e-8;
  bool escape = false;
  double curv_tol = 1e-8;
  double escape_step = 0.1;

  void add(CLI::App* app) {
    app->add_option("--method", method, "power | rgd")->check(CLI::IsMember({"power", "rgd"}));
    app->add_option("--max-iters", max_iters)->check(CLI::NonNegativeNumber);
    app->add_option("--grad-tol", grad_tol)->check(CLI::PositiveNumber);
    app->add_flag("--escape", escape, "eigenvector saddle escape at critical points");
    app->add_option("--curv-tol", curv_tol);
    app->add_option("--escape-step", escape_step)->check(CLI::PositiveNumber);
  }
  SolveConfig config(std::uint64_t seed) const {
    SolveConfig c;
    c.method = method == "power" ? Method::power : Method::rgd;
    c.max_iters = max_iters;
    c.grad_tol = grad_tol;
    if (escape) c.escape = EigenEscape{curv_tol, escape_step};
    c.seed = seed;
    return c;
  }
};

void emit(const Global& g, const json& j, const std::string& csv_header, const std::string& csv_row) {
  if (g.format == "json") {
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << csv_header << csv_row;
  }
}

io::Provenance provenance(const Global& g) { return {g.command, g.seed}; }

// ---------------------------------------------------------------------------

struct GenArgs {
  std::string model;
  int n = 0, m = 0, k = 0, p = 0;
  double theta = 0.1;
};

int cmd_gen(const Global& g, const GenArgs& a) {
  const fs::path dir = g.out_dir;
  const auto prov = provenance(g);
  if (!(a.theta > 0.0 && a.theta < 1.0)) throw std::invalid_argument("gen: --theta must lie in (0,1)");
  if (a.n < 1) throw std::invalid_argument("gen: --n must be >= 1");
  if (a.p < 1) throw std::invalid_argument("gen: --p must be >= 1");
  json meta = {{"model", a.model}, {"n", a.n}, {"theta", a.theta}, {"p", a.p}, {"seed", g.seed}};

  if (a.model == "odl") {
    if (a.m < a.n) throw std::invalid_argument("gen: odl needs --m >= --n (got m=" + std::to_string(a.m) + ", n=" + std::to_string(a.n) + ")");
    const Dictionary d = make_untf(a.n, a.m, g.seed);
    if (!d.is_untf()) {
      throw NumericalError("gen: UNTF construction did not converge (residual " + io::fmt(d.untf_status()->residual) + ")");
    }
    const SparseCode x = sample_bg(a.m, a.p, a.theta, g.seed);
    const ObservationSet y = synth_odl(d, x);
    meta["m"] = a.m;
    meta["coherence"] = coherence(d);
    meta["tight_frame_residual"] = d.tight_frame_residual();
    io::write_matrix(dir / "dictionary.csv", d.entries(), "dictionary", prov, meta);
    io::write_matrix(dir / "codes.csv", x.entries.transpose(), "codes", prov, meta, "rows=samples");
    io::write_matrix(dir / "observations.csv", y.entries.transpose(), "observations", prov, meta, "rows=samples");
  } else {
    if (a.k < 1) throw std::invalid_argument("gen: cdl needs --k >= 1");
    const ConvProblem prob = make_conv_problem(a.n, a.k, a.theta, a.p, g.seed);
    meta["k"] = a.k;
    meta["kappa"] = prob.filters.kappa();
    io::write_matrix(dir / "filters.csv", prob.filters.filters().transpose(), "filters", prov, meta, "rows=filters");
    io::write_matrix(dir / "codes.csv", prob.codes.transpose(), "codes", prov, meta, "rows=samples");
    io::write_matrix(dir / "measurements.csv", prob.measurements.entries.transpose(), "measurements", prov, meta,
                     "rows=samples");
  }
  io::write_atomic(dir / "problem.json", json({{"problem", meta}, {"provenance", prov.to_json()}}).dump(2) + "\n");
  emit(g, meta, "model,n,m,k,p,theta,seed\n",
       a.model + "," + std::to_string(a.n) + "," + std::to_string(a.model == "odl" ? a.m : 0) + "," +
           std::to_string(a.model == "cdl" ? a.k : 0) + "," + std::to_string(a.p) + "," + io::fmt(a.theta) + "," +
           std::to_string(g.seed) + "\n");
  return kOk;
}

// ---------------------------------------------------------------------------

struct SolveArgs {
  std::string data_dir;
  std::string objective = "phi_DL";
  std::string init;  // random | data (default depends on model)
  std::optional<int> index;
  std::string convention = "main_text";
  bool emit_trace = false;
  bool require_convergence = false;
  SolverFlags solver;
};

int cmd_solve(const Global& g, const SolveArgs& a) {
  const fs::path data = a.data_dir.empty() ? fs::path(g.out_dir) : fs::path(a.data_dir);
  const fs::path out = g.out_dir;
  const json meta = io::read_json(data / "problem.json").at("problem");
  const std::string model = meta.at("model");
  const double theta = meta.at("theta");
  const int threads = g.threads > 0 ? g.threads : default_threads();
  const auto prov = provenance(g);
  const SolveConfig cfg = a.solver.config(g.seed);

  SolveResult res;
  json summary;
  std::string header, row;
  if (model == "odl") {
    const Dictionary d(io::read_matrix_csv(data / "dictionary.csv"));
    const std::string init = a.init.empty() ? "random" : a.init;
    if (init != "random") throw std::invalid_argument("solve: odl supports only --init random");
    const SpherePoint q0 = random_sphere_point(d.rows(), g.seed);
    if (a.objective == "phi_T") {
      res = solve(TensorObjective(d), q0, cfg);
    } else if (a.objective == "phi_DL") {
      const ObservationSet y{io::read_matrix_csv(data / "observations.csv").transpose()};
      res = solve(OdlObjective(y, theta), q0, cfg);
    } else {
      throw std::invalid_argument("solve: odl objective must be phi_T or phi_DL");
    }
    const RecoveryOutcome o = recovery_error(res.q_star, d);
    summary = {{"result", io::to_json(res, a.emit_trace)}, {"recovery", io::to_json(o)}};
    header = "rho_e,best_index,success,iterations,termination\n";
    row = io::fmt(o.rho_e) + "," + std::to_string(o.best_index) + "," + (o.success ? "1" : "0") + "," +
          std::to_string(res.iterations) + "," + std::string(to_string(res.termination)) + "\n";
  } else {
    const int k = meta.at("k");
    const ObservationSet y{io::read_matrix_csv(data / "measurements.csv").transpose()};
    const Preconditioner p = build_preconditioner(y, theta, k, scale_convention_from_string(a.convention));
    const CdlObjective f(y, p, theta, k, threads);
    const std::string init = a.init.empty() ? "data" : a.init;
    SpherePoint q0 = init == "data" ? init_cdl(y, p, a.index, g.seed)
                                    : init == "random" ? random_sphere_point(y.rows(), g.seed)
                                                       : throw std::invalid_argument("solve: --init must be data or random");
    res = solve(f, q0, cfg);
    const SpherePoint est = deprecondition(res.q_star, p);
    summary = {{"result", io::to_json(res, a.emit_trace)}, {"filter_estimate", io::vec_json(est.coords())}};
    io::write_atomic(out / "preconditioner.json", io::to_json(p).dump(2) + "\n");
    header = "filter,shift,sign,aligned_error,recovered\n";
    if (fs::exists(data / "filters.csv")) {
      const Mat filters = io::read_matrix_csv(data / "filters.csv");
      int best = 0;
      Alignment al{0, 1, std::numeric_limits<double>::infinity()};
      for (int j = 0; j < filters.rows(); ++j) {
        const Alignment cand = align_shift(est.coords(), filters.row(j).transpose());
        if (cand.error < al.error) { al = cand; best = j; }
      }
      summary["alignment"] = io::to_json(al);
      summary["alignment"]["filter"] = best;
      row = std::to_string(best) + "," + std::to_string(al.shift) + "," + std::to_string(al.sign) + "," +
            io::fmt(al.error) + "," + (al.error <= kFilterTolerance ? "1" : "0") + "\n";
    }
  }
  summary["provenance"] = prov.to_json();
  io::write_atomic(out / "solve.json", summary.dump(2) + "\n");
  if (!row.empty()) io::write_atomic(out / (model == "odl" ? "recovery.csv" : "filter.csv"), prov.header() + header + row);
  if (a.emit_trace) {
    std::string t = prov.header() + "iteration,objective\n";
    for (std::size_t i = 0; i < res.objective_trace.size(); ++i) t += std::to_string(i) + "," + io::fmt(res.objective_trace[i]) + "\n";
    io::write_atomic(out / "trace.csv", t);
  }
  emit(g, summary, header, row);
  if (a.require_convergence && res.termination != Termination::grad_tol) {
    std::cerr << "solve: did not reach grad_tol (" << to_string(res.termination) << ")\n";
    return kNumerical;
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct SweepArgs {
  std::string mode = "fig4a";
  std::string objective;
  std::vector<int> ns, ms, ks, ps;
  std::vector<double> msq, thetas;
  int repeats = 0;
  bool resume = false;
  SolverFlags solver;
};

int cmd_sweep(const Global& g, const SweepArgs& a) {
  SweepSpec spec = SweepSpec::preset(sweep_mode_from_string(a.mode));
  if (!a.objective.empty()) spec.objective = sweep_objective_from_string(a.objective);
  if (!a.ns.empty()) spec.ns = a.ns;
  if (!a.ms.empty() || !a.ks.empty() || !a.msq.empty()) {
    spec.ms = a.ms;
    spec.ks = a.ks;
    spec.msq = a.msq;
  }
  if (!a.ps.empty()) spec.ps = a.ps;
  if (!a.thetas.empty()) spec.thetas = a.thetas;
  if (a.repeats > 0) spec.repeats = a.repeats;
  spec.solver = a.solver.config(g.seed);
  spec.seed = g.seed;
  spec.threads = g.threads > 0 ? g.threads : default_threads();
  spec.validate();
  const SweepOutcome out = run_sweep(spec, g.out_dir, provenance(g), a.resume, [](const CellRate& r) {
    std::cerr << "cell " << r.cell << " " << r.params.key() << " rate " << io::fmt(r.rate()) << "\n";
  });
  json j = json::array();
  std::string rows;
  for (const CellRate& r : out.rates) {
    j.push_back({{"cell", r.cell}, {"n", r.params.n}, {"m", r.params.m}, {"k", r.params.k}, {"p", r.params.p},
                 {"theta", r.params.theta}, {"repeats", r.repeats}, {"successes", r.successes}, {"rate", r.rate()}});
    rows += rate_row(r);
  }
  emit(g, j, kRatesHeader, rows);
  return kOk;
}

// ---------------------------------------------------------------------------

struct LandscapeArgs {
  std::string data_dir;
  int n = 0, m = 0;
  std::vector<double> q;
  int samples = 0;
  bool from_solve = false;
  std::optional<double> xi, mu;
  bool certificate = false;
  SolverFlags solver;
};

int cmd_landscape(const Global& g, const LandscapeArgs& a) {
  const fs::path out = g.out_dir;
  const auto prov = provenance(g);
  Dictionary d = [&] {
    if (!a.data_dir.empty()) return Dictionary(io::read_matrix_csv(fs::path(a.data_dir) / "dictionary.csv"));
    if (a.n < 1 || a.m < a.n) throw std::invalid_argument("landscape: give --data-dir or --n/--m with m >= n >= 1");
    return make_untf(a.n, a.m, g.seed);
  }();
  RegionParams rp;
  rp.xi = a.xi.value_or(kXiDl);
  rp.mu = a.mu ? *a.mu : coherence(d);

  if (a.samples > 0) {
    std::vector<SpherePoint> qs;
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < a.samples; ++i) {
      const std::uint64_t s = g.seed + static_cast<std::uint64_t>(i);
      seeds.push_back(s);
      SpherePoint q0 = random_sphere_point(d.rows(), s);
      if (a.from_solve) q0 = solve(TensorObjective(d), q0, a.solver.config(s)).q_star;
      qs.push_back(q0);
    }
    const int threads = g.threads > 0 ? g.threads : default_threads();
    const auto reports = critical_point_reports(d, qs, rp, threads);
    std::string csv = prov.header() + io::kLandscapeCsvHeader;
    std::string rows;
    json arr = json::array();
    for (std::size_t i = 0; i < reports.size(); ++i) {
      rows += io::landscape_csv_row(seeds[i], reports[i]);
      arr.push_back(io::to_json(reports[i]));
    }
    io::write_atomic(out / "landscape.csv", csv + rows);
    emit(g, arr, io::kLandscapeCsvHeader, rows);
    return kOk;
  }

  SpherePoint q = [&] {
    if (!a.q.empty()) return SpherePoint::normalize(Eigen::Map<const Vec>(a.q.data(), static_cast<Eigen::Index>(a.q.size())));
    SpherePoint q0 = random_sphere_point(d.rows(), g.seed);
    if (a.from_solve) q0 = solve(TensorObjective(d), q0, a.solver.config(g.seed)).q_star;
    return q0;
  }();
  if (q.dim() != d.rows()) throw std::invalid_argument("landscape: --q has the wrong dimension");
  const LandscapeReport r = critical_point_report(d, q, rp);
  json j = io::to_json(r);
  j["q"] = io::vec_json(q.coords());
  j["xi"] = rp.xi;
  j["mu"] = rp.mu;
  if (a.certificate) {
    const CurvatureCertificate c = negative_curvature_certificate(d, q, rp.xi, rp.mu);
    j["certificate"] = {{"index", c.index}, {"rayleigh", c.rayleigh}, {"bound", c.bound}, {"holds", c.holds},
                        {"k_condition", c.k_condition}, {"in_certificate_region", c.in_certificate_region}};
  }
  j["provenance"] = prov.to_json();
  io::write_atomic(out / "landscape.json", j.dump(2) + "\n");
  emit(g, j, io::kLandscapeCsvHeader, io::landscape_csv_row(g.seed, r));
  return kOk;
}

// ---------------------------------------------------------------------------

struct AlignArgs {
  std::string est, truth;
};

int cmd_align(const Global& g, const AlignArgs& a) {
  auto load = [](const std::string& path) {
    Mat m = io::read_matrix_csv(path);
    if (m.cols() == 1 && m.rows() > 1) m.transposeInPlace();  // accept a column vector
    return m;
  };
  const Mat est = load(a.est);
  const Mat truth = load(a.truth);
  if (est.rows() != 1) throw std::invalid_argument("align: --est must hold a single vector");
  if (est.cols() != truth.cols()) throw std::invalid_argument("align: length mismatch");
  int best = 0;
  Alignment al{0, 1, std::numeric_limits<double>::infinity()};
  for (int j = 0; j < truth.rows(); ++j) {
    const Alignment c = align_shift(est.row(0).transpose(), truth.row(j).transpose());
    if (c.error < al.error) { al = c; best = j; }
  }
  const auto prov = provenance(g);
  json j = io::to_json(al);
  j["filter"] = best;
  const std::string row = std::to_string(best) + "," + std::to_string(al.shift) + "," + std::to_string(al.sign) +
                          "," + io::fmt(al.error) + "," + (al.error <= kFilterTolerance ? "1" : "0") + "\n";
  io::write_atomic(fs::path(g.out_dir) / "align.csv", prov.header() + io::kFilterCsvHeader + row);
  emit(g, j, io::kFilterCsvHeader, row);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sphere4: l4 maximization on the sphere for overcomplete and convolutional dictionary learning"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  Global g;
  for (int i = 0; i < argc; ++i) g.command += (i ? " " : "") + std::string(i ? argv[i] : "sphere4");
  app.add_option("--seed", g.seed, "base seed")->capture_default_str();
  app.add_option("--threads", g.threads, "worker threads (default: SPHERE4_THREADS, else all cores)");
  app.add_option("--out-dir", g.out_dir, "output directory")->capture_default_str();
  app.add_option("--format", g.format, "stdout summary format")->check(CLI::IsMember({"csv", "json"}));

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "generate a synthetic ODL or CDL instance");
  gen_cmd->add_option("--model", gen.model)->required()->check(CLI::IsMember({"odl", "cdl"}));
  gen_cmd->add_option("--n", gen.n)->required();
  gen_cmd->add_option("--m", gen.m, "atoms (odl)");
  gen_cmd->add_option("--k", gen.k, "filters (cdl)");
  gen_cmd->add_option("--theta", gen.theta)->capture_default_str();
  gen_cmd->add_option("--p", gen.p)->required();

  SolveArgs sol;
  auto* solve_cmd = app.add_subcommand("solve", "recover one atom / filter");
  solve_cmd->add_option("--data-dir", sol.data_dir, "directory written by gen (default: --out-dir)");
  solve_cmd->add_option("--objective", sol.objective, "odl: phi_DL | phi_T")->check(CLI::IsMember({"phi_DL", "phi_T"}));
  solve_cmd->add_option("--init", sol.init, "random | data")->check(CLI::IsMember({"random", "data"}));
  solve_cmd->add_option("--index", sol.index, "0-based measurement index for --init data");
  solve_cmd->add_option("--convention", sol.convention)->check(CLI::IsMember({"main_text", "appendix_h", "tight_frame"}));
  solve_cmd->add_flag("--emit-trace", sol.emit_trace);
  solve_cmd->add_flag("--require-convergence", sol.require_convergence, "exit 3 unless grad_tol was reached");
  sol.solver.add(solve_cmd);

  SweepArgs sw;
  auto* sweep_cmd = app.add_subcommand("sweep", "success-rate grid");
  sweep_cmd->add_option("--mode", sw.mode)->check(CLI::IsMember({"fig4a", "fig4c", "fig4d", "custom"}));
  sweep_cmd->add_option("--objective", sw.objective)->check(CLI::IsMember({"phi_T", "phi_DL", "phi_CDL"}));
  sweep_cmd->add_option("--n", sw.ns)->delimiter(',');
  sweep_cmd->add_option("--m", sw.ms)->delimiter(',');
  sweep_cmd->add_option("--k", sw.ks)->delimiter(',');
  sweep_cmd->add_option("--msq", sw.msq, "m as fractions of n^2")->delimiter(',');
  sweep_cmd->add_option("--p", sw.ps)->delimiter(',');
  sweep_cmd->add_option("--theta", sw.thetas)->delimiter(',');
  sweep_cmd->add_option("--repeats", sw.repeats);
  sweep_cmd->add_flag("--resume", sw.resume, "skip cells recorded in out-dir/manifest.json");
  sw.solver.add(sweep_cmd);

  LandscapeArgs ls;
  auto* land_cmd = app.add_subcommand("landscape", "critical-point report");
  land_cmd->add_option("--data-dir", ls.data_dir, "directory with dictionary.csv");
  land_cmd->add_option("--n", ls.n);
  land_cmd->add_option("--m", ls.m);
  land_cmd->add_option("--q", ls.q, "point (normalized)")->delimiter(',');
  land_cmd->add_option("--samples", ls.samples, "batch of random points → landscape.csv");
  land_cmd->add_flag("--from-solve", ls.from_solve, "report at solve() output instead of the start point");
  land_cmd->add_option("--xi", ls.xi);
  land_cmd->add_option("--mu", ls.mu);
  land_cmd->add_flag("--certificate", ls.certificate, "include the negative-curvature certificate");
  ls.solver.add(land_cmd);

  AlignArgs al;
  auto* align_cmd = app.add_subcommand("align", "shift/sign alignment of a filter estimate");
  align_cmd->add_option("--est", al.est)->required();
  align_cmd->add_option("--true", al.truth, "one or more reference filters, one per row")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInvalid;
  }

  try {
    if (*gen_cmd) return cmd_gen(g, gen);
    if (*solve_cmd) return cmd_solve(g, sol);
    if (*sweep_cmd) return cmd_sweep(g, sw);
    if (*land_cmd) return cmd_landscape(g, ls);
    if (*align_cmd) return cmd_align(g, al);
  } catch (const io::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const json::exception& e) {
    std::cerr << "error: malformed input: " << e.what() << "\n";
    return kIo;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::logic_error& e) {  // invalid_argument, domain_error, out_of_range, length_error
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInternal;
  }
  return kInvalid;
}
