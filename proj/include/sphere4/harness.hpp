#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sphere4/cdl.hpp"
#include "sphere4/io.hpp"
#include "sphere4/model.hpp"
#include "sphere4/objective.hpp"
#include "sphere4/optimize.hpp"
#include "sphere4/parallel.hpp"
#include "sphere4/recovery.hpp"
#include "sphere4/rng.hpp"

namespace sphere4 {

enum class SweepObjective { phi_T, phi_DL, phi_CDL };
enum class SweepMode { fig4a, fig4c, fig4d, custom };

inline std::string_view to_string(SweepObjective o) {
  switch (o) {
    case SweepObjective::phi_T: return "phi_T";
    case SweepObjective::phi_DL: return "phi_DL";
    case SweepObjective::phi_CDL: return "phi_CDL";
  }
  return "phi_T";
}

inline SweepObjective sweep_objective_from_string(std::string_view s) {
  if (s == "phi_T") return SweepObjective::phi_T;
  if (s == "phi_DL") return SweepObjective::phi_DL;
  if (s == "phi_CDL") return SweepObjective::phi_CDL;
  throw std::invalid_argument("unknown objective: " + std::string(s));
}

inline std::string_view to_string(SweepMode m) {
  switch (m) {
    case SweepMode::fig4a: return "fig4a";
    case SweepMode::fig4c: return "fig4c";
    case SweepMode::fig4d: return "fig4d";
    case SweepMode::custom: return "custom";
  }
  return "custom";
}

inline SweepMode sweep_mode_from_string(std::string_view s) {
  if (s == "fig4a") return SweepMode::fig4a;
  if (s == "fig4c") return SweepMode::fig4c;
  if (s == "fig4d") return SweepMode::fig4d;
  if (s == "custom") return SweepMode::custom;
  throw std::invalid_argument("unknown sweep mode: " + std::string(s));
}

/// One grid point. For the CDL objective m = n·K.
struct Cell {
  int n = 0;
  int m = 0;
  int k = 0;  // 0 when the m axis was given directly
  int p = 0;  // unused for phi_T
  double theta = 0.1;

  [[nodiscard]] std::string key() const {
    return "n=" + std::to_string(n) + ";m=" + std::to_string(m) + ";k=" + std::to_string(k) +
           ";p=" + std::to_string(p) + ";theta=" + io::fmt(theta);
  }
  bool operator==(const Cell&) const = default;
};

/// Grid description. The m axis is taken from exactly one of `ms` (explicit),
/// `ks` (m = K·n) or `msq` (m = ⌊f·n²⌋ for f ≤ 1, ⌈f·n²⌉ for f > 1).
struct SweepSpec {
  SweepMode mode = SweepMode::custom;
  SweepObjective objective = SweepObjective::phi_T;
  std::vector<int> ns;
  std::vector<int> ms;
  std::vector<int> ks;
  std::vector<double> msq;
  std::vector<int> ps{0};
  std::vector<double> thetas{0.1};
  int repeats = 12;
  SolveConfig solver{};
  std::uint64_t seed = 0;
  int threads = 1;

  static SweepSpec preset(SweepMode mode) {
    SweepSpec s;
    s.mode = mode;
    switch (mode) {
      case SweepMode::fig4a:
        s.objective = SweepObjective::phi_T;
        s.ns = {3, 4, 5, 6, 7, 8};
        s.msq = {0.25, 0.5, 1.0, 1.5};
        s.ps = {0};
        break;
      case SweepMode::fig4c:
        s.objective = SweepObjective::phi_DL;
        s.ns = {16};
        s.ks = {2, 3};
        s.ps = {250, 1000, 4000, 16000};
        break;
      case SweepMode::fig4d:
        s.objective = SweepObjective::phi_DL;
        s.ns = {16, 32};
        s.ks = {3};
        s.ps = {50000};
        s.thetas = {0.1, 0.2, 0.3};
        break;
      case SweepMode::custom: break;
    }
    return s;
  }

  void validate() const {
    auto bad = [](const std::string& what) { throw std::invalid_argument("sweep: " + what); };
    if (repeats < 1) bad("repeats must be >= 1");
    if (ns.empty()) bad("need at least one n");
    const int axes = !ms.empty() + !ks.empty() + !msq.empty();
    if (axes != 1) bad("give exactly one of m, k, msq");
    if (objective == SweepObjective::phi_CDL && ks.empty()) bad("phi_CDL needs the k axis");
    for (int n : ns) if (n < 1) bad("n must be positive");
    for (int m : ms) if (m < 1) bad("m must be positive");
    for (int k : ks) if (k < 1) bad("k must be positive");
    for (double f : msq) if (!(f > 0.0)) bad("msq fractions must be positive");
    for (double t : thetas) if (!(t > 0.0 && t < 1.0)) bad("theta must lie in (0,1)");
    if (objective != SweepObjective::phi_T) {
      for (int p : ps) if (p < 1) bad("p must be positive for phi_DL / phi_CDL");
    }
    if (thetas.empty() || ps.empty()) bad("empty p or theta axis");
    solver.validate();
  }

  [[nodiscard]] io::json to_json() const {
    io::json j = {{"mode", std::string(to_string(mode))},
                  {"objective", std::string(to_string(objective))},
                  {"n", ns},
                  {"m", ms},
                  {"k", ks},
                  {"msq", msq},
                  {"p", ps},
                  {"theta", thetas},
                  {"repeats", repeats},
                  {"method", std::string(to_string(solver.method))},
                  {"max_iters", solver.max_iters},
                  {"grad_tol", solver.grad_tol},
                  {"escape", solver.escape.has_value()},
                  {"seed", seed}};
    return j;
  }
};

inline std::vector<Cell> sweep_cells(const SweepSpec& spec) {
  spec.validate();
  std::vector<Cell> cells;
  for (int n : spec.ns) {
    std::vector<std::pair<int, int>> mk;  // (m, k)
    for (int m : spec.ms) mk.emplace_back(m, 0);
    for (int k : spec.ks) mk.emplace_back(k * n, k);
    for (double f : spec.msq) {
      const double v = f * n * n;
      const int m = f <= 1.0 ? static_cast<int>(std::floor(v + 1e-9)) : static_cast<int>(std::ceil(v - 1e-9));
      mk.emplace_back(m, 0);
    }
    for (auto [m, k] : mk) {
      if (m < n) continue;  // overcomplete or square only
      for (int p : spec.objective == SweepObjective::phi_T ? std::vector<int>{0} : spec.ps)
        for (double th : spec.objective == SweepObjective::phi_T ? std::vector<double>{spec.thetas.front()} : spec.thetas)
          cells.push_back(Cell{n, m, k, p, th});
    }
  }
  // drop duplicates (e.g. small n where fractions collide), keep first
  std::vector<Cell> unique;
  for (const Cell& c : cells)
    if (std::find(unique.begin(), unique.end(), c) == unique.end()) unique.push_back(c);
  return unique;
}

/// 64-bit FNV-1a, stable across platforms.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed of repeat r in a cell; depends on the cell's parameters, not its
/// position in the grid, so extended or resumed grids reuse the same draws.
inline std::uint64_t repeat_seed(std::uint64_t base, const Cell& cell, int r) {
  return CounterRng(base ^ fnv1a(cell.key())).split(Purpose::cell, static_cast<std::uint64_t>(r)).next_u64();
}

struct TrialRecord {
  int cell = 0;
  Cell params;
  int repeat = 0;
  std::uint64_t seed = 0;
  double error = 1.0;  // ρ_e, or aligned filter error for phi_CDL
  int best_index = 0;
  bool success = false;
  int iterations = 0;
  Termination termination = Termination::max_iters;
};

/// One repeat: fresh instance + random (or, for CDL, data-driven) start.
inline TrialRecord run_trial(const SweepSpec& spec, int cell_index, const Cell& c, int r) {
  TrialRecord t;
  t.cell = cell_index;
  t.params = c;
  t.repeat = r;
  t.seed = repeat_seed(spec.seed, c, r);
  SolveConfig cfg = spec.solver;
  cfg.seed = t.seed;
  cfg.record_trace = false;

  auto score = [&](const SolveResult& res, const Mat& reference) {
    const RecoveryOutcome o = recovery_error(res.q_star, reference);
    t.error = o.rho_e;
    t.best_index = o.best_index;
    t.success = o.success;
    t.iterations = res.iterations;
    t.termination = res.termination;
  };

  switch (spec.objective) {
    case SweepObjective::phi_T: {
      const Dictionary d = make_untf(c.n, c.m, t.seed);
      score(solve(TensorObjective(d), random_sphere_point(c.n, t.seed), cfg), d.entries());
      break;
    }
    case SweepObjective::phi_DL: {
      const Dictionary d = make_untf(c.n, c.m, t.seed);
      const ObservationSet y = synth_odl(d, sample_bg(c.m, c.p, c.theta, t.seed));
      score(solve(OdlObjective(y, c.theta), random_sphere_point(c.n, t.seed), cfg), d.entries());
      break;
    }
    case SweepObjective::phi_CDL: {
      const ConvProblem prob = make_conv_problem(c.n, c.k, c.theta, c.p, t.seed);
      FilterRecoveryConfig fc;
      fc.solver = cfg;
      fc.budget = 1;
      fc.seed_base = t.seed;
      const FilterRecovery fr = recover_filters(prob, fc);
      const FilterTrial& ft = fr.trials.front();
      t.error = ft.alignment.error;
      t.best_index = ft.filter;
      t.success = ft.alignment.error <= fc.tolerance;
      t.iterations = ft.iterations;
      t.termination = ft.termination;
      break;
    }
  }
  return t;
}

/// All repeats of one cell, in repeat order, computed on up to `threads` workers.
inline std::vector<TrialRecord> run_cell(const SweepSpec& spec, int cell_index, const Cell& c) {
  std::vector<TrialRecord> out(static_cast<std::size_t>(spec.repeats));
  parallel_for(spec.repeats, spec.threads,
               [&](int r) { out[static_cast<std::size_t>(r)] = run_trial(spec, cell_index, c, r); });
  return out;
}

struct CellRate {
  int cell = 0;
  Cell params;
  int repeats = 0;
  int successes = 0;
  [[nodiscard]] double rate() const { return repeats ? static_cast<double>(successes) / repeats : 0.0; }
};

inline std::vector<CellRate> aggregate(const std::vector<TrialRecord>& trials) {
  std::map<int, CellRate> by_cell;
  for (const TrialRecord& t : trials) {
    CellRate& r = by_cell[t.cell];
    r.cell = t.cell;
    r.params = t.params;
    ++r.repeats;
    r.successes += t.success ? 1 : 0;
  }
  std::vector<CellRate> out;
  for (auto& [_, r] : by_cell) out.push_back(r);
  return out;
}

// --- CSV layouts -----------------------------------------------------------

inline constexpr const char* kTrialsHeader =
    "cell,n,m,k,p,theta,repeat,seed,error,best_index,success,iterations,termination\n";
inline constexpr const char* kRatesHeader = "cell,n,m,k,p,theta,repeats,successes,rate\n";

inline std::string trial_row(const TrialRecord& t) {
  const Cell& c = t.params;
  std::ostringstream s;
  s << t.cell << ',' << c.n << ',' << c.m << ',' << c.k << ',' << c.p << ',' << io::fmt(c.theta) << ','
    << t.repeat << ',' << t.seed << ',' << io::fmt(t.error) << ',' << t.best_index << ','
    << (t.success ? 1 : 0) << ',' << t.iterations << ',' << to_string(t.termination) << '\n';
  return s.str();
}

inline std::string rate_row(const CellRate& r) {
  const Cell& c = r.params;
  std::ostringstream s;
  s << r.cell << ',' << c.n << ',' << c.m << ',' << c.k << ',' << c.p << ',' << io::fmt(c.theta) << ','
    << r.repeats << ',' << r.successes << ',' << io::fmt(r.rate()) << '\n';
  return s.str();
}

inline Termination termination_from_string(std::string_view s) {
  if (s == "grad_tol") return Termination::grad_tol;
  if (s == "max_iters") return Termination::max_iters;
  if (s == "stalled") return Termination::stalled;
  throw io::IoError("unknown termination: " + std::string(s));
}

/// Parses trial rows (comment and header lines skipped).
inline std::vector<TrialRecord> parse_trials_csv(const std::string& text) {
  std::vector<TrialRecord> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("cell,", 0) == 0) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 13) throw io::IoError("trials csv: expected 13 fields, got " + std::to_string(f.size()));
    try {
      TrialRecord t;
      t.cell = std::stoi(f[0]);
      t.params = Cell{std::stoi(f[1]), std::stoi(f[2]), std::stoi(f[3]), std::stoi(f[4]), std::stod(f[5])};
      t.repeat = std::stoi(f[6]);
      t.seed = std::stoull(f[7]);
      t.error = std::stod(f[8]);
      t.best_index = std::stoi(f[9]);
      t.success = f[10] == "1";
      t.iterations = std::stoi(f[11]);
      t.termination = termination_from_string(f[12]);
      out.push_back(t);
    } catch (const std::logic_error& e) {
      throw io::IoError(std::string("trials csv: bad field: ") + e.what());
    }
  }
  return out;
}

inline std::string rates_csv(const std::vector<CellRate>& rates, const io::Provenance& prov) {
  std::string s = prov.header() + kRatesHeader;
  for (const CellRate& r : rates) s += rate_row(r);
  return s;
}

// --- Driver ----------------------------------------------------------------

struct SweepOutcome {
  std::vector<TrialRecord> trials;
  std::vector<CellRate> rates;
  int cells_run = 0;      // computed in this invocation
  int cells_resumed = 0;  // taken from a previous invocation
};

/// Runs the grid, writing cells/<i>.csv per completed cell, an atomically
/// updated manifest.json, and finally trials.csv and rates.csv. With `resume`,
/// cells recorded in a matching manifest are read back instead of recomputed.
inline SweepOutcome run_sweep(const SweepSpec& spec, const std::filesystem::path& out_dir,
                              const io::Provenance& prov, bool resume = false,
                              const std::function<void(const CellRate&)>& on_cell = {}) {
  namespace fs = std::filesystem;
  const std::vector<Cell> cells = sweep_cells(spec);
  const fs::path manifest_path = out_dir / "manifest.json";
  const io::json spec_json = spec.to_json();

  std::set<std::string> done;
  if (resume && fs::exists(manifest_path)) {
    const io::json m = io::read_json(manifest_path);
    if (m.at("spec") != spec_json) {
      throw std::invalid_argument("sweep: manifest in " + out_dir.string() + " belongs to a different sweep");
    }
    for (const auto& k : m.at("completed")) done.insert(k.get<std::string>());
  }

  auto write_manifest = [&] {
    io::json m = {{"spec", spec_json}, {"completed", io::json::array()}};
    for (const Cell& c : cells)
      if (done.count(c.key())) m["completed"].push_back(c.key());
    io::write_atomic(manifest_path, m.dump(2) + "\n");
  };
  write_manifest();

  SweepOutcome out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const Cell& c = cells[i];
    const fs::path cell_file = out_dir / "cells" / (std::to_string(i) + ".csv");
    std::vector<TrialRecord> rows;
    if (done.count(c.key()) && fs::exists(cell_file)) {
      rows = parse_trials_csv(io::read_text(cell_file));
      ++out.cells_resumed;
    } else {
      rows = run_cell(spec, static_cast<int>(i), c);
      std::string text = kTrialsHeader;
      for (const TrialRecord& t : rows) text += trial_row(t);
      io::write_atomic(cell_file, text);
      done.insert(c.key());
      write_manifest();
      ++out.cells_run;
    }
    if (on_cell) on_cell(aggregate(rows).front());
    out.trials.insert(out.trials.end(), rows.begin(), rows.end());
  }
  out.rates = aggregate(out.trials);

  std::string trials = prov.header() + kTrialsHeader;
  for (const TrialRecord& t : out.trials) trials += trial_row(t);
  io::write_atomic(out_dir / "trials.csv", trials);
  io::write_atomic(out_dir / "rates.csv", rates_csv(out.rates, prov));
  return out;
}

}  // namespace sphere4
