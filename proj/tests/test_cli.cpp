#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <map>

#include "sphere4/io.hpp"

namespace fs = std::filesystem;
using sphere4::io::json;
using sphere4::io::read_text;

namespace {

fs::path root_path() { return fs::temp_directory_path() / ("sphere4_cli_" + std::to_string(::getpid())); }

const fs::path& root() {
  static const fs::path p = [] {
    fs::path d = root_path();
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return p;
}

struct Cleanup {
  ~Cleanup() {
    std::error_code ec;
    fs::remove_all(root_path(), ec);
  }
} cleanup;

int run(const std::string& args, std::string* out = nullptr, const std::string& env = {}) {
  const fs::path capture = root() / "stdout.txt";
  const std::string cmd = env + " " + std::string(SPHERE4_CLI) + " " + args + " > " + capture.string() + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  if (out) *out = read_text(capture);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = read_text(e.path());
  return files;
}

// File contents without '#' provenance lines.
std::string data_lines(const fs::path& p) {
  std::istringstream in(read_text(p));
  std::string line, out;
  while (std::getline(in, line))
    if (line.empty() || line[0] != '#') out += line + "\n";
  return out;
}

std::string dir(const std::string& name) { return (root() / name).string(); }

}  // namespace

// --- gen --------------------------------------------------------------------------

TEST(CliGen, OdlFig1ConfigurationIsDeterministic) {
  ASSERT_EQ(run("gen --model odl --n 3 --m 4 --theta 0.1 --p 20000 --seed 1 --out-dir " + dir("fig1")), 0);
  const auto first = snapshot(dir("fig1"));
  for (const char* f : {"dictionary.csv", "dictionary.json", "codes.csv", "observations.csv", "problem.json"})
    EXPECT_TRUE(first.count(f)) << f;
  const json meta = json::parse(first.at("problem.json"));
  EXPECT_EQ(meta.at("problem").at("p"), 20000);
  EXPECT_EQ(meta.at("provenance").at("seed"), 1);
  EXPECT_EQ(sphere4::io::parse_matrix_csv(first.at("observations.csv")).rows(), 20000);
  ASSERT_EQ(run("gen --model odl --n 3 --m 4 --theta 0.1 --p 20000 --seed 1 --out-dir " + dir("fig1")), 0);
  EXPECT_EQ(snapshot(dir("fig1")), first);
}

TEST(CliGen, CdlFig5Configuration) {
  std::string out;
  ASSERT_EQ(run("gen --model cdl --n 64 --k 3 --theta 0.1 --p 10000 --out-dir " + dir("fig5"), &out), 0);
  EXPECT_NE(out.find("cdl,64,0,3,10000"), std::string::npos) << out;
  const auto f = sphere4::io::read_matrix_csv(fs::path(dir("fig5")) / "filters.csv");
  EXPECT_EQ(f.rows(), 3);
  EXPECT_EQ(f.cols(), 64);
  const auto y = sphere4::io::read_matrix_csv(fs::path(dir("fig5")) / "measurements.csv");
  EXPECT_EQ(y.rows(), 10000);
  EXPECT_EQ(y.cols(), 64);
}

TEST(CliGen, InvalidArgumentsExitTwo) {
  EXPECT_EQ(run("gen --model odl --n 5 --m 3 --p 10 --out-dir " + dir("bad")), 2);
  EXPECT_EQ(run("gen --model odl --n 5 --m 8 --p 10 --theta 1.5 --out-dir " + dir("bad")), 2);
  EXPECT_EQ(run("gen --model xyz --n 5 --p 10"), 2);
  EXPECT_EQ(run("gen --model cdl --n 8 --p 10 --out-dir " + dir("bad")), 2);  // no --k
  EXPECT_EQ(run("gen --n 5"), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("--format xml gen --model odl --n 3 --m 4 --p 10"), 2);
}

TEST(CliGen, IoFailureExitsFour) {
  EXPECT_EQ(run("gen --model odl --n 3 --m 4 --p 10 --out-dir /proc/sphere4_forbidden"), 4);
  EXPECT_EQ(run("solve --data-dir " + dir("does_not_exist") + " --out-dir " + dir("nowhere")), 4);
}

TEST(CliGen, HelpExitsZero) { EXPECT_EQ(run("--help"), 0); }

// --- solve ------------------------------------------------------------------------

TEST(CliSolve, OdlPowerMethodSucceeds) {
  ASSERT_EQ(run("gen --model odl --n 3 --m 4 --theta 0.1 --p 20000 --seed 2 --out-dir " + dir("s1")), 0);
  ASSERT_EQ(run("solve --method power --emit-trace --seed 4 --out-dir " + dir("s1")), 0);
  const std::string csv = read_text(fs::path(dir("s1")) / "recovery.csv");
  const auto line = csv.substr(csv.find("rho_e,"));
  const auto row = line.substr(line.find('\n') + 1);
  EXPECT_LT(std::stod(row.substr(0, row.find(','))), 5e-2);
  const json j = json::parse(read_text(fs::path(dir("s1")) / "solve.json"));
  EXPECT_TRUE(j.at("recovery").at("success").get<bool>());
  EXPECT_EQ(j.at("result").at("termination"), "grad_tol");
  // trace monotone
  const std::string trace = read_text(fs::path(dir("s1")) / "trace.csv");
  std::istringstream in(trace);
  std::string l;
  double prev = 1e300;
  int n = 0;
  while (std::getline(in, l)) {
    if (l.empty() || l[0] == '#' || l.rfind("iteration", 0) == 0) continue;
    const double v = std::stod(l.substr(l.find(',') + 1));
    EXPECT_LE(v, prev + 1e-12);
    prev = v;
    ++n;
  }
  EXPECT_GT(n, 1);
  EXPECT_EQ(static_cast<std::size_t>(n), j.at("result").at("objective_trace").size());
}

TEST(CliSolve, GlobalFlagsAfterSubcommandAndJsonFormat) {
  ASSERT_EQ(run("gen --model odl --n 4 --m 6 --p 3000 --out-dir " + dir("s2") + " --seed 3"), 0);
  std::string out;
  ASSERT_EQ(run("solve --objective phi_T --out-dir " + dir("s2") + " --format json --seed 1", &out), 0);
  const json j = json::parse(out);
  EXPECT_TRUE(j.contains("recovery"));
  EXPECT_EQ(j.at("provenance").at("seed"), 1);
}

TEST(CliSolve, RequireConvergenceExitsThree) {
  ASSERT_EQ(run("gen --model odl --n 4 --m 6 --p 3000 --out-dir " + dir("s3")), 0);
  EXPECT_EQ(run("solve --max-iters 1 --require-convergence --out-dir " + dir("s3")), 3);
  EXPECT_EQ(run("solve --max-iters 1 --out-dir " + dir("s3")), 0);
  EXPECT_EQ(run("solve --grad-tol -1 --out-dir " + dir("s3")), 2);
  EXPECT_EQ(run("solve --init data --out-dir " + dir("s3")), 2);  // odl has no data init
}

TEST(CliSolve, CdlDataAndRandomInit) {
  ASSERT_EQ(run("gen --model cdl --n 32 --k 2 --theta 0.1 --p 2000 --seed 5 --out-dir " + dir("c1")), 0);
  std::string out;
  ASSERT_EQ(run("solve --out-dir " + dir("c1") + " --seed 1", &out), 0);
  EXPECT_NE(out.find("filter,shift,sign,aligned_error,recovered"), std::string::npos);
  EXPECT_TRUE(fs::exists(fs::path(dir("c1")) / "preconditioner.json"));
  EXPECT_TRUE(fs::exists(fs::path(dir("c1")) / "filter.csv"));
  ASSERT_EQ(run("solve --init random --convention appendix_h --out-dir " + dir("c1")), 0);
  ASSERT_EQ(run("solve --init data --index 7 --out-dir " + dir("c1")), 0);
  EXPECT_EQ(run("solve --init data --index 999999 --out-dir " + dir("c1")), 2);
  EXPECT_EQ(run("solve --out-dir " + dir("c1"), nullptr, "SPHERE4_THREADS=2"), 0);
}

// --- sweep ------------------------------------------------------------------------

TEST(CliSweep, CustomGridWritesTrialsAndRates) {
  std::string out;
  ASSERT_EQ(run("sweep --mode custom --objective phi_T --n 3,4 --msq 0.5,1 --repeats 3 --seed 2 --threads 2 --out-dir " +
                    dir("sw"),
                &out),
            0);
  for (const char* f : {"trials.csv", "rates.csv", "manifest.json", "cells/0.csv"})
    EXPECT_TRUE(fs::exists(fs::path(dir("sw")) / f)) << f;
  EXPECT_NE(out.find("cell,n,m,k,p,theta,repeats,successes,rate"), std::string::npos);
  const auto rates = data_lines(fs::path(dir("sw")) / "rates.csv");
  ASSERT_EQ(run("sweep --mode custom --objective phi_T --n 3,4 --msq 0.5,1 --repeats 3 --seed 2 --resume --out-dir " +
                dir("sw")),
            0);
  EXPECT_EQ(data_lines(fs::path(dir("sw")) / "rates.csv"), rates);
  EXPECT_EQ(run("sweep --mode custom --objective phi_T --n 3 --msq 0.5 --m 4 --out-dir " + dir("sw2")), 2);
}

// --- landscape / align ------------------------------------------------------------

TEST(CliLandscape, ThreeDispatchCases) {
  sphere4::io::write_atomic(fs::path(dir("id")) / "dictionary.csv", "1,0,0\n0,1,0\n0,0,1\n");
  ASSERT_EQ(run("landscape --data-dir " + dir("id") + " --q 1,0,0 --out-dir " + dir("l1")), 0);
  json j = json::parse(read_text(fs::path(dir("l1")) / "landscape.json"));
  EXPECT_EQ(j.at("classification").at("kind"), "near_solution");

  ASSERT_EQ(run("landscape --data-dir " + dir("id") + " --q 1,1,0 --certificate --out-dir " + dir("l2")), 0);
  j = json::parse(read_text(fs::path(dir("l2")) / "landscape.json"));
  EXPECT_EQ(j.at("classification").at("kind"), "strict_saddle");
  EXPECT_TRUE(j.contains("certificate"));

  ASSERT_EQ(run("landscape --n 6 --m 12 --samples 5 --from-solve --escape --out-dir " + dir("l3")), 0);
  const std::string csv = read_text(fs::path(dir("l3")) / "landscape.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3 + 1 + 5);  // provenance + header + rows
  EXPECT_EQ(run("landscape --data-dir " + dir("id") + " --q 1,0 --out-dir " + dir("l4")), 2);
}

TEST(CliAlign, RecoversShiftAndSign) {
  sphere4::io::write_atomic(fs::path(dir("al")) / "true.csv", "1,2,3,4,5\n0,0,1,0,0\n");
  sphere4::io::write_atomic(fs::path(dir("al")) / "est.csv", "-4,-5,-1,-2,-3\n");
  std::string out;
  ASSERT_EQ(run("align --est " + dir("al") + "/est.csv --true " + dir("al") + "/true.csv --format json --out-dir " +
                    dir("al"),
                &out),
            0);
  const json j = json::parse(out);
  EXPECT_EQ(j.at("filter"), 0);
  EXPECT_EQ(j.at("shift"), 2);  // est(j) = −true(j − 2)
  EXPECT_EQ(j.at("sign"), -1);
  EXPECT_LT(j.at("error").get<double>(), 1e-12);
  EXPECT_EQ(run("align --est " + dir("al") + "/missing.csv --true " + dir("al") + "/true.csv"), 4);
}
