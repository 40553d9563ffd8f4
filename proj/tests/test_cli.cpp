#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "commnet/io.hpp"

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("commnet_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path file(const std::string& name, const std::string& content) const {
    const fs::path p = path / name;
    std::ofstream(p) << content;
    return p;
  }
};

int run_cli(const std::string& args) {
  const std::string cmd = std::string(COMMNET_CLI_PATH) + " " + args;
  return std::system(cmd.c_str());
}

std::string slurp(const fs::path& p) { return commnet::io::read_file(p); }

const char* kUnitsCsv =
    "id,x,y,area_km2,s_in,s_out,zone\n"
    "a,0,0,10,40,30,region\n"
    "b,5000,0,12,30,25,region\n"
    "c,2000,4000,8,25,20,region\n"
    "out1,12000,0,,60,,outside\n";

}  // namespace

TEST_CASE("cli: generate is byte-identical for the same seed") {
  TempDir tmp;
  auto units = tmp.file("u.csv", kUnitsCsv);
  const auto out1 = tmp.path / "run1";
  const auto out2 = tmp.path / "run2";
  REQUIRE(run_cli("generate --units " + units.string() +
                  " --beta 2e-4 --seed 7 --out " + out1.string()) == 0);
  REQUIRE(run_cli("generate --units " + units.string() +
                  " --beta 2e-4 --seed 7 --out " + out2.string()) == 0);
  CHECK(slurp(out1 / "od_generated.csv") == slurp(out2 / "od_generated.csv"));
  // Different seed changes the output.
  const auto out3 = tmp.path / "run3";
  REQUIRE(run_cli("generate --units " + units.string() +
                  " --beta 2e-4 --seed 8 --out " + out3.string()) == 0);
  CHECK(slurp(out1 / "od_generated.csv") != slurp(out3 / "od_generated.csv"));
}

TEST_CASE("cli: rerun from manifest reproduces outputs byte-identically") {
  TempDir tmp;
  auto units = tmp.file("u.csv", kUnitsCsv);
  const auto out1 = tmp.path / "orig";
  const auto out2 = tmp.path / "redo";
  REQUIRE(run_cli("generate --units " + units.string() +
                  " --beta 3e-4 --seed 11 --out " + out1.string()) == 0);
  REQUIRE(run_cli("rerun --manifest " + (out1 / "manifest.json").string() +
                  " --out " + out2.string()) == 0);
  CHECK(slurp(out1 / "od_generated.csv") == slurp(out2 / "od_generated.csv"));
}

TEST_CASE("cli: calibrate on a self-generated fixture recovers beta") {
  TempDir tmp;
  auto units = tmp.file("u.csv", kUnitsCsv);
  const auto gen_out = tmp.path / "gen";
  REQUIRE(run_cli("generate --units " + units.string() +
                  " --beta 2e-4 --seed 3 --out " + gen_out.string()) == 0);
  const auto cal_out = tmp.path / "cal";
  REQUIRE(run_cli("calibrate --units " + units.string() + " --od " +
                  (gen_out / "od_generated.csv").string() +
                  " --replicas 8 --seed 5 --strategy grid --out " +
                  cal_out.string()) == 0);
  // Trace is the (beta, mean KS, mean CPC) table promised to plotting.
  const std::string trace = slurp(cal_out / "calibration_trace.csv");
  CHECK(trace.rfind("beta,mean_ks,mean_cpc\n", 0) == 0);
  const std::string result = slurp(cal_out / "calibration_result.csv");
  CHECK(result.find("beta_star") != std::string::npos);
}

TEST_CASE("cli: fit-law prints the exact-law constants") {
  TempDir tmp;
  std::ostringstream cases;
  cases.precision(17);
  cases << "case_id,mean_area_km2,beta,cpc\n";
  for (double s : {10.0, 100.0, 1000.0, 5000.0})
    cases << "c" << s << ',' << s << ',' << 0.000315 * std::pow(s, -0.177)
          << ",0.8\n";
  auto path = tmp.file("cases.csv", cases.str());
  const auto out = tmp.path / "fit";
  REQUIRE(run_cli("fit-law --cases " + path.string() + " --out " +
                  out.string() + " > " + (tmp.path / "stdout.txt").string()) == 0);
  const std::string printed = slurp(tmp.path / "stdout.txt");
  CHECK(printed.find("alpha 0.00031") != std::string::npos);
  CHECK(printed.find("nu 0.177") != std::string::npos);

  auto fit = slurp(out / "law_fit.csv");
  std::istringstream in(fit);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  double alpha = 0, nu = 0;
  std::sscanf(row.c_str(), "%lf,%lf", &alpha, &nu);
  CHECK(alpha == Catch::Approx(0.000315).epsilon(1e-12));
  CHECK(nu == Catch::Approx(0.177).epsilon(1e-12));
}

TEST_CASE("cli: radiation output feeds straight into report") {
  TempDir tmp;
  auto units = tmp.file("u.csv",
                        "id,x,y,area_km2,s_in,s_out,zone,population\n"
                        "a,0,0,10,40,30,region,500\n"
                        "b,5000,0,12,30,25,region,700\n"
                        "c,2000,4000,8,25,20,region,300\n"
                        "out1,12000,0,,60,,outside,900\n");
  const auto obs = tmp.path / "obs";
  const auto alt = tmp.path / "alt";
  const auto rad = tmp.path / "rad";
  const auto rep = tmp.path / "rep";
  REQUIRE(run_cli("generate --units " + units.string() +
                  " --beta 2e-4 --seed 7 --out " + obs.string()) == 0);
  REQUIRE(run_cli("generate --units " + units.string() +
                  " --beta 1e-3 --seed 3 --out " + alt.string()) == 0);
  REQUIRE(run_cli("radiation --units " + units.string() + " --out " +
                  rad.string()) == 0);
  REQUIRE(run_cli("report --units " + units.string() + " --od " +
                  (obs / "od_generated.csv").string() + " --sim-a " +
                  (rad / "radiation_flows.csv").string() + " --sim-b " +
                  (alt / "od_generated.csv").string() + " --out " +
                  rep.string()) == 0);
  // Radiation rows are residence origins only, so labels line up.
  auto flows = commnet::io::load_real_od((rad / "radiation_flows.csv"),
                                         {"a", "b", "c"},
                                         {"a", "b", "c", "out1"});
  CHECK(flows.flows.rows() == 3);
  const std::string cpcs = slurp(rep / "report_cpc.csv");
  CHECK(cpcs.rfind("model,cpc\n", 0) == 0);
  CHECK(fs::exists(rep / "report_scatter.csv"));
  CHECK(fs::exists(rep / "report_bins.csv"));
  CHECK(fs::exists(rep / "report_dist_observed.csv"));
}

TEST_CASE("cli: missing input yields nonzero exit and one-line error") {
  TempDir tmp;
  const int rc = run_cli("generate --units " +
                         (tmp.path / "missing.csv").string() +
                         " --beta 1e-4 --out " + tmp.path.string() + " 2> " +
                         (tmp.path / "err.txt").string());
  CHECK(rc != 0);
  const std::string err = slurp(tmp.path / "err.txt");
  CHECK(err.rfind("error:", 0) == 0);
  CHECK(std::count(err.begin(), err.end(), '\n') == 1);
}

TEST_CASE("cli: COMMNET_OUT env var overrides the default output dir") {
  TempDir tmp;
  auto units = tmp.file("u.csv", kUnitsCsv);
  const auto envout = tmp.path / "envout";
  const std::string cmd = "cd " + tmp.path.string() + " && COMMNET_OUT=" +
                          envout.string() + " " + COMMNET_CLI_PATH +
                          " generate --units " + units.string() +
                          " --beta 2e-4 --seed 1";
  REQUIRE(std::system(cmd.c_str()) == 0);
  CHECK(fs::exists(envout / "od_generated.csv"));
}
