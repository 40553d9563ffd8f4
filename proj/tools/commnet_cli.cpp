// Command-line front end: generates commuting networks from margin data,
// calibrates the distance-decay parameter, validates against observed
// flows, fits the beta-area law, and runs the radiation baseline.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "commnet/calibration.hpp"
#include "commnet/core.hpp"
#include "commnet/generator.hpp"
#include "commnet/io.hpp"
#include "commnet/radiation.hpp"
#include "commnet/universal_law.hpp"
#include "commnet/validation.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace commnet;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Options {
  std::string units;
  std::string od;
  std::string od_sim;
  std::string sim_a;
  std::string sim_b;
  std::string cases;
  std::string out = ".";
  bool out_given = false;
  std::string mode = "projected";
  std::string strategy = "golden";
  std::string prefactor = "paper";
  double beta = -1.0;
  double beta_min = 1e-6;
  double beta_max = 1e-2;
  double tolerance = 1e-2;
  double bin_width_m = 2000.0;
  double total_population = -1.0;
  double total_commuters = -1.0;
  std::uint64_t seed = 0;
  int replicas = 1;
  int calib_replicas = 100;
  int train_size = 53;
  int repeats = 10000;
  int log_bins = 16;
  bool exclude_self = true;
  bool margins_from_od = false;
  bool force = false;
};

CoordinateMode parse_mode(const std::string& mode) {
  if (mode == "projected") return CoordinateMode::projected;
  if (mode == "geodetic") return CoordinateMode::geodetic;
  throw input_error("mode must be 'projected' or 'geodetic'");
}

fs::path out_dir(const Options& opt) {
  // Env override applies only when --out was not given explicitly.
  if (!opt.out_given)
    if (const char* env = std::getenv("COMMNET_OUT")) return env;
  return opt.out;
}

StudyArea load_area(const Options& opt) {
  if (opt.units.empty()) throw input_error("--units is required");
  io::LoadConfig cfg;
  cfg.mode = parse_mode(opt.mode);
  cfg.force = opt.force;
  if (opt.margins_from_od) {
    if (opt.od.empty())
      throw input_error("--margins-from-od requires --od");
    cfg.margins_from_od = opt.od;
  }
  return io::load_study_area(opt.units, cfg);
}

void write_manifest(const Options& opt, const std::string& subcommand,
                    const std::vector<std::string>& argv,
                    const std::vector<std::string>& outputs) {
  json m;
  m["tool"] = "commnet";
  m["version"] = kVersion;
  m["subcommand"] = subcommand;
  m["argv"] = argv;
  m["seed"] = opt.seed;
  json inputs = json::object();
  if (!opt.units.empty()) inputs["units"] = opt.units;
  if (!opt.od.empty()) inputs["od"] = opt.od;
  if (!opt.od_sim.empty()) inputs["od_sim"] = opt.od_sim;
  if (!opt.sim_a.empty()) inputs["sim_a"] = opt.sim_a;
  if (!opt.sim_b.empty()) inputs["sim_b"] = opt.sim_b;
  if (!opt.cases.empty()) inputs["cases"] = opt.cases;
  m["inputs"] = inputs;
  m["outputs"] = outputs;
  const fs::path dir = out_dir(opt);
  fs::create_directories(dir);
  io::atomic_write(dir / "manifest.json", m.dump(2) + "\n");
}

void write_output(const Options& opt, const std::string& name,
                  const std::string& content) {
  const fs::path dir = out_dir(opt);
  fs::create_directories(dir);
  io::atomic_write(dir / name, content);
}

// ---- subcommands ----

void cmd_generate(const Options& opt, const std::vector<std::string>& argv) {
  if (opt.beta < 0.0) throw input_error("--beta is required");
  const StudyArea area = load_area(opt);
  GenerationConfig cfg;
  cfg.beta = opt.beta;
  cfg.seed = opt.seed;
  cfg.exclude_self = opt.exclude_self;
  cfg.replicas = opt.replicas;

  std::vector<std::string> outputs{"od_generated.csv"};
  if (opt.replicas <= 1) {
    const FlowMatrix w = generate_network(area, {.beta = cfg.beta,
                                                 .seed = derive_seed(cfg.seed, std::uint64_t{0}),
                                                 .exclude_self = cfg.exclude_self});
    write_output(opt, "od_generated.csv", io::od_to_csv(w));
  } else {
    const ReplicaRun run = run_replicas(area, cfg);
    write_output(opt, "od_generated.csv", io::od_to_csv(run.replicas[0]));
    write_output(opt, "od_mean.csv", io::real_od_to_csv(run.mean));
    outputs.push_back("od_mean.csv");
  }
  write_manifest(opt, "generate", argv, outputs);
}

void cmd_calibrate(const Options& opt, const std::vector<std::string>& argv) {
  if (opt.od.empty()) throw input_error("--od is required");
  const StudyArea area = load_area(opt);
  const FlowMatrix observed =
      io::load_od(opt.od, area.residence_ids(), area.ext_ids());

  CalibrationSearch search;
  search.beta_min = opt.beta_min;
  search.beta_max = opt.beta_max;
  search.tolerance = opt.tolerance;
  if (opt.strategy == "grid")
    search.strategy = SearchStrategy::grid;
  else if (opt.strategy != "golden")
    throw input_error("strategy must be 'golden' or 'grid'");

  const CalibrationResult result = calibrate_beta(
      area, observed, search, opt.calib_replicas, opt.seed, opt.bin_width_m,
      opt.exclude_self,
      [](const std::string& msg) { std::cerr << "warning: " << msg << "\n"; });

  std::ostringstream summary;
  summary.precision(17);
  summary << "beta_star,ks_at_star,replicas,fell_back_to_grid\n"
          << result.beta_star << ',' << result.ks_at_star << ','
          << result.replicas << ',' << (result.fell_back_to_grid ? 1 : 0)
          << '\n';
  write_output(opt, "calibration_result.csv", summary.str());
  write_output(opt, "calibration_trace.csv", io::calibration_trace_to_csv(result));
  write_manifest(opt, "calibrate", argv,
                 {"calibration_result.csv", "calibration_trace.csv"});
  std::cout.precision(17);
  std::cout << "beta_star " << result.beta_star << "\nks " << result.ks_at_star
            << "\n";
}

void cmd_validate(const Options& opt, const std::vector<std::string>& argv) {
  if (opt.od.empty()) throw input_error("--od is required");
  const StudyArea area = load_area(opt);
  const FlowMatrix observed =
      io::load_od(opt.od, area.residence_ids(), area.ext_ids());
  const auto s_in = area.s_in_vector();
  const auto s_out = area.s_out_vector();
  const FlowMatrix obs_table = build_comparison_table(observed, s_in, s_out);

  std::ostringstream table;
  table.precision(17);
  table << "replica,cpc,ncc,nc_obs,nc_sim\n";
  auto add_row = [&](int replica, const FlowMatrix& sim) {
    const FlowMatrix sim_table = build_comparison_table(sim, s_in, s_out);
    table << replica << ',' << cpc(obs_table, sim_table) << ','
          << ncc(obs_table, sim_table) << ',' << nc(obs_table) << ','
          << nc(sim_table) << '\n';
  };

  if (!opt.od_sim.empty()) {
    add_row(0, io::load_od(opt.od_sim, area.residence_ids(), area.ext_ids()));
  } else {
    if (opt.beta < 0.0)
      throw input_error("either --od-sim or --beta is required");
    GenerationConfig cfg;
    cfg.beta = opt.beta;
    cfg.seed = opt.seed;
    cfg.exclude_self = opt.exclude_self;
    cfg.replicas = opt.replicas;
    const ReplicaRun run = run_replicas(area, cfg);
    for (std::size_t r = 0; r < run.replicas.size(); ++r)
      add_row(static_cast<int>(r), run.replicas[r]);
  }
  write_output(opt, "validation.csv", table.str());
  write_manifest(opt, "validate", argv, {"validation.csv"});
  std::cout << io::read_file(out_dir(opt) / "validation.csv");
}

void cmd_fit_law(const Options& opt, const std::vector<std::string>& argv) {
  if (opt.cases.empty()) throw input_error("--cases is required");
  const auto cases = io::load_case_summaries(opt.cases);
  std::vector<std::pair<double, double>> points;
  for (const auto& c : cases)
    points.emplace_back(c.mean_area_km2, c.beta_calibrated);
  const PowerLawFit fit = fit_power_law(points);

  std::ostringstream out;
  out.precision(17);
  out << "alpha,nu,adj_r2,n_points\n"
      << fit.alpha << ',' << fit.nu << ',' << fit.adj_r2 << ',' << fit.n_points
      << '\n';
  write_output(opt, "law_fit.csv", out.str());

  std::ostringstream pts;
  pts.precision(17);
  pts << "case_id,ln_mean_area,ln_beta\n";
  for (const auto& c : cases)
    pts << c.case_id << ',' << std::log(c.mean_area_km2) << ','
        << std::log(c.beta_calibrated) << '\n';
  write_output(opt, "loglog_points.csv", pts.str());
  write_manifest(opt, "fit-law", argv, {"law_fit.csv", "loglog_points.csv"});

  std::cout.precision(17);
  std::cout << "alpha " << fit.alpha << "\nnu " << fit.nu << "\nadj_r2 "
            << fit.adj_r2 << "\n";
}

void cmd_crossval(const Options& opt, const std::vector<std::string>& argv) {
  if (opt.cases.empty()) throw input_error("--cases is required");
  const auto cases = io::load_case_summaries(opt.cases);
  const CrossValidationResult cv = cross_validate(
      cases, opt.train_size, opt.repeats, opt.seed,
      [](const std::string& msg) { std::cerr << "warning: " << msg << "\n"; });

  std::ostringstream summary;
  summary.precision(17);
  summary << "case_id,estimates,mean_beta,min_beta,max_beta\n";
  for (const auto& c : cv.cases)
    summary << c.case_id << ',' << c.predicted_betas.size() << ',' << c.mean
            << ',' << c.min << ',' << c.max << '\n';
  write_output(opt, "crossval_summary.csv", summary.str());

  std::ostringstream est;
  est.precision(17);
  est << "case_id,predicted_beta\n";
  for (const auto& c : cv.cases)
    for (double b : c.predicted_betas) est << c.case_id << ',' << b << '\n';
  write_output(opt, "crossval_estimates.csv", est.str());
  write_manifest(opt, "crossval", argv,
                 {"crossval_summary.csv", "crossval_estimates.csv"});
}

void cmd_radiation(const Options& opt, const std::vector<std::string>& argv) {
  if (opt.units.empty()) throw input_error("--units is required");
  const io::UnitsData data = io::load_units(opt.units);
  std::vector<SpatialUnit> all = data.residence;
  all.insert(all.end(), data.outside.begin(), data.outside.end());

  RadiationInputs in;
  in.distances = build_distance_matrix(all, all, parse_mode(opt.mode));
  for (const auto& u : all) {
    if (!u.population)
      throw input_error("radiation needs a population column; unit '" + u.id +
                        "' has none");
    in.populations.push_back(*u.population);
    in.labels.push_back(u.id);
    in.out_commuters.push_back(static_cast<double>(u.s_out));
  }
  double pop_sum = 0.0, commuter_sum = 0.0;
  for (const auto& u : all) pop_sum += *u.population;
  for (const auto& u : data.residence) commuter_sum += static_cast<double>(u.s_out);
  in.total_population = opt.total_population > 0 ? opt.total_population : pop_sum;
  in.total_commuters = opt.total_commuters >= 0 ? opt.total_commuters : commuter_sum;

  RadiationPrefactor pre = RadiationPrefactor::paper_literal;
  if (opt.prefactor == "origin")
    pre = RadiationPrefactor::origin_commuters;
  else if (opt.prefactor != "paper")
    throw input_error("prefactor must be 'paper' or 'origin'");

  const RealFlowMatrix full = radiation_flows(in, pre, [](const std::string& msg) {
    std::cerr << "warning: " << msg << "\n";
  });
  // Keep only residence origins so the output lines up with generated
  // networks and can feed straight into the report subcommand.
  RealFlowMatrix flows;
  flows.flows = Matrix<double>(data.residence.size(), all.size());
  flows.row_labels.assign(full.row_labels.begin(),
                          full.row_labels.begin() + data.residence.size());
  flows.col_labels = full.col_labels;
  for (std::size_t r = 0; r < data.residence.size(); ++r)
    for (std::size_t c = 0; c < all.size(); ++c)
      flows.flows(r, c) = full.flows(r, c);
  write_output(opt, "radiation_flows.csv", io::real_od_to_csv(flows));
  write_manifest(opt, "radiation", argv, {"radiation_flows.csv"});
}

void cmd_report(const Options& opt, const std::vector<std::string>& argv) {
  if (opt.od.empty() || opt.sim_a.empty() || opt.sim_b.empty())
    throw input_error("--od, --sim-a and --sim-b are required");
  const StudyArea area = load_area(opt);
  const FlowMatrix observed =
      io::load_od(opt.od, area.residence_ids(), area.ext_ids());
  const RealFlowMatrix a =
      io::load_real_od(opt.sim_a, area.residence_ids(), area.ext_ids());
  const RealFlowMatrix b =
      io::load_real_od(opt.sim_b, area.residence_ids(), area.ext_ids());

  const ModelComparison cmp = compare_models(observed, a, b, opt.log_bins,
                                             &area.distances, opt.bin_width_m);

  std::ostringstream scatter;
  scatter.precision(17);
  scatter << "observed,model_a,model_b\n";
  for (const auto& p : cmp.scatter)
    scatter << p.observed << ',' << p.model_a << ',' << p.model_b << '\n';
  write_output(opt, "report_scatter.csv", scatter.str());

  std::ostringstream bins;
  bins.precision(17);
  bins << "bin_lo,bin_hi,count,mean_observed,mean_a,mean_b\n";
  for (const auto& bin : cmp.bins)
    bins << bin.lo << ',' << bin.hi << ',' << bin.count << ','
         << bin.mean_observed << ',' << bin.mean_a << ',' << bin.mean_b << '\n';
  write_output(opt, "report_bins.csv", bins.str());

  std::ostringstream cpcs;
  cpcs.precision(17);
  cpcs << "model,cpc\n"
       << "a," << cmp.cpc_a << "\n"
       << "b," << cmp.cpc_b << "\n";
  write_output(opt, "report_cpc.csv", cpcs.str());

  std::vector<std::string> outputs{"report_scatter.csv", "report_bins.csv",
                                   "report_cpc.csv"};
  if (cmp.dist_observed) {
    write_output(opt, "report_dist_observed.csv",
                 io::histogram_to_csv(*cmp.dist_observed));
    outputs.push_back("report_dist_observed.csv");
  }
  if (cmp.dist_a) {
    write_output(opt, "report_dist_a.csv", io::histogram_to_csv(*cmp.dist_a));
    outputs.push_back("report_dist_a.csv");
  }
  if (cmp.dist_b) {
    write_output(opt, "report_dist_b.csv", io::histogram_to_csv(*cmp.dist_b));
    outputs.push_back("report_dist_b.csv");
  }
  write_manifest(opt, "report", argv, outputs);
  std::cout.precision(17);
  std::cout << "cpc_a " << cmp.cpc_a << "\ncpc_b " << cmp.cpc_b << "\n";
}

int run(const std::vector<std::string>& args);

void cmd_rerun(const std::string& manifest_path,
               const std::string& out_override) {
  const json m = json::parse(io::read_file(manifest_path));
  std::vector<std::string> argv = m.at("argv").get<std::vector<std::string>>();
  if (!out_override.empty()) {
    for (std::size_t i = 0; i + 1 < argv.size(); ++i)
      if (argv[i] == "--out") argv[i + 1] = out_override;
    if (std::find(argv.begin(), argv.end(), "--out") == argv.end()) {
      argv.push_back("--out");
      argv.push_back(out_override);
    }
  }
  const int rc = run(argv);
  if (rc != 0) throw input_error("rerun failed");
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"commuting network generation and calibration"};
  app.set_version_flag("--version", kVersion);
  app.set_config("--config");
  app.require_subcommand(1);

  Options opt;
  std::string manifest_path, rerun_out;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", opt.out, "output directory")
        ->each([&](const std::string&) { opt.out_given = true; });
    sub->add_option("--seed", opt.seed, "top-level RNG seed");
    sub->add_option("--mode", opt.mode, "coordinate mode: projected|geodetic");
  };
  auto add_area = [&](CLI::App* sub) {
    sub->add_option("--units", opt.units, "units CSV");
    sub->add_flag("--margins-from-od", opt.margins_from_od,
                  "derive margins from the observed OD file");
    sub->add_flag("--force", opt.force, "accept infeasible margins");
    sub->add_option("--exclude-self", opt.exclude_self,
                    "exclude intra-unit flows (default true)");
  };

  auto* generate = app.add_subcommand("generate", "generate a network");
  add_common(generate);
  add_area(generate);
  generate->add_option("--od", opt.od, "observed OD (for --margins-from-od)");
  generate->add_option("--beta", opt.beta, "distance-decay parameter, 1/m");
  generate->add_option("--replicas", opt.replicas, "replica count");

  auto* calibrate = app.add_subcommand("calibrate", "calibrate beta by KS distance");
  add_common(calibrate);
  add_area(calibrate);
  calibrate->add_option("--od", opt.od, "observed OD CSV")->required();
  calibrate->add_option("--beta-min", opt.beta_min, "search lower bound");
  calibrate->add_option("--beta-max", opt.beta_max, "search upper bound");
  calibrate->add_option("--strategy", opt.strategy, "golden|grid");
  calibrate->add_option("--tolerance", opt.tolerance, "relative tolerance on beta");
  calibrate->add_option("--replicas", opt.calib_replicas, "replicas per beta");
  calibrate->add_option("--bin-width-m", opt.bin_width_m, "histogram bin width");

  auto* validate = app.add_subcommand("validate", "CPC against observed flows");
  add_common(validate);
  add_area(validate);
  validate->add_option("--od", opt.od, "observed OD CSV")->required();
  validate->add_option("--od-sim", opt.od_sim, "simulated OD CSV");
  validate->add_option("--beta", opt.beta, "generate with this beta instead");
  validate->add_option("--replicas", opt.replicas, "replica count");

  auto* fitlaw = app.add_subcommand("fit-law", "fit beta = alpha * S^-nu");
  add_common(fitlaw);
  fitlaw->add_option("--cases", opt.cases, "case summary CSV")->required();

  auto* crossval = app.add_subcommand("crossval", "repeated-split cross validation");
  add_common(crossval);
  crossval->add_option("--cases", opt.cases, "case summary CSV")->required();
  crossval->add_option("--train-size", opt.train_size, "training set size");
  crossval->add_option("--repeats", opt.repeats, "number of random splits");

  auto* radiation = app.add_subcommand("radiation", "radiation-model baseline");
  add_common(radiation);
  radiation->add_option("--units", opt.units, "units CSV with population column");
  radiation->add_option("--nc", opt.total_commuters, "total commuters N_c");
  radiation->add_option("--n", opt.total_population, "total population N");
  radiation->add_option("--prefactor", opt.prefactor, "paper|origin");

  auto* report = app.add_subcommand("report", "observed-vs-model comparison tables");
  add_common(report);
  add_area(report);
  report->add_option("--od", opt.od, "observed OD CSV")->required();
  report->add_option("--sim-a", opt.sim_a, "model A OD CSV")->required();
  report->add_option("--sim-b", opt.sim_b, "model B OD CSV")->required();
  report->add_option("--log-bins", opt.log_bins, "geometric bin count");
  report->add_option("--bin-width-m", opt.bin_width_m, "histogram bin width");

  auto* rerun = app.add_subcommand("rerun", "re-execute a run from its manifest");
  rerun->add_option("--manifest", manifest_path, "manifest.json path")->required();
  rerun->add_option("--out", rerun_out, "override output directory");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (generate->parsed()) cmd_generate(opt, args);
    else if (calibrate->parsed()) cmd_calibrate(opt, args);
    else if (validate->parsed()) cmd_validate(opt, args);
    else if (fitlaw->parsed()) cmd_fit_law(opt, args);
    else if (crossval->parsed()) cmd_crossval(opt, args);
    else if (radiation->parsed()) cmd_radiation(opt, args);
    else if (report->parsed()) cmd_report(opt, args);
    else if (rerun->parsed()) cmd_rerun(manifest_path, rerun_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args);
}
