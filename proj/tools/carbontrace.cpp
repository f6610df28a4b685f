// carbontrace: locational carbon accounting for DC power grids.
//
// Subcommands: sample, fit, trace, opf, report. Outputs CSV/JSON artifacts
// under --out. Exit codes: 0 success, 2 usage/input error, 3 infeasible
// model, 4 numeric failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "carbontrace/case_io.hpp"
#include "carbontrace/dispatch.hpp"
#include "carbontrace/report_io.hpp"
#include "carbontrace/sampler.hpp"
#include "carbontrace/tracing.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitNumeric = 4;

struct RunConfig {
  std::string case_path;
  std::string out_dir = ".";
  std::uint64_t seed = 1;
  std::size_t sample_count = 1000;
  std::pair<double, double> load_range{0.7, 1.0};
  std::string scaling = "per_bus";
  double train_fraction = 0.8;
  std::string fit_mode = "joint";
  bool allow_rank_deficient = false;
  double permit_price = 0.0;
  std::string cap_text;  // "95ton", "190000lbs", or plain lbs
  double tolerance = ctrace::kDefaultTol;
  bool dump_ptdf = false;
  bool sorted = false;
  bool oracle = false;
  bool compare = false;
  double scale = 1.0;  // operating-point load scale for trace/opf
  std::string dataset_path;
  std::string factors_path;

  std::string canonical() const {
    std::ostringstream os;
    os << case_path << "|" << seed << "|" << sample_count << "|"
       << ctrace::fmt(load_range.first) << "|" << ctrace::fmt(load_range.second)
       << "|" << scaling << "|" << ctrace::fmt(train_fraction) << "|"
       << fit_mode << "|" << allow_rank_deficient << "|"
       << ctrace::fmt(permit_price) << "|" << cap_text << "|"
       << ctrace::fmt(tolerance) << "|" << sorted << "|" << oracle << "|"
       << compare << "|" << ctrace::fmt(scale) << "|" << dataset_path << "|"
       << factors_path;
    return os.str();
  }
  std::string hash() const {
    const std::string c = canonical();
    std::uint64_t h = ctrace::detail::fnv1a(0xcbf29ce484222325ULL, c.data(),
                                            c.size());
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
  }
};

double parse_cap_lbs(const std::string& text) {
  std::size_t used = 0;
  double v = std::stod(text, &used);
  std::string suffix = text.substr(used);
  while (!suffix.empty() && suffix.front() == ' ') suffix.erase(0, 1);
  if (suffix == "ton" || suffix == "tons" || suffix == "t")
    return v * ctrace::kLbsPerShortTon;
  if (suffix.empty() || suffix == "lbs" || suffix == "lb") return v;
  throw CLI::ValidationError("--cap", "unknown unit '" + suffix +
                                          "' (use lbs or ton)");
}

ctrace::LoadScaling scaling_of(const RunConfig& cfg) {
  return cfg.scaling == "system" ? ctrace::LoadScaling::system
                                 : ctrace::LoadScaling::per_bus;
}

std::string out_path(const RunConfig& cfg, const std::string& name) {
  std::filesystem::create_directories(cfg.out_dir);
  return (std::filesystem::path(cfg.out_dir) / name).string();
}

nlohmann::ordered_json provenance(const RunConfig& cfg,
                                  const ctrace::Network& net) {
  return nlohmann::ordered_json{{"network_fingerprint", net.fingerprint()},
                                {"config_hash", cfg.hash()}};
}

Eigen::VectorXd operating_loads(const ctrace::Network& net, double scale) {
  auto base = net.base_loads();
  Eigen::VectorXd d(static_cast<Eigen::Index>(base.size()));
  for (std::size_t i = 0; i < base.size(); ++i)
    d(static_cast<Eigen::Index>(i)) = scale * base[i];
  return d;
}

void maybe_dump_ptdf(const RunConfig& cfg, const ctrace::Network& net,
                     const ctrace::PtdfMatrix& ptdf) {
  if (cfg.dump_ptdf)
    ctrace::write_file(out_path(cfg, "ptdf.csv"), ptdf_to_csv(ptdf, net));
}

// ---- subcommand bodies ----

ctrace::Dataset run_sample(const RunConfig& cfg, const ctrace::Network& net,
                           const ctrace::PtdfMatrix& ptdf) {
  auto ds = ctrace::generate_dataset(net, ptdf, cfg.sample_count,
                                     cfg.load_range, cfg.seed, scaling_of(cfg));
  ctrace::write_file(out_path(cfg, "dataset.csv"), dataset_to_csv(ds));
  auto meta = dataset_metadata(ds);
  meta["config_hash"] = cfg.hash();
  ctrace::write_file(out_path(cfg, "dataset.json"), meta.dump(2) + "\n");
  return ds;
}

ctrace::FactorMatrix run_fit(const RunConfig& cfg, const ctrace::Network& net,
                             const ctrace::Dataset& ds) {
  if (ds.network_fingerprint != 0 &&
      ds.network_fingerprint != net.fingerprint())
    throw CLI::ValidationError(
        "--dataset", "dataset was sampled from a different network");
  auto [train, test] = ctrace::split(ds, cfg.train_fraction, cfg.seed);

  ctrace::FitOptions opt;
  opt.mode = cfg.fit_mode == "per_generator"
                 ? ctrace::FitMode::per_generator
                 : ctrace::FitMode::joint;
  opt.require_full_rank = !cfg.allow_rank_deficient;
  auto fm = ctrace::fit_distribution_factors(train, opt);

  double test_mae = 0.0, test_max = 0.0;
  for (std::size_t s = 0; s < test.size(); ++s) {
    Eigen::VectorXd err =
        (fm.alpha * test.dispatches[s] - test.loads[s]).cwiseAbs();
    test_mae += err.sum();
    test_max = std::max(test_max, err.maxCoeff());
  }
  test_mae /= static_cast<double>(test.size()) *
              static_cast<double>(fm.alpha.rows());

  ctrace::write_file(out_path(cfg, "factors.csv"), factors_to_csv(fm, net));
  nlohmann::ordered_json rep = provenance(cfg, net);
  rep["mode"] = cfg.fit_mode;
  rep["train_samples"] = train.size();
  rep["test_samples"] = test.size();
  rep["train_mae_mw"] = fm.mae();
  rep["train_max_ae_mw"] = fm.max_ae();
  rep["test_mae_mw"] = test_mae;
  rep["test_max_ae_mw"] = test_max;
  rep["dropped_generators"] = fm.dropped_generators;
  ctrace::write_file(out_path(cfg, "fit_report.json"), rep.dump(2) + "\n");
  return fm;
}

void run_trace(const RunConfig& cfg, const ctrace::Network& net,
               const ctrace::PtdfMatrix& ptdf,
               const ctrace::FactorMatrix& fm) {
  Eigen::VectorXd d = operating_loads(net, cfg.scale);
  auto r = ctrace::solve_baseline(net, d, ptdf, 0.0, cfg.tolerance);
  if (r.status != ctrace::SolveStatus::optimal)
    throw ctrace::InfeasibleDispatchError("operating-point OPF: " +
                                          std::string(to_string(r.status)));
  auto rep = ctrace::carbon_report(net, fm, r.p_g, d);

  std::optional<std::vector<std::optional<double>>> oracle_col;
  if (cfg.oracle) {
    std::vector<std::optional<double>> col(net.num_buses());
    ctrace::parallel_for(net.num_buses(), [&](std::size_t n) {
      if (d(static_cast<Eigen::Index>(n)) <= 0) return;
      ctrace::SensitivityOptions so;
      so.central = true;
      so.tol = cfg.tolerance;
      try {
        col[n] = ctrace::lmce_sensitivity_oracle(net, ptdf, d,
                                                 net.buses()[n].id, so);
      } catch (const ctrace::InfeasibleDispatchError&) {
        // perturbation infeasible at this bus; leave NA
      }
    });
    oracle_col = std::move(col);
  }
  const auto* oracle_ptr = oracle_col ? &*oracle_col : nullptr;
  ctrace::write_file(out_path(cfg, "trace.csv"),
                     carbon_report_to_csv(rep, net, d, cfg.sorted, oracle_ptr));
  auto j = carbon_report_to_json(rep, net, d, oracle_ptr);
  j.update(provenance(cfg, net));
  ctrace::write_file(out_path(cfg, "trace.json"), j.dump(2) + "\n");
}

void run_opf(const RunConfig& cfg, const ctrace::Network& net,
             const ctrace::PtdfMatrix& ptdf,
             const ctrace::FactorMatrix* fm) {
  Eigen::VectorXd d = operating_loads(net, cfg.scale);
  const bool carbon = !cfg.cap_text.empty() || cfg.permit_price > 0.0;

  auto base = ctrace::solve_baseline(net, d, ptdf, cfg.permit_price,
                                     cfg.tolerance);
  if (base.status != ctrace::SolveStatus::optimal)
    throw ctrace::InfeasibleDispatchError("baseline OPF: " +
                                          std::string(to_string(base.status)));
  auto jb = dispatch_to_json(base, net);
  jb.update(provenance(cfg, net));
  ctrace::write_file(out_path(cfg, "opf_baseline.json"), jb.dump(2) + "\n");
  ctrace::write_file(out_path(cfg, "opf_baseline.csv"),
                     dispatch_to_csv(base, net));
  if (!carbon) return;

  if (!fm)
    throw CLI::ValidationError("--factors",
                               "carbon-aware OPF needs a factor matrix");
  ctrace::CarbonOpfConfig copt;
  copt.permit_price = cfg.permit_price;
  if (!cfg.cap_text.empty()) copt.total_cap_lbs = parse_cap_lbs(cfg.cap_text);
  if (copt.total_cap_lbs <= 0.0)
    throw ctrace::InfeasibleDispatchError(
        "emission cap " + std::to_string(copt.total_cap_lbs) +
        " lbs is below the minimum achievable emission " +
        std::to_string(ctrace::min_achievable_emission(net, d, ptdf)) +
        " lbs for this load");
  auto r = ctrace::solve_carbon_opf(net, d, ptdf, *fm, copt, cfg.tolerance);
  if (r.status != ctrace::SolveStatus::optimal)
    throw ctrace::InfeasibleDispatchError(
        "carbon-aware OPF: " + std::string(to_string(r.status)) +
        "; tightest feasible cap is " +
        std::to_string(ctrace::min_achievable_emission(net, d, ptdf)) +
        " lbs");
  auto jc = dispatch_to_json(r, net);
  jc.update(provenance(cfg, net));
  ctrace::write_file(out_path(cfg, "opf_carbon.json"), jc.dump(2) + "\n");
  ctrace::write_file(out_path(cfg, "opf_carbon.csv"), dispatch_to_csv(r, net));

  if (cfg.compare) {
    nlohmann::ordered_json cmp = provenance(cfg, net);
    cmp["baseline"] = {{"power_cost_dollars", base.power_cost},
                       {"carbon_cost_dollars", base.carbon_cost},
                       {"total_cost_dollars", base.total_cost},
                       {"total_emission_lbs", base.total_emission_lbs},
                       {"solve_time_s", base.solve_time}};
    cmp["carbon_aware"] = {{"power_cost_dollars", r.power_cost},
                           {"carbon_cost_dollars", r.carbon_cost},
                           {"total_cost_dollars", r.total_cost},
                           {"total_emission_lbs", r.total_emission_lbs},
                           {"solve_time_s", r.solve_time}};
    cmp["emission_reduction_lbs"] =
        base.total_emission_lbs - r.total_emission_lbs;
    ctrace::write_file(out_path(cfg, "comparison.json"), cmp.dump(2) + "\n");
  }
}

// ---- wiring ----

std::string read_input(const std::string& path, const std::string& flag) {
  if (!std::filesystem::exists(path))
    throw CLI::ValidationError(flag, "file not found: " + path);
  return ctrace::read_file(path);
}

ctrace::ParseResult load_case(const RunConfig& cfg) {
  if (!std::filesystem::exists(cfg.case_path))
    throw CLI::ValidationError("--case", "file not found: " + cfg.case_path);
  auto pr = ctrace::load_case_file(cfg.case_path);
  for (const auto& w : pr.warnings)
    std::cerr << "warning: " << w.location << ": " << w.message << "\n";
  return pr;
}

ctrace::Dataset load_dataset(const std::string& path) {
  nlohmann::json meta;
  std::filesystem::path meta_path(path);
  meta_path.replace_extension(".json");
  if (std::filesystem::exists(meta_path))
    meta = nlohmann::json::parse(ctrace::read_file(meta_path.string()));
  return ctrace::dataset_from_csv(read_input(path, "--dataset"), meta);
}

int dispatch_command(const std::string& cmd, RunConfig& cfg) {
  auto pr = load_case(cfg);
  const ctrace::Network& net = pr.network;
  auto ptdf = ctrace::compute_ptdf(net);
  maybe_dump_ptdf(cfg, net, ptdf);

  if (cmd == "sample") {
    run_sample(cfg, net, ptdf);
  } else if (cmd == "fit") {
    run_fit(cfg, net, load_dataset(cfg.dataset_path));
  } else if (cmd == "trace") {
    auto fm = factors_from_csv(read_input(cfg.factors_path, "--factors"), net);
    run_trace(cfg, net, ptdf, fm);
  } else if (cmd == "opf") {
    std::optional<ctrace::FactorMatrix> fm;
    if (!cfg.factors_path.empty())
      fm = factors_from_csv(read_input(cfg.factors_path, "--factors"), net);
    run_opf(cfg, net, ptdf, fm ? &*fm : nullptr);
  } else if (cmd == "report") {
    auto ds = run_sample(cfg, net, ptdf);
    auto fm = run_fit(cfg, net, ds);
    run_trace(cfg, net, ptdf, fm);
    run_opf(cfg, net, ptdf, &fm);
    nlohmann::ordered_json summary = provenance(cfg, net);
    summary["artifacts"] = {"dataset.csv",     "dataset.json", "factors.csv",
                            "fit_report.json", "trace.csv",    "trace.json",
                            "opf_baseline.json"};
    ctrace::write_file(out_path(cfg, "summary.json"), summary.dump(2) + "\n");
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"locational carbon emission signals for DC power grids"};
  app.require_subcommand(1);

  RunConfig cfg;
  int threads = 0;

  auto add_common = [&](CLI::App* sub, bool needs_case = true) {
    auto* opt = sub->add_option("--case", cfg.case_path,
                                "case file (.json native, .m matpower)");
    if (needs_case) opt->required();
    sub->add_option("--out", cfg.out_dir, "output directory");
    sub->add_option("--seed", cfg.seed, "random seed");
    sub->add_option("--tol", cfg.tolerance, "solver tolerance");
    sub->add_option("--threads", threads, "worker threads (default: cores)");
    sub->add_flag("--dump-ptdf", cfg.dump_ptdf, "also write ptdf.csv");
  };
  auto add_sampling = [&](CLI::App* sub) {
    sub->add_option("--n", cfg.sample_count, "sample count")
        ->check(CLI::PositiveNumber);
    sub->add_option("--range", cfg.load_range,
                    "load scale range, two values (lo hi)");
    sub->add_option("--scaling", cfg.scaling, "per_bus or system")
        ->check(CLI::IsMember({"per_bus", "system"}));
  };
  auto add_fitting = [&](CLI::App* sub) {
    sub->add_option("--train-frac", cfg.train_fraction,
                    "training fraction of the dataset");
    sub->add_option("--mode", cfg.fit_mode, "fit mode")
        ->check(CLI::IsMember({"joint", "per_generator"}));
    sub->add_flag("--allow-rank-deficient", cfg.allow_rank_deficient,
                  "accept collinear dispatch and return the regularized fit");
  };
  auto add_carbon = [&](CLI::App* sub) {
    sub->add_option("--permit", cfg.permit_price, "permit price, $/lbs");
    sub->add_option("--cap", cfg.cap_text,
                    "system emission cap, e.g. 95ton or 190000lbs");
    sub->add_option("--scale", cfg.scale, "load scale for the operating point");
  };

  auto* s_sample = app.add_subcommand("sample", "draw and solve load scenarios");
  add_common(s_sample);
  add_sampling(s_sample);

  auto* s_fit = app.add_subcommand("fit", "fit distribution factors");
  add_common(s_fit);
  add_fitting(s_fit);
  s_fit->add_option("--dataset", cfg.dataset_path, "dataset csv from 'sample'")
      ->required();

  auto* s_trace = app.add_subcommand("trace", "per-bus emission report");
  add_common(s_trace);
  s_trace->add_option("--factors", cfg.factors_path, "factor csv from 'fit'")
      ->required();
  s_trace->add_option("--scale", cfg.scale, "load scale for the operating point");
  s_trace->add_flag("--sorted", cfg.sorted, "order rows by decreasing LMCE");
  s_trace->add_flag("--oracle", cfg.oracle,
                    "add the finite-difference benchmark column");

  auto* s_opf = app.add_subcommand("opf", "baseline / carbon-aware dispatch");
  add_common(s_opf);
  add_carbon(s_opf);
  s_opf->add_option("--factors", cfg.factors_path, "factor csv from 'fit'");
  s_opf->add_flag("--compare", cfg.compare, "write side-by-side comparison");

  auto* s_report = app.add_subcommand("report", "full pipeline in one run");
  add_common(s_report);
  add_sampling(s_report);
  add_fitting(s_report);
  add_carbon(s_report);
  s_report->add_flag("--sorted", cfg.sorted, "order rows by decreasing LMCE");
  s_report->add_flag("--oracle", cfg.oracle,
                     "add the finite-difference benchmark column");
  s_report->add_flag("--compare", cfg.compare,
                     "write side-by-side comparison");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  if (threads > 0)
    setenv("CTRACE_THREADS", std::to_string(threads).c_str(), 1);

  try {
    return dispatch_command(app.get_subcommands().front()->get_name(), cfg);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ctrace::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ctrace::InfeasibleDispatchError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const ctrace::RankDeficientFitError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
}
