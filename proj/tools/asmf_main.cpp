// Command-line front end: sample-size planning, estimation from model specs
// or gradient files, subspace analysis, and parametric studies.
//
// Exit codes: 0 success, 2 usage error, 3 data-format error, 4 numerical
// failure, 5 invariant violation in a study.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "asmf/bounds.hpp"
#include "asmf/errors.hpp"
#include "asmf/estimators.hpp"
#include "asmf/experiments.hpp"
#include "asmf/matrix_io.hpp"
#include "asmf/models.hpp"
#include "asmf/subspace.hpp"
#include "asmf/sym_matrix.hpp"

namespace {

using nlohmann::json;

// The one explicitly nondeterministic output field; everything else is a
// pure function of flags, input files and seed.
std::string timestamp_utc() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

void write_json(const json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream out(path);
  if (!out) throw asmf::DataFormatError("cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
  if (!out) throw asmf::DataFormatError("write failed: " + path);
}

int resolve_threads(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("ASMF_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

struct PlanArgs {
  std::string mode;
  double eps = 0.0;
  double eta = 0.1;
  double beta = 0.0;
  double theta = 0.0;
  double delta = 1.0;
  int dim = 0;
  double c_abs = 1.0;
  double grad_norm_sq_mean = -1.0;
  std::string output;
};

int cmd_plan(const PlanArgs& args) {
  asmf::FidelityParams p;
  p.beta = args.beta;
  p.theta = args.theta;
  p.delta_h = args.delta;
  p.dim = args.dim;
  if (args.grad_norm_sq_mean >= 0.0) p.grad_norm_sq_mean = args.grad_norm_sq_mean;

  asmf::SamplePlan plan;
  std::optional<double> c_abs;
  if (args.mode == "mf-exp") {
    plan = asmf::plan_mf_expectation(args.eps, p);
  } else if (args.mode == "mf-prob") {
    plan = asmf::plan_mf_probability(args.eps, args.eta, p);
  } else if (args.mode == "sf-exp") {
    std::cerr << "warning: the expectation-mode constant C is heuristic; "
                 "the theory only asserts its existence\n";
    plan = asmf::plan_sf_expectation(args.eps, p, args.c_abs);
    c_abs = args.c_abs;
  } else if (args.mode == "sf-prob") {
    plan = asmf::plan_sf_probability(args.eps, args.eta, p);
  } else {
    throw std::invalid_argument("plan: unknown mode '" + args.mode + "'");
  }

  json report = asmf::plan_report(plan, p, c_abs);
  report["generated_at"] = timestamp_utc();
  write_json(report, args.output);
  return 0;
}

struct EstimateArgs {
  std::string model_path;
  std::string batch_path;
  std::string kind = "sf";
  long m1 = 0;
  long m2 = 0;
  std::int64_t seed = -1;
  std::string output_prefix;
  std::string format = "both";  // csv | asmx | both
  std::string dump_batch;
};

int cmd_estimate(const EstimateArgs& args) {
  const bool want_mf = args.kind == "mf";
  if (!want_mf && args.kind != "sf")
    throw std::invalid_argument("estimate: --kind must be sf or mf");
  if (args.model_path.empty() == args.batch_path.empty())
    throw std::invalid_argument("estimate: exactly one of --model or --batch is required");

  asmf::GradientBatch batch;
  std::optional<std::uint64_t> seed;
  double hi_cost = 1.0, lo_cost = 1.0;

  if (!args.model_path.empty()) {
    if (args.seed < 0)
      throw std::invalid_argument("estimate: --seed is required for model-backed runs");
    if (args.m1 < 1) throw std::invalid_argument("estimate: --m1 must be >= 1");
    if (want_mf && args.m2 < 1)
      throw std::invalid_argument("estimate: --kind mf requires --m2 >= 1");
    if (!want_mf && args.m2 != 0)
      throw std::invalid_argument("estimate: --m2 is only valid with --kind mf");
    seed = static_cast<std::uint64_t>(args.seed);
    const asmf::ModelSpecFile model = asmf::read_model_spec(args.model_path);
    const asmf::InputDensity density{model.density,
                                     static_cast<int>(model.spec.a.size())};
    const asmf::ModelPair pair = asmf::quad_model_pair(model.spec, density, model.cost_ratio);
    hi_cost = pair.hi.cost_weight;
    lo_cost = pair.lo.cost_weight;
    batch = asmf::collect_batch(pair.hi, want_mf ? &pair.lo : nullptr, args.m1,
                                want_mf ? args.m2 : 0, *seed);
  } else {
    batch = asmf::read_batch_csv(args.batch_path);
    if (want_mf && !batch.has_lo())
      throw asmf::DataFormatError(
          "estimate: --kind mf but the batch has no lo_paired/lo_extra rows");
    if (!want_mf) {
      // Single-fidelity estimate over the hi rows only.
      batch.lo_paired = asmf::GradientRows();
      batch.lo_extra = asmf::GradientRows();
    }
  }

  asmf::ASEstimate est = asmf::estimate_from_batch(batch);
  if (seed) est.seed = *seed;
  est.cost = static_cast<double>(est.m1) * hi_cost +
             (est.kind == asmf::EstimatorKind::MF
                  ? static_cast<double>(est.m1 + est.m2) * lo_cost
                  : 0.0);
  const asmf::CharacteristicEstimate chars = asmf::estimate_characteristics(batch);

  if (!args.dump_batch.empty()) asmf::write_batch_csv(batch, args.dump_batch);

  if (args.output_prefix.empty())
    throw std::invalid_argument("estimate: -o output prefix is required");
  json meta;
  meta["kind"] = asmf::to_string(est.kind);
  meta["dim"] = est.matrix.dim();
  meta["m1"] = est.m1;
  meta["m2"] = est.m2;
  if (seed) meta["seed"] = *seed;
  meta["cost"] = est.cost;
  meta["characteristics"] = {{"grad_norm_sq_mean", chars.grad_norm_sq_mean},
                             {"h_norm", chars.h_norm},
                             {"delta_h", chars.delta_h},
                             {"beta_sq", chars.beta_sq}};
  if (chars.theta_sq) meta["characteristics"]["theta_sq"] = *chars.theta_sq;
  meta["files"] = json::array();
  if (args.format == "csv" || args.format == "both") {
    const std::string path = args.output_prefix + ".csv";
    asmf::io::write_matrix_csv(est.matrix, path);
    meta["files"].push_back(path);
  }
  if (args.format == "asmx" || args.format == "both") {
    const std::string path = args.output_prefix + ".asmx";
    asmf::io::write_matrix_asmx(est.matrix, path);
    meta["files"].push_back(path);
  }
  if (meta["files"].empty())
    throw std::invalid_argument("estimate: --format must be csv, asmx or both");
  meta["generated_at"] = timestamp_utc();
  write_json(meta, args.output_prefix + ".meta.json");
  return 0;
}

struct AnalyzeArgs {
  std::string matrix_path;
  std::string reference_path;
  int r = 0;
  int r_min = 0;
  int r_max = 0;
  std::string output_prefix;
};

int cmd_analyze(const AnalyzeArgs& args) {
  const asmf::SymMatrix a = asmf::io::read_matrix(args.matrix_path);
  std::vector<int> r_values;
  if (args.r > 0) {
    if (args.r_min > 0 || args.r_max > 0)
      throw std::invalid_argument("analyze: give either --r or --r-min/--r-max, not both");
    r_values.push_back(args.r);
  } else if (args.r_min > 0 && args.r_max >= args.r_min) {
    for (int r = args.r_min; r <= args.r_max; ++r) r_values.push_back(r);
  } else {
    throw std::invalid_argument("analyze: --r or a valid --r-min/--r-max range is required");
  }

  std::optional<asmf::SymMatrix> ref;
  if (!args.reference_path.empty()) ref = asmf::io::read_matrix(args.reference_path);

  const asmf::SubspaceReport report =
      asmf::subspace_report(a, r_values, ref ? &*ref : nullptr);
  json j = asmf::subspace_report_to_json(report);
  j["matrix_file"] = args.matrix_path;
  if (ref) j["reference_file"] = args.reference_path;

  if (args.output_prefix.empty())
    throw std::invalid_argument("analyze: -o output prefix is required");
  if (r_values.size() == 1) {
    const asmf::Subspace u = asmf::active_subspace(a, r_values[0]);
    const std::string basis_path = args.output_prefix + ".basis.csv";
    asmf::write_basis_csv(u, basis_path);
    j["basis_file"] = basis_path;
  }
  j["generated_at"] = timestamp_utc();
  write_json(j, args.output_prefix + ".report.json");
  return 0;
}

struct StudyArgs {
  std::string config_path;
  std::int64_t seed = -1;
  int trials = 0;
  std::string sweep = "";
  std::string output_prefix;
  int threads = 0;
};

int cmd_study(const StudyArgs& args) {
  std::ifstream in(args.config_path);
  if (!in) throw asmf::DataFormatError("cannot open " + args.config_path);
  json config_json;
  try {
    in >> config_json;
  } catch (const json::exception& e) {
    throw asmf::DataFormatError(args.config_path + ": " + e.what());
  }
  asmf::StudyConfig cfg = asmf::study_config_from_json(config_json);
  if (args.seed >= 0) cfg.base_seed = static_cast<std::uint64_t>(args.seed);
  if (!cfg.base_seed)
    throw std::invalid_argument(
        "study: a seed is required (config base_seed or --seed); stochastic runs "
        "never draw entropy implicitly");
  if (args.trials > 0) cfg.trials = args.trials;
  std::string sweep = args.sweep.empty() ? config_json.value("sweep", "m1") : args.sweep;

  const int threads = resolve_threads(args.threads);
  asmf::StudyResult result;
  if (sweep == "m1")
    result = asmf::sweep_m1(cfg, threads);
  else if (sweep == "intrinsic-dim")
    result = asmf::sweep_intrinsic_dim(cfg, threads);
  else
    throw std::invalid_argument("study: --sweep must be m1 or intrinsic-dim");

  if (args.output_prefix.empty())
    throw std::invalid_argument("study: -o output prefix is required");
  {
    std::ofstream csv(args.output_prefix + ".csv");
    if (!csv) throw asmf::DataFormatError("cannot open " + args.output_prefix + ".csv");
    csv << result.to_csv();
  }
  json j;
  j["config"] = asmf::study_config_to_json(cfg);
  j["sweep"] = sweep;
  j["result"] = result.to_json();
  j["generated_at"] = timestamp_utc();
  write_json(j, args.output_prefix + ".json");

  for (const auto& note : result.notes) std::cerr << "note: " << note << "\n";
  std::cout << "study: " << result.cells.size() << " cells, " << cfg.trials
            << " trials each\n";
  for (const auto& cell : result.cells) {
    if (cell.bound_violated) {
      throw asmf::InvariantViolation(
          "bound domination failed: estimator " + std::string(asmf::to_string(cell.kind)) +
          " delta " + asmf::io::format_double(cell.delta) + " m1 " + std::to_string(cell.m1) +
          " mean error " + asmf::io::format_double(cell.mean_err) + " exceeds bound " +
          asmf::io::format_double(cell.bound));
    }
    if (!cell.diagnostic.empty())
      std::cerr << "cell failed: " << cell.diagnostic << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gradient-based dimension reduction with single- and "
               "multifidelity second-moment estimators"};
  app.require_subcommand(1);

  int threads_flag = 0;
  app.add_option("--threads", threads_flag,
                 "worker threads (fallback: ASMF_THREADS); outputs do not depend on it");

  PlanArgs plan_args;
  CLI::App* plan = app.add_subcommand("plan", "sample-size planning from fidelity constants");
  plan->fallthrough();
  plan->add_option("--mode", plan_args.mode, "mf-exp | mf-prob | sf-exp | sf-prob")->required();
  plan->add_option("--eps", plan_args.eps, "relative error target")->required();
  plan->add_option("--eta", plan_args.eta, "failure probability (probability modes)");
  plan->add_option("--beta", plan_args.beta, "gradient magnitude constant")->required();
  plan->add_option("--theta", plan_args.theta, "low-fidelity quality constant (mf modes)");
  plan->add_option("--delta", plan_args.delta, "intrinsic dimension")->required();
  plan->add_option("--dim", plan_args.dim, "ambient dimension")->required();
  plan->add_option("--C", plan_args.c_abs, "absolute constant for sf-exp (heuristic)");
  plan->add_option("--grad-norm-sq-mean", plan_args.grad_norm_sq_mean,
                   "E[||grad f||^2] for absolute-scale diagnostics");
  plan->add_option("-o,--output", plan_args.output, "output JSON path (default stdout)");

  EstimateArgs est_args;
  CLI::App* estimate =
      app.add_subcommand("estimate", "estimate the second-moment matrix");
  estimate->fallthrough();
  estimate->add_option("--model", est_args.model_path, "quadratic model spec JSON");
  estimate->add_option("--batch", est_args.batch_path, "gradient batch CSV");
  estimate->add_option("--kind", est_args.kind, "sf | mf")->required();
  estimate->add_option("--m1", est_args.m1, "paired sample count (model runs)");
  estimate->add_option("--m2", est_args.m2, "extra low-fidelity samples (mf)");
  estimate->add_option("--seed", est_args.seed, "RNG seed (required for model runs)");
  estimate->add_option("-o,--output", est_args.output_prefix, "output file prefix");
  estimate->add_option("--format", est_args.format, "matrix format: csv | asmx | both");
  estimate->add_option("--dump-batch", est_args.dump_batch,
                       "write the evaluated gradient rows to this CSV");

  AnalyzeArgs an_args;
  CLI::App* analyze = app.add_subcommand("analyze", "subspace analysis of a matrix file");
  analyze->fallthrough();
  analyze->add_option("--matrix", an_args.matrix_path, "matrix file (.csv or .asmx)")
      ->required();
  analyze->add_option("--r", an_args.r, "subspace dimension");
  analyze->add_option("--r-min", an_args.r_min, "range start");
  analyze->add_option("--r-max", an_args.r_max, "range end");
  analyze->add_option("--reference", an_args.reference_path,
                      "reference matrix for the near-optimality certificate");
  analyze->add_option("-o,--output", an_args.output_prefix, "output file prefix");

  StudyArgs study_args;
  CLI::App* study = app.add_subcommand("study", "run a parametric study from a config");
  study->fallthrough();
  study->add_option("--config", study_args.config_path, "study config JSON")->required();
  study->add_option("--seed", study_args.seed, "base seed (overrides config)");
  study->add_option("--trials", study_args.trials, "trial count override");
  study->add_option("--sweep", study_args.sweep, "m1 | intrinsic-dim");
  study->add_option("-o,--output", study_args.output_prefix, "output file prefix");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (*plan) return cmd_plan(plan_args);
    if (*estimate) return cmd_estimate(est_args);
    if (*analyze) return cmd_analyze(an_args);
    if (*study) {
      study_args.threads = threads_flag;
      return cmd_study(study_args);
    }
    std::cerr << "error: no command\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const asmf::DataFormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const asmf::InvariantViolation& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  } catch (const asmf::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}
