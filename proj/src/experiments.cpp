#include "asmf/experiments.hpp"

#include <cmath>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>

#include "asmf/bounds.hpp"
#include "asmf/errors.hpp"
#include "asmf/matrix_io.hpp"
#include "asmf/rng.hpp"
#include "parallel_util.hpp"

namespace asmf {
namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

struct CellModel {
  QuadraticModelSpec spec;
  double delta = 0.0;
};

CellModel build_model(const StudyConfig& cfg, double delta_target) {
  CellModel m;
  switch (cfg.family) {
    case ModelFamily::RankDeficient: {
      const long k = std::lround(delta_target);
      if (static_cast<double>(k) != delta_target)
        throw std::invalid_argument("rank-deficient study: delta targets must be integers");
      m.spec.a = rank_deficient_a(cfg.dim, static_cast<int>(k));
      break;
    }
    case ModelFamily::FullRank:
      m.spec.a = full_rank_a(cfg.dim, delta_target);
      break;
    case ModelFamily::Custom:
      m.spec.a = cfg.custom_spec->a;
      break;
  }
  m.spec.b = cfg.family == ModelFamily::Custom ? cfg.custom_spec->b : cfg.b;
  m.spec.T = cfg.family == ModelFamily::Custom ? cfg.custom_spec->T : cfg.T;
  double norm_sq = 0.0;
  for (double v : m.spec.a) norm_sq += v * v;
  m.delta = norm_sq / (m.spec.a[0] * m.spec.a[0]);
  return m;
}

// Per-cell trial loop. Trials are independent substreams of the base seed;
// results are merged by trial index, so thread count cannot change them.
void run_cell_trials(StudyCell& cell, const ModelPair& pair, const SymMatrix& reference,
                     std::uint64_t base_seed, int trials, int threads) {
  std::vector<double> errors(static_cast<std::size_t>(trials), kNan);
  cell.seeds.resize(static_cast<std::size_t>(trials));
  for (int t = 0; t < trials; ++t)
    cell.seeds[t] = rng::derive_seed(base_seed, static_cast<std::uint64_t>(t));

  std::string diagnostic;
  std::mutex diag_mutex;
  detail::parallel_for_index(trials, threads, [&](long t) {
    try {
      const ASEstimate est =
          cell.kind == EstimatorKind::SF
              ? estimate_sf(pair.hi, cell.m1, cell.seeds[t], 1)
              : estimate_mf(pair, cell.m1, cell.m2, cell.seeds[t], 1);
      errors[t] = relative_error(reference, est.matrix);
      if (t == 0) cell.cost = est.cost;
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> lock(diag_mutex);
      if (diagnostic.empty()) diagnostic = e.what();
    }
  });
  if (!diagnostic.empty()) {
    cell.diagnostic = diagnostic;
    cell.mean_err = cell.min_err = cell.max_err = kNan;
    return;
  }

  double sum = 0.0, lo = errors[0], hi = errors[0];
  for (double e : errors) {
    sum += e;
    lo = std::min(lo, e);
    hi = std::max(hi, e);
  }
  cell.trial_count = trials;
  cell.mean_err = sum / trials;
  cell.min_err = lo;
  cell.max_err = hi;
}

StudyResult run_grid(const StudyConfig& cfg, int threads, bool m1_fastest) {
  cfg.validate();
  StudyResult result;
  const std::uint64_t base_seed = *cfg.base_seed;

  std::vector<double> deltas = cfg.delta_targets;
  if (cfg.family == ModelFamily::Custom) deltas = {0.0};  // actual delta from the spec

  std::vector<EstimatorKind> kinds;
  if (cfg.run_sf) kinds.push_back(EstimatorKind::SF);
  if (cfg.run_mf) kinds.push_back(EstimatorKind::MF);

  if (cfg.family == ModelFamily::FullRank)
    result.notes.push_back(
        "full-rank family: the smallest delta cell is the reference point for external "
        "comparison values quoted at unit intrinsic dimension");

  for (EstimatorKind kind : kinds) {
    for (std::size_t di = 0; di < deltas.size(); ++di) {
      const CellModel model = build_model(cfg, deltas[di]);
      const ModelPair pair =
          quad_model_pair(model.spec, InputDensity{DensityKind::UniformBox, cfg.dim},
                          cfg.cost_ratio);
      const SymMatrix reference = exact_H(model.spec, pair.hi.density);
      const FidelityParams fp = exact_fidelity_params(model.spec, pair.hi.density);
      const double e_mean = *fp.grad_norm_sq_mean;
      const double h_norm = operator_norm(reference);

      for (long m1 : cfg.m1_values) {
        StudyCell cell;
        cell.kind = kind;
        cell.delta = model.delta;
        cell.m1 = m1;
        cell.m2 = 0;
        if (kind == EstimatorKind::MF) {
          if (cfg.m2_from_planner) {
            cell.m2 = static_cast<long>(
                std::ceil(static_cast<double>(m1) * min_m2_ratio(fp.theta, fp.beta)));
          } else {
            cell.m2 = std::lround(cfg.m2_ratio * static_cast<double>(m1));
          }
          cell.m2 = std::max(1L, cell.m2);
          if (fp.theta > 0.0 &&
              static_cast<double>(cell.m2) <
                  static_cast<double>(m1) * min_m2_ratio(fp.theta, fp.beta)) {
            std::ostringstream msg;
            msg << "m2 rule violates the admissible ratio at delta=" << model.delta
                << " m1=" << m1 << " (m2=" << cell.m2 << " < " << std::ceil(
                       static_cast<double>(m1) * min_m2_ratio(fp.theta, fp.beta))
                << ")";
            result.notes.push_back(msg.str());
          }
        }

        BernsteinInputs bi;
        bi.dim = cfg.dim;
        bi.delta_v = fp.delta_h;
        if (kind == EstimatorKind::MF) {
          bi.v = mf_variance_bound(fp.theta, fp.beta, cell.m1, cell.m2, e_mean);
          bi.L = mf_summand_bound(fp.theta, fp.beta, cell.m1, cell.m2, e_mean);
        } else {
          bi.v = sf_variance_bound(fp.beta, cell.m1, e_mean, h_norm);
          bi.L = sf_summand_bound(fp.beta, cell.m1, e_mean);
        }
        cell.bound = bernstein_expectation(bi) / h_norm;

        run_cell_trials(cell, pair, reference, base_seed, cfg.trials, threads);
        if (cell.diagnostic.empty() && cell.mean_err > cell.bound)
          cell.bound_violated = true;
        result.cells.push_back(std::move(cell));
      }
    }
  }

  if (!m1_fastest) {
    // Reorder so delta varies fastest within each estimator block.
    std::vector<StudyCell> ordered;
    ordered.reserve(result.cells.size());
    const std::size_t n_delta = deltas.size(), n_m1 = cfg.m1_values.size();
    for (std::size_t k = 0; k < kinds.size(); ++k)
      for (std::size_t mi = 0; mi < n_m1; ++mi)
        for (std::size_t di = 0; di < n_delta; ++di)
          ordered.push_back(result.cells[k * n_delta * n_m1 + di * n_m1 + mi]);
    result.cells = std::move(ordered);
  }
  return result;
}

}  // namespace

void StudyConfig::validate() const {
  require(dim >= 1, "study config: dim must be >= 1");
  require(!m1_values.empty(), "study config: m1 list must be non-empty");
  for (long m1 : m1_values) require(m1 >= 1, "study config: m1 values must be >= 1");
  require(trials >= 1, "study config: trials must be >= 1");
  require(base_seed.has_value(), "study config: base seed is required");
  require(run_sf || run_mf, "study config: no estimator kinds selected");
  if (family == ModelFamily::Custom) {
    require(custom_spec.has_value(), "study config: custom family needs a model spec");
    custom_spec->validate();
    require(static_cast<int>(custom_spec->a.size()) == dim,
            "study config: custom spec dimension mismatch");
  } else {
    require(!delta_targets.empty(), "study config: delta target list must be non-empty");
    for (double d : delta_targets)
      require(d >= 1.0 && d <= static_cast<double>(dim),
              "study config: delta targets must lie in [1, dim]");
  }
  if (!m2_from_planner)
    require(std::isfinite(m2_ratio) && m2_ratio > 0.0,
            "study config: m2 ratio must be positive");
  require(std::isfinite(b) && b >= 0.0 && std::isfinite(T) && T > 0.0,
          "study config: bad perturbation parameters");
  require(std::isfinite(cost_ratio) && cost_ratio > 0.0,
          "study config: cost_ratio must be positive");
}

StudyConfig study_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataFormatError("study config: expected a JSON object");
  StudyConfig cfg;
  try {
    const std::string family = j.value("family", "rank-deficient");
    if (family == "rank-deficient")
      cfg.family = ModelFamily::RankDeficient;
    else if (family == "full-rank")
      cfg.family = ModelFamily::FullRank;
    else if (family == "custom")
      cfg.family = ModelFamily::Custom;
    else
      throw DataFormatError("study config: unknown family '" + family + "'");
    cfg.dim = j.value("dim", 100);
    cfg.delta_targets = j.value("delta_targets", std::vector<double>{});
    cfg.m1_values = j.value("m1_values", std::vector<long>{});
    if (j.contains("m2_rule")) {
      const auto& rule = j.at("m2_rule");
      if (rule.contains("planner") && rule.at("planner").get<bool>())
        cfg.m2_from_planner = true;
      else if (rule.contains("ratio"))
        cfg.m2_ratio = rule.at("ratio").get<double>();
      else
        throw DataFormatError("study config: m2_rule needs 'ratio' or 'planner'");
    }
    cfg.trials = j.value("trials", 100);
    if (j.contains("base_seed")) cfg.base_seed = j.at("base_seed").get<std::uint64_t>();
    if (j.contains("estimators")) {
      cfg.run_sf = cfg.run_mf = false;
      for (const auto& kind : j.at("estimators")) {
        if (kind == "sf")
          cfg.run_sf = true;
        else if (kind == "mf")
          cfg.run_mf = true;
        else
          throw DataFormatError("study config: unknown estimator kind");
      }
    }
    cfg.b = j.value("b", cfg.b);
    cfg.T = j.value("T", cfg.T);
    cfg.cost_ratio = j.value("cost_ratio", 1.0);
    if (j.contains("custom_spec")) {
      QuadraticModelSpec spec;
      spec.a = j.at("custom_spec").at("a").get<std::vector<double>>();
      spec.b = j.at("custom_spec").value("b", 0.0);
      spec.T = j.at("custom_spec").value("T", 1.0);
      cfg.custom_spec = std::move(spec);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataFormatError(std::string("study config: ") + e.what());
  }
  return cfg;
}

nlohmann::json study_config_to_json(const StudyConfig& cfg) {
  nlohmann::json j;
  switch (cfg.family) {
    case ModelFamily::RankDeficient: j["family"] = "rank-deficient"; break;
    case ModelFamily::FullRank: j["family"] = "full-rank"; break;
    case ModelFamily::Custom: j["family"] = "custom"; break;
  }
  j["dim"] = cfg.dim;
  j["delta_targets"] = cfg.delta_targets;
  j["m1_values"] = cfg.m1_values;
  if (cfg.m2_from_planner)
    j["m2_rule"] = {{"planner", true}};
  else
    j["m2_rule"] = {{"ratio", cfg.m2_ratio}};
  j["trials"] = cfg.trials;
  if (cfg.base_seed) j["base_seed"] = *cfg.base_seed;
  std::vector<std::string> kinds;
  if (cfg.run_sf) kinds.push_back("sf");
  if (cfg.run_mf) kinds.push_back("mf");
  j["estimators"] = kinds;
  j["b"] = cfg.b;
  j["T"] = cfg.T;
  j["cost_ratio"] = cfg.cost_ratio;
  if (cfg.custom_spec) {
    j["custom_spec"] = {{"a", cfg.custom_spec->a},
                        {"b", cfg.custom_spec->b},
                        {"T", cfg.custom_spec->T}};
  }
  return j;
}

bool StudyResult::any_bound_violation() const {
  for (const auto& cell : cells)
    if (cell.bound_violated) return true;
  return false;
}

std::string StudyResult::to_csv() const {
  std::ostringstream out;
  out << "estimator,delta,m1,m2,trial_count,mean_err,min_err,max_err,bound,cost\n";
  for (const auto& c : cells) {
    out << to_string(c.kind) << ',' << io::format_double(c.delta) << ',' << c.m1 << ','
        << c.m2 << ',' << c.trial_count << ',' << io::format_double(c.mean_err) << ','
        << io::format_double(c.min_err) << ',' << io::format_double(c.max_err) << ','
        << io::format_double(c.bound) << ',' << io::format_double(c.cost) << "\n";
  }
  return out.str();
}

nlohmann::json StudyResult::to_json() const {
  nlohmann::json j;
  j["cells"] = nlohmann::json::array();
  for (const auto& c : cells) {
    nlohmann::json cj;
    cj["estimator"] = to_string(c.kind);
    cj["delta"] = c.delta;
    cj["m1"] = c.m1;
    cj["m2"] = c.m2;
    cj["trial_count"] = c.trial_count;
    cj["mean_err"] = c.mean_err;
    cj["min_err"] = c.min_err;
    cj["max_err"] = c.max_err;
    cj["bound"] = c.bound;
    cj["cost"] = c.cost;
    cj["seeds"] = c.seeds;
    cj["bound_violated"] = c.bound_violated;
    if (!c.diagnostic.empty()) cj["diagnostic"] = c.diagnostic;
    j["cells"].push_back(std::move(cj));
  }
  j["notes"] = notes;
  return j;
}

StudyResult sweep_m1(const StudyConfig& cfg, int threads) {
  return run_grid(cfg, threads, /*m1_fastest=*/true);
}

StudyResult sweep_intrinsic_dim(const StudyConfig& cfg, int threads) {
  return run_grid(cfg, threads, /*m1_fastest=*/false);
}

StudyResult compare_budget(const ModelPair& pair, const SymMatrix& reference,
                           const std::vector<long>& budgets, const BudgetSplit& split,
                           int trials, std::uint64_t seed, int threads) {
  require(trials >= 1, "compare_budget: trials must be >= 1");
  require(split.sf_m1_per_gamma >= 1 && split.mf_m1_per_gamma >= 1 &&
              split.mf_m2_per_gamma >= 1,
          "compare_budget: split coefficients must be >= 1");
  const double hi_cost = pair.hi.cost_weight, lo_cost = pair.lo.cost_weight;
  for (long gamma : budgets) {
    if (gamma <= 0) continue;
    const double sf_cost = static_cast<double>(split.sf_m1_per_gamma * gamma) * hi_cost;
    const double mf_cost =
        static_cast<double>(split.mf_m1_per_gamma * gamma) * hi_cost +
        static_cast<double>((split.mf_m1_per_gamma + split.mf_m2_per_gamma) * gamma) * lo_cost;
    if (std::abs(sf_cost - mf_cost) > lo_cost + 1e-9)
      throw std::invalid_argument(
          "compare_budget: splits are not cost-matched within one low-fidelity evaluation");
  }

  StudyResult result;
  result.notes.push_back("budget study: the delta column holds the cost coefficient");
  for (long gamma : budgets) {
    if (gamma <= 0) continue;
    for (EstimatorKind kind : {EstimatorKind::SF, EstimatorKind::MF}) {
      StudyCell cell;
      cell.kind = kind;
      cell.delta = static_cast<double>(gamma);
      if (kind == EstimatorKind::SF) {
        cell.m1 = split.sf_m1_per_gamma * gamma;
        cell.m2 = 0;
      } else {
        cell.m1 = split.mf_m1_per_gamma * gamma;
        cell.m2 = split.mf_m2_per_gamma * gamma;
      }
      cell.bound = kNan;
      run_cell_trials(cell, pair, reference, seed, trials, threads);
      result.cells.push_back(std::move(cell));
    }
  }
  return result;
}

}  // namespace asmf
