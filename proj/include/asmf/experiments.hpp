#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "asmf/estimators.hpp"
#include "asmf/models.hpp"

namespace asmf {

enum class ModelFamily { RankDeficient, FullRank, Custom };

// Configuration of a parametric study over the analytic quadratic family.
// Deterministic: a config (including base_seed) fixes every number in the
// result.
struct StudyConfig {
  ModelFamily family = ModelFamily::RankDeficient;
  int dim = 100;
  // Intrinsic-dimension targets; integers for the rank-deficient family.
  std::vector<double> delta_targets;
  std::vector<long> m1_values;
  // Low-fidelity sample rule: m2 = round(ratio * m1), or the smallest
  // admissible ratio when planner-driven.
  double m2_ratio = 63.0;
  bool m2_from_planner = false;
  int trials = 100;
  std::optional<std::uint64_t> base_seed;
  bool run_sf = true;
  bool run_mf = true;
  // Perturbation parameters of the low-fidelity model.
  double b = 0.22360679774997896;  // sqrt(0.05)
  double T = 0.1;
  double cost_ratio = 1.0;  // hi cost / lo cost, for budget bookkeeping
  std::optional<QuadraticModelSpec> custom_spec;  // Custom family only

  void validate() const;
};

StudyConfig study_config_from_json(const nlohmann::json& j);
nlohmann::json study_config_to_json(const StudyConfig& cfg);

struct StudyCell {
  EstimatorKind kind = EstimatorKind::SF;
  double delta = 0.0;  // cost coefficient gamma for budget studies
  long m1 = 0;
  long m2 = 0;
  int trial_count = 0;
  double mean_err = 0.0;
  double min_err = 0.0;
  double max_err = 0.0;
  double bound = 0.0;  // relative-error overlay; NaN when not applicable
  double cost = 0.0;   // one estimate, in cost_weight units
  std::vector<std::uint64_t> seeds;
  bool bound_violated = false;
  std::string diagnostic;  // nonempty when the cell failed
};

struct StudyResult {
  std::vector<StudyCell> cells;
  std::vector<std::string> notes;

  bool any_bound_violation() const;
  // Tidy table: estimator,delta,m1,m2,trial_count,mean_err,min_err,max_err,bound,cost
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

// Relative error of repeated estimates against the exact second-moment
// matrix, across the (delta, m1) grid, with the theoretical overlay per
// cell. Cells are ordered with m1 varying fastest.
StudyResult sweep_m1(const StudyConfig& cfg, int threads = 1);

// Same grid with delta varying fastest.
StudyResult sweep_intrinsic_dim(const StudyConfig& cfg, int threads = 1);

// Matched-budget comparison: for each cost coefficient gamma, the
// single-fidelity estimator gets sf_m1_per_gamma * gamma paired samples and
// the two-term estimator (mf_m1_per_gamma * gamma, mf_m2_per_gamma * gamma).
// The split must cost the same within one low-fidelity evaluation.
struct BudgetSplit {
  long sf_m1_per_gamma = 3;
  long mf_m1_per_gamma = 2;
  long mf_m2_per_gamma = 5;
};

StudyResult compare_budget(const ModelPair& pair, const SymMatrix& reference,
                           const std::vector<long>& budgets, const BudgetSplit& split,
                           int trials, std::uint64_t seed, int threads = 1);

}  // namespace asmf
