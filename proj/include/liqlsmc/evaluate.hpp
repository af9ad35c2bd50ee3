#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "liqlsmc/lsmc.hpp"
#include "liqlsmc/model.hpp"
#include "liqlsmc/utility.hpp"

namespace liqlsmc {

/// Per-period certainty equivalent return U^{-1}(mean U(W_T / w0))^{1/T} - 1.
/// Wealth is floored at kWealthFloor * w0 first. Throws std::domain_error when
/// the mean utility is outside the range of U or the certainty equivalent is
/// not positive.
double cer(const Utility& u, std::span<const double> terminal_wealth, double w0, std::size_t n_periods);

inline double to_bps(double rate) { return rate * 1e4; }

/// Linear-interpolation sample quantile (type 7) of unsorted data.
double quantile(std::vector<double> data, double prob);

inline constexpr std::array<double, 5> kReportQuantiles{0.05, 0.25, 0.5, 0.75, 0.95};

struct WealthStats {
    double mean = 0.0;
    double stdev = 0.0;
    std::array<double, 5> quantiles{};  // at kReportQuantiles
};

struct EvaluationReport {
    double cer = 0.0;  // per period
    WealthStats terminal_wealth;
    double initial_action = 0.0;
    std::size_t n_paths_evaluated = 0;
    std::size_t excluded_paths = 0;

    double cer_bps() const { return to_bps(cer); }
};

/// Scores `p` on a given evaluation sample. Decisions use `decision_costs`
/// (cfg.costs when null); trades always execute under cfg.costs.
EvaluationReport evaluate_on(const Policy& p, const PathSet& paths, const SolveConfig& cfg,
                             const CostModel* decision_costs = nullptr);

/// Simulates a fresh sample of `eval_paths` paths (cfg.n_paths when 0) from
/// `model` with `eval_seed` and scores `p` on it. eval_seed must differ from cfg.seed.
EvaluationReport evaluate_policy(const Policy& p, const ExogenousModel& model, const SolveConfig& cfg,
                                 std::uint64_t eval_seed, std::size_t eval_paths = 0,
                                 const CostModel* decision_costs = nullptr);

struct BlindComparison {
    EvaluationReport aware;
    EvaluationReport blind;
    Policy aware_policy;
    Policy blind_policy;
};

/// Trains one policy under cfg.costs and one with liquidity cost and impact
/// switched off (proportional costs kept), on the same training sample, then
/// executes both under cfg.costs on one common evaluation sample.
BlindComparison liquidity_blind_comparison(const ExogenousModel& model, const SolveConfig& cfg,
                                           std::uint64_t eval_seed, std::size_t eval_paths = 0);

struct EvolutionRow {
    std::size_t step = 0;
    std::array<double, 5> alpha{};   // at kReportQuantiles
    std::array<double, 5> wealth{};  // post-transaction wealth, same quantiles
};

struct EvolutionTable {
    std::vector<EvolutionRow> rows;  // steps 0..N
};

EvolutionTable distribution_evolution(const Policy& p, const ExogenousModel& model, const SolveConfig& cfg,
                                      std::uint64_t eval_seed, std::size_t eval_paths = 0);
EvolutionTable distribution_evolution(const ForwardSample& sample);

enum class SweepAxis { VolDay, SigmaDay, W0, Horizon, Gamma };

std::string to_string(SweepAxis a);
SweepAxis sweep_axis_from_string(const std::string& s);

/// cfg with one axis set to `value`. Liquidity axes require a power-law cost model.
SolveConfig with_axis(const SolveConfig& cfg, SweepAxis axis, double value);

struct SweepPoint {
    double value = 0.0;
    double cer = 0.0;
    double initial_action = 0.0;
    std::size_t excluded_paths = 0;
};

struct SweepResult {
    SweepAxis axis = SweepAxis::VolDay;
    std::vector<SweepPoint> points;
};

/// Solves and evaluates once per axis value with everything else fixed. All
/// values share the training seed cfg.seed and the evaluation seed, so the
/// exogenous draws are common across the sweep.
SweepResult sweep(SweepAxis axis, const std::vector<double>& values, const ExogenousModel& model,
                  const SolveConfig& cfg, std::uint64_t eval_seed, std::size_t eval_paths = 0);

void write_sweep_csv(std::ostream& os, const SweepResult& r);
void write_evolution_csv(std::ostream& os, const EvolutionTable& t);
void write_comparison_csv(std::ostream& os, const BlindComparison& c);

}  // namespace liqlsmc
