#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "liqlsmc/liquidity.hpp"
#include "liqlsmc/model.hpp"
#include "liqlsmc/rebalance.hpp"
#include "liqlsmc/regression.hpp"
#include "liqlsmc/utility.hpp"

namespace liqlsmc {

/// Discrete admissible allocations a_1 < ... < a_J inside [0, 1].
struct ControlGrid {
    std::vector<double> levels;
    double step = 0.0;

    /// {0, step, 2 step, ..., 1}; 1/step must be (close to) an integer.
    static ControlGrid uniform(double step);

    void validate() const;
    std::size_t size() const noexcept { return levels.size(); }
    /// Index of `a` in levels; throws std::out_of_range when a is not a grid level.
    std::size_t index_of(double a) const;

    friend bool operator==(const ControlGrid&, const ControlGrid&) = default;
};

enum class Algorithm { PerLevel, Klp };

std::string to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& s);

/// Everything a solve needs besides the exogenous sample.
struct SolveConfig {
    Utility utility = Utility::crra(5.0);
    double rf = 0.012 / 12.0;  // per period
    double w0 = 1e8;
    double s0 = 200.0;
    std::size_t n_paths = 100000;
    std::size_t n_steps = 12;
    std::size_t iterations = 1;
    std::uint64_t seed = 1;
    CostModel costs;
    ControlGrid grid = ControlGrid::uniform(0.01);
    std::size_t basis_degree = 2;
    bool cross_terms = true;
    Algorithm algorithm = Algorithm::PerLevel;
    RebalanceOptions rebalance;
    std::size_t threads = 1;
    double max_excluded_fraction = 0.01;

    void validate() const;
};

/// Raised by solver stages; the message carries (path, step) or (step, level) context.
class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Endogenous trajectories induced by a control sequence on a PathSet.
/// Entry (m, n) for n = 0..N; pre-state at t_n^-, post-state at t_n.
struct ForwardSample {
    std::size_t n_paths = 0;
    std::size_t n_steps = 0;
    std::vector<double> alpha;
    std::vector<double> q_pre, qf_pre, s_pre, w_pre;
    std::vector<double> q_post, qf_post, s_post, w_post;
    std::vector<std::uint8_t> excluded;  // per path; only set by evaluation passes
    std::size_t n_excluded = 0;

    ForwardSample() = default;
    ForwardSample(std::size_t paths, std::size_t steps);

    std::size_t index(std::size_t path, std::size_t step) const noexcept { return path * (n_steps + 1) + step; }
    PortfolioState pre_state(std::size_t path, std::size_t step) const;
    PortfolioState post_state(std::size_t path, std::size_t step) const;
    double terminal_wealth(std::size_t path) const noexcept { return w_post[index(path, n_steps)]; }
};

/// Continuation-value regressions and the resulting decision rule.
///
/// PerLevel: coefficients[n] is J x K, one row per grid level, n = 1..N-1
/// (coefficients[0] is empty). Klp: coefficients[n] is 1 x K over the basis
/// extended with the allocation, n = 0..N-1.
struct Policy {
    using CoefMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    Algorithm algorithm = Algorithm::PerLevel;
    ControlGrid grid;
    BasisSpec basis;
    std::size_t n_steps = 0;
    std::vector<CoefMatrix> coefficients;
    double initial_action = 0.0;
    std::vector<double> initial_cv;
    bool terminal_liquidation = true;

    void validate() const;
    CoefficientVector coefficient(std::size_t step, std::size_t level) const;

    friend bool operator==(const Policy& a, const Policy& b);
};

/// IID uniform draws from the grid per (path, step).
struct UniformRandomControls {};

using ControlSource = std::variant<UniformRandomControls, const Policy*>;

/// Starts all-cash at w0 and s0, applies a control at each t_n (n < N),
/// liquidates at t_N and evolves one period in between:
/// S_{n+1^-} = S_n exp(r_{n+1}), W_{n+1^-} = q_n S_{n+1^-} + q^f_n (1 + rf).
/// Rebalance failures throw SolverError annotated with (path, step).
ForwardSample forward_simulate(const PathSet& paths, const ControlSource& controls, const SolveConfig& cfg);

/// Per-level backward dynamic program with performance-function targets.
Policy backward_induction(const PathSet& paths, const ForwardSample& fwd, const SolveConfig& cfg);

/// Control-regression baseline: one regression per step with the allocation as an extra input.
Policy klp_backward(const PathSet& paths, const ForwardSample& fwd, const SolveConfig& cfg);

struct IterationDiagnostics {
    std::size_t iteration = 0;
    double initial_action = 0.0;
    double best_initial_cv = 0.0;
    double oos_cer = std::numeric_limits<double>::quiet_NaN();  // per period; NaN without evaluation paths
    std::size_t excluded_paths = 0;
};

struct SolveResult {
    Policy policy;                // final iteration
    std::vector<Policy> history;  // one per iteration 0..I
    std::vector<IterationDiagnostics> diagnostics;
};

/// Iteration 0 uses uniformly randomized controls; iterations 1..I re-simulate
/// the endogenous states under the previous policy and solve again. When
/// `evaluation` is given, each iteration's policy is scored out of sample.
SolveResult solve_with_iteration(const PathSet& paths, const SolveConfig& cfg, const PathSet* evaluation = nullptr);

/// Basis spec for cfg and sample: predictor scales are the sample means of the predictors.
BasisSpec make_basis_spec(const PathSet& paths, const SolveConfig& cfg);

/// Decision at t_n for a pre-transaction state: n = 0 gives the initial
/// action, n = N gives 0, otherwise argmax over levels of the fitted
/// continuation value at each candidate's post-transaction state. Ties go to
/// the lowest level; candidates whose rebalance fails are skipped.
double policy_action(const Policy& p, std::size_t step, const PortfolioState& state, std::span<const double> z,
                     const CostModel& m, const RebalanceOptions& options = {});

/// Result of simulating a policy on fresh paths.
struct PolicyRun {
    ForwardSample sample;
    std::vector<double> terminal_wealth;  // non-excluded paths only, in path order
};

/// Forward pass under `p`. Decisions are evaluated with `decision_costs`
/// (defaults to cfg.costs) and executed with cfg.costs. Paths whose rebalance
/// fails are excluded and counted instead of aborting.
PolicyRun run_policy(const PathSet& paths, const Policy& p, const SolveConfig& cfg,
                     const CostModel* decision_costs = nullptr);

}  // namespace liqlsmc
