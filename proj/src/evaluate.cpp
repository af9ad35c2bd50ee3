#include "liqlsmc/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "liqlsmc/regression.hpp"

namespace liqlsmc {

double cer(const Utility& u, std::span<const double> terminal_wealth, double w0, std::size_t n_periods) {
    if (terminal_wealth.empty()) throw std::invalid_argument("cer: no terminal wealths");
    if (!(w0 > 0.0)) throw std::invalid_argument("cer: w0 must be positive");
    if (n_periods < 1) throw std::invalid_argument("cer: need at least one period");
    double sum = 0.0;
    for (double w : terminal_wealth) sum += u(std::max(w, kWealthFloor * w0) / w0);
    const double mean = sum / static_cast<double>(terminal_wealth.size());
    const double ce = u.inverse(mean);
    if (!(ce > 0.0)) throw std::domain_error("cer: certainty equivalent wealth is not positive");
    return std::pow(ce, 1.0 / static_cast<double>(n_periods)) - 1.0;
}

double quantile(std::vector<double> data, double prob) {
    if (data.empty()) throw std::invalid_argument("quantile: empty sample");
    if (!(prob >= 0.0 && prob <= 1.0)) throw std::invalid_argument("quantile: probability outside [0, 1]");
    const double h = prob * static_cast<double>(data.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    std::nth_element(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(lo), data.end());
    const double a = data[lo];
    if (lo + 1 >= data.size()) return a;
    const double b = *std::min_element(data.begin() + static_cast<std::ptrdiff_t>(lo) + 1, data.end());
    return a + (h - static_cast<double>(lo)) * (b - a);
}

namespace {

std::array<double, 5> report_quantiles(const std::vector<double>& v) {
    std::array<double, 5> q{};
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = quantile(v, kReportQuantiles[i]);
    // Interpolation rounding can break ties by an ulp; keep rows monotone.
    for (std::size_t i = 1; i < q.size(); ++i) q[i] = std::max(q[i], q[i - 1]);
    return q;
}

WealthStats wealth_stats(const std::vector<double>& w) {
    WealthStats s;
    double sum = 0.0;
    for (double x : w) sum += x;
    s.mean = sum / static_cast<double>(w.size());
    double ss = 0.0;
    for (double x : w) ss += (x - s.mean) * (x - s.mean);
    s.stdev = w.size() > 1 ? std::sqrt(ss / static_cast<double>(w.size() - 1)) : 0.0;
    s.quantiles = report_quantiles(w);
    return s;
}

std::string fmt(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

}  // namespace

EvaluationReport evaluate_on(const Policy& p, const PathSet& paths, const SolveConfig& cfg,
                             const CostModel* decision_costs) {
    const auto run = run_policy(paths, p, cfg, decision_costs);
    if (run.terminal_wealth.empty()) throw SolverError("evaluate: every evaluation path failed to rebalance");
    EvaluationReport r;
    r.cer = cer(cfg.utility, run.terminal_wealth, cfg.w0, cfg.n_steps);
    r.terminal_wealth = wealth_stats(run.terminal_wealth);
    r.initial_action = p.initial_action;
    r.n_paths_evaluated = run.terminal_wealth.size();
    r.excluded_paths = run.sample.n_excluded;
    return r;
}

EvaluationReport evaluate_policy(const Policy& p, const ExogenousModel& model, const SolveConfig& cfg,
                                 std::uint64_t eval_seed, std::size_t eval_paths, const CostModel* decision_costs) {
    if (eval_seed == cfg.seed) throw std::invalid_argument("evaluate: evaluation seed must differ from the training seed");
    const auto paths = simulate(model, eval_paths ? eval_paths : cfg.n_paths, cfg.n_steps, eval_seed);
    return evaluate_on(p, paths, cfg, decision_costs);
}

BlindComparison liquidity_blind_comparison(const ExogenousModel& model, const SolveConfig& cfg,
                                           std::uint64_t eval_seed, std::size_t eval_paths) {
    if (eval_seed == cfg.seed) throw std::invalid_argument("evaluate: evaluation seed must differ from the training seed");
    const auto train = simulate(model, cfg.n_paths, cfg.n_steps, cfg.seed);
    const auto test = simulate(model, eval_paths ? eval_paths : cfg.n_paths, cfg.n_steps, eval_seed);

    SolveConfig blind_cfg = cfg;
    blind_cfg.costs = cfg.costs.without_liquidity_effects();

    BlindComparison c;
    c.aware_policy = solve_with_iteration(train, cfg).policy;
    c.blind_policy = solve_with_iteration(train, blind_cfg).policy;
    c.aware = evaluate_on(c.aware_policy, test, cfg);
    c.blind = evaluate_on(c.blind_policy, test, cfg, &blind_cfg.costs);
    return c;
}

EvolutionTable distribution_evolution(const ForwardSample& sample) {
    EvolutionTable t;
    std::vector<double> a, w;
    for (std::size_t n = 0; n <= sample.n_steps; ++n) {
        a.clear();
        w.clear();
        for (std::size_t m = 0; m < sample.n_paths; ++m) {
            if (sample.excluded[m]) continue;
            const auto i = sample.index(m, n);
            a.push_back(sample.alpha[i]);
            w.push_back(sample.w_post[i]);
        }
        if (a.empty()) throw SolverError("evolution: every evaluation path failed to rebalance");
        t.rows.push_back({n, report_quantiles(a), report_quantiles(w)});
    }
    return t;
}

EvolutionTable distribution_evolution(const Policy& p, const ExogenousModel& model, const SolveConfig& cfg,
                                      std::uint64_t eval_seed, std::size_t eval_paths) {
    if (eval_seed == cfg.seed) throw std::invalid_argument("evaluate: evaluation seed must differ from the training seed");
    const auto paths = simulate(model, eval_paths ? eval_paths : cfg.n_paths, cfg.n_steps, eval_seed);
    return distribution_evolution(run_policy(paths, p, cfg).sample);
}

std::string to_string(SweepAxis a) {
    switch (a) {
        case SweepAxis::VolDay: return "vol_day";
        case SweepAxis::SigmaDay: return "sigma_day";
        case SweepAxis::W0: return "w0";
        case SweepAxis::Horizon: return "horizon";
        case SweepAxis::Gamma: return "gamma";
    }
    return "?";
}

SweepAxis sweep_axis_from_string(const std::string& s) {
    for (auto a : {SweepAxis::VolDay, SweepAxis::SigmaDay, SweepAxis::W0, SweepAxis::Horizon, SweepAxis::Gamma})
        if (to_string(a) == s) return a;
    throw std::invalid_argument("unknown sweep axis '" + s + "' (expected vol_day, sigma_day, w0, horizon or gamma)");
}

SolveConfig with_axis(const SolveConfig& cfg, SweepAxis axis, double value) {
    SolveConfig out = cfg;
    switch (axis) {
        case SweepAxis::VolDay:
        case SweepAxis::SigmaDay: {
            const LiquidityParams* lp = cfg.costs.liquidity();
            if (!lp) throw std::invalid_argument("sweep: " + to_string(axis) + " needs a power-law cost model");
            LiquidityParams p = *lp;
            (axis == SweepAxis::VolDay ? p.vol_day : p.sigma_day) = value;
            out.costs = CostModel::power_law(p, cfg.costs.tc_rate());
            break;
        }
        case SweepAxis::W0: out.w0 = value; break;
        case SweepAxis::Horizon: {
            if (!(value >= 1.0) || value != std::floor(value))
                throw std::invalid_argument("sweep: horizon values must be positive integers");
            out.n_steps = static_cast<std::size_t>(value);
            break;
        }
        case SweepAxis::Gamma: out.utility = Utility(cfg.utility.kind(), value); break;
    }
    out.validate();
    return out;
}

SweepResult sweep(SweepAxis axis, const std::vector<double>& values, const ExogenousModel& model,
                  const SolveConfig& cfg, std::uint64_t eval_seed, std::size_t eval_paths) {
    if (values.empty()) throw std::invalid_argument("sweep: no axis values");
    if (eval_seed == cfg.seed) throw std::invalid_argument("evaluate: evaluation seed must differ from the training seed");
    SweepResult r;
    r.axis = axis;
    for (double v : values) {
        const SolveConfig c = with_axis(cfg, axis, v);
        const auto train = simulate(model, c.n_paths, c.n_steps, c.seed);
        const auto test = simulate(model, eval_paths ? eval_paths : c.n_paths, c.n_steps, eval_seed);
        const Policy p = solve_with_iteration(train, c).policy;
        const auto rep = evaluate_on(p, test, c);
        r.points.push_back({v, rep.cer, rep.initial_action, rep.excluded_paths});
    }
    return r;
}

void write_sweep_csv(std::ostream& os, const SweepResult& r) {
    os << "axis,value,cer_bps,alpha0\n";
    for (const auto& p : r.points)
        os << to_string(r.axis) << ',' << fmt(p.value) << ',' << fmt(to_bps(p.cer)) << ',' << fmt(p.initial_action) << '\n';
}

void write_evolution_csv(std::ostream& os, const EvolutionTable& t) {
    static constexpr const char* names[] = {"q05", "q25", "q50", "q75", "q95"};
    os << "step,stat,alpha,wealth\n";
    for (const auto& row : t.rows)
        for (std::size_t i = 0; i < 5; ++i)
            os << row.step << ',' << names[i] << ',' << fmt(row.alpha[i]) << ',' << fmt(row.wealth[i]) << '\n';
}

void write_comparison_csv(std::ostream& os, const BlindComparison& c) {
    os << "arm,cer_bps,alpha0\n";
    os << "aware," << fmt(c.aware.cer_bps()) << ',' << fmt(c.aware.initial_action) << '\n';
    os << "blind," << fmt(c.blind.cer_bps()) << ',' << fmt(c.blind.initial_action) << '\n';
}

}  // namespace liqlsmc
