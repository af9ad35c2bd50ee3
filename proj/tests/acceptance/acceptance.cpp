#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "gen.hpp"
#include "liqlsmc/evaluate.hpp"
#include "liqlsmc/lsmc.hpp"
#include "liqlsmc/rebalance.hpp"
#include "liqlsmc/regression.hpp"
#include "oracles.hpp"

using namespace liqlsmc;

namespace {

int g_failures = 0;

void report(const std::string& id, bool pass, const std::string& detail) {
    std::printf("%s %s: %s\n", pass ? "PASS" : "FAIL", id.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

template <class... A>
std::string fmt(const char* f, A... a) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, a...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// One-sided sign test: P(X >= k) for X ~ Binomial(n, 1/2).
double sign_test_p(int k, int n) {
    double p = 0.0, c = 1.0;
    for (int i = 0; i <= n; ++i) {
        if (i >= k) p += c;
        c = c * (n - i) / (i + 1);
    }
    return p / std::pow(2.0, n);
}

bool four_sig_digits_equal(double a, double b) {
    auto round4 = [](double x) {
        const double e = std::floor(std::log10(std::abs(x))) - 3;
        return std::round(x / std::pow(10.0, e)) * std::pow(10.0, e);
    };
    return std::abs(round4(a) - round4(b)) <= 1e-12 * std::abs(b);
}

const IidLognormalModel kStock{0.03, 0.15, 1.0};

SolveConfig table2(double gamma, std::size_t steps, std::size_t paths) {
    SolveConfig c;
    c.utility = Utility::cara(gamma);
    c.rf = 0.012;
    c.w0 = 1.0;
    c.s0 = 1.0;
    c.n_paths = paths;
    c.n_steps = steps;
    c.iterations = 1;
    c.grid = ControlGrid::uniform(0.01);
    c.costs = CostModel::zero();
    return c;
}

void ac1() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<std::tuple<double, std::size_t, double>> cells = {
        {5, 5, 1.58}, {15, 5, 1.39}, {5, 15, 1.53}, {15, 15, 1.37}};
    double cer55 = 0.0;
    for (auto [gamma, steps, target] : cells) {
        const auto tc = std::chrono::steady_clock::now();
        const auto cfg = table2(gamma, steps, 100000);
        const auto train = simulate(kStock, cfg.n_paths, steps, cfg.seed);
        const auto eval = simulate(kStock, 100000, steps, 2);
        const auto res = solve_with_iteration(train, cfg, &eval);
        const double pp = 100.0 * res.diagnostics.back().oos_cer;
        if (gamma == 5 && steps == 5) cer55 = pp;
        report(fmt("AC1 Table 2 cell gamma=%g N=%zu", gamma, steps), std::abs(pp - target) <= 0.10,
               fmt("CER %.4f pp, target %.2f +- 0.10, alpha0 %.2f, %.0f s", pp, target, res.policy.initial_action,
                   seconds_since(tc)));
    }
    const double elapsed = seconds_since(t0);
    report("AC1 runtime of the four cells", elapsed <= 1800.0, fmt("%.0f s, limit 1800 s", elapsed));

    const auto u = Utility::cara(5);
    const auto dp = oracle::wealth_grid_dp(u, {0.03, 0.15, 0.012}, oracle::uniform_levels(0.01), 5);
    const double oracle_pp = 100.0 * oracle::cer_from_value(u, dp.value, 5);
    report("AC1 gamma=5 N=5 against the quadrature DP", std::abs(cer55 - oracle_pp) <= 0.05,
           fmt("LSMC %.4f pp, DP %.4f pp (alpha0 %.2f), tolerance 0.05", cer55, oracle_pp, dp.a0));
}

void ac2() {
    const int seeds = 10;
    int klp_below_i0 = 0, i0_below_i1 = 0, i2_below_i1 = 0;
    for (int s = 1; s <= seeds; ++s) {
        auto cfg = table2(15, 15, 1000);
        cfg.seed = s;
        cfg.iterations = 2;
        const auto train = simulate(kStock, 1000, 15, s);
        const auto eval = simulate(kStock, 100000, 15, 1000 + s);
        const auto res = solve_with_iteration(train, cfg, &eval);
        auto kcfg = cfg;
        kcfg.algorithm = Algorithm::Klp;
        kcfg.iterations = 0;
        const double klp = solve_with_iteration(train, kcfg, &eval).diagnostics[0].oos_cer;
        const double i0 = res.diagnostics[0].oos_cer, i1 = res.diagnostics[1].oos_cer, i2 = res.diagnostics[2].oos_cer;
        klp_below_i0 += klp < i0;
        i0_below_i1 += i0 < i1;
        i2_below_i1 += i2 < i1;
        std::printf("  seed %2d: KLP %.4f  I0 %.4f  I1 %.4f  I2 %.4f pp\n", s, 100 * klp, 100 * i0, 100 * i1, 100 * i2);
    }
    const double p1 = sign_test_p(klp_below_i0, seeds), p2 = sign_test_p(i0_below_i1, seeds);
    const double p3 = sign_test_p(i2_below_i1, seeds);
    report("AC2 CER(KLP) < CER(I=0)", p1 <= 0.05, fmt("%d/%d seeds, sign-test p = %.4f", klp_below_i0, seeds, p1));
    report("AC2 CER(I=0) < CER(I=1)", p2 <= 0.05, fmt("%d/%d seeds, sign-test p = %.4f", i0_below_i1, seeds, p2));
    report("AC2 CER(I=1) <= CER(I=2)", p3 > 0.05,
           fmt("I=2 below I=1 on %d/%d seeds, sign-test p = %.4f (fails only if significant)", i2_below_i1, seeds, p3));
}

void ac3() {
    Gen g(2024);
    std::size_t worst = 0, over = 0;
    double worst_dev = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        LiquidityParams p;
        p.sigma_day = g.uniform(2.0, 13.0);
        p.vol_day = g.uniform(10e6, 120e6);
        const double w = g.uniform(1e8, 1e9), a = g.grid_level(0.01);
        const auto r = solve_rebalance(PortfolioState::all_cash(w, 200.0), asset_vector(a), CostModel::power_law(p),
                                       1e-4, 50);
        worst = std::max(worst, r.iterations);
        over += r.iterations > 3;
        if (a > 0) {
            const auto o = oracle::bisect_rebalance({p.sigma_day, p.vol_day}, 0.0, 200.0, w, a);
            worst_dev = std::max(worst_dev, std::abs(r.state.q[0] - o.q) / o.q);
        }
    }
    report("AC3 at most 3 iterations at tol 1e-4 over 1e4 configurations", worst <= 3,
           fmt("max %zu iterations, %zu/%d configurations above 3", worst, over, n));
    std::printf("  info: largest relative gap to the bisection root over the sample %.2e\n", worst_dev);

    const auto r = solve_rebalance(PortfolioState::all_cash(1e8, 200.0), asset_vector(0.5),
                                   CostModel::power_law(LiquidityParams{}), 1e-4, 50);
    const auto o = oracle::bisect_rebalance({}, 0.0, 200.0, 1e8, 0.5);
    auto sig6 = [](double x, double ref) { return std::abs(x - ref) <= 5e-6 * std::abs(ref); };
    const bool ok = sig6(r.state.q[0], o.q) && sig6(r.state.s[0], o.s) && sig6(r.state.w, o.w);
    report("AC3 fixed point agrees with bisection to 6 significant digits", ok,
           fmt("q %.8g vs %.8g, S %.10g vs %.10g, W %.10g vs %.10g, %zu iterations", r.state.q[0], o.q, r.state.s[0],
               o.s, r.state.w, o.w, r.iterations));
}

void ac4() {
    const auto m = CostModel::power_law(LiquidityParams{});
    const double mi = m.market_impact(1e6), lc = m.liquidity_cost_per_share(1e6);
    report("AC4 MI spot value", four_sig_digits_equal(mi, 0.011083) && std::abs(mi / oracle::kMiSpot - 1) < 1e-12,
           fmt("MI %.10f $/share, stated 0.011083, 40-digit reference %.10f", mi, oracle::kMiSpot));
    report("AC4 LC spot value", four_sig_digits_equal(lc, 0.2797) && std::abs(lc / oracle::kLcSpot - 1) < 1e-12,
           fmt("LC %.10f $/share, stated 0.2797, 40-digit reference %.10f", lc, oracle::kLcSpot));
}

void ac5() {
    const auto gh = oracle::gauss_hermite(64);
    const oracle::IidMarket mkt{0.03, 0.15, 0.012};
    for (const auto& u : {Utility::cara(5), Utility::crra(5)}) {
        auto cfg = table2(5, 2, 100000);
        cfg.utility = u;
        cfg.grid = ControlGrid::uniform(0.25);
        const auto train = simulate(kStock, cfg.n_paths, 2, cfg.seed);
        const auto eval = simulate(kStock, 1000000, 2, 2);
        const auto res = solve_with_iteration(train, cfg, &eval);
        double a0 = 0.0;
        const double v = oracle::exhaustive_tree(u, mkt, cfg.grid.levels, gh, 2, 1.0, &a0);
        const double cer_oracle = oracle::cer_from_value(u, v, 2);
        const double cer_lsmc = res.diagnostics.back().oos_cer;
        const double da = std::abs(res.policy.initial_action - a0), dbps = to_bps(std::abs(cer_lsmc - cer_oracle));
        report(fmt("AC5 N=2 J=5 %s oracle", u.tag().c_str()), da <= 0.25 + 1e-12 && dbps <= 2.0,
               fmt("alpha0 %.2f vs %.2f, CER %.2f vs %.2f bps (gap %.2f, limit 2)", res.policy.initial_action, a0,
                   to_bps(cer_lsmc), to_bps(cer_oracle), dbps));
    }
}

struct DeskRun {
    Policy policy;
    EvaluationReport report;
    ForwardSample sample;
};

class Desk {
public:
    Desk() : model_(synthetic_standin_var1()), train_(simulate(model_, 10000, 12, 1)), eval_(simulate(model_, 10000, 12, 2)) {}

    static SolveConfig config(double sigma, double vol, double w0, double gamma) {
        SolveConfig c;
        c.utility = Utility::crra(gamma);
        c.w0 = w0;
        c.n_paths = 10000;
        c.n_steps = 12;
        c.iterations = 1;
        c.grid = ControlGrid::uniform(0.05);
        LiquidityParams p;
        p.sigma_day = sigma;
        p.vol_day = vol;
        c.costs = CostModel::power_law(p);
        return c;
    }

    const DeskRun& aware(double sigma, double vol, double w0, double gamma) {
        const auto key = std::make_tuple(sigma, vol, w0, gamma);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        const auto tc = std::chrono::steady_clock::now();
        const auto cfg = config(sigma, vol, w0, gamma);
        DeskRun r;
        r.policy = solve_with_iteration(train_, cfg).policy;
        const auto run = run_policy(eval_, r.policy, cfg);
        r.report = evaluate_on(r.policy, eval_, cfg);
        r.sample = run.sample;
        std::printf("  solved sigma=%g vol=%gm w0=%g gamma=%g: CER %.2f bps, alpha0 %.2f (%.0f s)\n", sigma, vol / 1e6, w0,
                    gamma, r.report.cer_bps(), r.policy.initial_action, seconds_since(tc));
        std::fflush(stdout);
        return cache_.emplace(key, std::move(r)).first->second;
    }

    EvaluationReport blind(double sigma, double vol, double w0, double gamma) {
        const auto cfg = config(sigma, vol, w0, gamma);
        auto blind_cfg = cfg;
        blind_cfg.costs = cfg.costs.without_liquidity_effects();
        const auto p = solve_with_iteration(train_, blind_cfg).policy;
        return evaluate_on(p, eval_, cfg, &blind_cfg.costs);
    }

private:
    ExogenousModel model_;
    PathSet train_, eval_;
    std::map<std::tuple<double, double, double, double>, DeskRun> cache_;
};

double iqr(const ForwardSample& s, std::size_t step) {
    std::vector<double> a;
    for (std::size_t m = 0; m < s.n_paths; ++m)
        if (!s.excluded[m]) a.push_back(s.alpha[s.index(m, step)]);
    return quantile(a, 0.75) - quantile(a, 0.25);
}

void ac6() {
    const auto t0 = std::chrono::steady_clock::now();
    const double slack = 2.0;
    Desk desk;
    // Base point of the sweeps: sigma 7.5, Vol 40m, w0 1e9, gamma 5.
    const double sb = 7.5, vb = 40e6, wb = 1e9, gb = 5;

    auto check_sweep = [&](const char* name, const std::vector<double>& values, auto&& cer_at, bool increasing) {
        std::vector<double> cers;
        std::string detail;
        for (double v : values) {
            cers.push_back(cer_at(v));
            detail += fmt("%s%g:%.2f", detail.empty() ? "" : ", ", v, cers.back());
        }
        bool ok = true;
        for (std::size_t i = 1; i < cers.size(); ++i)
            ok = ok && (increasing ? cers[i] >= cers[i - 1] - slack : cers[i] <= cers[i - 1] + slack);
        report(fmt("AC6a CER %s in %s", increasing ? "non-decreasing" : "non-increasing", name), ok, detail + " bps");
    };
    check_sweep("vol_day", {12e6, 40e6, 120e6}, [&](double v) { return desk.aware(sb, v, wb, gb).report.cer_bps(); }, true);
    check_sweep("sigma_day", {2.5, 7.5, 12.5}, [&](double v) { return desk.aware(v, vb, wb, gb).report.cer_bps(); }, false);
    check_sweep("w0", {1e8, 5e8, 1e9}, [&](double v) { return desk.aware(sb, vb, v, gb).report.cer_bps(); }, false);
    check_sweep("gamma", {3, 5, 10}, [&](double v) { return desk.aware(sb, vb, wb, v).report.cer_bps(); }, false);

    const std::vector<std::pair<double, double>> levels = {{2.5, 120e6}, {7.5, 40e6}, {12.5, 12e6}};
    std::vector<double> gaps;
    bool positive = true;
    std::string detail;
    for (auto [s, v] : levels) {
        const double aware = desk.aware(s, v, wb, gb).report.cer_bps();
        const double blind = desk.blind(s, v, wb, gb).cer_bps();
        positive = positive && aware > 0.0;
        gaps.push_back(aware - blind);
        detail += fmt("%s(%g, %gm): aware %.2f blind %.2f", detail.empty() ? "" : "; ", s, v / 1e6, aware, blind);
    }
    report("AC6b liquidity-aware CER > 0", positive, detail + " bps");
    bool gap_ok = gaps[0] > -slack;
    for (std::size_t i = 1; i < gaps.size(); ++i) gap_ok = gap_ok && gaps[i] > -slack && gaps[i] >= gaps[i - 1] - slack;
    report("AC6b aware-blind gap positive and increasing as liquidity worsens", gap_ok,
           fmt("gaps %.2f, %.2f, %.2f bps", gaps[0], gaps[1], gaps[2]));

    const auto& liquid = desk.aware(2.5, 120e6, wb, gb).sample;
    const auto& illiquid = desk.aware(12.5, 12e6, wb, gb).sample;
    bool tighter = true;
    std::string iqrs;
    for (std::size_t n = 0; n <= 12; ++n) {
        const double a = iqr(illiquid, n), b = iqr(liquid, n);
        // t_0 is one common action and t_N is forced liquidation: both spreads are zero there.
        tighter = tighter && ((n == 0 || n == 12) ? (a == 0.0 && b == 0.0) : a < b);
        iqrs += fmt("%s%.2f/%.2f", iqrs.empty() ? "" : " ", a, b);
    }
    report("AC6c allocation IQR tighter under (12.5, 12m) than (2.5, 120m)", tighter, "illiquid/liquid per step: " + iqrs);

    const double elapsed = seconds_since(t0);
    report("AC6 runtime", elapsed <= 3600.0, fmt("%.0f s, limit 3600 s", elapsed));
}

void ac7() {
    {
        Gen g(71);
        bool ok = true;
        for (int i = 0; i < 10000 && ok; ++i) {
            LiquidityParams p;
            p.sigma_day = g.uniform(0.0, 13.0);
            p.vol_day = g.log_uniform(1e6, 1e9);
            p.theta = g.log_uniform(1e7, 1e10);
            p.delta = g.uniform(1e-3, 1.0);
            const auto m = CostModel::power_law(p, g.uniform(0.0, 0.01));
            const double dq = g.log_uniform(1e-3, 1e9);
            ok = m.market_impact(-dq) == -m.market_impact(dq) &&
                 m.liquidity_cost_per_share(-dq) == m.liquidity_cost_per_share(dq) && m.liquidity_cost_per_share(dq) >= 0;
        }
        report("AC7 odd impact and even nonnegative liquidity cost", ok, "1e4 random (params, dq), exact equality");
    }
    {
        Gen g(72);
        bool ok = true;
        for (int i = 0; i < 5000 && ok; ++i) {
            LiquidityParams p;
            p.sigma_day = g.uniform(2.0, 13.0);
            p.vol_day = g.uniform(10e6, 120e6);
            const auto m = CostModel::power_law(p, g.coin() ? 0.0 : 0.001);
            const double s = g.uniform(50.0, 400.0), w = g.uniform(1e8, 1e9), a0 = g.grid_level(0.01);
            const auto pre = PortfolioState::from_holdings(asset_vector(a0 * w / s), (1 - a0) * w, asset_vector(s));
            const double a = g.grid_level(0.01);
            const auto r = solve_rebalance(pre, asset_vector(a), m);
            const auto again = solve_rebalance(r.state, asset_vector(a), m);
            const auto same = solve_rebalance(pre, pre.alpha, m);
            ok = r.state.self_consistent(1e-8) && (a == 0 || std::abs(a * r.state.w - r.state.q[0] * r.state.s[0]) <= 1e-4 * a * r.state.w) &&
                 std::abs(again.dq[0]) <= 1e-4 * std::max(1.0, r.state.q[0]) && same.dq[0] == 0.0;
        }
        report("AC7 rebalance self-consistency and idempotence", ok, "5e3 random states and targets");
    }
    {
        Gen g(73);
        bool ok = true;
        for (int t = 0; t < 200 && ok; ++t) {
            const int m = 300, k = 3 + g.integer(0, 12);
            Eigen::MatrixXd x(m, k);
            Eigen::VectorXd y(m);
            for (int i = 0; i < m; ++i) {
                x(i, 0) = 1.0;
                for (int j = 1; j < k; ++j) x(i, j) = g.normal() * std::pow(10.0, g.integer(-2, 2));
                y[i] = std::sin(x(i, 1)) + g.normal();
            }
            const auto c = fit(x, y);
            const Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(c.beta.data(), k);
            const Eigen::VectorXd r = x * b - y;
            for (int j = 0; j < k; ++j) ok = ok && std::abs(x.col(j).dot(r)) <= 1e-6 * x.col(j).norm() * y.norm();
            ok = ok && r.squaredNorm() <= y.squaredNorm();
        }
        report("AC7 regression stationarity", ok, "200 random designs, residual orthogonal to every column");
    }
    {
        auto cfg = Desk::config(12.5, 12e6, 1e9, 5);
        cfg.n_paths = 2000;
        cfg.n_steps = 6;
        cfg.grid = ControlGrid::uniform(0.1);
        const auto ps = simulate(synthetic_standin_var1(), cfg.n_paths, cfg.n_steps, 5);
        bool same = true, invariant = true, on_grid = true;
        for (auto alg : {Algorithm::PerLevel, Algorithm::Klp}) {
            cfg.algorithm = alg;
            std::vector<Policy> ps_by_threads;
            for (std::size_t th : {1, 2, 5}) {
                cfg.threads = th;
                ps_by_threads.push_back(solve_with_iteration(ps, cfg).policy);
            }
            same = same && ps_by_threads[0] == ps_by_threads[1] && ps_by_threads[0] == ps_by_threads[2];
            const auto& p = ps_by_threads[0];
            Gen g(74);
            for (int i = 0; i < 300; ++i) {
                const std::size_t n = 1 + g.integer(0, 4), m = g.integer(0, 1999);
                auto scaled = p;
                scaled.coefficients[n] *= g.log_uniform(1e-3, 1e3);
                const double a = g.grid_level(0.1), w = cfg.w0 * g.uniform(0.8, 1.3);
                const auto st = PortfolioState::from_holdings(asset_vector(a * w / 200), (1 - a) * w, asset_vector(200.0));
                invariant = invariant && policy_action(p, n, st, ps.predictors(m, n), cfg.costs) ==
                                             policy_action(scaled, n, st, ps.predictors(m, n), cfg.costs);
            }
            const auto run = run_policy(simulate(synthetic_standin_var1(), 2000, 6, 6), p, cfg);
            for (std::size_t m = 0; m < 2000; ++m) {
                for (std::size_t n = 0; n <= 6; ++n) {
                    try {
                        cfg.grid.index_of(run.sample.alpha[run.sample.index(m, n)]);
                    } catch (const std::out_of_range&) {
                        on_grid = false;
                    }
                }
                on_grid = on_grid && run.sample.alpha[run.sample.index(m, 6)] == 0.0 &&
                          run.sample.q_post[run.sample.index(m, 6)] == 0.0;
            }
        }
        report("AC7 determinism under thread counts 1, 2, 5", same, "per-level and control-regression policies bit-equal");
        report("AC7 argmax invariance under positive rescaling", invariant, "300 random states per algorithm");
        report("AC7 grid membership and terminal liquidation", on_grid, "every emitted action on the grid, alpha_N = 0");
    }
    {
        auto cfg = Desk::config(2.5, 120e6, 1e8, 5);
        cfg.costs = CostModel::zero();
        cfg.n_paths = 500;
        cfg.n_steps = 4;
        cfg.grid = ControlGrid::uniform(0.25);
        const auto ps = simulate(synthetic_standin_var1(), 500, 4, 3);
        Policy p;
        p.grid = cfg.grid;
        p.basis = make_basis_spec(ps, cfg);
        p.n_steps = 4;
        p.coefficients.resize(4);
        for (std::size_t n = 1; n < 4; ++n) {
            p.coefficients[n] = Policy::CoefMatrix::Zero(5, p.basis.size());
            p.coefficients[n](0, 0) = 1.0;
        }
        p.initial_cv.assign(5, 0.0);
        bool ok = true;
        for (const auto& u : {Utility::crra(5), Utility::crra(1), Utility::cara(5)}) {
            cfg.utility = u;
            ok = ok && std::abs(evaluate_on(p, ps, cfg).cer - cfg.rf) <= 1e-12;
        }
        Gen g(75);
        std::vector<double> w(1000);
        for (auto& x : w) x = g.log_uniform(0.5, 2.0);
        auto scaled = w;
        for (auto& x : scaled) x *= 3.7e8;
        const bool norm = std::abs(cer(Utility::crra(5), w, 1.0, 12) - cer(Utility::crra(5), scaled, 3.7e8, 12)) <= 1e-10;
        report("AC7 pure-cash CER equals rf and CRRA CER is scale-free", ok && norm, "zero costs, three utilities");
    }
    {
        bool same = true;
        const auto m = synthetic_standin_var1();
        same = simulate(m, 1000, 12, 9) == simulate(m, 1000, 12, 9);
        report("AC7 path simulation determinism", same, "same seed, bit-identical PathSet");
    }
}

}  // namespace

int main(int argc, char** argv) {
    const std::map<std::string, std::function<void()>> criteria = {
        {"ac1", ac1}, {"ac2", ac2}, {"ac3", ac3}, {"ac4", ac4}, {"ac5", ac5}, {"ac6", ac6}, {"ac7", ac7}};
    std::vector<std::string> chosen;
    for (int i = 1; i < argc; ++i) chosen.emplace_back(argv[i]);
    if (chosen.empty())
        for (const auto& [k, v] : criteria) chosen.push_back(k);
    for (const auto& c : chosen) {
        const auto it = criteria.find(c);
        if (it == criteria.end()) {
            std::fprintf(stderr, "unknown criterion '%s'\n", c.c_str());
            return 2;
        }
        try {
            it->second();
        } catch (const std::exception& e) {
            report(c, false, std::string("exception: ") + e.what());
        }
    }
    return g_failures == 0 ? 0 : 1;
}
